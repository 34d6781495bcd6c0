use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adapt::{EmConfig, TrustState, S_MIN};
use crate::error::{Error, Result};
use crate::filters::{FilterConfig, FilterVariant};
use crate::gmu::Linearization;
use crate::kde::build_localization;
use crate::metrics::MetricDensity;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Banana,
    Lorenz96,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Banana => "banana",
            Experiment::Lorenz96 => "lorenz96",
        }
    }
}

/// The five analysis filters, their adaptive variants, and the free forecast.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    None,
    Enkf,
    Mfenkf,
    Engmf,
    Mfengmf,
    Aengmf,
    Amfengmf,
}

impl FilterKind {
    pub const ALL: [FilterKind; 7] = [
        FilterKind::None,
        FilterKind::Enkf,
        FilterKind::Mfenkf,
        FilterKind::Engmf,
        FilterKind::Mfengmf,
        FilterKind::Aengmf,
        FilterKind::Amfengmf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::None => "none",
            FilterKind::Enkf => "enkf",
            FilterKind::Mfenkf => "mfenkf",
            FilterKind::Engmf => "engmf",
            FilterKind::Mfengmf => "mfengmf",
            FilterKind::Aengmf => "aengmf",
            FilterKind::Amfengmf => "amfengmf",
        }
    }

    /// Analysis step used underneath; `None` for the free forecast.
    pub fn variant(self) -> Option<FilterVariant> {
        match self {
            FilterKind::None => None,
            FilterKind::Enkf => Some(FilterVariant::Enkf),
            FilterKind::Mfenkf => Some(FilterVariant::Mfenkf),
            FilterKind::Engmf | FilterKind::Aengmf => Some(FilterVariant::Engmf),
            FilterKind::Mfengmf | FilterKind::Amfengmf => Some(FilterVariant::Mfengmf),
        }
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, FilterKind::Aengmf | FilterKind::Amfengmf)
    }

    pub fn is_multifidelity(self) -> bool {
        matches!(self, FilterKind::Mfenkf | FilterKind::Mfengmf | FilterKind::Amfengmf)
    }

    pub fn is_kalman(self) -> bool {
        matches!(self, FilterKind::Enkf | FilterKind::Mfenkf)
    }

    pub fn is_mixture(self) -> bool {
        self.variant().is_some_and(|v| v.is_mixture())
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        FilterKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown filter {s:?}"))
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "banana" => Ok(Experiment::Banana),
            "lorenz96" | "l96" => Ok(Experiment::Lorenz96),
            _ => Err(format!("unknown experiment {s:?}")),
        }
    }
}

/// Everything a run needs. Field names double as command-line flags in
/// kebab-case and as keys of the JSON config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub filter: FilterKind,
    pub n_x: usize,
    pub n_u: usize,
    pub r_dim: usize,
    /// Fixed `s_X`, or the starting value for adaptive filters.
    pub s_x: f64,
    pub s_u: f64,
    pub alpha_x: f64,
    pub alpha_u: f64,
    pub replicates: usize,
    pub steps: usize,
    pub spinup: usize,
    pub seed: u64,
    pub rom: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub defensive: f64,
    pub localization_radius: Option<f64>,
    pub linearization: Linearization,
    pub em_ascent_steps: usize,
    pub em_step_size: f64,
    pub em_fd_step: f64,
    pub em_samples: Option<usize>,
    pub em_summed: bool,
    pub s_min: f64,
    pub metric_density: MetricDensity,
    pub grid_nodes: usize,
    /// Banana only: grid densities and ensembles of replicate 0 as JSON.
    pub density_dump: Option<PathBuf>,
    /// A cycle whose RMSE exceeds this multiple of `no_filter_level` stops
    /// the replicate.
    pub divergence_factor: f64,
    pub no_filter_level: f64,
    pub n_x_grid: Vec<usize>,
    pub s_x_grid: Vec<f64>,
    pub s_u_grid: Vec<f64>,
    pub alpha_x_grid: Vec<f64>,
    pub alpha_u_grid: Vec<f64>,
    pub rom_samples: usize,
    pub rom_epochs: usize,
    pub rom_hidden: usize,
    pub rom_lambda: f64,
    /// Full-size replicate and step counts.
    pub paper_scale: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::banana()
    }
}

impl ExperimentConfig {
    pub fn banana() -> Self {
        let em = EmConfig::banana();
        Self {
            experiment: Experiment::Banana,
            filter: FilterKind::Engmf,
            n_x: 25,
            n_u: 50,
            r_dim: 1,
            s_x: 1.0,
            s_u: 1.0,
            alpha_x: 1.0,
            alpha_u: 1.0,
            replicates: 1000,
            steps: 1,
            spinup: 0,
            seed: 0,
            rom: None,
            output: None,
            defensive: 1e-4,
            localization_radius: None,
            linearization: Linearization::default(),
            em_ascent_steps: em.ascent_steps,
            em_step_size: em.step_size,
            em_fd_step: em.fd_step,
            em_samples: em.samples,
            em_summed: em.summed,
            s_min: S_MIN,
            metric_density: MetricDensity::default(),
            grid_nodes: 601,
            density_dump: None,
            divergence_factor: 10.0,
            no_filter_level: 3.6269,
            n_x_grid: Vec::new(),
            s_x_grid: Vec::new(),
            s_u_grid: Vec::new(),
            alpha_x_grid: Vec::new(),
            alpha_u_grid: Vec::new(),
            rom_samples: 2000,
            rom_epochs: 5000,
            rom_hidden: 100,
            rom_lambda: 10.0,
            paper_scale: false,
        }
    }

    pub fn lorenz96() -> Self {
        let em = EmConfig::lorenz96();
        Self {
            experiment: Experiment::Lorenz96,
            n_u: 100,
            r_dim: 28,
            replicates: 5,
            steps: 600,
            spinup: 100,
            localization_radius: Some(4.0),
            em_ascent_steps: em.ascent_steps,
            em_step_size: em.step_size,
            em_fd_step: em.fd_step,
            em_samples: em.samples,
            em_summed: em.summed,
            ..Self::banana()
        }
    }

    pub fn for_experiment(experiment: Experiment) -> Self {
        match experiment {
            Experiment::Banana => Self::banana(),
            Experiment::Lorenz96 => Self::lorenz96(),
        }
    }

    /// Overlay the keys of a JSON object on `self`.
    pub fn merge_json(&self, text: &str) -> Result<Self> {
        let overlay: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config is not JSON: {e}")))?;
        let serde_json::Value::Object(overlay) = overlay else {
            return Err(Error::Config("config must be a JSON object".into()));
        };
        let mut base = serde_json::to_value(self).map_err(|e| Error::Config(e.to_string()))?;
        let map = base.as_object_mut().expect("config serializes to an object");
        for (k, v) in overlay {
            map.insert(k, v);
        }
        serde_json::from_value(base).map_err(|e| Error::Config(e.to_string()))
    }

    /// Replicate and step counts of the original study.
    pub fn apply_paper_scale(&mut self) {
        self.paper_scale = true;
        match self.experiment {
            Experiment::Banana => self.replicates = 10_008,
            Experiment::Lorenz96 => {
                self.replicates = 20;
                self.steps = 1100;
                self.spinup = 100;
            }
        }
    }

    pub fn em(&self) -> EmConfig {
        EmConfig {
            ascent_steps: self.em_ascent_steps,
            step_size: self.em_step_size,
            fd_step: self.em_fd_step,
            samples: self.em_samples,
            s_min: self.s_min,
            summed: self.em_summed,
        }
    }

    pub fn initial_trust(&self) -> TrustState {
        if self.filter.is_multifidelity() {
            TrustState::multi(self.s_x, self.s_u)
        } else {
            TrustState::single(self.s_x)
        }
    }

    /// Filter settings for the analysis step; `dim` sizes the localization.
    pub fn filter_config(&self, dim: usize) -> Result<Option<FilterConfig>> {
        let Some(variant) = self.filter.variant() else {
            return Ok(None);
        };
        let mut f = FilterConfig::new(variant)
            .with_scaling(self.s_x, self.s_u)
            .with_inflation(self.alpha_x, self.alpha_u);
        f.defensive = self.defensive;
        f.linearization = self.linearization;
        if let Some(r) = self.localization_radius {
            f.localization = Some(build_localization(dim, r)?);
        }
        f.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(Some(f))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.replicates == 0 {
            return fail("replicates must be at least 1".into());
        }
        if self.n_x < 2 || self.n_x_grid.iter().any(|&n| n < 2) {
            return fail("n_x must be at least 2".into());
        }
        if self.filter.is_multifidelity() && self.n_u < 2 {
            return fail("n_u must be at least 2 for multifidelity filters".into());
        }
        if self.experiment == Experiment::Lorenz96 {
            if self.spinup >= self.steps {
                return fail(format!("spinup {} must be below steps {}", self.spinup, self.steps));
            }
            if self.r_dim == 0 || self.r_dim >= 40 {
                return fail(format!("r_dim {} must lie in 1..40", self.r_dim));
            }
        }
        let positive = [
            ("s_x", self.s_x),
            ("s_u", self.s_u),
            ("divergence_factor", self.divergence_factor),
            ("no_filter_level", self.no_filter_level),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} = {v} must be positive"));
            }
        }
        if self.s_x_grid.iter().chain(&self.s_u_grid).any(|s| !(*s > 0.0 && s.is_finite())) {
            return fail("scaling grids must be positive".into());
        }
        if [self.alpha_x, self.alpha_u]
            .iter()
            .chain(&self.alpha_x_grid)
            .chain(&self.alpha_u_grid)
            .any(|a| !(*a >= 1.0 && a.is_finite()))
        {
            return fail("inflation factors must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.defensive) {
            return fail(format!("defensive = {} must lie in [0, 1]", self.defensive));
        }
        if self.localization_radius.is_some_and(|r| !(r > 0.0)) {
            return fail("localization_radius must be positive".into());
        }
        if self.grid_nodes < 2 {
            return fail("grid_nodes must be at least 2".into());
        }
        if self.rom_samples < 3 || self.rom_hidden == 0 {
            return fail("rom_samples must be at least 3 and rom_hidden positive".into());
        }
        self.em().validate()
    }
}
