//! Expectation-maximization of the bandwidth scaling factors: one factor for
//! the adaptive EnGMF, two for the adaptive MFEnGMF.

use std::hash::{DefaultHasher, Hash, Hasher};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::filters::{engmf_from_prior, engmf_prior, mfengmf_from_prior, mfengmf_prior, AnalysisResult, FilterConfig};
use crate::mixture::{gm_sample, GaussianMixture};
use crate::models::{CouplingMap, ObservationModel};
use crate::rng::RngStream;

pub const S_MIN: f64 = 0.05;

/// Bandwidth scaling factors carried from cycle to cycle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrustState {
    pub s_x: f64,
    /// Present for the multifidelity filter only.
    pub s_u: Option<f64>,
}

impl TrustState {
    pub fn single(s_x: f64) -> Self {
        Self { s_x, s_u: None }
    }

    pub fn multi(s_x: f64, s_u: f64) -> Self {
        Self { s_x, s_u: Some(s_u) }
    }

    /// `s_X = s_U = 1`, or just `s_X = 1`.
    pub fn initial(multifidelity: bool) -> Self {
        if multifidelity {
            Self::multi(1.0, 1.0)
        } else {
            Self::single(1.0)
        }
    }

    fn to_vec(self) -> Vec<f64> {
        std::iter::once(self.s_x).chain(self.s_u).collect()
    }

    fn from_slice(v: &[f64]) -> Self {
        Self {
            s_x: v[0],
            s_u: v.get(1).copied(),
        }
    }

    fn validate(self) -> Result<()> {
        if self.to_vec().iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Argument(format!("trust state {self:?} must be positive")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub ascent_steps: usize,
    pub step_size: f64,
    pub fd_step: f64,
    /// Size of the expectation sample set; `None` uses the `N_X` analysis
    /// members.
    pub samples: Option<usize>,
    pub s_min: f64,
    /// Ascend the sum over the expectation samples rather than their mean.
    pub summed: bool,
}

impl EmConfig {
    pub fn banana() -> Self {
        Self {
            ascent_steps: 25,
            step_size: 1.0 / 32.0,
            fd_step: 1e-6,
            samples: None,
            s_min: S_MIN,
            summed: true,
        }
    }

    pub fn lorenz96() -> Self {
        Self {
            ascent_steps: 1,
            step_size: 1.0 / 128.0,
            summed: false,
            ..Self::banana()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.ascent_steps > 0
            && self.step_size >= 0.0
            && self.fd_step > 0.0
            && self.s_min > 0.0
            && self.samples != Some(0)
            && self.step_size.is_finite()
            && self.fd_step.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid EM configuration {self:?}")))
        }
    }
}

impl Default for EmConfig {
    fn default() -> Self {
        Self::banana()
    }
}

/// Forecast ensembles from which the prior mixture is rebuilt for each
/// candidate trust state.
#[derive(Clone, Copy)]
pub enum PriorInputs<'a> {
    Single {
        ensemble: &'a Ensemble,
    },
    Multi {
        theory: &'a Ensemble,
        reduced: &'a Ensemble,
        coupling: &'a dyn CouplingMap,
    },
}

impl PriorInputs<'_> {

    fn is_multi(&self) -> bool {
        matches!(self, PriorInputs::Multi { .. })
    }

    /// `p(X⁻ | s_X)` or `p(Z⁻ | s_X, s_U)`.
    pub fn prior(&self, trust: TrustState, cfg: &FilterConfig) -> Result<GaussianMixture> {
        match (self, trust.s_u) {
            (PriorInputs::Single { ensemble }, None) => engmf_prior(ensemble, trust.s_x, cfg.localization.as_ref()),
            (PriorInputs::Multi { theory, reduced, coupling }, Some(s_u)) => mfengmf_prior(
                theory,
                reduced,
                *coupling,
                trust.s_x,
                s_u,
                cfg.localization.as_ref(),
                cfg.defensive,
                cfg.component_cap,
            ),
            _ => Err(Error::Argument("trust state does not match the prior inputs".into())),
        }
    }

    /// Analysis under a given prior mixture.
    fn analyze(
        &self,
        prior: &GaussianMixture,
        obs: &ObservationModel,
        y: &DVector<f64>,
        cfg: &FilterConfig,
        rng: &mut RngStream,
    ) -> Result<AnalysisResult> {
        match self {
            PriorInputs::Single { ensemble } => engmf_from_prior(prior, ensemble.len(), obs, y, cfg.defensive, rng),
            PriorInputs::Multi { theory, reduced, coupling } => mfengmf_from_prior(
                prior,
                theory.len(),
                reduced.len(),
                *coupling,
                obs,
                y,
                cfg.defensive,
                cfg.linearization,
                rng,
            ),
        }
    }
}

/// `J(s) = mean over samples of [log N(y; h(x), R) + log p_prior(x | s)]`
pub fn em_objective(
    trust: TrustState,
    samples: &Ensemble,
    inputs: &PriorInputs,
    obs: &ObservationModel,
    y: &DVector<f64>,
    cfg: &FilterConfig,
) -> Result<f64> {
    let prior = inputs.prior(trust, cfg)?;
    let ev = prior.evaluator()?;
    let mut scratch = Vec::new();
    let mut total = 0.0;
    for x in samples.iter() {
        let v = obs.log_likelihood(&x, y) + ev.log_pdf_with(x.as_slice(), &mut scratch);
        if !v.is_finite() {
            return Err(Error::Objective(format!("log density {v} at trust {trust:?}")));
        }
        total += v;
    }
    Ok(total / samples.len() as f64)
}

/// One gradient-ascent move, floored at `s_min`.
pub fn ascend(trust: TrustState, gradient: &[f64], step: f64, s_min: f64) -> TrustState {
    let s: Vec<f64> = trust
        .to_vec()
        .iter()
        .zip(gradient)
        .map(|(s, g)| (s + step * g).max(s_min))
        .collect();
    TrustState::from_slice(&s)
}

/// Bit-level hash of an ensemble.
pub fn ensemble_hash(e: &Ensemble) -> u64 {
    let mut h = DefaultHasher::new();
    for v in e.members().iter().chain(e.weights()) {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmReport {
    pub before: TrustState,
    pub after: TrustState,
    /// `J` at the start of each ascent step.
    pub objective_trace: Vec<f64>,
    /// Hash of the expectation samples at every objective evaluation.
    pub sample_hashes: Vec<u64>,
    /// The frozen expectation samples.
    pub samples: Ensemble,
}

/// E-step at the current trust, then fixed-step ascent with forward
/// differences on frozen samples.
pub fn em_adapt_step(
    inputs: &PriorInputs,
    obs: &ObservationModel,
    y: &DVector<f64>,
    trust: TrustState,
    cfg: &FilterConfig,
    em: &EmConfig,
    rng: &mut RngStream,
) -> Result<EmReport> {
    em.validate()?;
    trust.validate()?;
    if inputs.is_multi() != trust.s_u.is_some() {
        return Err(Error::Argument("trust state does not match the prior inputs".into()));
    }
    let prior = inputs.prior(trust, cfg)?;
    let analysis = inputs.analyze(&prior, obs, y, cfg, rng)?;
    let samples = match (em.samples, &analysis.posterior) {
        (Some(n), Some(post)) => gm_sample(post, n, rng)?,
        _ => analysis.theory,
    };

    let mut hashes = Vec::new();
    let mut trace = Vec::with_capacity(em.ascent_steps);
    let eval = |s: TrustState, hashes: &mut Vec<u64>| {
        hashes.push(ensemble_hash(&samples));
        em_objective(s, &samples, inputs, obs, y, cfg)
    };
    let scale = if em.summed { samples.len() as f64 } else { 1.0 };
    let mut s = trust;
    for _ in 0..em.ascent_steps {
        let base = eval(s, &mut hashes)?;
        trace.push(base);
        let coords = s.to_vec();
        let mut grad = Vec::with_capacity(coords.len());
        for i in 0..coords.len() {
            let mut shifted = coords.clone();
            shifted[i] += em.fd_step;
            grad.push(scale * (eval(TrustState::from_slice(&shifted), &mut hashes)? - base) / em.fd_step);
        }
        s = ascend(s, &grad, em.step_size, em.s_min);
    }
    Ok(EmReport {
        before: trust,
        after: s,
        objective_trace: trace,
        sample_hashes: hashes,
        samples,
    })
}

/// Adaptive analysis: update the trust by EM, then analyze at the new trust.
pub fn adaptive_analysis(
    inputs: &PriorInputs,
    obs: &ObservationModel,
    y: &DVector<f64>,
    trust: TrustState,
    cfg: &FilterConfig,
    em: &EmConfig,
    rng: &mut RngStream,
) -> Result<(AnalysisResult, EmReport)> {
    let report = em_adapt_step(inputs, obs, y, trust, cfg, em, rng)?;
    let prior = inputs.prior(report.after, cfg)?;
    let analysis = inputs.analyze(&prior, obs, y, cfg, rng)?;
    Ok((analysis, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::FilterVariant;
    use crate::kde::silverman_bandwidth;
    use crate::models::banana_problem;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn line(points: &[f64]) -> Ensemble {
        let v: Vec<_> = points.iter().map(|p| DVector::from_element(1, *p)).collect();
        Ensemble::from_members(&v).unwrap()
    }

    fn scalar_obs() -> ObservationModel {
        ObservationModel::new(
            crate::gmu::LinearMap(DMatrix::identity(1, 1)),
            DMatrix::from_element(1, 1, 0.5),
        )
        .unwrap()
    }

    #[test]
    fn closed_form_objective() {
        // two-point prior ensemble: mixture of N(±1, (s h)² 2)
        let e = line(&[-1.0, 1.0]);
        let obs = scalar_obs();
        let y = DVector::from_element(1, 0.3);
        let cfg = FilterConfig::new(FilterVariant::Engmf);
        let x = line(&[0.4]);
        let s = 1.7;
        let j = em_objective(TrustState::single(s), &x, &PriorInputs::Single { ensemble: &e }, &obs, &y, &cfg).unwrap();
        let h = silverman_bandwidth(2, 1);
        let var = (s * h).powi(2) * 2.0;
        let n = |x: f64, m: f64, v: f64| (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        let expected = n(0.3, 0.4, 0.5).ln() + (0.5 * n(0.4, -1.0, var) + 0.5 * n(0.4, 1.0, var)).ln();
        assert_relative_eq!(j, expected, epsilon = 1e-9);
    }

    #[test]
    fn samples_at_the_mean_prefer_narrow_kernels() {
        let e = line(&[-1.0, 1.0]);
        let obs = scalar_obs();
        let y = DVector::from_element(1, 0.0);
        let cfg = FilterConfig::new(FilterVariant::Engmf);
        let x = line(&[-1.0, 1.0]);
        let inputs = PriorInputs::Single { ensemble: &e };
        let j = |s| em_objective(TrustState::single(s), &x, &inputs, &obs, &y, &cfg).unwrap();
        assert!(j(0.1) > j(0.2));
        assert!(j(0.2) > j(0.4));
    }

    #[test]
    fn likelihood_term_is_constant_in_trust() {
        let e = line(&[-1.0, 0.5, 1.0]);
        let x = line(&[0.1, -0.3, 2.0]);
        let cfg = FilterConfig::new(FilterVariant::Engmf);
        let inputs = PriorInputs::Single { ensemble: &e };
        let obs = scalar_obs();
        let y = DVector::from_element(1, 0.4);
        let j = |s| em_objective(TrustState::single(s), &x, &inputs, &obs, &y, &cfg).unwrap();
        let prior_term = |s| {
            let p = inputs.prior(TrustState::single(s), &cfg).unwrap();
            x.iter().map(|v| p.log_pdf(&v).unwrap()).sum::<f64>() / 3.0
        };
        assert_relative_eq!(j(0.7) - j(2.3), prior_term(0.7) - prior_term(2.3), epsilon = 1e-12);
    }

    #[test]
    fn narrow_prior_far_samples_push_the_bandwidth_up() {
        let e = line(&[-0.1, 0.0, 0.1]);
        let x = line(&[-3.0, 3.0]);
        let cfg = FilterConfig::new(FilterVariant::Engmf);
        let inputs = PriorInputs::Single { ensemble: &e };
        let obs = scalar_obs();
        let y = DVector::from_element(1, 0.0);
        let j = |s| em_objective(TrustState::single(s), &x, &inputs, &obs, &y, &cfg).unwrap();
        assert!((j(1.0 + 1e-6) - j(1.0)) / 1e-6 > 0.0);
    }

    fn banana_inputs(seed: u64, n_x: usize) -> Ensemble {
        let p = banana_problem().unwrap();
        gm_sample(&p.prior, n_x, &mut RngStream::new(seed, 1)).unwrap()
    }

    #[test]
    fn zero_step_keeps_trust_and_samples_stay_frozen() {
        let p = banana_problem().unwrap();
        let e = banana_inputs(3, 25);
        let cfg = FilterConfig::new(FilterVariant::Engmf);
        let em = EmConfig { step_size: 0.0, ..EmConfig::banana() };
        let start = TrustState::single(1.3);
        let r = em_adapt_step(&PriorInputs::Single { ensemble: &e }, &p.observation, &p.y, start, &cfg, &em, &mut RngStream::new(3, 2)).unwrap();
        assert_eq!(r.after, start);
        assert_eq!(r.sample_hashes.len(), 50);
        assert!(r.sample_hashes.iter().all(|h| *h == ensemble_hash(&r.samples)));
    }

    #[test]
    fn summed_ascent_is_mean_ascent_with_scaled_step() {
        let p = banana_problem().unwrap();
        let e = banana_inputs(7, 25);
        let cfg = FilterConfig::new(FilterVariant::Engmf);
        let inputs = PriorInputs::Single { ensemble: &e };
        let summed = EmConfig { ascent_steps: 1, ..EmConfig::banana() };
        let mean = EmConfig { summed: false, step_size: 25.0 / 32.0, ..summed };
        let run = |em: &EmConfig| em_adapt_step(&inputs, &p.observation, &p.y, TrustState::single(1.0), &cfg, em, &mut RngStream::new(7, 1)).unwrap().after.s_x;
        assert_relative_eq!(run(&summed), run(&mean), max_relative = 1e-12);
        assert!(!EmConfig::lorenz96().summed);
    }

    #[test]
    fn deterministic_given_streams() {
        let p = banana_problem().unwrap();
        let e = banana_inputs(5, 25);
        let u = gm_sample(&p.prior, 50, &mut RngStream::new(5, 9)).unwrap().map(|m| p.coupling.encode(&m.into_owned())).unwrap();
        let cfg = FilterConfig::new(FilterVariant::Mfengmf);
        let inputs = PriorInputs::Multi { theory: &e, reduced: &u, coupling: &p.coupling };
        let em = EmConfig { ascent_steps: 3, ..EmConfig::banana() };
        let run = || em_adapt_step(&inputs, &p.observation, &p.y, TrustState::multi(1.0, 1.0), &cfg, &em, &mut RngStream::new(5, 3)).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.after, b.after);
        assert_eq!(a.objective_trace, b.objective_trace);
        assert!(a.after.s_u.is_some());
    }

    #[test]
    fn ascent_improves_the_objective() {
        let p = banana_problem().unwrap();
        let cfg = FilterConfig::new(FilterVariant::Engmf);
        let em = EmConfig { ascent_steps: 1, step_size: 1.0 / 128.0, ..EmConfig::banana() };
        let mut up = 0;
        for seed in 0..40 {
            let e = banana_inputs(100 + seed, 25);
            let inputs = PriorInputs::Single { ensemble: &e };
            let start = TrustState::single(1.0);
            let r = em_adapt_step(&inputs, &p.observation, &p.y, start, &cfg, &em, &mut RngStream::new(seed, 0)).unwrap();
            let after = em_objective(r.after, &r.samples, &inputs, &p.observation, &p.y, &cfg).unwrap();
            if after >= r.objective_trace[0] {
                up += 1;
            }
        }
        assert!(up >= 38, "{up} of 40");
    }

    #[test]
    fn clamp_holds_under_random_gradients() {
        let mut rng = RngStream::new(77, 0);
        let mut s = TrustState::multi(1.0, 1.0);
        for _ in 0..10_000 {
            let g = [50.0 * rng.standard_normal(), 50.0 * rng.standard_normal()];
            s = ascend(s, &g, 1.0 / 32.0, S_MIN);
            assert!(s.s_x >= S_MIN && s.s_u.unwrap() >= S_MIN);
        }
        assert_eq!(ascend(TrustState::single(0.1), &[-1e9], 1.0, S_MIN).s_x, S_MIN);
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let p = banana_problem().unwrap();
        let e = banana_inputs(1, 10);
        let cfg = FilterConfig::new(FilterVariant::Engmf);
        let inputs = PriorInputs::Single { ensemble: &e };
        let em = EmConfig::banana();
        let mut rng = RngStream::new(0, 0);
        assert!(em_adapt_step(&inputs, &p.observation, &p.y, TrustState::multi(1.0, 1.0), &cfg, &em, &mut rng).is_err());
        assert!(em_adapt_step(&inputs, &p.observation, &p.y, TrustState::single(-1.0), &cfg, &em, &mut rng).is_err());
        let bad = EmConfig { fd_step: 0.0, ..em };
        assert!(em_adapt_step(&inputs, &p.observation, &p.y, TrustState::single(1.0), &cfg, &bad, &mut rng).is_err());
    }
}
