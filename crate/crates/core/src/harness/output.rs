use std::fs;
use std::path::{Path, PathBuf};

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

/// A metric value, or the marker for a replicate that blew up.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MetricValue {
    Value(f64),
    Diverged,
}

impl MetricValue {
    pub fn value(self) -> Option<f64> {
        match self {
            MetricValue::Value(v) => Some(v),
            MetricValue::Diverged => None,
        }
    }
}

const DIVERGED: &str = "diverged";

impl Serialize for MetricValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MetricValue::Value(v) => s.serialize_f64(*v),
            MetricValue::Diverged => s.serialize_str(DIVERGED),
        }
    }
}

struct MetricVisitor;

impl Visitor<'_> for MetricVisitor {
    type Value = MetricValue;

    fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        write!(f, "a number or \"{DIVERGED}\"")
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<MetricValue, E> {
        Ok(MetricValue::Value(v))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<MetricValue, E> {
        Ok(MetricValue::Value(v as f64))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<MetricValue, E> {
        Ok(MetricValue::Value(v as f64))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<MetricValue, E> {
        if v == DIVERGED {
            return Ok(MetricValue::Diverged);
        }
        v.parse().map(MetricValue::Value).map_err(E::custom)
    }
}

impl<'de> Deserialize<'de> for MetricValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        d.deserialize_any(MetricVisitor)
    }
}

/// One line of the results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub filter: String,
    pub n_x: usize,
    pub n_u: Option<usize>,
    pub r_dim: Option<usize>,
    pub s_x: Option<f64>,
    pub s_u: Option<f64>,
    pub alpha_x: Option<f64>,
    pub alpha_u: Option<f64>,
    pub seed: u64,
    /// Empty on aggregate rows.
    pub replicate: Option<usize>,
    pub metric: String,
    pub value: MetricValue,
    pub runtime_s: f64,
    pub version: String,
}

impl ResultRow {
    /// Row skeleton carrying the configuration columns of `cfg`.
    pub fn for_config(cfg: &ExperimentConfig) -> Self {
        let f = cfg.filter;
        let mf = f.is_multifidelity();
        Self {
            experiment: cfg.experiment.name().into(),
            filter: f.name().into(),
            n_x: cfg.n_x,
            n_u: mf.then_some(cfg.n_u),
            r_dim: (mf && cfg.experiment == super::Experiment::Lorenz96).then_some(cfg.r_dim),
            s_x: f.is_mixture().then_some(cfg.s_x),
            s_u: (f.is_mixture() && mf).then_some(cfg.s_u),
            alpha_x: f.is_kalman().then_some(cfg.alpha_x),
            alpha_u: (f.is_kalman() && mf).then_some(cfg.alpha_u),
            seed: cfg.seed,
            replicate: None,
            metric: String::new(),
            value: MetricValue::Diverged,
            runtime_s: 0.0,
            version: crate::VERSION.into(),
        }
    }

    pub fn with(&self, replicate: Option<usize>, metric: &str, value: MetricValue, runtime_s: f64) -> Self {
        Self {
            replicate,
            metric: metric.into(),
            value,
            runtime_s,
            ..self.clone()
        }
    }
}

/// Per-replicate values of `metric`, in replicate order; `None` marks
/// diverged replicates.
pub fn replicate_values(rows: &[ResultRow], metric: &str) -> Vec<Option<f64>> {
    let mut v: Vec<(usize, Option<f64>)> = rows
        .iter()
        .filter(|r| r.metric == metric)
        .filter_map(|r| r.replicate.map(|i| (i, r.value.value())))
        .collect();
    v.sort_by_key(|(i, _)| *i);
    v.into_iter().map(|(_, x)| x).collect()
}

/// Mean, standard error, and count of the finite values.
pub fn mean_and_se(values: &[f64]) -> (f64, f64, usize) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN, n);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt(), n)
}

/// Aggregate rows for `metric`: mean, standard error (when defined), and
/// diverged count.
pub fn aggregate_rows(template: &ResultRow, rows: &[ResultRow], metric: &str, runtime_s: f64) -> Vec<ResultRow> {
    let values = replicate_values(rows, metric);
    let finite: Vec<f64> = values.iter().flatten().copied().collect();
    let (mean, se, _) = mean_and_se(&finite);
    let tag = |v: f64| if v.is_finite() { MetricValue::Value(v) } else { MetricValue::Diverged };
    let mut out = vec![template.with(None, metric, tag(mean), runtime_s)];
    if se.is_finite() {
        out.push(template.with(None, &format!("{metric}_se"), MetricValue::Value(se), runtime_s));
    }
    out.push(template.with(
        None,
        "diverged_replicates",
        MetricValue::Value((values.len() - finite.len()) as f64),
        runtime_s,
    ));
    out
}

/// RFC-4180 CSV with a header line.
pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    if rows.is_empty() {
        w.write_record(ROW_HEADER).map_err(|e| csv_error(path, e))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

pub const ROW_HEADER: [&str; 15] = [
    "experiment",
    "filter",
    "n_x",
    "n_u",
    "r_dim",
    "s_x",
    "s_u",
    "alpha_x",
    "alpha_u",
    "seed",
    "replicate",
    "metric",
    "value",
    "runtime_s",
    "version",
];

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        }
    }
}

/// `results.csv` → `results.meta.json`
pub fn metadata_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Resolved config, seeds, versions, and anything else worth keeping next
/// to a CSV.
pub fn write_metadata(csv_path: &Path, cfg: &ExperimentConfig, command: &str, extra: serde_json::Value) -> Result<PathBuf> {
    let path = metadata_path(csv_path);
    let doc = serde_json::json!({
        "command": command,
        "version": crate::VERSION,
        "config": cfg,
        "seed": cfg.seed,
        "replicate_streams": format!("stream {{seed}}/{{replicate}} for replicates 0..{}", cfg.replicates),
        "initial_ensemble": match cfg.experiment {
            super::Experiment::Banana => "independent draws from the prior",
            super::Experiment::Lorenz96 => "truth plus independent N(0, I) perturbations",
        },
        "results": csv_path.file_name().map(|f| f.to_string_lossy().into_owned()),
        "extra": extra,
    });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_rows() -> Vec<ResultRow> {
        let cfg = ExperimentConfig::banana();
        let t = ResultRow::for_config(&cfg);
        vec![
            t.with(Some(0), "f_divergence", MetricValue::Value(0.125), 0.5),
            t.with(Some(1), "f_divergence", MetricValue::Diverged, 0.25),
            t.with(Some(2), "f_divergence", MetricValue::Value(1.0 / 3.0), 0.25),
        ]
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out/rows.csv");
        let rows = sample_rows();
        emit_csv(&rows, &path).unwrap();
        assert_eq!(read_csv(&path).unwrap(), rows);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(&ROW_HEADER.join(",")));
        assert!(text.contains(",diverged,"));
    }

    #[test]
    fn empty_rows_write_a_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        emit_csv(&[], &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap().trim_end(), ROW_HEADER.join(","));
        assert!(read_csv(&path).unwrap().is_empty());
    }

    #[test]
    fn aggregates_skip_diverged() {
        let rows = sample_rows();
        let agg = aggregate_rows(&rows[0].with(None, "", MetricValue::Diverged, 0.0), &rows, "f_divergence", 1.0);
        let mean = agg[0].value.value().unwrap();
        assert!((mean - (0.125 + 1.0 / 3.0) / 2.0).abs() < 1e-12);
        assert_eq!(agg[2].value, MetricValue::Value(1.0));
        let one = aggregate_rows(&agg[0], &rows[..1], "f_divergence", 1.0);
        assert_eq!(one.len(), 2);
        assert_eq!(replicate_values(&rows, "f_divergence")[1], None);
    }

    #[test]
    fn unwritable_path_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain");
        fs::write(&file, "x").unwrap();
        let err = emit_csv(&sample_rows(), &file.join("nested.csv")).unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }
}
