//! ROM file: one versioned JSON document.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpAutoencoder};
use super::surrogate::ResidualStats;
use crate::error::{Error, Result};
use crate::models::CouplingMap;

pub const ROM_FORMAT: &str = "mfengmf-rom";
pub const ROM_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct MatrixFile {
    rows: usize,
    cols: usize,
    /// row-major
    data: Vec<f64>,
}

impl MatrixFile {
    fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            data.extend(m.row(i).iter());
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    fn to_matrix(&self, what: &str, rows: usize, cols: usize) -> std::result::Result<DMatrix<f64>, String> {
        if self.rows != rows || self.cols != cols || self.data.len() != rows * cols {
            return Err(format!(
                "{what}: expected {rows}x{cols}, found {}x{} with {} values",
                self.rows,
                self.cols,
                self.data.len()
            ));
        }
        Ok(DMatrix::from_row_slice(rows, cols, &self.data))
    }
}

#[derive(Serialize, Deserialize)]
struct LayerPairFile {
    w1: MatrixFile,
    b1: Vec<f64>,
    w2: MatrixFile,
    b2: Vec<f64>,
}

impl LayerPairFile {
    fn from_mlp(m: &Mlp) -> Self {
        Self {
            w1: MatrixFile::from_matrix(&m.w1),
            b1: m.b1.as_slice().to_vec(),
            w2: MatrixFile::from_matrix(&m.w2),
            b2: m.b2.as_slice().to_vec(),
        }
    }

    fn to_mlp(&self, what: &str, input: usize, hidden: usize, output: usize) -> std::result::Result<Mlp, String> {
        let vec = |v: &[f64], n: usize, name: &str| {
            if v.len() == n {
                Ok(DVector::from_column_slice(v))
            } else {
                Err(format!("{what}.{name}: expected {n} values, found {}", v.len()))
            }
        };
        Ok(Mlp {
            w1: self.w1.to_matrix(&format!("{what}.w1"), hidden, input)?,
            b1: vec(&self.b1, hidden, "b1")?,
            w2: self.w2.to_matrix(&format!("{what}.w2"), output, hidden)?,
            b2: vec(&self.b2, output, "b2")?,
        })
    }
}

/// Free-form training provenance stored with the model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub seed: u64,
    pub samples: usize,
    pub epochs: usize,
    pub lambda: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
}

#[derive(Serialize, Deserialize)]
struct RomFile {
    format: String,
    version: u32,
    full_dim: usize,
    hidden_dim: usize,
    r_dim: usize,
    x_mean: Vec<f64>,
    x_std: Vec<f64>,
    encoder: LayerPairFile,
    decoder: LayerPairFile,
    residual_mean: Vec<f64>,
    residual_cov: MatrixFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    training: Option<TrainingInfo>,
}

/// A loaded ROM file.
#[derive(Clone, Debug)]
pub struct RomBundle {
    pub autoencoder: MlpAutoencoder,
    pub residual: ResidualStats,
    pub training: Option<TrainingInfo>,
}

pub fn rom_to_json(ae: &MlpAutoencoder, residual: &ResidualStats, training: Option<&TrainingInfo>) -> Result<String> {
    let file = RomFile {
        format: ROM_FORMAT.into(),
        version: ROM_FORMAT_VERSION,
        full_dim: ae.full_dim(),
        hidden_dim: ae.hidden_dim(),
        r_dim: ae.reduced_dim(),
        x_mean: ae.x_mean.as_slice().to_vec(),
        x_std: ae.x_std.as_slice().to_vec(),
        encoder: LayerPairFile::from_mlp(&ae.encoder),
        decoder: LayerPairFile::from_mlp(&ae.decoder),
        residual_mean: residual.mean.as_slice().to_vec(),
        residual_cov: MatrixFile::from_matrix(&residual.cov),
        training: training.cloned(),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Numerical(format!("cannot serialize ROM: {e}")))
}

pub fn save_rom(
    path: impl AsRef<Path>,
    ae: &MlpAutoencoder,
    residual: &ResidualStats,
    training: Option<&TrainingInfo>,
) -> Result<()> {
    let path = path.as_ref();
    let text = rom_to_json(ae, residual, training)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn rom_from_json(text: &str, path: &Path) -> Result<RomBundle> {
    let fail = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    let file: RomFile = serde_json::from_str(text).map_err(|e| fail(e.to_string()))?;
    if file.format != ROM_FORMAT {
        return Err(fail(format!("not a ROM file (format tag {:?})", file.format)));
    }
    if file.version != ROM_FORMAT_VERSION {
        return Err(fail(format!(
            "format version {} is not supported (expected {ROM_FORMAT_VERSION})",
            file.version
        )));
    }
    let (n, h, r) = (file.full_dim, file.hidden_dim, file.r_dim);
    if r == 0 || h == 0 || n == 0 {
        return Err(fail(format!("dimensions must be positive (full {n}, hidden {h}, reduced {r})")));
    }
    if r >= n {
        return Err(fail(format!("reduced dimension {r} must be below {n}")));
    }
    if file.x_mean.len() != n || file.x_std.len() != n {
        return Err(fail("standardization vectors do not match full_dim".into()));
    }
    if file.x_std.iter().any(|s| !(*s > 0.0)) {
        return Err(fail("standardization scales must be positive".into()));
    }
    let encoder = file.encoder.to_mlp("encoder", n, h, r).map_err(fail)?;
    let decoder = file.decoder.to_mlp("decoder", r, h, n).map_err(fail)?;
    if file.residual_mean.len() != r {
        return Err(fail("residual mean does not match r_dim".into()));
    }
    let cov = file.residual_cov.to_matrix("residual_cov", r, r).map_err(fail)?;
    let autoencoder = MlpAutoencoder {
        encoder,
        decoder,
        x_mean: DVector::from_vec(file.x_mean),
        x_std: DVector::from_vec(file.x_std),
    };
    if !autoencoder.is_finite() {
        return Err(fail("non-finite parameters".into()));
    }
    let residual = if cov.iter().all(|v| *v == 0.0) {
        let mut z = ResidualStats::zero(r);
        z.mean = DVector::from_vec(file.residual_mean);
        z
    } else {
        ResidualStats::new(DVector::from_vec(file.residual_mean), cov).map_err(|e| fail(e.to_string()))?
    };
    Ok(RomBundle {
        autoencoder,
        residual,
        training: file.training,
    })
}

pub fn load_rom(path: impl AsRef<Path>) -> Result<RomBundle> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    rom_from_json(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn sample() -> (MlpAutoencoder, ResidualStats) {
        let mut rng = RngStream::new(11, 0);
        let mut ae = MlpAutoencoder::init(8, 5, 3, &mut rng);
        ae.x_mean = DVector::from_fn(8, |i, _| 0.1 * i as f64 + 1.0 / 3.0);
        ae.x_std = DVector::from_fn(8, |i, _| 1.0 + (i as f64).sqrt());
        let a = DMatrix::from_fn(3, 3, |_, _| rng.standard_normal());
        let res = ResidualStats::new(DVector::from_fn(3, |_, _| rng.standard_normal()), &a * a.transpose()).unwrap();
        (ae, res)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let (ae, res) = sample();
        let info = TrainingInfo {
            seed: 3,
            samples: 10,
            epochs: 7,
            lambda: 10.0,
            initial_loss: 1.0 / 7.0,
            final_loss: 0.1,
        };
        let p1 = dir.path().join("a.json");
        let p2 = dir.path().join("b.json");
        save_rom(&p1, &ae, &res, Some(&info)).unwrap();
        let loaded = load_rom(&p1).unwrap();
        save_rom(&p2, &loaded.autoencoder, &loaded.residual, loaded.training.as_ref()).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        assert_eq!(loaded.autoencoder, ae);
        assert_eq!(loaded.residual.cov, res.cov);

        let mut rng = RngStream::new(12, 0);
        for _ in 0..10 {
            let x = DVector::from_fn(8, |_, _| 5.0 * rng.standard_normal());
            assert!((loaded.autoencoder.encode(&x) - ae.encode(&x)).amax() <= 1e-12);
        }
    }

    #[test]
    fn rejects_bad_files() {
        let (ae, res) = sample();
        let text = rom_to_json(&ae, &res, None).unwrap();
        let p = Path::new("mem.json");
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["r_dim"] = 0.into();
        assert!(matches!(rom_from_json(&v.to_string(), p), Err(Error::Format { .. })));

        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["version"] = 99.into();
        assert!(matches!(rom_from_json(&v.to_string(), p), Err(Error::Format { .. })));

        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["hidden_dim"] = 6.into();
        assert!(matches!(rom_from_json(&v.to_string(), p), Err(Error::Format { .. })));

        assert!(matches!(rom_from_json("{", p), Err(Error::Format { .. })));
        assert!(matches!(load_rom("/nonexistent/rom.json"), Err(Error::Io { .. })));
    }
}
