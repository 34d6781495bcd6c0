use nalgebra::{DMatrix, DVector};

use crate::gmu::InformationMap;

/// Encoder `θ: R^n → R^r` and decoder `φ: R^r → R^n` with Jacobians `Θ`, `Φ`.
pub trait CouplingMap: Sync {
    fn full_dim(&self) -> usize;
    fn reduced_dim(&self) -> usize;
    fn encode(&self, x: &DVector<f64>) -> DVector<f64>;
    fn decode(&self, u: &DVector<f64>) -> DVector<f64>;
    fn encode_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
    fn decode_jacobian(&self, u: &DVector<f64>) -> DMatrix<f64>;
}

/// The encoder of a coupling, viewed as an information map.
pub struct EncoderMap<'a>(pub &'a dyn CouplingMap);

impl InformationMap for EncoderMap<'_> {
    fn input_dim(&self) -> usize {
        self.0.full_dim()
    }

    fn output_dim(&self) -> usize {
        self.0.reduced_dim()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.0.encode(x)
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.0.encode_jacobian(x)
    }
}

/// The decoder of a coupling, viewed as an information map.
pub struct DecoderMap<'a>(pub &'a dyn CouplingMap);

impl InformationMap for DecoderMap<'_> {
    fn input_dim(&self) -> usize {
        self.0.reduced_dim()
    }

    fn output_dim(&self) -> usize {
        self.0.full_dim()
    }

    fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        self.0.decode(u)
    }

    fn jacobian(&self, u: &DVector<f64>) -> DMatrix<f64> {
        self.0.decode_jacobian(u)
    }
}

/// Linear projection `θ(x) = P x` decoded by the right inverse
/// `φ(u) = Pᵀ (P Pᵀ)⁻¹ u`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProjection {
    projection: DMatrix<f64>,
    lift: DMatrix<f64>,
}

impl LinearProjection {
    pub fn new(projection: DMatrix<f64>) -> Option<Self> {
        let ppt = &projection * projection.transpose();
        let lift = projection.transpose() * ppt.try_inverse()?;
        Some(Self { projection, lift })
    }

    pub fn projection(&self) -> &DMatrix<f64> {
        &self.projection
    }
}

impl CouplingMap for LinearProjection {
    fn full_dim(&self) -> usize {
        self.projection.ncols()
    }

    fn reduced_dim(&self) -> usize {
        self.projection.nrows()
    }

    fn encode(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.projection * x
    }

    fn decode(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.lift * u
    }

    fn encode_jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.projection.clone()
    }

    fn decode_jacobian(&self, _u: &DVector<f64>) -> DMatrix<f64> {
        self.lift.clone()
    }
}
