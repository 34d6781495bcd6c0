//! One-hidden-layer tanh network and the right-invertible autoencoder built
//! from two of them.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::models::CouplingMap;
use crate::rng::RngStream;

/// `y = W2 tanh(W1 x + b1) + b2`
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

/// Activations kept from a batched forward pass.
pub struct MlpTrace {
    hidden: DMatrix<f64>,
    pub output: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct MlpGrads {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

impl MlpGrads {
    pub fn zeros_like(m: &Mlp) -> Self {
        Self {
            w1: DMatrix::zeros(m.w1.nrows(), m.w1.ncols()),
            b1: DVector::zeros(m.b1.len()),
            w2: DMatrix::zeros(m.w2.nrows(), m.w2.ncols()),
            b2: DVector::zeros(m.b2.len()),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        self.w1 += &other.w1;
        self.b1 += &other.b1;
        self.w2 += &other.w2;
        self.b2 += &other.b2;
    }
}

fn add_bias(m: &mut DMatrix<f64>, b: &DVector<f64>) {
    for mut col in m.column_iter_mut() {
        col += b;
    }
}

fn row_sums(m: &DMatrix<f64>) -> DVector<f64> {
    let mut s = DVector::zeros(m.nrows());
    for col in m.column_iter() {
        s += col;
    }
    s
}

impl Mlp {
    /// Weights and biases uniform in `±1/√fan_in`.
    pub fn init(input: usize, hidden: usize, output: usize, rng: &mut RngStream) -> Self {
        let mut uniform = |rows: usize, cols: usize, fan_in: usize| {
            let a = 1.0 / (fan_in as f64).sqrt();
            DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-a..a))
        };
        let w1 = uniform(hidden, input, input);
        let b1 = uniform(hidden, 1, input).column(0).into_owned();
        let w2 = uniform(output, hidden, hidden);
        let b2 = uniform(output, 1, hidden).column(0).into_owned();
        Self { w1, b1, w2, b2 }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.nrows()
    }

    pub fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut a = &self.w1 * x + &self.b1;
        a.apply(|v| *v = v.tanh());
        &self.w2 * a + &self.b2
    }

    /// Inputs are the columns of `x`.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> MlpTrace {
        let mut hidden = &self.w1 * x;
        add_bias(&mut hidden, &self.b1);
        hidden.apply(|v| *v = v.tanh());
        let mut output = &self.w2 * &hidden;
        add_bias(&mut output, &self.b2);
        MlpTrace { hidden, output }
    }

    /// Gradients of a scalar loss given `d loss / d output`; also returns
    /// `d loss / d input`.
    pub fn backward_batch(&self, x: &DMatrix<f64>, trace: &MlpTrace, d_out: &DMatrix<f64>) -> (MlpGrads, DMatrix<f64>) {
        let w2 = d_out * trace.hidden.transpose();
        let b2 = row_sums(d_out);
        let mut d_hidden = self.w2.transpose() * d_out;
        d_hidden.zip_apply(&trace.hidden, |g, a| *g *= 1.0 - a * a);
        let w1 = &d_hidden * x.transpose();
        let b1 = row_sums(&d_hidden);
        let d_in = self.w1.transpose() * &d_hidden;
        (MlpGrads { w1, b1, w2, b2 }, d_in)
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut a = &self.w1 * x + &self.b1;
        a.apply(|v| *v = v.tanh());
        let mut scaled = self.w1.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= 1.0 - a[i] * a[i];
        }
        &self.w2 * scaled
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_mut_slice(),
            self.b1.as_mut_slice(),
            self.w2.as_mut_slice(),
            self.b2.as_mut_slice(),
        ]
    }

    pub fn is_finite(&self) -> bool {
        [&self.w1, &self.w2].iter().all(|m| m.iter().all(|v| v.is_finite()))
            && [&self.b1, &self.b2].iter().all(|m| m.iter().all(|v| v.is_finite()))
    }
}

impl MlpGrads {
    pub fn tensors(&self) -> [&[f64]; 4] {
        [
            self.w1.as_slice(),
            self.b1.as_slice(),
            self.w2.as_slice(),
            self.b2.as_slice(),
        ]
    }
}

/// Encoder and decoder networks acting on standardized coordinates; the
/// public maps include the affine (de)standardization.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpAutoencoder {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub x_mean: DVector<f64>,
    pub x_std: DVector<f64>,
}

/// Value and parameter gradients of the autoencoder training loss.
pub struct LossEval {
    pub loss: f64,
    pub reconstruction: f64,
    pub invertibility: f64,
    pub encoder: MlpGrads,
    pub decoder: MlpGrads,
}

impl MlpAutoencoder {
    pub fn init(full_dim: usize, hidden: usize, reduced_dim: usize, rng: &mut RngStream) -> Self {
        let encoder = Mlp::init(full_dim, hidden, reduced_dim, rng);
        let decoder = Mlp::init(reduced_dim, hidden, full_dim, rng);
        Self {
            encoder,
            decoder,
            x_mean: DVector::zeros(full_dim),
            x_std: DVector::from_element(full_dim, 1.0),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.encoder.hidden_dim()
    }

    pub fn standardize(&self, x: &DVector<f64>) -> DVector<f64> {
        (x - &self.x_mean).component_div(&self.x_std)
    }

    pub fn standardize_batch(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for mut col in out.column_iter_mut() {
            col -= &self.x_mean;
            col.component_div_assign(&self.x_std);
        }
        out
    }

    /// Mean over the columns of standardized data `x` of
    /// `‖D(E(x)) − x‖² + λ ‖E(D(E(x))) − E(x)‖²`, with gradients.
    pub fn loss_and_grads(&self, x: &DMatrix<f64>, lambda: f64) -> LossEval {
        let batch = x.ncols() as f64;
        let enc = self.encoder.forward_batch(x);
        let dec = self.decoder.forward_batch(&enc.output);
        let re = self.encoder.forward_batch(&dec.output);

        let recon_err = &dec.output - x;
        let inv_err = &re.output - &enc.output;
        let reconstruction = recon_err.norm_squared() / batch;
        let invertibility = inv_err.norm_squared() / batch;

        let g_re = &inv_err * (2.0 * lambda / batch);
        let (mut enc_grads, g_from_re) = self.encoder.backward_batch(&dec.output, &re, &g_re);
        let g_dec_out = &recon_err * (2.0 / batch) + g_from_re;
        let (dec_grads, g_code) = self.decoder.backward_batch(&enc.output, &dec, &g_dec_out);
        let g_enc_out = g_code - g_re;
        let (enc_grads_direct, _) = self.encoder.backward_batch(x, &enc, &g_enc_out);
        enc_grads.add_assign(&enc_grads_direct);

        LossEval {
            loss: reconstruction + lambda * invertibility,
            reconstruction,
            invertibility,
            encoder: enc_grads,
            decoder: dec_grads,
        }
    }

    pub fn loss(&self, x: &DMatrix<f64>, lambda: f64) -> f64 {
        let batch = x.ncols() as f64;
        let enc = self.encoder.forward_batch(x);
        let dec = self.decoder.forward_batch(&enc.output);
        let re = self.encoder.forward_batch(&dec.output);
        ((&dec.output - x).norm_squared() + lambda * (&re.output - &enc.output).norm_squared()) / batch
    }

    pub fn is_finite(&self) -> bool {
        self.encoder.is_finite() && self.decoder.is_finite()
    }
}

impl CouplingMap for MlpAutoencoder {
    fn full_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    fn reduced_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    fn encode(&self, x: &DVector<f64>) -> DVector<f64> {
        self.encoder.forward(&self.standardize(x))
    }

    fn decode(&self, u: &DVector<f64>) -> DVector<f64> {
        self.decoder.forward(u).component_mul(&self.x_std) + &self.x_mean
    }

    fn encode_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut j = self.encoder.jacobian(&self.standardize(x));
        for (k, mut col) in j.column_iter_mut().enumerate() {
            col /= self.x_std[k];
        }
        j
    }

    fn decode_jacobian(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let mut j = self.decoder.jacobian(u);
        for (k, mut row) in j.row_iter_mut().enumerate() {
            row *= self.x_std[k];
        }
        j
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmu::finite_difference_jacobian;
    use crate::models::{DecoderMap, EncoderMap};

    fn tiny(seed: u64) -> (MlpAutoencoder, DMatrix<f64>) {
        let mut rng = RngStream::new(seed, 0);
        let ae = MlpAutoencoder::init(4, 3, 2, &mut rng);
        let x = DMatrix::from_fn(4, 5, |_, _| rng.standard_normal());
        (ae, x)
    }

    fn check_grads(ae: &MlpAutoencoder, x: &DMatrix<f64>, lambda: f64) {
        let eval = ae.loss_and_grads(x, lambda);
        let analytic: Vec<f64> = eval
            .encoder
            .tensors()
            .iter()
            .chain(eval.decoder.tensors().iter())
            .flat_map(|t| t.iter().copied())
            .collect();
        let mut numeric = Vec::new();
        for net in 0..2 {
            for t in 0..4 {
                let len = {
                    let mut probe = ae.clone();
                    let m = if net == 0 { &mut probe.encoder } else { &mut probe.decoder };
                    m.tensors_mut()[t].len()
                };
                for k in 0..len {
                    let eval_at = |delta: f64| {
                        let mut p = ae.clone();
                        let m = if net == 0 { &mut p.encoder } else { &mut p.decoder };
                        m.tensors_mut()[t][k] += delta;
                        p.loss(x, lambda)
                    };
                    let h = 1e-6;
                    numeric.push((eval_at(h) - eval_at(-h)) / (2.0 * h));
                }
            }
        }
        let a = DVector::from_vec(analytic);
        let n = DVector::from_vec(numeric);
        let rel = (&a - &n).norm() / n.norm();
        assert!(rel < 1e-5, "relative gradient error {rel}");
    }

    #[test]
    fn reconstruction_gradient_matches_finite_differences() {
        let (ae, x) = tiny(1);
        check_grads(&ae, &x, 0.0);
    }

    #[test]
    fn invertibility_gradient_matches_finite_differences() {
        let (ae, x) = tiny(2);
        check_grads(&ae, &x, 10.0);
        // isolate the invertibility term
        let e_full = ae.loss_and_grads(&x, 10.0);
        let e_rec = ae.loss_and_grads(&x, 0.0);
        assert!((e_full.loss - e_rec.loss - 10.0 * e_full.invertibility).abs() < 1e-12);
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = RngStream::new(3, 0);
        let mut ae = MlpAutoencoder::init(6, 5, 3, &mut rng);
        ae.x_mean = DVector::from_fn(6, |i, _| i as f64 - 2.0);
        ae.x_std = DVector::from_fn(6, |i, _| 0.5 + i as f64);
        for _ in 0..20 {
            let x = DVector::from_fn(6, |_, _| 3.0 * rng.standard_normal());
            let enc = EncoderMap(&ae);
            let fd = finite_difference_jacobian(&enc, &x, 1e-6);
            assert!((fd - ae.encode_jacobian(&x)).norm() <= 1e-5 * ae.encode_jacobian(&x).norm());
            let u = DVector::from_fn(3, |_, _| rng.standard_normal());
            let dec = DecoderMap(&ae);
            let fd = finite_difference_jacobian(&dec, &u, 1e-6);
            assert!((fd - ae.decode_jacobian(&u)).norm() <= 1e-5 * ae.decode_jacobian(&u).norm());
        }
    }
}
