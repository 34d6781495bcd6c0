//! Grid-quadrature densities, the squared-log-ratio f-divergence, and
//! spatio-temporal RMSE.

use std::borrow::Cow;
use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::AnalysisResult;
use crate::kde::{kde_estimate, KdeConfig};
use crate::linalg::log_sum_exp;
use crate::mixture::GaussianMixture;
use crate::models::{banana_problem, BananaProblem};

/// Floor on normalized `log q`.
pub const LOG_DENSITY_FLOOR: f64 = -700.0;
/// Nodes with `log p` this far below the maximum are left out of the
/// divergence sum.
const LOG_P_CUTOFF: f64 = 40.0;

/// Rectangular node lattice in one or two dimensions, `x` fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub nodes: Vec<usize>,
}

impl GridSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, nodes: Vec<usize>) -> Result<Self> {
        let d = lo.len();
        if !(1..=2).contains(&d) || hi.len() != d || nodes.len() != d {
            return Err(Error::Argument("grids are 1-D or 2-D with matching bounds".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(b > a)) || nodes.iter().any(|&k| k < 2) {
            return Err(Error::Argument("grid needs lo < hi and at least 2 nodes per axis".into()));
        }
        Ok(Self { lo, hi, nodes })
    }

    /// The default box for the banana problem.
    pub fn banana_default() -> Self {
        Self::banana_with_nodes(601)
    }

    pub fn banana_with_nodes(k: usize) -> Self {
        Self {
            lo: vec![-6.0, -4.5],
            hi: vec![3.0, 4.5],
            nodes: vec![k, k],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.nodes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn step(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.nodes[axis] - 1) as f64
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.lo[axis] + i as f64 * self.step(axis)
    }

    pub fn point(&self, node: usize) -> DVector<f64> {
        if self.dim() == 1 {
            DVector::from_element(1, self.coord(0, node))
        } else {
            let nx = self.nodes[0];
            DVector::from_vec(vec![self.coord(0, node % nx), self.coord(1, node / nx)])
        }
    }

    fn axis_weight(&self, axis: usize, i: usize) -> f64 {
        let h = self.step(axis);
        if i == 0 || i + 1 == self.nodes[axis] {
            0.5 * h
        } else {
            h
        }
    }

    /// Trapezoid weight of a node.
    pub fn weight(&self, node: usize) -> f64 {
        if self.dim() == 1 {
            self.axis_weight(0, node)
        } else {
            let nx = self.nodes[0];
            self.axis_weight(0, node % nx) * self.axis_weight(1, node / nx)
        }
    }

    /// `log ∫ exp(v)` by the trapezoid rule.
    pub fn log_integral(&self, log_values: &[f64]) -> f64 {
        let terms: Vec<f64> = log_values
            .iter()
            .enumerate()
            .map(|(k, v)| v + self.weight(k).ln())
            .collect();
        log_sum_exp(&terms)
    }
}

/// Normalized log density tabulated on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDensity {
    pub grid: GridSpec,
    /// Normalized; `−∞` where the density vanishes.
    pub log_density: Vec<f64>,
    /// Log of the normalization constant removed.
    pub log_norm: f64,
}

impl GridDensity {
    pub fn from_log_fn(grid: GridSpec, f: impl Fn(&DVector<f64>) -> f64) -> Result<Self> {
        let raw: Vec<f64> = (0..grid.len()).map(|k| f(&grid.point(k))).collect();
        Self::from_log_values(grid, raw)
    }

    pub fn from_log_values(grid: GridSpec, mut raw: Vec<f64>) -> Result<Self> {
        if raw.len() != grid.len() {
            return Err(Error::Argument("value count does not match the grid".into()));
        }
        let log_norm = grid.log_integral(&raw);
        if !log_norm.is_finite() {
            return Err(Error::Numerical("density has no finite mass on the grid".into()));
        }
        raw.iter_mut().for_each(|v| *v -= log_norm);
        Ok(Self {
            grid,
            log_density: raw,
            log_norm,
        })
    }

    /// Trapezoid integral of the density; 1 up to rounding.
    pub fn mass(&self) -> f64 {
        self.grid.log_integral(&self.log_density).exp()
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.grid.dim());
        for (k, lp) in self.log_density.iter().enumerate() {
            m += self.grid.point(k) * (self.grid.weight(k) * lp.exp());
        }
        m
    }
}

/// Something whose log density can be tabulated on grid nodes.
pub trait GridEvaluable {
    /// Unnormalized log density at each listed node.
    fn log_density_nodes(&self, grid: &GridSpec, nodes: &[usize]) -> Result<Vec<f64>>;

    /// `log ∫_box q` in closed form, when available; otherwise the trapezoid
    /// rule over the full grid is used.
    fn log_box_mass(&self, _grid: &GridSpec) -> Option<f64> {
        None
    }
}

impl GridEvaluable for GridDensity {
    fn log_density_nodes(&self, grid: &GridSpec, nodes: &[usize]) -> Result<Vec<f64>> {
        if grid != &self.grid {
            return Err(Error::Argument("grid density evaluated on a different grid".into()));
        }
        Ok(nodes.iter().map(|&k| self.log_density[k]).collect())
    }

    fn log_box_mass(&self, grid: &GridSpec) -> Option<f64> {
        Some(grid.log_integral(&self.log_density))
    }
}

/// A log-density closure.
pub struct LogDensityFn<F>(pub F);

impl<F: Fn(&DVector<f64>) -> f64> GridEvaluable for LogDensityFn<F> {
    fn log_density_nodes(&self, grid: &GridSpec, nodes: &[usize]) -> Result<Vec<f64>> {
        Ok(nodes.iter().map(|&k| (self.0)(&grid.point(k))).collect())
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Mass of `N(μ, Σ)` in the grid box.
fn gaussian_box_mass(mean: &DVector<f64>, cov: &DMatrix<f64>, grid: &GridSpec) -> f64 {
    const FAR: f64 = 8.5;
    let sx = cov[(0, 0)].sqrt();
    if grid.dim() == 1 {
        return std_normal_cdf((grid.hi[0] - mean[0]) / sx) - std_normal_cdf((grid.lo[0] - mean[0]) / sx);
    }
    let sy = cov[(1, 1)].sqrt();
    let inside = |axis: usize, s: f64| mean[axis] - FAR * s >= grid.lo[axis] && mean[axis] + FAR * s <= grid.hi[axis];
    if inside(0, sx) && inside(1, sy) {
        return 1.0;
    }
    // integrate the conditional y-interval mass over x
    let a = grid.lo[0].max(mean[0] - 9.0 * sx);
    let b = grid.hi[0].min(mean[0] + 9.0 * sx);
    if a >= b {
        return 0.0;
    }
    let slope = cov[(0, 1)] / cov[(0, 0)];
    let cond_sd = (cov[(1, 1)] - cov[(0, 1)] * slope).max(0.0).sqrt();
    let (nodes, weights) = gauss_legendre(96);
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    let mut total = 0.0;
    for (t, w) in nodes.iter().zip(&weights) {
        let x = mid + half * t;
        let zx = (x - mean[0]) / sx;
        let px = (-0.5 * zx * zx).exp() / (sx * (2.0 * PI).sqrt());
        let m = mean[1] + slope * (x - mean[0]);
        let py = if cond_sd > 0.0 {
            std_normal_cdf((grid.hi[1] - m) / cond_sd) - std_normal_cdf((grid.lo[1] - m) / cond_sd)
        } else if m >= grid.lo[1] && m <= grid.hi[1] {
            1.0
        } else {
            0.0
        };
        total += w * half * px * py;
    }
    total
}

/// Adds `w N(x; μ, Σ)` to `acc` on the listed row ranges of a 2-D grid.
/// Along each row the Gaussian is a scaled `exp(quadratic)`, walked outward
/// from its peak by running ratios.
fn accumulate_component_2d(
    acc: &mut [f64],
    grid: &GridSpec,
    rows: &[(usize, usize, usize)],
    mean: &DVector<f64>,
    prec: &DMatrix<f64>,
    log_c: f64,
) {
    let nx = grid.nodes[0];
    let (hx, x0) = (grid.step(0), grid.lo[0]);
    let (a, b, c) = (prec[(0, 0)], prec[(0, 1)], prec[(1, 1)]);
    let decay = (-a * hx * hx).exp();
    for &(iy, c0, c1) in rows {
        let dy = grid.coord(1, iy) - mean[1];
        let peak_x = mean[0] - b * dy / a;
        let ip = ((peak_x - x0) / hx).round().clamp(c0 as f64, c1 as f64) as usize;
        let dx = x0 + ip as f64 * hx - mean[0];
        let log_peak = log_c - 0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy);
        if log_peak < -745.0 {
            continue;
        }
        let peak = log_peak.exp();
        let base = iy * nx;
        acc[base + ip] += peak;
        // rightward
        let mut f = peak;
        let mut r = (-0.5 * a * (2.0 * dx * hx + hx * hx) - b * dy * hx).exp();
        for i in ip + 1..=c1 {
            f *= r;
            if f < 1e-320 {
                break;
            }
            acc[base + i] += f;
            r *= decay;
        }
        // leftward
        let mut f = peak;
        let mut l = (-0.5 * a * (-2.0 * dx * hx + hx * hx) + b * dy * hx).exp();
        for i in (c0..ip).rev() {
            f *= l;
            if f < 1e-320 {
                break;
            }
            acc[base + i] += f;
            l *= decay;
        }
    }
}

impl GridEvaluable for GaussianMixture {
    fn log_density_nodes(&self, grid: &GridSpec, nodes: &[usize]) -> Result<Vec<f64>> {
        if self.dim() != grid.dim() {
            return Err(Error::Argument("mixture and grid dimensions differ".into()));
        }
        if grid.dim() == 1 || nodes.is_empty() {
            let ev = self.evaluator()?;
            let mut scratch = Vec::new();
            return Ok(nodes
                .iter()
                .map(|&k| ev.log_pdf_with(grid.point(k).as_slice(), &mut scratch))
                .collect());
        }
        // row ranges covering the requested nodes
        let nx = grid.nodes[0];
        let mut ranges: Vec<Option<(usize, usize)>> = vec![None; grid.nodes[1]];
        for &k in nodes {
            let (ix, iy) = (k % nx, k / nx);
            ranges[iy] = Some(match ranges[iy] {
                None => (ix, ix),
                Some((a, b)) => (a.min(ix), b.max(ix)),
            });
        }
        let rows: Vec<(usize, usize, usize)> = ranges
            .iter()
            .enumerate()
            .filter_map(|(iy, r)| r.map(|(a, b)| (iy, a, b)))
            .collect();
        let mut factors = Vec::with_capacity(self.covariance_pool().len());
        for cov in self.covariance_pool() {
            // same jitter ladder as the direct evaluator
            let scale = 0.5 * cov.trace();
            let cov = [1e-10, 1e-8]
                .iter()
                .map(|eps| cov + DMatrix::identity(2, 2) * (eps * scale.max(0.0)))
                .find(|c| c[(0, 0)] * c[(1, 1)] - c[(0, 1)] * c[(1, 0)] > 0.0)
                .ok_or_else(|| Error::Numerical("mixture component is singular on the grid".into()))?;
            let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
            let prec = DMatrix::from_row_slice(2, 2, &[cov[(1, 1)], -cov[(0, 1)], -cov[(1, 0)], cov[(0, 0)]]) / det;
            factors.push((prec, -(2.0 * PI).ln() - 0.5 * det.ln()));
        }
        let mut acc = vec![0.0; grid.len()];
        for (k, (mean, w)) in self.means().iter().zip(self.weights()).enumerate() {
            if *w <= 0.0 {
                continue;
            }
            let (prec, log_norm) = &factors[self.covariance_index()[k]];
            accumulate_component_2d(&mut acc, grid, &rows, mean, prec, w.ln() + log_norm);
        }
        Ok(nodes.iter().map(|&k| acc[k].ln()).collect())
    }

    fn log_box_mass(&self, grid: &GridSpec) -> Option<f64> {
        if self.dim() != grid.dim() {
            return None;
        }
        let mut mass = 0.0;
        for (k, (mean, w)) in self.means().iter().zip(self.weights()).enumerate() {
            mass += w * gaussian_box_mass(mean, self.covariance(k), grid);
        }
        Some(mass.ln())
    }
}

/// `∫ p (log p − log q)²` over the grid of `p`, with `q` normalized over
/// the same box and floored at [`LOG_DENSITY_FLOOR`].
pub fn f_divergence(p: &GridDensity, q: &dyn GridEvaluable) -> Result<f64> {
    let grid = &p.grid;
    let max = p.log_density.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let nodes: Vec<usize> = (0..grid.len())
        .filter(|&k| p.log_density[k] > max - LOG_P_CUTOFF)
        .collect();
    let log_z = match q.log_box_mass(grid) {
        Some(z) => z,
        None => {
            let all: Vec<usize> = (0..grid.len()).collect();
            grid.log_integral(&q.log_density_nodes(grid, &all)?)
        }
    };
    if !log_z.is_finite() {
        return Err(Error::Numerical("q has no mass on the grid".into()));
    }
    let log_q = q.log_density_nodes(grid, &nodes)?;
    let mut total = 0.0;
    for (&k, lq) in nodes.iter().zip(&log_q) {
        let lp = p.log_density[k];
        let lq = if lq.is_nan() { LOG_DENSITY_FLOOR } else { (lq - log_z).max(LOG_DENSITY_FLOOR) };
        let d = lp - lq;
        total += grid.weight(k) * lp.exp() * d * d;
    }
    Ok(total)
}

/// Unnormalized log posterior of the banana problem.
pub fn banana_log_posterior(problem: &BananaProblem, x: &DVector<f64>) -> f64 {
    problem.prior.log_pdf(x).unwrap_or(f64::NEG_INFINITY) + problem.observation.log_likelihood(x, &problem.y)
}

/// Quadrature ground truth for the banana problem.
pub fn banana_true_posterior(grid: &GridSpec) -> Result<GridDensity> {
    let problem = banana_problem()?;
    GridDensity::from_log_fn(grid.clone(), |x| banana_log_posterior(&problem, x))
}

/// `sqrt(mean over steps and coordinates of (x̄ − xᵗ)²)`
pub fn spatio_temporal_rmse(estimates: &[DVector<f64>], truth: &[DVector<f64>]) -> Result<f64> {
    if estimates.len() != truth.len() || estimates.is_empty() {
        return Err(Error::Argument(format!(
            "{} estimates for {} truth states",
            estimates.len(),
            truth.len()
        )));
    }
    let n = truth[0].len();
    let mut sum = 0.0;
    for (e, t) in estimates.iter().zip(truth) {
        if e.len() != n || t.len() != n {
            return Err(Error::Argument("state dimensions differ".into()));
        }
        sum += (e - t).norm_squared();
    }
    Ok((sum / (n * truth.len()) as f64).sqrt())
}

/// What stands in for `q` when scoring a filter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricDensity {
    /// The posterior mixture for mixture filters, an `s = 1` KDE otherwise.
    #[default]
    Mixture,
    /// An `s = 1` KDE of the analysis ensemble for every filter.
    ResampledKde,
}

/// Density used to score an analysis with [`MetricDensity::Mixture`].
pub fn filter_density_for_metric(result: &AnalysisResult) -> Result<Cow<'_, GaussianMixture>> {
    filter_density_with(result, MetricDensity::Mixture)
}

pub fn filter_density_with(result: &AnalysisResult, source: MetricDensity) -> Result<Cow<'_, GaussianMixture>> {
    if let (MetricDensity::Mixture, Some(post)) = (source, &result.posterior) {
        return Ok(Cow::Borrowed(post));
    }
    let shift = if result.posterior.is_some() {
        DVector::zeros(result.theory.dim())
    } else {
        &result.estimate - result.theory.mean()
    };
    let kde = kde_estimate(&result.theory, &KdeConfig::new(1.0))?;
    if shift.iter().all(|v| *v == 0.0) {
        return Ok(Cow::Owned(kde));
    }
    let means = kde.means().iter().map(|m| m + &shift).collect();
    Ok(Cow::Owned(GaussianMixture::with_shared_covariance(
        means,
        kde.covariance(0).clone(),
        kde.weights().to_vec(),
    )?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    fn line() -> GridSpec {
        GridSpec::new(vec![-10.0], vec![10.0], vec![4001]).unwrap()
    }

    #[test]
    fn identical_densities_have_zero_divergence() {
        let p = banana_true_posterior(&GridSpec::banana_with_nodes(201)).unwrap();
        assert!(f_divergence(&p, &p).unwrap().abs() < 1e-12);
        let gm = GaussianMixture::gaussian(v(&[0.0]), DMatrix::identity(1, 1)).unwrap();
        let p = GridDensity::from_log_fn(line(), |x| gm.log_pdf(x).unwrap()).unwrap();
        assert!(f_divergence(&p, &gm).unwrap().abs() < 1e-12);
    }

    #[test]
    fn shifted_gaussian_closed_form() {
        let p0 = GaussianMixture::gaussian(v(&[0.0]), DMatrix::identity(1, 1)).unwrap();
        let q = GaussianMixture::gaussian(v(&[0.1]), DMatrix::identity(1, 1)).unwrap();
        let p = GridDensity::from_log_fn(line(), |x| p0.log_pdf(x).unwrap()).unwrap();
        let d = f_divergence(&p, &q).unwrap();
        assert_relative_eq!(d, 0.010025, epsilon = 1e-6);
    }

    #[test]
    fn normalization_constant_of_q_is_irrelevant() {
        let grid = GridSpec::banana_with_nodes(151);
        let p = banana_true_posterior(&grid).unwrap();
        let q = |x: &DVector<f64>| -0.5 * ((x[0] + 1.0).powi(2) + x[1].powi(2)) / 0.3;
        let a = f_divergence(&p, &LogDensityFn(q)).unwrap();
        let b = f_divergence(&p, &LogDensityFn(|x: &DVector<f64>| q(x) + 7.0f64.ln())).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn fast_mixture_tabulation_matches_direct_evaluation() {
        let mut rng = RngStream::new(4, 4);
        let grid = GridSpec::banana_with_nodes(121);
        let means: Vec<DVector<f64>> = (0..30).map(|_| v(&[rng.standard_normal() - 1.0, rng.standard_normal()])).collect();
        let covs: Vec<DMatrix<f64>> = (0..30)
            .map(|_| {
                let a = DMatrix::from_fn(2, 2, |_, _| 0.4 * rng.standard_normal());
                &a * a.transpose() + DMatrix::identity(2, 2) * 0.01
            })
            .collect();
        let w: Vec<f64> = (0..30).map(|k| (k + 1) as f64).collect();
        let total: f64 = w.iter().sum();
        let gm = GaussianMixture::new(means, covs, w.iter().map(|x| x / total).collect()).unwrap();
        let nodes: Vec<usize> = (0..grid.len()).step_by(7).collect();
        let fast = gm.log_density_nodes(&grid, &nodes).unwrap();
        for (&k, f) in nodes.iter().zip(&fast) {
            let direct = gm.log_pdf(&grid.point(k)).unwrap();
            // recurrence round-off grows along each row
            if direct > -700.0 {
                assert!((f - direct).abs() < 1e-9 * direct.abs().max(1.0), "{f} vs {direct}");
            }
        }
    }

    #[test]
    fn box_mass_matches_trapezoid() {
        let grid = GridSpec::banana_with_nodes(801);
        let gm = GaussianMixture::new(
            vec![v(&[2.5, 0.0]), v(&[-1.0, -4.2]), v(&[0.0, 0.0])],
            vec![
                DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.2]),
                DMatrix::from_row_slice(2, 2, &[0.5, -0.2, -0.2, 0.4]),
                DMatrix::identity(2, 2) * 0.1,
            ],
            vec![0.3, 0.3, 0.4],
        )
        .unwrap();
        let all: Vec<usize> = (0..grid.len()).collect();
        let trap = grid.log_integral(&gm.log_density_nodes(&grid, &all).unwrap());
        let exact = gm.log_box_mass(&grid).unwrap();
        assert!(exact < -0.05);
        assert_relative_eq!(trap, exact, epsilon = 1e-5);
    }

    #[test]
    fn divergence_is_nonnegative() {
        let mut rng = RngStream::new(9, 0);
        let grid = GridSpec::banana_with_nodes(61);
        let random_gm = |rng: &mut RngStream| {
            let means = (0..3).map(|_| v(&[rng.standard_normal() - 1.0, rng.standard_normal()])).collect();
            GaussianMixture::with_shared_covariance(means, DMatrix::identity(2, 2) * 0.5, vec![0.2, 0.3, 0.5]).unwrap()
        };
        for _ in 0..100 {
            let a = random_gm(&mut rng);
            let b = random_gm(&mut rng);
            let all: Vec<usize> = (0..grid.len()).collect();
            let p = GridDensity::from_log_values(grid.clone(), a.log_density_nodes(&grid, &all).unwrap()).unwrap();
            assert!(f_divergence(&p, &b).unwrap() >= 0.0);
        }
    }

    #[test]
    fn banana_posterior_properties() {
        let problem = banana_problem().unwrap();
        let at = |x: f64| banana_log_posterior(&problem, &v(&[x, 0.0]));
        assert!(at(-1.0) - at(-2.0) > (1e5f64).ln());

        let coarse = banana_true_posterior(&GridSpec::banana_default()).unwrap();
        let fine = banana_true_posterior(&GridSpec::banana_with_nodes(1201)).unwrap();
        assert!(((coarse.log_norm - fine.log_norm).exp() - 1.0).abs() < 1e-4);
        assert!((coarse.mass() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn axis_aligned_prior_gives_a_symmetric_posterior() {
        let grid = GridSpec::banana_with_nodes(201);
        let prior = GaussianMixture::gaussian(v(&[-3.5, 0.0]), DMatrix::identity(2, 2)).unwrap();
        let obs = banana_problem().unwrap().observation;
        let y = v(&[1.0]);
        let p = GridDensity::from_log_fn(grid.clone(), |x| prior.log_pdf(x).unwrap() + obs.log_likelihood(x, &y)).unwrap();
        let n = 201;
        for iy in 0..n {
            for ix in 0..n {
                let a = p.log_density[iy * n + ix];
                let b = p.log_density[(n - 1 - iy) * n + ix];
                assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn rmse_examples() {
        let t = vec![v(&[1.0, 2.0]), v(&[3.0, 4.0])];
        assert_eq!(spatio_temporal_rmse(&t, &t).unwrap(), 0.0);
        let shifted: Vec<_> = t.iter().map(|x| x.add_scalar(0.7)).collect();
        assert_relative_eq!(spatio_temporal_rmse(&shifted, &t).unwrap(), 0.7, epsilon = 1e-15);
        assert_eq!(spatio_temporal_rmse(&[v(&[3.0])], &[v(&[0.0])]).unwrap(), 3.0);
        assert!(spatio_temporal_rmse(&t[..1], &t).is_err());
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(96);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert_relative_eq!(s, 2.0 / 11.0, epsilon = 1e-14);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-13);
    }
}
