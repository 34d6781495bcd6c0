//! Adam optimizer and the triangular step-size schedule.

/// Moment accumulators for a list of parameter tensors.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.95;
    pub const EPS: f64 = 1e-8;

    /// Accumulators shaped like `shapes` (tensor lengths).
    pub fn new(shapes: &[usize]) -> Self {
        Self {
            beta1: Self::BETA1,
            beta2: Self::BETA2,
            eps: Self::EPS,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn shapes(&self) -> Vec<usize> {
        self.m.iter().map(Vec::len).collect()
    }

    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for (t, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[t], &mut self.v[t]);
            assert_eq!(p.len(), m.len());
            for k in 0..p.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Piecewise-linear step size rising from `min` to `max` and back over
/// each `period` epochs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriangularSchedule {
    pub min: f64,
    pub max: f64,
    pub period: usize,
}

impl Default for TriangularSchedule {
    fn default() -> Self {
        Self {
            min: 1e-4,
            max: 1e-2,
            period: 500,
        }
    }
}

impl TriangularSchedule {
    pub fn rate(&self, epoch: usize) -> f64 {
        let period = self.period.max(1);
        let frac = (epoch % period) as f64 / period as f64;
        let tri = 1.0 - (2.0 * frac - 1.0).abs();
        self.min + (self.max - self.min) * tri
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_step_size() {
        for &g in &[3.0, -0.2, 1e-3] {
            let mut adam = AdamState::new(&[1]);
            let mut p = [1.0];
            adam.update(&mut [&mut p[..]], &[&[g][..]], 0.01);
            let expected = 1.0 - 0.01 * g / (g.abs() + 1e-8);
            assert!((p[0] - expected).abs() < 1e-15);
            assert!(((1.0 - p[0]).abs() - 0.01).abs() < 1e-7);
        }
    }

    #[test]
    fn constant_gradient_keeps_unit_steps() {
        let mut adam = AdamState::new(&[2]);
        let mut p = [0.0, 0.0];
        for _ in 0..50 {
            adam.update(&mut [&mut p[..]], &[&[1.0, -4.0][..]], 1e-3);
        }
        assert!((p[0] + 0.05).abs() < 1e-6);
        assert!((p[1] - 0.05).abs() < 1e-6);
        assert_eq!(adam.step_count(), 50);
    }

    #[test]
    fn schedule_shape() {
        let s = TriangularSchedule::default();
        assert_eq!(s.rate(0), 1e-4);
        assert!((s.rate(250) - 1e-2).abs() < 1e-15);
        assert!((s.rate(125) - (1e-4 + 0.5 * (1e-2 - 1e-4))).abs() < 1e-15);
        assert_eq!(s.rate(500), 1e-4);
        let mut prev = s.rate(0);
        for e in 1..3000 {
            let r = s.rate(e);
            assert!((1e-4..=1e-2).contains(&r));
            // continuity: consecutive epochs differ by at most one slope step
            assert!((r - prev).abs() <= (1e-2 - 1e-4) / 250.0 + 1e-15);
            prev = r;
        }
    }
}
