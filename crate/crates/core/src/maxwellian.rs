use crate::error::{invalid, Result};
use crate::rng::{self, SimRng};
use crate::ParticleEnsemble;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Gaussian equilibrium with bulk velocity `u0` and temperature `theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Maxwellian {
    u0: Vec<f64>,
    theta: f64,
}

impl Maxwellian {
    pub fn new(u0: Vec<f64>, theta: f64) -> Result<Self> {
        if u0.len() < 2 {
            return invalid(format!("dimension must be at least 2, got {}", u0.len()));
        }
        if !(theta > 0.0 && theta.is_finite()) {
            return invalid(format!("temperature must be positive and finite, got {theta}"));
        }
        if u0.iter().any(|x| !x.is_finite()) {
            return invalid("bulk velocity must be finite");
        }
        Ok(Maxwellian { u0, theta })
    }

    /// Centered Maxwellian in `dim` dimensions.
    pub fn standard(dim: usize, theta: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], theta)
    }

    pub fn dim(&self) -> usize {
        self.u0.len()
    }

    pub fn u0(&self) -> &[f64] {
        &self.u0
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// `|v - u0|^2`.
    pub fn dist2(&self, v: &[f64]) -> f64 {
        v.iter().zip(&self.u0).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn log_norm(&self) -> f64 {
        -0.5 * self.dim() as f64 * (2.0 * PI * self.theta).ln()
    }

    pub fn ln_eval(&self, v: &[f64]) -> f64 {
        self.log_norm() - self.dist2(v) / (2.0 * self.theta)
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        self.ln_eval(v).exp()
    }

    /// Draw one velocity into `out`.
    pub fn sample_into(&self, rng: &mut SimRng, out: &mut [f64]) {
        let s = self.theta.sqrt();
        for (o, u) in out.iter_mut().zip(&self.u0) {
            *o = u + s * rng::normal(rng);
        }
    }

    /// `n` independent samples, reproducible from `seed`.
    pub fn sample(&self, seed: u64, n: usize) -> Result<ParticleEnsemble> {
        if n == 0 {
            return invalid("ensemble size must be at least 1");
        }
        let d = self.dim();
        let mut rng = rng::stream(seed, 0);
        let mut data = vec![0.0; n * d];
        for chunk in data.chunks_mut(d) {
            self.sample_into(&mut rng, chunk);
        }
        ParticleEnsemble::new(d, data, seed)
    }

    /// Same Maxwellian with temperature `theta / mu^2` and bulk velocity
    /// `u0 / mu`, i.e. the image under `v -> v / mu`.
    pub fn scaled(&self, mu: f64) -> Result<Self> {
        Self::new(self.u0.iter().map(|u| u / mu).collect(), self.theta / (mu * mu))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_values() {
        let m = Maxwellian::standard(3, 1.0).unwrap();
        assert!((m.eval(&[0.0; 3]) - (2.0 * PI).powf(-1.5)).abs() < 1e-15);
        assert!((m.eval(&[0.0; 3]) - 0.063_493_6).abs() < 1e-7);
        assert_eq!(m.eval(&[1e3, 0.0, 0.0]), 0.0);
        let m2 = Maxwellian::new(vec![1.0, 0.0], 2.0).unwrap();
        assert!((m2.eval(&[1.0, 0.0]) - 1.0 / (4.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Maxwellian::new(vec![0.0], 1.0).is_err());
        assert!(Maxwellian::new(vec![0.0, 0.0], 0.0).is_err());
        assert!(Maxwellian::new(vec![0.0, f64::NAN], 1.0).is_err());
    }

    #[test]
    fn unit_mass_by_quadrature() {
        let m = Maxwellian::new(vec![0.3, -0.2], 1.7).unwrap();
        let n = 200;
        let l = 8.0 * m.theta().sqrt();
        let h = 2.0 * l / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                let v = [0.3 - l + (i as f64 + 0.5) * h, -0.2 - l + (j as f64 + 0.5) * h];
                s += m.eval(&v);
            }
        }
        assert!((s * h * h - 1.0).abs() < 1e-10);
    }

    #[test]
    fn sampling_moments_and_determinism() {
        let m = Maxwellian::standard(3, 1.0).unwrap();
        let n = 1_000_000;
        let e = m.sample(7, n).unwrap();
        let mean = e.mean();
        for c in &mean {
            assert!(c.abs() < 4.0 / (n as f64).sqrt());
        }
        let tr: f64 = e.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>()).sum::<f64>() / n as f64;
        assert!((tr / 3.0 - 1.0).abs() < 0.01);
        let again = m.sample(7, 1000).unwrap();
        assert_eq!(again.data(), m.sample(7, 1000).unwrap().data());
    }
}
