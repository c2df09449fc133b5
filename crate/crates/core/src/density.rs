//! Continuous probability densities used as test data: isotropic Gaussians,
//! Gaussian mixtures, and the named suites built from them.

use crate::error::{invalid, Result};
use crate::rng::{self, SimRng};
use crate::Maxwellian;
use rand::Rng;
use std::f64::consts::PI;

/// A density that can be evaluated pointwise and sampled.
pub trait Density: Send + Sync {
    fn dim(&self) -> usize;
    fn ln_pdf(&self, v: &[f64]) -> f64;
    fn sample_into(&self, rng: &mut SimRng, out: &mut [f64]);
    fn label(&self) -> String;

    fn pdf(&self, v: &[f64]) -> f64 {
        self.ln_pdf(v).exp()
    }

    /// `ln(f(v)/M(v))`.
    fn ln_ratio(&self, v: &[f64], m: &Maxwellian) -> f64 {
        self.ln_pdf(v) - m.ln_eval(v)
    }
}

impl Density for Maxwellian {
    fn dim(&self) -> usize {
        Maxwellian::dim(self)
    }

    fn ln_pdf(&self, v: &[f64]) -> f64 {
        self.ln_eval(v)
    }

    fn sample_into(&self, rng: &mut SimRng, out: &mut [f64]) {
        Maxwellian::sample_into(self, rng, out)
    }

    fn label(&self) -> String {
        format!("maxwellian(theta={})", self.theta())
    }

    fn ln_ratio(&self, v: &[f64], m: &Maxwellian) -> f64 {
        if self == m {
            0.0
        } else {
            self.ln_eval(v) - m.ln_eval(v)
        }
    }
}

/// Isotropic Gaussian `N(mean, var·I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: Vec<f64>,
    pub var: f64,
}

impl Gaussian {
    pub fn new(mean: Vec<f64>, var: f64) -> Result<Self> {
        if !(var > 0.0 && var.is_finite()) {
            return invalid(format!("Gaussian variance must be positive, got {var}"));
        }
        if mean.len() < 2 {
            return invalid("Gaussian dimension must be at least 2");
        }
        Ok(Gaussian { mean, var })
    }

    /// Mean `u0 + shift·√θ·e₁`, variance `ratio·θ`.
    pub fn relative_to(m: &Maxwellian, shift: f64, ratio: f64) -> Result<Self> {
        let mut mean = m.u0().to_vec();
        mean[0] += shift * m.theta().sqrt();
        Self::new(mean, ratio * m.theta())
    }

    fn dist2(&self, v: &[f64]) -> f64 {
        v.iter().zip(&self.mean).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    /// `H(f|M) = (d/2)(τ/θ − 1 − ln(τ/θ)) + |m − u0|²/(2θ)`.
    pub fn relative_entropy(&self, m: &Maxwellian) -> f64 {
        let d = self.mean.len() as f64;
        let r = self.var / m.theta();
        0.5 * d * (r - 1.0 - r.ln()) + m.dist2(&self.mean) / (2.0 * m.theta())
    }

    /// `I(f|M) = ∫ f |∇ ln(f/M)|² = |m − u0|²/θ² + d(τ − θ)²/(τθ²)`.
    pub fn relative_fisher(&self, m: &Maxwellian) -> f64 {
        let d = self.mean.len() as f64;
        let th = m.theta();
        m.dist2(&self.mean) / (th * th) + d * (self.var - th).powi(2) / (self.var * th * th)
    }

    /// `∫ (f/M − 1)² M`; infinite when `τ ≥ 2θ`.
    pub fn chi_square(&self, m: &Maxwellian) -> f64 {
        let (tau, th) = (self.var, m.theta());
        let a = 1.0 / tau - 0.5 / th;
        if a <= 0.0 {
            return f64::INFINITY;
        }
        let mut ln_prod = 0.0;
        for (mu, u) in self.mean.iter().zip(m.u0()) {
            let c = mu - u;
            // ∫ N(c,τ)² / N(0,θ) dx in one variable
            let b = 2.0 * c / tau;
            ln_prod += -(2.0 * PI * tau).ln() + 0.5 * (2.0 * PI * th).ln() + 0.5 * (PI / a).ln() + b * b / (4.0 * a)
                - c * c / tau;
        }
        ln_prod.exp() - 1.0
    }
}

impl Density for Gaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn ln_pdf(&self, v: &[f64]) -> f64 {
        -0.5 * self.mean.len() as f64 * (2.0 * PI * self.var).ln() - self.dist2(v) / (2.0 * self.var)
    }

    fn sample_into(&self, rng: &mut SimRng, out: &mut [f64]) {
        let s = self.var.sqrt();
        for (o, m) in out.iter_mut().zip(&self.mean) {
            *o = m + s * rng::normal(rng);
        }
    }

    fn label(&self) -> String {
        format!("gaussian(mean={:?},var={})", self.mean, self.var)
    }
}

/// Finite mixture of isotropic Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    weights: Vec<f64>,
    components: Vec<Gaussian>,
}

impl Mixture {
    pub fn new(weights: Vec<f64>, components: Vec<Gaussian>) -> Result<Self> {
        if weights.len() != components.len() || weights.is_empty() {
            return invalid("mixture needs one positive weight per component");
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return invalid("mixture weights must be positive");
        }
        let d = components[0].dim();
        if components.iter().any(|c| c.dim() != d) {
            return invalid("mixture components must share a dimension");
        }
        let s: f64 = weights.iter().sum();
        Ok(Mixture { weights: weights.iter().map(|w| w / s).collect(), components })
    }

    pub fn components(&self) -> impl Iterator<Item = (f64, &Gaussian)> {
        self.weights.iter().copied().zip(&self.components)
    }
}

impl Density for Mixture {
    fn dim(&self) -> usize {
        self.components[0].dim()
    }

    fn ln_pdf(&self, v: &[f64]) -> f64 {
        let logs: Vec<f64> = self.components().map(|(w, c)| w.ln() + c.ln_pdf(v)).collect();
        let mx = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        mx + logs.iter().map(|l| (l - mx).exp()).sum::<f64>().ln()
    }

    fn sample_into(&self, rng: &mut SimRng, out: &mut [f64]) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (w, c) in self.components() {
            acc += w;
            if u < acc {
                return c.sample_into(rng, out);
            }
        }
        self.components.last().expect("nonempty").sample_into(rng, out)
    }

    fn label(&self) -> String {
        format!("mixture({} components)", self.components.len())
    }
}

/// A density with a known closed-form test story.
#[derive(Debug, Clone, PartialEq)]
pub enum TestDensity {
    Gaussian(Gaussian),
    Mixture(Mixture),
}

impl TestDensity {
    pub fn as_density(&self) -> &dyn Density {
        match self {
            TestDensity::Gaussian(g) => g,
            TestDensity::Mixture(m) => m,
        }
    }

    pub fn as_gaussian(&self) -> Option<&Gaussian> {
        match self {
            TestDensity::Gaussian(g) => Some(g),
            TestDensity::Mixture(_) => None,
        }
    }

    /// Image under the scaling `f_μ(v) = μ^d f(μ v)`.
    pub fn scaled(&self, mu: f64) -> Result<Self> {
        let sg = |g: &Gaussian| Gaussian::new(g.mean.iter().map(|x| x / mu).collect(), g.var / (mu * mu));
        Ok(match self {
            TestDensity::Gaussian(g) => TestDensity::Gaussian(sg(g)?),
            TestDensity::Mixture(m) => TestDensity::Mixture(Mixture::new(
                m.weights.clone(),
                m.components.iter().map(sg).collect::<Result<Vec<_>>>()?,
            )?),
        })
    }
}

/// Named family of test densities relative to a Maxwellian.
#[derive(Debug, Clone)]
pub struct DensitySuite {
    pub name: String,
    pub entries: Vec<(String, TestDensity)>,
}

/// Suite presets.
pub const SUITE_PRESETS: [&str; 5] = ["default", "shifted-gaussian", "temperature-ratio", "bimodal", "products"];

impl DensitySuite {
    pub fn shifted_gaussians(m: &Maxwellian) -> Result<Self> {
        let entries = [0.5, 1.0, 2.0]
            .iter()
            .map(|&s| Ok((format!("shift{s}"), TestDensity::Gaussian(Gaussian::relative_to(m, s, 1.0)?))))
            .collect::<Result<_>>()?;
        Ok(DensitySuite { name: "shifted-gaussian".into(), entries })
    }

    pub fn temperature_ratios(m: &Maxwellian) -> Result<Self> {
        let entries = [0.5, 0.8, 1.5, 2.0]
            .iter()
            .map(|&r| Ok((format!("temp{r}"), TestDensity::Gaussian(Gaussian::relative_to(m, 0.0, r)?))))
            .collect::<Result<_>>()?;
        Ok(DensitySuite { name: "temperature-ratio".into(), entries })
    }

    pub fn bimodal(m: &Maxwellian) -> Result<Self> {
        let sym = Mixture::new(
            vec![0.5, 0.5],
            vec![Gaussian::relative_to(m, 1.0, 1.0)?, Gaussian::relative_to(m, -1.0, 1.0)?],
        )?;
        let asym = Mixture::new(
            vec![1.0, 2.0],
            vec![Gaussian::relative_to(m, 2.0, 0.5)?, Gaussian::relative_to(m, -1.0, 0.8)?],
        )?;
        Ok(DensitySuite {
            name: "bimodal".into(),
            entries: vec![
                ("bimodal-sym".into(), TestDensity::Mixture(sym)),
                ("bimodal-asym".into(), TestDensity::Mixture(asym)),
            ],
        })
    }

    /// Shift and temperature change combined.
    pub fn products(m: &Maxwellian) -> Result<Self> {
        let entries = [(0.5, 2.0), (1.0, 0.8), (2.0, 0.5)]
            .iter()
            .map(|&(s, r)| {
                Ok((format!("shift{s}-temp{r}"), TestDensity::Gaussian(Gaussian::relative_to(m, s, r)?)))
            })
            .collect::<Result<_>>()?;
        Ok(DensitySuite { name: "products".into(), entries })
    }

    /// The twelve-density default suite.
    pub fn default_suite(m: &Maxwellian) -> Result<Self> {
        let mut entries = Vec::new();
        for s in [
            Self::shifted_gaussians(m)?,
            Self::temperature_ratios(m)?,
            Self::bimodal(m)?,
            Self::products(m)?,
        ] {
            entries.extend(s.entries);
        }
        Ok(DensitySuite { name: "default".into(), entries })
    }

    pub fn preset(name: &str, m: &Maxwellian) -> Result<Self> {
        match name {
            "default" => Self::default_suite(m),
            "shifted-gaussian" => Self::shifted_gaussians(m),
            "temperature-ratio" => Self::temperature_ratios(m),
            "bimodal" => Self::bimodal(m),
            "products" => Self::products(m),
            other => invalid(format!("unknown density suite `{other}`; expected one of {SUITE_PRESETS:?}")),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
