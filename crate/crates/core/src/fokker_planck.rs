//! Grazing-limit structures for three-dimensional velocities: the diffusion
//! matrices `D_γ(v) = (1/8) ∫ |v − v*|^γ S(v, v*) M(v*) dv*`, the dissipation
//! functional `J_γ`, the closed forms behind `D₁` and its curvature condition,
//! and a radial Fokker-Planck solver for `γ = 0`.
//!
//! The closed forms are combinations `e^{−x²} P(x) + (√π erf(x)/x) Q(x)` with
//! Laurent polynomials `P`, `Q`. Individual terms blow up like `x^{−6}` at the
//! origin while the sum stays smooth, so below [`SERIES_SWITCH`] they are
//! evaluated from their power series instead.

use crate::error::{invalid, Error, Result};
use crate::functionals::{clamp_ln, grid_gradient, FunctionalReport, Method};
use crate::rng;
use crate::simulate::{SimulationTrace, TraceMeta, TracePoint};
use crate::{Density, GridDensity, Maxwellian};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::OnceLock;

/// Below this argument the erf/exp forms are evaluated by power series.
pub const SERIES_SWITCH: f64 = 0.5;

const SERIES_TERMS: usize = 40;

// ---------------------------------------------------------------------------
// erf/exp forms

#[derive(Debug, Clone, Default, PartialEq)]
struct Laurent(BTreeMap<i32, f64>);

impl Laurent {
    fn from(terms: &[(i32, f64)]) -> Self {
        let mut l = Laurent::default();
        for &(k, c) in terms {
            l.add_term(k, c);
        }
        l
    }

    fn add_term(&mut self, k: i32, c: f64) {
        if c != 0.0 {
            *self.0.entry(k).or_insert(0.0) += c;
        }
    }

    fn add(&self, other: &Laurent, s: f64) -> Laurent {
        let mut out = self.clone();
        for (&k, &c) in &other.0 {
            out.add_term(k, s * c);
        }
        out
    }

    fn shift(&self, by: i32) -> Laurent {
        Laurent(self.0.iter().map(|(&k, &c)| (k + by, c)).collect())
    }

    fn derivative(&self) -> Laurent {
        let mut out = Laurent::default();
        for (&k, &c) in &self.0 {
            out.add_term(k - 1, k as f64 * c);
        }
        out
    }

    fn eval(&self, x: f64) -> f64 {
        self.0.iter().map(|(&k, &c)| c * x.powi(k)).sum()
    }
}

/// `e^{−x²} p(x) + E(x) q(x)` with `E(x) = √π erf(x)/x`.
#[derive(Debug, Clone)]
struct ErfExpForm {
    p: Laurent,
    q: Laurent,
    /// Taylor coefficients at 0, index = power.
    series: Vec<f64>,
    /// Largest coefficient of a negative power left over in the series
    /// (zero up to rounding for forms that are smooth at the origin).
    #[cfg_attr(not(test), allow(dead_code))]
    singular_residue: f64,
}

impl ErfExpForm {
    fn new(p: Laurent, q: Laurent) -> Self {
        let kmin = p.0.keys().chain(q.0.keys()).copied().min().unwrap_or(0);
        let top = kmin + 2 * SERIES_TERMS as i32;
        let mut coeffs: BTreeMap<i32, f64> = BTreeMap::new();
        let mut fact = 1.0;
        for n in 0..SERIES_TERMS {
            if n > 0 {
                fact *= n as f64;
            }
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let ce = sign / fact;
            let cq = 2.0 * sign / (fact * (2 * n + 1) as f64);
            for (&k, &c) in &p.0 {
                let pow = k + 2 * n as i32;
                if pow < top {
                    *coeffs.entry(pow).or_insert(0.0) += c * ce;
                }
            }
            for (&k, &c) in &q.0 {
                let pow = k + 2 * n as i32;
                if pow < top {
                    *coeffs.entry(pow).or_insert(0.0) += c * cq;
                }
            }
        }
        let singular_residue = coeffs.range(..0).map(|(_, c)| c.abs()).fold(0.0, f64::max);
        let max_pow = coeffs.keys().copied().max().unwrap_or(0).max(0) as usize;
        let mut series = vec![0.0; max_pow + 1];
        for (&k, &c) in coeffs.range(0..) {
            series[k as usize] = c;
        }
        ErfExpForm { p, q, series, singular_residue }
    }

    fn derivative(&self) -> Self {
        // (p e)' = (p' − 2x p) e,  (q E)' = (q' − q/x) E + (2q/x) e
        let dp = self.p.derivative().add(&self.p.shift(1), -2.0).add(&self.q.shift(-1), 2.0);
        let dq = self.q.derivative().add(&self.q.shift(-1), -1.0);
        ErfExpForm::new(dp, dq)
    }

    /// `Σ s_k x^{m_k} F_k` for forms `F_k`.
    fn combine(terms: &[(f64, i32, &ErfExpForm)]) -> Self {
        let mut p = Laurent::default();
        let mut q = Laurent::default();
        for &(s, m, f) in terms {
            p = p.add(&f.p.shift(m), s);
            q = q.add(&f.q.shift(m), s);
        }
        ErfExpForm::new(p, q)
    }

    fn eval(&self, x: f64) -> f64 {
        let x = x.abs();
        if x < SERIES_SWITCH {
            self.series.iter().rev().fold(0.0, |acc, c| acc * x + c)
        } else {
            (-x * x).exp() * self.p.eval(x) + PI.sqrt() * libm::erf(x) / x * self.q.eval(x)
        }
    }

    fn eval_direct(&self, x: f64) -> f64 {
        (-x * x).exp() * self.p.eval(x) + PI.sqrt() * libm::erf(x) / x * self.q.eval(x)
    }
}

// ---------------------------------------------------------------------------
// C, T, A, B

struct Forms {
    c: ErfExpForm,
    c1: ErfExpForm,
    c2: ErfExpForm,
    t: ErfExpForm,
    a: ErfExpForm,
    /// `C'' − (2x + 1/x) C'`; `B` adds `C'²/(4C)`.
    b_lin: ErfExpForm,
    moment_scalar: ErfExpForm,
    moment_iso: ErfExpForm,
}

fn forms() -> &'static Forms {
    static FORMS: OnceLock<Forms> = OnceLock::new();
    FORMS.get_or_init(|| {
        let c = ErfExpForm::new(
            Laurent::from(&[(0, 1.0), (-2, 0.5)]),
            Laurent::from(&[(2, 1.0), (0, 1.0), (-2, -0.25)]),
        );
        let t = ErfExpForm::new(
            Laurent::from(&[(2, 1.0), (0, 1.0), (-2, -0.75)]),
            Laurent::from(&[(4, 1.0), (2, 1.5), (0, -0.75), (-2, 0.375)]),
        );
        let c1 = c.derivative();
        let c2 = c1.derivative();
        let a = ErfExpForm::combine(&[(0.5, 0, &c2), (-1.0, 1, &c1), (-1.0, -1, &c1), (2.0, 0, &c)]);
        let b_lin = ErfExpForm::combine(&[(1.0, 0, &c2), (-2.0, 1, &c1), (-1.0, -1, &c1)]);
        let moment_scalar = ErfExpForm::new(
            Laurent::from(&[(2, 1.0), (0, 2.5)]),
            Laurent::from(&[(4, 1.0), (2, 3.0), (0, 0.75)]),
        );
        let moment_iso = ErfExpForm::new(
            Laurent::from(&[(0, 0.5), (-2, 0.25)]),
            Laurent::from(&[(2, 0.5), (0, 0.5), (-2, -0.125)]),
        );
        Forms { c, c1, c2, t, a, b_lin, moment_scalar, moment_iso }
    })
}

/// Scalar profiles of `D₁` and of its curvature condition, as functions of
/// `x = γ_B^{1/2} |a|` with `γ_B = 1/(2θ)` and `a = u0 − v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppendixBFunctions {
    gamma_b: f64,
}

impl AppendixBFunctions {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return invalid(format!("theta must be positive, got {theta}"));
        }
        Ok(AppendixBFunctions { gamma_b: 0.5 / theta })
    }

    pub fn gamma_b(&self) -> f64 {
        self.gamma_b
    }

    /// `x = γ_B^{1/2} |u0 − v|`.
    pub fn x_of(&self, m: &Maxwellian, v: &[f64]) -> f64 {
        (self.gamma_b * m.dist2(v)).sqrt()
    }

    pub fn c(&self, x: f64) -> f64 {
        forms().c.eval(x)
    }

    pub fn c_prime(&self, x: f64) -> f64 {
        forms().c1.eval(x)
    }

    pub fn c_second(&self, x: f64) -> f64 {
        forms().c2.eval(x)
    }

    pub fn t(&self, x: f64) -> f64 {
        forms().t.eval(x)
    }

    /// `A = ½C'' − (x + 1/x)C' + 2C`.
    pub fn a(&self, x: f64) -> f64 {
        forms().a.eval(x)
    }

    /// `B = C'' − (2x + 1/x)C' + C'²/(4C)`.
    pub fn b(&self, x: f64) -> f64 {
        let f = forms();
        let c1 = f.c1.eval(x);
        f.b_lin.eval(x) + 0.25 * c1 * c1 / f.c.eval(x)
    }

    pub fn a_minus_b(&self, x: f64) -> f64 {
        self.a(x) - self.b(x)
    }

    /// Largest jump between series and direct evaluation of `C, T, A, A − B`
    /// at the switch point.
    pub fn seam_jump(&self) -> f64 {
        let f = forms();
        let x = SERIES_SWITCH;
        let below = x * (1.0 - f64::EPSILON);
        let b_direct = |x: f64| {
            let c1 = f.c1.eval_direct(x);
            f.b_lin.eval_direct(x) + 0.25 * c1 * c1 / f.c.eval_direct(x)
        };
        [
            (f.c.eval(below) - f.c.eval_direct(x)).abs(),
            (f.t.eval(below) - f.t.eval_direct(x)).abs(),
            (f.a.eval(below) - f.a.eval_direct(x)).abs(),
            (self.b(below) - b_direct(x)).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// The two Gaussian moments behind `D₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    /// `∫ |w|³ e^{−γ|w + a|²} dw`.
    pub scalar: f64,
    /// `∫ |w| w ⊗ w e^{−γ|w + a|²} dw`.
    pub matrix: DMatrix<f64>,
}

/// Closed forms of the moments in `R³`; `a = 0` is handled by the series.
pub fn appendix_b_moments(a: &[f64], gamma_b: f64) -> Result<GaussianMoments> {
    if a.len() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, got: a.len() });
    }
    if !(gamma_b > 0.0 && gamma_b.is_finite()) {
        return invalid(format!("gamma_B must be positive, got {gamma_b}"));
    }
    let f = forms();
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let x = gamma_b.sqrt() * norm;
    let pre = PI / gamma_b.powi(3);
    let iso = f.moment_iso.eval(x);
    // the â⊗â coefficient coincides with T
    let aniso = f.t.eval(x);
    let mut matrix = DMatrix::from_diagonal_element(3, 3, pre * iso);
    if norm > 0.0 {
        for i in 0..3 {
            for j in 0..3 {
                matrix[(i, j)] += pre * aniso * a[i] * a[j] / (norm * norm);
            }
        }
    }
    Ok(GaussianMoments { scalar: pre * f.moment_scalar.eval(x), matrix })
}

// ---------------------------------------------------------------------------
// diffusion matrices

/// `S(v, w) = |v − w|² I − (v − w) ⊗ (v − w)`.
pub fn s_matrix(v: &[f64], w: &[f64]) -> DMatrix<f64> {
    let d = v.len();
    let z: Vec<f64> = v.iter().zip(w).map(|(a, b)| a - b).collect();
    let z2: f64 = z.iter().map(|x| x * x).sum();
    DMatrix::from_fn(d, d, |i, j| if i == j { z2 } else { 0.0 } - z[i] * z[j])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiffusionGamma {
    Zero,
    One,
    /// Any `γ ≥ 0`, evaluated by Monte Carlo only.
    Generic(f64),
}

impl DiffusionGamma {
    pub fn value(&self) -> f64 {
        match self {
            DiffusionGamma::Zero => 0.0,
            DiffusionGamma::One => 1.0,
            DiffusionGamma::Generic(g) => *g,
        }
    }
}

/// `v ↦ D_γ(v)` for a fixed background Maxwellian.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionMatrix {
    gamma: DiffusionGamma,
    m: Maxwellian,
    mc_samples: u64,
    mc_seed: u64,
}

/// Smallest eigenvalue tolerated by the PSD check.
pub const PSD_TOLERANCE: f64 = -1e-10;

impl DiffusionMatrix {
    pub fn new(gamma: DiffusionGamma, m: Maxwellian) -> Result<Self> {
        match gamma {
            DiffusionGamma::One if m.dim() != 3 => {
                return invalid(format!("the closed form of D_1 is three-dimensional, got d = {}", m.dim()))
            }
            DiffusionGamma::Generic(g) if !(g >= 0.0 && g.is_finite()) => {
                return invalid(format!("gamma must be a finite number >= 0, got {g}"))
            }
            _ => {}
        }
        Ok(DiffusionMatrix { gamma, m, mc_samples: 1_000_000, mc_seed: 0 })
    }

    /// Sample count and seed for the Monte Carlo path of `Generic`.
    pub fn with_mc(mut self, samples: u64, seed: u64) -> Self {
        self.mc_samples = samples;
        self.mc_seed = seed;
        self
    }

    pub fn gamma(&self) -> DiffusionGamma {
        self.gamma
    }

    pub fn maxwellian(&self) -> &Maxwellian {
        &self.m
    }

    pub fn is_closed_form(&self) -> bool {
        !matches!(self.gamma, DiffusionGamma::Generic(_))
    }

    pub fn eval(&self, v: &[f64]) -> Result<DMatrix<f64>> {
        match self.gamma {
            DiffusionGamma::Zero => diffusion_matrix_closed(0, &self.m, v),
            DiffusionGamma::One => diffusion_matrix_closed(1, &self.m, v),
            DiffusionGamma::Generic(g) => Ok(diffusion_matrix_mc(g, &self.m, v, self.mc_samples, self.mc_seed)?.matrix),
        }
    }

    /// Smallest eigenvalue of `D_γ(v)`; errors if below [`PSD_TOLERANCE`]
    /// or if the matrix is not symmetric.
    pub fn check_psd(&self, v: &[f64]) -> Result<f64> {
        let d = self.eval(v)?;
        let asym = (&d - d.transpose()).amax();
        if asym > 1e-12 * d.amax().max(1.0) {
            return Err(Error::Numerical(format!("D(v) not symmetric (defect {asym:e})")));
        }
        let lmin = min_eigenvalue(&d);
        if lmin < PSD_TOLERANCE {
            return Err(Error::Numerical(format!("D(v) has eigenvalue {lmin:e} at v = {v:?}")));
        }
        Ok(lmin)
    }
}

pub fn min_eigenvalue(d: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(d.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Closed-form `D₀` (any dimension) or `D₁` (`d = 3`).
///
/// `D₀(v) = (1/8)(S(v, u0) + (d − 1)θ I)`;
/// `D₁(v) = (8√π γ_B^{3/2})⁻¹ {C(x) I + T(x)(I − â ⊗ â)}` with `a = u0 − v`.
pub fn diffusion_matrix_closed(gamma: u8, m: &Maxwellian, v: &[f64]) -> Result<DMatrix<f64>> {
    let d = m.dim();
    if v.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: v.len() });
    }
    let theta = m.theta();
    match gamma {
        0 => {
            let mut s = s_matrix(v, m.u0());
            for i in 0..d {
                s[(i, i)] += (d - 1) as f64 * theta;
            }
            Ok(s / 8.0)
        }
        1 => {
            if d != 3 {
                return invalid(format!("the closed form of D_1 is three-dimensional, got d = {d}"));
            }
            let fb = AppendixBFunctions::new(theta)?;
            let gb = fb.gamma_b();
            let a: Vec<f64> = m.u0().iter().zip(v).map(|(u, x)| u - x).collect();
            let norm2: f64 = a.iter().map(|x| x * x).sum();
            let x = (gb * norm2).sqrt();
            let pre = 1.0 / (8.0 * PI.sqrt() * gb.powf(1.5));
            let (c, t) = (fb.c(x), fb.t(x));
            Ok(DMatrix::from_fn(3, 3, |i, j| {
                let id = if i == j { 1.0 } else { 0.0 };
                let proj = if norm2 > 0.0 { a[i] * a[j] / norm2 } else { id / 3.0 };
                pre * (c * id + t * (id - proj))
            }))
        }
        g => invalid(format!("closed forms exist for gamma 0 and 1, got {g}")),
    }
}

/// Monte Carlo estimate with its entrywise standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixEstimate {
    pub matrix: DMatrix<f64>,
    pub std_error: DMatrix<f64>,
    pub samples: u64,
}

impl MatrixEstimate {
    /// Largest `|self − other| / std_error` over entries; entries whose
    /// standard error is below `floor` are compared against `floor`.
    pub fn max_z(&self, other: &DMatrix<f64>, floor: f64) -> f64 {
        self.matrix
            .iter()
            .zip(other.iter())
            .zip(self.std_error.iter())
            .map(|((a, b), s)| (a - b).abs() / s.max(floor))
            .fold(0.0, f64::max)
    }
}

/// `(1/8) E[|v − v*|^γ S(v, v*)]` over `v* ~ M`.
///
/// Uses regression control variates with exactly known Gaussian means
/// (`|w|²`, `|w|⁴`, `w_i w_j`, `|w|² w_i w_j` for `w = v − v*`), which cuts
/// the variance by one to two orders of magnitude and leaves the estimator
/// consistent for every `γ`.
pub fn diffusion_matrix_mc(gamma: f64, m: &Maxwellian, v: &[f64], samples: u64, seed: u64) -> Result<MatrixEstimate> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return invalid(format!("gamma must be a finite number >= 0, got {gamma}"));
    }
    if v.len() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), got: v.len() });
    }
    let mean: Vec<f64> = v.iter().zip(m.u0()).map(|(a, b)| a - b).collect();
    let est = gaussian_matrix_mc(&mean, m.theta(), samples, seed, |r2, wi, wj, diag| {
        let r = r2.sqrt();
        let rg = if gamma == 0.0 { 1.0 } else { r.powf(gamma) };
        rg * (if diag { r2 } else { 0.0 } - wi * wj) / 8.0
    })?;
    Ok(est)
}

/// Monte Carlo oracles of the two moments, each with its standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub scalar: f64,
    pub scalar_std_error: f64,
    pub matrix: MatrixEstimate,
}

/// `∫ |w|³ e^{−γ|w+a|²}` and `∫ |w| w⊗w e^{−γ|w+a|²}` as `(π/γ)^{3/2}`
/// times expectations over `w ~ N(−a, I/(2γ))`.
pub fn appendix_b_moments_mc(a: &[f64], gamma_b: f64, samples: u64, seed: u64) -> Result<MomentEstimate> {
    if a.len() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, got: a.len() });
    }
    if !(gamma_b > 0.0 && gamma_b.is_finite()) {
        return invalid(format!("gamma_B must be positive, got {gamma_b}"));
    }
    let mean: Vec<f64> = a.iter().map(|x| -x).collect();
    let var = 0.5 / gamma_b;
    let scale = (PI / gamma_b).powf(1.5);
    let mut matrix = gaussian_matrix_mc(&mean, var, samples, seed, |r2, wi, wj, _| r2.sqrt() * wi * wj)?;
    matrix.matrix *= scale;
    matrix.std_error *= scale;
    // tr(|w| w⊗w) = |w|³; the trace of the matrix estimate carries its own
    // control variates, so a separate scalar run with different seed is used
    let scalar = gaussian_matrix_mc(&mean, var, samples, seed ^ 0x5ca1a7, |r2, _, _, diag| {
        if diag {
            r2 * r2.sqrt() / 3.0
        } else {
            0.0
        }
    })?;
    let s = scalar.matrix.trace() * scale;
    let se = (0..3).map(|i| scalar.std_error[(i, i)].powi(2)).sum::<f64>().sqrt() * scale;
    Ok(MomentEstimate { scalar: s, scalar_std_error: se, matrix })
}

const MC_BATCHES: u64 = 64;

#[derive(Debug, Clone)]
struct CvAcc {
    k: usize,
    n: f64,
    sg: f64,
    sgg: f64,
    sc: Vec<f64>,
    sgc: Vec<f64>,
    scc: Vec<f64>,
}

impl CvAcc {
    fn new(k: usize) -> Self {
        CvAcc { k, n: 0.0, sg: 0.0, sgg: 0.0, sc: vec![0.0; k], sgc: vec![0.0; k], scc: vec![0.0; k * k] }
    }

    /// `c` are controls already centred at their exact means.
    fn push(&mut self, g: f64, c: &[f64]) {
        self.n += 1.0;
        self.sg += g;
        self.sgg += g * g;
        for a in 0..self.k {
            self.sc[a] += c[a];
            self.sgc[a] += g * c[a];
            for b in 0..self.k {
                self.scc[a * self.k + b] += c[a] * c[b];
            }
        }
    }

    fn merge(&mut self, o: &CvAcc) {
        self.n += o.n;
        self.sg += o.sg;
        self.sgg += o.sgg;
        for (x, y) in self.sc.iter_mut().zip(&o.sc) {
            *x += y;
        }
        for (x, y) in self.sgc.iter_mut().zip(&o.sgc) {
            *x += y;
        }
        for (x, y) in self.scc.iter_mut().zip(&o.scc) {
            *x += y;
        }
    }

    fn finish(&self) -> (f64, f64) {
        let n = self.n;
        let k = self.k;
        let gm = self.sg / n;
        let var_g = (self.sgg / n - gm * gm).max(0.0);
        let cm: Vec<f64> = self.sc.iter().map(|s| s / n).collect();
        let cov = DMatrix::from_fn(k, k, |a, b| self.scc[a * k + b] / n - cm[a] * cm[b]);
        let cg = DVector::from_fn(k, |a, _| self.sgc[a] / n - gm * cm[a]);
        let beta = match cov.clone().cholesky() {
            Some(ch) => ch.solve(&cg),
            None => DVector::zeros(k),
        };
        let est = gm - beta.iter().zip(&cm).map(|(b, c)| b * c).sum::<f64>();
        let resid = (var_g - beta.dot(&cg)).max(0.0);
        let dof = (n - k as f64 - 1.0).max(1.0);
        (est, (resid / dof).sqrt())
    }
}

/// Entrywise expectation of `F(|w|², w_i, w_j, i == j)` over
/// `w ~ N(mean, var I)`, with control variates.
fn gaussian_matrix_mc<F>(mean: &[f64], var: f64, samples: u64, seed: u64, f: F) -> Result<MatrixEstimate>
where
    F: Fn(f64, f64, f64, bool) -> f64 + Sync,
{
    if samples < 2 * MC_BATCHES {
        return invalid(format!("need at least {} samples, got {samples}", 2 * MC_BATCHES));
    }
    let d = mean.len();
    let a2: f64 = mean.iter().map(|x| x * x).sum();
    let df = d as f64;
    let e_r2 = a2 + df * var;
    let e_r4 = a2 * a2 + (2.0 * df + 4.0) * var * a2 + df * (df + 2.0) * var * var;
    let e_pair = |i: usize, j: usize| mean[i] * mean[j] + if i == j { var } else { 0.0 };
    let e_r2pair = |i: usize, j: usize| {
        a2 * mean[i] * mean[j] + (df + 4.0) * var * mean[i] * mean[j] + if i == j { a2 * var + (df + 2.0) * var * var } else { 0.0 }
    };
    let entries: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
    let sd = var.sqrt();
    let per = samples / MC_BATCHES;
    let extra = samples % MC_BATCHES;
    let accs: Vec<Vec<CvAcc>> = (0..MC_BATCHES)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, b);
            let n = per + u64::from(b < extra);
            let mut acc: Vec<CvAcc> = entries.iter().map(|&(i, j)| CvAcc::new(if i == j { 4 } else { 2 })).collect();
            let mut w = vec![0.0; d];
            let mut c = [0.0; 4];
            for _ in 0..n {
                for (wk, mk) in w.iter_mut().zip(mean) {
                    *wk = mk + sd * rng::normal(&mut rng);
                }
                let r2: f64 = w.iter().map(|x| x * x).sum();
                for (e, &(i, j)) in acc.iter_mut().zip(&entries) {
                    let pair = w[i] * w[j];
                    let g = f(r2, w[i], w[j], i == j);
                    if i == j {
                        c[0] = r2 - e_r2;
                        c[1] = r2 * r2 - e_r4;
                        c[2] = pair - e_pair(i, j);
                        c[3] = r2 * pair - e_r2pair(i, j);
                        e.push(g, &c[..4]);
                    } else {
                        c[0] = pair - e_pair(i, j);
                        c[1] = r2 * pair - e_r2pair(i, j);
                        e.push(g, &c[..2]);
                    }
                }
            }
            acc
        })
        .collect();
    let mut total: Vec<CvAcc> = entries.iter().map(|&(i, j)| CvAcc::new(if i == j { 4 } else { 2 })).collect();
    for batch in &accs {
        for (t, b) in total.iter_mut().zip(batch) {
            t.merge(b);
        }
    }
    let mut matrix = DMatrix::zeros(d, d);
    let mut std_error = DMatrix::zeros(d, d);
    for (acc, &(i, j)) in total.iter().zip(&entries) {
        let (est, se) = acc.finish();
        matrix[(i, j)] = est;
        matrix[(j, i)] = est;
        std_error[(i, j)] = se;
        std_error[(j, i)] = se;
    }
    Ok(MatrixEstimate { matrix, std_error, samples })
}

// ---------------------------------------------------------------------------
// curvature scan

#[derive(Debug, Clone, PartialEq)]
pub struct BakryEmeryReport {
    pub theta: f64,
    pub points: usize,
    pub min_a: f64,
    pub argmin_a: f64,
    pub min_a_minus_b: f64,
    pub argmin_a_minus_b: f64,
    /// `(8√(π γ_B))⁻¹ min(min A, min(A − B))`.
    pub alpha_measured: f64,
    /// `(7/24)√(2θ/π)`.
    pub alpha_reference: f64,
    /// Largest series/direct jump at the switch point.
    pub seam_jump: f64,
    /// Scan points below `10⁻²`, where only the series is trustworthy.
    pub series_points: usize,
}

/// Lower bound for `A` used in the reference constant.
pub const ALPHA_1: f64 = 143.0 / 60.0;
/// Lower bound for `A − B` used in the reference constant.
pub const ALPHA_2: f64 = 7.0 / 3.0;

impl BakryEmeryReport {
    pub const CSV_HEADER: &'static str = "x,A,B,A_minus_B,C,T";
}

/// Default scan grid: `5·10³` log-spaced points on `[10⁻⁴, 1]` and `10⁴`
/// linear points on `(1, 20]`.
pub fn default_scan_grid() -> Vec<f64> {
    let mut xs: Vec<f64> = (0..5000).map(|k| 10f64.powf(-4.0 + 4.0 * k as f64 / 4999.0)).collect();
    xs.extend((1..=10_000).map(|k| 1.0 + 19.0 * k as f64 / 10_000.0));
    xs
}

pub fn bakry_emery_scan(theta: f64, x_grid: Option<&[f64]>) -> Result<BakryEmeryReport> {
    let fb = AppendixBFunctions::new(theta)?;
    let default;
    let xs = match x_grid {
        Some(g) => g,
        None => {
            default = default_scan_grid();
            &default
        }
    };
    if xs.is_empty() || xs.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return invalid("scan grid must be non-empty with positive finite points");
    }
    let vals: Vec<(f64, f64)> = xs.par_iter().map(|&x| (fb.a(x), fb.a_minus_b(x))).collect();
    let mut rep = BakryEmeryReport {
        theta,
        points: xs.len(),
        min_a: f64::INFINITY,
        argmin_a: f64::NAN,
        min_a_minus_b: f64::INFINITY,
        argmin_a_minus_b: f64::NAN,
        alpha_measured: 0.0,
        alpha_reference: 7.0 / 24.0 * (2.0 * theta / PI).sqrt(),
        seam_jump: fb.seam_jump(),
        series_points: xs.iter().filter(|&&x| x < 1e-2).count(),
    };
    for (&x, &(a, amb)) in xs.iter().zip(&vals) {
        if !(a.is_finite() && amb.is_finite()) {
            return Err(Error::Numerical(format!("non-finite curvature profile at x = {x}")));
        }
        if a < rep.min_a {
            rep.min_a = a;
            rep.argmin_a = x;
        }
        if amb < rep.min_a_minus_b {
            rep.min_a_minus_b = amb;
            rep.argmin_a_minus_b = x;
        }
    }
    rep.alpha_measured = rep.min_a.min(rep.min_a_minus_b) / (8.0 * (PI * fb.gamma_b()).sqrt());
    Ok(rep)
}

/// Profile table for the scan, one row per grid point.
pub fn bakry_emery_csv(theta: f64, xs: &[f64]) -> Result<String> {
    let fb = AppendixBFunctions::new(theta)?;
    let mut out = String::from(BakryEmeryReport::CSV_HEADER);
    out.push('\n');
    for &x in xs {
        let _ = writeln!(out, "{x:.10e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}", fb.a(x), fb.b(x), fb.a_minus_b(x), fb.c(x), fb.t(x));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// J_γ

/// `J_γ(f|M) = ∫ f ∇ln(f/M) · D_γ ∇ln(f/M)`, which equals `∫ (D∇g)·∇g / g dM`
/// with `g = f/M`; central differences as in the Fisher information.
pub fn j_gamma(f: &GridDensity, m: &Maxwellian, dmat: &DiffusionMatrix) -> Result<FunctionalReport> {
    if f.spec().dim() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), got: f.spec().dim() });
    }
    if dmat.maxwellian() != m {
        return invalid("diffusion matrix built for a different Maxwellian");
    }
    if !dmat.is_closed_form() {
        return invalid("J_gamma needs a closed-form diffusion matrix (gamma 0 or 1)");
    }
    let spec = f.spec();
    if spec.n() < 3 {
        return invalid("J_gamma needs at least 3 cells per axis");
    }
    let d = spec.dim();
    let mut clamped = 0;
    let l: Vec<f64> = f.ln_ratios(m).into_iter().map(|x| clamp_ln(x, &mut clamped)).collect();
    let grad = grid_gradient(spec, &l);
    let terms: Vec<f64> = (0..spec.len())
        .into_par_iter()
        .map(|i| {
            let fi = f.values()[i];
            if fi == 0.0 {
                return Ok(0.0);
            }
            let mut v = vec![0.0; d];
            spec.cell_center(i, &mut v);
            let dm = dmat.eval(&v)?;
            let g = DVector::from_column_slice(&grad[i]);
            Ok(fi * g.dot(&(&dm * &g)))
        })
        .collect::<Result<_>>()?;
    Ok(FunctionalReport {
        value: terms.iter().sum::<f64>() * spec.cell_volume(),
        std_error: 0.0,
        method: Method::Grid,
        samples_or_cells: spec.len() as u64,
        clamped,
        boundary_stencil: true,
    })
}

// ---------------------------------------------------------------------------
// radial Fokker-Planck

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialOptions {
    pub cells: usize,
    /// Outer radius in units of `√θ`.
    pub r_max: f64,
    /// Defaults to `0.4 / max rate`; must not exceed `1 / max rate`.
    pub dt: Option<f64>,
    pub record_points: usize,
}

impl Default for RadialOptions {
    fn default() -> Self {
        RadialOptions { cells: 400, r_max: 6.0, dt: None, record_points: crate::simulate::DEFAULT_POINTS }
    }
}

#[derive(Debug, Clone)]
pub struct RadialRun {
    pub trace: SimulationTrace,
    /// Cell centres.
    pub r: Vec<f64>,
    pub f_final: Vec<f64>,
    /// Discrete normalized Maxwellian on the same cells.
    pub m: Vec<f64>,
    pub max_mass_error: f64,
}

impl RadialRun {
    pub const PROFILE_HEADER: &'static str = "r,f,M";

    pub fn profile_csv(&self) -> String {
        let mut out = String::from(Self::PROFILE_HEADER);
        out.push('\n');
        for ((r, f), m) in self.r.iter().zip(&self.f_final).zip(&self.m) {
            let _ = writeln!(out, "{r:.8},{f:.12e},{m:.12e}");
        }
        out
    }

    pub fn write_profile(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.profile_csv())?;
        Ok(())
    }
}

/// `∂_t f = (θ/4) ∇·(∇f + v f/θ)` for radial `f` in `R³` (the `γ = 0` equation
/// with `u0 = 0`), by a conservative finite-volume scheme on `g = f/M`:
/// the flux through the sphere of radius `r` is `(θ/4) 4πr² M_r ∂_r g` with
/// `M_r` the geometric mean of the neighbouring cell values.
///
/// `f0` is sampled along the first axis and renormalized to unit mass.
pub fn fp_radial_evolve(f0: &dyn Density, theta: f64, t_end: f64, opts: RadialOptions) -> Result<RadialRun> {
    if f0.dim() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, got: f0.dim() });
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return invalid(format!("theta must be positive, got {theta}"));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return invalid(format!("t_end must be positive, got {t_end}"));
    }
    if opts.cells < 8 || !(opts.r_max > 0.0) {
        return invalid("radial grid needs at least 8 cells and a positive radius");
    }
    let n = opts.cells;
    let dr = opts.r_max * theta.sqrt() / n as f64;
    let r: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * dr).collect();
    let vol: Vec<f64> = (0..n).map(|i| 4.0 * PI / 3.0 * (((i + 1) as f64 * dr).powi(3) - (i as f64 * dr).powi(3))).collect();
    let normalize = |x: &mut Vec<f64>| -> Result<()> {
        let mass: f64 = x.iter().zip(&vol).map(|(a, b)| a * b).sum();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Numerical("radial profile has no mass on the grid".into()));
        }
        x.iter_mut().for_each(|v| *v /= mass);
        Ok(())
    };
    let mut m: Vec<f64> = r.iter().map(|ri| (-ri * ri / (2.0 * theta)).exp()).collect();
    normalize(&mut m)?;
    let mut f: Vec<f64> = r.iter().map(|&ri| f0.pdf(&[ri, 0.0, 0.0])).collect();
    normalize(&mut f)?;

    // face k sits between cells k−1 and k
    let kappa: Vec<f64> = (0..=n)
        .map(|k| {
            if k == 0 || k == n {
                0.0
            } else {
                let rk = k as f64 * dr;
                theta / 4.0 * 4.0 * PI * rk * rk * (m[k - 1] * m[k]).sqrt() / dr
            }
        })
        .collect();
    let max_rate = (0..n).map(|i| (kappa[i] + kappa[i + 1]) / (m[i] * vol[i])).fold(0.0, f64::max);
    let dt_req = opts.dt.unwrap_or(0.4 / max_rate);
    if !(dt_req > 0.0) || dt_req > 1.0 / max_rate {
        return invalid(format!("dt = {dt_req} violates the stability limit 1 / max rate = {}", 1.0 / max_rate));
    }
    let steps = (t_end / dt_req).ceil() as usize;
    let dt = t_end / steps as f64;
    let every = (steps / opts.record_points.max(1)).max(1);

    let observe = |t: f64, f: &[f64]| {
        let mut h = 0.0;
        let mut temp = 0.0;
        let mut l1 = 0.0;
        for i in 0..n {
            if f[i] > 0.0 {
                h += f[i] * (f[i] / m[i]).ln() * vol[i];
            }
            temp += r[i] * r[i] * (f[i] - m[i]) * vol[i];
            l1 += (f[i] - m[i]).abs() * vol[i];
        }
        TracePoint { t, entropy: h, entropy_stderr: 0.0, temperature: temp, temperature_stderr: 0.0, l1 }
    };

    let mut points = vec![observe(0.0, &f)];
    let mut flux = vec![0.0; n + 1];
    let mut max_mass_error: f64 = 0.0;
    for step in 1..=steps {
        for k in 1..n {
            flux[k] = kappa[k] * (f[k] / m[k] - f[k - 1] / m[k - 1]);
        }
        for i in 0..n {
            f[i] += dt * (flux[i + 1] - flux[i]) / vol[i];
        }
        if let Some((i, x)) = f.iter().enumerate().find(|(_, x)| **x < 0.0) {
            return Err(Error::Numerical(format!("negative density {x} in radial cell {i} at step {step}")));
        }
        let mass: f64 = f.iter().zip(&vol).map(|(a, b)| a * b).sum();
        max_mass_error = max_mass_error.max((mass - 1.0).abs());
        if step % every == 0 || step == steps {
            points.push(observe(step as f64 * dt, &f));
        }
    }
    Ok(RadialRun {
        trace: SimulationTrace {
            meta: TraceMeta {
                kernel: format!("fokker_planck_radial(theta={theta})"),
                method: "radial_fv".into(),
                size: n as u64,
                seed: None,
                dt: Some(dt),
                time_scale: 1.0,
            },
            points,
        },
        r,
        f_final: f,
        m,
        max_mass_error,
    })
}
