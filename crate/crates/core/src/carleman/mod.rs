//! Carleman form of the linear operator: the transition kernel `k(v → w)`,
//! the collision frequency `σ(v)`, dense kernel tensors on grids, and
//! kernel comparison constants.

mod comparison;
mod tensor;

pub use comparison::{
    comparison_constant, dissipation_comparison_check, kernel_ratio_on_pairs, ComparisonConstant, ComparisonRow,
    ComparisonSearch, KernelRatioReport,
};
pub use tensor::{gain_apply, phi_dissipation_grid, precompute_kernel, KernelTensor, TensorOptions};

use crate::error::{invalid, Error, Result};
use crate::kernel::CollisionKernel;
use crate::quadrature::{self, Rule, Tolerance};
use crate::special::{sphere_area, sphere_gauss_avg};
use crate::Maxwellian;
use std::f64::consts::PI;

/// Quadrature used for the hyperplane integral inside `k(v → w)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HyperplaneRule {
    /// Tensor Gauss-Hermite rule of the given order per hyperplane dimension,
    /// centered on the Gaussian factor.
    GaussHermite { order: usize },
    /// Polar coordinates around the foot of the Gaussian with the sphere
    /// average done in closed form and composite Gauss-Legendre in the
    /// radius. Resolves the `|w − v|` scale of the angular factor, so it stays
    /// accurate near the diagonal.
    Radial { order: usize },
}

impl Default for HyperplaneRule {
    fn default() -> Self {
        HyperplaneRule::GaussHermite { order: 40 }
    }
}

impl HyperplaneRule {
    pub fn radial() -> Self {
        HyperplaneRule::Radial { order: 12 }
    }

    pub fn id(&self) -> String {
        match self {
            HyperplaneRule::GaussHermite { order } => format!("gh{order}"),
            HyperplaneRule::Radial { order } => format!("radial{order}"),
        }
    }
}

enum Prepared {
    Hermite(Rule),
    Radial(Rule),
}

/// Evaluator of the Carleman transition kernel for one `(B, M)` pair.
pub struct Carleman<'a> {
    kernel: &'a CollisionKernel,
    m: &'a Maxwellian,
    rule: HyperplaneRule,
    prepared: Prepared,
}

impl<'a> Carleman<'a> {
    pub fn new(kernel: &'a CollisionKernel, m: &'a Maxwellian, rule: HyperplaneRule) -> Result<Self> {
        if kernel.dim() != m.dim() {
            return Err(Error::DimensionMismatch { expected: m.dim(), got: kernel.dim() });
        }
        let prepared = match rule {
            HyperplaneRule::GaussHermite { order } => {
                if order == 0 || (m.dim() > 3 && order.pow(m.dim() as u32 - 1) > 1 << 22) {
                    return invalid(format!("Gauss-Hermite order {order} unusable in dimension {}", m.dim()));
                }
                Prepared::Hermite(Rule::gauss_hermite(order))
            }
            HyperplaneRule::Radial { order } => {
                if order < 2 {
                    return invalid("radial rule needs order >= 2");
                }
                Prepared::Radial(Rule::gauss_legendre(order))
            }
        };
        Ok(Carleman { kernel, m, rule, prepared })
    }

    pub fn kernel(&self) -> &CollisionKernel {
        self.kernel
    }

    pub fn maxwellian(&self) -> &Maxwellian {
        self.m
    }

    pub fn rule(&self) -> HyperplaneRule {
        self.rule
    }

    /// Rate density of jumps from `from` to `to`.
    pub fn eval(&self, from: &[f64], to: &[f64]) -> Result<f64> {
        let d = self.m.dim();
        if from.len() != d || to.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: from.len().min(to.len()) });
        }
        let s2: f64 = from.iter().zip(to).map(|(a, b)| (a - b) * (a - b)).sum();
        if s2 == 0.0 {
            return invalid("Carleman kernel is undefined on the diagonal v = w");
        }
        Ok(self.eval_unchecked(from, to))
    }

    /// As [`Carleman::eval`] without argument checks; `from != to` required.
    pub fn eval_unchecked(&self, from: &[f64], to: &[f64]) -> f64 {
        let d = from.len();
        let th = self.m.theta();
        let u0 = self.m.u0();
        let mut s2 = 0.0;
        for k in 0..d {
            s2 += (from[k] - to[k]) * (from[k] - to[k]);
        }
        let s = s2.sqrt();
        // parallel / perpendicular split of (to − u0) along e = (from − to)/s
        let mut par = 0.0;
        let mut rel2 = 0.0;
        for k in 0..d {
            let r = to[k] - u0[k];
            par += r * (from[k] - to[k]) / s;
            rel2 += r * r;
        }
        let c = (rel2 - par * par).max(0.0).sqrt();
        let pref = 2.0 * s.powi(1 - d as i32) * (2.0 * PI * th).powf(-0.5 * d as f64) * (-par * par / (2.0 * th)).exp();
        if pref == 0.0 {
            return 0.0;
        }
        pref * self.hyperplane(s, c)
    }

    /// `∫_{ℝ^{d−1}} B(√(s²+|y|²), s/√(s²+|y|²)) exp(−|c e' + y|²/2θ) dy`.
    pub(crate) fn hyperplane(&self, s: f64, c: f64) -> f64 {
        let d = self.m.dim();
        let th = self.m.theta();
        let k = self.kernel;
        let g = |r2: f64| {
            let q = (s * s + r2).sqrt();
            k.eval(q, s / q)
        };
        match &self.prepared {
            Prepared::Hermite(rule) => {
                let sc = (2.0 * th).sqrt();
                let scale = sc.powi(d as i32 - 1);
                match d {
                    2 => {
                        let mut acc = 0.0;
                        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                            let y = sc * x - c;
                            acc += w * g(y * y);
                        }
                        acc * scale
                    }
                    _ => {
                        // first axis along the foot direction, the rest isotropic
                        let mut acc = 0.0;
                        let n = rule.len();
                        let mut idx = vec![0usize; d - 1];
                        loop {
                            let y0 = sc * rule.nodes[idx[0]] - c;
                            let mut r2 = y0 * y0;
                            let mut w = rule.weights[idx[0]];
                            for &j in &idx[1..] {
                                let y = sc * rule.nodes[j];
                                r2 += y * y;
                                w *= rule.weights[j];
                            }
                            acc += w * g(r2);
                            let mut a = 0;
                            loop {
                                idx[a] += 1;
                                if idx[a] < n {
                                    break;
                                }
                                idx[a] = 0;
                                a += 1;
                                if a == d - 1 {
                                    return acc * scale;
                                }
                            }
                        }
                    }
                }
            }
            Prepared::Radial(rule) => {
                let sd = th.sqrt();
                let mut pts = radial_breaks(s, c, sd, k.delta_eps());
                pts.dedup();
                let kk = d - 2;
                let mut acc = 0.0;
                for w in pts.windows(2) {
                    acc += rule.integrate(w[0], w[1], |r| {
                        let rp = if kk == 0 { 1.0 } else { r.powi(kk as i32) };
                        rp * g(r * r) * sphere_gauss_avg(kk, c, r, th)
                    });
                }
                acc
            }
        }
    }

    /// `σ(v) = ∫ k(v → w) dw` by integrating the Carleman kernel in polar
    /// coordinates around `v` (validation path; `d ∈ {2, 3}`).
    pub fn sigma_from_kernel(&self, v: &[f64]) -> Result<f64> {
        let d = self.m.dim();
        if v.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: v.len() });
        }
        let th = self.m.theta();
        let sd = th.sqrt();
        let rel: Vec<f64> = v.iter().zip(self.m.u0()).map(|(a, b)| a - b).collect();
        let radius = rel.iter().map(|x| x * x).sum::<f64>().sqrt();
        let s_max = radius + 12.0 * sd;
        let tol = Tolerance { rel: 1e-10, abs: 1e-300, max_intervals: 2000 };
        // ∫_0^∞ s^{d−1} k(v → v − s e) ds for unit e
        let radial = |e: &[f64]| -> Result<f64> {
            let par: f64 = rel.iter().zip(e).map(|(a, b)| a * b).sum();
            let mut w = vec![0.0; d];
            let f = |s: f64| {
                if s == 0.0 {
                    return 0.0;
                }
                for k in 0..d {
                    w[k] = v[k] - s * e[k];
                }
                s.powi(d as i32 - 1) * self.eval_unchecked(v, &w)
            };
            let mut brk = vec![sd * 0.05, sd * 0.5];
            if par > 0.0 {
                brk.extend([par - 3.0 * sd, par, par + 3.0 * sd]);
            }
            quadrature::adaptive(f, 0.0, s_max, &brk, tol).map(|r| r.value)
        };
        match d {
            2 => {
                let n = 256;
                let mut acc = 0.0;
                for i in 0..n {
                    let a = 2.0 * PI * (i as f64 + 0.5) / n as f64;
                    acc += radial(&[a.cos(), a.sin()])?;
                }
                Ok(acc * 2.0 * PI / n as f64)
            }
            3 => {
                let gl = Rule::gauss_legendre(48);
                let nphi = 96;
                let mut acc = 0.0;
                for (z, wz) in gl.nodes.iter().zip(&gl.weights) {
                    let rho = (1.0 - z * z).sqrt();
                    for j in 0..nphi {
                        let a = 2.0 * PI * (j as f64 + 0.5) / nphi as f64;
                        acc += wz * radial(&[rho * a.cos(), rho * a.sin(), *z])?;
                    }
                }
                Ok(acc * 2.0 * PI / nphi as f64)
            }
            _ => invalid("kernel-based σ quadrature is implemented for d = 2, 3"),
        }
    }
}

fn radial_breaks(s: f64, c: f64, sd: f64, delta: Option<f64>) -> Vec<f64> {
    let end = c + 9.0 * sd;
    let mut pts = vec![0.0, end];
    // geometric panels resolving the angular scale s near the origin
    let mut x = s;
    while x < sd.min(end) {
        pts.push(x);
        x *= 4.0;
    }
    if let Some(dl) = delta {
        let cut = s * dl;
        if cut > 0.0 && cut < end {
            pts.push(cut);
        }
    }
    for k in [-6.0, -3.0, -1.5, 0.0, 1.5, 3.0, 6.0] {
        let p = c + k * sd;
        if p > 0.0 && p < end {
            pts.push(p);
        }
    }
    pts.sort_by(f64::total_cmp);
    // split long panels
    let mut out = vec![pts[0]];
    for w in pts.windows(2) {
        let len = w[1] - w[0];
        let pieces = (len / (1.5 * sd)).ceil().max(1.0) as usize;
        for i in 1..=pieces {
            out.push(w[0] + len * i as f64 / pieces as f64);
        }
    }
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-15 * sd);
    out
}

/// `k(from → to)` with the default hyperplane rule.
pub fn carleman_kernel(kernel: &CollisionKernel, m: &Maxwellian, from: &[f64], to: &[f64]) -> Result<f64> {
    Carleman::new(kernel, m, HyperplaneRule::default())?.eval(from, to)
}

/// Collision frequency `σ(v) = ∫ B(|v − v*|, ξ) M(v*) dv* dn`, computed from
/// the radial profile of `M` around `v`.
pub fn collision_frequency(kernel: &CollisionKernel, m: &Maxwellian, v: &[f64]) -> Result<f64> {
    let d = m.dim();
    if v.len() != d || kernel.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: v.len() });
    }
    let mass = kernel.angular_mass();
    let gamma = kernel.gamma();
    if gamma == 0.0 {
        return Ok(mass * kernel.beta(1.0));
    }
    let th = m.theta();
    let sd = th.sqrt();
    let a = m.dist2(v).sqrt();
    let norm = (2.0 * PI * th).powf(-0.5 * d as f64);
    let end = a + 12.0 * sd;
    let brk = [a - 3.0 * sd, a, a + 3.0 * sd, sd];
    let integral = quadrature::integrate(
        |r| r.powi(d as i32 - 1) * kernel.beta(r) * sphere_gauss_avg(d - 1, a, r, th),
        0.0,
        end,
        &brk,
    )?;
    Ok(mass * norm * integral)
}

/// Unit-sphere area `|S^{d−1}|`, re-exported for callers that build their
/// own angular integrals.
pub fn sphere_measure(dim: usize) -> f64 {
    sphere_area(dim - 1)
}
