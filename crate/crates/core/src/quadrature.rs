//! One-dimensional quadrature rules: Gauss-Legendre, Gauss-Hermite and an
//! adaptive Gauss-Kronrod (7/15) integrator with user breakpoints.

use crate::error::{Error, Result};
use std::collections::BinaryHeap;
use std::f64::consts::PI;

/// Nodes and weights of an `n`-point rule.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Gauss-Legendre rule on `[-1, 1]`.
    pub fn gauss_legendre(n: usize) -> Rule {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, z);
            dp = if d != 0.0 { d } else { dp };
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Rule { nodes, weights }
    }

    /// Gauss-Hermite rule for the weight `e^{-x^2}` on the real line.
    pub fn gauss_hermite(n: usize) -> Rule {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        let mut z = 0.0;
        for i in 0..m {
            // initial guesses from Numerical Recipes
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[n - 1],
                3 => 1.91 * z - 0.91 * nodes[n - 2],
                _ => 2.0 * z - nodes[n - i + 1],
            };
            let mut pp = 0.0;
            for _ in 0..200 {
                let (p, d) = hermite_normalized(n, z);
                pp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            let (_, d) = hermite_normalized(n, z);
            if d != 0.0 {
                pp = d;
            }
            nodes[n - 1 - i] = z;
            nodes[i] = -z;
            let w = 2.0 / (pp * pp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Rule { nodes, weights }
    }

    /// Integrate `f` over `[a, b]` with this rule (assumed to live on `[-1, 1]`).
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(c + h * x);
        }
        s * h
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

// Orthonormal Hermite recurrence; returns (H_n, derivative) in the scaling used
// by the weight formula w = 2 / H_n'(x)^2.
fn hermite_normalized(n: usize, x: f64) -> (f64, f64) {
    let pim4 = PI.powf(-0.25);
    let mut p1 = pim4;
    let mut p2 = 0.0;
    for j in 1..=n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = x * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    let pp = (2.0 * n as f64).sqrt() * p2;
    (p1, pp)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
}

/// Tolerances for [`adaptive`].
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            rel: 1e-11,
            abs: 1e-300,
            max_intervals: 4000,
        }
    }
}

/// Adaptive Gauss-Kronrod integration of `f` over `[a, b]`, splitting first at
/// the supplied interior breakpoints.
pub fn adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<Integral> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParameter("integration limits must be finite".into()));
    }
    if a == b {
        return Ok(Integral { value: 0.0, abs_error: 0.0, evaluations: 0 });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&x| x > lo && x < hi).collect();
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();

    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    let mut evals = 0;
    for w in pts.windows(2) {
        let (v, e) = gk15(&mut f, w[0], w[1]);
        evals += 15;
        total += v;
        total_err += e;
        heap.push(Piece { a: w[0], b: w[1], value: v, err: e });
    }
    while total_err > tol.abs.max(tol.rel * total.abs()) {
        if heap.len() >= tol.max_intervals {
            return Err(Error::Numerical(format!(
                "adaptive quadrature did not converge on [{lo}, {hi}]: estimate {total}, error {total_err}"
            )));
        }
        let p = heap.pop().expect("heap is never empty");
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            // interval cannot be split further; accept what we have
            heap.push(p);
            break;
        }
        let (v1, e1) = gk15(&mut f, p.a, m);
        let (v2, e2) = gk15(&mut f, m, p.b);
        evals += 30;
        total += v1 + v2 - p.value;
        total_err += e1 + e2 - p.err;
        heap.push(Piece { a: p.a, b: m, value: v1, err: e1 });
        heap.push(Piece { a: m, b: p.b, value: v2, err: e2 });
    }
    // re-sum to shed accumulated cancellation in the running totals
    let mut value = 0.0;
    let mut err = 0.0;
    for p in heap.iter() {
        value += p.value;
        err += p.err;
    }
    if !value.is_finite() {
        return Err(Error::Numerical("adaptive quadrature produced a non-finite value".into()));
    }
    Ok(Integral { value: sign * value, abs_error: err, evaluations: evals })
}

/// Shorthand for [`adaptive`] with default tolerances.
pub fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64]) -> Result<f64> {
    adaptive(f, a, b, breaks, Tolerance::default()).map(|r| r.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let r = Rule::gauss_legendre(7);
        // degree 13 is exact for 7 points
        let v = r.integrate(-1.0, 2.0, |x| x.powi(13) - 3.0 * x.powi(4));
        let exact = (2f64.powi(14) - 1.0) / 14.0 - 3.0 * (32.0 + 1.0) / 5.0;
        assert!((v - exact).abs() < 1e-10 * exact.abs());
        let s: f64 = r.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn hermite_moments() {
        for n in [1, 2, 5, 20, 40, 64] {
            let r = Rule::gauss_hermite(n);
            let m0: f64 = r.weights.iter().sum();
            assert!((m0 - PI.sqrt()).abs() < 1e-12, "n={n} m0={m0}");
            if n >= 3 {
                let m2: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x * x).sum();
                assert!((m2 - PI.sqrt() / 2.0).abs() < 1e-12);
                let m4: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(4)).sum();
                assert!((m4 - 0.75 * PI.sqrt()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hermite_integrates_cosine() {
        // ∫ e^{-x^2} cos(x) dx = √π e^{-1/4}
        let r = Rule::gauss_hermite(40);
        let v: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.cos()).sum();
        assert!((v - PI.sqrt() * (-0.25f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        // ∫_0^1 x^{-1/2} dx = 2
        let v = integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0, &[]).unwrap();
        assert!((v - 2.0).abs() < 1e-9);
    }

    #[test]
    fn adaptive_with_breakpoints_and_reversed_limits() {
        let f = |x: f64| if x < 0.3 { 1.0 } else { x };
        let v = integrate(f, 1.0, 0.0, &[0.3]).unwrap();
        let exact = -(0.3 + (1.0 - 0.09) / 2.0);
        assert!((v - exact).abs() < 1e-13);
    }

    #[test]
    fn adaptive_gaussian() {
        let v = integrate(|x| (-x * x).exp(), -10.0, 10.0, &[]).unwrap();
        assert!((v - PI.sqrt()).abs() < 1e-12);
    }
}
