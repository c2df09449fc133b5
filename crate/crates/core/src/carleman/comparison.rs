use super::{Carleman, HyperplaneRule};
use crate::density::DensitySuite;
use crate::error::{invalid, Error, Result};
use crate::functionals::{dissipation_mc_multi, McOptions};
use crate::kernel::CollisionKernel;
use crate::quadrature;
use crate::rng;
use crate::special::sphere_gauss_avg;
use crate::Maxwellian;
use rand::Rng;
use rayon::prelude::*;

/// Search grid for [`comparison_constant`].
#[derive(Debug, Clone, Copy)]
pub struct ComparisonSearch {
    /// Largest `|v̄|` in units of `√θ`.
    pub vbar_max: f64,
    pub n_vbar: usize,
    /// Number of log-spaced `s` values in `[s_min, ρ₀]`; `s = 0` is always added.
    pub n_s: usize,
    pub s_min: f64,
}

impl Default for ComparisonSearch {
    fn default() -> Self {
        ComparisonSearch { vbar_max: 8.0, n_vbar: 33, n_s: 25, s_min: 1e-3 }
    }
}

/// Result of the convolution-ratio minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonConstant {
    /// Infimum of the ratio over the search grid.
    pub c_tilde: f64,
    /// `min(β(ρ₀), C̃)`.
    pub c_theta: f64,
    pub beta_rho0: f64,
    /// `(|v̄|, s)` at the minimum.
    pub argmin: (f64, f64),
    /// First grid point where the ratio vanishes, if any.
    pub zero_at: Option<(f64, f64)>,
}

/// Ratio of the hyperplane convolutions of `B` and `B̃` at `(|v̄|, s)`.
fn ratio(num: &Carleman, den: &Carleman, c: f64, s: f64) -> Result<f64> {
    if s > 0.0 {
        let a = num.hyperplane(s, c);
        let b = den.hyperplane(s, c);
        return if b > 0.0 { Ok(a / b) } else { Err(Error::Numerical(format!("empty denominator at (|v̄|={c}, s={s})"))) };
    }
    // s → 0: b(s/q) ~ C (s/q)^p for both kernels, so the common factor s^p drops
    let kb = den.kernel();
    let p = match kb.angular().small_xi_exponent() {
        Some(p) => p,
        None => return ratio(num, den, c, 1e-6),
    };
    let d = kb.dim();
    if p >= (d - 1) as f64 {
        // both sides concentrate at |y| → 0
        let q0 = 1e-12;
        return Ok(num.kernel().beta(q0) / kb.beta(q0));
    }
    let th = num.maxwellian().theta();
    let sd = th.sqrt();
    let kk = d - 2;
    let brk = [c - 3.0 * sd, c, c + 3.0 * sd, 0.1 * sd];
    let end = c + 12.0 * sd;
    let weight = |r: f64| r.powf(kk as f64 - p) * sphere_gauss_avg(kk, c, r, th);
    let a = quadrature::integrate(|r| if r > 0.0 { num.kernel().beta(r) * weight(r) } else { 0.0 }, 0.0, end, &brk)?;
    let b = quadrature::integrate(|r| if r > 0.0 { kb.beta(r) * weight(r) } else { 0.0 }, 0.0, end, &brk)?;
    Ok(a / b)
}

/// Minimize the convolution ratio between `B = β b` and `B̃ = b` over
/// `|v̄| ≤ vbar_max √θ` and `s ∈ [0, ρ₀]`.
pub fn comparison_constant(
    b: &CollisionKernel,
    b_tilde: &CollisionKernel,
    m: &Maxwellian,
    rho0: f64,
    search: ComparisonSearch,
) -> Result<ComparisonConstant> {
    if !(rho0 > 0.0 && rho0.is_finite()) {
        return invalid(format!("ρ₀ must be positive, got {rho0}"));
    }
    if search.n_vbar < 2 || search.n_s < 2 || !(search.s_min > 0.0 && search.s_min < rho0) {
        return invalid("comparison search needs n_vbar, n_s >= 2 and 0 < s_min < ρ₀");
    }
    let m0 = Maxwellian::standard(m.dim(), m.theta())?;
    let num = Carleman::new(b, &m0, HyperplaneRule::radial())?;
    let den = Carleman::new(b_tilde, &m0, HyperplaneRule::radial())?;
    let sd = m.theta().sqrt();
    let mut ss = vec![0.0];
    let ln_lo = search.s_min.ln();
    let ln_hi = rho0.ln();
    for k in 0..search.n_s {
        ss.push((ln_lo + (ln_hi - ln_lo) * k as f64 / (search.n_s - 1) as f64).exp());
    }
    let points: Vec<(f64, f64)> = (0..search.n_vbar)
        .flat_map(|i| {
            let c = search.vbar_max * sd * i as f64 / (search.n_vbar - 1) as f64;
            ss.iter().map(move |&s| (c, s))
        })
        .collect();
    let values = points
        .par_iter()
        .map(|&(c, s)| ratio(&num, &den, c, s))
        .collect::<Result<Vec<f64>>>()?;
    let mut best = (f64::INFINITY, (0.0, 0.0));
    let mut zero_at = None;
    for (&pt, &r) in points.iter().zip(&values) {
        if !(r > 1e-12) && zero_at.is_none() {
            zero_at = Some(pt);
        }
        if r < best.0 {
            best = (r, pt);
        }
    }
    let beta_rho0 = b.beta(rho0) / b_tilde.beta(rho0);
    let c_tilde = if zero_at.is_some() { 0.0 } else { best.0 };
    Ok(ComparisonConstant {
        c_tilde,
        c_theta: beta_rho0.min(c_tilde),
        beta_rho0,
        argmin: zero_at.unwrap_or(best.1),
        zero_at,
    })
}

/// One density of a dissipation comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub density: String,
    pub d_b: f64,
    pub d_b_se: f64,
    pub d_b_tilde: f64,
    pub d_b_tilde_se: f64,
    /// Standard error of `D^B − C D^{B̃}` from paired batches.
    pub gap_se: f64,
    pub constant: f64,
    /// `D^B ≥ C D^{B̃} − 3·gap_se`.
    pub holds: bool,
}

impl ComparisonRow {
    pub const CSV_HEADER: &'static str = "density,d_b,d_b_se,d_b_tilde,d_b_tilde_se,constant,holds";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.10e},{:.3e},{:.10e},{:.3e},{:.6},{}",
            self.density, self.d_b, self.d_b_se, self.d_b_tilde, self.d_b_tilde_se, self.constant, self.holds
        )
    }

    pub fn ratio(&self) -> f64 {
        self.d_b / self.d_b_tilde
    }
}

/// Check `D^B(f) ≥ C D^{B̃}(f)` on every density of `suite` with paired
/// Monte Carlo estimates.
pub fn dissipation_comparison_check(
    suite: &DensitySuite,
    m: &Maxwellian,
    b: &CollisionKernel,
    b_tilde: &CollisionKernel,
    constant: f64,
    opts: McOptions,
) -> Result<Vec<ComparisonRow>> {
    suite
        .entries
        .iter()
        .map(|(name, f)| {
            let p = dissipation_mc_multi(f.as_density(), m, &[b, b_tilde], opts)?;
            let (gap, gap_se) = p.combination(&[1.0, -constant]);
            Ok(ComparisonRow {
                density: name.clone(),
                d_b: p.reports[0].value,
                d_b_se: p.reports[0].std_error,
                d_b_tilde: p.reports[1].value,
                d_b_tilde_se: p.reports[1].std_error,
                gap_se,
                constant,
                holds: gap >= -3.0 * gap_se,
            })
        })
        .collect()
}

/// Minimum of `k_B / k_B̃` over sampled pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelRatioReport {
    pub min_ratio: f64,
    pub argmin: (Vec<f64>, Vec<f64>),
    pub pairs: usize,
}

/// Evaluate `k_B(v, w) / k_B̃(v, w)` on `pairs` random pairs: half drawn
/// independently from a widened `M`, half at log-uniform separations in
/// `[10⁻³, 4]√θ` to probe the near-diagonal regime.
pub fn kernel_ratio_on_pairs(
    b: &CollisionKernel,
    b_tilde: &CollisionKernel,
    m: &Maxwellian,
    pairs: usize,
    seed: u64,
) -> Result<KernelRatioReport> {
    if pairs == 0 {
        return invalid("need at least one pair");
    }
    let num = Carleman::new(b, m, HyperplaneRule::radial())?;
    let den = Carleman::new(b_tilde, m, HyperplaneRule::radial())?;
    let wide = Maxwellian::new(m.u0().to_vec(), 2.25 * m.theta())?;
    let d = m.dim();
    let sd = m.theta().sqrt();
    let rows: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let mut v = vec![0.0; d];
            let mut w = vec![0.0; d];
            wide.sample_into(&mut r, &mut v);
            if i % 2 == 0 {
                wide.sample_into(&mut r, &mut w);
            } else {
                let mut e = vec![0.0; d];
                rng::unit_vector(&mut r, &mut e);
                let s = sd * (1e-3f64.ln() + r.random::<f64>() * (4e3f64).ln()).exp();
                for k in 0..d {
                    w[k] = v[k] + s * e[k];
                }
            }
            let x = num.eval(&v, &w)?;
            let y = den.eval(&v, &w)?;
            Ok((x / y, v, w))
        })
        .collect::<Result<_>>()?;
    let (min_ratio, v, w) = rows
        .into_iter()
        .filter(|r| r.0.is_finite())
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or_else(|| Error::Numerical("no finite kernel ratios".into()))?;
    Ok(KernelRatioReport { min_ratio, argmin: (v, w), pairs })
}
