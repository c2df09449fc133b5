//! Time evolution of `∂_t f = L f`: an exact jump-process particle method, a
//! deterministic grid scheme on a kernel tensor, decay-rate fits, the
//! grazing time rescaling and the heavy-tail probe.

use crate::carleman::{collision_frequency, KernelTensor};
use crate::error::{invalid, Error, Result};
use crate::grid::{GridDensity, GridSpec};
use crate::kernel::CollisionKernel;
use crate::particles::{cell_probabilities, default_histogram, Accumulator, ParticleEnsemble};
use crate::quadrature;
use crate::rng::{self, SimRng};
use crate::special::sphere_area;
use crate::Maxwellian;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::Path;

/// Observation times of a run, strictly increasing and starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    times: Vec<f64>,
}

/// Default number of observation intervals.
pub const DEFAULT_POINTS: usize = 200;

impl Schedule {
    /// `points + 1` equally spaced times on `[0, t_end]`.
    pub fn uniform(t_end: f64, points: usize) -> Result<Self> {
        if !(t_end > 0.0 && t_end.is_finite()) || points == 0 {
            return invalid(format!("schedule needs t_end > 0 and at least one interval (t_end = {t_end})"));
        }
        Ok(Schedule { times: (0..=points).map(|k| t_end * k as f64 / points as f64).collect() })
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.first() != Some(&0.0) || times.windows(2).any(|w| !(w[1] > w[0])) || !times.iter().all(|t| t.is_finite())
        {
            return invalid("schedule times must start at 0 and increase strictly");
        }
        Ok(Schedule { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("nonempty schedule")
    }
}

/// Observables at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub t: f64,
    pub entropy: f64,
    pub entropy_stderr: f64,
    /// `T(t) = ∫|v − u0|² (f − M) dv`.
    pub temperature: f64,
    pub temperature_stderr: f64,
    pub l1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceMeta {
    pub kernel: String,
    /// `"jump"` or `"grid"`.
    pub method: String,
    /// Particle count or number of grid cells.
    pub size: u64,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    /// Set by [`rescale_grazing`].
    pub time_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub meta: TraceMeta,
    pub points: Vec<TracePoint>,
}

/// Which trace column a fit uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    Entropy,
    Temperature,
    L1,
}

impl std::str::FromStr for Observable {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entropy" => Ok(Observable::Entropy),
            "temperature" => Ok(Observable::Temperature),
            "l1" => Ok(Observable::L1),
            other => invalid(format!("unknown observable `{other}` (entropy, temperature, l1)")),
        }
    }
}

impl SimulationTrace {
    pub const CSV_HEADER: &'static str = "t,H_est,H_stderr,temperature,temperature_stderr,L1,seed";

    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    pub fn values(&self, obs: Observable) -> Vec<f64> {
        self.points.iter().map(|p| value_of(p, obs).0).collect()
    }

    pub fn to_csv(&self) -> String {
        let seed = self.meta.seed.map(|s| s.to_string()).unwrap_or_default();
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            let _ = writeln!(
                out,
                "{:.10},{:.10e},{:.3e},{:.10e},{:.3e},{:.10e},{seed}",
                p.t, p.entropy, p.entropy_stderr, p.temperature, p.temperature_stderr, p.l1
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

fn value_of(p: &TracePoint, obs: Observable) -> (f64, f64) {
    match obs {
        Observable::Entropy => (p.entropy, p.entropy_stderr),
        Observable::Temperature => (p.temperature, p.temperature_stderr),
        Observable::L1 => (p.l1, 0.0),
    }
}

// ---------------------------------------------------------------------------
// jump process

/// Settings for [`jump_simulate`].
#[derive(Debug, Clone)]
pub struct JumpOptions {
    pub schedule: Schedule,
    pub seed: u64,
    /// Histogram for the entropy and L¹ estimates; defaults to
    /// [`default_histogram`].
    pub histogram: Option<GridSpec>,
}

impl JumpOptions {
    pub fn new(t_end: f64, seed: u64) -> Result<Self> {
        Ok(JumpOptions { schedule: Schedule::uniform(t_end, DEFAULT_POINTS)?, seed, histogram: None })
    }
}

#[derive(Debug, Clone)]
pub struct JumpRun {
    pub trace: SimulationTrace,
    /// State at the last scheduled time, usable as a restart checkpoint.
    pub final_state: ParticleEnsemble,
    pub proposals: u64,
    pub accepted: u64,
}

impl JumpRun {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.proposals.max(1) as f64
    }
}

const CHUNK: usize = 1024;
/// Offset separating jump streams from the streams used to draw initial data.
const JUMP_STREAM: u64 = 1 << 40;
const MIN_ACCEPTANCE: f64 = 1e-4;

/// Proposal mechanism: `(v*, n)` drawn from an envelope of `B(|q|, ξ) M(v*)`.
struct Envelope<'a> {
    kernel: &'a CollisionKernel,
    m: &'a Maxwellian,
    gamma: f64,
    /// `|S^{d−1}| · sup b · prefactor`.
    base: f64,
    /// `max(1, 2^{γ−1})`: `(a + r)^γ ≤ K (a^γ + r^γ)`.
    k_split: f64,
    /// `E_M |v* − u0|^γ`.
    m_gamma: f64,
    tilt: Option<Gamma<f64>>,
}

impl<'a> Envelope<'a> {
    fn new(kernel: &'a CollisionKernel, m: &'a Maxwellian) -> Result<Self> {
        let d = m.dim();
        let sup = kernel.angular().sup();
        if !sup.is_finite() {
            return invalid(format!("jump simulation needs a cut-off kernel; `{}` has unbounded b", kernel.id()));
        }
        let gamma = kernel.gamma();
        let base = sphere_area(d - 1) * sup * kernel.prefactor();
        let (k_split, m_gamma, tilt) = if gamma == 0.0 {
            (1.0, 1.0, None)
        } else {
            let shape = 0.5 * (d as f64 + gamma);
            let mg = (2.0 * m.theta()).powf(0.5 * gamma) * libm::tgamma(shape) / libm::tgamma(0.5 * d as f64);
            let g = Gamma::new(shape, 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            (1f64.max(2f64.powf(gamma - 1.0)), mg, Some(g))
        };
        Ok(Envelope { kernel, m, gamma, base, k_split, m_gamma, tilt })
    }

    fn rate(&self, v: &[f64]) -> f64 {
        if self.gamma == 0.0 {
            self.base
        } else {
            self.base * self.k_split * (self.m.dist2(v).sqrt().powf(self.gamma) + self.m_gamma)
        }
    }

    /// One proposal; returns whether `v` jumped.
    fn propose(&self, v: &mut [f64], vs: &mut [f64], n: &mut [f64], r: &mut SimRng) -> Result<bool> {
        rng::unit_vector(r, n);
        let bound = match &self.tilt {
            None => {
                self.m.sample_into(r, vs);
                self.base / sphere_area(v.len() - 1)
            }
            Some(tilt) => {
                let ag = self.m.dist2(v).sqrt().powf(self.gamma);
                if r.random::<f64>() * (ag + self.m_gamma) < ag {
                    self.m.sample_into(r, vs);
                } else {
                    // radial law ∝ r^{d−1+γ} e^{−r²/2θ}
                    let rad = (2.0 * self.m.theta() * tilt.sample(r)).sqrt();
                    rng::unit_vector(r, vs);
                    for (x, u) in vs.iter_mut().zip(self.m.u0()) {
                        *x = u + rad * *x;
                    }
                }
                let rg = self.m.dist2(vs).sqrt().powf(self.gamma);
                self.base / sphere_area(v.len() - 1) * self.k_split * (ag + rg)
            }
        };
        let b = self.kernel.eval_vectors(v, vs, n);
        if b > bound * (1.0 + 1e-12) {
            return Err(Error::Numerical(format!("thinning bound violated: B = {b} > {bound}")));
        }
        if r.random::<f64>() * bound >= b {
            return Ok(false);
        }
        let qn: f64 = v.iter().zip(vs.iter()).zip(n.iter()).map(|((a, b), c)| (a - b) * c).sum();
        for (x, c) in v.iter_mut().zip(n.iter()) {
            *x -= qn * c;
        }
        Ok(true)
    }
}

struct ChunkOut {
    counts: Vec<Vec<u64>>,
    overflow: Vec<u64>,
    sums: Vec<(f64, f64)>,
    data: Vec<f64>,
    proposals: u64,
    accepted: u64,
}

/// Simulate the jump process whose law solves `∂_t f = L f`.
///
/// Each particle carries its own clock. Between jumps it waits an exponential
/// time with the envelope rate; at each clock ring a pair `(v*, n)` is
/// proposed and accepted with probability `B / envelope`, so the accepted
/// jumps have exactly the rate `σ_B(v)` and the law of `(v*, n)` is
/// `∝ B M(v*)`. No time discretization is involved.
pub fn jump_simulate(
    f0: &ParticleEnsemble,
    m: &Maxwellian,
    kernel: &CollisionKernel,
    opts: &JumpOptions,
) -> Result<JumpRun> {
    let d = m.dim();
    if f0.dim() != d || kernel.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: f0.dim() });
    }
    let env = Envelope::new(kernel, m)?;
    let hist = opts.histogram.clone().unwrap_or_else(|| default_histogram(m));
    if hist.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: hist.dim() });
    }
    let times = opts.schedule.times();
    let nt = times.len();
    let nchunks = f0.len().div_ceil(CHUNK);

    let outs: Vec<Result<ChunkOut>> = (0..nchunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(opts.seed, JUMP_STREAM + c as u64);
            let lo = c * CHUNK * d;
            let hi = ((c + 1) * CHUNK * d).min(f0.data().len());
            let mut data = f0.data()[lo..hi].to_vec();
            let mut accs: Vec<Accumulator> = (0..nt).map(|_| Accumulator::new(hist.len())).collect();
            let mut proposals = 0u64;
            let mut accepted = 0u64;
            let mut vs = vec![0.0; d];
            let mut n = vec![0.0; d];
            for v in data.chunks_exact_mut(d) {
                let mut t = 0.0;
                let mut k = 0;
                loop {
                    let lam = env.rate(v);
                    let u: f64 = r.random();
                    let t_next = t - (1.0 - u).ln() / lam;
                    while k < nt && times[k] < t_next {
                        accs[k].add(&hist, m, v);
                        k += 1;
                    }
                    if k == nt {
                        break;
                    }
                    t = t_next;
                    proposals += 1;
                    if env.propose(v, &mut vs, &mut n, &mut r)? {
                        accepted += 1;
                    }
                }
            }
            Ok(ChunkOut {
                counts: accs.iter().map(|a| a.counts.clone()).collect(),
                overflow: accs.iter().map(|a| a.overflow).collect(),
                sums: accs.iter().map(|a| (a.sum_e, a.sum_e2)).collect(),
                data,
                proposals,
                accepted,
            })
        })
        .collect();

    // merge in chunk order so the result does not depend on the thread count
    let mut total: Vec<Accumulator> = (0..nt).map(|_| Accumulator::new(hist.len())).collect();
    let mut data = Vec::with_capacity(f0.data().len());
    let (mut proposals, mut accepted) = (0u64, 0u64);
    for out in outs {
        let out = out?;
        for k in 0..nt {
            let acc = &mut total[k];
            for (a, b) in acc.counts.iter_mut().zip(&out.counts[k]) {
                *a += b;
            }
            acc.overflow += out.overflow[k];
            acc.sum_e += out.sums[k].0;
            acc.sum_e2 += out.sums[k].1;
            acc.n += (out.data.len() / d) as u64;
        }
        data.extend_from_slice(&out.data);
        proposals += out.proposals;
        accepted += out.accepted;
    }
    if proposals >= 10_000 && (accepted as f64) < MIN_ACCEPTANCE * proposals as f64 {
        return Err(Error::Numerical(format!(
            "rejection acceptance rate {:.2e} below {MIN_ACCEPTANCE:e}: envelope rate {:.3e} at the bulk velocity is far above σ",
            accepted as f64 / proposals as f64,
            env.rate(m.u0())
        )));
    }
    let probs = cell_probabilities(&hist, m);
    let points = times
        .iter()
        .zip(&total)
        .map(|(&t, acc)| {
            let s = acc.snapshot(m, &probs);
            TracePoint {
                t,
                entropy: s.entropy,
                entropy_stderr: s.entropy_stderr,
                temperature: s.temperature,
                temperature_stderr: s.temperature_stderr,
                l1: s.l1,
            }
        })
        .collect();
    Ok(JumpRun {
        trace: SimulationTrace {
            meta: TraceMeta {
                kernel: kernel.id(),
                method: "jump".into(),
                size: f0.len() as u64,
                seed: Some(opts.seed),
                dt: None,
                time_scale: 1.0,
            },
            points,
        },
        final_state: ParticleEnsemble::new(d, data, opts.seed)?,
        proposals,
        accepted,
    })
}

// ---------------------------------------------------------------------------
// grid scheme

#[derive(Debug, Clone, Copy, Default)]
pub struct GridEvolveOptions {
    /// Step size; defaults to `0.01 / max R` with `R` the tensor row sums.
    pub dt: Option<f64>,
    /// Record every `k`-th step (default 1).
    pub record_every: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct GridRun {
    pub trace: SimulationTrace,
    pub final_state: GridDensity,
    /// Largest `|mass − 1| / dt` before renormalization.
    pub max_mass_drift_rate: f64,
}

/// Exponential-Euler evolution `f ← e^{−R dt} f + (1 − e^{−R dt}) R⁻¹ L₊f`
/// on the tensor grid, with mass renormalization after each step.
pub fn grid_evolve(f0: &GridDensity, tensor: &KernelTensor, t_end: f64, opts: GridEvolveOptions) -> Result<GridRun> {
    if f0.spec() != tensor.spec() {
        return Err(Error::GridMismatch(format!("initial data on {} but tensor on {}", f0.spec().id(), tensor.spec().id())));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return invalid(format!("t_end must be positive, got {t_end}"));
    }
    let rates = tensor.row_sums();
    let max_rate = tensor.max_rate();
    let dt_req = opts.dt.unwrap_or(0.01 / max_rate);
    if !(dt_req > 0.0) || dt_req > 0.5 / max_rate * (1.0 + 1e-12) {
        return invalid(format!("dt = {dt_req} must lie in (0, 0.5 / max σ = {}]", 0.5 / max_rate));
    }
    let steps = (t_end / dt_req).ceil() as usize;
    let dt = t_end / steps as f64;
    let every = opts.record_every.unwrap_or(1).max(1);
    let spec = tensor.spec();
    let vol = spec.cell_volume();
    let m = tensor.maxwellian();
    let m_mass: f64 = tensor.m_values().iter().sum::<f64>() * vol;
    let m_hat: Vec<f64> = tensor.m_values().iter().map(|x| x / m_mass).collect();
    let e2: Vec<f64> = spec.centers().iter().map(|v| m.dist2(v)).collect();
    let decay: Vec<f64> = rates.iter().map(|r| (-r * dt).exp()).collect();
    let gain_w: Vec<f64> = rates.iter().map(|&r| if r > 0.0 { -(-r * dt).exp_m1() / r } else { dt }).collect();

    let observe = |t: f64, f: &[f64]| -> TracePoint {
        let mut h = 0.0;
        let mut temp = 0.0;
        let mut l1 = 0.0;
        for i in 0..f.len() {
            if f[i] > 0.0 {
                h += f[i] * (f[i] / m_hat[i]).ln();
            }
            temp += e2[i] * (f[i] - m_hat[i]);
            l1 += (f[i] - m_hat[i]).abs();
        }
        TracePoint {
            t,
            entropy: h * vol,
            entropy_stderr: 0.0,
            temperature: temp * vol,
            temperature_stderr: 0.0,
            l1: l1 * vol,
        }
    };

    let mut f = f0.values().to_vec();
    let mut points = vec![observe(0.0, &f)];
    let mut max_drift: f64 = 0.0;
    for step in 1..=steps {
        let g = tensor.gain_values(&f);
        for i in 0..f.len() {
            f[i] = decay[i] * f[i] + gain_w[i] * g[i];
        }
        if let Some((i, x)) = f.iter().enumerate().find(|(_, x)| **x < -1e-12) {
            return Err(Error::Numerical(format!("negative value {x} in cell {i} at step {step}: corrupted tensor")));
        }
        let mass: f64 = f.iter().sum::<f64>() * vol;
        max_drift = max_drift.max((mass - 1.0).abs() / dt);
        for x in f.iter_mut() {
            *x = x.max(0.0) / mass;
        }
        if step % every == 0 || step == steps {
            points.push(observe(step as f64 * dt, &f));
        }
    }
    Ok(GridRun {
        trace: SimulationTrace {
            meta: TraceMeta {
                kernel: tensor.kernel_id().to_string(),
                method: "grid".into(),
                size: spec.len() as u64,
                seed: None,
                dt: Some(dt),
                time_scale: 1.0,
            },
            points,
        },
        final_state: GridDensity::from_raw(spec.clone(), f)?,
        max_mass_drift_rate: max_drift,
    })
}

// ---------------------------------------------------------------------------
// post-processing

/// Map a trace of the grazing kernel with parameter `ε` to the time scale on
/// which its decay rates are `ε`-independent: `t ← ε² t`.
pub fn rescale_grazing(trace: &SimulationTrace, epsilon: f64) -> Result<SimulationTrace> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return invalid(format!("epsilon must lie in (0, 1], got {epsilon}"));
    }
    let s = epsilon * epsilon;
    let mut out = trace.clone();
    out.meta.time_scale *= s;
    for p in &mut out.points {
        p.t *= s;
    }
    Ok(out)
}

/// Time window for [`fit_decay_rate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitWindow {
    Range { t_min: f64, t_max: f64 },
    /// From `t_min` while `|value| ≥ min_snr · stderr` (the whole remaining
    /// trace for deterministic traces).
    SignalToNoise { t_min: f64, min_snr: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    /// `−slope` of `log|value|` against `t`.
    pub rate: f64,
    pub r2: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
    /// Set when the window had to be cut short because the observable
    /// reached zero or changed sign.
    pub shrunk_from: Option<f64>,
}

/// Least-squares fit of `log|observable|` against `t` on a window.
pub fn fit_decay_rate(trace: &SimulationTrace, obs: Observable, window: FitWindow) -> Result<DecayFit> {
    let (t_min, t_max, snr) = match window {
        FitWindow::Range { t_min, t_max } => (t_min, t_max, None),
        FitWindow::SignalToNoise { t_min, min_snr } => (t_min, f64::INFINITY, Some(min_snr)),
    };
    let mut sel: Vec<(f64, f64)> = Vec::new();
    let mut sign = 0.0;
    let mut shrunk_from = None;
    for p in trace.points.iter().filter(|p| p.t >= t_min && p.t <= t_max) {
        let (x, se) = value_of(p, obs);
        if let Some(k) = snr {
            if se > 0.0 && x.abs() < k * se {
                break;
            }
        }
        if sign == 0.0 {
            sign = x.signum();
        }
        if x == 0.0 || x.signum() != sign || !x.is_finite() {
            if snr.is_none() {
                shrunk_from = Some(t_max);
            }
            break;
        }
        sel.push((p.t, x.abs().ln()));
    }
    if sel.len() < 3 {
        return invalid(format!("fit window [{t_min}, {t_max}] holds fewer than three usable points"));
    }
    let n = sel.len() as f64;
    let mt = sel.iter().map(|p| p.0).sum::<f64>() / n;
    let my = sel.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = sel.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = sel.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = sel.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    Ok(DecayFit {
        rate: -slope,
        r2,
        t_min: sel[0].0,
        t_max: sel[sel.len() - 1].0,
        points: sel.len(),
        shrunk_from,
    })
}

// ---------------------------------------------------------------------------
// heavy-tail probe

/// Partial `L^p(M)` integrals of `g(t) = e^{−σ t} h₀` with
/// `h₀(v) = exp(c |v − u0|²)` over balls of growing radius.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundReport {
    pub c: f64,
    pub p: f64,
    pub t: f64,
    /// `1/(2pθ)`: `h₀ ∉ L^p(M)` once `c` reaches it.
    pub critical_c: f64,
    /// `(R, ∫_{|v−u0|<R} |g|^p M dv)`.
    pub partials: Vec<(f64, f64)>,
    pub monotone: bool,
    /// `I(R_max) / I(0.9 R_max) − 1`.
    pub tail_growth: f64,
    /// `c ≥ critical_c` and the partial integrals keep growing.
    pub diverges: bool,
}

impl LowerBoundReport {
    pub const CSV_HEADER: &'static str = "radius,partial_integral";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for (r, v) in &self.partials {
            let _ = writeln!(out, "{r:.6},{v:.10e}");
        }
        out
    }
}

/// Evaluate the partial `p`-norm integrals of the heavy-tailed solution
/// `e^{−σ(v)t} h₀(v)` on balls of radius up to `r_max √θ`.
pub fn lower_bound_probe(
    c: f64,
    kernel: &CollisionKernel,
    m: &Maxwellian,
    t: f64,
    p: f64,
    r_max: f64,
    n_radii: usize,
) -> Result<LowerBoundReport> {
    let th = m.theta();
    if !(c > 0.0 && c < 1.0 / (4.0 * th)) {
        return invalid(format!("h₀ = exp(c|v−u0|²) is in L²(M) only for 0 < c < 1/(4θ) = {}", 1.0 / (4.0 * th)));
    }
    if !(p >= 1.0 && t >= 0.0 && r_max > 0.0 && n_radii >= 2) {
        return invalid("need p ≥ 1, t ≥ 0, r_max > 0 and at least two radii");
    }
    let d = m.dim();
    let sd = th.sqrt();
    let norm = sphere_area(d - 1) * (2.0 * th * std::f64::consts::PI).powf(-0.5 * d as f64);
    let a = c * p - 0.5 / th;
    let maxwell = kernel.gamma() == 0.0;
    let sigma0 = collision_frequency(kernel, m, m.u0())?;
    let sigma = |r: f64| -> Result<f64> {
        if maxwell {
            return Ok(sigma0);
        }
        let mut v = m.u0().to_vec();
        v[0] += r;
        collision_frequency(kernel, m, &v)
    };
    let radii: Vec<f64> = (1..=n_radii).map(|k| r_max * sd * k as f64 / n_radii as f64).collect();
    let mut partials = Vec::with_capacity(n_radii);
    let mut acc = 0.0;
    let mut lo = 0.0;
    for &rr in &radii {
        let piece = if maxwell {
            (-p * sigma0 * t).exp()
                * quadrature::integrate(|r| r.powi(d as i32 - 1) * (a * r * r).exp(), lo, rr, &[])?
        } else {
            let mut err = None;
            let v = quadrature::integrate(
                |r| match sigma(r) {
                    Ok(s) => r.powi(d as i32 - 1) * (a * r * r - p * s * t).exp(),
                    Err(e) => {
                        err = Some(e);
                        0.0
                    }
                },
                lo,
                rr,
                &[],
            )?;
            if let Some(e) = err {
                return Err(e);
            }
            v
        };
        acc += norm * piece;
        partials.push((rr, acc));
        lo = rr;
    }
    let monotone = partials.windows(2).all(|w| w[1].1 >= w[0].1);
    let last = acc;
    let at = {
        let r9 = 0.9 * radii[radii.len() - 1];
        let tail = if maxwell {
            (-p * sigma0 * t).exp() * quadrature::integrate(|r| r.powi(d as i32 - 1) * (a * r * r).exp(), r9, radii[radii.len() - 1], &[])?
        } else {
            quadrature::integrate(
                |r| r.powi(d as i32 - 1) * (a * r * r - p * sigma(r).unwrap_or(sigma0) * t).exp(),
                r9,
                radii[radii.len() - 1],
                &[],
            )?
        };
        last - norm * tail
    };
    let tail_growth = last / at - 1.0;
    let critical_c = 1.0 / (2.0 * p * th);
    Ok(LowerBoundReport {
        c,
        p,
        t,
        critical_c,
        partials,
        monotone,
        tail_growth,
        diverges: c >= critical_c && monotone && tail_growth > 0.05,
    })
}
