//! One function per experiment kind. Each composes library calls, records
//! assertions with the constant they check, and collects CSV outputs.

use crate::config::{Config, ExperimentKind, SimMethod};
use crate::outcome::Outcome;
use crate::presets::{is_hard_spheres, is_maxwell_d3, parse_kernel};
use crate::RunError;
use linboltz::carleman::{
    comparison_constant, dissipation_comparison_check, kernel_ratio_on_pairs, precompute_kernel, ComparisonRow, ComparisonSearch,
    TensorOptions,
};
use linboltz::fokker_planck::{
    appendix_b_moments, appendix_b_moments_mc, bakry_emery_csv, bakry_emery_scan, default_scan_grid, diffusion_matrix_closed,
    diffusion_matrix_mc, fp_radial_evolve, j_gamma, DiffusionGamma, DiffusionMatrix, RadialOptions, ALPHA_1, ALPHA_2,
};
use linboltz::functionals::{entropy_dissipation_mc, relative_entropy_density, McOptions};
use linboltz::simulate::{
    fit_decay_rate, grid_evolve, jump_simulate, lower_bound_probe, rescale_grazing, DecayFit, FitWindow, GridEvolveOptions, JumpOptions,
    Observable, Schedule, SimulationTrace,
};
use linboltz::{rng, CollisionKernel, DensitySuite, Gaussian, GridDensity, GridSpec, KernelVariant, Maxwellian, ParticleEnsemble};
use std::f64::consts::PI;
use std::fmt::Write as _;

pub struct Context<'a> {
    pub cfg: &'a Config,
    pub seed: u64,
}

impl Context<'_> {
    fn maxwellian(&self, theta: f64) -> Result<Maxwellian, RunError> {
        let d = self.cfg.maxwellian.dim;
        let u0 = self.cfg.maxwellian.u0.clone().unwrap_or_else(|| vec![0.0; d]);
        Ok(Maxwellian::new(u0, theta)?)
    }

    fn theta(&self) -> f64 {
        self.cfg.maxwellian.theta
    }

    fn kernel(&self, key: &str, value: Option<&String>, default: &str) -> Result<CollisionKernel, RunError> {
        let name = value.map(String::as_str).unwrap_or(default);
        let k = parse_kernel(name, self.cfg.maxwellian.dim).map_err(|e| RunError::Config(format!("config key `{key}`: {e}")))?;
        if k.dim() != self.cfg.maxwellian.dim {
            return Err(RunError::Config(format!(
                "config key `{key}`: kernel `{name}` is {}-dimensional but maxwellian.dim = {}",
                k.dim(),
                self.cfg.maxwellian.dim
            )));
        }
        Ok(k)
    }

    fn suite(&self, m: &Maxwellian) -> Result<DensitySuite, RunError> {
        let name = self.cfg.suite.as_deref().unwrap_or("default");
        DensitySuite::preset(name, m).map_err(|e| RunError::Config(format!("config key `suite`: {e}")))
    }

    fn mc_samples(&self, default: u64) -> u64 {
        self.cfg.budget.mc_samples.unwrap_or(default)
    }

    fn points(&self) -> usize {
        self.cfg.budget.points.unwrap_or(linboltz::simulate::DEFAULT_POINTS)
    }
}

/// Check that config-derived objects can be built, without running anything.
pub fn dry_run(ctx: &Context) -> Result<(), RunError> {
    let m = ctx.maxwellian(ctx.theta())?;
    ctx.suite(&m)?;
    let cfg = ctx.cfg;
    match cfg.experiment {
        ExperimentKind::CompareKernels => {
            ctx.kernel("kernel", cfg.kernel.as_ref(), "hard-spheres-d3")?;
            ctx.kernel("reference_kernel", cfg.reference_kernel.as_ref(), "maxwell")?;
        }
        ExperimentKind::FokkerPlanck | ExperimentKind::BakryEmery | ExperimentKind::GrazingLimit => {
            if cfg.maxwellian.dim != 3 {
                return Err(RunError::Config(format!("config key `maxwellian.dim`: {} needs d = 3", cfg.experiment)));
            }
        }
        ExperimentKind::LowerBoundProbe => {
            ctx.kernel("kernel", cfg.kernel.as_ref(), "hard-spheres-d3")?;
        }
        _ => {
            ctx.kernel("kernel", cfg.kernel.as_ref(), "maxwell")?;
        }
    }
    if cfg.experiment == ExperimentKind::Simulate && cfg.options.method == SimMethod::Grid && cfg.maxwellian.dim != 2 {
        return Err(RunError::Config("config key `options.method`: the grid method runs in d = 2 only".into()));
    }
    Ok(())
}

pub fn run(ctx: &Context) -> Result<Outcome, RunError> {
    dry_run(ctx)?;
    match ctx.cfg.experiment {
        ExperimentKind::VerifyInequality => verify_inequality(ctx),
        ExperimentKind::Simulate => simulate(ctx),
        ExperimentKind::CompareKernels => compare_kernels(ctx),
        ExperimentKind::GrazingLimit => grazing_limit(ctx),
        ExperimentKind::FokkerPlanck => fokker_planck(ctx),
        ExperimentKind::BakryEmery => bakry_emery(ctx),
        ExperimentKind::LowerBoundProbe => lower_bound(ctx),
    }
}

/// The constant `λ` in `D(f) ≥ λ H(f|M)` for a kernel, with its name.
pub fn entropy_constant(k: &CollisionKernel, m: &Maxwellian, rho0: f64) -> Result<(f64, String), RunError> {
    let th = m.theta();
    if is_hard_spheres(k) {
        return Ok((th.sqrt() / 4.0, "lambda = sqrt(theta)/4".into()));
    }
    let gb = k.gamma_b()?;
    match k.variant() {
        KernelVariant::Maxwellian | KernelVariant::Grazing { gamma: 0, .. } => Ok((gb, "lambda = gamma_b".into())),
        KernelVariant::HardPotential { .. } => {
            let reference = CollisionKernel::maxwellian(k.dim(), k.angular().clone())?;
            let c = comparison_constant(k, &reference, m, rho0, ComparisonSearch::default())?;
            Ok((gb * c.c_theta, "lambda = gamma_b * C_theta (computed)".into()))
        }
        KernelVariant::Grazing { epsilon, .. } => {
            let reference = CollisionKernel::grazing(k.dim(), epsilon, 0)?;
            let c = comparison_constant(k, &reference, m, rho0, ComparisonSearch::default())?;
            Ok((gb * c.c_theta, "lambda = gamma_b * C_theta (computed)".into()))
        }
    }
}

fn verify_inequality(ctx: &Context) -> Result<Outcome, RunError> {
    let cfg = ctx.cfg;
    let kernel = ctx.kernel("kernel", cfg.kernel.as_ref(), "maxwell")?;
    let thetas = cfg.options.thetas.clone().unwrap_or_else(|| vec![ctx.theta()]);
    let n = ctx.mc_samples(1_000_000);
    let mut o = Outcome::default();
    let mut csv = String::from("theta,density,H,D,D_stderr,lambda,D_over_H,holds\n");
    let mut min_ratio = f64::INFINITY;
    for &th in &thetas {
        let m = ctx.maxwellian(th)?;
        let (lambda, lname) = entropy_constant(&kernel, &m, cfg.options.rho0)?;
        for (name, f) in &ctx.suite(&m)?.entries {
            let h = relative_entropy_density(f, &m)?.value;
            let d = entropy_dissipation_mc(f.as_density(), &m, &kernel, McOptions::new(n, ctx.seed))?;
            let slack = 3.0 * d.std_error;
            let holds = d.value >= lambda * h - slack;
            min_ratio = min_ratio.min(d.value / h);
            let _ = writeln!(csv, "{th},{name},{h:.10e},{:.10e},{:.3e},{lambda:.8},{:.6},{holds}", d.value, d.std_error, d.value / h);
            o.at_least(
                format!("D >= lambda H [theta={th}, {name}]"),
                &lname,
                d.value,
                lambda * h - slack,
                format!("3 sigma = {slack:.3e}"),
            );
        }
        o.metric(format!("lambda_theta{th}"), lambda);
    }
    o.metric("min_D_over_H", min_ratio);
    o.file("verify_inequality.csv", csv);
    Ok(o)
}

fn fit_temperature(trace: &SimulationTrace, stochastic: bool) -> Result<DecayFit, RunError> {
    let window = if stochastic {
        FitWindow::SignalToNoise { t_min: 0.0, min_snr: 20.0 }
    } else {
        FitWindow::Range { t_min: 0.0, t_max: f64::INFINITY }
    };
    Ok(fit_decay_rate(trace, Observable::Temperature, window)?)
}

fn simulate(ctx: &Context) -> Result<Outcome, RunError> {
    let cfg = ctx.cfg;
    let m = ctx.maxwellian(ctx.theta())?;
    let kernel = ctx.kernel("kernel", cfg.kernel.as_ref(), "maxwell")?;
    let f0 = Gaussian::relative_to(&m, cfg.options.initial_shift, cfg.options.initial_ratio)?;
    let t_end = cfg.budget.t_end.unwrap_or(8.0);
    let mut o = Outcome::default();
    let (trace, stochastic) = match cfg.options.method {
        SimMethod::Jump => {
            let n = cfg.budget.particles.unwrap_or(100_000);
            let ens = ParticleEnsemble::sample_from(&f0, ctx.seed, n)?;
            let opts = JumpOptions { schedule: Schedule::uniform(t_end, ctx.points())?, seed: ctx.seed, histogram: None };
            let run = jump_simulate(&ens, &m, &kernel, &opts)?;
            o.metric("acceptance_rate", run.acceptance_rate());
            o.metric("accepted_jumps", run.accepted as f64);
            (run.trace, true)
        }
        SimMethod::Grid => {
            let n = cfg.budget.grid_n.unwrap_or(linboltz::grid::default_cells(2));
            let spec = GridSpec::around(&m, 6.0, n)?;
            let tensor = precompute_kernel(&kernel, &m, &spec, &TensorOptions::default())?;
            let f = GridDensity::project(&spec, &f0)?;
            let run = grid_evolve(&f, &tensor, t_end, GridEvolveOptions { dt: cfg.budget.dt, record_every: None })?;
            o.metric("max_mass_drift_rate", run.max_mass_drift_rate);
            (run.trace, false)
        }
    };
    let fit = fit_temperature(&trace, stochastic)?;
    o.metric("temperature_rate", fit.rate);
    o.metric("temperature_fit_r2", fit.r2);
    if kernel.gamma() == 0.0 {
        let gb = kernel.gamma_b()?;
        o.within("temperature decay rate", "gamma_b", fit.rate, gb, 0.05 * gb, "5% relative");
        o.at_least("temperature fit r^2", "log-linear decay", fit.r2, 0.999, "r^2 >= 0.999");
    } else {
        let first = trace.points.first().map(|p| p.entropy).unwrap_or(0.0);
        let last = trace.points.last().map(|p| p.entropy).unwrap_or(0.0);
        o.check("entropy decreases", "H(f(t)|M) <= H(f0|M)", last, first, last <= first, "end vs start");
    }
    o.file("trace.csv", trace.to_csv());
    Ok(o)
}

fn compare_kernels(ctx: &Context) -> Result<Outcome, RunError> {
    let cfg = ctx.cfg;
    let m = ctx.maxwellian(ctx.theta())?;
    let b = ctx.kernel("kernel", cfg.kernel.as_ref(), "hard-spheres-d3")?;
    let bt = ctx.kernel("reference_kernel", cfg.reference_kernel.as_ref(), "maxwell")?;
    let mut o = Outcome::default();
    let cc = comparison_constant(&b, &bt, &m, cfg.options.rho0, ComparisonSearch::default())?;
    o.metric("C_tilde", cc.c_tilde);
    o.metric("C_theta", cc.c_theta);
    let known = is_hard_spheres(&b) && is_maxwell_d3(&bt);
    let (c, cname) = if known {
        (m.theta().sqrt() / 2.0, "C_theta = sqrt(theta)/2")
    } else {
        (cc.c_theta, "C_theta (computed)")
    };
    if known {
        o.at_least("convolution constant", cname, cc.c_tilde, c - 1e-3, "1e-3");
    }
    let pairs = kernel_ratio_on_pairs(&b, &bt, &m, cfg.options.pairs, ctx.seed)?;
    o.metric("min_pointwise_ratio", pairs.min_ratio);
    o.at_least(format!("min k_B/k_ref over {} pairs", pairs.pairs), cname, pairs.min_ratio, c - 1e-3, "1e-3");
    let suite = ctx.suite(&m)?;
    let rows = dissipation_comparison_check(&suite, &m, &b, &bt, c, McOptions::new(ctx.mc_samples(1_000_000), ctx.seed))?;
    let mut csv = format!("{}\n", ComparisonRow::CSV_HEADER);
    for r in &rows {
        csv.push_str(&r.csv_row());
        csv.push('\n');
        o.check(
            format!("D_B >= C D_ref [{}]", r.density),
            cname,
            r.d_b,
            c * r.d_b_tilde - 3.0 * r.gap_se,
            r.holds,
            format!("3 sigma of the paired gap = {:.3e}", 3.0 * r.gap_se),
        );
    }
    o.file("comparison.csv", csv);
    Ok(o)
}

fn radial_temperature_rate(theta: f64, points: usize) -> Result<f64, RunError> {
    let m0 = Maxwellian::standard(3, theta)?;
    let f0 = Gaussian::relative_to(&m0, 0.0, 2.0)?;
    let run = fp_radial_evolve(&f0, theta, 8.0, RadialOptions { record_points: points, ..Default::default() })?;
    Ok(fit_temperature(&run.trace, false)?.rate)
}

fn grazing_limit(ctx: &Context) -> Result<Outcome, RunError> {
    let cfg = ctx.cfg;
    let m = ctx.maxwellian(ctx.theta())?;
    let f0 = Gaussian::relative_to(&m, cfg.options.initial_shift, cfg.options.initial_ratio)?;
    let n = cfg.budget.particles.unwrap_or(100_000);
    let t_base = cfg.budget.t_end.unwrap_or(8.0);
    let mut o = Outcome::default();
    let fp_rate = radial_temperature_rate(m.theta(), ctx.points())?;
    o.metric("fokker_planck_temperature_rate", fp_rate);
    let ens = ParticleEnsemble::sample_from(&f0, ctx.seed, n)?;
    for &eps in &cfg.options.epsilons {
        let kernel = CollisionKernel::grazing(3, eps, 0)?;
        let gb = kernel.gamma_b()?;
        let opts = JumpOptions { schedule: Schedule::uniform(t_base / gb * 0.5, ctx.points())?, seed: ctx.seed, histogram: None };
        let run = jump_simulate(&ens, &m, &kernel, &opts)?;
        let fit = fit_temperature(&run.trace, true)?;
        let rescaled = rescale_grazing(&run.trace, eps)?;
        let rfit = fit_temperature(&rescaled, true)?;
        o.within(format!("temperature rate [eps={eps}]"), "gamma_eps = eps^2/2", fit.rate, gb, 0.05 * gb, "5% relative");
        o.within(format!("rescaled rate [eps={eps}]"), "1/2", rfit.rate, gb / (eps * eps), 0.05 * gb / (eps * eps), "5% relative");
        o.within(
            format!("rescaled rate vs Fokker-Planck [eps={eps}]"),
            "Fokker-Planck temperature rate",
            rfit.rate,
            fp_rate,
            0.1 * fp_rate,
            "10% relative",
        );
        o.metric(format!("rate_eps{eps}"), fit.rate);
        o.metric(format!("rescaled_rate_eps{eps}"), rfit.rate);
        o.metric(format!("acceptance_eps{eps}"), run.acceptance_rate());
        o.file(format!("grazing_eps{eps}.csv"), run.trace.to_csv());
        o.file(format!("grazing_eps{eps}_rescaled.csv"), rescaled.to_csv());
    }
    Ok(o)
}

fn fokker_planck(ctx: &Context) -> Result<Outcome, RunError> {
    let cfg = ctx.cfg;
    let th = ctx.theta();
    let m = ctx.maxwellian(th)?;
    let mut o = Outcome::default();

    // radial solver from N(0, 2θ)
    let m0 = Maxwellian::standard(3, th)?;
    let f0 = Gaussian::relative_to(&m0, 0.0, 2.0)?;
    let t_end = cfg.budget.t_end.unwrap_or(10.0);
    let run = fp_radial_evolve(&f0, th, t_end, RadialOptions { dt: cfg.budget.dt, record_points: ctx.points(), ..Default::default() })?;
    let efit = fit_decay_rate(&run.trace, Observable::Entropy, FitWindow::Range { t_min: 0.0, t_max: t_end })?;
    o.at_least("radial entropy decay rate", "1/2", efit.rate, 0.5 * (1.0 - 0.05), "5% relative");
    o.at_least("radial mass conservation", "mass error <= 1e-8", -run.max_mass_error, -1e-8, "1e-8 absolute");
    o.metric("radial_entropy_rate", efit.rate);
    o.file("radial_trace.csv", run.trace.to_csv());
    o.file("radial_profile.csv", run.profile_csv());

    // diffusion matrices
    let d0 = diffusion_matrix_closed(0, &m, m.u0())?;
    let dev = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .map(|(i, j)| (d0[(i, j)] - if i == j { th / 4.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max);
    o.at_least("D_0(u0) = (theta/4) I", "theta/4", -dev, -1e-14 * th, "1e-14 relative");
    let n = ctx.mc_samples(1_000_000);
    let dm1 = DiffusionMatrix::new(DiffusionGamma::One, m.clone())?;
    let mut dcsv = String::from("v1,v2,v3,rel_frobenius_error,max_z,min_eigenvalue\n");
    let mut worst = 0.0f64;
    for k in 0..cfg.options.random_v {
        let mut r = rng::stream(ctx.seed, 1 << 32 | k as u64);
        let v: Vec<f64> = m.u0().iter().map(|u| u + (2.0 * th).sqrt() * rng::normal(&mut r)).collect();
        let cf = diffusion_matrix_closed(1, &m, &v)?;
        let mc = diffusion_matrix_mc(1.0, &m, &v, n, ctx.seed.wrapping_add(k as u64))?;
        let rel = (&mc.matrix - &cf).norm() / cf.norm();
        let lmin = dm1.check_psd(&v)?;
        worst = worst.max(rel);
        let _ = writeln!(dcsv, "{:.6},{:.6},{:.6},{rel:.3e},{:.3},{lmin:.6e}", v[0], v[1], v[2], mc.max_z(&cf, 1e-300));
    }
    o.at_least("closed-form D_1 vs Monte Carlo (worst v)", "0.1% relative", -worst, -1e-3, "relative Frobenius error");
    o.file("diffusion_d1.csv", dcsv);

    // J_gamma on the suite
    let n_grid = cfg.budget.grid_n.unwrap_or(linboltz::grid::default_cells(3));
    let spec = GridSpec::around(&m, 6.0, n_grid)?;
    let d0m = DiffusionMatrix::new(DiffusionGamma::Zero, m.clone())?;
    let two_alpha = 7.0 / 12.0 * (2.0 * th / PI).sqrt();
    let mut jcsv = String::from("density,H,J0,J1,J0_over_H,J1_over_H\n");
    for (name, f) in &ctx.suite(&m)?.entries {
        let h = relative_entropy_density(f, &m)?.value;
        let g = GridDensity::project(&spec, f.as_density())?;
        let j0 = j_gamma(&g, &m, &d0m)?.value;
        let j1 = j_gamma(&g, &m, &dm1)?.value;
        let _ = writeln!(jcsv, "{name},{h:.10e},{j0:.10e},{j1:.10e},{:.6},{:.6}", j0 / h, j1 / h);
        o.at_least(format!("J_0 >= H/2 [{name}]"), "1/2", j0, 0.5 * h * 0.98, "2% grid tolerance");
        o.at_least(format!("J_1 >= 2 alpha H [{name}]"), "2 alpha = (7/12) sqrt(2 theta/pi)", j1, two_alpha * h * 0.98, "2% grid tolerance");
    }
    o.file("j_gamma.csv", jcsv);
    Ok(o)
}

fn bakry_emery(ctx: &Context) -> Result<Outcome, RunError> {
    let th = ctx.theta();
    let mut o = Outcome::default();
    let rep = bakry_emery_scan(th, None)?;
    o.at_least("min A over (0, 20]", "alpha_1 = 143/60", rep.min_a, ALPHA_1 - 1e-6, "1e-6");
    o.at_least("min (A - B) over (0, 20]", "alpha_2 = 7/3", rep.min_a_minus_b, ALPHA_2 - 1e-6, "1e-6");
    o.at_least("series/direct seam", "continuity", -rep.seam_jump, -1e-9, "jump <= 1e-9");
    o.at_least("measured alpha", "alpha = (7/24) sqrt(2 theta/pi)", rep.alpha_measured, rep.alpha_reference, "none");
    o.metric("min_A", rep.min_a);
    o.metric("argmin_A", rep.argmin_a);
    o.metric("min_A_minus_B", rep.min_a_minus_b);
    o.metric("argmin_A_minus_B", rep.argmin_a_minus_b);
    o.metric("alpha_measured", rep.alpha_measured);
    o.metric("alpha_reference", rep.alpha_reference);
    o.file("bakry_emery.csv", bakry_emery_csv(th, &default_scan_grid())?);

    let gb = 0.5 / th;
    let n = ctx.mc_samples(1_000_000);
    let mut csv = String::from("a1,a2,a3,scalar_closed,scalar_mc,scalar_rel_error,matrix_rel_error\n");
    let mut worst = 0.0f64;
    for k in 0..ctx.cfg.options.moment_draws {
        let mut r = rng::stream(ctx.seed, 1 << 33 | k as u64);
        let a: Vec<f64> = (0..3).map(|_| (2.0 * th).sqrt() * rng::normal(&mut r)).collect();
        let cf = appendix_b_moments(&a, gb)?;
        let mc = appendix_b_moments_mc(&a, gb, n, ctx.seed.wrapping_add(k as u64))?;
        let es = (mc.scalar - cf.scalar).abs() / cf.scalar;
        let em = (&mc.matrix.matrix - &cf.matrix).norm() / cf.matrix.norm();
        worst = worst.max(es).max(em);
        let _ = writeln!(csv, "{:.6},{:.6},{:.6},{:.10e},{:.10e},{es:.3e},{em:.3e}", a[0], a[1], a[2], cf.scalar, mc.scalar);
    }
    o.at_least("closed-form moments vs Monte Carlo (worst draw)", "0.1% relative", -worst, -1e-3, "relative error");
    o.file("moments.csv", csv);
    Ok(o)
}

fn lower_bound(ctx: &Context) -> Result<Outcome, RunError> {
    let cfg = ctx.cfg;
    let m = ctx.maxwellian(ctx.theta())?;
    let kernel = ctx.kernel("kernel", cfg.kernel.as_ref(), "hard-spheres-d3")?;
    let op = &cfg.options;
    let rep = lower_bound_probe(op.c, &kernel, &m, op.t, op.p, op.r_max, op.n_radii)
        .map_err(|e| RunError::Config(format!("config key `options.c`: {e}")))?;
    let mut o = Outcome::default();
    let expect = op.c >= rep.critical_c;
    o.check(
        "L^p blow-up iff c >= 1/(2 p theta)",
        "critical c = 1/(2 p theta)",
        op.c,
        rep.critical_c,
        rep.diverges == expect,
        format!("diverges = {}", rep.diverges),
    );
    o.metric("critical_c", rep.critical_c);
    o.metric("tail_growth", rep.tail_growth);
    o.file("lower_bound.csv", rep.to_csv());
    Ok(o)
}
