use super::{collision_frequency, Carleman, HyperplaneRule};
use crate::error::{invalid, Error, Result};
use crate::functionals::{FunctionalReport, Method, PhiFunction, RATIO_MAX, RATIO_MIN};
use crate::grid::{GridDensity, GridSpec};
use crate::kernel::CollisionKernel;
use crate::quadrature::Rule;
use crate::Maxwellian;
use rayon::prelude::*;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

/// Options for [`precompute_kernel`].
#[derive(Debug, Clone)]
pub struct TensorOptions {
    pub rule: HyperplaneRule,
    /// Refuse tensors whose storage would exceed this many bytes.
    pub memory_budget: usize,
    /// Directory for the binary cache; `None` disables caching.
    pub cache_dir: Option<PathBuf>,
    /// Cells within this Chebyshev distance of the source cell are
    /// integrated with a tensor Gauss-Legendre rule instead of the midpoint.
    pub near_radius: usize,
    pub near_order: usize,
}

impl Default for TensorOptions {
    fn default() -> Self {
        TensorOptions { rule: HyperplaneRule::default(), memory_budget: 2 << 30, cache_dir: None, near_radius: 4, near_order: 4 }
    }
}

/// Dense transition table on a grid.
///
/// `weights[i·N + j]` is the rate at which mass sitting at the center of cell
/// `i` jumps into cell `j` (the kernel integrated over cell `j`). Entries are
/// symmetrized so that `M_i W_ij = M_j W_ji` holds to rounding; the row sums
/// are the discrete collision frequencies, and `sigma` holds the independently
/// quadratured `σ(v_i)` for validation.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTensor {
    spec: GridSpec,
    m: Maxwellian,
    kernel_id: String,
    rule_id: String,
    weights: Vec<f64>,
    row_sums: Vec<f64>,
    sigma: Vec<f64>,
    m_values: Vec<f64>,
}

impl KernelTensor {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn maxwellian(&self) -> &Maxwellian {
        &self.m
    }

    pub fn kernel_id(&self) -> &str {
        &self.kernel_id
    }

    pub fn rule_id(&self) -> &str {
        &self.rule_id
    }

    pub fn len(&self) -> usize {
        self.spec.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.weights[i * n..(i + 1) * n]
    }

    pub fn row_sums(&self) -> &[f64] {
        &self.row_sums
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// `M` at the cell centers.
    pub fn m_values(&self) -> &[f64] {
        &self.m_values
    }

    pub fn max_rate(&self) -> f64 {
        self.row_sums.iter().copied().fold(0.0, f64::max)
    }

    fn check_grid(&self, f: &GridDensity) -> Result<()> {
        if f.spec() != &self.spec {
            return Err(Error::GridMismatch(format!(
                "density lives on {} but the tensor on {}",
                f.spec().id(),
                self.spec.id()
            )));
        }
        Ok(())
    }

    /// Gain term `L₊f(v_j) = Σ_i f_i W_ij`, computed through the symmetric
    /// fluxes as `M_j Σ_i W_ji (f_i/M_i)` so that rows are read contiguously.
    pub fn gain_values(&self, f: &[f64]) -> Vec<f64> {
        let x: Vec<f64> = f.iter().zip(&self.m_values).map(|(a, b)| a / b).collect();
        (0..self.len())
            .into_par_iter()
            .map(|j| {
                let row = self.row(j);
                let s: f64 = row.iter().zip(&x).map(|(w, xi)| w * xi).sum();
                self.m_values[j] * s
            })
            .collect()
    }

    /// `Lf = L₊f − R f` with `R` the row sums.
    pub fn apply_values(&self, f: &[f64]) -> Vec<f64> {
        let mut g = self.gain_values(f);
        for ((gj, rj), fj) in g.iter_mut().zip(&self.row_sums).zip(f) {
            *gj -= rj * fj;
        }
        g
    }

    /// Largest relative detailed-balance defect `|M_i W_ij − M_j W_ji|` over
    /// `pairs` random index pairs.
    pub fn detailed_balance_residual(&self, pairs: usize, seed: u64) -> f64 {
        use rand::Rng;
        let mut r = crate::rng::stream(seed, 0);
        let n = self.len();
        let mut worst: f64 = 0.0;
        for _ in 0..pairs {
            let i = r.random_range(0..n);
            let j = r.random_range(0..n);
            let a = self.m_values[i] * self.weight(i, j);
            let b = self.m_values[j] * self.weight(j, i);
            let mx = a.max(b);
            if mx > 0.0 {
                worst = worst.max((a - b).abs() / mx);
            }
        }
        worst
    }

    /// Maximum relative gap between row sums and the quadratured `σ` over
    /// cells within `radius` (in units of `√θ`) of the bulk velocity.
    pub fn row_sum_defect(&self, radius: f64) -> f64 {
        let lim = radius * radius * self.m.theta();
        let mut v = vec![0.0; self.spec.dim()];
        let mut worst: f64 = 0.0;
        for i in 0..self.len() {
            self.spec.cell_center(i, &mut v);
            if self.m.dist2(&v) <= lim {
                worst = worst.max((self.row_sums[i] / self.sigma[i] - 1.0).abs());
            }
        }
        worst
    }

    fn cache_name(kernel_id: &str, spec: &GridSpec, rule_id: &str, m: &Maxwellian) -> String {
        let clean: String =
            kernel_id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect();
        format!("{clean}-{:016x}-t{}-{rule_id}.lbkt", spec.hash(), m.theta())
    }

    /// Binary layout (little endian): `b"LBKT"`, `u32` version, `u64` dim,
    /// `u64` n, `u64` grid hash, `f64` half-width, `f64` θ, `dim × f64` u0,
    /// `u64` length + bytes of the kernel id, same for the rule id, then
    /// `N²` weights (row-major), `N` row sums, `N` σ values, `N` M values.
    pub fn save(&self, path: &Path) -> Result<()> {
        let n = self.len();
        let mut buf = Vec::with_capacity(8 * (n * n + 3 * n) + 256);
        buf.extend_from_slice(b"LBKT");
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&(self.spec.dim() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.spec.n() as u64).to_le_bytes());
        buf.extend_from_slice(&self.spec.hash().to_le_bytes());
        buf.extend_from_slice(&self.spec.half_width().to_le_bytes());
        buf.extend_from_slice(&self.m.theta().to_le_bytes());
        for u in self.m.u0() {
            buf.extend_from_slice(&u.to_le_bytes());
        }
        for s in [&self.kernel_id, &self.rule_id] {
            buf.extend_from_slice(&(s.len() as u64).to_le_bytes());
            buf.extend_from_slice(s.as_bytes());
        }
        for v in [&self.weights, &self.row_sums, &self.sigma, &self.m_values] {
            for x in v.iter() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        let tmp = path.with_extension("tmp");
        std::fs::File::create(&tmp)?.write_all(&buf)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let bad = |msg: &str| Error::Cache(format!("{}: {msg}", path.display()));
        let mut pos = 0usize;
        let rd = |b: &[u8], p: &mut usize, len: usize| -> Result<Vec<u8>> {
            let s = b.get(*p..*p + len).ok_or_else(|| bad("truncated"))?;
            *p += len;
            Ok(s.to_vec())
        };
        if rd(&bytes, &mut pos, 4)? != b"LBKT" {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(rd(&bytes, &mut pos, 4)?.try_into().expect("4 bytes"));
        if version != 1 {
            return Err(bad("unsupported version"));
        }
        let rd_u64 = |b: &[u8], p: &mut usize| -> Result<u64> {
            Ok(u64::from_le_bytes(rd(b, p, 8)?.try_into().expect("8 bytes")))
        };
        let rd_f64 = |b: &[u8], p: &mut usize| -> Result<f64> { rd_u64(b, p).map(f64::from_bits) };
        let dim = rd_u64(&bytes, &mut pos)? as usize;
        let n = rd_u64(&bytes, &mut pos)? as usize;
        let hash = rd_u64(&bytes, &mut pos)?;
        let half = rd_f64(&bytes, &mut pos)?;
        let theta = rd_f64(&bytes, &mut pos)?;
        let mut u0 = Vec::with_capacity(dim);
        for _ in 0..dim.min(8) {
            u0.push(rd_f64(&bytes, &mut pos)?);
        }
        let spec = GridSpec::new(u0.clone(), half, n).map_err(|e| bad(&e.to_string()))?;
        if spec.hash() != hash {
            return Err(bad("grid hash mismatch"));
        }
        let rd_str = |p: &mut usize| -> Result<String> {
            let len = rd_u64(&bytes, p)? as usize;
            String::from_utf8(rd(&bytes, p, len)?).map_err(|_| bad("invalid id"))
        };
        let kernel_id = rd_str(&mut pos)?;
        let rule_id = rd_str(&mut pos)?;
        let cells = spec.len();
        let expected = pos + 8 * (cells * cells + 3 * cells);
        if bytes.len() != expected {
            return Err(bad("length does not match header"));
        }
        let mut floats = bytes[pos..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut grab = |k: usize| -> Vec<f64> { floats.by_ref().take(k).collect() };
        let weights = grab(cells * cells);
        let row_sums = grab(cells);
        let sigma = grab(cells);
        let m_values = grab(cells);
        let m = Maxwellian::new(u0, theta).map_err(|e| bad(&e.to_string()))?;
        Ok(KernelTensor { spec, m, kernel_id, rule_id, weights, row_sums, sigma, m_values })
    }
}

/// Grid evaluation of `D_Φ(f) = ½ ∫∫ M(v) k(v → w) Ψ(f/M(v), f/M(w)) dv dw`.
pub fn phi_dissipation_grid(tensor: &KernelTensor, f: &GridDensity, phi: &PhiFunction) -> Result<FunctionalReport> {
    tensor.check_grid(f)?;
    let mut clamped = 0u64;
    let x: Vec<f64> = f
        .values()
        .iter()
        .zip(&tensor.m_values)
        .map(|(fi, mi)| {
            let r = fi / mi;
            if r < RATIO_MIN {
                clamped += 1;
                RATIO_MIN
            } else {
                r.min(RATIO_MAX)
            }
        })
        .collect();
    let n = tensor.len();
    let total: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = tensor.row(i);
            let inner: f64 = row.iter().zip(&x).map(|(w, xj)| w * phi.psi(x[i], *xj)).sum();
            tensor.m_values[i] * inner
        })
        .sum();
    Ok(FunctionalReport {
        value: 0.5 * total * tensor.spec.cell_volume(),
        std_error: 0.0,
        method: Method::CarlemanGrid,
        samples_or_cells: n as u64,
        clamped,
        boundary_stencil: false,
    })
}

/// Gain operator `L₊f` as an unnormalized grid density.
pub fn gain_apply(tensor: &KernelTensor, f: &GridDensity) -> Result<GridDensity> {
    tensor.check_grid(f)?;
    GridDensity::from_raw(f.spec().clone(), tensor.gain_values(f.values()))
}

fn chebyshev(a: &[usize], b: &[usize]) -> usize {
    a.iter().zip(b).map(|(x, y)| x.abs_diff(*y)).max().unwrap_or(0)
}

/// Tabulate the transition weights of `kernel` around `m` on `spec`.
pub fn precompute_kernel(
    kernel: &CollisionKernel,
    m: &Maxwellian,
    spec: &GridSpec,
    opts: &TensorOptions,
) -> Result<KernelTensor> {
    let d = spec.dim();
    if d != m.dim() || d != kernel.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), got: d });
    }
    if d > 3 || (d == 3 && spec.n() > 32) {
        return invalid(format!("kernel tensors need d = 2, or d = 3 with n <= 32 (got d = {d}, n = {})", spec.n()));
    }
    let cells = spec.len();
    let bytes = 8usize.saturating_mul(cells).saturating_mul(cells + 4);
    if bytes > opts.memory_budget {
        return Err(Error::Budget(format!(
            "kernel tensor for {} needs {:.2} GiB, budget is {:.2} GiB",
            spec.id(),
            bytes as f64 / (1u64 << 30) as f64,
            opts.memory_budget as f64 / (1u64 << 30) as f64
        )));
    }
    let kernel_id = kernel.id();
    let rule_id = opts.rule.id();
    let cache_path = opts.cache_dir.as_ref().map(|dir| dir.join(KernelTensor::cache_name(&kernel_id, spec, &rule_id, m)));
    if let Some(p) = &cache_path {
        if p.exists() {
            if let Ok(t) = KernelTensor::load(p) {
                if t.kernel_id == kernel_id && t.rule_id == rule_id && &t.spec == spec && &t.m == m {
                    return Ok(t);
                }
            }
        }
    }

    let carleman = Carleman::new(kernel, m, opts.rule)?;
    let h = spec.h();
    let vol = spec.cell_volume();
    let near = Rule::gauss_legendre(opts.near_order.max(1));
    let self_rule = Rule::gauss_legendre(if d == 2 { 8 } else { 5 });

    let mut weights = vec![0.0; cells * cells];
    weights.par_chunks_mut(cells).enumerate().for_each(|(i, row)| {
        let mut vi = vec![0.0; d];
        let mut vj = vec![0.0; d];
        let mut ii = vec![0usize; d];
        let mut jj = vec![0usize; d];
        let mut w = vec![0.0; d];
        spec.cell_center(i, &mut vi);
        spec.multi_index(i, &mut ii);
        for (j, slot) in row.iter_mut().enumerate() {
            spec.multi_index(j, &mut jj);
            spec.cell_center(j, &mut vj);
            let dist = chebyshev(&ii, &jj);
            *slot = if dist == 0 {
                self_cell(&carleman, &vi, h, &self_rule, &mut w)
            } else if dist <= opts.near_radius {
                cell_gauss(&carleman, &vi, &vj, h, &near, &mut w)
            } else {
                carleman.eval_unchecked(&vi, &vj) * vol
            };
        }
    });
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::Numerical("kernel tensor has a negative or non-finite entry".into()));
    }
    let m_values: Vec<f64> = spec.centers().iter().map(|v| m.eval(v)).collect();
    let row_sums: Vec<f64> = weights.par_chunks(cells).map(|r| r.iter().sum()).collect();
    balance(&mut weights, &m_values, &row_sums)?;
    let centers = spec.centers();
    let sigma = centers
        .par_iter()
        .map(|v| collision_frequency(kernel, m, v))
        .collect::<Result<Vec<_>>>()?;
    let t = KernelTensor { spec: spec.clone(), m: m.clone(), kernel_id, rule_id, weights, row_sums, sigma, m_values };
    if let Some(p) = &cache_path {
        std::fs::create_dir_all(p.parent().expect("cache file has a parent"))?;
        t.save(p)?;
    }
    Ok(t)
}

/// Replace the one-sided cell integrals by the symmetric fluxes
/// `F_ij = ½(M_i W_ij + M_j W_ji)`, then rescale `F_ij → a_i a_j F_ij` until
/// every row again sums to the quadratured loss rate `targets[i]`. The result
/// satisfies detailed balance to rounding and keeps the row sums.
fn balance(weights: &mut [f64], m_values: &[f64], targets: &[f64]) -> Result<()> {
    let n = m_values.len();
    for i in 0..n {
        for j in i + 1..n {
            let f = 0.5 * (m_values[i] * weights[i * n + j] + m_values[j] * weights[j * n + i]);
            weights[i * n + j] = f / m_values[i];
            weights[j * n + i] = f / m_values[j];
        }
    }
    let mut a = vec![1.0; n];
    for _ in 0..500 {
        // S_i = Σ_j F_ij a_j / M_i = Σ_j W_ij a_j
        let s: Vec<f64> = weights.par_chunks(n).map(|r| r.iter().zip(&a).map(|(w, x)| w * x).sum::<f64>()).collect();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            if targets[i] > 0.0 && s[i] > 0.0 {
                worst = worst.max((a[i] * s[i] / targets[i] - 1.0).abs());
                a[i] = (a[i] * targets[i] / s[i]).sqrt();
            }
        }
        if worst < 1e-14 {
            weights.par_chunks_mut(n).enumerate().for_each(|(i, r)| {
                for (w, aj) in r.iter_mut().zip(&a) {
                    *w *= a[i] * aj;
                }
            });
            return Ok(());
        }
    }
    Err(Error::Numerical("kernel tensor balancing did not converge".into()))
}

/// `∫_{cell j} k(v_i → w) dw` by a tensor Gauss-Legendre rule.
fn cell_gauss(c: &Carleman, vi: &[f64], vj: &[f64], h: f64, rule: &Rule, w: &mut [f64]) -> f64 {
    let d = vi.len();
    let q = rule.len();
    let mut idx = vec![0usize; d];
    let mut acc = 0.0;
    loop {
        let mut wt = 1.0;
        for k in 0..d {
            w[k] = vj[k] + 0.5 * h * rule.nodes[idx[k]];
            wt *= rule.weights[idx[k]];
        }
        acc += wt * c.eval_unchecked(vi, w);
        let mut a = 0;
        loop {
            idx[a] += 1;
            if idx[a] < q {
                break;
            }
            idx[a] = 0;
            a += 1;
            if a == d {
                return acc * (0.5 * h).powi(d as i32);
            }
        }
    }
}

/// `∫_{cell i} k(v_i → w) dw` over the cell containing the singular point,
/// split into one pyramid per face with apex at `v_i`; the radial Jacobian
/// `λ^{d−1}` cancels the `|w − v_i|^{1−d}` singularity.
fn self_cell(c: &Carleman, vi: &[f64], h: f64, rule: &Rule, w: &mut [f64]) -> f64 {
    let d = vi.len();
    let a = 0.5 * h;
    let q = rule.len();
    let mut total = 0.0;
    for axis in 0..d {
        for sign in [-1.0, 1.0] {
            // tangential coordinates t ∈ [−a, a]^{d−1}, radial λ ∈ (0, 1]
            let mut idx = vec![0usize; d];
            loop {
                let mut wt = 1.0;
                let mut p = vec![0.0; d];
                let mut t = 0;
                for k in 0..d {
                    if k == axis {
                        p[k] = sign * a;
                    } else {
                        p[k] = a * rule.nodes[idx[t]];
                        wt *= rule.weights[idx[t]] * a;
                        t += 1;
                    }
                }
                let lam = 0.5 * (1.0 + rule.nodes[idx[d - 1]]);
                wt *= 0.5 * rule.weights[idx[d - 1]];
                for k in 0..d {
                    w[k] = vi[k] + lam * p[k];
                }
                total += wt * a * lam.powi(d as i32 - 1) * c.eval_unchecked(vi, w);
                let mut b = 0;
                let done = loop {
                    idx[b] += 1;
                    if idx[b] < q {
                        break false;
                    }
                    idx[b] = 0;
                    b += 1;
                    if b == d {
                        break true;
                    }
                };
                if done {
                    break;
                }
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_tensor() -> (KernelTensor, Maxwellian) {
        let m = Maxwellian::standard(2, 1.0).unwrap();
        let k = CollisionKernel::maxwell_molecules(2).unwrap();
        let spec = GridSpec::around(&m, 6.0, 24).unwrap();
        (precompute_kernel(&k, &m, &spec, &TensorOptions::default()).unwrap(), m)
    }

    #[test]
    fn maxwell_rows_sum_to_one_inside() {
        let (t, _) = small_tensor();
        assert!(t.row_sum_defect(3.0) < 0.01, "{}", t.row_sum_defect(3.0));
        assert!(t.sigma().iter().all(|s| (s - 1.0).abs() < 1e-12));
    }

    #[test]
    fn tensor_detailed_balance_and_positivity() {
        let (t, _) = small_tensor();
        assert!(t.detailed_balance_residual(1000, 3) <= 1e-12);
        assert!(t.weights.iter().all(|w| *w >= 0.0));
    }

    #[test]
    fn gain_of_equilibrium_is_equilibrium() {
        let (t, m) = small_tensor();
        let g = GridDensity::maxwellian(t.spec(), &m).unwrap();
        let lp = gain_apply(&t, &g).unwrap();
        let vol = t.spec().cell_volume();
        let err: f64 = lp.values().iter().zip(g.values()).map(|(a, b)| (a - b).abs()).sum::<f64>() * vol;
        assert!(err < 0.01, "{err}");
        // L M = 0 exactly with row-sum losses
        let lm = t.apply_values(g.values());
        let worst = lm.iter().map(|x| x.abs()).fold(0.0, f64::max);
        assert!(worst < 1e-15, "{worst}");
    }

    #[test]
    fn cache_round_trip_is_bit_exact() {
        let m = Maxwellian::new(vec![0.1, 0.0], 1.2).unwrap();
        let k = CollisionKernel::maxwell_molecules(2).unwrap();
        let spec = GridSpec::around(&m, 6.0, 10).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let opts = TensorOptions { cache_dir: Some(dir.path().to_path_buf()), ..Default::default() };
        let a = precompute_kernel(&k, &m, &spec, &opts).unwrap();
        let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(files.len(), 1);
        let path = files[0].as_ref().unwrap().path();
        let b = KernelTensor::load(&path).unwrap();
        assert_eq!(a, b);
        let c = precompute_kernel(&k, &m, &spec, &opts).unwrap();
        assert_eq!(a, c);
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&path, bytes).unwrap();
        assert!(KernelTensor::load(&path).is_err());
    }

    #[test]
    fn refuses_over_budget_and_large_3d() {
        let m = Maxwellian::standard(3, 1.0).unwrap();
        let k = CollisionKernel::maxwell_molecules(3).unwrap();
        let big = GridSpec::around(&m, 6.0, 48).unwrap();
        assert!(precompute_kernel(&k, &m, &big, &TensorOptions::default()).is_err());
        let spec = GridSpec::around(&m, 6.0, 16).unwrap();
        let opts = TensorOptions { memory_budget: 1 << 20, ..Default::default() };
        assert!(matches!(precompute_kernel(&k, &m, &spec, &opts), Err(Error::Budget(_))));
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let (t, m) = small_tensor();
        let other = GridSpec::around(&m, 6.0, 20).unwrap();
        let g = GridDensity::maxwellian(&other, &m).unwrap();
        assert!(matches!(gain_apply(&t, &g), Err(Error::GridMismatch(_))));
    }

    fn maxwell_tensor(n: usize) -> (KernelTensor, Maxwellian, CollisionKernel) {
        let m = Maxwellian::new(vec![0.2, -0.1], 1.0).unwrap();
        let k = CollisionKernel::maxwell_molecules(2).unwrap();
        let spec = GridSpec::around(&m, 6.0, n).unwrap();
        (precompute_kernel(&k, &m, &spec, &TensorOptions::default()).unwrap(), m, k)
    }

    #[test]
    fn gain_contracts_entropy_and_energy() {
        use crate::density::DensitySuite;
        use crate::functionals::relative_entropy;
        let (t, m, k) = maxwell_tensor(40);
        let gb = k.gamma_b().unwrap();
        let suite = DensitySuite::shifted_gaussians(&m).unwrap();
        for (name, f) in &suite.entries {
            let g = GridDensity::project(t.spec(), f.as_density()).unwrap();
            let lp = gain_apply(&t, &g).unwrap();
            assert!((lp.mass() / g.mass() - 1.0).abs() < 0.01, "{name}");
            let hf = relative_entropy(&g, &m).unwrap().value;
            let lp = GridDensity::from_values(t.spec().clone(), lp.into_values()).unwrap();
            let hl = relative_entropy(&lp, &m).unwrap().value;
            assert!(hl <= (1.0 - gb) * hf * 1.01, "{name}: {hl} vs {}", (1.0 - gb) * hf);
            // ∫|v − u0|² Lf = −γ_b ∫|v − u0|² (f − M)
            let lf = GridDensity::from_raw(t.spec().clone(), t.apply_values(g.values())).unwrap();
            let e2 = |v: &[f64]| m.dist2(v);
            let lhs = lf.integrate(e2);
            let rhs = -gb * (g.integrate(e2) - 2.0 * m.theta());
            assert!((lhs - rhs).abs() <= 0.02 * rhs.abs(), "{name}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn grid_dissipation_matches_monte_carlo() {
        use crate::density::Gaussian;
        use crate::functionals::{entropy_dissipation_mc, McOptions};
        let (t, m, k) = maxwell_tensor(48);
        let f = Gaussian::relative_to(&m, 1.0, 1.0).unwrap();
        let g = GridDensity::project(t.spec(), &f).unwrap();
        let grid = phi_dissipation_grid(&t, &g, &PhiFunction::entropy()).unwrap().value;
        let mc = entropy_dissipation_mc(&f, &m, &k, McOptions::new(1_000_000, 4)).unwrap();
        assert!((grid - mc.value).abs() < 4.0 * mc.std_error + 0.01 * mc.value, "{grid} vs {mc:?}");
        let chi = phi_dissipation_grid(&t, &g, &PhiFunction::chi_square()).unwrap().value;
        assert!(chi >= 0.0);
    }

    #[test]
    fn small_three_dimensional_tensor() {
        let m = Maxwellian::standard(3, 1.0).unwrap();
        let k = CollisionKernel::hard_spheres().unwrap();
        let spec = GridSpec::around(&m, 5.0, 8).unwrap();
        let opts = TensorOptions { rule: HyperplaneRule::radial(), near_radius: 1, near_order: 2, ..Default::default() };
        let t = precompute_kernel(&k, &m, &spec, &opts).unwrap();
        assert!(t.detailed_balance_residual(1000, 1) <= 1e-12);
        let g = GridDensity::maxwellian(&spec, &m).unwrap();
        let lm = t.apply_values(g.values());
        assert!(lm.iter().all(|x| x.abs() < 1e-14));
    }
}
