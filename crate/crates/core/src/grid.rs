//! Uniform cell grids on a cube around the bulk velocity, and densities
//! stored as cell values.

use crate::density::Density;
use crate::error::{invalid, Error, Result};
use crate::rng::SimRng;
use crate::Maxwellian;
use rand::Rng;

/// Default box half-width in units of `√θ`.
pub const DEFAULT_L: f64 = 6.0;

/// Default cells per axis: 64 in two dimensions, 48 in three, 16 beyond.
pub fn default_cells(dim: usize) -> usize {
    match dim {
        2 => 64,
        3 => 48,
        _ => 16,
    }
}

/// An axis-aligned cube `[c - a, c + a]^d` split into `n^d` equal cells.
/// Cells are numbered with the first axis varying slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    center: Vec<f64>,
    half_width: f64,
    n: usize,
}

impl GridSpec {
    pub fn new(center: Vec<f64>, half_width: f64, n: usize) -> Result<Self> {
        if center.len() < 2 || center.len() > 8 {
            return invalid(format!("grid dimension must lie in 2..=8, got {}", center.len()));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return invalid(format!("grid half-width must be positive, got {half_width}"));
        }
        if n < 2 {
            return invalid(format!("need at least 2 cells per axis, got {n}"));
        }
        (n as u128)
            .checked_pow(center.len() as u32)
            .filter(|&c| c <= u32::MAX as u128)
            .ok_or_else(|| Error::Budget(format!("{n}^{} cells is too many", center.len())))?;
        Ok(GridSpec { center, half_width, n })
    }

    /// Cube `u0 ± L√θ` with `n` cells per axis.
    pub fn around(m: &Maxwellian, l: f64, n: usize) -> Result<Self> {
        Self::new(m.u0().to_vec(), l * m.theta().sqrt(), n)
    }

    /// `u0 ± 6√θ` with the default resolution for the dimension.
    pub fn default_for(m: &Maxwellian) -> Self {
        Self::around(m, DEFAULT_L, default_cells(m.dim())).expect("default grid is valid")
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Cell edge length.
    pub fn h(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim() as i32)
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lower(&self, axis: usize) -> f64 {
        self.center[axis] - self.half_width
    }

    pub fn multi_index(&self, mut i: usize, out: &mut [usize]) {
        for k in (0..self.dim()).rev() {
            out[k] = i % self.n;
            i /= self.n;
        }
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &k| acc * self.n + k)
    }

    /// Coordinate of the center of cell `k` along `axis`.
    pub fn axis_center(&self, axis: usize, k: usize) -> f64 {
        self.lower(axis) + (k as f64 + 0.5) * self.h()
    }

    pub fn cell_center(&self, i: usize, out: &mut [f64]) {
        let h = self.h();
        let mut i = i;
        for k in (0..self.dim()).rev() {
            out[k] = self.lower(k) + ((i % self.n) as f64 + 0.5) * h;
            i /= self.n;
        }
    }

    pub fn centers(&self) -> Vec<Vec<f64>> {
        let mut v = vec![0.0; self.dim()];
        (0..self.len())
            .map(|i| {
                self.cell_center(i, &mut v);
                v.clone()
            })
            .collect()
    }

    /// Cell containing `v`, if inside the box.
    pub fn locate(&self, v: &[f64]) -> Option<usize> {
        let h = self.h();
        let mut idx = 0;
        for (k, x) in v.iter().enumerate() {
            let t = ((x - self.lower(k)) / h).floor();
            if !(t >= 0.0 && t < self.n as f64) {
                return None;
            }
            idx = idx * self.n + t as usize;
        }
        Some(idx)
    }

    /// Stable 64-bit FNV-1a hash of the geometry.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= *b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        eat(&(self.dim() as u64).to_le_bytes());
        eat(&(self.n as u64).to_le_bytes());
        eat(&self.half_width.to_bits().to_le_bytes());
        for c in &self.center {
            eat(&c.to_bits().to_le_bytes());
        }
        h
    }

    pub fn id(&self) -> String {
        format!("grid-d{}-n{}-{:016x}", self.dim(), self.n, self.hash())
    }
}

/// A probability density stored as nonnegative cell values.
#[derive(Debug, Clone)]
pub struct GridDensity {
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridDensity {
    /// Wrap raw cell values and renormalize to unit mass.
    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::GridMismatch(format!("{} values for {} cells", values.len(), spec.len())));
        }
        if let Some(x) = values.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
            return invalid(format!("cell values must be finite and nonnegative, found {x}"));
        }
        let mut g = GridDensity { spec, values };
        g.renormalize()?;
        Ok(g)
    }

    /// Cell values without renormalization (used for unnormalized operator output).
    pub fn from_raw(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::GridMismatch(format!("{} values for {} cells", values.len(), spec.len())));
        }
        Ok(GridDensity { spec, values })
    }

    /// Sample `f` at cell centers and renormalize.
    pub fn project(spec: &GridSpec, f: &dyn Density) -> Result<Self> {
        if f.dim() != spec.dim() {
            return Err(Error::DimensionMismatch { expected: spec.dim(), got: f.dim() });
        }
        let mut v = vec![0.0; spec.dim()];
        let values = (0..spec.len())
            .map(|i| {
                spec.cell_center(i, &mut v);
                f.pdf(&v)
            })
            .collect();
        Self::from_values(spec.clone(), values)
    }

    pub fn maxwellian(spec: &GridSpec, m: &Maxwellian) -> Result<Self> {
        Self::project(spec, m)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spec.cell_volume()
    }

    /// Rescale to unit mass; a second call is a no-op.
    pub fn renormalize(&mut self) -> Result<()> {
        let m = self.mass();
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Numerical(format!("cannot normalize grid density of mass {m}")));
        }
        if (m - 1.0).abs() > 1e-13 {
            for x in &mut self.values {
                *x /= m;
            }
        }
        Ok(())
    }

    /// `∫ φ f` by the midpoint rule.
    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, phi: F) -> f64 {
        let mut v = vec![0.0; self.spec.dim()];
        let mut s = 0.0;
        for (i, f) in self.values.iter().enumerate() {
            if *f != 0.0 {
                self.spec.cell_center(i, &mut v);
                s += f * phi(&v);
            }
        }
        s * self.spec.cell_volume()
    }

    /// Mean velocity.
    pub fn mean(&self) -> Vec<f64> {
        (0..self.spec.dim()).map(|k| self.integrate(|v| v[k])).collect()
    }

    /// `ln(f/M)` at every cell center, floored at `ln(1e-30)`.
    pub fn ln_ratios(&self, m: &Maxwellian) -> Vec<f64> {
        let mut v = vec![0.0; self.spec.dim()];
        self.values
            .iter()
            .enumerate()
            .map(|(i, f)| {
                self.spec.cell_center(i, &mut v);
                if *f > 0.0 {
                    f.ln() - m.ln_eval(&v)
                } else {
                    crate::functionals::LN_RATIO_MIN
                }
            })
            .collect()
    }

    /// Multilinear interpolation of `ln(f/M)` between cell centers, held
    /// constant beyond the outermost centers.
    pub fn ln_ratio_interp(&self, v: &[f64], m: &Maxwellian) -> f64 {
        let d = self.spec.dim();
        let n = self.spec.n;
        let h = self.spec.h();
        let mut base = [0usize; 8];
        let mut frac = [0f64; 8];
        for k in 0..d {
            let t = ((v[k] - self.spec.lower(k)) / h - 0.5).clamp(0.0, (n - 1) as f64);
            let i = (t.floor() as usize).min(n - 2);
            base[k] = i;
            frac[k] = t - i as f64;
        }
        let mut acc = 0.0;
        let mut idx = vec![0usize; d];
        let mut c = vec![0.0; d];
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            for k in 0..d {
                let bit = (corner >> k) & 1;
                idx[k] = base[k] + bit;
                w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
            }
            if w == 0.0 {
                continue;
            }
            let i = self.spec.flat_index(&idx);
            self.spec.cell_center(i, &mut c);
            let f = self.values[i];
            let lr = if f > 0.0 { f.ln() - m.ln_eval(&c) } else { crate::functionals::LN_RATIO_MIN };
            acc += w * lr;
        }
        acc
    }

    /// Cell index drawn with probability proportional to its mass.
    fn sample_cell(&self, cdf: &[f64], u: f64) -> usize {
        cdf.partition_point(|&c| c < u).min(cdf.len() - 1)
    }

    /// Draw `n` samples (uniform within cells) from the grid density.
    pub fn sample_points(&self, rng: &mut SimRng, n: usize) -> Vec<f64> {
        let d = self.spec.dim();
        let cdf = self.cdf();
        let h = self.spec.h();
        let mut out = vec![0.0; n * d];
        let mut c = vec![0.0; d];
        for chunk in out.chunks_mut(d) {
            let i = self.sample_cell(&cdf, rng.random::<f64>() * cdf[cdf.len() - 1]);
            self.spec.cell_center(i, &mut c);
            for k in 0..d {
                chunk[k] = c[k] + (rng.random::<f64>() - 0.5) * h;
            }
        }
        out
    }

    fn cdf(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.values
            .iter()
            .map(|x| {
                acc += x;
                acc
            })
            .collect()
    }
}

/// Grid densities act as continuous densities through log-ratio interpolation
/// against the Maxwellian they are attached to.
#[derive(Debug, Clone)]
pub struct InterpolatedGrid {
    grid: GridDensity,
    m: Maxwellian,
    cdf: Vec<f64>,
}

impl InterpolatedGrid {
    pub fn new(grid: GridDensity, m: Maxwellian) -> Result<Self> {
        if grid.spec().dim() != m.dim() {
            return Err(Error::DimensionMismatch { expected: m.dim(), got: grid.spec().dim() });
        }
        let cdf = grid.cdf();
        Ok(InterpolatedGrid { grid, m, cdf })
    }

    pub fn grid(&self) -> &GridDensity {
        &self.grid
    }
}

impl Density for InterpolatedGrid {
    fn dim(&self) -> usize {
        self.m.dim()
    }

    fn ln_pdf(&self, v: &[f64]) -> f64 {
        self.grid.ln_ratio_interp(v, &self.m) + self.m.ln_eval(v)
    }

    fn ln_ratio(&self, v: &[f64], m: &Maxwellian) -> f64 {
        if *m == self.m {
            self.grid.ln_ratio_interp(v, m)
        } else {
            self.ln_pdf(v) - m.ln_eval(v)
        }
    }

    fn sample_into(&self, rng: &mut SimRng, out: &mut [f64]) {
        let d = self.dim();
        let h = self.grid.spec.h();
        let i = self.grid.sample_cell(&self.cdf, rng.random::<f64>() * self.cdf[self.cdf.len() - 1]);
        let mut c = vec![0.0; d];
        self.grid.spec.cell_center(i, &mut c);
        for k in 0..d {
            out[k] = c[k] + (rng.random::<f64>() - 0.5) * h;
        }
    }

    fn label(&self) -> String {
        format!("grid:{}", self.grid.spec.id())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn indexing_round_trip() {
        let g = GridSpec::new(vec![0.0, 1.0, -1.0], 2.0, 5).unwrap();
        let mut idx = [0usize; 3];
        let mut c = [0.0; 3];
        for i in 0..g.len() {
            g.multi_index(i, &mut idx);
            assert_eq!(g.flat_index(&idx), i);
            g.cell_center(i, &mut c);
            assert_eq!(g.locate(&c), Some(i));
        }
        assert_eq!(g.locate(&[10.0, 0.0, 0.0]), None);
    }

    #[test]
    fn maxwellian_projection_has_unit_mass() {
        let m = Maxwellian::new(vec![0.5, -0.5], 2.0).unwrap();
        let spec = GridSpec::default_for(&m);
        let g = GridDensity::maxwellian(&spec, &m).unwrap();
        assert!((g.mass() - 1.0).abs() < 1e-12);
        // the midpoint rule is spectrally accurate for the Gaussian, so the raw
        // mass before renormalization is already 1
        let raw: f64 = spec.centers().iter().map(|v| m.eval(v)).sum::<f64>() * spec.cell_volume();
        assert!((raw - 1.0).abs() < 1e-8);
    }

    #[test]
    fn hash_distinguishes_geometry() {
        let a = GridSpec::new(vec![0.0, 0.0], 6.0, 32).unwrap();
        let b = GridSpec::new(vec![0.0, 0.0], 6.0, 33).unwrap();
        let c = GridSpec::new(vec![0.0, 1e-9], 6.0, 32).unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash(), a.clone().hash());
    }

    #[test]
    fn interpolation_reproduces_affine_log_ratio() {
        let m = Maxwellian::standard(2, 1.0).unwrap();
        let spec = GridSpec::around(&m, 6.0, 24).unwrap();
        // f/M ∝ exp(0.3 v1 - 0.2 v2) is a shifted Gaussian
        let vals: Vec<f64> = spec.centers().iter().map(|v| m.eval(v) * (0.3 * v[0] - 0.2 * v[1]).exp()).collect();
        let g = GridDensity::from_values(spec, vals).unwrap();
        let c = g.ln_ratio_interp(&[0.0, 0.0], &m);
        let x = g.ln_ratio_interp(&[0.77, -1.31], &m);
        assert!((x - c - (0.3 * 0.77 + 0.2 * 1.31)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn renormalization_is_idempotent(vals in prop::collection::vec(0.0f64..5.0, 16), scale in 0.1f64..10.0) {
            prop_assume!(vals.iter().sum::<f64>() > 1e-3);
            let spec = GridSpec::new(vec![0.0, 0.0], 1.0, 4).unwrap();
            let raw: Vec<f64> = vals.iter().map(|x| x * scale).collect();
            let mut g = GridDensity::from_values(spec, raw).unwrap();
            let once = g.values().to_vec();
            g.renormalize().unwrap();
            prop_assert_eq!(once, g.values().to_vec());
            prop_assert!((g.mass() - 1.0).abs() < 1e-12);
        }
    }
}
