//! Particle ensembles and histogram estimators of their observables.

use crate::error::{invalid, Error, Result};
use crate::grid::GridSpec;
use crate::special::normal_interval;
use crate::{rng, Density, Maxwellian};
use std::io::{Read, Write};
use std::path::Path;

/// `N` equally weighted velocity samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    dim: usize,
    data: Vec<f64>,
    seed: u64,
}

const MAGIC: &[u8; 4] = b"LBPE";

impl ParticleEnsemble {
    pub fn new(dim: usize, data: Vec<f64>, seed: u64) -> Result<Self> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return invalid("ensemble needs at least one sample of the declared dimension");
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("ensemble contains a non-finite velocity".into()));
        }
        Ok(ParticleEnsemble { dim, data, seed })
    }

    /// `n` independent draws from `f`, reproducible from `seed`.
    pub fn sample_from(f: &dyn Density, seed: u64, n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("ensemble size must be at least 1");
        }
        let d = f.dim();
        let mut rng = rng::stream(seed, 0);
        let mut data = vec![0.0; n * d];
        for chunk in data.chunks_mut(d) {
            f.sample_into(&mut rng, chunk);
        }
        ParticleEnsemble::new(d, data, seed)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for v in self.iter() {
            for (a, b) in m.iter_mut().zip(v) {
                *a += b;
            }
        }
        let n = self.len() as f64;
        m.iter().map(|x| x / n).collect()
    }

    /// Write a binary checkpoint: magic, dimension, count, seed, then the
    /// velocities as little-endian `f64`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(28 + 8 * self.data.len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(self.dim as u64).to_le_bytes());
        buf.extend_from_slice(&(self.len() as u64).to_le_bytes());
        buf.extend_from_slice(&self.seed.to_le_bytes());
        for x in &self.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        std::fs::File::create(path)?.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 28 || &bytes[..4] != MAGIC {
            return Err(Error::Cache(format!("{} is not a particle checkpoint", path.display())));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[4 + 8 * i..12 + 8 * i].try_into().expect("8 bytes"));
        let (dim, n, seed) = (word(0) as usize, word(1) as usize, word(2));
        if bytes.len() != 28 + 8 * dim * n {
            return Err(Error::Cache(format!("{}: truncated checkpoint", path.display())));
        }
        let data = bytes[28..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Self::new(dim, data, seed)
    }
}

/// Maxwellian probability of every cell of `spec` (product of 1-D normal
/// interval probabilities) plus the probability of lying outside the box.
pub fn cell_probabilities(spec: &GridSpec, m: &Maxwellian) -> (Vec<f64>, f64) {
    let d = spec.dim();
    let h = spec.h();
    let axis: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            (0..spec.n())
                .map(|i| {
                    let a = spec.lower(k) + i as f64 * h;
                    normal_interval(m.u0()[k], m.theta(), a, a + h)
                })
                .collect()
        })
        .collect();
    let mut idx = vec![0usize; d];
    let probs: Vec<f64> = (0..spec.len())
        .map(|i| {
            spec.multi_index(i, &mut idx);
            idx.iter().enumerate().map(|(k, &j)| axis[k][j]).product()
        })
        .collect();
    let inside: f64 = axis.iter().map(|a| a.iter().sum::<f64>()).product();
    (probs, (1.0 - inside).max(0.0))
}

/// Running sums for the particle observables; merged associatively.
#[derive(Debug, Clone)]
pub struct Accumulator {
    pub counts: Vec<u64>,
    pub overflow: u64,
    pub n: u64,
    pub sum_e: f64,
    pub sum_e2: f64,
}

/// Observables estimated from one snapshot of an ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snapshot {
    /// Histogram estimate of `H(f|M)` with Miller-Madow correction.
    pub entropy: f64,
    pub entropy_stderr: f64,
    /// `∫|v − u0|²(f − M)`.
    pub temperature: f64,
    pub temperature_stderr: f64,
    /// Histogram estimate of `‖f − M‖₁`.
    pub l1: f64,
}

impl Accumulator {
    pub fn new(cells: usize) -> Self {
        Accumulator { counts: vec![0; cells], overflow: 0, n: 0, sum_e: 0.0, sum_e2: 0.0 }
    }

    pub fn add(&mut self, spec: &GridSpec, m: &Maxwellian, v: &[f64]) {
        match spec.locate(v) {
            Some(i) => self.counts[i] += 1,
            None => self.overflow += 1,
        }
        let e = m.dist2(v);
        self.n += 1;
        self.sum_e += e;
        self.sum_e2 += e * e;
    }

    pub fn merge(&mut self, other: &Accumulator) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.overflow += other.overflow;
        self.n += other.n;
        self.sum_e += other.sum_e;
        self.sum_e2 += other.sum_e2;
    }

    /// Finalize given the Maxwellian cell probabilities from [`cell_probabilities`].
    pub fn snapshot(&self, m: &Maxwellian, probs: &(Vec<f64>, f64)) -> Snapshot {
        let n = self.n as f64;
        let mut h = 0.0;
        let mut h2 = 0.0;
        let mut l1 = 0.0;
        let mut nonempty = 0usize;
        let cells = self.counts.iter().zip(&probs.0).chain(std::iter::once((&self.overflow, &probs.1)));
        for (&c, &p) in cells {
            let phat = c as f64 / n;
            l1 += (phat - p).abs();
            if c > 0 {
                nonempty += 1;
                let lr = (phat / p.max(1e-300)).ln();
                h += phat * lr;
                h2 += phat * lr * lr;
            }
        }
        let entropy = h - (nonempty.saturating_sub(1)) as f64 / (2.0 * n);
        let entropy_stderr = ((h2 - h * h).max(0.0) / n).sqrt();
        let mean_e = self.sum_e / n;
        let var_e = (self.sum_e2 / n - mean_e * mean_e).max(0.0);
        Snapshot {
            entropy,
            entropy_stderr,
            temperature: mean_e - m.dim() as f64 * m.theta(),
            temperature_stderr: (var_e / n).sqrt(),
            l1,
        }
    }
}

/// Histogram snapshot of an ensemble on `spec`.
pub fn snapshot(ens: &ParticleEnsemble, m: &Maxwellian, spec: &GridSpec) -> Result<Snapshot> {
    if ens.dim() != m.dim() || spec.dim() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), got: ens.dim() });
    }
    let mut acc = Accumulator::new(spec.len());
    for v in ens.iter() {
        acc.add(spec, m, v);
    }
    Ok(acc.snapshot(m, &cell_probabilities(spec, m)))
}

/// Default histogram resolution for particle estimators: coarser than the
/// quadrature grid so that cells hold enough samples.
pub fn default_histogram(m: &Maxwellian) -> GridSpec {
    let n = match m.dim() {
        2 => 32,
        3 => 16,
        _ => 8,
    };
    GridSpec::around(m, crate::grid::DEFAULT_L, n).expect("valid histogram grid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{Density, Gaussian};
    use crate::rng;

    #[test]
    fn cell_probabilities_sum_to_one() {
        let m = Maxwellian::new(vec![0.1, 0.2, 0.3], 1.5).unwrap();
        let spec = GridSpec::around(&m, 4.0, 10).unwrap();
        let (p, out) = cell_probabilities(&spec, &m);
        assert!((p.iter().sum::<f64>() + out - 1.0).abs() < 1e-14);
        assert!(out > 1e-6 && out < 1e-3);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let m = Maxwellian::standard(3, 1.0).unwrap();
        let e = m.sample(3, 500).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ck.bin");
        e.save(&p).unwrap();
        assert_eq!(ParticleEnsemble::load(&p).unwrap(), e);
        std::fs::write(&p, b"garbage").unwrap();
        assert!(ParticleEnsemble::load(&p).is_err());
    }

    #[test]
    fn maxwellian_samples_have_small_entropy_and_temperature() {
        let m = Maxwellian::standard(3, 1.0).unwrap();
        let e = m.sample(11, 200_000).unwrap();
        let s = snapshot(&e, &m, &default_histogram(&m)).unwrap();
        assert!(s.entropy.abs() < 4.0 * s.entropy_stderr + 2e-3, "{s:?}");
        assert!(s.temperature.abs() < 4.0 * s.temperature_stderr);
    }

    #[test]
    fn histogram_entropy_tracks_gaussian_closed_form() {
        let m = Maxwellian::standard(2, 1.0).unwrap();
        let g = Gaussian::relative_to(&m, 1.0, 1.0).unwrap();
        let mut r = rng::stream(5, 0);
        let n = 400_000;
        let mut data = vec![0.0; 2 * n];
        for c in data.chunks_mut(2) {
            g.sample_into(&mut r, c);
        }
        let e = ParticleEnsemble::new(2, data, 5).unwrap();
        let spec = GridSpec::around(&m, 6.0, 48).unwrap();
        let s = snapshot(&e, &m, &spec).unwrap();
        // coarse-graining loses O(h²) of the entropy
        let exact = g.relative_entropy(&m);
        assert!((s.entropy - exact).abs() < 0.01 + 4.0 * s.entropy_stderr, "{} vs {exact}", s.entropy);
        assert!((s.temperature - 1.0).abs() < 4.0 * s.temperature_stderr);
    }
}
