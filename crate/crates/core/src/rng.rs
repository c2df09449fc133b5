//! Seeded random streams. Every stochastic routine takes an explicit 64-bit
//! seed; worker `i` of a parallel job draws from `stream(seed, i)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type SimRng = ChaCha8Rng;

/// Random stream for worker `index` derived from a base seed. Distinct
/// `(seed, index)` pairs give distinct ChaCha streams.
pub fn stream(seed: u64, index: u64) -> SimRng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index);
    r
}

pub fn normal(rng: &mut SimRng) -> f64 {
    StandardNormal.sample(rng)
}

/// Fill `out` with a uniformly distributed unit vector.
pub fn unit_vector(rng: &mut SimRng, out: &mut [f64]) {
    loop {
        let mut n2 = 0.0;
        for x in out.iter_mut() {
            *x = normal(rng);
            n2 += *x * *x;
        }
        if n2 > 1e-20 {
            let inv = 1.0 / n2.sqrt();
            for x in out.iter_mut() {
                *x *= inv;
            }
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn neighbouring_seeds_and_indices_do_not_share_streams() {
        let first = |s: u64, i: u64| stream(s, i).random::<u64>();
        assert_ne!(first(20, 1), first(21, 0));
        assert_ne!(first(0, 1), first(1, 0));
        assert_ne!(first(3, 0), first(3, 1));
        assert_eq!(first(3, 5), first(3, 5));
    }
}
