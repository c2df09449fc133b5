//! Elastic collision geometry.

use crate::error::{invalid, Result};

/// Post-collisional pair `(v', v*')` for the unit vector `n`:
/// `v' = v - ((v - v*)·n) n`, `v*' = v* + ((v - v*)·n) n`.
pub fn post_collision(v: &[f64], vstar: &[f64], n: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if v.len() != vstar.len() || v.len() != n.len() {
        return invalid("velocity and direction dimensions differ");
    }
    let nn: f64 = n.iter().map(|x| x * x).sum();
    if (nn - 1.0).abs() > 1e-12 {
        return invalid(format!("collision direction must be a unit vector, |n|^2 = {nn}"));
    }
    let mut vp = v.to_vec();
    let mut wp = vstar.to_vec();
    collide_in_place(&mut vp, &mut wp, n);
    Ok((vp, wp))
}

/// `(q·n)` for `q = v - v*`.
#[inline]
pub fn normal_component(v: &[f64], vstar: &[f64], n: &[f64]) -> f64 {
    v.iter().zip(vstar).zip(n).map(|((a, b), c)| (a - b) * c).sum()
}

/// Unchecked in-place collision used by the simulators.
#[inline]
pub fn collide_in_place(v: &mut [f64], vstar: &mut [f64], n: &[f64]) {
    let qn = normal_component(v, vstar, n);
    for i in 0..v.len() {
        v[i] -= qn * n[i];
        vstar[i] += qn * n[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn head_on_exchange() {
        let (vp, wp) = post_collision(&[1.0, 0.0, 0.0], &[0.0; 3], &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(vp, vec![0.0, 0.0, 0.0]);
        assert_eq!(wp, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn trivial_geometries() {
        let v = [0.3, -1.0, 2.0];
        let (vp, _) = post_collision(&v, &v, &[0.0, 0.6, 0.8]).unwrap();
        assert_eq!(vp, v.to_vec());
        // n perpendicular to v - v*
        let (vp, _) = post_collision(&[1.0, 0.0, 0.0], &[0.0; 3], &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(vp, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_non_unit_direction() {
        assert!(post_collision(&[1.0, 0.0], &[0.0, 0.0], &[1.0, 1e-5]).is_err());
    }

    proptest! {
        #[test]
        fn conserves_momentum_and_energy(
            v in prop::collection::vec(-10.0f64..10.0, 3),
            w in prop::collection::vec(-10.0f64..10.0, 3),
            raw in prop::collection::vec(-1.0f64..1.0, 3),
        ) {
            let norm: f64 = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assume!(norm > 1e-3);
            let n: Vec<f64> = raw.iter().map(|x| x / norm).collect();
            let (vp, wp) = post_collision(&v, &w, &n).unwrap();
            let e0: f64 = v.iter().chain(&w).map(|x| x * x).sum();
            let e1: f64 = vp.iter().chain(&wp).map(|x| x * x).sum();
            prop_assert!((e0 - e1).abs() <= 1e-12 * e0.max(1.0));
            for i in 0..3 {
                prop_assert!((v[i] + w[i] - vp[i] - wp[i]).abs() <= 1e-12 * (v[i].abs() + w[i].abs()).max(1.0));
            }
            // the map is an involution with the same n
            let (vpp, wpp) = post_collision(&vp, &wp, &n).unwrap();
            for i in 0..3 {
                prop_assert!((vpp[i] - v[i]).abs() < 1e-10);
                prop_assert!((wpp[i] - w[i]).abs() < 1e-10);
            }
        }
    }
}
