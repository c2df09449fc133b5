//! Special functions that are not in `libm`.

use std::f64::consts::PI;

/// Surface area of the unit sphere `S^{k}` embedded in `R^{k+1}`.
///
/// `sphere_area(0) == 2` (two points), `sphere_area(1) == 2π`, `sphere_area(2) == 4π`.
pub fn sphere_area(k: usize) -> f64 {
    let m = (k + 1) as f64;
    2.0 * PI.powf(m / 2.0) / libm::tgamma(m / 2.0)
}

/// Exponentially scaled modified Bessel function `e^{-x} I_0(x)` for `x >= 0`.
pub fn bessel_i0e(x: f64) -> f64 {
    let x = x.abs();
    if x <= 15.0 {
        // power series of I_0, scaled afterwards
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        loop {
            term *= q / (k * k);
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
            k += 1.0;
        }
        sum * (-x).exp()
    } else {
        // asymptotic expansion: sum_k ((2k-1)!!)^2 / (k! 8^k x^k)
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..30 {
            let kf = k as f64;
            let next = term * (2.0 * kf - 1.0).powi(2) / (kf * 8.0 * x);
            if next.abs() > term.abs() {
                break;
            }
            term = next;
            sum += term;
            if term.abs() < 1e-17 * sum {
                break;
            }
        }
        sum / (2.0 * PI * x).sqrt()
    }
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Probability that `N(mean, var)` falls in `[a, b]`, accurate in both tails.
pub fn normal_interval(mean: f64, var: f64, a: f64, b: f64) -> f64 {
    let s = (2.0 * var).sqrt();
    let za = (a - mean) / s;
    let zb = (b - mean) / s;
    if za >= 0.0 {
        0.5 * (libm::erfc(za) - libm::erfc(zb))
    } else if zb <= 0.0 {
        0.5 * (libm::erfc(-zb) - libm::erfc(-za))
    } else {
        0.5 * (libm::erf(zb) - libm::erf(za))
    }
}

/// `∫_{S^k} exp(−|c e + r ω|² / (2θ)) dω` for a fixed unit vector `e`,
/// with `c, r ≥ 0` (a Gaussian averaged over a sphere of radius `r`).
pub fn sphere_gauss_avg(k: usize, c: f64, r: f64, theta: f64) -> f64 {
    let a = (c - r) * (c - r) / (2.0 * theta);
    let x = c * r / theta;
    match k {
        0 => (-a).exp() + (-a - 2.0 * x).exp(),
        1 => 2.0 * PI * (-a).exp() * bessel_i0e(x),
        2 => {
            if x < 1e-12 {
                4.0 * PI * (-(c * c + r * r) / (2.0 * theta)).exp()
            } else {
                // (2πθ/(cr)) (e^{-(c-r)²/2θ} − e^{-(c+r)²/2θ})
                2.0 * PI / x * (-a).exp() * (-(-2.0 * x).exp_m1())
            }
        }
        _ => {
            let rule = crate::quadrature::Rule::gauss_legendre(64);
            let w = sphere_area(k - 1);
            let base = (c * c + r * r) / (2.0 * theta);
            w * rule.integrate(0.0, PI, |phi| {
                (-(base + x * phi.cos())).exp() * phi.sin().powi(k as i32 - 1)
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_gauss_avg_general_formula_agrees() {
        // compare the k = 1, 2 closed forms with the generic angular quadrature
        for &(c, r) in &[(0.0, 1.0), (0.7, 0.3), (2.0, 2.5), (1e-9, 0.4)] {
            for k in [1usize, 2] {
                let closed = sphere_gauss_avg(k, c, r, 1.3);
                let rule = crate::quadrature::Rule::gauss_legendre(64);
                let base = (c * c + r * r) / 2.6;
                let generic = sphere_area(k - 1)
                    * rule.integrate(0.0, PI, |phi| {
                        (-(base + c * r / 1.3 * phi.cos())).exp() * phi.sin().powi(k as i32 - 1)
                    });
                assert!((closed - generic).abs() < 1e-12 * generic, "k={k} c={c} r={r}");
            }
        }
        // r = 0: the full sphere area times the Gaussian at c
        assert!((sphere_gauss_avg(0, 1.0, 0.0, 1.0) - 2.0 * (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(0) - 2.0).abs() < 1e-14);
        assert!((sphere_area(1) - 2.0 * PI).abs() < 1e-13);
        assert!((sphere_area(2) - 4.0 * PI).abs() < 1e-13);
        assert!((sphere_area(3) - 2.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn i0e_matches_integral_definition() {
        // I_0(x) = (1/π) ∫_0^π e^{x cos t} dt, so e^{-x} I_0(x) = (1/π) ∫ e^{x(cos t - 1)} dt
        for &x in &[0.0, 0.3, 2.0, 9.0, 14.9, 15.1, 40.0, 300.0] {
            let n = 20000;
            let h = PI / n as f64;
            let mut s = 0.0;
            for i in 0..=n {
                let t = i as f64 * h;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                s += w * (x * (t.cos() - 1.0)).exp();
            }
            let reference = s * h / PI;
            let got = bessel_i0e(x);
            assert!(
                ((got - reference) / reference).abs() < 1e-9,
                "x={x}: {got} vs {reference}"
            );
        }
    }

    #[test]
    fn normal_interval_tails() {
        let p = normal_interval(0.0, 1.0, 8.0, 9.0);
        assert!(p > 0.0 && p < 1e-14);
        let q = normal_interval(0.0, 1.0, -1.0, 1.0);
        assert!((q - 0.682_689_492_137_086).abs() < 1e-12);
    }
}
