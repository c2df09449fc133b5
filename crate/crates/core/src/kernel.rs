//! Collision kernels `B(|q|, ξ) = β(|q|) b(ξ)` and their angular constants.

use crate::error::{invalid, Error, Result};
use crate::quadrature::{adaptive, Tolerance};
use crate::special::sphere_area;
use std::fmt;
use std::sync::Arc;

/// How an angular part enters the theory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrability {
    /// Integrable over the sphere.
    CutOff,
    /// Integrable lower bound standing in for a non-integrable kernel.
    NonCutoffMinorant,
}

#[derive(Clone)]
enum Shape {
    Power(f64),
    Custom { f: Arc<dyn Fn(f64) -> f64 + Send + Sync>, bound: f64 },
}

/// Angular factor `b(ξ)` on `[0, 1]`.
#[derive(Clone)]
pub struct AngularPart {
    shape: Shape,
    scale: f64,
    support: f64,
    integrability: Integrability,
    label: String,
}

impl fmt::Debug for AngularPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AngularPart")
            .field("label", &self.label)
            .field("scale", &self.scale)
            .field("support", &self.support)
            .field("integrability", &self.integrability)
            .finish()
    }
}

impl AngularPart {
    /// `b(ξ) = ξ^p`.
    pub fn power(p: f64) -> Self {
        AngularPart {
            shape: Shape::Power(p),
            scale: 1.0,
            support: 1.0,
            integrability: Integrability::CutOff,
            label: if p == 0.0 { "const".into() } else { format!("xi^{p}") },
        }
    }

    pub fn constant() -> Self {
        Self::power(0.0)
    }

    /// Arbitrary nonnegative `b` with a known upper bound on `[0, 1]`.
    pub fn custom(
        label: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        bound: f64,
        integrability: Integrability,
    ) -> Result<Self> {
        let f: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(f);
        for i in 0..=1000 {
            let x = i as f64 / 1000.0;
            let y = f(x);
            if !(y >= 0.0) || (!y.is_finite() && x > 0.0) {
                return invalid(format!("angular part must be nonnegative on [0,1]; b({x}) = {y}"));
            }
        }
        Ok(AngularPart {
            shape: Shape::Custom { f, bound },
            scale: 1.0,
            support: 1.0,
            integrability,
            label: label.into(),
        })
    }

    /// Restrict to `ξ ∈ [0, s]`.
    pub fn with_support(mut self, s: f64) -> Result<Self> {
        if !(s > 0.0 && s <= 1.0) {
            return invalid(format!("angular support must lie in (0, 1], got {s}"));
        }
        self.support = s;
        Ok(self)
    }

    pub fn scaled(mut self, c: f64) -> Self {
        self.scale *= c;
        self
    }

    pub fn integrability(&self) -> Integrability {
        self.integrability
    }

    pub fn support(&self) -> f64 {
        self.support
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, xi: f64) -> f64 {
        if xi > self.support {
            return 0.0;
        }
        let raw = match &self.shape {
            Shape::Power(p) => {
                if *p == 0.0 {
                    1.0
                } else {
                    xi.powf(*p)
                }
            }
            Shape::Custom { f, .. } => f(xi),
        };
        self.scale * raw
    }

    /// Upper bound of `b` on `[0, 1]`; infinite for singular power laws.
    pub fn sup(&self) -> f64 {
        match &self.shape {
            Shape::Power(p) if *p >= 0.0 => self.scale * self.support.powf(*p),
            Shape::Power(_) => f64::INFINITY,
            Shape::Custom { bound, .. } => self.scale * bound,
        }
    }

    /// Leading exponent `p` in `b(ξ) ≈ A ξ^p` as `ξ → 0`, if `b(0+) ≠ 0`.
    pub(crate) fn small_xi_exponent(&self) -> Option<f64> {
        match &self.shape {
            Shape::Power(p) => Some(*p),
            Shape::Custom { .. } => {
                let e = 1e-7;
                let (b1, b2) = (self.eval(e), self.eval(2.0 * e));
                if b1 > 0.0 && b2 > 0.0 {
                    Some((b2 / b1).ln() / std::f64::consts::LN_2)
                } else {
                    None
                }
            }
        }
    }
}

/// `∫_{S^{d-1}} g(|ω·e|) dω` for a fixed unit `e`, reduced to one angle.
pub fn sphere_integral_of_xi<G: Fn(f64) -> f64>(dim: usize, g: G, support: f64) -> Result<f64> {
    let k = (dim - 2) as i32;
    let pre = 2.0 * sphere_area(dim - 2);
    let brk = if support < 1.0 { vec![support.acos()] } else { vec![] };
    let tol = Tolerance { rel: 1e-12, ..Default::default() };
    let r = adaptive(
        |phi: f64| {
            let s = phi.sin();
            let w = if k == 0 { 1.0 } else { s.powi(k) };
            g(phi.cos().clamp(0.0, 1.0)) * w
        },
        0.0,
        std::f64::consts::FRAC_PI_2,
        &brk,
        tol,
    )?;
    Ok(pre * r.value)
}

/// Shape of the kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelVariant {
    /// `β ≡ 1`.
    Maxwellian,
    /// `β(|q|) = |q|^γ`.
    HardPotential { gamma: f64 },
    /// `β(|q|) = |q|^γ`, `b = ξ/‖b_ε‖` on `[0, ε]`.
    Grazing { epsilon: f64, gamma: u8 },
}

/// A factored collision kernel with derived angular constants.
#[derive(Debug, Clone)]
pub struct CollisionKernel {
    dim: usize,
    variant: KernelVariant,
    angular: AngularPart,
    prefactor: f64,
    angular_mass: f64,
    c_d: f64,
}

fn c_d(dim: usize) -> Result<f64> {
    let k = (dim - 2) as i32;
    Ok(1.0 / sphere_integral_of_xi(dim, |x| x.powi(k), 1.0)?)
}

impl CollisionKernel {
    fn build(dim: usize, variant: KernelVariant, angular: AngularPart) -> Result<Self> {
        if dim < 2 {
            return invalid(format!("dimension must be at least 2, got {dim}"));
        }
        let angular_mass = sphere_integral_of_xi(dim, |x| angular.eval(x), angular.support())
            .map_err(|e| Error::InvalidParameter(format!("angular part is not cut-off: {e}")))?;
        if !angular_mass.is_finite() || angular_mass <= 0.0 {
            return invalid(format!("angular mass must be positive and finite, got {angular_mass}"));
        }
        let kernel = CollisionKernel { dim, variant, angular, prefactor: 1.0, angular_mass, c_d: c_d(dim)? };
        kernel.check_beta_monotone()?;
        Ok(kernel)
    }

    /// `β ≡ 1` with the given angular part.
    pub fn maxwellian(dim: usize, angular: AngularPart) -> Result<Self> {
        Self::build(dim, KernelVariant::Maxwellian, angular)
    }

    /// `β(|q|) = |q|^γ` with the given angular part.
    pub fn hard_potential(dim: usize, gamma: f64, angular: AngularPart) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return invalid(format!("hard-potential exponent must be >= 0, got {gamma}"));
        }
        Self::build(dim, KernelVariant::HardPotential { gamma }, angular)
    }

    /// `c_d ξ^{d-2}` angular part, which has unit angular mass.
    pub fn standard_angular(dim: usize) -> Result<AngularPart> {
        Ok(AngularPart::power((dim - 2) as f64).scaled(c_d(dim)?))
    }

    /// Maxwell molecules: `B = c_d ξ^{d-2}`.
    pub fn maxwell_molecules(dim: usize) -> Result<Self> {
        Self::maxwellian(dim, Self::standard_angular(dim)?)
    }

    /// `B = c_d |q|^γ ξ^{d-2}`.
    pub fn hard_potential_standard(dim: usize, gamma: f64) -> Result<Self> {
        Self::hard_potential(dim, gamma, Self::standard_angular(dim)?)
    }

    /// Three-dimensional hard spheres, `B = c_3 |q| ξ`.
    pub fn hard_spheres() -> Result<Self> {
        Self::hard_potential_standard(3, 1.0)
    }

    /// Grazing family `B = |q|^γ ξ 1_{[0,ε]}(ξ) / ‖b_ε‖`.
    pub fn grazing(dim: usize, epsilon: f64, gamma: u8) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return invalid(format!("grazing epsilon must lie in (0, 1], got {epsilon}"));
        }
        if gamma > 1 {
            return invalid(format!("grazing gamma must be 0 or 1, got {gamma}"));
        }
        let raw = AngularPart::power(1.0).with_support(epsilon)?;
        let norm = sphere_integral_of_xi(dim, |x| raw.eval(x), epsilon)?;
        let mut angular = raw.scaled(1.0 / norm);
        angular.label = format!("grazing(eps={epsilon})");
        Self::build(dim, KernelVariant::Grazing { epsilon, gamma }, angular)
    }

    /// Rescale the angular part to unit angular mass.
    pub fn normalized(mut self) -> Self {
        self.angular = self.angular.scaled(1.0 / self.angular_mass);
        self.angular_mass = 1.0;
        self
    }

    /// Multiply the whole kernel by `c > 0`.
    pub fn scaled(mut self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return invalid(format!("kernel scale must be positive, got {c}"));
        }
        self.prefactor *= c;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn variant(&self) -> KernelVariant {
        self.variant
    }

    pub fn angular(&self) -> &AngularPart {
        &self.angular
    }

    /// `∫_{S^{d-1}} b(q̃·n) dn`, excluding the overall prefactor.
    pub fn angular_mass(&self) -> f64 {
        self.angular_mass
    }

    /// Normalization constant of `ξ^{d-2}` over the sphere.
    pub fn c_d(&self) -> f64 {
        self.c_d
    }

    pub fn prefactor(&self) -> f64 {
        self.prefactor
    }

    /// Unit angular mass and unit prefactor.
    pub fn is_normalized(&self) -> bool {
        (self.angular_mass - 1.0).abs() < 1e-9 && self.prefactor == 1.0
    }

    /// Exponent of `β(|q|) = |q|^γ`.
    pub fn gamma(&self) -> f64 {
        match self.variant {
            KernelVariant::Maxwellian => 0.0,
            KernelVariant::HardPotential { gamma } => gamma,
            KernelVariant::Grazing { gamma, .. } => gamma as f64,
        }
    }

    pub fn epsilon(&self) -> Option<f64> {
        match self.variant {
            KernelVariant::Grazing { epsilon, .. } => Some(epsilon),
            _ => None,
        }
    }

    /// `δ_ε = √(1-ε²)/ε` for grazing kernels.
    pub fn delta_eps(&self) -> Option<f64> {
        self.epsilon().map(|e| (1.0 - e * e).sqrt() / e)
    }

    pub fn beta(&self, q: f64) -> f64 {
        let g = self.gamma();
        if g == 0.0 {
            self.prefactor
        } else {
            self.prefactor * q.powf(g)
        }
    }

    pub fn b(&self, xi: f64) -> f64 {
        self.angular.eval(xi)
    }

    /// `B(|q|, ξ)`.
    pub fn eval(&self, q: f64, xi: f64) -> f64 {
        self.beta(q) * self.b(xi)
    }

    /// `B` evaluated from the colliding pair and the unit vector `n`.
    pub fn eval_vectors(&self, v: &[f64], vstar: &[f64], n: &[f64]) -> f64 {
        let mut q2 = 0.0;
        let mut qn = 0.0;
        for i in 0..v.len() {
            let q = v[i] - vstar[i];
            q2 += q * q;
            qn += q * n[i];
        }
        if q2 == 0.0 {
            return 0.0;
        }
        let q = q2.sqrt();
        self.eval(q, (qn.abs() / q).min(1.0))
    }

    /// `γ_b = ∫ (q̃·n)² b(q̃·n) dn` for a normalized kernel.
    pub fn gamma_b(&self) -> Result<f64> {
        if !self.is_normalized() {
            return Err(Error::NotNormalized { angular_mass: self.angular_mass * self.prefactor });
        }
        sphere_integral_of_xi(self.dim, |x| x * x * self.angular.eval(x), self.angular.support())
    }

    /// Short identifier used in reports and cache keys.
    pub fn id(&self) -> String {
        let base = match self.variant {
            KernelVariant::Maxwellian => format!("maxwellian[{}]", self.angular.label),
            KernelVariant::HardPotential { gamma } => format!("hard-potential[g={gamma},{}]", self.angular.label),
            KernelVariant::Grazing { epsilon, gamma } => format!("grazing[eps={epsilon},g={gamma}]"),
        };
        let base = format!("{base}-d{}", self.dim);
        if self.prefactor != 1.0 {
            format!("{base}x{}", self.prefactor)
        } else {
            base
        }
    }

    fn check_beta_monotone(&self) -> Result<()> {
        let mut last = self.beta(0.0);
        for i in 1..=200 {
            let q = i as f64 * 0.1;
            let b = self.beta(q);
            if b < last {
                return invalid(format!("β must be nondecreasing; β({q}) < β({})", q - 0.1));
            }
            last = b;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn c3_is_one_over_two_pi() {
        let k = CollisionKernel::maxwell_molecules(3).unwrap();
        assert!((k.c_d() - 1.0 / (2.0 * PI)).abs() < 1e-13);
        assert!((k.angular_mass() - 1.0).abs() < 1e-12);
        assert!(k.is_normalized());
    }

    #[test]
    fn c2_uses_circle_measure() {
        let k = CollisionKernel::maxwell_molecules(2).unwrap();
        assert!((k.c_d() - 1.0 / (2.0 * PI)).abs() < 1e-13);
        // constant b on the circle: ∫ cos^2 = π, times 1/(2π)
        assert!((k.gamma_b().unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn grazing_gamma_b_is_half_eps_squared() {
        for eps in [1.0, 0.5, 0.25, 0.1] {
            let k = CollisionKernel::grazing(3, eps, 0).unwrap();
            assert!(k.is_normalized());
            let g = k.gamma_b().unwrap();
            assert!((g - eps * eps / 2.0).abs() < 1e-12 * eps * eps, "eps={eps} g={g}");
        }
    }

    #[test]
    fn maxwell_d3_matches_grazing_eps_one() {
        let a = CollisionKernel::maxwell_molecules(3).unwrap();
        let b = CollisionKernel::grazing(3, 1.0, 0).unwrap();
        assert!((a.gamma_b().unwrap() - 0.5).abs() < 1e-12);
        for i in 0..=10 {
            let x = i as f64 / 10.0;
            assert!((a.b(x) - b.b(x)).abs() < 1e-14);
        }
    }

    #[test]
    fn unnormalized_kernel_is_rejected() {
        let k = CollisionKernel::maxwellian(3, AngularPart::constant()).unwrap();
        assert!(matches!(k.gamma_b(), Err(Error::NotNormalized { .. })));
        let k = k.normalized();
        // constant b in d=3: γ_b = ∫_0^1 ξ² dξ = 1/3
        assert!((k.gamma_b().unwrap() - 1.0 / 3.0).abs() < 1e-12);
        let doubled = k.scaled(2.0).unwrap();
        assert!(doubled.gamma_b().is_err());
    }

    #[test]
    fn singular_angular_part_is_not_cut_off() {
        assert!(CollisionKernel::maxwellian(3, AngularPart::power(-1.5)).is_err());
    }

    #[test]
    fn hard_spheres_values() {
        let k = CollisionKernel::hard_spheres().unwrap();
        assert!((k.eval(2.0, 0.5) - 2.0 * 0.5 / (2.0 * PI)).abs() < 1e-15);
        let delta = CollisionKernel::grazing(3, 0.6, 1).unwrap().delta_eps().unwrap();
        assert!((delta - 0.8 / 0.6).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn gamma_b_strictly_between_zero_and_one(
            dim in 2usize..6,
            p in 0.0f64..4.0,
            support in 0.05f64..1.0,
        ) {
            let ang = AngularPart::power(p).with_support(support).unwrap();
            let k = CollisionKernel::maxwellian(dim, ang).unwrap().normalized();
            let g = k.gamma_b().unwrap();
            prop_assert!(g > 0.0 && g < 1.0);
        }
    }
}
