//! Linear Boltzmann collision operators around a Maxwellian background,
//! entropy and dissipation functionals, particle and grid dynamics, and the
//! grazing-limit Fokker-Planck structures.

pub mod carleman;
pub mod collision;
pub mod density;
pub mod error;
pub mod fokker_planck;
pub mod functionals;
pub mod grid;
pub mod kernel;
pub mod maxwellian;
pub mod particles;
pub mod quadrature;
pub mod rng;
pub mod simulate;
pub mod special;

pub use density::{Density, DensitySuite, Gaussian, Mixture, TestDensity};
pub use error::{Error, Result};
pub use grid::{GridDensity, GridSpec};
pub use kernel::{AngularPart, CollisionKernel, Integrability, KernelVariant};
pub use maxwellian::Maxwellian;
pub use particles::ParticleEnsemble;

// the guide's code blocks run as doctests
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/entropy.md")]
    mod entropy {}
    #[doc = include_str!("../../../book/src/comparison.md")]
    mod comparison {}
    #[doc = include_str!("../../../book/src/dynamics.md")]
    mod dynamics {}
    #[doc = include_str!("../../../book/src/grazing.md")]
    mod grazing {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
