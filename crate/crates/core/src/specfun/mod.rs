//! Real special functions and the scalar constants of the energy.

pub mod bessel;
pub mod gamma;
pub mod hyp2f1;
pub mod kernel;

pub use bessel::bessel_j;
pub use gamma::{cos_pi, digamma, gamma, ln_gamma, pochhammer, rgamma, sin_pi};
pub use hyp2f1::{hyp2f1, Hyp2F1};
pub use kernel::{
    b_nsd, big_f, dphi, dphi_at_1, f_s, h_kernel, k_s, kappa, kernel_constants, phi, phi_at_1,
    ExteriorKernel, Homogeneity, KernelConstants,
};
