//! Brute-force validators independent of the Fourier representation.

pub mod convolution;
pub mod particles;

pub use convolution::{direct_convolution, ConvolutionConfig, OracleValue};
pub use particles::{
    compare_with_spec, discrete_energy, energy_gradient, particle_minimize, write_energy_csv, DescentRecord, ParticleComparison, MinimizeOutcome, PairKernel, ParticleConfig, ParticleEnsemble,
};
