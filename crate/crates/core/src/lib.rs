pub mod cli;
pub mod config;
pub mod degenerate;
pub mod error;
pub mod harmonics;
pub mod identities;
pub mod measure;
pub mod oracle;
pub mod potential;
pub(crate) mod par;
pub mod profile;
pub mod quadrature;
pub mod solver;
pub mod specfun;
pub mod squad;

pub use error::{Error, Result};
