//! Thermal (KMS) Green functionals of Bose fields on the Euclidean time
//! circle: covariance kernels, quasi-free and mixed functionals, cumulants,
//! positivity audits and Monte Carlo validation.

pub mod cli;
pub mod cumulants;
pub mod greens;
pub mod kernel;
pub mod sampler;
pub mod spectral;
pub mod verify;
