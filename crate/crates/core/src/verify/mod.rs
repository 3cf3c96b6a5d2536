//! Checks of the structural properties of nonlinear Markov flows: marginal
//! distances, restart invariance, the conditional (Markov) property, kernel
//! reconstruction of finite-dimensional laws and Chapman-Kolmogorov failure.

mod ck;
pub mod distance;
mod fdd;
mod flow;
mod kernel;
mod markov;

pub use ck::{test_ck_violation, CkReport, ProbeSpec};
pub use distance::{marginal_distance, Marginal, MarginalDistance};
pub use fdd::{chain_bins, compare_fdd, reconstruct_fdd, FddComparison};
pub use flow::{test_flow_property_particles, test_flow_property_pde, FlowMetric, FlowReport};
pub use kernel::{estimate_conditional_kernel, BinSpec, ConditionalKernel};
pub use markov::{test_nonlinear_markov, MarkovBin, MarkovConfig, MarkovTestReport, RestartFrom, TwoPointBin};
