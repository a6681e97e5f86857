//! Bayesian-optimization domain.

pub mod acquisition;
pub mod gp;
pub mod objective;
pub mod run;
pub mod task;

pub use acquisition::{ei, propose_next, ucb, AcquisitionContext, BuiltinAcquisition, UtilitySource};
pub use gp::{gp_fit, gp_posterior, GpHyper, GpModel};
pub use objective::{eval_synthetic, load_tabular, BoObjective, SyntheticKind, SyntheticObjective, TabularBenchmark};
pub use run::{bo_run, random_search, BoSettings, BoState, BoTrace};
pub use task::BoTask;
