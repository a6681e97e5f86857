//! Schedule design on a micro placement problem: evolved learning-rate and
//! step-count schedules drive Adam through a penalty-method subproblem
//! sequence.

pub mod adam;
pub mod density;
pub mod instance;
pub mod sequence;
pub mod task;
pub mod wirelength;

pub use adam::{adam_step, AdamState};
pub use density::{density_overflow, DensityEval};
pub use instance::{load_instance, reference_instance, MicroPlacementInstance};
pub use sequence::{run_subproblem_sequence, schedule_legality, PlacementSettings, PlacementState, SubproblemSchedule};
pub use task::PlacementTask;
pub use wirelength::{hpwl, smooth_wl};
