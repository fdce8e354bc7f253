//! Numerical optimizers: BFGS for smooth unconstrained problems, COBYLA for
//! derivative-free inequality-constrained problems, and a multi-start box
//! maximizer built on COBYLA.

pub mod bfgs;
pub mod cobyla;
mod lp;
pub mod multistart;

pub use bfgs::{bfgs_minimize, BfgsConfig, BfgsOutcome, BfgsStatus};
pub use cobyla::{cobyla_minimize, cobyla_minimize_fn, CobylaConfig, CobylaOutcome, Evaluation, FEASIBILITY_TOLERANCE};
pub use multistart::{multistart_box_maximize, start_points, MultistartOutcome};
