pub mod data;
pub mod error;
pub mod logistic;
pub mod credal;
pub mod laplace;
pub mod optim;
pub mod quadrature;
pub mod self_training;
pub mod bench;

pub use error::{PlsError, Result};
