pub mod ad;
pub mod body;
pub mod dynamics;
pub mod error;
pub mod gradient;
pub mod kinematics;
pub mod lbfgs;
pub mod math;
pub mod metrics;
pub mod objective;
pub mod pipeline;
pub mod spline;

pub use error::{Error, Result};
