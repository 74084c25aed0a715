//! Sequential Gaussian approximation filters for discrete-time nonlinear
//! models, including the smoothing variants that condition the state and the
//! upcoming process noise on the next observation before predicting.
//!
//! Eight filters share one interface ([`FilterKind`]): LGF/LGSF linearize,
//! VGF/VGSF minimize a variational objective, CGF/CGSF use cubature rules and
//! PGF/PGSF use random samples.
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cubature;
pub mod error;
pub mod filters;
pub mod gaussian;
pub mod harness;
pub mod kernels;
pub mod model;
pub mod optim;
pub mod testbeds;

pub use cubature::{moment_defect, moments, standard_rule, transform, DiscreteMeasure, RuleKind};
pub use error::{Error, Result};
pub use filters::{
    conventional_step, filter_step, run_filter, smoothing_step, smoothing_update, Approximation,
    Family, FilterKind, FilterTrajectory, StepContext,
};
pub use gaussian::{cholesky_factor, condition, Gaussian, JointGaussian};
pub use kernels::Diagnostics;
pub use model::{
    augment, composed_observation, discretize_sde, AugmentedGaussian, FnObservation, FnProcess,
    LinearObservation, LinearProcess, ObservationModel, ProcessModel, SdeProcess, SdeSpec,
    Volatility,
};
pub use optim::VariationalSettings;
