//! Add-on treatment regimes on longitudinal panels.
//!
//! The numeric modules are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which is what the command-line tool uses.

pub mod estimate;
pub mod fit;
pub mod formula;
pub mod graph;
pub mod panel;
pub mod regimes;
pub mod rng;
pub mod rollout;
pub mod scalar;
pub mod sem;

pub use estimate::{EstimateError, EstimateReport, Estimator, ModelFormulas};
pub use fit::{FitError, FormulaSet};
pub use formula::{Family, FormulaSpec};
pub use graph::{CausalGraph, GraphError};
pub use panel::{PanelError, Var, VariableSchema};
pub use regimes::{RegimeKind, RegimeSpec};
pub use scalar::Scalar;
pub use sem::SemError;

pub type Panel = panel::Panel<f64>;
pub type Trajectory = panel::Trajectory<f64>;
pub type TimePoint = panel::TimePoint<f64>;
pub type StructuralModel = sem::StructuralModel<f64>;
pub type NodeSpec = sem::NodeSpec<f64>;
pub type FittedModel = fit::FittedModel<f64>;
pub type FitOptions = fit::FitOptions<f64>;
pub type GFormulaConfig = estimate::GFormulaConfig<f64>;
pub type IpwConfig = estimate::IpwConfig<f64>;
pub type AnalysisConfig = estimate::AnalysisConfig<f64>;
