//! System models: expression trees, the model-file parser, evaluation with
//! exact Jacobians, grids, and regularity-constant estimates.

pub mod constants;
pub mod expr;
pub mod grid;
pub mod parse;
pub mod system;

pub use constants::{estimate_cf, estimate_ldf, estimate_lf, LDF_SAFETY_FACTOR};
pub use expr::{Expr, Var, VarKind};
pub use grid::{grid_points, Axis, GridPoint, GridSpec};
pub use parse::{parse_model, parse_model_named};
pub use system::{Dims, PointEval, SystemSpec};
