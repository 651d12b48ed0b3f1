//! Built-in models and their default boxes.

use crate::error::{Error, Result};
use crate::model::grid::GridSpec;
use crate::model::parse::parse_model_named;
use crate::model::system::SystemSpec;

/// Isothermal gas-phase reactor with `k1 = 0.16`, `k2 = 0.0064`.
pub const REACTOR: &str = "\
# 2A <-> B reversible reaction, k1 = 0.16, k2 = 0.0064
dims 2 3 0 1
f1 = -2*0.16*x1^2 + 2*0.0064*x2 + u1
f2 = 0.16*x1^2 - 0.0064*x2 + u2
h1 = x1 + x2 + u3
";

pub const SCALAR_LINEAR: &str = "\
dims 1 1 0 1
f1 = -x1 + u1
h1 = x1
";

pub const ZERO: &str = "\
dims 1 1 0 1
f1 = 0
h1 = 0
";

/// `x' = x + sin(x)`: its linearization `1 + cos(x)` is never Hurwitz.
pub const SINE: &str = "\
dims 1 0 0 1
f1 = x1 + sin(x1)
h1 = x1
";

const TABLE: &[(&str, &str)] = &[
    ("reactor", REACTOR),
    ("scalar_linear", SCALAR_LINEAR),
    ("zero", ZERO),
    ("sine", SINE),
];

pub fn builtin_names() -> Vec<&'static str> {
    TABLE.iter().map(|(n, _)| *n).collect()
}

pub fn builtin_source(name: &str) -> Option<&'static str> {
    TABLE.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn builtin_model(name: &str) -> Result<SystemSpec> {
    let src = builtin_source(name).ok_or_else(|| {
        Error::Invalid(format!(
            "unknown builtin `{name}` (available: {})",
            builtin_names().join(", ")
        ))
    })?;
    Ok(parse_model_named(src, name)?)
}

/// Per-coordinate bounds of the default box for a builtin.
pub fn default_box(name: &str) -> Option<Vec<(f64, f64)>> {
    match name {
        "reactor" => Some(vec![
            (0.1, 0.5),
            (0.1, 0.5),
            (-0.1, 0.1),
            (-0.1, 0.1),
            (-0.1, 0.1),
        ]),
        "scalar_linear" | "zero" => Some(vec![(-1.0, 1.0), (-1.0, 1.0)]),
        "sine" => Some(vec![(-5.0, 5.0)]),
        _ => None,
    }
}

/// Default box of builtin `name` with `points` samples per axis.
pub fn default_grid(sys: &SystemSpec, name: &str, points: usize) -> Result<GridSpec> {
    let bounds = default_box(name)
        .ok_or_else(|| Error::Invalid(format!("no default box for `{name}`")))?;
    Ok(GridSpec::uniform(sys.dims(), &bounds, points)?)
}
