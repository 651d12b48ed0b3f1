//! Gridded LMI certificates of incremental input/output-to-state stability
//! for continuous-time nonlinear systems, and their transfer to Euler and
//! RK2 discretizations below a computed sampling-period bound.
//!
//! The usual flow is: load a [`SystemSpec`], pick a [`GridSpec`] box, obtain
//! a [`Certificate`] (by hand or with [`synth::synthesize_certificate`]),
//! verify it with [`lmi::check_ct_grid`], then call
//! [`transfer::dt_certificate`] for a sampling period below `tau1`.

// `!(x > 0.0)` is used on purpose: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod builtins;
pub mod cert;
pub mod cli;
pub mod discretize;
pub mod error;
pub mod linalg;
pub mod lmi;
pub mod model;
pub mod sweep;
pub mod synth;
pub mod transfer;
pub mod bench;

pub use cert::{Certificate, DtCertificate, SymMatrix};
pub use discretize::SchemeId;
pub use error::{Error, Result};
pub use lmi::CheckReport;
pub use model::{GridSpec, SystemSpec};

/// Version string embedded in every JSON report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
