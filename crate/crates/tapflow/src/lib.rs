//! AC power-flow quantities and their exact analytic first and second
//! derivatives over an extended optimization variable vector that includes
//! transformer tap ratio magnitudes and phase-shift angles, enabling
//! tap-adjusting optimal power flow.
//!
//! Every analytic derivative is validated against a built-in central
//! finite-difference oracle; see [`derivcheck`] and the `check-derivs` CLI
//! subcommand.

pub mod admittance;
pub mod case;
pub mod cli;
pub mod derivcheck;
pub mod fd;
pub mod line_flow;
pub mod model;
pub mod newton;
pub mod opf;
pub mod power_balance;
pub mod sparse;
pub mod synth;
pub mod variables;

pub use admittance::{branch_admittances, build_system, BranchAdmittances, SystemMatrices, TapState};
pub use case::{parse_case, serialize_case, validate_case, Case, CaseFormat, ValidationReport};
pub use model::{to_internal, InternalModel};
pub use variables::{DerivativeBundle, HessianBlocks, Layout, VarGroup, VariableVector};
