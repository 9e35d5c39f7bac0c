//! Dissipative vector fields in Darboux coordinates, their Jacobi last
//! multipliers, and numerical checks that the associated phase-space
//! measures are invariant under the flow.

// Positivity tests are written `!(x > 0.0)` so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod expr;
pub mod flow;
pub mod jet;
pub mod multiplier;
pub mod systems;
pub mod verify;

pub use expr::{parse, Expr, ExprError, Variables};
pub use flow::{IntegratorSettings, Method, Trajectory};
pub use jet::Jet2;
pub use multiplier::{MultiplierError, MultiplierSpec};
pub use systems::{Family, FieldError, FieldSpec, LienardSystem, PhaseLayout};
pub use verify::{RegionSampler, VerificationReport, VerifyError};
