//! Chart-level exterior calculus, geodesible/Beltrami certificates and plug
//! dynamics.

pub mod certify;
pub mod chart;
pub mod construct;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod field;
pub mod forms;
pub mod profile;
pub mod sampling;
mod twofold;

pub use certify::{certify, Certificate, VerifyReport};
pub use chart::{Chart, Factor, FactorKind};
pub use construct::{Construction, ConstructionModel};
pub use error::{Error, Result};
pub use expr::{Expr, Guard, Tape};
pub use field::{ChartMap, ChartRef, CompiledForm, KForm, ScalarField, VectorField};
pub use profile::{standard_profiles, Profile, ProfileKind};
