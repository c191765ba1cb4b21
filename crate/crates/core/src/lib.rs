//! Entropic additive combinatorics toolkit.
//!
//! Exact finite distributions over ℤ, ℚ, ℤᵈ and ℤ_m; the named entropic
//! functionals built on them; a quantity language and inequality registry;
//! Monte Carlo evaluation for continuous laws; and simplex search.

pub mod catalog;
pub mod constructions;
pub mod continuous;
pub mod conv;
pub mod dist;
pub mod error;
pub mod exact;
pub mod expr;
pub mod functionals;
pub mod joint;
pub mod numeric;
pub mod quantity;
pub mod search;
pub mod setcalc;
pub mod value;

pub use conv::{combine_independent, entropy_of_combination};
pub use dist::{FiniteDist, Prob};
pub use error::{Error, Result};
pub use expr::RvExpr;
pub use joint::JointDist;
pub use value::{BinOp, Family, GroupValue, Integer};
