//! Search for code prefixes (imports plus variable initializations) that let
//! an incomplete Python snippet run, maximizing the statements it executes.

pub mod corpus;
pub mod fixtures;
pub mod generator;
pub mod harness;
pub mod instrument;
pub mod model;
pub mod prompt;
pub mod report;
mod names;
pub mod scope;
pub mod search;
pub mod source;
mod statements;

pub use model::*;
pub use statements::UnitKind;
pub use scope::{get_undefined_refs, AnalysisError, UndefinedRefs};
