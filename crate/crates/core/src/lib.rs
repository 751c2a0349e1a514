//! Modeling toolkit for thinging machines: static diagrams of things and the
//! machines that handle them, events over regions of those diagrams, and a
//! deterministic simulator for event chronologies.

pub mod bpmn;
pub mod diag;
pub mod dsl;
pub mod dynamics;
pub mod model;
pub mod render;
pub mod sim;
pub mod validate;

pub use diag::{Diagnostic, Diagnostics};
pub use dsl::{parse, print, SourceFile};
pub use dynamics::{compile_dynamic, DynamicModel};
pub use model::StaticModel;
pub use sim::{RunBound, Scenario, SimState, Trace};
