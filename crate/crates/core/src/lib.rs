//! Differential verification of learned networking controllers.
//!
//! A property compares an agent's action at an input `x` with its action at a
//! perturbed input `x + s`. [`encoder`] expands a property into one
//! verification query per invalid action pair over a coupled two-copy
//! network, [`babverify`] decides each query with bound propagation and
//! branch-and-bound, and [`orchestrator`] dispatches queries to engines and
//! merges verdicts into a report.

pub mod interval;
pub mod json;
pub mod propspec;
pub mod tensornet;
pub mod encoder;
pub mod bounds;
pub mod babverify;
pub mod orchestrator;
pub mod zoo;
