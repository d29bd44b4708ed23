//! Tilted-table air hockey testbed: physics, tasks, learners, datasets, and
//! the experiment harness.

pub mod datasets;
pub mod env;
pub mod harness;
pub mod learn;
pub mod nn;
pub mod physics;
