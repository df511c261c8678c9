//! Affordance demonstrations and demonstration-augmented policy gradients
//! for a planar relocate task.
//!
//! The pipeline: procedurally generated object families ([`shapes`]), a
//! quasi-static gripper environment ([`sim`]), antipodal grasp synthesis with
//! CEM/MPC reach planning ([`planner`]), hand-differentiated networks
//! ([`nets`]), the augmented policy-gradient learner ([`imitation`]) and the
//! evaluation/ablation harness ([`harness`]).

pub mod error;
pub mod geom;
pub mod rng;
pub mod shapes;
pub mod sim;
pub mod planner;
pub mod nets;
pub mod imitation;
pub mod harness;

pub use error::{Error, Result};
