//! Desk-scale task-and-motion planning with learned specializers.
//!
//! A 2.5-D tabletop pick-and-place world where the continuous parameters of
//! symbolic operators (target end-effector poses) come from interchangeable
//! strategies: neural specializer pools trained per task by alternating
//! descent or subset selection and across tasks by a first-order meta-learning
//! outer loop, hand-crafted rules, or conditional random sampling.

pub mod learn;
pub mod losses;
pub mod motion;
pub mod nn;
pub mod specializer;
pub mod symbolic;
pub mod worldsim;

pub use learn::{LearnError, LearnerConfig, Problem, TaskDataset};
pub use specializer::{ParamStrategy, SpecializerPool};
pub use worldsim::{ObjId, OpName, Pose2, WorldState};
