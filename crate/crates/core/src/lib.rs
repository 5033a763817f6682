//! Collaborative personalized phased elimination for heterogeneous
//! multi-agent linear bandits, with the Fed-PE and Ind-PE baselines, a
//! G-optimal design solver, a hierarchical population environment and a
//! replication harness.

pub mod design;
pub mod environment;
pub mod error;
pub mod hard_instance;
pub mod harness;
pub mod policies;
pub mod rng;

pub use design::{Action, ActionSet, Design};
pub use environment::{Family, Instance, PopulationModel};
pub use error::{DesignError, EnvError, HarnessError, PolicyError};
pub use harness::{run_experiment, Algorithm, ExperimentConfig};
pub use policies::{PolicyConfig, Stage};
