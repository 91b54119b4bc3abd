pub mod mdp;
pub mod nn;
pub mod tabular;
pub mod replay;
pub mod env;
pub mod agent;
pub mod harness;
