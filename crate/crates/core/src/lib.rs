//! Cooperative cognitive-radio broadcast: erasure models, the two
//! network-coding schedules, capacity-region bounds and the experiments
//! built on top of them.

pub mod alg1;
pub mod alg2;
pub mod erasure;
pub mod error;
pub mod experiments;
pub mod packet;
pub mod region;
pub mod sim;

pub use alg1::{algorithm1_policy, Algorithm1};
pub use alg2::{algorithm2_policy, Algorithm2, MixParams};
pub use erasure::{
    CaseLabel, Classification, ErasureModel, Marginals, NodeSet, Reception, Transmitter,
};
pub use error::{Error, Result};
pub use sim::{run_loop, SimConfig, SimResult};
