//! Numerical optimization: a semidefinite programming kernel, the diamond
//! norm on top of it, and the channel mutual information.

pub mod diamond;
pub mod mutual_info;
pub mod sdp;

pub use diamond::{diamond_distance, diamond_distance_report, half_diamond_norm, DiamondResult};
pub use mutual_info::{channel_mutual_information, continuity_bound, MutualInfoResult};
pub use sdp::{IterationRecord, SdpOptions, SdpProblem, SdpSolution, SymSparse};
