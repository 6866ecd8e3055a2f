//! Desk-scale distillation protocols and free-set oracles.

pub mod entanglement;
pub mod free_sets;
pub mod magic;
pub mod registry;
pub mod synthetic;

pub use entanglement::{
    isotropic_state, product_protocol, recurrence_deterministic, recurrence_protocol,
};
pub use free_sets::FreeSetOracle;
pub use magic::{five_qubit_t_protocol, noisy_t_state, t_state};
pub use registry::{build_protocol, PROTOCOLS};
pub use synthetic::{random_channel_protocol, random_protocol};
