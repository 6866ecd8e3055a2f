//! Catalytic conversion of multi-shot quantum distillation protocols.
//!
//! Dense linear algebra over small composite systems, quantum channels and
//! their distance and capacity measures, and compilers that turn an
//! `n → m` protocol into a single-shot catalytic one together with a
//! numerical certificate of its error, success probability and catalyst
//! restoration.

pub mod catalysis;
pub mod channel_catalysis;
pub mod channels;
pub mod error;
pub mod optim;
pub mod protocols;
pub mod sampling;
pub mod states;
pub mod tensor;

pub use channels::{ControlledOp, QuantumOp, TraceClass};
pub use error::{Error, Result};
pub use states::{Branch, EmbeddingSpec, FlaggedEnsemble, NormClass, State};
pub use tensor::{ComplexMatrix, SystemLayout, C64};

/// Crate version, recorded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
