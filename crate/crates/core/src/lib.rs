//! Multi-party principal eigenvector computation by power iteration, with an
//! arbitrator that only ever sees Paillier ciphertexts.
//!
//! Data parties hold column blocks `A₁ … A_N` of `M = [A₁ … A_N]` and jointly compute
//! the principal eigenvector of `MᵀM`. Hardening layers (encryption, random scaling,
//! data padding, Bernoulli obfuscation) are toggled by [`protocol::ProtocolConfig`];
//! [`adversary`] replays the inference attacks each layer is meant to stop.

pub mod adversary;
pub mod bench;
pub mod encoding;
pub mod linalg;
pub mod paillier;
pub mod protocol;
pub mod rng;
pub mod synth;
pub mod transport;
