//! Seeded randomness. Every consumer of randomness in a run gets its own ChaCha stream
//! derived from the run seed, so toggling one hardening layer never perturbs the draws
//! of another.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// The concrete random source injected throughout the crate.
pub type RandomSource = ChaCha20Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    KeyGen,
    /// Initial share of a party.
    PartyInit(u16),
    /// Encryption nonces of a party.
    PartyCrypto(u16),
    Bernoulli,
    Scalar,
    Noise,
    /// Decoy sampling and decoy encryption nonces.
    Decoy,
    Data,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::KeyGen => 1,
            Stream::PartyInit(p) => 0x1_0000 | p as u64,
            Stream::PartyCrypto(p) => 0x2_0000 | p as u64,
            Stream::Bernoulli => 3,
            Stream::Scalar => 4,
            Stream::Noise => 5,
            Stream::Decoy => 6,
            Stream::Data => 7,
        }
    }
}

pub fn stream_rng(seed: u64, stream: Stream) -> RandomSource {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

#[cfg(test)]
pub(crate) fn test_key() -> &'static crate::paillier::KeyPair {
    use std::sync::OnceLock;
    static KEY: OnceLock<crate::paillier::KeyPair> = OnceLock::new();
    KEY.get_or_init(|| {
        crate::paillier::keygen(512, &mut stream_rng(0x5eed, Stream::KeyGen)).expect("keygen")
    })
}
