use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{combine, scale_payload, CodecPlan, ObfuscationStyle, ProtocolConfig, ProtocolError};
use crate::encoding::FixedPointCodec;
use crate::linalg::RealVector;
use crate::paillier::{add_encrypted, encrypt, Ciphertext, PublicKey};
use crate::rng::{stream_rng, RandomSource, Stream};
use crate::transport::{Message, MsgType, PartyId, Payload, ARBITRATOR};

/// Number of recent valid emissions kept for perturbed decoys.
const RELEASED_MEMORY: usize = 3;

/// Source of the arbitrator's per-round Bernoulli outcomes (`true` = valid).
#[derive(Debug, Clone)]
pub enum CoinSource {
    Bernoulli { p: f64, rng: RandomSource },
    /// Fixed outcomes, then `true` forever.
    Scripted(VecDeque<bool>),
}

impl CoinSource {
    pub fn bernoulli(p: f64, seed: u64) -> Self {
        CoinSource::Bernoulli { p, rng: stream_rng(seed, Stream::Bernoulli) }
    }

    pub fn scripted(outcomes: impl IntoIterator<Item = bool>) -> Self {
        CoinSource::Scripted(outcomes.into_iter().collect())
    }

    pub fn draw(&mut self) -> bool {
        match self {
            CoinSource::Bernoulli { p, .. } if *p >= 1.0 => true,
            CoinSource::Bernoulli { p, rng } => rng.random_bool(*p),
            CoinSource::Scripted(seq) => seq.pop_front().unwrap_or(true),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmissionKind {
    /// Candidate computed this round and sent at once.
    Fresh { candidate: u32, scale: u64 },
    /// Candidate computed in `computed_round`, held back, sent now.
    Released { candidate: u32, scale: u64, computed_round: u32 },
    Decoy,
}

impl EmissionKind {
    pub fn is_valid(self) -> bool {
        !matches!(self, EmissionKind::Decoy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmissionRecord {
    pub round: u32,
    pub kind: EmissionKind,
}

#[derive(Debug, Clone)]
struct Deferred {
    payload: Payload,
    candidate: u32,
    scale: u64,
    computed_round: u32,
}

/// Trent. Holds the public key only; with encryption on every payload it stores is a
/// ciphertext.
#[derive(Debug, Clone)]
pub struct ArbitratorState {
    public: Option<PublicKey>,
    codec: FixedPointCodec,
    session_id: u32,
    parties: usize,
    sizes: Vec<usize>,
    round: u32,
    scaling: bool,
    scalar_range: u64,
    style: ObfuscationStyle,
    noise: Normal<f64>,
    noise_cap: f64,
    decoy_bound: f64,
    deferred: Option<Deferred>,
    released: VecDeque<Payload>,
    candidates: u32,
    coins: CoinSource,
    scalar_rng: RandomSource,
    noise_rng: RandomSource,
    decoy_rng: RandomSource,
    log: Vec<EmissionRecord>,
}

impl ArbitratorState {
    /// `sizes` are the parties' unpadded column counts, public at setup.
    pub fn new(
        config: &ProtocolConfig,
        public: Option<PublicKey>,
        plan: &CodecPlan,
        parties: usize,
        sizes: Vec<usize>,
        coins: Option<CoinSource>,
    ) -> Self {
        ArbitratorState {
            public,
            codec: plan.codec.clone(),
            session_id: config.session_id,
            parties,
            sizes,
            round: 0,
            scaling: config.scaling,
            scalar_range: config.scalar_range,
            style: config.obfuscation_style,
            noise: Normal::new(0.0, config.noise_sigma).expect("validated sigma"),
            noise_cap: 10.0 * config.noise_sigma,
            decoy_bound: plan.decoy_bound,
            deferred: None,
            released: VecDeque::with_capacity(RELEASED_MEMORY),
            candidates: 0,
            coins: coins.unwrap_or_else(|| CoinSource::bernoulli(config.obfuscation_p, config.seed)),
            scalar_rng: stream_rng(config.seed, Stream::Scalar),
            noise_rng: stream_rng(config.seed, Stream::Noise),
            decoy_rng: stream_rng(config.seed, Stream::Decoy),
            log: Vec::new(),
        }
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn has_deferred(&self) -> bool {
        self.deferred.is_some()
    }

    pub fn emissions(&self) -> &[EmissionRecord] {
        &self.log
    }

    fn check_inbound(
        &self,
        msgs: &[Message],
        kind: MsgType,
        round: u32,
        equal_lengths: bool,
    ) -> Result<Vec<Message>, ProtocolError> {
        if msgs.len() != self.parties {
            return Err(ProtocolError::Violation(format!(
                "expected {} {kind:?} messages, got {}",
                self.parties,
                msgs.len()
            )));
        }
        let mut sorted = msgs.to_vec();
        sorted.sort_by_key(|m| m.sender);
        for (i, m) in sorted.iter().enumerate() {
            if m.sender != (i + 1) as PartyId {
                return Err(ProtocolError::Violation(format!("unexpected or duplicate sender {}", m.sender)));
            }
            if m.msg_type != kind || m.session_id != self.session_id {
                return Err(ProtocolError::Violation(format!("party {} sent a foreign message", m.sender)));
            }
            if m.round != round {
                return Err(ProtocolError::Violation(format!(
                    "party {} sent round {} during round {round}",
                    m.sender, m.round
                )));
            }
        }
        if equal_lengths && sorted.iter().any(|m| m.payload.len() != sorted[0].payload.len()) {
            return Err(ProtocolError::Violation("share lengths differ".into()));
        }
        Ok(sorted)
    }

    fn remember(&mut self, payload: &Payload) {
        if self.released.len() == RELEASED_MEMORY {
            self.released.pop_front();
        }
        self.released.push_back(payload.clone());
    }

    fn seal(&mut self, values: &[f64]) -> Result<Payload, ProtocolError> {
        let Some(pk) = &self.public else {
            return Ok(Payload::Reals(values.to_vec()));
        };
        let encoded = self.codec.encode_vector(values)?;
        let cts = encoded
            .iter()
            .map(|m| encrypt(pk, m, &mut self.decoy_rng).map(|c| c.value().clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Payload::BigInts(cts))
    }

    fn perturb(&mut self, base: &Payload) -> Result<Payload, ProtocolError> {
        let cap = self.noise_cap;
        let e: Vec<f64> =
            (0..base.len()).map(|_| self.noise.sample(&mut self.noise_rng).clamp(-cap, cap)).collect();
        // sealing even all-zero noise re-randomizes the replayed ciphertexts
        let sealed = self.seal(&e)?;
        match (&self.public, base, sealed) {
            (None, Payload::Reals(b), _) => Ok(Payload::Reals(b.iter().zip(&e).map(|(x, y)| x + y).collect())),
            (Some(pk), Payload::BigInts(b), Payload::BigInts(n)) => {
                let id = pk.key_id();
                let sum = b
                    .iter()
                    .zip(n)
                    .map(|(x, y)| {
                        add_encrypted(pk, &Ciphertext::from_raw(x.clone(), id), &Ciphertext::from_raw(y, id))
                            .map(|c| c.value().clone())
                    })
                    .collect::<Result<_, _>>()?;
                Ok(Payload::BigInts(sum))
            }
            _ => Err(ProtocolError::Violation("payload kind does not match mode".into())),
        }
    }

    fn decoy(&mut self, len: usize) -> Result<Payload, ProtocolError> {
        let base = match self.style {
            ObfuscationStyle::PerturbedReplay => self.released.back().cloned(),
            ObfuscationStyle::PerturbedMean if !self.released.is_empty() => {
                let refs: Vec<&Payload> = self.released.iter().collect();
                Some(combine(self.public.as_ref(), &refs)?)
            }
            _ => None,
        };
        match base {
            Some(b) => self.perturb(&b),
            None => {
                let bound = self.decoy_bound;
                let values: Vec<f64> = (0..len).map(|_| self.decoy_rng.random_range(-bound..=bound)).collect();
                self.seal(&values)
            }
        }
    }

    /// Combines the parties' `SHARE_VEC` messages and emits `AGG_VEC`.
    ///
    /// Without a held-back candidate, computes `E[r·u]` and either sends it or holds
    /// it and sends a decoy. With one, ignores the inbound shares and either releases
    /// the held candidate or sends another decoy.
    pub fn aggregate_vec(&mut self, msgs: &[Message]) -> Result<Message, ProtocolError> {
        let round = self.round + 1;
        let msgs = self.check_inbound(msgs, MsgType::ShareVec, round, true)?;
        let len = msgs[0].payload.len();
        self.round = round;
        let (payload, kind) = match self.deferred.take() {
            None => {
                let refs: Vec<&Payload> = msgs.iter().map(|m| &m.payload).collect();
                let sum = combine(self.public.as_ref(), &refs)?;
                let scale = if self.scaling { self.scalar_rng.random_range(2..=self.scalar_range) } else { 1 };
                let candidate_payload = scale_payload(self.public.as_ref(), &sum, scale)?;
                self.candidates += 1;
                let candidate = self.candidates;
                if self.coins.draw() {
                    self.remember(&candidate_payload);
                    (candidate_payload, EmissionKind::Fresh { candidate, scale })
                } else {
                    self.deferred =
                        Some(Deferred { payload: candidate_payload, candidate, scale, computed_round: round });
                    (self.decoy(len)?, EmissionKind::Decoy)
                }
            }
            Some(held) => {
                if self.coins.draw() {
                    self.remember(&held.payload);
                    let kind = EmissionKind::Released {
                        candidate: held.candidate,
                        scale: held.scale,
                        computed_round: held.computed_round,
                    };
                    (held.payload, kind)
                } else {
                    self.deferred = Some(held);
                    (self.decoy(len)?, EmissionKind::Decoy)
                }
            }
        };
        self.log.push(EmissionRecord { round, kind });
        Ok(Message::new(MsgType::AggVec, self.session_id, round, ARBITRATOR, payload))
    }

    /// Sums the parties' `SHARE_NORM` messages into `AGG_NORM`. The shares already
    /// carry `r²` because parties compute them from `r·u`.
    pub fn aggregate_norm(&mut self, msgs: &[Message]) -> Result<Message, ProtocolError> {
        let msgs = self.check_inbound(msgs, MsgType::ShareNorm, self.round, true)?;
        if msgs[0].payload.len() != 1 {
            return Err(ProtocolError::Violation("norm share must be a single element".into()));
        }
        let refs: Vec<&Payload> = msgs.iter().map(|m| &m.payload).collect();
        let sum = combine(self.public.as_ref(), &refs)?;
        Ok(Message::new(MsgType::AggNorm, self.session_id, self.round, ARBITRATOR, sum))
    }

    /// The `CONVERGED` broadcast asking every party for its final share.
    pub fn final_request(&self) -> Message {
        Message::new(MsgType::Converged, self.session_id, self.round, ARBITRATOR, Payload::Reals(Vec::new()))
    }

    /// Drops padding coordinates, concatenates in party order and normalizes.
    pub fn finalize(&self, finals: &[Message]) -> Result<RealVector, ProtocolError> {
        if finals.len() != self.parties {
            return Err(ProtocolError::Violation(format!(
                "missing final share: {} of {}",
                finals.len(),
                self.parties
            )));
        }
        let finals = self.check_inbound(finals, MsgType::FinalShare, self.round, false)?;
        let mut parts = Vec::with_capacity(self.parties);
        for (m, &n_i) in finals.iter().zip(&self.sizes) {
            let Payload::Reals(v) = &m.payload else {
                return Err(ProtocolError::Violation("final share must be plaintext".into()));
            };
            if v.len() < n_i {
                return Err(ProtocolError::Violation(format!("party {} sent a short final share", m.sender)));
            }
            parts.push(RealVector::try_new(v[..n_i].to_vec())?);
        }
        Ok(RealVector::concat(&parts).normalize()?.canonical_sign())
    }
}
