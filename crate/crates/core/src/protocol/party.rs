use std::collections::VecDeque;

use rand::Rng;

use super::{ProtocolConfig, ProtocolError};
use crate::encoding::FixedPointCodec;
use crate::linalg::{matvec, matvec_transpose, pad_matrix, DenseMatrix, LinalgError, RealVector};
use crate::paillier::{decrypt, encrypt, Ciphertext, KeyPair};
use crate::rng::{stream_rng, RandomSource, Stream};
use crate::transport::{Message, MsgType, PartyId, Payload};

/// Windowed recurrence rule: a share counts as settled when it lies within `eps`
/// (∞-norm) of one of the last `window` shares, and the party converges after
/// `repeat` settled rounds in a row. Decoy rounds break a streak but valid shares
/// recur after every restart, so the window still finds them.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTracker {
    window: usize,
    repeat: usize,
    eps: f64,
    history: VecDeque<RealVector>,
    streak: usize,
}

impl ConvergenceTracker {
    pub fn new(window: usize, repeat: usize, eps: f64) -> Self {
        ConvergenceTracker { window, repeat, eps, history: VecDeque::with_capacity(window), streak: 0 }
    }

    /// Smallest ∞-norm distance from `share` to the stored history.
    pub fn recurrence_distance(&self, share: &RealVector) -> Option<f64> {
        self.history.iter().map(|h| h.max_abs_diff(share)).min_by(f64::total_cmp)
    }

    /// Records `share` and reports whether the rule is now satisfied.
    pub fn observe(&mut self, share: &RealVector) -> bool {
        match self.recurrence_distance(share) {
            Some(d) if d < self.eps => self.streak += 1,
            _ => self.streak = 0,
        }
        if self.history.len() == self.window {
            self.history.pop_front();
        }
        self.history.push_back(share.clone());
        self.streak >= self.repeat
    }

    pub fn streak(&self) -> usize {
        self.streak
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpCounters {
    pub encryptions: u64,
    pub decryptions: u64,
}

#[derive(Debug, Clone)]
struct Crypto {
    keys: KeyPair,
    codec: FixedPointCodec,
}

#[derive(Debug, Clone)]
pub struct PartyState {
    id: PartyId,
    session_id: u32,
    data: DenseMatrix,
    original_cols: usize,
    share: RealVector,
    round: u32,
    tracker: ConvergenceTracker,
    converged: bool,
    crypto: Option<Crypto>,
    rng: RandomSource,
    counters: OpCounters,
    trajectory: Vec<RealVector>,
}

impl PartyState {
    /// Pads the data if configured and draws the initial share uniformly from `[−1, 1]`.
    pub fn init(
        data: &DenseMatrix,
        config: &ProtocolConfig,
        keys: Option<&KeyPair>,
        codec: &FixedPointCodec,
        id: PartyId,
    ) -> Result<Self, ProtocolError> {
        if data.is_empty() {
            return Err(LinalgError::Domain("party data is empty".into()).into());
        }
        if let Some(i) = data.entries().iter().position(|x| !x.is_finite()) {
            return Err(LinalgError::NonFinite(i).into());
        }
        let padded = match config.padding.as_ref().and_then(|p| p.get(id as usize - 1)) {
            Some(&r) => pad_matrix(data, r)?,
            None => data.clone(),
        };
        let mut init_rng = stream_rng(config.seed, Stream::PartyInit(id));
        let share = RealVector::new((0..padded.cols()).map(|_| init_rng.random_range(-1.0..=1.0)).collect());
        Ok(PartyState {
            id,
            session_id: config.session_id,
            original_cols: data.cols(),
            data: padded,
            share,
            round: 0,
            tracker: ConvergenceTracker::new(config.window, config.repeat_count, config.eps),
            converged: false,
            crypto: keys.map(|k| Crypto { keys: k.clone(), codec: codec.clone() }),
            rng: stream_rng(config.seed, Stream::PartyCrypto(id)),
            counters: OpCounters::default(),
            trajectory: Vec::new(),
        })
    }

    pub fn id(&self) -> PartyId {
        self.id
    }

    pub fn data(&self) -> &DenseMatrix {
        &self.data
    }

    pub fn share(&self) -> &RealVector {
        &self.share
    }

    #[cfg(test)]
    pub(super) fn set_share(&mut self, share: RealVector) {
        self.share = share;
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn is_converged(&self) -> bool {
        self.converged
    }

    pub fn counters(&self) -> OpCounters {
        self.counters
    }

    pub fn trajectory(&self) -> &[RealVector] {
        &self.trajectory
    }

    pub fn original_cols(&self) -> usize {
        self.original_cols
    }

    fn seal(&mut self, values: &[f64]) -> Result<Payload, ProtocolError> {
        let Some(crypto) = &self.crypto else {
            return Ok(Payload::Reals(values.to_vec()));
        };
        let encoded = crypto.codec.encode_vector(values)?;
        let cts = encoded
            .iter()
            .map(|m| encrypt(&crypto.keys.public, m, &mut self.rng).map(|c| c.value().clone()))
            .collect::<Result<Vec<_>, _>>()?;
        self.counters.encryptions += cts.len() as u64;
        Ok(Payload::BigInts(cts))
    }

    fn open(&mut self, payload: &Payload) -> Result<RealVector, ProtocolError> {
        match (&self.crypto, payload) {
            (None, Payload::Reals(v)) => Ok(RealVector::try_new(v.clone())?),
            (Some(crypto), Payload::BigInts(v)) => {
                let pk = &crypto.keys.public;
                let plain = v
                    .iter()
                    .map(|c| decrypt(&crypto.keys.private, pk, &Ciphertext::from_raw(c.clone(), pk.key_id())))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| ProtocolError::Violation(format!("decryption failed: {e}")))?;
                self.counters.decryptions += plain.len() as u64;
                Ok(RealVector::new(plain.iter().map(|m| crypto.codec.decode_unscaled(m)).collect()))
            }
            _ => Err(ProtocolError::Violation("payload kind does not match mode".into())),
        }
    }

    fn expect(&self, msg: &Message, kind: MsgType, len: usize) -> Result<(), ProtocolError> {
        if msg.msg_type != kind {
            return Err(ProtocolError::Violation(format!("expected {kind:?}, got {:?}", msg.msg_type)));
        }
        if msg.round != self.round + 1 {
            return Err(ProtocolError::Violation(format!(
                "party {} in round {} received round {}",
                self.id,
                self.round + 1,
                msg.round
            )));
        }
        if msg.payload.len() != len {
            return Err(ProtocolError::Violation(format!(
                "{kind:?} carries {} elements, expected {len}",
                msg.payload.len()
            )));
        }
        Ok(())
    }

    /// `SHARE_VEC` carrying `Aα`.
    pub fn phase1(&mut self) -> Result<Message, ProtocolError> {
        if self.converged {
            return Err(ProtocolError::Violation(format!("party {} already converged", self.id)));
        }
        let v = matvec(&self.data, &self.share)?;
        let payload = self.seal(&v)?;
        Ok(Message::new(MsgType::ShareVec, self.session_id, self.round + 1, self.id, payload))
    }

    /// Opens `AGG_VEC` as `u` (still carrying the arbitrator's scale), returns
    /// `t = Aᵀu` and the `SHARE_NORM` message carrying `‖t‖²`.
    pub fn phase2(&mut self, agg: &Message) -> Result<(RealVector, Message), ProtocolError> {
        self.expect(agg, MsgType::AggVec, self.data.rows())?;
        let u = self.open(&agg.payload)?;
        let t = matvec_transpose(&self.data, &u)?;
        let payload = self.seal(&[t.norm2_squared()])?;
        Ok((t, Message::new(MsgType::ShareNorm, self.session_id, self.round + 1, self.id, payload)))
    }

    /// `α ← t / √(norm sum)`; returns whether the convergence rule fired.
    pub fn update(&mut self, agg_norm: &Message, t: RealVector) -> Result<bool, ProtocolError> {
        self.expect(agg_norm, MsgType::AggNorm, 1)?;
        let total = self.open(&agg_norm.payload)?[0];
        if !(total > 0.0) {
            return Err(ProtocolError::Degenerate(format!("norm sum {total} is not positive")));
        }
        self.share = t.scaled(1.0 / total.sqrt());
        self.round += 1;
        self.converged = self.tracker.observe(&self.share);
        self.trajectory.push(self.share.clone());
        Ok(self.converged)
    }

    pub fn converged_message(&self) -> Message {
        Message::new(MsgType::Converged, self.session_id, self.round, self.id, Payload::Reals(Vec::new()))
    }

    /// Answers the arbitrator's `CONVERGED` request with the plaintext share.
    pub fn final_share(&self, request: &Message) -> Result<Message, ProtocolError> {
        if request.msg_type != MsgType::Converged || request.round != self.round {
            return Err(ProtocolError::Violation(format!(
                "party {} expected a final-share request for round {}",
                self.id, self.round
            )));
        }
        Ok(Message::new(
            MsgType::FinalShare,
            self.session_id,
            self.round,
            self.id,
            Payload::Reals(self.share.to_vec()),
        ))
    }
}
