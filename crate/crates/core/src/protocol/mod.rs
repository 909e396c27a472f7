//! Party and arbitrator state machines and the round driver.
//!
//! One round moves `SHARE_VEC` up, `AGG_VEC` down, `SHARE_NORM` up and `AGG_NORM`
//! down. A party whose share has settled sends `CONVERGED`; the arbitrator then
//! broadcasts `CONVERGED` as a request and every party answers with `FINAL_SHARE`.

mod arbitrator;
mod party;

use std::str::FromStr;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use thiserror::Error;

use crate::encoding::{EncodingError, FixedPointCodec, DEFAULT_FRACTION_BITS};
use crate::linalg::{pad_matrix, DenseMatrix, LinalgError, RealVector};
use crate::paillier::{add_encrypted, scalar_mul, Ciphertext, KeyPair, PaillierError, PublicKey};
use crate::transport::{Bus, Message, MsgType, PartyId, Payload, Transcript, TransportError, ARBITRATOR};

pub use arbitrator::{ArbitratorState, CoinSource, EmissionKind, EmissionRecord};
pub use party::{ConvergenceTracker, OpCounters, PartyState};

pub const DEFAULT_SCALAR_RANGE: u64 = 1 << 16;
pub const DEFAULT_EPS: f64 = 1e-8;
pub const DEFAULT_WINDOW: usize = 8;
pub const DEFAULT_REPEAT: usize = 3;
pub const DEFAULT_MAX_ROUNDS: u32 = 2000;
pub const DEFAULT_NOISE_SIGMA: f64 = 1.0;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Paillier(#[from] PaillierError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("protocol violation: {0}")]
    Violation(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("no party converged within {rounds} rounds")]
    NonConvergence { rounds: u32 },
}

impl ProtocolError {
    /// Process exit code for the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            ProtocolError::Config(_) => 2,
            ProtocolError::NonConvergence { .. } => 4,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObfuscationStyle {
    FreshRandom,
    PerturbedReplay,
    PerturbedMean,
}

impl ObfuscationStyle {
    pub fn as_str(self) -> &'static str {
        match self {
            ObfuscationStyle::FreshRandom => "fresh_random",
            ObfuscationStyle::PerturbedReplay => "perturbed_replay",
            ObfuscationStyle::PerturbedMean => "perturbed_mean",
        }
    }
}

impl FromStr for ObfuscationStyle {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fresh_random" => Ok(ObfuscationStyle::FreshRandom),
            "perturbed_replay" => Ok(ObfuscationStyle::PerturbedReplay),
            "perturbed_mean" => Ok(ObfuscationStyle::PerturbedMean),
            other => Err(ProtocolError::Config(format!("unknown obfuscation style {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub encryption: bool,
    pub scaling: bool,
    /// Per-party padding scalar `r`, or `None` for no padding.
    pub padding: Option<Vec<f64>>,
    /// Probability that a round emits a valid vector.
    pub obfuscation_p: f64,
    pub noise_sigma: f64,
    pub obfuscation_style: ObfuscationStyle,
    pub eps: f64,
    pub max_rounds: u32,
    pub window: usize,
    pub repeat_count: usize,
    pub fraction_bits: u32,
    pub scalar_range: u64,
    pub seed: u64,
    pub session_id: u32,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            encryption: false,
            scaling: false,
            padding: None,
            obfuscation_p: 1.0,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            obfuscation_style: ObfuscationStyle::PerturbedReplay,
            eps: DEFAULT_EPS,
            max_rounds: DEFAULT_MAX_ROUNDS,
            window: DEFAULT_WINDOW,
            repeat_count: DEFAULT_REPEAT,
            fraction_bits: DEFAULT_FRACTION_BITS,
            scalar_range: DEFAULT_SCALAR_RANGE,
            seed: 0,
            session_id: 1,
        }
    }
}

impl ProtocolConfig {
    pub fn basic() -> Self {
        Self::default()
    }

    /// Every hardening layer on: encryption, scaling, padding `r` for each of
    /// `parties` parties, and obfuscation with probability `p`.
    pub fn hardened(parties: usize, r: f64, p: f64) -> Self {
        ProtocolConfig {
            encryption: true,
            scaling: true,
            padding: Some(vec![r; parties]),
            obfuscation_p: p,
            ..Self::default()
        }
    }

    /// Short label such as `enc+scale+pad+obf`.
    pub fn mode_label(&self) -> String {
        let mut parts = Vec::new();
        if self.encryption {
            parts.push("enc");
        }
        if self.scaling {
            parts.push("scale");
        }
        if self.padding.is_some() {
            parts.push("pad");
        }
        if self.obfuscation_p < 1.0 {
            parts.push("obf");
        }
        if parts.is_empty() {
            "basic".into()
        } else {
            parts.join("+")
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let fail = |m: &str| Err(ProtocolError::Config(m.into()));
        if self.scaling && !self.encryption {
            return fail("scaling requires encryption");
        }
        if !(self.obfuscation_p > 0.0 && self.obfuscation_p <= 1.0) {
            return fail("obfuscation_p must lie in (0, 1]");
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return fail("eps must be positive");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail("noise_sigma must be non-negative");
        }
        if self.scalar_range < 2 {
            return fail("scalar_range must be at least 2");
        }
        if self.window == 0 || self.repeat_count == 0 || self.max_rounds == 0 {
            return fail("window, repeat_count and max_rounds must be positive");
        }
        if let Some(pads) = &self.padding {
            if pads.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
                return fail("padding scalars must be positive");
            }
        }
        Ok(())
    }
}

/// Per-element magnitude bound on aggregate vectors and the codec built from it.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecPlan {
    pub codec: FixedPointCodec,
    /// Bound on any entry of an emitted aggregate, valid or decoy.
    pub vector_bound: f64,
    /// Half-width of the uniform distribution fresh decoys are drawn from.
    pub decoy_bound: f64,
}

/// Sizes the codec from public bounds on the (padded) joint data.
///
/// With `F = ‖M‖_F`, `c` columns and scalars up to `R`, aggregates stay below
/// `V = 4·R·F·√c + 10σ` and norm shares below `F²·k·V²`.
pub fn plan_codec(
    padded: &[DenseMatrix],
    config: &ProtocolConfig,
    public: Option<&PublicKey>,
) -> Result<CodecPlan, ProtocolError> {
    let frob = padded.iter().map(|a| a.frobenius_norm().powi(2)).sum::<f64>().sqrt();
    let cols: usize = padded.iter().map(DenseMatrix::cols).sum();
    let k = padded.first().map_or(0, DenseMatrix::rows) as f64;
    let r = if config.scaling { config.scalar_range as f64 } else { 1.0 };
    // uniform entries on [−B, B] give fresh decoys a norm near R·F
    let decoy_bound = r * frob.max(1.0) * (3.0 / k.max(1.0)).sqrt();
    let vector_bound = 4.0 * r * frob.max(1.0) * (cols.max(1) as f64).sqrt() + 10.0 * config.noise_sigma;
    let norm_bound = frob.max(1.0).powi(2) * k * vector_bound * vector_bound;
    let magnitude = 2.0 * vector_bound.max(norm_bound);
    let modulus = match public {
        Some(pk) => pk.n().clone(),
        // plaintext runs still quantize decoy noise consistently
        None => BigUint::from(1u8) << 2048u32,
    };
    let codec = FixedPointCodec::new(modulus, config.fraction_bits, magnitude, config.scalar_range)
        .map_err(|e| ProtocolError::Config(format!("key too small for the data: {e}")))?;
    Ok(CodecPlan { codec, vector_bound, decoy_bound })
}

/// Homomorphic (or plaintext) element-wise sum of payloads.
pub fn combine(public: Option<&PublicKey>, payloads: &[&Payload]) -> Result<Payload, ProtocolError> {
    let first = payloads.first().ok_or_else(|| ProtocolError::Violation("nothing to combine".into()))?;
    let len = first.len();
    if payloads.iter().any(|p| p.len() != len) {
        return Err(ProtocolError::Violation("payload lengths differ".into()));
    }
    match public {
        None => {
            let mut acc = vec![0.0; len];
            for p in payloads {
                let Payload::Reals(v) = p else {
                    return Err(ProtocolError::Violation("ciphertext in plaintext mode".into()));
                };
                acc.iter_mut().zip(v).for_each(|(a, x)| *a += x);
            }
            Ok(Payload::Reals(acc))
        }
        Some(pk) => {
            let mut acc: Option<Vec<Ciphertext>> = None;
            for p in payloads {
                let Payload::BigInts(v) = p else {
                    return Err(ProtocolError::Violation("plaintext in encrypted mode".into()));
                };
                let cts = v.iter().map(|c| Ciphertext::from_raw(c.clone(), pk.key_id()));
                acc = Some(match acc {
                    None => cts.collect(),
                    Some(prev) => prev
                        .iter()
                        .zip(cts)
                        .map(|(a, b)| add_encrypted(pk, a, &b))
                        .collect::<Result<_, _>>()?,
                });
            }
            Ok(Payload::BigInts(acc.unwrap_or_default().into_iter().map(|c| c.value().clone()).collect()))
        }
    }
}

/// Multiplies every element by the integer `s` (homomorphically when encrypted).
pub fn scale_payload(public: Option<&PublicKey>, payload: &Payload, s: u64) -> Result<Payload, ProtocolError> {
    if s == 1 {
        return Ok(payload.clone());
    }
    match (public, payload) {
        (None, Payload::Reals(v)) => Ok(Payload::Reals(v.iter().map(|x| x * s as f64).collect())),
        (Some(pk), Payload::BigInts(v)) => {
            let s = BigUint::from(s);
            let out = v
                .iter()
                .map(|c| scalar_mul(pk, &Ciphertext::from_raw(c.clone(), pk.key_id()), &s).map(|c| c.value().clone()))
                .collect::<Result<_, _>>()?;
            Ok(Payload::BigInts(out))
        }
        _ => Err(ProtocolError::Violation("payload kind does not match mode".into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Timing {
    pub party: Duration,
    pub arbitrator: Duration,
}

#[derive(Debug, Clone)]
pub struct ProtocolResult {
    /// Unit-norm, sign-canonical estimate over the unpadded coordinates.
    pub eigenvector: RealVector,
    pub rounds_total: u32,
    pub rounds_valid: u32,
    pub transcript: Transcript,
    /// Arbitrator's private record of what each round emitted.
    pub emissions: Vec<EmissionRecord>,
    /// Each party's share after every round.
    pub trajectories: Vec<Vec<RealVector>>,
    /// Parties that reported convergence in the final round.
    pub converged_parties: Vec<PartyId>,
    pub counters: Vec<OpCounters>,
    pub timing: Timing,
}

fn check_datasets(datasets: &[DenseMatrix], config: &ProtocolConfig) -> Result<(), ProtocolError> {
    if datasets.len() < 2 {
        return Err(ProtocolError::Config("at least two parties are required".into()));
    }
    if datasets.len() >= u16::MAX as usize {
        return Err(ProtocolError::Config("too many parties".into()));
    }
    let k = datasets[0].rows();
    if k == 0 || datasets.iter().any(|d| d.rows() != k || d.cols() == 0) {
        return Err(ProtocolError::Config("datasets must be non-empty and share a row count".into()));
    }
    if let Some(pads) = &config.padding {
        if pads.len() != datasets.len() {
            return Err(ProtocolError::Config(format!(
                "{} padding scalars for {} parties",
                pads.len(),
                datasets.len()
            )));
        }
    }
    Ok(())
}

fn expect_one(bus: &Bus, receiver: PartyId) -> Result<Message, ProtocolError> {
    bus.poll(receiver)?
        .ok_or_else(|| ProtocolError::Violation(format!("endpoint {receiver} expected a message")))
}

/// Runs the protocol to termination on an in-process bus.
pub fn run_protocol(
    datasets: &[DenseMatrix],
    config: &ProtocolConfig,
    keys: Option<&KeyPair>,
    bus: &Bus,
) -> Result<ProtocolResult, ProtocolError> {
    run_with_coins(datasets, config, keys, bus, None)
}

/// As [`run_protocol`], optionally forcing the arbitrator's Bernoulli outcomes.
pub fn run_with_coins(
    datasets: &[DenseMatrix],
    config: &ProtocolConfig,
    keys: Option<&KeyPair>,
    bus: &Bus,
    coins: Option<CoinSource>,
) -> Result<ProtocolResult, ProtocolError> {
    config.validate()?;
    check_datasets(datasets, config)?;
    if config.encryption != keys.is_some() {
        return Err(ProtocolError::Config(if config.encryption {
            "encryption requires a key pair".into()
        } else {
            "key pair supplied but encryption is off".into()
        }));
    }
    let n = datasets.len();
    if bus.parties() as usize != n {
        return Err(ProtocolError::Config(format!("bus has {} parties, data has {n}", bus.parties())));
    }
    let padded = match &config.padding {
        Some(pads) => datasets.iter().zip(pads).map(|(a, &r)| pad_matrix(a, r)).collect::<Result<Vec<_>, _>>()?,
        None => datasets.to_vec(),
    };
    let plan = plan_codec(&padded, config, keys.map(|k| &k.public))?;

    let mut timing = Timing::default();
    let clock = Instant::now();
    let mut parties = datasets
        .iter()
        .enumerate()
        .map(|(i, d)| PartyState::init(d, config, keys, &plan.codec, (i + 1) as PartyId))
        .collect::<Result<Vec<_>, _>>()?;
    timing.party += clock.elapsed();
    let clock = Instant::now();
    let sizes = datasets.iter().map(DenseMatrix::cols).collect();
    let mut arb = ArbitratorState::new(config, keys.map(|k| k.public.clone()), &plan, n, sizes, coins);
    timing.arbitrator += clock.elapsed();

    let everyone = || 1..=n as PartyId;
    for _ in 0..config.max_rounds {
        let clock = Instant::now();
        for p in parties.iter_mut() {
            bus.send(ARBITRATOR, p.phase1()?)?;
        }
        timing.party += clock.elapsed();

        let clock = Instant::now();
        let inbound = everyone().map(|_| expect_one(bus, ARBITRATOR)).collect::<Result<Vec<_>, _>>()?;
        let agg = arb.aggregate_vec(&inbound)?;
        for id in everyone() {
            bus.send(id, agg.clone())?;
        }
        timing.arbitrator += clock.elapsed();

        let clock = Instant::now();
        let mut intermediates = Vec::with_capacity(n);
        for p in parties.iter_mut() {
            let (t, msg) = p.phase2(&expect_one(bus, p.id())?)?;
            intermediates.push(t);
            bus.send(ARBITRATOR, msg)?;
        }
        timing.party += clock.elapsed();

        let clock = Instant::now();
        let inbound = everyone().map(|_| expect_one(bus, ARBITRATOR)).collect::<Result<Vec<_>, _>>()?;
        let agg = arb.aggregate_norm(&inbound)?;
        for id in everyone() {
            bus.send(id, agg.clone())?;
        }
        timing.arbitrator += clock.elapsed();

        let clock = Instant::now();
        let mut converged = Vec::new();
        for (p, t) in parties.iter_mut().zip(intermediates) {
            if p.update(&expect_one(bus, p.id())?, t)? {
                converged.push(p.id());
                bus.send(ARBITRATOR, p.converged_message())?;
            }
        }
        timing.party += clock.elapsed();
        if converged.is_empty() {
            continue;
        }

        let clock = Instant::now();
        for _ in &converged {
            let msg = expect_one(bus, ARBITRATOR)?;
            if msg.msg_type != MsgType::Converged {
                return Err(ProtocolError::Violation(format!("expected CONVERGED, got {:?}", msg.msg_type)));
            }
        }
        let request = arb.final_request();
        for id in everyone() {
            bus.send(id, request.clone())?;
        }
        timing.arbitrator += clock.elapsed();

        let clock = Instant::now();
        for p in &parties {
            let req = expect_one(bus, p.id())?;
            bus.send(ARBITRATOR, p.final_share(&req)?)?;
        }
        timing.party += clock.elapsed();

        let clock = Instant::now();
        let finals = everyone().map(|_| expect_one(bus, ARBITRATOR)).collect::<Result<Vec<_>, _>>()?;
        let eigenvector = arb.finalize(&finals)?;
        timing.arbitrator += clock.elapsed();

        let emissions = arb.emissions().to_vec();
        return Ok(ProtocolResult {
            eigenvector,
            rounds_total: arb.round(),
            rounds_valid: emissions.iter().filter(|e| e.kind.is_valid()).count() as u32,
            transcript: bus.transcript(),
            emissions,
            trajectories: parties.iter().map(|p| p.trajectory().to_vec()).collect(),
            converged_parties: converged,
            counters: parties.iter().map(PartyState::counters).collect(),
            timing,
        });
    }
    Err(ProtocolError::NonConvergence { rounds: config.max_rounds })
}
