//! Semi-honest inference attacks run from a single party's transcript view.
//!
//! Each attack consumes only what the attacking party legitimately holds: its own
//! data and keys and the frames it sent or received. Ground-truth labels from the
//! arbitrator's log are used for scoring only.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use thiserror::Error;

use crate::encoding::FixedPointCodec;
use crate::linalg::{
    column_space, deflate, dominant_subspace, jacobi_eigen_oracle, left_null_space, null_space_tolerance,
    pad_matrix, principal_angles, DenseMatrix, LinalgError, RealVector,
};
use crate::paillier::{decrypt, Ciphertext, KeyPair, PaillierError};
use crate::transport::{MsgType, PartyId, Payload, Transcript};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("insufficient signal: {0}")]
    InsufficientSignal(String),
    #[error("view does not match keys: {0}")]
    View(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Paillier(#[from] PaillierError),
}

/// Everything party `party` saw in a run, opened with its own key.
#[derive(Debug, Clone, PartialEq)]
pub struct PartyView {
    pub party: PartyId,
    /// Opened `AGG_VEC` payloads, one per round.
    pub received: Vec<RealVector>,
    /// The party's own `SHARE_VEC` payloads, opened (`Aα` per round).
    pub sent: Vec<RealVector>,
}

impl PartyView {
    pub fn from_transcript(
        transcript: &Transcript,
        party: PartyId,
        keys: Option<&KeyPair>,
        codec: &FixedPointCodec,
    ) -> Result<Self, AttackError> {
        let open = |payload: &Payload| -> Result<RealVector, AttackError> {
            match (payload, keys) {
                (Payload::Reals(v), _) => Ok(RealVector::new(v.clone())),
                (Payload::BigInts(v), Some(k)) => {
                    let id = k.public.key_id();
                    let values = v
                        .iter()
                        .map(|c| {
                            decrypt(&k.private, &k.public, &Ciphertext::from_raw(c.clone(), id))
                                .map(|m| codec.decode_unscaled(&m))
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok(RealVector::new(values))
                }
                (Payload::BigInts(_), None) => Err(AttackError::View("ciphertexts but no key".into())),
            }
        };
        let mut received = Vec::new();
        let mut sent = Vec::new();
        for rec in transcript.party_records(party) {
            match rec.message.msg_type {
                MsgType::AggVec if rec.receiver == party => received.push(open(&rec.message.payload)?),
                MsgType::ShareVec if rec.sender == party => sent.push(open(&rec.message.payload)?),
                _ => {}
            }
        }
        Ok(PartyView { party, received, sent })
    }

    pub fn rounds(&self) -> usize {
        self.received.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    pub attack: String,
    pub mode: String,
    pub metric: String,
    pub value: f64,
    pub threshold: f64,
    pub success: bool,
}

impl AttackReport {
    /// Success when `value ≤ threshold`.
    pub fn at_most(attack: &str, mode: &str, metric: &str, value: f64, threshold: f64) -> Self {
        AttackReport {
            attack: attack.into(),
            mode: mode.into(),
            metric: metric.into(),
            value,
            threshold,
            success: value <= threshold,
        }
    }

    /// Success when `value ≥ threshold`.
    pub fn at_least(attack: &str, mode: &str, metric: &str, value: f64, threshold: f64) -> Self {
        AttackReport { success: value >= threshold, ..Self::at_most(attack, mode, metric, value, threshold) }
    }
}

impl fmt::Display for AttackReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "attack={} mode={} metric={} value={:.6e} threshold={:e} success={}",
            self.attack, self.mode, self.metric, self.value, self.threshold, self.success
        )
    }
}

/// Largest principal angle between two orthonormal bases; `π/2` when the
/// dimensions differ or either is empty.
pub fn max_principal_angle(u: &[RealVector], v: &[RealVector]) -> Result<f64, LinalgError> {
    if u.len() != v.len() || u.is_empty() {
        return Ok(std::f64::consts::FRAC_PI_2);
    }
    Ok(principal_angles(u, v)?.into_iter().fold(0.0, f64::max))
}

const SUBSPACE_REL_TOL: f64 = 1e-7;

/// Estimates the other parties' column space from `u_i − Aα_i`.
pub fn attack_colspace(view: &PartyView, target_rank: usize) -> Result<Vec<RealVector>, AttackError> {
    let rounds = view.received.len().min(view.sent.len());
    if rounds < target_rank {
        return Err(AttackError::InsufficientData(format!("{rounds} rounds for rank {target_rank}")));
    }
    let diffs: Vec<RealVector> = view.received.iter().zip(&view.sent).map(|(u, own)| u.sub(own)).collect();
    Ok(dominant_subspace(&diffs, target_rank, SUBSPACE_REL_TOL))
}

#[derive(Debug, Clone, PartialEq)]
pub enum NullspaceOutcome {
    /// The party's data has no left null space; nothing leaks through it.
    Void,
    Leak {
        null_basis: Vec<RealVector>,
        /// `N_Aᵀ u_i` per round.
        projections: Vec<RealVector>,
        /// Orthonormal basis of their span, in null-space coordinates.
        span: Vec<RealVector>,
    },
}

fn project(basis: &[RealVector], x: &RealVector) -> RealVector {
    RealVector::new(basis.iter().map(|b| b.dot(x)).collect())
}

/// Projects every received `u_i` onto the left null space of the party's own data.
pub fn attack_nullspace(view: &PartyView, own_data: &DenseMatrix) -> Result<NullspaceOutcome, AttackError> {
    let null_basis = left_null_space(own_data, null_space_tolerance(own_data));
    if null_basis.is_empty() {
        return Ok(NullspaceOutcome::Void);
    }
    if view.received.is_empty() {
        return Err(AttackError::InsufficientData("no rounds observed".into()));
    }
    let projections: Vec<RealVector> = view.received.iter().map(|u| project(&null_basis, u)).collect();
    let span = dominant_subspace(&projections, null_basis.len(), SUBSPACE_REL_TOL);
    Ok(NullspaceOutcome::Leak { null_basis, projections, span })
}

/// Reference for scoring: `col(B)` projected onto the given null basis.
pub fn projected_column_space(null_basis: &[RealVector], other: &DenseMatrix) -> Vec<RealVector> {
    let projected: Vec<RealVector> = other.columns().iter().map(|c| project(null_basis, c)).collect();
    dominant_subspace(&projected, null_basis.len(), SUBSPACE_REL_TOL)
}

/// Relative size below which a deflated iterate is treated as noise.
pub const KRYLOV_FLOOR: f64 = 1e-4;

/// Estimates the second eigenvector of `MMᵀ` from the observed iterates.
///
/// Each normalized `u_i` is deflated against `u_conv`; the surviving component
/// behaves like an iteration restarted from a deflated vector, so the latest one
/// still above [`KRYLOV_FLOOR`] is the estimate.
pub fn attack_krylov(u_sequence: &[RealVector], u_conv: &RealVector) -> Result<RealVector, AttackError> {
    if u_sequence.len() < 3 {
        return Err(AttackError::InsufficientData(format!("{} iterates", u_sequence.len())));
    }
    let u_conv = u_conv.normalize()?;
    let mut estimate = None;
    for u in u_sequence {
        let Ok(unit) = u.normalize() else { continue };
        let residue = deflate(&unit, &u_conv);
        if residue.norm() > KRYLOV_FLOOR {
            estimate = Some(residue);
        }
    }
    let estimate = estimate.ok_or_else(|| AttackError::InsufficientSignal("every iterate deflates to noise".into()))?;
    Ok(estimate.normalize()?.canonical_sign())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierLabels {
    /// `true` marks a suspected decoy.
    pub decoy: Vec<bool>,
    /// Rounds the detector actually scored.
    pub scored: Vec<bool>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionMetrics {
    /// `None` when nothing was flagged.
    pub precision: Option<f64>,
    /// `None` when no decoys were scored.
    pub recall: Option<f64>,
    pub flagged: usize,
    pub decoys: usize,
}

pub const DEFAULT_OUTLIER_WINDOW: usize = 5;
pub const DEFAULT_OUTLIER_Z: f64 = 8.0;

/// Flags vectors that jump away from the observed trajectory.
///
/// The sequence is scanned from the last round backwards, starting from the settled
/// tail. Each normalized vector is compared with the nearest unflagged vector after it
/// and with the vector observed right before it; the nearer of the two, in units of
/// the largest step among the trailing `window` unflagged steps, is its score. The
/// first vector follows an unseen random start and is left unscored.
pub fn attack_outlier(received: &[RealVector], window: usize, z_threshold: f64) -> OutlierLabels {
    let window = window.max(1);
    let units: Vec<Option<RealVector>> =
        received.iter().map(|u| u.normalize().ok().map(|v| v.canonical_sign())).collect();
    let mut decoy = vec![false; received.len()];
    let mut scored = vec![false; received.len()];
    let mut scores = vec![0.0; received.len()];
    let mut trusted: Vec<&RealVector> = Vec::new();
    for (i, unit) in units.iter().enumerate().rev() {
        let Some(x) = unit else {
            decoy[i] = true;
            continue;
        };
        if i > 0 && trusted.len() >= 2 {
            let from = trusted.len().saturating_sub(window + 1);
            let scale = trusted[from..].windows(2).map(|w| w[1].sub(w[0]).norm()).fold(0.0, f64::max);
            let after = x.sub(trusted[trusted.len() - 1]).norm();
            let before = i
                .checked_sub(1)
                .and_then(|j| units[j].as_ref())
                .map_or(f64::INFINITY, |y| x.sub(y).norm());
            let dist = after.min(before);
            let z = if scale > 0.0 { dist / scale } else if dist > 0.0 { f64::INFINITY } else { 0.0 };
            scored[i] = true;
            scores[i] = z;
            decoy[i] = z > z_threshold;
        }
        if !decoy[i] {
            trusted.push(x);
        }
    }
    OutlierLabels { decoy, scored, scores }
}

/// Precision and recall over scored rounds against ground-truth decoy labels.
pub fn detection_metrics(labels: &OutlierLabels, truth: &[bool]) -> DetectionMetrics {
    let (mut tp, mut flagged, mut decoys) = (0usize, 0usize, 0usize);
    for i in 0..labels.decoy.len().min(truth.len()) {
        if !labels.scored[i] {
            continue;
        }
        flagged += labels.decoy[i] as usize;
        decoys += truth[i] as usize;
        tp += (labels.decoy[i] && truth[i]) as usize;
    }
    DetectionMetrics {
        precision: (flagged > 0).then(|| tp as f64 / flagged as f64),
        recall: (decoys > 0).then(|| tp as f64 / decoys as f64),
        flagged,
        decoys,
    }
}

/// `C(rounds, k)`: candidate index sets an attacker must test to find the valid
/// Krylov iterates among `rounds` emissions.
pub fn krylov_verification_cost(k: u64, rounds: u64) -> Result<BigUint, AttackError> {
    if rounds < k {
        return Err(AttackError::InsufficientData(format!("{rounds} rounds for dimension {k}")));
    }
    let k = k.min(rounds - k);
    let mut acc = BigUint::from(1u8);
    for i in 0..k {
        acc = acc * BigUint::from(rounds - i) / BigUint::from(i + 1);
    }
    Ok(acc)
}

/// Ground-truth column space of another party's data, for scoring.
pub fn true_column_space(other: &DenseMatrix) -> Vec<RealVector> {
    column_space(other, SUBSPACE_REL_TOL)
}

pub const COLSPACE_TOL: f64 = 1e-6;
pub const NULLSPACE_TOL: f64 = 1e-6;
pub const KRYLOV_COSINE: f64 = 1.0 - 1e-3;
pub const OUTLIER_RECALL: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    Colspace,
    Nullspace,
    Krylov,
    Outlier,
}

impl AttackKind {
    pub const ALL: [AttackKind; 4] = [AttackKind::Colspace, AttackKind::Nullspace, AttackKind::Krylov, AttackKind::Outlier];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::Colspace => "colspace",
            AttackKind::Nullspace => "nullspace",
            AttackKind::Krylov => "krylov",
            AttackKind::Outlier => "outlier",
        }
    }
}

impl FromStr for AttackKind {
    type Err = AttackError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| AttackError::InsufficientData(format!("unknown attack {s:?}")))
    }
}

/// A finished run as seen by an evaluator who also holds the ground truth.
#[derive(Debug, Clone, Copy)]
pub struct Scenario<'a> {
    pub transcript: &'a Transcript,
    /// The attacking party.
    pub party: PartyId,
    pub keys: Option<&'a KeyPair>,
    pub codec: &'a FixedPointCodec,
    /// Unpadded data of every party, in party order.
    pub datasets: &'a [DenseMatrix],
    pub padding: Option<&'a [f64]>,
    pub mode: &'a str,
    /// Arbitrator's decoy log, one entry per round.
    pub decoy_truth: Option<&'a [bool]>,
}

impl Scenario<'_> {
    fn padded(&self, i: usize) -> Result<DenseMatrix, AttackError> {
        match self.padding.and_then(|p| p.get(i)) {
            Some(&r) => Ok(pad_matrix(&self.datasets[i], r)?),
            None => Ok(self.datasets[i].clone()),
        }
    }

    fn own_index(&self) -> Result<usize, AttackError> {
        let i = (self.party as usize).wrapping_sub(1);
        if i >= self.datasets.len() {
            return Err(AttackError::View(format!("no party {} among {}", self.party, self.datasets.len())));
        }
        Ok(i)
    }

    /// Raw data of every party except the attacker. Padding columns carry no
    /// information, so they are left out of the ground truth.
    fn others(&self) -> Result<DenseMatrix, AttackError> {
        let own = self.own_index()?;
        let blocks: Vec<DenseMatrix> =
            (0..self.datasets.len()).filter(|&i| i != own).map(|i| self.datasets[i].clone()).collect();
        Ok(DenseMatrix::hconcat(&blocks)?)
    }
}

/// Runs one attack from the scenario's party view and scores it against the truth.
pub fn evaluate(kind: AttackKind, sc: &Scenario<'_>) -> Result<AttackReport, AttackError> {
    let view = PartyView::from_transcript(sc.transcript, sc.party, sc.keys, sc.codec)?;
    let name = kind.as_str();
    match kind {
        AttackKind::Colspace => {
            let truth = true_column_space(&sc.others()?);
            let estimate = attack_colspace(&view, truth.len())?;
            let angle = max_principal_angle(&estimate, &truth)?;
            Ok(AttackReport::at_most(name, sc.mode, "max_principal_angle", angle, COLSPACE_TOL))
        }
        AttackKind::Nullspace => {
            let own = sc.padded(sc.own_index()?)?;
            match attack_nullspace(&view, &own)? {
                NullspaceOutcome::Void => Ok(AttackReport::at_least(name, sc.mode, "null_space_dim", 0.0, 1.0)),
                NullspaceOutcome::Leak { null_basis, span, .. } => {
                    let truth = projected_column_space(&null_basis, &sc.others()?);
                    let angle = max_principal_angle(&span, &truth)?;
                    Ok(AttackReport::at_most(name, sc.mode, "max_principal_angle", angle, NULLSPACE_TOL))
                }
            }
        }
        AttackKind::Krylov => {
            let last = view.received.last().ok_or_else(|| AttackError::InsufficientData("no rounds observed".into()))?;
            let estimate = attack_krylov(&view.received, last)?;
            let combined = DenseMatrix::hconcat(sc.datasets)?;
            let pairs = jacobi_eigen_oracle(&combined.outer_gram())?;
            let second = pairs.get(1).ok_or_else(|| AttackError::InsufficientData("one-dimensional data".into()))?;
            let cosine = estimate.abs_cosine(&second.vector);
            Ok(AttackReport::at_least(name, sc.mode, "second_eigenvector_cosine", cosine, KRYLOV_COSINE))
        }
        AttackKind::Outlier => {
            let truth = sc.decoy_truth.ok_or_else(|| AttackError::InsufficientData("no decoy log to score against".into()))?;
            let labels = attack_outlier(&view.received, DEFAULT_OUTLIER_WINDOW, DEFAULT_OUTLIER_Z);
            let metrics = detection_metrics(&labels, truth);
            let recall = metrics.recall.unwrap_or(f64::NAN);
            Ok(AttackReport::at_least(name, sc.mode, "decoy_recall", recall, OUTLIER_RECALL))
        }
    }
}
