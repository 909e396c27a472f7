//! Wire messages, their binary framing, the in-process star bus and the transcript.
//!
//! Frame layout (all integers big-endian):
//!
//! ```text
//! magic "EVP1" | u8 msg_type | u32 session | u32 round | u16 sender | u8 payload_kind | u32 count | elements
//! ```
//!
//! A big-integer element is `u32 length` followed by the magnitude with no leading zero
//! byte (zero is the empty string); a real element is an IEEE-754 binary64.

use std::collections::VecDeque;
use std::ops::RangeInclusive;
use std::sync::Mutex;

use num_bigint::BigUint;
use thiserror::Error;

pub const FRAME_MAGIC: [u8; 4] = *b"EVP1";
pub const TRANSCRIPT_MAGIC: [u8; 4] = *b"EVTR";
pub const TRANSCRIPT_VERSION: u32 = 1;
/// Bytes before the first payload element.
pub const HEADER_LEN: usize = 20;

pub type PartyId = u16;
pub const ARBITRATOR: PartyId = 0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("parse error at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },
    #[error("invalid message: {0}")]
    Domain(String),
    #[error("star topology violated: {from} -> {to}")]
    Topology { from: PartyId, to: PartyId },
    #[error("unknown endpoint {0}")]
    UnknownEndpoint(PartyId),
}

fn parse_err(offset: usize, reason: impl Into<String>) -> TransportError {
    TransportError::Parse { offset, reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    ShareVec = 1,
    AggVec = 2,
    ShareNorm = 3,
    AggNorm = 4,
    Converged = 5,
    FinalShare = 6,
}

impl MsgType {
    pub fn from_u8(b: u8) -> Option<Self> {
        Some(match b {
            1 => MsgType::ShareVec,
            2 => MsgType::AggVec,
            3 => MsgType::ShareNorm,
            4 => MsgType::AggNorm,
            5 => MsgType::Converged,
            6 => MsgType::FinalShare,
            _ => return None,
        })
    }

    /// Messages that make up one protocol iteration (as opposed to termination control).
    pub fn is_iteration(self) -> bool {
        matches!(self, MsgType::ShareVec | MsgType::AggVec | MsgType::ShareNorm | MsgType::AggNorm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Ciphertexts or encoded plaintexts.
    BigInts(Vec<BigUint>),
    Reals(Vec<f64>),
}

impl Payload {
    pub fn len(&self) -> usize {
        match self {
            Payload::BigInts(v) => v.len(),
            Payload::Reals(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn kind(&self) -> u8 {
        match self {
            Payload::BigInts(_) => 1,
            Payload::Reals(_) => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub msg_type: MsgType,
    pub session_id: u32,
    pub round: u32,
    pub sender: PartyId,
    pub payload: Payload,
}

impl Message {
    pub fn new(msg_type: MsgType, session_id: u32, round: u32, sender: PartyId, payload: Payload) -> Self {
        Message { msg_type, session_id, round, sender, payload }
    }

    /// Bit-exact frame.
    pub fn serialize(&self) -> Result<Vec<u8>, TransportError> {
        match (self.msg_type, self.payload.len()) {
            (MsgType::ShareNorm | MsgType::AggNorm, n) if n != 1 => {
                return Err(TransportError::Domain(format!("norm message carries {n} elements")))
            }
            (MsgType::Converged, n) if n != 0 => {
                return Err(TransportError::Domain(format!("CONVERGED carries {n} elements")))
            }
            _ => {}
        }
        let count = u32::try_from(self.payload.len())
            .map_err(|_| TransportError::Domain("payload too long".into()))?;
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.payload.len());
        out.extend_from_slice(&FRAME_MAGIC);
        out.push(self.msg_type as u8);
        out.extend_from_slice(&self.session_id.to_be_bytes());
        out.extend_from_slice(&self.round.to_be_bytes());
        out.extend_from_slice(&self.sender.to_be_bytes());
        out.push(self.payload.kind());
        out.extend_from_slice(&count.to_be_bytes());
        match &self.payload {
            Payload::BigInts(values) => {
                for v in values {
                    let bytes = if v.bits() == 0 { Vec::new() } else { v.to_bytes_be() };
                    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
                    out.extend_from_slice(&bytes);
                }
            }
            Payload::Reals(values) => {
                for v in values {
                    out.extend_from_slice(&v.to_bits().to_be_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Message, TransportError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != FRAME_MAGIC {
            return Err(parse_err(0, "bad magic"));
        }
        let type_at = r.pos;
        let msg_type = MsgType::from_u8(r.u8()?)
            .ok_or_else(|| parse_err(type_at, "unknown message type"))?;
        let session_id = r.u32()?;
        let round = r.u32()?;
        let sender = r.u16()?;
        let kind_at = r.pos;
        let kind = r.u8()?;
        let count = r.u32()? as usize;
        let payload = match kind {
            1 => {
                let mut values = Vec::with_capacity(count.min(1 << 16));
                for _ in 0..count {
                    let len = r.u32()? as usize;
                    let at = r.pos;
                    let body = r.take(len)?;
                    if body.first() == Some(&0) {
                        return Err(parse_err(at, "non-canonical leading zero"));
                    }
                    values.push(BigUint::from_bytes_be(body));
                }
                Payload::BigInts(values)
            }
            2 => {
                let mut values = Vec::with_capacity(count.min(1 << 16));
                for _ in 0..count {
                    values.push(f64::from_bits(r.u64()?));
                }
                Payload::Reals(values)
            }
            _ => return Err(parse_err(kind_at, "unknown payload kind")),
        };
        if r.pos != bytes.len() {
            return Err(parse_err(r.pos, "trailing bytes after frame"));
        }
        Ok(Message { msg_type, session_id, round, sender, payload })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TransportError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(parse_err(self.pos, format!("truncated: need {n} bytes")));
        };
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, TransportError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, TransportError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, TransportError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, TransportError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptRecord {
    pub seq: u32,
    pub sender: PartyId,
    pub receiver: PartyId,
    pub message: Message,
    pub byte_len: usize,
}

/// Ordered log of every transmission on a bus.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Transcript {
    records: Vec<TranscriptRecord>,
}

impl Transcript {
    pub fn records(&self) -> &[TranscriptRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn push(&mut self, sender: PartyId, receiver: PartyId, message: Message, byte_len: usize) {
        let seq = self.records.len() as u32;
        self.records.push(TranscriptRecord { seq, sender, receiver, message, byte_len });
    }

    /// Records a party sent or received.
    pub fn party_records(&self, party: PartyId) -> impl Iterator<Item = &TranscriptRecord> {
        self.records.iter().filter(move |r| r.sender == party || r.receiver == party)
    }

    /// Transcript file: `"EVTR" u32 version`, then per record
    /// `[u32 seq][u16 sender][u16 receiver][u32 byte length][frame]`.
    pub fn to_bytes(&self) -> Result<Vec<u8>, TransportError> {
        let mut out = Vec::new();
        out.extend_from_slice(&TRANSCRIPT_MAGIC);
        out.extend_from_slice(&TRANSCRIPT_VERSION.to_be_bytes());
        for rec in &self.records {
            let frame = rec.message.serialize()?;
            out.extend_from_slice(&rec.seq.to_be_bytes());
            out.extend_from_slice(&rec.sender.to_be_bytes());
            out.extend_from_slice(&rec.receiver.to_be_bytes());
            out.extend_from_slice(&(frame.len() as u32).to_be_bytes());
            out.extend_from_slice(&frame);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Transcript, TransportError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != TRANSCRIPT_MAGIC {
            return Err(parse_err(0, "bad transcript magic"));
        }
        let version = r.u32()?;
        if version != TRANSCRIPT_VERSION {
            return Err(parse_err(4, format!("unsupported transcript version {version}")));
        }
        let mut records: Vec<TranscriptRecord> = Vec::new();
        while r.pos < bytes.len() {
            let at = r.pos;
            let seq = r.u32()?;
            if records.last().is_some_and(|prev| prev.seq >= seq) {
                return Err(parse_err(at, "sequence numbers must increase"));
            }
            let sender = r.u16()?;
            let receiver = r.u16()?;
            let len = r.u32()? as usize;
            let frame_at = r.pos;
            let message = Message::deserialize(r.take(len)?).map_err(|e| match e {
                TransportError::Parse { offset, reason } => parse_err(frame_at + offset, reason),
                other => other,
            })?;
            records.push(TranscriptRecord { seq, sender, receiver, message, byte_len: len });
        }
        Ok(Transcript { records })
    }
}

/// Per-round payload element and byte counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundCost {
    pub round: u32,
    pub elements: usize,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Accounting {
    pub per_round: Vec<RoundCost>,
    pub total_elements: usize,
    pub total_bytes: usize,
}

/// Counts iteration traffic (vector and norm messages, both directions) per round.
///
/// A broadcast from the arbitrator is one transcript record per recipient, so a
/// two-party iteration counts `2k` up, `2k` down and `2 + 2` norm elements: `4k + 4`.
pub fn account(transcript: &Transcript, rounds: RangeInclusive<u32>) -> Accounting {
    let mut per_round: Vec<RoundCost> = Vec::new();
    for rec in transcript.records() {
        let round = rec.message.round;
        if !rounds.contains(&round) || !rec.message.msg_type.is_iteration() {
            continue;
        }
        let idx = match per_round.iter().position(|c| c.round == round) {
            Some(i) => i,
            None => {
                per_round.push(RoundCost { round, elements: 0, bytes: 0 });
                per_round.len() - 1
            }
        };
        per_round[idx].elements += rec.message.payload.len();
        per_round[idx].bytes += rec.byte_len;
    }
    per_round.sort_by_key(|c| c.round);
    let total_elements = per_round.iter().map(|c| c.elements).sum();
    let total_bytes = per_round.iter().map(|c| c.bytes).sum();
    Accounting { per_round, total_elements, total_bytes }
}

/// In-process star network: endpoint 0 is the arbitrator, `1..=parties` the data
/// parties. Delivery is FIFO per receiver; every send is appended to the transcript
/// under the same lock.
#[derive(Debug)]
pub struct Bus {
    inner: Mutex<BusInner>,
}

#[derive(Debug)]
struct BusInner {
    queues: Vec<VecDeque<Message>>,
    transcript: Transcript,
}

impl Bus {
    pub fn new(parties: u16) -> Self {
        Bus {
            inner: Mutex::new(BusInner {
                queues: vec![VecDeque::new(); parties as usize + 1],
                transcript: Transcript::default(),
            }),
        }
    }

    pub fn parties(&self) -> u16 {
        (self.lock().queues.len() - 1) as u16
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, BusInner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn send(&self, receiver: PartyId, msg: Message) -> Result<(), TransportError> {
        let sender = msg.sender;
        let mut inner = self.lock();
        let endpoints = inner.queues.len() as u16;
        if receiver >= endpoints {
            return Err(TransportError::UnknownEndpoint(receiver));
        }
        if sender >= endpoints {
            return Err(TransportError::UnknownEndpoint(sender));
        }
        if (sender == ARBITRATOR) == (receiver == ARBITRATOR) {
            return Err(TransportError::Topology { from: sender, to: receiver });
        }
        let byte_len = msg.serialize()?.len();
        inner.transcript.push(sender, receiver, msg.clone(), byte_len);
        inner.queues[receiver as usize].push_back(msg);
        Ok(())
    }

    pub fn poll(&self, receiver: PartyId) -> Result<Option<Message>, TransportError> {
        let mut inner = self.lock();
        let queue = inner
            .queues
            .get_mut(receiver as usize)
            .ok_or(TransportError::UnknownEndpoint(receiver))?;
        Ok(queue.pop_front())
    }

    pub fn transcript(&self) -> Transcript {
        self.lock().transcript.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reals(msg_type: MsgType, round: u32, sender: PartyId, v: Vec<f64>) -> Message {
        Message::new(msg_type, 7, round, sender, Payload::Reals(v))
    }

    #[test]
    fn converged_frame_is_header_only() {
        let msg = reals(MsgType::Converged, 3, 1, vec![]);
        let bytes = msg.serialize().unwrap();
        assert_eq!(bytes.len(), HEADER_LEN);
        assert_eq!(&bytes[..4], b"EVP1");
        assert_eq!(bytes[4], 5);
        assert_eq!(&bytes[16..20], &[0, 0, 0, 0]);
        assert_eq!(Message::deserialize(&bytes).unwrap(), msg);
    }

    #[test]
    fn zero_bigint_is_empty_magnitude() {
        let msg = Message::new(MsgType::ShareNorm, 1, 1, 2, Payload::BigInts(vec![BigUint::from(0u32)]));
        let bytes = msg.serialize().unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 4);
        assert_eq!(&bytes[HEADER_LEN..], &[0, 0, 0, 0]);
        assert_eq!(Message::deserialize(&bytes).unwrap(), msg);
    }

    #[test]
    fn exact_layout() {
        let msg = Message::new(
            MsgType::AggVec,
            0x0102_0304,
            9,
            0,
            Payload::BigInts(vec![BigUint::from(0x01ffu32)]),
        );
        let bytes = msg.serialize().unwrap();
        let expected: Vec<u8> = [
            &b"EVP1"[..],
            &[2],
            &[1, 2, 3, 4],
            &[0, 0, 0, 9],
            &[0, 0],
            &[1],
            &[0, 0, 0, 1],
            &[0, 0, 0, 2, 0x01, 0xff],
        ]
        .concat();
        assert_eq!(bytes, expected);
        let r = reals(MsgType::FinalShare, 1, 1, vec![1.0]).serialize().unwrap();
        assert_eq!(&r[HEADER_LEN..], &1.0f64.to_bits().to_be_bytes());
    }

    #[test]
    fn malformed_frames_are_rejected() {
        let good = reals(MsgType::ShareVec, 1, 1, vec![1.0, 2.0]).serialize().unwrap();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert_eq!(Message::deserialize(&bad), Err(parse_err(0, "bad magic")));
        let truncated = &good[..good.len() - 3];
        assert!(matches!(Message::deserialize(truncated), Err(TransportError::Parse { offset: 28, .. })));
        let mut padded = good.clone();
        padded.push(0);
        assert!(Message::deserialize(&padded).is_err());

        let mut non_canonical = Message::new(MsgType::ShareNorm, 1, 1, 1, Payload::BigInts(vec![BigUint::from(5u32)]))
            .serialize()
            .unwrap();
        non_canonical.truncate(HEADER_LEN);
        non_canonical.extend_from_slice(&[0, 0, 0, 2, 0, 5]);
        assert_eq!(
            Message::deserialize(&non_canonical),
            Err(parse_err(HEADER_LEN + 4, "non-canonical leading zero"))
        );
        let mut bad_type = good;
        bad_type[4] = 9;
        assert!(Message::deserialize(&bad_type).is_err());
    }

    #[test]
    fn payload_contract_is_checked() {
        assert!(reals(MsgType::ShareNorm, 1, 1, vec![1.0, 2.0]).serialize().is_err());
        assert!(reals(MsgType::Converged, 1, 1, vec![1.0]).serialize().is_err());
    }

    #[test]
    fn bus_fifo_and_topology() {
        let bus = Bus::new(2);
        let a = reals(MsgType::ShareVec, 1, 1, vec![1.0]);
        let b = reals(MsgType::ShareVec, 2, 1, vec![2.0]);
        bus.send(ARBITRATOR, a.clone()).unwrap();
        bus.send(ARBITRATOR, b.clone()).unwrap();
        assert_eq!(bus.poll(ARBITRATOR).unwrap(), Some(a));
        assert_eq!(bus.poll(ARBITRATOR).unwrap(), Some(b));
        assert_eq!(bus.poll(ARBITRATOR).unwrap(), None);

        let sideways = reals(MsgType::ShareVec, 1, 1, vec![1.0]);
        assert_eq!(bus.send(2, sideways), Err(TransportError::Topology { from: 1, to: 2 }));
        let loopback = reals(MsgType::AggVec, 1, 0, vec![1.0]);
        assert!(bus.send(ARBITRATOR, loopback).is_err());
        assert!(bus.send(5, reals(MsgType::AggVec, 1, 0, vec![])).is_err());
        assert_eq!(bus.transcript().len(), 2);
    }

    #[test]
    fn accounting_counts_iteration_traffic() {
        let k = 20;
        let bus = Bus::new(2);
        for p in 1..=2 {
            bus.send(ARBITRATOR, reals(MsgType::ShareVec, 1, p, vec![0.5; k])).unwrap();
        }
        for p in 1..=2 {
            bus.send(p, reals(MsgType::AggVec, 1, 0, vec![1.0; k])).unwrap();
        }
        for p in 1..=2 {
            bus.send(ARBITRATOR, reals(MsgType::ShareNorm, 1, p, vec![3.0])).unwrap();
        }
        for p in 1..=2 {
            bus.send(p, reals(MsgType::AggNorm, 1, 0, vec![6.0])).unwrap();
        }
        bus.send(ARBITRATOR, reals(MsgType::Converged, 1, 1, vec![])).unwrap();
        let acc = account(&bus.transcript(), 1..=1);
        assert_eq!(acc.per_round.len(), 1);
        assert_eq!(acc.per_round[0].elements, 4 * k + 4);
        assert_eq!(acc.total_bytes, 4 * (HEADER_LEN + 8 * k) + 4 * (HEADER_LEN + 8));
        assert_eq!(account(&bus.transcript(), 5..=9), Accounting::default());
    }

    #[test]
    fn transcript_file_round_trip() {
        let bus = Bus::new(1);
        bus.send(ARBITRATOR, reals(MsgType::ShareVec, 1, 1, vec![1.0, -2.0])).unwrap();
        bus.send(1, Message::new(MsgType::AggVec, 7, 1, 0, Payload::BigInts(vec![BigUint::from(77u32)])))
            .unwrap();
        let t = bus.transcript();
        let bytes = t.to_bytes().unwrap();
        assert_eq!(&bytes[..8], &[b'E', b'V', b'T', b'R', 0, 0, 0, 1]);
        assert_eq!(Transcript::from_bytes(&bytes).unwrap(), t);
        assert!(Transcript::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
