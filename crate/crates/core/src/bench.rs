//! Per-round cost measurement of protocol runs.

use std::fmt;

use crate::linalg::DenseMatrix;
use crate::paillier::KeyPair;
use crate::protocol::{run_protocol, OpCounters, ProtocolConfig, ProtocolError};
use crate::transport::{account, Bus};

pub const CSV_HEADER: &str = "mode,k,N,rounds,enc_ops,dec_ops,elements,bytes,ms_party,ms_arbitrator";

/// One benchmarked run. Operation counts are per party per round, traffic and
/// times per round.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub mode: String,
    pub k: usize,
    pub parties: usize,
    pub rounds: u32,
    pub enc_ops: f64,
    pub dec_ops: f64,
    pub elements: f64,
    pub bytes: f64,
    pub ms_party: f64,
    pub ms_arbitrator: f64,
}

impl BenchRow {
    /// The row without its wall-clock columns.
    pub fn counts(&self) -> (String, usize, usize, u32, f64, f64, f64, f64) {
        (self.mode.clone(), self.k, self.parties, self.rounds, self.enc_ops, self.dec_ops, self.elements, self.bytes)
    }
}

impl fmt::Display for BenchRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{},{},{},{},{:.3},{:.3}",
            self.mode,
            self.k,
            self.parties,
            self.rounds,
            self.enc_ops,
            self.dec_ops,
            self.elements,
            self.bytes,
            self.ms_party,
            self.ms_arbitrator
        )
    }
}

/// Runs the protocol once and reduces its counters to a [`BenchRow`].
pub fn bench_run(
    datasets: &[DenseMatrix],
    config: &ProtocolConfig,
    keys: Option<&KeyPair>,
) -> Result<BenchRow, ProtocolError> {
    let n = datasets.len();
    let result = run_protocol(datasets, config, keys, &Bus::new(n as u16))?;
    let rounds = result.rounds_total;
    let per_round = f64::from(rounds.max(1));
    let per_party_round = |f: fn(&OpCounters) -> u64| {
        result.counters.iter().map(f).max().unwrap_or(0) as f64 / per_round
    };
    let traffic = account(&result.transcript, 1..=rounds);
    Ok(BenchRow {
        mode: config.mode_label(),
        k: datasets.first().map_or(0, DenseMatrix::rows),
        parties: n,
        rounds,
        enc_ops: per_party_round(|c| c.encryptions),
        dec_ops: per_party_round(|c| c.decryptions),
        elements: traffic.total_elements as f64 / per_round,
        bytes: traffic.total_bytes as f64 / per_round,
        ms_party: result.timing.party.as_secs_f64() * 1e3 / per_round / n.max(1) as f64,
        ms_arbitrator: result.timing.arbitrator.as_secs_f64() * 1e3 / per_round,
    })
}
