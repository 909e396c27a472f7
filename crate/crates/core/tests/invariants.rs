use std::sync::OnceLock;

use seigen::adversary::{evaluate, AttackKind, Scenario};
use seigen::linalg::{correlation_matrix, matvec, pad_matrix, power_iteration_reference, DenseMatrix, RealVector};
use seigen::paillier::{keygen, KeyPair};
use seigen::protocol::{plan_codec, run_protocol, EmissionKind, ProtocolConfig, ProtocolResult};
use seigen::rng::{stream_rng, Stream};
use seigen::synth::{gap_spectrum, generate, matrix_with_spectrum, split_columns};
use seigen::transport::{Bus, MsgType, Payload, ARBITRATOR};

fn key() -> &'static KeyPair {
    static KEY: OnceLock<KeyPair> = OnceLock::new();
    KEY.get_or_init(|| keygen(512, &mut stream_rng(41, Stream::KeyGen)).unwrap())
}

fn run(parts: &[DenseMatrix], config: &ProtocolConfig) -> ProtocolResult {
    run_protocol(parts, config, config.encryption.then(key), &Bus::new(parts.len() as u16)).unwrap()
}

fn concat_share(result: &ProtocolResult, round: usize) -> RealVector {
    RealVector::concat(&result.trajectories.iter().map(|t| t[round].clone()).collect::<Vec<_>>())
}

#[test]
fn plaintext_run_is_textbook_power_iteration() {
    let data = generate(10, &[6, 5], 0.5, 1).unwrap();
    let result = run(&data.parts, &ProtocolConfig::basic());
    let s = correlation_matrix(&data.parts).unwrap();
    let mut x = concat_share(&result, 0);
    for round in 1..result.rounds_total as usize {
        x = matvec(&s, &x).unwrap().normalize().unwrap();
        let share = concat_share(&result, round);
        assert!(share.max_abs_diff(&x) <= 1e-12, "round {round}: {:e}", share.max_abs_diff(&x));
    }
}

#[test]
fn mode_ladder_deviations() {
    let k = 12;
    let data = generate(k, &[7, 7], 0.5, 2).unwrap();
    let basic = run(&data.parts, &ProtocolConfig::basic());
    let enc = run(&data.parts, &ProtocolConfig { encryption: true, ..ProtocolConfig::basic() });
    let scaled = run(&data.parts, &ProtocolConfig { encryption: true, scaling: true, ..ProtocolConfig::basic() });
    let quantum = 2f64.powi(-32);
    let rounds = basic.rounds_total.min(enc.rounds_total).min(scaled.rounds_total) as usize;
    for r in 0..rounds {
        let e = concat_share(&enc, r);
        assert!(concat_share(&basic, r).max_abs_diff(&e) <= k as f64 * quantum, "round {r}");
        assert!(concat_share(&scaled, r).max_abs_diff(&e) <= 2.0 * k as f64 * quantum, "round {r}");
    }

    let obf = run(&data.parts, &ProtocolConfig { encryption: true, scaling: true, obfuscation_p: 0.6, ..ProtocolConfig::basic() });
    let mut checked = 0;
    for (t, emission) in obf.emissions.iter().enumerate() {
        let candidate = match emission.kind {
            EmissionKind::Fresh { candidate, .. } | EmissionKind::Released { candidate, .. } => candidate as usize,
            EmissionKind::Decoy => continue,
        };
        if candidate > scaled.rounds_total as usize {
            break;
        }
        assert_eq!(concat_share(&obf, t), concat_share(&scaled, candidate - 1), "emission round {}", t + 1);
        checked += 1;
    }
    assert!(checked >= 10);
    assert!(obf.rounds_total > obf.rounds_valid);
}

#[test]
fn arbitrator_handles_only_ciphertexts() {
    let data = generate(8, &[4, 4], 0.5, 3).unwrap();
    let result = run(&data.parts, &ProtocolConfig::hardened(2, 1.0, 0.7));
    let iteration = result.transcript.records().iter().filter(|r| r.message.msg_type.is_iteration());
    let mut seen = 0;
    for rec in iteration {
        assert!(matches!(rec.message.payload, Payload::BigInts(_)), "plaintext {:?}", rec.message.msg_type);
        seen += 1;
    }
    assert!(seen > 0);
    // only the final shares travel in the clear, and only towards the arbitrator
    for rec in result.transcript.records().iter().filter(|r| matches!(r.message.payload, Payload::Reals(ref v) if !v.is_empty())) {
        assert_eq!(rec.message.msg_type, MsgType::FinalShare);
        assert_eq!(rec.receiver, ARBITRATOR);
    }
}

#[test]
fn power_iteration_slows_as_the_gap_closes() {
    let mut rng = stream_rng(4, Stream::Data);
    let x0 = RealVector::new(vec![1.0; 8]);
    let rounds: Vec<usize> = [0.1, 0.5, 0.9]
        .iter()
        .map(|&gap| {
            let m = matrix_with_spectrum(8, 8, &gap_spectrum(8, gap, 10.0).unwrap(), &mut rng).unwrap();
            power_iteration_reference(&m.gram(), &x0, 1e-10, 10_000).unwrap().rounds
        })
        .collect();
    assert!(rounds[0] < rounds[1] && rounds[1] < rounds[2], "{rounds:?}");
}

fn attack_value(parts: &[DenseMatrix], config: &ProtocolConfig, kind: AttackKind) -> bool {
    let keys = config.encryption.then(key);
    let result = run(parts, config);
    let padded: Vec<DenseMatrix> = match &config.padding {
        Some(p) => parts.iter().zip(p).map(|(m, &r)| pad_matrix(m, r).unwrap()).collect(),
        None => parts.to_vec(),
    };
    let plan = plan_codec(&padded, config, keys.map(|k| &k.public)).unwrap();
    let mode = config.mode_label();
    let sc = Scenario {
        transcript: &result.transcript,
        party: 1,
        keys,
        codec: &plan.codec,
        datasets: parts,
        padding: config.padding.as_deref(),
        mode: &mode,
        decoy_truth: None,
    };
    evaluate(kind, &sc).unwrap().success
}

#[test]
fn hardening_is_monotone_over_seeds() {
    let enc = ProtocolConfig { encryption: true, ..ProtocolConfig::basic() };
    let scaled = ProtocolConfig { scaling: true, ..enc.clone() };
    let padded = ProtocolConfig { padding: Some(vec![1.5, 1.5]), ..ProtocolConfig::basic() };
    let mut wins = [0usize; 7];
    for seed in 0..20 {
        let mut rng = stream_rng(200 + seed, Stream::Data);
        let a = matrix_with_spectrum(8, 3, &[40.0, 20.0, 10.0], &mut rng).unwrap();
        let b = matrix_with_spectrum(8, 4, &[50.0, 15.0, 4.0], &mut rng).unwrap();
        let parts = [a, b];
        wins[0] += attack_value(&parts, &ProtocolConfig::basic(), AttackKind::Colspace) as usize;
        wins[1] += attack_value(&parts, &enc, AttackKind::Colspace) as usize;
        wins[2] += attack_value(&parts, &scaled, AttackKind::Colspace) as usize;
        wins[3] += attack_value(&parts, &ProtocolConfig::basic(), AttackKind::Nullspace) as usize;
        wins[4] += attack_value(&parts, &padded, AttackKind::Nullspace) as usize;

        let m = matrix_with_spectrum(10, 12, &[100.0, 60.0, 6.0, 1.0], &mut rng).unwrap();
        let split = split_columns(&m, &[6, 6]).unwrap();
        let obf = ProtocolConfig { obfuscation_p: 0.5, seed, ..ProtocolConfig::basic() };
        wins[5] += attack_value(&split, &ProtocolConfig { seed, ..ProtocolConfig::basic() }, AttackKind::Krylov) as usize;
        wins[6] += attack_value(&split, &obf, AttackKind::Krylov) as usize;
    }
    assert_eq!(wins, [20, 20, 0, 20, 0, 20, 0], "colspace basic/enc/scaled, nullspace plain/padded, krylov plain/obf");
}
