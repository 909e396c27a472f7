//! Acceptance suite. Runs every criterion and prints one PASS/FAIL line each.

use std::panic;
use std::sync::OnceLock;
use std::thread;
use std::time::Instant;

use num_bigint::BigUint;
use rand::{Rng, RngCore};

use seigen::adversary::{
    attack_outlier, detection_metrics, evaluate, AttackKind, Scenario, DEFAULT_OUTLIER_WINDOW, DEFAULT_OUTLIER_Z,
};
use seigen::bench::bench_run;
use seigen::linalg::{
    correlation_blocks, jacobi_eigen_oracle, map_eigenvector_transpose, matvec, matvec_transpose, pad_matrix,
    DenseMatrix, RealVector,
};
use seigen::paillier::{add_encrypted, decrypt, encrypt, keygen, random_below, scalar_mul, KeyPair};
use seigen::protocol::{
    plan_codec, run_protocol, run_with_coins, CoinSource, EmissionKind, ObfuscationStyle, ProtocolConfig,
    ProtocolResult,
};
use seigen::rng::{stream_rng, Stream};
use seigen::synth::{generate, matrix_with_spectrum, split_columns};
use seigen::transport::{account, Bus, MsgType, Payload};

type Outcome = Result<String, String>;

fn key() -> &'static KeyPair {
    static KEY: OnceLock<KeyPair> = OnceLock::new();
    KEY.get_or_init(|| keygen(512, &mut stream_rng(2024, Stream::KeyGen)).expect("keygen"))
}

fn run(parts: &[DenseMatrix], config: &ProtocolConfig) -> Result<ProtocolResult, String> {
    let keys = config.encryption.then(key);
    run_protocol(parts, config, keys, &Bus::new(parts.len() as u16)).map_err(|e| e.to_string())
}

fn top_eigenvector(m: &DenseMatrix) -> RealVector {
    jacobi_eigen_oracle(&m.gram()).expect("oracle")[0].vector.clone()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn correctness_ladder() -> Outcome {
    let data = generate(20, &[15, 15], 0.5, 11).map_err(|e| e.to_string())?;
    let top = top_eigenvector(&data.combined);
    let enc = ProtocolConfig { encryption: true, ..ProtocolConfig::basic() };
    let scale = ProtocolConfig { scaling: true, ..enc.clone() };
    let pad = ProtocolConfig { padding: Some(vec![1.0, 2.5]), ..scale.clone() };
    let obf = ProtocolConfig {
        obfuscation_p: 0.8,
        obfuscation_style: ObfuscationStyle::PerturbedReplay,
        ..pad.clone()
    };
    let mut worst = 1.0f64;
    for config in [ProtocolConfig::basic(), enc, scale, pad, obf] {
        let result = run(&data.parts, &config)?;
        let cos = result.eigenvector.abs_cosine(&top);
        ensure(cos >= 1.0 - 1e-6, || format!("{}: cosine {cos}", config.mode_label()))?;
        worst = worst.min(cos);
    }
    Ok(format!("worst cosine {worst:.12} over 5 modes"))
}

fn block_identity() -> Outcome {
    let mut rng = stream_rng(12, Stream::Data);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let k = rng.random_range(1..12);
        let (na, nb) = (rng.random_range(1..8), rng.random_range(1..8));
        let a = random_matrix(&mut rng, k, na);
        let b = random_matrix(&mut rng, k, nb);
        let x = RealVector::new((0..na + nb).map(|_| rng.random_range(-1.0..1.0)).collect());
        let m = DenseMatrix::hconcat(&[a.clone(), b.clone()]).unwrap();
        let direct = matvec(&correlation_blocks(&a, &b).unwrap(), &x).unwrap();
        let (alpha, beta) = x.split_at(na);
        let u = matvec(&a, alpha).unwrap().add(&matvec(&b, beta).unwrap());
        let split = RealVector::concat(&[matvec_transpose(&a, &u).unwrap(), matvec_transpose(&b, &u).unwrap()]);
        let bound = 1e-10 * m.frobenius_norm().powi(2) * x.norm();
        let err = direct.sub(&split).norm();
        ensure(err <= bound, || format!("error {err:e} above {bound:e}"))?;
        worst = worst.max(err / bound);
    }
    Ok(format!("1000 cases, worst error/bound {worst:.3e}"))
}

fn scaling_cancellation() -> Outcome {
    let data = generate(20, &[15, 15], 0.5, 13).map_err(|e| e.to_string())?;
    let plain = ProtocolConfig { encryption: true, seed: 5, ..ProtocolConfig::basic() };
    let scaled = ProtocolConfig { scaling: true, ..plain.clone() };
    let a = run(&data.parts, &plain)?;
    let b = run(&data.parts, &scaled)?;
    let tol = 2.0 * 20.0 * 2f64.powi(-(plain.fraction_bits as i32));
    let rounds = a.rounds_total.min(b.rounds_total) as usize;
    let mut worst = 0.0f64;
    for party in 0..2 {
        for r in 0..rounds {
            let d = a.trajectories[party][r].max_abs_diff(&b.trajectories[party][r]);
            ensure(d <= tol, || format!("party {} round {}: {d:e} > {tol:e}", party + 1, r + 1))?;
            worst = worst.max(d);
        }
    }
    ensure(a.rounds_total == b.rounds_total, || format!("rounds {} vs {}", a.rounds_total, b.rounds_total))?;
    Ok(format!("{rounds} rounds, worst deviation {worst:.3e} (bound {tol:.3e})"))
}

fn padding_shift() -> Outcome {
    let mut rng = stream_rng(14, Stream::Data);
    let (mut checked, mut zero_pairs_violating) = (0usize, 0usize);
    for _ in 0..100 {
        let (s, t) = (rng.random_range(2..7), rng.random_range(1..7));
        let m = random_matrix(&mut rng, s, t);
        let mtm = m.gram();
        let scale = m.frobenius_norm().powi(2);
        for r in [1.0, 2.5] {
            let padded = pad_matrix(&m, r).unwrap();
            for pair in jacobi_eigen_oracle(&padded.gram()).unwrap() {
                let v = RealVector::new(pair.vector[..t].to_vec());
                if v.norm() < 1e-6 || (pair.value - r * r).abs() < 1e-9 * (1.0 + scale) {
                    continue;
                }
                let residual = matvec(&mtm, &v).unwrap().sub(&v.scaled(pair.value - r * r)).norm();
                if pair.value.abs() < 1e-9 * (1.0 + scale) {
                    // λ = 0 pairs span the null space of [M | rI]; the identity does not hold there
                    zero_pairs_violating += (residual > 1e-8 * scale) as usize;
                    continue;
                }
                ensure(residual <= 1e-8 * scale, || format!("λ={} r={r}: residual {residual:e}", pair.value))?;
                checked += 1;
            }
        }
    }
    ensure(zero_pairs_violating > 0, || "expected λ = 0 eigenpairs with nonzero top block".into())?;
    Ok(format!("{checked} eigenpairs with λ ∉ {{0, r²}} satisfy the identity; {zero_pairs_violating} λ = 0 pairs excluded"))
}

fn transpose_mapping() -> Outcome {
    let mut rng = stream_rng(15, Stream::Data);
    let mut worst = 1.0f64;
    for _ in 0..100 {
        let (k, n) = (rng.random_range(2..10), rng.random_range(2..10));
        let m = random_matrix(&mut rng, k, n);
        let top = jacobi_eigen_oracle(&m.gram()).unwrap()[0].clone();
        let mapped = map_eigenvector_transpose(&m, &top).map_err(|e| e.to_string())?;
        let direct = &jacobi_eigen_oracle(&m.outer_gram()).unwrap()[0];
        let cos = mapped.vector.abs_cosine(&direct.vector);
        ensure(cos >= 1.0 - 1e-9, || format!("cosine {cos}"))?;
        worst = worst.min(cos);
    }
    Ok(format!("100 matrices, worst cosine {worst:.15}"))
}

fn cost_accounting() -> Outcome {
    let mut lines = Vec::new();
    for k in [10usize, 20, 50] {
        let data = generate(k, &[6, 6], 0.5, 16).map_err(|e| e.to_string())?;
        let config = ProtocolConfig { encryption: true, scaling: true, ..ProtocolConfig::basic() };
        let row = bench_run(&data.parts, &config, Some(key())).map_err(|e| e.to_string())?;
        let ops = (k + 1) as f64;
        ensure(row.enc_ops == ops && row.dec_ops == ops, || format!("k={k}: {} enc, {} dec", row.enc_ops, row.dec_ops))?;
        let elements = (4 * k + 4) as f64;
        ensure(row.elements == elements, || format!("k={k}: {} elements per round", row.elements))?;
        // every round individually, not just on average
        let result = run(&data.parts, &config)?;
        let traffic = account(&result.transcript, 1..=result.rounds_total);
        ensure(traffic.per_round.iter().all(|c| c.elements == 4 * k + 4), || format!("k={k}: uneven round"))?;
        lines.push(format!("k={k}: {} elements, {} enc/dec", row.elements, row.enc_ops));
    }
    Ok(lines.join("; "))
}

fn obfuscation_overhead() -> Outcome {
    let data = generate(20, &[15, 15], 0.5, 17).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    for p in [0.5, 0.8] {
        let (mut total, mut valid) = (0u64, 0u64);
        for seed in 0..50 {
            let config = ProtocolConfig { obfuscation_p: p, seed, ..ProtocolConfig::basic() };
            let result = run(&data.parts, &config)?;
            total += u64::from(result.rounds_total);
            valid += u64::from(result.rounds_valid);
        }
        let ratio = total as f64 / valid as f64;
        let target = 1.0 / p;
        ensure((ratio - target).abs() <= 0.2 * target, || format!("p={p}: ratio {ratio:.3} vs {target:.3}"))?;
        lines.push(format!("p={p}: ratio {ratio:.3} (1/p = {target:.3})"));
    }
    Ok(lines.join("; "))
}

fn fig2_scheduler() -> Outcome {
    use EmissionKind::*;
    let data = generate(8, &[5, 5], 0.5, 18).map_err(|e| e.to_string())?;
    let config = ProtocolConfig { obfuscation_p: 0.5, noise_sigma: 0.0, ..ProtocolConfig::basic() };
    let coins = [true, true, false, true, false, false, true];
    let obf = run_with_coins(&data.parts, &config, None, &Bus::new(2), Some(CoinSource::scripted(coins)))
        .map_err(|e| e.to_string())?;
    let kinds: Vec<EmissionKind> = obf.emissions.iter().take(7).map(|e| e.kind).collect();
    let expected = vec![
        Fresh { candidate: 1, scale: 1 },
        Fresh { candidate: 2, scale: 1 },
        Decoy,
        Released { candidate: 3, scale: 1, computed_round: 3 },
        Decoy,
        Decoy,
        Released { candidate: 4, scale: 1, computed_round: 5 },
    ];
    ensure(kinds == expected, || format!("emissions {kinds:?}"))?;

    // noiseless replays repeat the last released vector
    let received: Vec<&Payload> = obf
        .transcript
        .records()
        .iter()
        .filter(|r| r.message.msg_type == MsgType::AggVec && r.receiver == 1)
        .map(|r| &r.message.payload)
        .collect();
    for (decoy, source) in [(3, 2), (5, 4), (6, 4)] {
        ensure(received[decoy - 1] == received[source - 1], || format!("round {decoy} is not a replay of {source}"))?;
    }
    // inbound shares of deferred rounds are ignored: valid rounds follow the plain trajectory
    let plain = run(&data.parts, &ProtocolConfig::basic())?;
    for (obf_round, plain_round) in [(1, 1), (2, 2), (4, 3), (7, 4)] {
        for party in 0..2 {
            ensure(obf.trajectories[party][obf_round - 1] == plain.trajectories[party][plain_round - 1], || {
                format!("round {obf_round} differs from plain round {plain_round}")
            })?;
        }
    }
    Ok("V,V,R,V,R,R,V -> valid, valid, decoy, release(3), decoy, decoy, release(5)".into())
}

fn attack_regression() -> Outcome {
    let mut lines = Vec::new();

    let mut rng = stream_rng(19, Stream::Data);
    let a = matrix_with_spectrum(10, 4, &[50.0, 30.0, 20.0, 10.0], &mut rng).unwrap();
    let b = matrix_with_spectrum(10, 5, &[60.0, 25.0, 5.0], &mut rng).unwrap();
    let parts = vec![a, b];
    let scenario_report = |config: &ProtocolConfig, kind: AttackKind| -> Result<f64, String> {
        let keys = config.encryption.then(key);
        let result = run(&parts, config)?;
        let padded: Vec<DenseMatrix> = match &config.padding {
            Some(p) => parts.iter().zip(p).map(|(m, &r)| pad_matrix(m, r).unwrap()).collect(),
            None => parts.clone(),
        };
        let plan = plan_codec(&padded, config, keys.map(|k| &k.public)).map_err(|e| e.to_string())?;
        let mode = config.mode_label();
        let sc = Scenario {
            transcript: &result.transcript,
            party: 1,
            keys,
            codec: &plan.codec,
            datasets: &parts,
            padding: config.padding.as_deref(),
            mode: &mode,
            decoy_truth: None,
        };
        let report = evaluate(kind, &sc).map_err(|e| e.to_string())?;
        println!("    {report}");
        Ok(report.value)
    };
    let basic = ProtocolConfig::basic();
    let scaled = ProtocolConfig { encryption: true, scaling: true, ..ProtocolConfig::basic() };
    let padded = ProtocolConfig { padding: Some(vec![2.0, 2.0]), ..ProtocolConfig::basic() };

    let angle = scenario_report(&basic, AttackKind::Colspace)?;
    ensure(angle <= 1e-6, || format!("colspace basic angle {angle:e}"))?;
    let angle_scaled = scenario_report(&scaled, AttackKind::Colspace)?;
    ensure(angle_scaled >= 0.1, || format!("colspace scaled angle {angle_scaled:e}"))?;
    lines.push(format!("colspace {angle:.1e}/{angle_scaled:.3}"));

    let null = scenario_report(&basic, AttackKind::Nullspace)?;
    ensure(null <= 1e-6, || format!("nullspace angle {null:e}"))?;
    let void = scenario_report(&padded, AttackKind::Nullspace)?;
    ensure(void == 0.0, || "padded nullspace attack not void".into())?;
    lines.push(format!("nullspace {null:.1e}/void"));

    let mut worst_plain = 1.0f64;
    let mut worst_obf = 0.0f64;
    for seed in 0..10 {
        let mut rng = stream_rng(100 + seed, Stream::Data);
        let m = matrix_with_spectrum(12, 16, &[100.0, 60.0, 6.0, 1.0], &mut rng).unwrap();
        let split = split_columns(&m, &[8, 8]).unwrap();
        let krylov = |config: &ProtocolConfig| -> Result<f64, String> {
            let result = run(&split, config)?;
            let plan = plan_codec(&split, config, None).map_err(|e| e.to_string())?;
            let mode = config.mode_label();
            let sc = Scenario {
                transcript: &result.transcript,
                party: 1,
                keys: None,
                codec: &plan.codec,
                datasets: &split,
                padding: None,
                mode: &mode,
                decoy_truth: None,
            };
            Ok(evaluate(AttackKind::Krylov, &sc).map_err(|e| e.to_string())?.value)
        };
        worst_plain = worst_plain.min(krylov(&ProtocolConfig { seed, ..ProtocolConfig::basic() })?);
        worst_obf = worst_obf.max(krylov(&ProtocolConfig { seed, obfuscation_p: 0.5, ..ProtocolConfig::basic() })?);
    }
    ensure(worst_plain >= 1.0 - 1e-3, || format!("krylov without obfuscation {worst_plain}"))?;
    ensure(worst_obf <= 0.9, || format!("krylov with obfuscation {worst_obf}"))?;
    lines.push(format!("krylov {worst_plain:.6}/{worst_obf:.3} over 10 seeds"));

    let recall = |style: ObfuscationStyle, sigma: f64| -> Result<f64, String> {
        let (mut hits, mut decoys) = (0.0, 0usize);
        for seed in 0..20 {
            let data = generate(20, &[15, 15], 0.5, seed).map_err(|e| e.to_string())?;
            let config = ProtocolConfig {
                obfuscation_p: 0.8,
                obfuscation_style: style,
                noise_sigma: sigma,
                seed,
                ..ProtocolConfig::basic()
            };
            let result = run(&data.parts, &config)?;
            let received: Vec<RealVector> = result
                .transcript
                .records()
                .iter()
                .filter(|r| r.message.msg_type == MsgType::AggVec && r.receiver == 1)
                .map(|r| match &r.message.payload {
                    Payload::Reals(v) => RealVector::new(v.clone()),
                    Payload::BigInts(_) => unreachable!("plaintext run"),
                })
                .collect();
            let truth: Vec<bool> = result.emissions.iter().map(|e| !e.kind.is_valid()).collect();
            let metrics =
                detection_metrics(&attack_outlier(&received, DEFAULT_OUTLIER_WINDOW, DEFAULT_OUTLIER_Z), &truth);
            if let Some(r) = metrics.recall {
                hits += r * metrics.decoys as f64;
            }
            decoys += metrics.decoys;
        }
        Ok(hits / decoys.max(1) as f64)
    };
    let fresh = recall(ObfuscationStyle::FreshRandom, 1.0)?;
    ensure(fresh >= 0.9, || format!("outlier recall on fresh decoys {fresh:.3}"))?;
    let replay = recall(ObfuscationStyle::PerturbedReplay, 1e-6)?;
    ensure(replay <= 0.5, || format!("outlier recall on perturbed replays {replay:.3}"))?;
    lines.push(format!("outlier recall {fresh:.3}/{replay:.3}"));
    Ok(lines.join("; "))
}

fn homomorphic_sweep() -> Outcome {
    let keys = key();
    let pk = &keys.public;
    let mut rng = stream_rng(20, Stream::PartyCrypto(1));
    for _ in 0..1000 {
        let (x, y) = (random_below(&mut rng, pk.n()), random_below(&mut rng, pk.n()));
        let cx = encrypt(pk, &x, &mut rng).map_err(|e| e.to_string())?;
        let cy = encrypt(pk, &y, &mut rng).map_err(|e| e.to_string())?;
        let sum = decrypt(&keys.private, pk, &add_encrypted(pk, &cx, &cy).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        ensure(sum == (&x + &y) % pk.n(), || format!("add failed for {x} + {y}"))?;
        let s = BigUint::from(rng.next_u64());
        let prod = decrypt(&keys.private, pk, &scalar_mul(pk, &cx, &s).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        ensure(prod == (&x * &s) % pk.n(), || format!("scalar_mul failed for {s}·{x}"))?;
    }
    Ok(format!("1000 add + 1000 scalar_mul cases at {} bits", pk.bits()))
}

fn multi_party() -> Outcome {
    let data = generate(20, &[8, 8, 8, 8], 0.5, 21).map_err(|e| e.to_string())?;
    let top = top_eigenvector(&data.combined);
    let mut lines = Vec::new();
    for config in [ProtocolConfig::basic(), ProtocolConfig::hardened(4, 1.5, 0.8)] {
        let result = run(&data.parts, &config)?;
        let cos = result.eigenvector.abs_cosine(&top);
        ensure(cos >= 1.0 - 1e-6, || format!("{}: cosine {cos}", config.mode_label()))?;
        let converged: Vec<u32> = result
            .transcript
            .records()
            .iter()
            .filter(|r| r.message.msg_type == MsgType::Converged && r.sender != 0)
            .map(|r| r.message.round)
            .collect();
        ensure(!converged.is_empty() && converged.iter().all(|&r| r == result.rounds_total), || {
            format!("convergence reports at rounds {converged:?}, run ended at {}", result.rounds_total)
        })?;
        ensure(!result.converged_parties.is_empty(), || "no party converged".into())?;
        lines.push(format!(
            "{}: cosine {cos:.10}, stopped at round {} on {} of 4 parties",
            config.mode_label(),
            result.rounds_total,
            result.converged_parties.len()
        ));
    }
    Ok(lines.join("; "))
}

fn determinism() -> Outcome {
    let data = generate(10, &[6, 6], 0.5, 22).map_err(|e| e.to_string())?;
    let config = ProtocolConfig { seed: 77, ..ProtocolConfig::hardened(2, 2.0, 0.7) };
    let dir = std::env::temp_dir().join(format!("seigen-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for i in 0..2 {
        let result = run(&data.parts, &config)?;
        let path = dir.join(format!("transcript-{i}.bin"));
        std::fs::write(&path, result.transcript.to_bytes().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        files.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    std::fs::remove_dir_all(&dir).ok();
    ensure(files[0] == files[1], || "transcript files differ".into())?;
    Ok(format!("two transcripts of {} bytes are identical", files[0].len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("correctness ladder", correctness_ladder),
        ("block identity", block_identity),
        ("scaling cancellation", scaling_cancellation),
        ("padding shift", padding_shift),
        ("transpose mapping", transpose_mapping),
        ("cost accounting", cost_accounting),
        ("obfuscation overhead", obfuscation_overhead),
        ("restart scheduler", fig2_scheduler),
        ("attack regression", attack_regression),
        ("homomorphic sweep", homomorphic_sweep),
        ("multi-party", multi_party),
        ("determinism", determinism),
    ];
    key();
    let handles: Vec<_> = criteria
        .iter()
        .map(|&(_, f)| {
            thread::spawn(move || {
                let start = Instant::now();
                let outcome = panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
                (outcome, start.elapsed())
            })
        })
        .collect();
    let mut failures = 0;
    for (i, (handle, (name, _))) in handles.into_iter().zip(criteria).enumerate() {
        let (outcome, elapsed) = handle.join().expect("criterion thread");
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({:.1}s): {detail}", i + 1, elapsed.as_secs_f64()),
            Err(detail) => {
                failures += 1;
                println!("FAIL {:>2} {name} ({:.1}s): {detail}", i + 1, elapsed.as_secs_f64());
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
