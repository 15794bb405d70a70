//! Fast built-in checks against independently computed references.

use crate::config::{DetectorKind, ExperimentConfig, Severity};
use crate::experiments::run_ser_sweep;
use mpnn_core::airlink::{draw_channel, to_real, IqImbalance};
use mpnn_core::detector::{DetectorOptions, MpnnDetector};
use mpnn_core::modem::{bcjr_decode, build_qpsk, viterbi_decode_hard, ConvCode};
use mpnn_core::signal_flow_nn::SignalFlowNn;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

/// I/Q mismatch against the branch-wise definition: the I branch gains
/// `1 + λ` and rotates by `+θ/2`, the Q branch gains `1 - λ` and rotates
/// by `-θ/2`.
fn iq_branch_model() -> Check {
    let (lambda, theta) = (0.1, 0.2);
    let imb = IqImbalance::new(lambda, theta);
    let mut worst: f64 = 0.0;
    for &(re, im) in &[(1.0, 0.0), (0.0, 1.0), (0.3, -0.7), (-1.2, 0.4)] {
        let x = Complex64::new(re, im);
        let i_branch = (1.0 + lambda) * re * Complex64::from_polar(1.0, theta / 2.0);
        let q_branch = (1.0 - lambda) * im * Complex64::i() * Complex64::from_polar(1.0, -theta / 2.0);
        let reference = i_branch + q_branch;
        worst = worst.max((imb.apply(x) - reference).norm());
    }
    check("iq-branch-model", worst < 1e-12, format!("max deviation {worst:e}"))
}

/// Noiseless encode / decode round trips through Viterbi and BCJR.
fn code_round_trip() -> Check {
    let code = ConvCode::rate_two_thirds();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let info: Vec<u8> = (0..92).map(|_| rng.random_range(0..2u8)).collect();
    let coded = match code.encode(&info) {
        Ok(c) => c,
        Err(e) => return check("code-round-trip", false, e.to_string()),
    };
    let viterbi_ok = viterbi_decode_hard(&coded, &code).is_ok_and(|d| d == info);
    let llrs: Vec<f64> = coded.iter().map(|&b| if b == 0 { 4.0 } else { -4.0 }).collect();
    let bcjr_ok = bcjr_decode(&llrs, &vec![0.0; llrs.len()], &code).is_ok_and(|o| {
        o.info_posterior
            .iter()
            .zip(&info)
            .all(|(&l, &b)| u8::from(l < 0.0) == b)
    });
    check(
        "code-round-trip",
        viterbi_ok && bcjr_ok,
        format!("viterbi {viterbi_ok}, bcjr {bcjr_ok}"),
    )
}

/// Central-difference check of the training gradient.
fn gradient_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let net = match SignalFlowNn::random(2, 3, 4, false, &mut rng) {
        Ok(n) => n,
        Err(e) => return check("loss-gradient", false, e.to_string()),
    };
    let inputs: Vec<Vec<Complex64>> = (0..6)
        .map(|_| (0..2).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect())
        .collect();
    let targets: Vec<Vec<f64>> = (0..6).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let Ok((_, grad)) = net.loss_and_gradient(&inputs, &targets) else {
        return check("loss-gradient", false, "loss failed".into());
    };
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..grad.len() {
        let mut plus = net.clone();
        plus.params_mut()[i] += h;
        let mut minus = net.clone();
        minus.params_mut()[i] -= h;
        let lp = plus.loss_and_gradient(&inputs, &targets).map(|r| r.0).unwrap_or(f64::NAN);
        let lm = minus.loss_and_gradient(&inputs, &targets).map(|r| r.0).unwrap_or(f64::NAN);
        let fd = (lp - lm) / (2.0 * h);
        worst = worst.max((fd - grad[i]).abs() / fd.abs().max(1e-3));
    }
    check("loss-gradient", worst < 1e-5, format!("max relative error {worst:e}"))
}

fn record_round_trip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ok = SignalFlowNn::random(3, 5, 7, false, &mut rng)
        .ok()
        .and_then(|net| SignalFlowNn::from_record(&net.to_record()).ok().map(|back| back == net))
        .unwrap_or(false);
    check("record-round-trip", ok, String::new())
}

/// A linear network built from the true channel recovers noiseless QPSK.
fn linear_probe_noiseless() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let ch = draw_channel(8, 3, 3, &mut rng);
    let c = build_qpsk();
    let det = match MpnnDetector::new(SignalFlowNn::linear_probe(&ch.h), c.clone()) {
        Ok(d) => d,
        Err(e) => return check("linear-probe", false, e.to_string()),
    };
    let mut errors = 0;
    for _ in 0..50 {
        let idx: Vec<usize> = (0..3).map(|_| rng.random_range(0..4)).collect();
        let x: Vec<Complex64> = idx.iter().map(|&a| c.points[a]).collect();
        let y = ch.h.matvec(&x);
        match det.detect(&to_real(&y), None, &DetectorOptions::default(), None) {
            Ok(d) => errors += d.decisions().iter().zip(&idx).filter(|(a, b)| a != b).count(),
            Err(e) => return check("linear-probe", false, e.to_string()),
        }
    }
    check("linear-probe", errors == 0, format!("{errors} symbol errors"))
}

fn jobs_invariance() -> Check {
    let cfg = ExperimentConfig {
        n_antennas: 4,
        n_users: 2,
        snr_db: vec![8.0],
        pilot_lengths: vec![100],
        data_length: 100,
        realizations: 3,
        detectors: vec![DetectorKind::Zf, DetectorKind::Drmp],
        severity: Severity::Moderate,
        ..ExperimentConfig::default()
    };
    let same = run_ser_sweep(&cfg, 1) == run_ser_sweep(&cfg, 3);
    check("jobs-invariance", same, String::new())
}

pub fn run_all() -> Vec<Check> {
    vec![
        iq_branch_model(),
        code_round_trip(),
        gradient_check(),
        record_round_trip(),
        linear_probe_noiseless(),
        jobs_invariance(),
    ]
}
