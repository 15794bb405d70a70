//! Monte-Carlo drivers for the error-rate and modelling studies.
//!
//! Every channel realization draws its randomness from seeds derived from
//! the master seed and the realization index, so results do not depend on
//! how realizations are scheduled across worker threads. Aggregation always
//! walks realizations in index order.

use crate::config::{DetectorKind, ExperimentConfig};
use crate::report::{Metric, ResultRow};
use mpnn_core::airlink::{draw_channel, to_real, transmit_frame, FrameRecord, MimoChannel, UserImpairments};
use mpnn_core::baselines::{ddnn_detect, ddnn_train, rmp_fit, DirectDnn, RmpModel, ZfDetector};
use mpnn_core::detector::{DetectorOptions, DetectorState, MpnnDetector};
use mpnn_core::modem::{
    bcjr_decode, extrinsic_bit_llrs, priors_from_llrs, viterbi_decode_hard, Constellation, ConvCode, Interleaver,
};
use mpnn_core::signal_flow_nn::{model_nmse, nmse_db, train, SignalFlowNn};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// A detector or model that could not be evaluated for one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub detector: String,
    pub snr_db: f64,
    pub pilot_len: usize,
    pub realization: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    /// Excluded realizations.
    pub failures: Vec<Failure>,
    /// Frames whose detection aborted on a numerical fault; they are scored
    /// as errors.
    pub frame_failures: Vec<(String, f64, usize, u64)>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based seed split: one stream per `(master, parts…)` tuple.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(master), |h, &p| splitmix64(h ^ splitmix64(p)))
}

fn rng_for(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, parts))
}

// Stream tags.
const CHANNEL: u64 = 0;
const BLOCK: u64 = 1;
const TRAINING: u64 = 2;
const INTERLEAVER: u64 = 3;

fn random_indices(rng: &mut ChaCha8Rng, m: usize, k: usize, c: &Constellation) -> Vec<Vec<usize>> {
    (0..m).map(|_| (0..k).map(|_| rng.random_range(0..c.len())).collect()).collect()
}

fn to_symbols(idx: &[Vec<usize>], c: &Constellation) -> Vec<Vec<Complex64>> {
    idx.iter().map(|row| row.iter().map(|&a| c.points[a]).collect()).collect()
}

fn run_pool<T: Send>(jobs: usize, n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

/// Shared inputs for training detectors on one pilot block.
struct Setup<'a> {
    cfg: &'a ExperimentConfig,
    channel: &'a MimoChannel,
    constellation: &'a Constellation,
    pilots: &'a FrameRecord,
    pilot_len: usize,
    seed: u64,
}

impl Setup<'_> {
    fn pilot_symbols(&self) -> &[Vec<Complex64>] {
        &self.pilots.sent_symbols[..self.pilot_len]
    }

    fn pilot_received(&self) -> &[Vec<Complex64>] {
        &self.pilots.received[..self.pilot_len]
    }

    fn train_net(&self) -> Result<SignalFlowNn, String> {
        let tc = self.cfg.train_config(self.seed, 1.0);
        train(self.pilot_symbols(), self.pilot_received(), &tc, self.cfg.hidden, self.cfg.tied)
            .map(|(net, _)| net)
            .map_err(|e| e.to_string())
    }
}

/// A detector ready to process data frames.
enum Ready {
    Message(MpnnDetector),
    Rmp(RmpModel),
    Dnn(DirectDnn),
    Zf(ZfDetector),
}

impl Ready {
    fn build(kind: DetectorKind, s: &Setup<'_>, net: &mut Option<Result<SignalFlowNn, String>>) -> Result<Self, String> {
        let c = s.constellation.clone();
        let mut trained = || net.get_or_insert_with(|| s.train_net()).clone();
        Ok(match kind {
            DetectorKind::Mpnn => Self::Message(MpnnDetector::new(trained()?, c).map_err(|e| e.to_string())?),
            DetectorKind::Amp => Self::Message(MpnnDetector::amp_variant(trained()?, c)),
            DetectorKind::Probe => Self::Message(
                MpnnDetector::new(SignalFlowNn::linear_probe(&s.channel.h), c).map_err(|e| e.to_string())?,
            ),
            DetectorKind::Drmp => Self::Rmp(
                rmp_fit(s.pilot_received(), s.pilot_symbols(), s.cfg.rmp_order, s.cfg.rmp_memory)
                    .map_err(|e| e.to_string())?,
            ),
            DetectorKind::Ddnn => {
                let tc = s.cfg.train_config(s.seed ^ 0xD, 1.0);
                Self::Dnn(ddnn_train(s.pilot_received(), s.pilot_symbols(), &s.cfg.ddnn_hidden, &tc).map_err(|e| e.to_string())?)
            }
            DetectorKind::Zf => Self::Zf(ZfDetector::new(s.channel).map_err(|e| e.to_string())?),
        })
    }

    /// Hard decisions for frame `m` of `received`; `None` on a numerical
    /// abort.
    fn decide(&self, received: &[Vec<Complex64>], m: usize, c: &Constellation, opts: &DetectorOptions) -> Option<Vec<usize>> {
        match self {
            Self::Message(d) => d.detect(&to_real(&received[m]), None, opts, None).ok().map(|r| r.decisions()),
            Self::Rmp(model) => Some(model.detect(received, m, c).1),
            Self::Dnn(net) => Some(ddnn_detect(&received[m], net, c).1),
            Self::Zf(zf) => zf.detect(&received[m], c).ok().map(|r| r.1),
        }
    }
}

fn detector_options(cfg: &ExperimentConfig) -> DetectorOptions {
    DetectorOptions {
        max_iterations: cfg.detector_iterations,
        ..DetectorOptions::default()
    }
}

/// Outcome of one detector on one (realization, SNR, pilot length) cell.
#[derive(Debug, Clone)]
struct Cell {
    errors: u64,
    trials: u64,
    frame_failures: u64,
    failed: Option<String>,
}

struct Realization {
    channel: MimoChannel,
    imps: Vec<UserImpairments>,
}

fn realization(cfg: &ExperimentConfig, r: usize) -> Realization {
    let mut rng = rng_for(cfg.seed, &[r as u64, CHANNEL]);
    Realization {
        channel: draw_channel(cfg.n_antennas, cfg.n_users, cfg.paths, &mut rng),
        imps: vec![
            UserImpairments {
                drive: cfg.pa_drive,
                ..cfg.severity.impairments()
            };
            cfg.n_users
        ],
    }
}

fn transmit(
    rz: &Realization,
    idx: &[Vec<usize>],
    c: &Constellation,
    snr: f64,
    rng: &mut ChaCha8Rng,
) -> Result<FrameRecord, String> {
    transmit_frame(&to_symbols(idx, c), &rz.imps, &rz.channel, snr, rng).map_err(|e| e.to_string())
}

/// Symbol error rates of the selected detectors.
pub fn run_ser_sweep(cfg: &ExperimentConfig, jobs: usize) -> RunOutput {
    let c = cfg.modulation.constellation();
    let opts = detector_options(cfg);
    let max_pilots = *cfg.pilot_lengths.iter().max().expect("validated");
    let per_real: Vec<Vec<Cell>> = run_pool(jobs, cfg.realizations, |r| {
        let rz = realization(cfg, r);
        let mut cells = Vec::new();
        for (si, &snr) in cfg.snr_db.iter().enumerate() {
            let mut rng = rng_for(cfg.seed, &[r as u64, BLOCK, si as u64]);
            let pilot_idx = random_indices(&mut rng, max_pilots, cfg.n_users, &c);
            let data_idx = random_indices(&mut rng, cfg.data_length, cfg.n_users, &c);
            let blocks = transmit(&rz, &pilot_idx, &c, snr, &mut rng)
                .and_then(|p| transmit(&rz, &data_idx, &c, snr, &mut rng).map(|d| (p, d)));
            for (pi, &pilot_len) in cfg.pilot_lengths.iter().enumerate() {
                let mut net = None;
                for (di, &kind) in cfg.detectors.iter().enumerate() {
                    let cell = match &blocks {
                        Err(e) => Cell {
                            errors: 0,
                            trials: 0,
                            frame_failures: 0,
                            failed: Some(e.clone()),
                        },
                        Ok((pilots, data)) => {
                            let setup = Setup {
                                cfg,
                                channel: &rz.channel,
                                constellation: &c,
                                pilots,
                                pilot_len,
                                seed: derive_seed(cfg.seed, &[r as u64, TRAINING, si as u64, pi as u64, di as u64]),
                            };
                            evaluate_ser(kind, &setup, &mut net, data, &data_idx, &opts)
                        }
                    };
                    cells.push(cell);
                }
            }
        }
        cells
    });

    let mut out = RunOutput::default();
    let mut i = 0;
    for &snr in &cfg.snr_db {
        for &pilot_len in &cfg.pilot_lengths {
            for &kind in &cfg.detectors {
                let (mut errors, mut trials, mut frame_fail) = (0, 0, 0);
                for (r, cells) in per_real.iter().enumerate() {
                    let cell = &cells[i];
                    match &cell.failed {
                        Some(msg) => out.failures.push(Failure {
                            detector: kind.name().into(),
                            snr_db: snr,
                            pilot_len,
                            realization: r,
                            message: msg.clone(),
                        }),
                        None => {
                            errors += cell.errors;
                            trials += cell.trials;
                            frame_fail += cell.frame_failures;
                        }
                    }
                }
                if trials > 0 {
                    out.rows.push(ResultRow::rate(kind.name(), snr, pilot_len, Metric::Ser, errors, trials));
                }
                if frame_fail > 0 {
                    out.frame_failures.push((kind.name().into(), snr, pilot_len, frame_fail));
                }
                i += 1;
            }
        }
    }
    out
}

fn evaluate_ser(
    kind: DetectorKind,
    setup: &Setup<'_>,
    net: &mut Option<Result<SignalFlowNn, String>>,
    data: &FrameRecord,
    data_idx: &[Vec<usize>],
    opts: &DetectorOptions,
) -> Cell {
    let ready = match Ready::build(kind, setup, net) {
        Ok(r) => r,
        Err(e) => {
            return Cell {
                errors: 0,
                trials: 0,
                frame_failures: 0,
                failed: Some(e),
            }
        }
    };
    let k = setup.cfg.n_users;
    let (mut errors, mut frame_failures) = (0u64, 0u64);
    for (m, sent) in data_idx.iter().enumerate() {
        match ready.decide(&data.received, m, setup.constellation, opts) {
            Some(d) => errors += d.iter().zip(sent).filter(|(a, b)| a != b).count() as u64,
            None => {
                errors += k as u64;
                frame_failures += 1;
            }
        }
    }
    Cell {
        errors,
        trials: (data_idx.len() * k) as u64,
        frame_failures,
        failed: None,
    }
}

/// Per-iteration detector trace for the first `frames` data frames of
/// realization 0 at the first SNR and pilot length, one line per iteration.
pub fn trace_frames(cfg: &ExperimentConfig, frames: usize) -> Result<String, String> {
    let c = cfg.modulation.constellation();
    let max_pilots = *cfg.pilot_lengths.iter().max().expect("validated");
    let rz = realization(cfg, 0);
    let mut rng = rng_for(cfg.seed, &[0, BLOCK, 0]);
    let pilot_idx = random_indices(&mut rng, max_pilots, cfg.n_users, &c);
    let data_idx = random_indices(&mut rng, cfg.data_length, cfg.n_users, &c);
    let pilots = transmit(&rz, &pilot_idx, &c, cfg.snr_db[0], &mut rng)?;
    let data = transmit(&rz, &data_idx, &c, cfg.snr_db[0], &mut rng)?;
    let setup = Setup {
        cfg,
        channel: &rz.channel,
        constellation: &c,
        pilots: &pilots,
        pilot_len: cfg.pilot_lengths[0],
        seed: derive_seed(cfg.seed, &[0, TRAINING, 0, 0, 0]),
    };
    let det = MpnnDetector::new(setup.train_net()?, c.clone()).map_err(|e| e.to_string())?;
    let opts = DetectorOptions {
        trace: true,
        ..detector_options(cfg)
    };
    let mut out = String::new();
    for (m, y) in data.received.iter().take(frames).enumerate() {
        let d = det.detect(&to_real(y), None, &opts, None).map_err(|e| format!("frame {m}: {e}"))?;
        for t in &d.trace {
            out.push_str(&format!("frame={m} {t}\n"));
        }
    }
    Ok(out)
}

/// Held-out modelling error of the signal-flow network and of forward
/// memory polynomials, fitted on the same leading share of each pilot block.
///
/// Rows are named `nn` and `rmp<order>`; values are per-realization NMSE in
/// dB averaged over realizations.
pub fn run_nmse_study(cfg: &ExperimentConfig, jobs: usize) -> RunOutput {
    let c = cfg.modulation.constellation();
    let max_pilots = *cfg.pilot_lengths.iter().max().expect("validated");
    let names: Vec<String> = std::iter::once("nn".to_string())
        .chain(cfg.nmse_orders.iter().map(|p| format!("rmp{p}")))
        .collect();
    let per_real: Vec<Vec<Result<f64, String>>> = run_pool(jobs, cfg.realizations, |r| {
        let rz = realization(cfg, r);
        let mut cells = Vec::new();
        for (si, &snr) in cfg.snr_db.iter().enumerate() {
            let mut rng = rng_for(cfg.seed, &[r as u64, BLOCK, si as u64]);
            let idx = random_indices(&mut rng, max_pilots, cfg.n_users, &c);
            let block = transmit(&rz, &idx, &c, snr, &mut rng);
            for (pi, &pilot_len) in cfg.pilot_lengths.iter().enumerate() {
                let split = ((pilot_len as f64) * cfg.train_fraction).round() as usize;
                let seed = derive_seed(cfg.seed, &[r as u64, TRAINING, si as u64, pi as u64]);
                let Ok(frame) = &block else {
                    let msg = block.as_ref().err().cloned().unwrap_or_default();
                    cells.extend(names.iter().map(|_| Err(msg.clone())));
                    continue;
                };
                let (xs, ys) = (&frame.sent_symbols[..pilot_len], &frame.received[..pilot_len]);
                let (train_x, test_x) = xs.split_at(split);
                let (train_y, test_y) = ys.split_at(split);
                let tc = cfg.train_config(seed, 1.0);
                cells.push(
                    train(train_x, train_y, &tc, cfg.hidden, cfg.tied)
                        .and_then(|(net, _)| model_nmse(&net, test_x, test_y))
                        .map_err(|e| e.to_string()),
                );
                let targets: Vec<Vec<f64>> = test_y.iter().map(|y| to_real(y)).collect();
                for &order in &cfg.nmse_orders {
                    cells.push(
                        RmpModel::fit(train_x, train_y, order, cfg.rmp_memory)
                            .and_then(|m| {
                                let preds: Vec<Vec<f64>> = m.predict_all(test_x).iter().map(|p| to_real(p)).collect();
                                nmse_db(&preds, &targets)
                            })
                            .map_err(|e| e.to_string()),
                    );
                }
            }
        }
        cells
    });

    let mut out = RunOutput::default();
    let mut i = 0;
    for &snr in &cfg.snr_db {
        for &pilot_len in &cfg.pilot_lengths {
            for name in &names {
                let mut values = Vec::new();
                for (r, cells) in per_real.iter().enumerate() {
                    match &cells[i] {
                        Ok(v) => values.push(*v),
                        Err(msg) => out.failures.push(Failure {
                            detector: name.clone(),
                            snr_db: snr,
                            pilot_len,
                            realization: r,
                            message: msg.clone(),
                        }),
                    }
                }
                if !values.is_empty() {
                    out.rows.push(ResultRow::mean(name, snr, pilot_len, Metric::NmseDb, &values));
                }
                i += 1;
            }
        }
    }
    out
}

/// Per-user coded data for one realization and SNR.
struct CodedBlock {
    /// `info[k][w]`: information bits of codeword `w` of user `k`.
    info: Vec<Vec<Vec<u8>>>,
    interleavers: Vec<Vec<Interleaver>>,
    /// Symbol indices per time instant.
    idx: Vec<Vec<usize>>,
}

fn coded_block(cfg: &ExperimentConfig, c: &Constellation, r: usize, si: usize, rng: &mut ChaCha8Rng) -> CodedBlock {
    let code = ConvCode::rate_two_thirds();
    let spc = cfg.symbols_per_codeword();
    let k = cfg.n_users;
    let mut info = vec![Vec::new(); k];
    let mut interleavers = vec![Vec::new(); k];
    let mut idx = vec![vec![0usize; k]; cfg.codewords * spc];
    for u in 0..k {
        for w in 0..cfg.codewords {
            let bits: Vec<u8> = (0..cfg.info_bits).map(|_| rng.random_range(0..2u8)).collect();
            let coded = code.encode(&bits).expect("validated block length");
            let il = Interleaver::new(
                coded.len(),
                derive_seed(cfg.seed, &[r as u64, INTERLEAVER, si as u64, u as u64, w as u64]),
            );
            let symbols = c.map_bits(&il.interleave(&coded).expect("length")).expect("whole symbols");
            for (t, a) in symbols.into_iter().enumerate() {
                idx[w * spc + t][u] = a;
            }
            info[u].push(bits);
            interleavers[u].push(il);
        }
    }
    CodedBlock {
        info,
        interleavers,
        idx,
    }
}

/// Bit error rates in the coded system. The message-passing receiver runs
/// the turbo schedule and reports both its first pass (`mpnn`) and its
/// final outer iteration (`mpnn-turbo`); other detectors feed hard
/// decisions to a Viterbi decoder.
pub fn run_ber_turbo(cfg: &ExperimentConfig, jobs: usize) -> RunOutput {
    let c = cfg.modulation.constellation();
    let opts = detector_options(cfg);
    let max_pilots = *cfg.pilot_lengths.iter().max().expect("validated");
    let mut names: Vec<String> = Vec::new();
    for kind in &cfg.detectors {
        match kind {
            DetectorKind::Mpnn => {
                names.push("mpnn".into());
                names.push("mpnn-turbo".into());
            }
            other => names.push(other.name().into()),
        }
    }
    let per_real: Vec<Vec<Cell>> = run_pool(jobs, cfg.realizations, |r| {
        let rz = realization(cfg, r);
        let mut cells = Vec::new();
        for (si, &snr) in cfg.snr_db.iter().enumerate() {
            let mut rng = rng_for(cfg.seed, &[r as u64, BLOCK, si as u64]);
            let pilot_idx = random_indices(&mut rng, max_pilots, cfg.n_users, &c);
            let block = coded_block(cfg, &c, r, si, &mut rng);
            let frames = transmit(&rz, &pilot_idx, &c, snr, &mut rng)
                .and_then(|p| transmit(&rz, &block.idx, &c, snr, &mut rng).map(|d| (p, d)));
            for (pi, &pilot_len) in cfg.pilot_lengths.iter().enumerate() {
                let mut net = None;
                for (di, &kind) in cfg.detectors.iter().enumerate() {
                    let n_cells = if kind == DetectorKind::Mpnn { 2 } else { 1 };
                    let (pilots, data) = match &frames {
                        Ok(f) => (&f.0, &f.1),
                        Err(e) => {
                            cells.extend((0..n_cells).map(|_| failed_cell(e.clone())));
                            continue;
                        }
                    };
                    let setup = Setup {
                        cfg,
                        channel: &rz.channel,
                        constellation: &c,
                        pilots,
                        pilot_len,
                        seed: derive_seed(cfg.seed, &[r as u64, TRAINING, si as u64, pi as u64, di as u64]),
                    };
                    match Ready::build(kind, &setup, &mut net) {
                        Err(e) => cells.extend((0..n_cells).map(|_| failed_cell(e.clone()))),
                        Ok(Ready::Message(det)) if kind == DetectorKind::Mpnn => {
                            let (first, last) = turbo_receiver(cfg, &det, data, &block, &opts);
                            cells.push(first);
                            cells.push(last);
                        }
                        Ok(ready) => cells.push(hard_receiver(cfg, &ready, data, &block, &opts)),
                    }
                }
            }
        }
        cells
    });

    let mut out = RunOutput::default();
    let mut i = 0;
    for &snr in &cfg.snr_db {
        for &pilot_len in &cfg.pilot_lengths {
            for name in &names {
                let (mut errors, mut trials, mut frame_fail) = (0, 0, 0);
                for (r, cells) in per_real.iter().enumerate() {
                    let cell = &cells[i];
                    match &cell.failed {
                        Some(msg) => out.failures.push(Failure {
                            detector: name.clone(),
                            snr_db: snr,
                            pilot_len,
                            realization: r,
                            message: msg.clone(),
                        }),
                        None => {
                            errors += cell.errors;
                            trials += cell.trials;
                            frame_fail += cell.frame_failures;
                        }
                    }
                }
                if trials > 0 {
                    out.rows.push(ResultRow::rate(name, snr, pilot_len, Metric::Ber, errors, trials));
                }
                if frame_fail > 0 {
                    out.frame_failures.push((name.clone(), snr, pilot_len, frame_fail));
                }
                i += 1;
            }
        }
    }
    out
}

fn failed_cell(msg: String) -> Cell {
    Cell {
        errors: 0,
        trials: 0,
        frame_failures: 0,
        failed: Some(msg),
    }
}

fn bit_errors(a: &[u8], b: &[u8]) -> u64 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as u64
}

fn hard_receiver(cfg: &ExperimentConfig, ready: &Ready, data: &FrameRecord, block: &CodedBlock, opts: &DetectorOptions) -> Cell {
    let c = cfg.modulation.constellation();
    let code = ConvCode::rate_two_thirds();
    let spc = cfg.symbols_per_codeword();
    let k = cfg.n_users;
    let mut decisions = vec![vec![0usize; k]; block.idx.len()];
    let mut frame_failures = 0;
    for (m, row) in decisions.iter_mut().enumerate() {
        match ready.decide(&data.received, m, &c, opts) {
            Some(d) => *row = d,
            None => {
                frame_failures += 1;
                // Deliberately wrong symbols: no decision is available.
                for (u, slot) in row.iter_mut().enumerate() {
                    *slot = (block.idx[m][u] + 1) % c.len();
                }
            }
        }
    }
    let mut errors = 0;
    for u in 0..k {
        for w in 0..cfg.codewords {
            let sym: Vec<usize> = (0..spc).map(|t| decisions[w * spc + t][u]).collect();
            let bits = block.interleavers[u][w].deinterleave(&c.demap_bits(&sym)).expect("length");
            let decoded = viterbi_decode_hard(&bits, &code).expect("length");
            errors += bit_errors(&decoded, &block.info[u][w]);
        }
    }
    Cell {
        errors,
        trials: (k * cfg.codewords * cfg.info_bits) as u64,
        frame_failures,
        failed: None,
    }
}

/// Runs the turbo loop and returns the bit-error cells after the first and
/// the last outer iteration.
fn turbo_receiver(
    cfg: &ExperimentConfig,
    det: &MpnnDetector,
    data: &FrameRecord,
    block: &CodedBlock,
    opts: &DetectorOptions,
) -> (Cell, Cell) {
    let c = &det.constellation;
    let bps = c.bits_per_symbol;
    let code = ConvCode::rate_two_thirds();
    let spc = cfg.symbols_per_codeword();
    let k = cfg.n_users;
    let n_frames = block.idx.len();
    let trials = (k * cfg.codewords * cfg.info_bits) as u64;
    let single = DetectorOptions {
        single_pass: true,
        ..opts.clone()
    };

    let mut states: Vec<Option<DetectorState>> = vec![None; n_frames];
    // Decoder feedback on each transmitted bit, per time instant and user.
    let mut apriori = vec![vec![vec![0.0; bps]; k]; n_frames];
    let mut frame_failures = 0u64;
    let mut first = None;
    for outer in 0..=cfg.turbo_iterations {
        let mut channel_llrs = vec![vec![vec![0.0; bps]; k]; n_frames];
        for m in 0..n_frames {
            let y = to_real(&data.received[m]);
            let result = if outer == 0 {
                det.detect(&y, None, opts, None)
            } else {
                let priors: Vec<Vec<f64>> = (0..k)
                    .map(|u| priors_from_llrs(&apriori[m][u], c).map(|mut p| p.remove(0)))
                    .collect::<Result<_, _>>()
                    .expect("finite priors");
                det.detect(&y, Some(&priors), &single, states[m].take())
            };
            match result {
                Ok(d) => {
                    for (u, b) in d.beliefs.iter().enumerate() {
                        channel_llrs[m][u] =
                            extrinsic_bit_llrs(b.extrinsic_mean, b.extrinsic_var, &apriori[m][u], c)
                                .unwrap_or_else(|_| vec![0.0; bps]);
                    }
                    states[m] = Some(d.state);
                }
                Err(_) => {
                    frame_failures += 1;
                    states[m] = None;
                }
            }
        }
        let mut errors = 0;
        for u in 0..k {
            for w in 0..cfg.codewords {
                let stream: Vec<f64> = (0..spc).flat_map(|t| channel_llrs[w * spc + t][u].clone()).collect();
                let il = &block.interleavers[u][w];
                let deint = il.deinterleave(&stream).expect("length");
                let zeros = vec![0.0; deint.len()];
                let out = bcjr_decode(&deint, &zeros, &code).expect("length");
                let decided: Vec<u8> = out.info_posterior.iter().map(|&l| u8::from(l < 0.0)).collect();
                errors += bit_errors(&decided, &block.info[u][w]);
                let feedback = il.interleave(&out.extrinsic).expect("length");
                for t in 0..spc {
                    apriori[w * spc + t][u].copy_from_slice(&feedback[t * bps..(t + 1) * bps]);
                }
            }
        }
        let cell = Cell {
            errors,
            trials,
            frame_failures,
            failed: None,
        };
        if outer == 0 {
            first = Some(cell.clone());
        }
        if outer == cfg.turbo_iterations {
            return (first.expect("set on first pass"), cell);
        }
    }
    unreachable!("loop returns on its last iteration")
}
