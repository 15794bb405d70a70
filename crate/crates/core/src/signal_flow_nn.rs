//! The signal-flow network that stands in for the transmit chain and the
//! channel.
//!
//! Each user owns a pair of single-hidden-layer sub-networks that map the
//! symbol `(Re x_k, Im x_k)` to the real and imaginary parts of its distorted
//! transmit sample. The pair outputs are stacked as `s' = (s_1; s_2)` and
//! mixed by a structured linear layer
//!
//! ```text
//! W3 = [[W31,  W32],
//!       [-W32, W31]]
//! ```
//!
//! which is the real form of a complex `N × K` matrix. Only `W31` and `W32`
//! are stored, so the block structure holds by construction.
//!
//! Parameters live in one flat vector. For every parameter set (one per user,
//! or a single shared set when tied) and for `l = 1, 2` the layout is
//! `w1` (`N' × 2`, row-major), `b1` (`N'`), `w2` (`N'`). After all sets come
//! `W31` and `W32`, each `N × K` row-major.

use crate::error::{Error, Result};
use crate::optim::Adam;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

/// Reported when predictions match the reference exactly.
pub const NMSE_FLOOR_DB: f64 = -300.0;

const RECORD_MAGIC: &str = "signal-flow-nn v1";

/// Borrowed parameters of one sub-network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubNn<'a> {
    /// `N' × 2` row-major input weights.
    pub w1: &'a [f64],
    pub b1: &'a [f64],
    pub w2: &'a [f64],
}

impl SubNn<'_> {
    pub fn hidden(&self) -> usize {
        self.b1.len()
    }

    pub fn forward(&self, x: (f64, f64)) -> f64 {
        (0..self.hidden())
            .map(|h| self.w2[h] * (self.w1[2 * h] * x.0 + self.w1[2 * h + 1] * x.1 + self.b1[h]).tanh())
            .sum()
    }

    /// Output and its partial derivatives with respect to both inputs.
    pub fn linearize(&self, x: (f64, f64)) -> (f64, f64, f64) {
        let mut q = 0.0;
        let mut eta = 0.0;
        let mut gamma = 0.0;
        for h in 0..self.hidden() {
            let g = (self.w1[2 * h] * x.0 + self.w1[2 * h + 1] * x.1 + self.b1[h]).tanh();
            let dg = 1.0 - g * g;
            q += self.w2[h] * g;
            eta += self.w2[h] * self.w1[2 * h] * dg;
            gamma += self.w2[h] * self.w1[2 * h + 1] * dg;
        }
        (q, eta, gamma)
    }
}

/// Owned parameters of one sub-network.
#[derive(Debug, Clone, PartialEq)]
pub struct SubNnParams {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
}

impl SubNnParams {
    pub fn new(w1: Vec<f64>, b1: Vec<f64>, w2: Vec<f64>) -> Result<Self> {
        let h = b1.len();
        if h == 0 {
            return Err(Error::InvalidParameter("hidden width must be at least 1".into()));
        }
        if w1.len() != 2 * h || w2.len() != h {
            return Err(Error::DimensionMismatch {
                context: "sub-network weights",
                expected: 2 * h,
                actual: w1.len(),
            });
        }
        if w1.iter().chain(&b1).chain(&w2).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sub-network weights"));
        }
        Ok(Self { w1, b1, w2 })
    }

    pub fn zeros(hidden: usize) -> Self {
        Self {
            w1: vec![0.0; 2 * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
        }
    }

    pub fn view(&self) -> SubNn<'_> {
        SubNn {
            w1: &self.w1,
            b1: &self.b1,
            w2: &self.w2,
        }
    }
}

/// `w2ᵀ tanh(w1 x + b1)`.
pub fn subnn_forward(x: (f64, f64), p: &SubNnParams) -> f64 {
    p.view().forward(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalFlowNn {
    n_users: usize,
    n_antennas: usize,
    hidden: usize,
    tied: bool,
    params: Vec<f64>,
}

impl SignalFlowNn {
    pub fn zeros(n_users: usize, n_antennas: usize, hidden: usize, tied: bool) -> Result<Self> {
        if n_users == 0 || n_antennas == 0 || hidden == 0 {
            return Err(Error::InvalidParameter("network dimensions must be positive".into()));
        }
        let sets = if tied { 1 } else { n_users };
        let len = sets * 8 * hidden + 2 * n_antennas * n_users;
        Ok(Self {
            n_users,
            n_antennas,
            hidden,
            tied,
            params: vec![0.0; len],
        })
    }

    /// Uniform `±sqrt(6 / (fan_in + fan_out))` initialization per layer,
    /// zero biases.
    pub fn random<R: Rng + ?Sized>(
        n_users: usize,
        n_antennas: usize,
        hidden: usize,
        tied: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(n_users, n_antennas, hidden, tied)?;
        let a1 = (6.0 / (2.0 + hidden as f64)).sqrt();
        let a2 = (6.0 / (hidden as f64 + 1.0)).sqrt();
        let a3 = (6.0 / (2.0 * (n_users + n_antennas) as f64)).sqrt();
        for set in 0..net.n_sets() {
            for l in 0..2 {
                let off = net.subnn_offset(set, l);
                for v in &mut net.params[off..off + 2 * hidden] {
                    *v = rng.random_range(-a1..a1);
                }
                for v in &mut net.params[off + 3 * hidden..off + 4 * hidden] {
                    *v = rng.random_range(-a2..a2);
                }
            }
        }
        let w3 = net.w3_offset();
        for v in &mut net.params[w3..] {
            *v = rng.random_range(-a3..a3);
        }
        Ok(net)
    }

    /// Network whose sub-networks act as the identity to within `1e-12`
    /// relative on unit-scale inputs, mixing through the real form of `h`.
    pub fn linear_probe(h: &crate::airlink::ComplexMatrix) -> Self {
        const GAIN: f64 = 1e-6;
        let mut net = Self::zeros(h.cols, h.rows, 1, true).expect("nonempty channel");
        net.set_subnn(0, 0, &SubNnParams::new(vec![GAIN, 0.0], vec![0.0], vec![1.0 / GAIN]).unwrap());
        net.set_subnn(0, 1, &SubNnParams::new(vec![0.0, GAIN], vec![0.0], vec![1.0 / GAIN]).unwrap());
        let w31: Vec<f64> = h.data.iter().map(|c| c.re).collect();
        let w32: Vec<f64> = h.data.iter().map(|c| -c.im).collect();
        net.set_output_weights(&w31, &w32).unwrap();
        net
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn is_tied(&self) -> bool {
        self.tied
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn n_sets(&self) -> usize {
        if self.tied {
            1
        } else {
            self.n_users
        }
    }

    fn set_of(&self, k: usize) -> usize {
        if self.tied {
            0
        } else {
            k
        }
    }

    fn subnn_offset(&self, set: usize, l: usize) -> usize {
        (set * 2 + l) * 4 * self.hidden
    }

    fn w3_offset(&self) -> usize {
        self.n_sets() * 8 * self.hidden
    }

    /// Sub-network `l ∈ {0, 1}` (real, imaginary) of user `k`.
    pub fn subnn(&self, l: usize, k: usize) -> SubNn<'_> {
        let off = self.subnn_offset(self.set_of(k), l);
        let h = self.hidden;
        SubNn {
            w1: &self.params[off..off + 2 * h],
            b1: &self.params[off + 2 * h..off + 3 * h],
            w2: &self.params[off + 3 * h..off + 4 * h],
        }
    }

    /// Overwrites sub-network `l` of parameter set `set`.
    pub fn set_subnn(&mut self, set: usize, l: usize, p: &SubNnParams) {
        assert_eq!(p.b1.len(), self.hidden, "hidden width mismatch");
        let off = self.subnn_offset(set, l);
        let h = self.hidden;
        self.params[off..off + 2 * h].copy_from_slice(&p.w1);
        self.params[off + 2 * h..off + 3 * h].copy_from_slice(&p.b1);
        self.params[off + 3 * h..off + 4 * h].copy_from_slice(&p.w2);
    }

    pub fn w31(&self) -> &[f64] {
        let o = self.w3_offset();
        &self.params[o..o + self.n_antennas * self.n_users]
    }

    pub fn w32(&self) -> &[f64] {
        let o = self.w3_offset() + self.n_antennas * self.n_users;
        &self.params[o..]
    }

    pub fn set_output_weights(&mut self, w31: &[f64], w32: &[f64]) -> Result<()> {
        let nk = self.n_antennas * self.n_users;
        if w31.len() != nk || w32.len() != nk {
            return Err(Error::DimensionMismatch {
                context: "output weights",
                expected: nk,
                actual: w31.len().min(w32.len()),
            });
        }
        let o = self.w3_offset();
        self.params[o..o + nk].copy_from_slice(w31);
        self.params[o + nk..].copy_from_slice(w32);
        Ok(())
    }

    /// The assembled `2N × 2K` output matrix.
    pub fn w3(&self) -> crate::numerics::RealMatrix {
        let (n, k) = (self.n_antennas, self.n_users);
        let (w31, w32) = (self.w31(), self.w32());
        crate::numerics::RealMatrix::from_fn(2 * n, 2 * k, |i, j| {
            let idx = (i % n) * k + j % k;
            match (i < n, j < k) {
                (true, true) | (false, false) => w31[idx],
                (true, false) => w32[idx],
                (false, true) => -w32[idx],
            }
        })
    }

    /// Sub-network outputs `s' = (s_1; s_2)` for a symbol vector.
    pub fn hidden_outputs(&self, x: &[Complex64]) -> Result<Vec<f64>> {
        self.check_users(x.len())?;
        let k = self.n_users;
        let mut s = vec![0.0; 2 * k];
        for (u, xu) in x.iter().enumerate() {
            s[u] = self.subnn(0, u).forward((xu.re, xu.im));
            s[k + u] = self.subnn(1, u).forward((xu.re, xu.im));
        }
        Ok(s)
    }

    /// `W3 s'`, given `s'`.
    pub fn mix(&self, s: &[f64]) -> Vec<f64> {
        let (n, k) = (self.n_antennas, self.n_users);
        let (w31, w32) = (self.w31(), self.w32());
        let mut y = vec![0.0; 2 * n];
        for i in 0..n {
            let (mut re, mut im) = (0.0, 0.0);
            for u in 0..k {
                let (a, b) = (w31[i * k + u], w32[i * k + u]);
                re += a * s[u] + b * s[k + u];
                im += -b * s[u] + a * s[k + u];
            }
            y[i] = re;
            y[n + i] = im;
        }
        y
    }

    fn check_users(&self, len: usize) -> Result<()> {
        if len != self.n_users {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.n_users,
                actual: len,
            });
        }
        Ok(())
    }

    /// Sub-network parameters and output-layer parameters actually stored.
    pub fn parameter_counts(&self) -> (usize, usize) {
        let w3 = 2 * self.n_antennas * self.n_users;
        (self.params.len() - w3, w3)
    }

    /// Mean-squared-error loss `(1 / 2N)(1 / M) Σ‖ŷ' − p'‖²` and its gradient
    /// with respect to the flat parameter vector.
    pub fn loss_and_gradient(&self, inputs: &[Vec<Complex64>], targets: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
        let data = Prepared::new(self, inputs, targets)?;
        let batch: Vec<usize> = (0..inputs.len()).collect();
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.accumulate(&data, &batch, Some(&mut grad));
        Ok((loss, grad))
    }

    /// Loss over `batch` (sample indices of `data`); adds the gradient into
    /// `grad` when given.
    ///
    /// Sub-network evaluations are shared between samples whose user inputs
    /// coincide, which is the common case for pilots drawn from a small
    /// constellation.
    fn accumulate(&self, data: &Prepared, batch: &[usize], mut grad: Option<&mut Vec<f64>>) -> f64 {
        let (n, k, hd) = (self.n_antennas, self.n_users, self.hidden);
        let b = batch.len() as f64;
        let scale = 1.0 / (n as f64 * b);

        // Forward the distinct inputs of each user.
        let mut slot_of: Vec<Vec<usize>> = data.uniq.iter().map(|u| vec![usize::MAX; u.len()]).collect();
        let mut outs: Vec<Vec<[f64; 2]>> = vec![Vec::new(); k];
        let mut acts: Vec<Vec<f64>> = vec![Vec::new(); k];
        let mut ids_used: Vec<Vec<usize>> = vec![Vec::new(); k];
        for &m in batch {
            for u in 0..k {
                let id = data.ids[m * k + u];
                if slot_of[u][id] == usize::MAX {
                    slot_of[u][id] = outs[u].len();
                    ids_used[u].push(id);
                    let x = data.uniq[u][id];
                    let mut pair = [0.0; 2];
                    for (l, out) in pair.iter_mut().enumerate() {
                        let net = self.subnn(l, u);
                        for h in 0..hd {
                            let t = (net.w1[2 * h] * x.0 + net.w1[2 * h + 1] * x.1 + net.b1[h]).tanh();
                            acts[u].push(t);
                            *out += net.w2[h] * t;
                        }
                    }
                    outs[u].push(pair);
                }
            }
        }

        let mut g_s: Vec<Vec<[f64; 2]>> = outs.iter().map(|o| vec![[0.0; 2]; o.len()]).collect();
        let w3o = self.w3_offset();
        let nk = n * k;
        let (w31, w32) = (self.w31(), self.w32());
        let mut s = vec![0.0; 2 * k];
        let mut sse = 0.0;
        for &m in batch {
            for u in 0..k {
                let o = outs[u][slot_of[u][data.ids[m * k + u]]];
                s[u] = o[0];
                s[k + u] = o[1];
            }
            let y = self.mix(&s);
            let target = &data.targets[m * 2 * n..(m + 1) * 2 * n];
            let e: Vec<f64> = y.iter().zip(target).map(|(a, t)| a - t).collect();
            sse += e.iter().map(|v| v * v).sum::<f64>();
            if let Some(grad) = grad.as_deref_mut() {
                for u in 0..k {
                    let (mut g1, mut g2) = (0.0, 0.0);
                    for i in 0..n {
                        let (gr, gi) = (e[i] * scale, e[n + i] * scale);
                        let idx = i * k + u;
                        grad[w3o + idx] += gr * s[u] + gi * s[k + u];
                        grad[w3o + nk + idx] += gr * s[k + u] - gi * s[u];
                        g1 += gr * w31[idx] - gi * w32[idx];
                        g2 += gr * w32[idx] + gi * w31[idx];
                    }
                    let slot = slot_of[u][data.ids[m * k + u]];
                    g_s[u][slot][0] += g1;
                    g_s[u][slot][1] += g2;
                }
            }
        }

        if let Some(grad) = grad {
            for u in 0..k {
                let set = self.set_of(u);
                for (slot, &id) in ids_used[u].iter().enumerate() {
                    let x = data.uniq[u][id];
                    for l in 0..2 {
                        let gs = g_s[u][slot][l];
                        let off = self.subnn_offset(set, l);
                        let act = &acts[u][(slot * 2 + l) * hd..(slot * 2 + l + 1) * hd];
                        for h in 0..hd {
                            let t = act[h];
                            let w2 = self.params[off + 3 * hd + h];
                            grad[off + 3 * hd + h] += gs * t;
                            let da = gs * w2 * (1.0 - t * t);
                            grad[off + 2 * h] += da * x.0;
                            grad[off + 2 * h + 1] += da * x.1;
                            grad[off + 2 * hd + h] += da;
                        }
                    }
                }
            }
        }
        sse / (2.0 * n as f64 * b)
    }

    /// Text record: a magic line, the dimensions, then every parameter in
    /// storage order, one per line in shortest round-trip form.
    pub fn to_record(&self) -> String {
        let mut out = format!(
            "{RECORD_MAGIC}\nusers {}\nantennas {}\nhidden {}\ntied {}\nparams {}\n",
            self.n_users,
            self.n_antennas,
            self.hidden,
            u8::from(self.tied),
            self.params.len()
        );
        for p in &self.params {
            out.push_str(&format!("{p}\n"));
        }
        out
    }

    pub fn from_record(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(RECORD_MAGIC) {
            return Err(Error::Malformed("missing header".into()));
        }
        let mut field = |name: &str| -> Result<usize> {
            let line = lines.next().ok_or_else(|| Error::Malformed(format!("missing {name}")))?;
            let value = line
                .strip_prefix(name)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::Malformed(format!("bad {name} line: {line}")))?;
            Ok(value)
        };
        let users = field("users")?;
        let antennas = field("antennas")?;
        let hidden = field("hidden")?;
        let tied = match field("tied")? {
            0 => false,
            1 => true,
            other => return Err(Error::Malformed(format!("tied flag {other}"))),
        };
        let count = field("params")?;
        let mut net = Self::zeros(users, antennas, hidden, tied)
            .map_err(|e| Error::Malformed(e.to_string()))?;
        if count != net.params.len() {
            return Err(Error::Malformed(format!(
                "expected {} parameters, header says {count}",
                net.params.len()
            )));
        }
        for (i, slot) in net.params.iter_mut().enumerate() {
            let line = lines
                .next()
                .ok_or_else(|| Error::Malformed(format!("truncated at parameter {i}")))?;
            *slot = line
                .trim()
                .parse()
                .map_err(|_| Error::Malformed(format!("parameter {i}: {line}")))?;
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(Error::Malformed("trailing data".into()));
        }
        Ok(net)
    }
}

/// Forward pass `W3 s'(x)`.
pub fn nn_forward(x: &[Complex64], net: &SignalFlowNn) -> Result<Vec<f64>> {
    Ok(net.mix(&net.hidden_outputs(x)?))
}

/// Training inputs with each user's distinct symbols enumerated once.
struct Prepared {
    uniq: Vec<Vec<(f64, f64)>>,
    ids: Vec<usize>,
    targets: Vec<f64>,
}

impl Prepared {
    fn new(net: &SignalFlowNn, inputs: &[Vec<Complex64>], targets: &[Vec<f64>]) -> Result<Self> {
        let (n, k) = (net.n_antennas, net.n_users);
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                context: "training pairs",
                expected: inputs.len(),
                actual: targets.len(),
            });
        }
        let mut maps: Vec<HashMap<(u64, u64), usize>> = vec![HashMap::new(); k];
        let mut uniq: Vec<Vec<(f64, f64)>> = vec![Vec::new(); k];
        let mut ids = Vec::with_capacity(inputs.len() * k);
        let mut flat = Vec::with_capacity(inputs.len() * 2 * n);
        for (x, t) in inputs.iter().zip(targets) {
            net.check_users(x.len())?;
            if t.len() != 2 * n {
                return Err(Error::DimensionMismatch {
                    context: "training target",
                    expected: 2 * n,
                    actual: t.len(),
                });
            }
            for (u, xu) in x.iter().enumerate() {
                let key = (xu.re.to_bits(), xu.im.to_bits());
                let next = uniq[u].len();
                let id = *maps[u].entry(key).or_insert(next);
                if id == next {
                    uniq[u].push((xu.re, xu.im));
                }
                ids.push(id);
            }
            flat.extend_from_slice(t);
        }
        Ok(Self {
            uniq,
            ids,
            targets: flat,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub validation_folds: usize,
    pub train_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 100,
            learning_rate: 0.01,
            seed: 0,
            validation_folds: 3,
            train_fraction: 0.8,
        }
    }
}

impl TrainConfig {
    fn validate(&self, samples: usize) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidParameter(format!("learning rate {}", self.learning_rate)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!("train fraction {}", self.train_fraction)));
        }
        if samples < self.batch_size {
            return Err(Error::InsufficientSamples {
                needed: self.batch_size,
                got: samples,
            });
        }
        Ok(())
    }

    fn split(&self, samples: usize) -> usize {
        ((samples as f64 * self.train_fraction).round() as usize).clamp(1, samples)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    /// Loss on the held-out tail of the pilot block; empty when nothing is
    /// held out.
    pub validation_loss: Vec<f64>,
}

impl TrainReport {
    /// Whether the per-epoch training loss never went up.
    pub fn monotone(&self) -> bool {
        self.train_loss.windows(2).all(|w| w[1] <= w[0])
    }
}

/// Mini-batch Adam on the MSE loss. The leading `train_fraction` of the
/// pilots is used for fitting and the remainder is scored every epoch.
pub fn train(
    symbols: &[Vec<Complex64>],
    received: &[Vec<Complex64>],
    cfg: &TrainConfig,
    hidden: usize,
    tied: bool,
) -> Result<(SignalFlowNn, TrainReport)> {
    cfg.validate(symbols.len())?;
    let k = symbols.first().map_or(0, Vec::len);
    let n = received.first().map_or(0, Vec::len);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let net = SignalFlowNn::random(k, n, hidden, tied, &mut rng)?;
    let split = cfg.split(symbols.len());
    fit_from(net, symbols, received, split, cfg, &mut rng)
}

fn fit_from(
    mut net: SignalFlowNn,
    symbols: &[Vec<Complex64>],
    received: &[Vec<Complex64>],
    split: usize,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(SignalFlowNn, TrainReport)> {
    let targets: Vec<Vec<f64>> = received.iter().map(|y| crate::airlink::to_real(y)).collect();
    let data = Prepared::new(&net, symbols, &targets)?;
    let mut order: Vec<usize> = (0..split).collect();
    let held_out: Vec<usize> = (split..symbols.len()).collect();
    let mut adam = Adam::new(net.params.len(), cfg.learning_rate);
    let mut grad = vec![0.0; net.params.len()];
    let mut report = TrainReport::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            net.accumulate(&data, batch, Some(&mut grad));
            if cfg.learning_rate > 0.0 {
                adam.step(&mut net.params, &grad);
            }
        }
        let train_loss = net.accumulate(&data, &(0..split).collect::<Vec<_>>(), None);
        if !train_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: train_loss,
            });
        }
        report.train_loss.push(train_loss);
        if !held_out.is_empty() {
            report.validation_loss.push(net.accumulate(&data, &held_out, None));
        }
    }
    Ok((net, report))
}

/// Held-out loss of each fold in a contiguous `folds`-way split, training a
/// fresh network on the remaining folds each time.
pub fn cross_validate(
    symbols: &[Vec<Complex64>],
    received: &[Vec<Complex64>],
    cfg: &TrainConfig,
    hidden: usize,
    tied: bool,
) -> Result<Vec<f64>> {
    let folds = cfg.validation_folds;
    if folds < 2 || folds > symbols.len() {
        return Err(Error::InvalidParameter(format!("{folds} folds for {} samples", symbols.len())));
    }
    let m = symbols.len();
    (0..folds)
        .map(|f| {
            let (lo, hi) = (f * m / folds, (f + 1) * m / folds);
            // Reorder so the held-out fold sits at the end.
            let idx: Vec<usize> = (0..lo).chain(hi..m).chain(lo..hi).collect();
            let xs: Vec<_> = idx.iter().map(|&i| symbols[i].clone()).collect();
            let ys: Vec<_> = idx.iter().map(|&i| received[i].clone()).collect();
            let fold_cfg = TrainConfig {
                seed: cfg.seed.wrapping_add(f as u64),
                ..cfg.clone()
            };
            fold_cfg.validate(m - (hi - lo))?;
            let mut rng = ChaCha8Rng::seed_from_u64(fold_cfg.seed);
            let k = symbols[0].len();
            let n = received[0].len();
            let net = SignalFlowNn::random(k, n, hidden, tied, &mut rng)?;
            let (_, report) = fit_from(net, &xs, &ys, m - (hi - lo), &fold_cfg, &mut rng)?;
            Ok(*report.validation_loss.last().expect("nonempty fold"))
        })
        .collect()
}

/// `10 log10(Σ‖pred − target‖² / Σ‖target‖²)`, floored at
/// [`NMSE_FLOOR_DB`].
pub fn nmse_db(predictions: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            context: "nmse",
            expected: targets.len(),
            actual: predictions.len(),
        });
    }
    let mut err = 0.0;
    let mut energy = 0.0;
    for (p, t) in predictions.iter().zip(targets) {
        if p.len() != t.len() {
            return Err(Error::DimensionMismatch {
                context: "nmse row",
                expected: t.len(),
                actual: p.len(),
            });
        }
        err += p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        energy += t.iter().map(|v| v * v).sum::<f64>();
    }
    if energy == 0.0 {
        return Err(Error::ZeroEnergyReference);
    }
    if err == 0.0 {
        return Ok(NMSE_FLOOR_DB);
    }
    Ok((10.0 * (err / energy).log10()).max(NMSE_FLOOR_DB))
}

/// Modelling error of the network on held-out symbol/received pairs.
pub fn model_nmse(net: &SignalFlowNn, symbols: &[Vec<Complex64>], received: &[Vec<Complex64>]) -> Result<f64> {
    let preds = symbols
        .iter()
        .map(|x| nn_forward(x, net))
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<Vec<f64>> = received.iter().map(|y| crate::airlink::to_real(y)).collect();
    nmse_db(&preds, &targets)
}
