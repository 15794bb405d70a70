//! Symbol mapping and the coded-transmission chain: Gray QAM, a punctured
//! feed-forward convolutional code with BCJR and Viterbi decoding, random
//! interleaving, and the LLR/probability conversions used by the turbo loop.
//!
//! LLRs are `ln p(bit = 0) / p(bit = 1)` throughout.

use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp, normalized_exp};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Finite stand-in for a certain bit in the BCJR branch metrics.
const LLR_CLAMP: f64 = 1e3;

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub points: Vec<Complex64>,
    /// Bit label of each point, most significant bit first.
    pub labels: Vec<u32>,
    pub bits_per_symbol: usize,
}

impl Constellation {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Bit `q` (0 = first transmitted) of point `a`'s label.
    pub fn label_bit(&self, a: usize, q: usize) -> u8 {
        ((self.labels[a] >> (self.bits_per_symbol - 1 - q)) & 1) as u8
    }

    /// Point index carrying a label.
    pub fn index_of_label(&self, label: u32) -> usize {
        self.labels
            .iter()
            .position(|&l| l == label)
            .expect("label outside constellation")
    }

    /// Maps a bit stream (MSB-first per symbol) to point indices.
    pub fn map_bits(&self, bits: &[u8]) -> Result<Vec<usize>> {
        if bits.len() % self.bits_per_symbol != 0 {
            return Err(Error::InvalidBlockLength {
                len: bits.len(),
                reason: "not a multiple of bits per symbol",
            });
        }
        Ok(bits
            .chunks(self.bits_per_symbol)
            .map(|chunk| {
                let label = chunk.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32);
                self.index_of_label(label)
            })
            .collect())
    }

    pub fn demap_bits(&self, indices: &[usize]) -> Vec<u8> {
        indices
            .iter()
            .flat_map(|&a| (0..self.bits_per_symbol).map(move |q| self.label_bit(a, q)))
            .collect()
    }

    pub fn mean_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.len() as f64
    }

    /// Variance of a uniformly drawn point.
    pub fn prior_variance(&self) -> f64 {
        let mean: Complex64 = self.points.iter().sum::<Complex64>() / self.len() as f64;
        self.points
            .iter()
            .map(|p| (p - mean).norm_sqr())
            .sum::<f64>()
            / self.len() as f64
    }
}

/// Per-dimension Gray code on four levels: 00→−3, 01→−1, 11→+1, 10→+3.
fn gray_level4(bits: u32) -> f64 {
    match bits {
        0b00 => -3.0,
        0b01 => -1.0,
        0b11 => 1.0,
        0b10 => 3.0,
        _ => unreachable!(),
    }
}

/// Unit-energy Gray 16-QAM. Point index equals its 4-bit label; the first
/// two bits select the in-phase level and the last two the quadrature level.
pub fn build_gray_qam16() -> Constellation {
    let scale = 1.0 / 10f64.sqrt();
    let labels: Vec<u32> = (0..16).collect();
    let points = labels
        .iter()
        .map(|&l| Complex64::new(gray_level4(l >> 2) * scale, gray_level4(l & 0b11) * scale))
        .collect();
    Constellation {
        points,
        labels,
        bits_per_symbol: 4,
    }
}

/// Unit-energy Gray QPSK; bit 0 → +, bit 1 → − per dimension.
pub fn build_qpsk() -> Constellation {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let sign = |b: u32| if b == 0 { s } else { -s };
    let labels: Vec<u32> = (0..4).collect();
    let points = labels
        .iter()
        .map(|&l| Complex64::new(sign(l >> 1), sign(l & 1)))
        .collect();
    Constellation {
        points,
        labels,
        bits_per_symbol: 2,
    }
}

/// Real antipodal alphabet; bit 0 → +1.
pub fn build_bpsk() -> Constellation {
    Constellation {
        points: vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
        labels: vec![0, 1],
        bits_per_symbol: 1,
    }
}

/// Nearest point; ties resolve to the lowest index.
pub fn hard_decision(xhat: Complex64, c: &Constellation) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (a, p) in c.points.iter().enumerate() {
        let d = (xhat - p).norm_sqr();
        if d < best_d {
            best_d = d;
            best = a;
        }
    }
    best
}

/// Rate-1/2 feed-forward convolutional code with periodic puncturing.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvCode {
    pub constraint_length: usize,
    /// Generator polynomials, MSB is the current input.
    pub generators: [u32; 2],
    /// `puncture[g][phase]`: whether output `g` is sent at trellis step `phase`.
    pub puncture: Vec<[bool; 2]>,
}

impl ConvCode {
    /// (23, 35)₈, constraint length 5, punctured to rate 2/3 with
    /// pattern `[1 1; 1 0]`.
    pub fn rate_two_thirds() -> Self {
        Self {
            constraint_length: 5,
            generators: [0o23, 0o35],
            puncture: vec![[true, true], [true, false]],
        }
    }

    /// The unpunctured mother code.
    pub fn mother() -> Self {
        Self {
            puncture: vec![[true, true]],
            ..Self::rate_two_thirds()
        }
    }

    pub fn memory(&self) -> usize {
        self.constraint_length - 1
    }

    pub fn n_states(&self) -> usize {
        1 << self.memory()
    }

    pub fn period(&self) -> usize {
        self.puncture.len()
    }

    fn kept(&self, step: usize, g: usize) -> bool {
        self.puncture[step % self.period()][g]
    }

    /// Trellis steps (info plus tail) for a given info length.
    pub fn steps(&self, info_len: usize) -> usize {
        info_len + self.memory()
    }

    /// Transmitted bits for a block with `info_len` information bits.
    pub fn coded_len(&self, info_len: usize) -> usize {
        (0..self.steps(info_len))
            .map(|t| (0..2).filter(|&g| self.kept(t, g)).count())
            .sum()
    }

    /// Output pair and next state for `input` leaving `state`.
    fn transition(&self, state: usize, input: u8) -> ([u8; 2], usize) {
        let reg = ((input as u32) << self.memory()) | state as u32;
        let out = [
            ((reg & self.generators[0]).count_ones() & 1) as u8,
            ((reg & self.generators[1]).count_ones() & 1) as u8,
        ];
        (out, (reg >> 1) as usize)
    }

    fn check_info_len(&self, info_len: usize) -> Result<()> {
        if self.steps(info_len) % self.period() != 0 {
            return Err(Error::InvalidBlockLength {
                len: info_len,
                reason: "info plus tail must fill whole puncturing periods",
            });
        }
        Ok(())
    }

    /// Unpunctured encoder output with zero tail, as `(c1, c2)` per step.
    pub fn encode_unpunctured(&self, info: &[u8]) -> Vec<[u8; 2]> {
        let mut state = 0;
        info.iter()
            .copied()
            .chain(std::iter::repeat(0).take(self.memory()))
            .map(|u| {
                let (out, next) = self.transition(state, u);
                state = next;
                out
            })
            .collect()
    }

    /// Punctured, terminated codeword.
    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>> {
        self.check_info_len(info.len())?;
        if info.iter().any(|&b| b > 1) {
            return Err(Error::InvalidParameter("info bits must be 0 or 1".into()));
        }
        let mut out = Vec::with_capacity(self.coded_len(info.len()));
        for (t, pair) in self.encode_unpunctured(info).iter().enumerate() {
            for g in 0..2 {
                if self.kept(t, g) {
                    out.push(pair[g]);
                }
            }
        }
        Ok(out)
    }

    /// Spreads a punctured stream back onto the trellis, filling punctured
    /// slots with `fill`.
    pub fn depuncture<T: Copy>(&self, stream: &[T], steps: usize, fill: T) -> Result<Vec<[T; 2]>> {
        let mut it = stream.iter();
        let mut out = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut pair = [fill; 2];
            for (g, slot) in pair.iter_mut().enumerate() {
                if self.kept(t, g) {
                    *slot = *it.next().ok_or(Error::DimensionMismatch {
                        context: "depuncture",
                        expected: self.coded_len(steps - self.memory()),
                        actual: stream.len(),
                    })?;
                }
            }
            out.push(pair);
        }
        if it.next().is_some() {
            return Err(Error::DimensionMismatch {
                context: "depuncture",
                expected: self.coded_len(steps - self.memory()),
                actual: stream.len(),
            });
        }
        Ok(out)
    }

    fn puncture_pairs<T: Copy>(&self, pairs: &[[T; 2]]) -> Vec<T> {
        let mut out = Vec::new();
        for (t, pair) in pairs.iter().enumerate() {
            for g in 0..2 {
                if self.kept(t, g) {
                    out.push(pair[g]);
                }
            }
        }
        out
    }

    fn info_len_for(&self, coded: usize) -> Result<usize> {
        // coded_len is monotone in the info length; search the matching one.
        let per_period: usize = self.puncture.iter().map(|p| p.iter().filter(|b| **b).count()).sum();
        if coded % per_period != 0 {
            return Err(Error::InvalidBlockLength {
                len: coded,
                reason: "coded length is not a whole number of puncturing periods",
            });
        }
        let steps = coded / per_period * self.period();
        steps
            .checked_sub(self.memory())
            .ok_or(Error::InvalidBlockLength {
                len: coded,
                reason: "shorter than the code tail",
            })
    }
}

/// Output of [`bcjr_decode`].
#[derive(Debug, Clone, PartialEq)]
pub struct BcjrOutput {
    /// Extrinsic LLRs aligned to the transmitted (punctured) coded bits.
    pub extrinsic: Vec<f64>,
    /// A-posteriori LLRs of the information bits (tail excluded).
    pub info_posterior: Vec<f64>,
    /// A-posteriori LLRs of the transmitted coded bits.
    pub coded_posterior: Vec<f64>,
}

/// Log-domain forward-backward decoding on the terminated trellis.
///
/// `channel_llrs` and `apriori_llrs` are both aligned to the punctured
/// stream; punctured trellis positions enter with LLR 0. The extrinsic
/// output is `posterior − channel − apriori` per transmitted bit.
pub fn bcjr_decode(channel_llrs: &[f64], apriori_llrs: &[f64], code: &ConvCode) -> Result<BcjrOutput> {
    if channel_llrs.len() != apriori_llrs.len() {
        return Err(Error::DimensionMismatch {
            context: "bcjr_decode apriori",
            expected: channel_llrs.len(),
            actual: apriori_llrs.len(),
        });
    }
    let info_len = code.info_len_for(channel_llrs.len())?;
    let steps = code.steps(info_len);
    let combined: Vec<f64> = channel_llrs
        .iter()
        .zip(apriori_llrs)
        .map(|(a, b)| (a + b).clamp(-LLR_CLAMP, LLR_CLAMP))
        .collect();
    let llr = code.depuncture(&combined, steps, 0.0)?;
    let ns = code.n_states();
    let trans: Vec<[([u8; 2], usize); 2]> = (0..ns)
        .map(|s| [code.transition(s, 0), code.transition(s, 1)])
        .collect();
    let gamma = |t: usize, out: [u8; 2]| -> f64 {
        (0..2)
            .map(|g| if out[g] == 0 { 0.5 * llr[t][g] } else { -0.5 * llr[t][g] })
            .sum()
    };

    let ninf = f64::NEG_INFINITY;
    let mut alpha = vec![vec![ninf; ns]; steps + 1];
    alpha[0][0] = 0.0;
    for t in 0..steps {
        let (cur, next) = alpha.split_at_mut(t + 1);
        let cur = &cur[t];
        let next = &mut next[0];
        for s in 0..ns {
            if cur[s] == ninf {
                continue;
            }
            for &(out, ns2) in &trans[s] {
                next[ns2] = log_sum_exp(next[ns2], cur[s] + gamma(t, out));
            }
        }
        let m = next.iter().copied().fold(ninf, f64::max);
        for v in next.iter_mut() {
            *v -= m;
        }
    }
    let mut beta = vec![vec![ninf; ns]; steps + 1];
    beta[steps][0] = 0.0;
    for t in (0..steps).rev() {
        for s in 0..ns {
            let mut acc = ninf;
            for &(out, ns2) in &trans[s] {
                acc = log_sum_exp(acc, gamma(t, out) + beta[t + 1][ns2]);
            }
            beta[t][s] = acc;
        }
        let m = beta[t].iter().copied().fold(ninf, f64::max);
        if m > ninf {
            for v in beta[t].iter_mut() {
                *v -= m;
            }
        }
    }

    let mut coded_post = Vec::with_capacity(steps);
    let mut info_post = Vec::with_capacity(info_len);
    for t in 0..steps {
        let mut num = [ninf; 2];
        let mut den = [ninf; 2];
        let mut u0 = ninf;
        let mut u1 = ninf;
        for s in 0..ns {
            if alpha[t][s] == ninf {
                continue;
            }
            for (input, &(out, ns2)) in trans[s].iter().enumerate() {
                let m = alpha[t][s] + gamma(t, out) + beta[t + 1][ns2];
                for g in 0..2 {
                    if out[g] == 0 {
                        num[g] = log_sum_exp(num[g], m);
                    } else {
                        den[g] = log_sum_exp(den[g], m);
                    }
                }
                if input == 0 {
                    u0 = log_sum_exp(u0, m);
                } else {
                    u1 = log_sum_exp(u1, m);
                }
            }
        }
        coded_post.push([num[0] - den[0], num[1] - den[1]]);
        if t < info_len {
            info_post.push(u0 - u1);
        }
    }
    let coded_posterior = code.puncture_pairs(&coded_post);
    let extrinsic = coded_posterior
        .iter()
        .zip(&combined)
        .map(|(p, a)| p - a)
        .collect();
    Ok(BcjrOutput {
        extrinsic,
        info_posterior: info_post,
        coded_posterior,
    })
}

/// Hard-input maximum-likelihood sequence decoding (Hamming metric) on the
/// same terminated trellis. Punctured slots carry no metric.
pub fn viterbi_decode_hard(coded: &[u8], code: &ConvCode) -> Result<Vec<u8>> {
    let info_len = code.info_len_for(coded.len())?;
    let steps = code.steps(info_len);
    let rx = code.depuncture(
        &coded.iter().map(|&b| Some(b)).collect::<Vec<_>>(),
        steps,
        None,
    )?;
    let ns = code.n_states();
    let big = u32::MAX / 2;
    let mut metric = vec![big; ns];
    metric[0] = 0;
    let mut survivors: Vec<Vec<(usize, u8)>> = Vec::with_capacity(steps);
    for pair in rx.iter() {
        let mut next = vec![big; ns];
        let mut back = vec![(0usize, 0u8); ns];
        for s in 0..ns {
            if metric[s] >= big {
                continue;
            }
            for input in 0..2u8 {
                let (out, s2) = code.transition(s, input);
                let cost: u32 = (0..2)
                    .map(|g| match pair[g] {
                        Some(b) if b != out[g] => 1,
                        _ => 0,
                    })
                    .sum();
                let m = metric[s] + cost;
                if m < next[s2] {
                    next[s2] = m;
                    back[s2] = (s, input);
                }
            }
        }
        metric = next;
        survivors.push(back);
    }
    let mut state = 0;
    let mut decided = vec![0u8; steps];
    for t in (0..steps).rev() {
        let (prev, input) = survivors[t][state];
        decided[t] = input;
        state = prev;
    }
    decided.truncate(info_len);
    Ok(decided)
}

/// Seeded random permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct Interleaver {
    pub permutation: Vec<usize>,
    pub seed: u64,
}

impl Interleaver {
    pub fn new(len: usize, seed: u64) -> Self {
        let mut permutation: Vec<usize> = (0..len).collect();
        permutation.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Self { permutation, seed }
    }

    pub fn identity(len: usize) -> Self {
        Self {
            permutation: (0..len).collect(),
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutation.is_empty()
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::DimensionMismatch {
                context: "interleaver",
                expected: self.len(),
                actual: len,
            });
        }
        Ok(())
    }

    /// `out[i] = block[π(i)]`.
    pub fn interleave<T: Copy>(&self, block: &[T]) -> Result<Vec<T>> {
        self.check(block.len())?;
        Ok(self.permutation.iter().map(|&p| block[p]).collect())
    }

    pub fn deinterleave<T: Copy>(&self, block: &[T]) -> Result<Vec<T>> {
        self.check(block.len())?;
        let mut out = block.to_vec();
        for (i, &p) in self.permutation.iter().enumerate() {
            out[p] = block[i];
        }
        Ok(out)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x == f64::INFINITY {
        return f64::INFINITY;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `(ln p(bit = 0), ln p(bit = 1))` from an LLR.
pub fn bit_log_probs(llr: f64) -> (f64, f64) {
    (-softplus(-llr), -softplus(llr))
}

/// Symbol prior tables from bit LLRs; one row per symbol.
pub fn priors_from_llrs(llrs: &[f64], c: &Constellation) -> Result<Vec<Vec<f64>>> {
    let bps = c.bits_per_symbol;
    if llrs.len() % bps != 0 {
        return Err(Error::InvalidBlockLength {
            len: llrs.len(),
            reason: "LLR count not a multiple of bits per symbol",
        });
    }
    llrs.chunks(bps)
        .map(|chunk| {
            let logs: Vec<(f64, f64)> = chunk.iter().map(|&l| bit_log_probs(l)).collect();
            let lw: Vec<f64> = (0..c.len())
                .map(|a| {
                    (0..bps)
                        .map(|q| if c.label_bit(a, q) == 0 { logs[q].0 } else { logs[q].1 })
                        .sum()
                })
                .collect();
            normalized_exp(&lw)
        })
        .collect()
}

/// Per-bit marginals of a symbol probability table, as LLRs.
pub fn bit_llrs_from_probs(probs: &[f64], c: &Constellation) -> Vec<f64> {
    (0..c.bits_per_symbol)
        .map(|q| {
            let (mut p0, mut p1) = (0.0, 0.0);
            for (a, p) in probs.iter().enumerate() {
                if c.label_bit(a, q) == 0 {
                    p0 += p;
                } else {
                    p1 += p;
                }
            }
            p0.ln() - p1.ln()
        })
        .collect()
}

/// Extrinsic coded-bit LLRs of one symbol from a Gaussian extrinsic
/// observation `N(m_e, v_e)` and a-priori bit LLRs. The `q`-th output
/// excludes the `q`-th a-priori term.
pub fn extrinsic_bit_llrs(
    m_e: Complex64,
    v_e: f64,
    apriori_llrs: &[f64],
    c: &Constellation,
) -> Result<Vec<f64>> {
    if !(v_e > 0.0) {
        return Err(Error::NonPositiveVariance(v_e));
    }
    let bps = c.bits_per_symbol;
    if apriori_llrs.len() != bps {
        return Err(Error::DimensionMismatch {
            context: "extrinsic_bit_llrs apriori",
            expected: bps,
            actual: apriori_llrs.len(),
        });
    }
    let logs: Vec<(f64, f64)> = apriori_llrs.iter().map(|&l| bit_log_probs(l)).collect();
    let metric: Vec<f64> = c.points.iter().map(|p| -(p - m_e).norm_sqr() / v_e).collect();
    let bit_log = |a: usize, q: usize| if c.label_bit(a, q) == 0 { logs[q].0 } else { logs[q].1 };
    Ok((0..bps)
        .map(|q| {
            let mut num = f64::NEG_INFINITY;
            let mut den = f64::NEG_INFINITY;
            for a in 0..c.len() {
                let w = metric[a]
                    + (0..bps)
                        .filter(|&qq| qq != q)
                        .map(|qq| bit_log(a, qq))
                        .sum::<f64>();
                if c.label_bit(a, q) == 0 {
                    num = log_sum_exp(num, w);
                } else {
                    den = log_sum_exp(den, w);
                }
            }
            num - den
        })
        .collect())
}
