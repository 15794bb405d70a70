//! Comparison detectors. The direct ones map received samples straight to
//! symbols; zero forcing uses the known channel instead.

use crate::airlink::{to_real, to_real_matrix, MimoChannel};
use crate::error::{Error, Result};
use crate::modem::{hard_decision, Constellation};
use crate::numerics::{LsReport, PivotedQr, RealMatrix};
use crate::optim::Adam;
use crate::signal_flow_nn::TrainConfig;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Per-output memory polynomial in the real and imaginary parts of each
/// input, without cross terms:
///
/// `Re ŷ_j(m) = Σ_{p,l,n} a_{p,l,n} Re{u_n(m−l)}^p + b_{p,l,n} Im{u_n(m−l)}^p`
///
/// and likewise for `Im ŷ_j`. Coefficient rows are ordered by `p = 1..P`,
/// then lag `l = 0..L`, then input `n`, with the `Re` and `Im` monomials
/// adjacent.
#[derive(Debug, Clone, PartialEq)]
pub struct RmpModel {
    pub order: usize,
    pub memory: usize,
    pub n_inputs: usize,
    /// `coeffs[2j]` drives `Re ŷ_j`, `coeffs[2j + 1]` drives `Im ŷ_j`.
    pub coeffs: Vec<Vec<f64>>,
    pub report: LsReport,
}

impl RmpModel {
    pub fn n_features(order: usize, memory: usize, n_inputs: usize) -> usize {
        2 * order * (memory + 1) * n_inputs
    }

    fn features(&self, inputs: &[Vec<Complex64>], m: usize) -> Vec<f64> {
        rmp_features(inputs, m, self.order, self.memory, self.n_inputs)
    }

    /// Least-squares fit from `inputs` to `outputs`, using every time index
    /// with a full lag window. Rank deficiency is tolerated and resolved in
    /// the minimum-norm sense.
    pub fn fit(inputs: &[Vec<Complex64>], outputs: &[Vec<Complex64>], order: usize, memory: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidParameter("polynomial order must be positive".into()));
        }
        if inputs.len() != outputs.len() {
            return Err(Error::DimensionMismatch {
                context: "rmp training pairs",
                expected: inputs.len(),
                actual: outputs.len(),
            });
        }
        let n_inputs = inputs.first().map_or(0, Vec::len);
        let n_outputs = outputs.first().map_or(0, Vec::len);
        let nf = Self::n_features(order, memory, n_inputs);
        let rows = inputs.len().saturating_sub(memory);
        if rows <= nf {
            return Err(Error::InsufficientSamples {
                needed: nf + 1 + memory,
                got: inputs.len(),
            });
        }
        let mut design = Vec::with_capacity(rows * nf);
        for m in memory..inputs.len() {
            design.extend(rmp_features(inputs, m, order, memory, n_inputs));
        }
        let a = RealMatrix::new(rows, nf, design)?;
        let qr = PivotedQr::factor(&a, None)?;
        let mut coeffs = Vec::with_capacity(2 * n_outputs);
        for j in 0..n_outputs {
            let re: Vec<f64> = outputs[memory..].iter().map(|o| o[j].re).collect();
            let im: Vec<f64> = outputs[memory..].iter().map(|o| o[j].im).collect();
            coeffs.push(qr.solve(&re)?);
            coeffs.push(qr.solve(&im)?);
        }
        Ok(Self {
            order,
            memory,
            n_inputs,
            coeffs,
            report: qr.report(),
        })
    }

    /// Output at time `m`; lags before the start of the block read as zero.
    pub fn predict(&self, inputs: &[Vec<Complex64>], m: usize) -> Vec<Complex64> {
        let f = self.features(inputs, m);
        self.coeffs
            .chunks(2)
            .map(|c| {
                Complex64::new(
                    c[0].iter().zip(&f).map(|(a, b)| a * b).sum(),
                    c[1].iter().zip(&f).map(|(a, b)| a * b).sum(),
                )
            })
            .collect()
    }

    pub fn predict_all(&self, inputs: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
        (0..inputs.len()).map(|m| self.predict(inputs, m)).collect()
    }

    /// Symbol estimates and hard decisions at time `m` when the model maps
    /// received samples to symbols.
    pub fn detect(&self, received: &[Vec<Complex64>], m: usize, c: &Constellation) -> (Vec<Complex64>, Vec<usize>) {
        let x = self.predict(received, m);
        let d = x.iter().map(|v| hard_decision(*v, c)).collect();
        (x, d)
    }
}

fn rmp_features(inputs: &[Vec<Complex64>], m: usize, order: usize, memory: usize, n_inputs: usize) -> Vec<f64> {
    let mut f = Vec::with_capacity(RmpModel::n_features(order, memory, n_inputs));
    for p in 1..=order as i32 {
        for l in 0..=memory {
            for n in 0..n_inputs {
                let u = if m >= l { inputs[m - l][n] } else { Complex64::new(0.0, 0.0) };
                f.push(u.re.powi(p));
                f.push(u.im.powi(p));
            }
        }
    }
    f
}

/// Fits a direct detector from received pilots to sent symbols.
pub fn rmp_fit(received: &[Vec<Complex64>], sent: &[Vec<Complex64>], order: usize, memory: usize) -> Result<RmpModel> {
    RmpModel::fit(received, sent, order, memory)
}

/// Fully connected network with tanh hidden layers (30 and 40 wide by default),
/// mapping real-stacked received samples to real-stacked symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectDnn {
    /// Layer widths including input and output.
    pub widths: Vec<usize>,
    /// Per layer: weights (`out × in`, row-major) followed by biases.
    pub params: Vec<f64>,
}

impl DirectDnn {
    pub const HIDDEN: [usize; 2] = [30, 40];

    pub fn random<R: Rng + ?Sized>(n_antennas: usize, n_users: usize, rng: &mut R) -> Self {
        Self::with_widths(
            vec![2 * n_antennas, Self::HIDDEN[0], Self::HIDDEN[1], 2 * n_users],
            rng,
        )
    }

    pub fn with_widths<R: Rng + ?Sized>(widths: Vec<usize>, rng: &mut R) -> Self {
        let mut params = Vec::new();
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-a..a)));
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Self { widths, params }
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut offs = vec![0];
        for w in self.widths.windows(2) {
            offs.push(offs.last().unwrap() + w[0] * w[1] + w[1]);
        }
        offs
    }

    /// Activations of every layer, input first.
    fn activations(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let offs = self.layer_offsets();
        let n_layers = self.widths.len() - 1;
        let mut acts = vec![input.to_vec()];
        for layer in 0..n_layers {
            let (fi, fo) = (self.widths[layer], self.widths[layer + 1]);
            let w = &self.params[offs[layer]..offs[layer] + fi * fo];
            let b = &self.params[offs[layer] + fi * fo..offs[layer + 1]];
            let prev = acts.last().unwrap();
            let out: Vec<f64> = (0..fo)
                .map(|o| {
                    let z = b[o] + w[o * fi..(o + 1) * fi].iter().zip(prev).map(|(a, x)| a * x).sum::<f64>();
                    if layer + 1 < n_layers {
                        z.tanh()
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.activations(input).pop().unwrap()
    }

    /// `(1 / D)(1 / M) Σ‖out − target‖²` with `D` the output width, and its
    /// gradient.
    pub fn loss_and_gradient(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> (f64, Vec<f64>) {
        let idx: Vec<usize> = (0..inputs.len()).collect();
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.accumulate(inputs, targets, &idx, Some(&mut grad));
        (loss, grad)
    }

    fn accumulate(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>], batch: &[usize], mut grad: Option<&mut Vec<f64>>) -> f64 {
        let offs = self.layer_offsets();
        let n_layers = self.widths.len() - 1;
        let d_out = *self.widths.last().unwrap() as f64;
        let scale = 2.0 / (d_out * batch.len() as f64);
        let mut sse = 0.0;
        for &m in batch {
            let acts = self.activations(&inputs[m]);
            let out = &acts[n_layers];
            let mut delta: Vec<f64> = out.iter().zip(&targets[m]).map(|(o, t)| o - t).collect();
            sse += delta.iter().map(|e| e * e).sum::<f64>();
            let Some(grad) = grad.as_deref_mut() else {
                continue;
            };
            for d in &mut delta {
                *d *= scale;
            }
            for layer in (0..n_layers).rev() {
                let (fi, fo) = (self.widths[layer], self.widths[layer + 1]);
                let prev = &acts[layer];
                let w_off = offs[layer];
                let b_off = w_off + fi * fo;
                for o in 0..fo {
                    for i in 0..fi {
                        grad[w_off + o * fi + i] += delta[o] * prev[i];
                    }
                    grad[b_off + o] += delta[o];
                }
                if layer > 0 {
                    let mut back = vec![0.0; fi];
                    for o in 0..fo {
                        for (i, bk) in back.iter_mut().enumerate() {
                            *bk += self.params[w_off + o * fi + i] * delta[o];
                        }
                    }
                    // The previous layer is a tanh output.
                    for (bk, a) in back.iter_mut().zip(prev) {
                        *bk *= 1.0 - a * a;
                    }
                    delta = back;
                }
            }
        }
        sse / (d_out * batch.len() as f64)
    }
}

/// Trains a direct detector with the given hidden widths on pilots by
/// mini-batch Adam. The leading `train_fraction` of the block is used for
/// fitting.
pub fn ddnn_train(
    received: &[Vec<Complex64>],
    sent: &[Vec<Complex64>],
    hidden: &[usize],
    cfg: &TrainConfig,
) -> Result<DirectDnn> {
    if received.len() != sent.len() {
        return Err(Error::DimensionMismatch {
            context: "ddnn training pairs",
            expected: received.len(),
            actual: sent.len(),
        });
    }
    if received.len() < cfg.batch_size || cfg.batch_size == 0 {
        return Err(Error::InsufficientSamples {
            needed: cfg.batch_size.max(1),
            got: received.len(),
        });
    }
    let n = received[0].len();
    let k = sent[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let widths: Vec<usize> = std::iter::once(2 * n).chain(hidden.iter().copied()).chain([2 * k]).collect();
    let mut net = DirectDnn::with_widths(widths, &mut rng);
    let inputs: Vec<Vec<f64>> = received.iter().map(|y| to_real(y)).collect();
    let targets: Vec<Vec<f64>> = sent.iter().map(|x| to_real(x)).collect();
    let split = ((received.len() as f64 * cfg.train_fraction).round() as usize).clamp(1, received.len());
    let mut order: Vec<usize> = (0..split).collect();
    let mut adam = Adam::new(net.params.len(), cfg.learning_rate);
    let mut grad = vec![0.0; net.params.len()];
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sse = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            sse += net.accumulate(&inputs, &targets, batch, Some(&mut grad)) * batch.len() as f64;
            if cfg.learning_rate > 0.0 {
                adam.step(&mut net.params, &grad);
            }
        }
        let loss = sse / split as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
    }
    Ok(net)
}

/// Forward pass plus per-user hard decisions.
pub fn ddnn_detect(y: &[Complex64], net: &DirectDnn, c: &Constellation) -> (Vec<Complex64>, Vec<usize>) {
    let out = net.forward(&to_real(y));
    let k = out.len() / 2;
    let x: Vec<Complex64> = (0..k).map(|u| Complex64::new(out[u], out[k + u])).collect();
    let d = x.iter().map(|v| hard_decision(*v, c)).collect();
    (x, d)
}

/// Least-squares inversion of a known channel.
#[derive(Debug, Clone)]
pub struct ZfDetector {
    qr: PivotedQr,
    n_users: usize,
}

impl ZfDetector {
    pub fn new(h: &MimoChannel) -> Result<Self> {
        let qr = PivotedQr::factor(&to_real_matrix(&h.h), None)?;
        let cols = 2 * h.n_users();
        if qr.rank() < cols {
            return Err(Error::RankDeficient { rank: qr.rank(), cols });
        }
        Ok(Self {
            qr,
            n_users: h.n_users(),
        })
    }

    pub fn detect(&self, y: &[Complex64], c: &Constellation) -> Result<(Vec<Complex64>, Vec<usize>)> {
        let s = self.qr.solve(&to_real(y))?;
        let k = self.n_users;
        let x: Vec<Complex64> = (0..k).map(|u| Complex64::new(s[u], s[k + u])).collect();
        let d = x.iter().map(|v| hard_decision(*v, c)).collect();
        Ok((x, d))
    }
}

/// `x̂ = (HᴴH)⁻¹Hᴴy` with hard decisions.
pub fn zf_detect(y: &[Complex64], h: &MimoChannel, c: &Constellation) -> Result<(Vec<Complex64>, Vec<usize>)> {
    ZfDetector::new(h)?.detect(y, c)
}
