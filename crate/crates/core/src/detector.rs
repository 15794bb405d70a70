//! Message-passing symbol detection on a trained signal-flow network.
//!
//! The mixing layer is diagonalized once per network with an SVD,
//! `W3 = U·Φ`, and each received vector is rotated into `r = Uᵀ y'`. The
//! detector then alternates unitary-AMP updates on `r = Φ s' + noise` (with
//! the noise precision learned on the fly) with Gaussian messages through a
//! first-order expansion of every sub-network at the current symbol
//! estimate, and discrete posteriors over the constellation.

use crate::error::{Error, Result};
use crate::modem::Constellation;
use crate::numerics::{gaussian_product, normalized_exp, svd, RealMatrix};
use crate::signal_flow_nn::{SignalFlowNn, SubNn};
use num_complex::Complex64;
use std::fmt;

pub const EPS_FLOOR: f64 = 1e-12;
pub const EPS_CAP: f64 = 1e12;
/// Smallest slope magnitude used when dividing by a sub-network derivative.
pub const SLOPE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryModel {
    /// `diag(s)·V`, `2N × 2K`; rows past the rank are zero.
    pub phi: RealMatrix,
    /// Left rotation, `2N × 2N`.
    pub u: RealMatrix,
    /// Row energies of `phi`.
    pub lambda_vec: Vec<f64>,
}

pub fn prepare_unitary_model(net: &SignalFlowNn) -> Result<UnitaryModel> {
    let f = svd(&net.w3())?;
    let phi = f.scaled_right();
    let lambda_vec = (0..phi.rows())
        .map(|i| f.singular_values.get(i).map_or(0.0, |s| s * s))
        .collect();
    Ok(UnitaryModel {
        phi,
        u: f.u,
        lambda_vec,
    })
}

/// The untransformed model: `U = I`, `Φ = W3`.
pub fn plain_model(net: &SignalFlowNn) -> UnitaryModel {
    let phi = net.w3();
    UnitaryModel {
        u: RealMatrix::identity(phi.rows()),
        lambda_vec: phi.row_energies(),
        phi,
    }
}

pub fn transform_observation(y_real: &[f64], um: &UnitaryModel) -> Result<Vec<f64>> {
    if y_real.len() != um.u.rows() {
        return Err(Error::DimensionMismatch {
            context: "observation",
            expected: um.u.rows(),
            actual: y_real.len(),
        });
    }
    Ok(um.u.matvec_transposed(y_real))
}

/// Detector internals for one received vector. Vectors over sub-network
/// outputs are indexed `l·K + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorState {
    pub tau_s: f64,
    pub s_hat: Vec<f64>,
    pub c: Vec<f64>,
    pub p: Vec<f64>,
    pub tau_p: Vec<f64>,
    pub tau_z: Vec<f64>,
    pub z_hat: Vec<f64>,
    pub eps_hat: f64,
    pub tau_c: Vec<f64>,
    pub tau_q: f64,
    pub q: Vec<f64>,
    pub x_hat: Vec<Complex64>,
    pub tau_x: Vec<f64>,
    pub q_tilde: Vec<f64>,
    pub eta: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Combined message means and variances per target component, `l'·K + k`.
    pub psi: Vec<f64>,
    pub tau_psi: Vec<f64>,
    pub psi_tilde: Vec<Complex64>,
    pub tau_psi_tilde: Vec<f64>,
    pub probs: Vec<Vec<f64>>,
}

impl DetectorState {
    /// `τ_s = 1`, `ŝ = 0`, `c = 0`, `x̂ = 0`, `ε̂ = 1`, with `τ_x` set to the
    /// prior variance and the sub-networks expanded at zero.
    pub fn initial(net: &SignalFlowNn, n_obs: usize, prior_variance: f64) -> Self {
        let k = net.n_users();
        let mut st = Self {
            tau_s: 1.0,
            s_hat: vec![0.0; 2 * k],
            c: vec![0.0; n_obs],
            p: vec![0.0; n_obs],
            tau_p: vec![0.0; n_obs],
            tau_z: vec![0.0; n_obs],
            z_hat: vec![0.0; n_obs],
            eps_hat: 1.0,
            tau_c: vec![0.0; n_obs],
            tau_q: 0.0,
            q: vec![0.0; 2 * k],
            x_hat: vec![Complex64::new(0.0, 0.0); k],
            tau_x: vec![prior_variance; k],
            q_tilde: vec![0.0; 2 * k],
            eta: vec![0.0; 2 * k],
            gamma: vec![0.0; 2 * k],
            psi: vec![0.0; 2 * k],
            tau_psi: vec![f64::INFINITY; 2 * k],
            psi_tilde: vec![Complex64::new(0.0, 0.0); k],
            tau_psi_tilde: vec![f64::INFINITY; k],
            probs: Vec::new(),
        };
        relinearize(&mut st, net);
        st
    }

    pub fn n_users(&self) -> usize {
        self.x_hat.len()
    }
}

/// Output-side UAMP step and noise-precision update.
pub fn uamp_output_step(st: &mut DetectorState, um: &UnitaryModel, r: &[f64]) {
    let phi_s = um.phi.matvec(&st.s_hat);
    let eps = st.eps_hat;
    let mut resid = 0.0;
    let mut var_sum = 0.0;
    for i in 0..r.len() {
        let tp = st.tau_s * um.lambda_vec[i];
        let p = phi_s[i] - tp * st.c[i];
        let tz = tp / (1.0 + eps * tp);
        let z = (eps * tp * r[i] + p) / (1.0 + eps * tp);
        st.tau_p[i] = tp;
        st.p[i] = p;
        st.tau_z[i] = tz;
        st.z_hat[i] = z;
        resid += (r[i] - z) * (r[i] - z);
        var_sum += tz;
    }
    let denom = resid + var_sum;
    st.eps_hat = if denom > 0.0 {
        (r.len() as f64 / denom).clamp(EPS_FLOOR, EPS_CAP)
    } else {
        EPS_CAP
    };
}

/// Input-side UAMP step.
pub fn uamp_input_step(st: &mut DetectorState, um: &UnitaryModel, r: &[f64]) {
    let inv_eps = 1.0 / st.eps_hat;
    let mut acc = 0.0;
    for i in 0..r.len() {
        st.tau_c[i] = 1.0 / (st.tau_p[i] + inv_eps);
        st.c[i] = st.tau_c[i] * (r[i] - st.p[i]);
        acc += um.lambda_vec[i] * st.tau_c[i];
    }
    st.tau_q = st.s_hat.len() as f64 / acc;
    let back = um.phi.matvec_transposed(&st.c);
    for (j, q) in st.q.iter_mut().enumerate() {
        *q = st.s_hat[j] + st.tau_q * back[j];
    }
}

/// Value and input slopes of a sub-network at `x`.
pub fn linearize_subnn(x: (f64, f64), p: SubNn<'_>) -> (f64, f64, f64) {
    p.linearize(x)
}

fn relinearize(st: &mut DetectorState, net: &SignalFlowNn) {
    let k = st.n_users();
    for l in 0..2 {
        for u in 0..k {
            let x = st.x_hat[u];
            let (q, eta, gamma) = linearize_subnn((x.re, x.im), net.subnn(l, u));
            st.q_tilde[l * k + u] = q;
            st.eta[l * k + u] = eta;
            st.gamma[l * k + u] = gamma;
        }
    }
}

fn clamp_slope(v: f64) -> f64 {
    if v.abs() >= SLOPE_FLOOR {
        v
    } else if v < 0.0 {
        -SLOPE_FLOOR
    } else {
        SLOPE_FLOOR
    }
}

/// Per-user Gaussian messages towards the symbols. Returns
/// `(ψ̃_k, τ_ψ̃_k)` and stores the per-component combination in the state.
pub fn messages_to_symbols(st: &mut DetectorState) -> Result<Vec<(Complex64, f64)>> {
    let k = st.n_users();
    let mut out = Vec::with_capacity(k);
    for u in 0..k {
        let x1 = st.x_hat[u].re;
        let x2 = st.x_hat[u].im;
        let tx1 = 0.5 * st.tau_x[u];
        let tx2 = 0.5 * st.tau_x[u];
        let mut comb = [(0.0, f64::INFINITY); 2];
        for l in 0..2 {
            let j = l * k + u;
            let eta = clamp_slope(st.eta[j]);
            let gamma = clamp_slope(st.gamma[j]);
            let innov = st.q[j] - st.q_tilde[j];
            let to1 = (innov / eta + x1, (st.tau_q + gamma * gamma * tx2) / (eta * eta));
            let to2 = (innov / gamma + x2, (st.tau_q + eta * eta * tx1) / (gamma * gamma));
            for (target, msg) in [to1, to2].into_iter().enumerate() {
                let (m, v) = comb[target];
                comb[target] = gaussian_product(m, v, msg.0, msg.1)?;
            }
        }
        for (target, (m, v)) in comb.iter().enumerate() {
            st.psi[target * k + u] = *m;
            st.tau_psi[target * k + u] = *v;
        }
        let psi_tilde = Complex64::new(comb[0].0, comb[1].0);
        let tau = comb[0].1 + comb[1].1;
        st.psi_tilde[u] = psi_tilde;
        st.tau_psi_tilde[u] = tau;
        out.push((psi_tilde, tau));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBelief {
    pub probs: Vec<f64>,
    pub posterior_mean: Complex64,
    pub posterior_var: f64,
    pub extrinsic_mean: Complex64,
    pub extrinsic_var: f64,
}

impl SymbolBelief {
    /// Most probable constellation index; ties go to the lowest index.
    pub fn decision(&self) -> usize {
        let mut best = 0;
        for (a, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = a;
            }
        }
        best
    }
}

/// `μ_a ∝ prior_a · exp(−|λ_a − ψ̃|² / τ_ψ̃)`.
///
/// An infinite `tau` returns the prior unchanged.
pub fn symbol_posterior(psi_tilde: Complex64, tau: f64, prior: &[f64], c: &Constellation) -> Result<SymbolBelief> {
    if prior.len() != c.len() {
        return Err(Error::DimensionMismatch {
            context: "symbol prior",
            expected: c.len(),
            actual: prior.len(),
        });
    }
    if !(tau > 0.0) {
        return Err(Error::NonPositiveVariance(tau));
    }
    let logw: Vec<f64> = c
        .points
        .iter()
        .zip(prior)
        .map(|(pt, pr)| {
            let lp = pr.ln();
            if tau.is_infinite() {
                lp
            } else {
                lp - (pt - psi_tilde).norm_sqr() / tau
            }
        })
        .collect();
    let probs = normalized_exp(&logw)?;
    let mean: Complex64 = c.points.iter().zip(&probs).map(|(pt, m)| pt * m).sum();
    let var = c
        .points
        .iter()
        .zip(&probs)
        .map(|(pt, m)| m * (pt - mean).norm_sqr())
        .sum();
    Ok(SymbolBelief {
        probs,
        posterior_mean: mean,
        posterior_var: var,
        extrinsic_mean: psi_tilde,
        extrinsic_var: tau,
    })
}

/// Expands the sub-networks at the new estimate and refreshes
/// the Gaussian belief on `s'`. `damping = 1` applies the update fully.
pub fn refresh_s_beliefs(st: &mut DetectorState, net: &SignalFlowNn, damping: f64) {
    relinearize(st, net);
    let k = st.n_users();
    let mut total = 0.0;
    for l in 0..2 {
        for u in 0..k {
            let j = l * k + u;
            let half = 0.5 * st.tau_x[u];
            total += st.eta[j] * st.eta[j] * half + st.gamma[j] * st.gamma[j] * half;
            st.s_hat[j] = damping * st.q_tilde[j] + (1.0 - damping) * st.s_hat[j];
        }
    }
    st.tau_s = damping * total / (2 * k) as f64 + (1.0 - damping) * st.tau_s;
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub damping: f64,
    /// Run exactly one iteration, as in the turbo loop.
    pub single_pass: bool,
    pub trace: bool,
}

impl Default for DetectorOptions {
    fn default() -> Self {
        Self {
            max_iterations: 30,
            tolerance: 1e-6,
            damping: 1.0,
            single_pass: false,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub eps_hat: f64,
    pub tau_s: f64,
    pub delta_x: f64,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "iter={} eps={:e} tau_s={:e} dx={:e}",
            self.iteration, self.eps_hat, self.tau_s, self.delta_x
        )
    }
}

/// Newline-delimited rendering of a trace.
pub fn format_trace(trace: &[TraceRecord]) -> String {
    trace.iter().map(|t| format!("{t}\n")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub beliefs: Vec<SymbolBelief>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRecord>,
    /// Final state, resumable for later turbo passes.
    pub state: DetectorState,
}

impl Detection {
    pub fn decisions(&self) -> Vec<usize> {
        self.beliefs.iter().map(SymbolBelief::decision).collect()
    }
}

/// A network prepared for detection. Cheap to share across threads.
#[derive(Debug, Clone)]
pub struct MpnnDetector {
    pub net: SignalFlowNn,
    pub model: UnitaryModel,
    pub constellation: Constellation,
}

impl MpnnDetector {
    pub fn new(net: SignalFlowNn, constellation: Constellation) -> Result<Self> {
        let model = prepare_unitary_model(&net)?;
        Ok(Self {
            net,
            model,
            constellation,
        })
    }

    /// The same loop on the untransformed model.
    pub fn amp_variant(net: SignalFlowNn, constellation: Constellation) -> Self {
        let model = plain_model(&net);
        Self {
            net,
            model,
            constellation,
        }
    }

    pub fn initial_state(&self) -> DetectorState {
        DetectorState::initial(&self.net, self.model.u.rows(), self.constellation.prior_variance())
    }

    /// Runs the detector on one real-stacked observation. `priors` gives a
    /// probability table per user (uniform when absent). `resume` continues
    /// from an earlier state instead of the initial one.
    pub fn detect(
        &self,
        y_real: &[f64],
        priors: Option<&[Vec<f64>]>,
        opts: &DetectorOptions,
        resume: Option<DetectorState>,
    ) -> Result<Detection> {
        let k = self.net.n_users();
        let r = transform_observation(y_real, &self.model)?;
        let uniform;
        let priors = match priors {
            Some(p) => {
                if p.len() != k {
                    return Err(Error::DimensionMismatch {
                        context: "prior tables",
                        expected: k,
                        actual: p.len(),
                    });
                }
                p
            }
            None => {
                uniform = vec![vec![1.0 / self.constellation.len() as f64; self.constellation.len()]; k];
                &uniform[..]
            }
        };
        let mut st = match resume {
            Some(s) => s,
            None => self.initial_state(),
        };
        let max_iter = if opts.single_pass { 1 } else { opts.max_iterations };
        let mut trace = Vec::new();
        let mut beliefs = Vec::new();
        let mut converged = false;
        let mut iterations = 0;
        for it in 0..max_iter {
            iterations = it + 1;
            uamp_output_step(&mut st, &self.model, &r);
            check(it, "noise precision", &[st.eps_hat])?;
            check(it, "output mean", &st.p)?;
            uamp_input_step(&mut st, &self.model, &r);
            check(it, "input variance", &[st.tau_q])?;
            check(it, "input mean", &st.q)?;
            let msgs = messages_to_symbols(&mut st)?;
            beliefs = msgs
                .iter()
                .zip(priors)
                .map(|((m, v), pr)| symbol_posterior(*m, *v, pr, &self.constellation))
                .collect::<Result<Vec<_>>>()?;
            let mut delta: f64 = 0.0;
            for (u, b) in beliefs.iter().enumerate() {
                delta = delta.max((b.posterior_mean - st.x_hat[u]).norm());
                st.x_hat[u] = b.posterior_mean;
                st.tau_x[u] = b.posterior_var;
            }
            st.probs = beliefs.iter().map(|b| b.probs.clone()).collect();
            refresh_s_beliefs(&mut st, &self.net, opts.damping);
            check(it, "symbol belief", &[st.tau_s])?;
            check(it, "symbol belief", &st.s_hat)?;
            if opts.trace {
                trace.push(TraceRecord {
                    iteration: it,
                    eps_hat: st.eps_hat,
                    tau_s: st.tau_s,
                    delta_x: delta,
                });
            }
            if delta < opts.tolerance {
                converged = true;
                break;
            }
        }
        Ok(Detection {
            beliefs,
            iterations,
            converged,
            trace,
            state: st,
        })
    }
}

fn check(iteration: usize, quantity: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::DetectorNonFinite { iteration, quantity })
    }
}

/// One-shot detection with a freshly prepared model.
pub fn detect_frame(
    y_real: &[f64],
    net: &SignalFlowNn,
    c: &Constellation,
    priors: Option<&[Vec<f64>]>,
    opts: &DetectorOptions,
) -> Result<Detection> {
    MpnnDetector::new(net.clone(), c.clone())?.detect(y_real, priors, opts, None)
}

/// [`detect_frame`] without the unitary transform.
pub fn amp_variant_detect(
    y_real: &[f64],
    net: &SignalFlowNn,
    c: &Constellation,
    priors: Option<&[Vec<f64>]>,
    opts: &DetectorOptions,
) -> Result<Detection> {
    MpnnDetector::amp_variant(net.clone(), c.clone()).detect(y_real, priors, opts, None)
}
