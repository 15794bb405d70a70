//! Ground-truth physical link: transmitter I/Q imbalance, PA nonlinearity,
//! a multipath uniform-linear-array channel and receiver noise.

use crate::error::{Error, Result};
use crate::numerics::RealMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

/// I/Q modulator mismatch `x ↦ ξ·x + ζ·x*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IqImbalance {
    pub lambda: f64,
    pub theta: f64,
    pub xi: Complex64,
    pub zeta: Complex64,
}

impl IqImbalance {
    pub fn new(lambda: f64, theta: f64) -> Self {
        let (xi, zeta) = iq_coefficients(lambda, theta);
        Self {
            lambda,
            theta,
            xi,
            zeta,
        }
    }

    /// Perfectly balanced branches.
    pub fn none() -> Self {
        Self::new(0.0, 0.0)
    }

    pub fn apply(&self, x: Complex64) -> Complex64 {
        apply_iq(x, self)
    }
}

pub fn iq_coefficients(lambda: f64, theta: f64) -> (Complex64, Complex64) {
    let (s, c) = (theta / 2.0).sin_cos();
    (Complex64::new(c, lambda * s), Complex64::new(lambda * c, s))
}

pub fn apply_iq(x: Complex64, imb: &IqImbalance) -> Complex64 {
    imb.xi * x + imb.zeta * x.conj()
}

/// Saturating PA with smooth AM/AM compression and rational AM/PM.
///
/// `alpha_phi` is on a degree scale; [`pa_am_pm`] returns radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaModel {
    pub alpha_a: f64,
    pub x_sat: f64,
    pub sigma_a: f64,
    pub alpha_phi: f64,
    pub beta_phi: f64,
    pub q1: f64,
    pub q2: f64,
}

impl PaModel {
    pub fn new(
        alpha_a: f64,
        x_sat: f64,
        sigma_a: f64,
        alpha_phi: f64,
        beta_phi: f64,
        q1: f64,
        q2: f64,
    ) -> Result<Self> {
        if !(alpha_a > 0.0 && x_sat > 0.0 && sigma_a > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "PA requires alpha_a, x_sat, sigma_a > 0 (got {alpha_a}, {x_sat}, {sigma_a})"
            )));
        }
        if !(beta_phi > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "PA requires beta_phi > 0 (got {beta_phi})"
            )));
        }
        Ok(Self {
            alpha_a,
            x_sat,
            sigma_a,
            alpha_phi,
            beta_phi,
            q1,
            q2,
        })
    }

    /// The moderate-impairment parameter set.
    pub fn moderate() -> Self {
        Self {
            alpha_a: 4.65,
            x_sat: 0.58,
            sigma_a: 0.81,
            alpha_phi: 2560.0,
            beta_phi: 0.114,
            q1: 2.4,
            q2: 2.3,
        }
    }

    /// Higher small-signal gain, everything else moderate.
    pub fn severe() -> Self {
        Self {
            alpha_a: 6.5,
            ..Self::moderate()
        }
    }
}

pub fn pa_am_am(r: f64, pa: &PaModel) -> Result<f64> {
    if r < 0.0 {
        return Err(Error::NegativeAmplitude(r));
    }
    Ok(am_am_unchecked(r, pa))
}

fn am_am_unchecked(r: f64, pa: &PaModel) -> f64 {
    let g = pa.alpha_a * r;
    if g == 0.0 {
        return 0.0;
    }
    let two_sigma = 2.0 * pa.sigma_a;
    // For huge drive the ratio term overflows; A(r) → x_sat.
    let ratio = g / pa.x_sat;
    let log_denominator = (ratio.powf(two_sigma)).ln_1p() / two_sigma;
    if log_denominator.is_finite() {
        g / log_denominator.exp()
    } else {
        pa.x_sat
    }
}

/// AM/PM conversion in radians.
pub fn pa_am_pm(r: f64, pa: &PaModel) -> Result<f64> {
    if r < 0.0 {
        return Err(Error::NegativeAmplitude(r));
    }
    Ok(am_pm_unchecked(r, pa))
}

fn am_pm_unchecked(r: f64, pa: &PaModel) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    let degrees = pa.alpha_phi * r.powf(pa.q1) / (1.0 + (r / pa.beta_phi).powf(pa.q2));
    degrees.to_radians()
}

pub fn apply_pa(xa: Complex64, pa: &PaModel) -> Complex64 {
    let r = xa.norm();
    if r == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let amp = am_am_unchecked(r, pa);
    let phase = xa.arg() + am_pm_unchecked(r, pa);
    Complex64::from_polar(amp, phase)
}

/// Memoryless odd-order complex polynomial PA, `Σ a_p·x̃|x̃|^{p-1}` with
/// `x̃ = drive·x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialPa {
    /// `(order, coefficient)` pairs.
    pub terms: Vec<(u32, Complex64)>,
    pub drive: f64,
}

impl PolynomialPa {
    /// Fifth-order baseband polynomial with strong compression and AM/PM
    /// over the upper part of the 16-QAM amplitude range.
    pub fn fifth_order() -> Self {
        Self {
            terms: vec![
                (1, Complex64::new(1.0513, 0.0904)),
                (3, Complex64::new(-0.0542, -0.2900)),
                (5, Complex64::new(-0.9657, -0.7028)),
            ],
            drive: 0.6,
        }
    }

    pub fn apply(&self, x: Complex64) -> Complex64 {
        let xt = x * self.drive;
        let r = xt.norm();
        self.terms
            .iter()
            .map(|(p, a)| a * xt * r.powi(*p as i32 - 1))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PowerAmplifier {
    Linear,
    Saturating(PaModel),
    Polynomial(PolynomialPa),
}

impl PowerAmplifier {
    pub fn apply(&self, x: Complex64) -> Complex64 {
        match self {
            Self::Linear => x,
            Self::Saturating(pa) => apply_pa(x, pa),
            Self::Polynomial(p) => p.apply(x),
        }
    }
}

/// Transmitter front-end of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct UserImpairments {
    pub iq: IqImbalance,
    pub pa: PowerAmplifier,
    /// Input scaling ahead of the modulator; below 1 backs the PA off.
    pub drive: f64,
}

impl UserImpairments {
    /// No I/Q mismatch and a linear amplifier.
    pub fn ideal() -> Self {
        Self {
            iq: IqImbalance::none(),
            pa: PowerAmplifier::Linear,
            drive: 1.0,
        }
    }

    pub fn distort(&self, x: Complex64) -> Complex64 {
        self.pa.apply(self.iq.apply(self.drive * x))
    }
}

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }
}

/// One arrival of a user's multipath channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathComponent {
    pub gain: Complex64,
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MimoChannel {
    /// `N × K` channel matrix.
    pub h: ComplexMatrix,
    /// Arrivals per user.
    pub paths: Vec<Vec<PathComponent>>,
    /// Antenna spacing over carrier wavelength.
    pub spacing: f64,
}

impl MimoChannel {
    /// Channel with a given matrix and no path description.
    pub fn from_matrix(h: ComplexMatrix) -> Self {
        Self {
            paths: vec![Vec::new(); h.cols],
            h,
            spacing: 0.5,
        }
    }

    pub fn n_antennas(&self) -> usize {
        self.h.rows
    }

    pub fn n_users(&self) -> usize {
        self.h.cols
    }
}

/// Uniform linear array response, normalized by `1/√N`.
pub fn steering_vector(n: usize, angle: f64, spacing: f64) -> Vec<Complex64> {
    let scale = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|i| Complex64::from_polar(scale, -2.0 * PI * spacing * angle.sin() * i as f64))
        .collect()
}

/// Draws a multipath channel with `q` arrivals per user on a half-wavelength
/// array. Path gains are unit-variance circular Gaussian; angles are uniform
/// on `(-π/2, π/2]`.
pub fn draw_channel<R: Rng + ?Sized>(n: usize, k: usize, q: usize, rng: &mut R) -> MimoChannel {
    let spacing = 0.5;
    let mut h = ComplexMatrix::zeros(n, k);
    let mut paths = Vec::with_capacity(k);
    let scale = (n as f64 / q as f64).sqrt();
    for user in 0..k {
        let mut user_paths = Vec::with_capacity(q);
        for _ in 0..q {
            let gain = complex_gaussian(rng, 1.0);
            // Uniform on [0, 1) maps to (-π/2, π/2].
            let u: f64 = rng.random();
            let angle = PI / 2.0 - PI * u;
            let a = steering_vector(n, angle, spacing);
            for (i, ai) in a.iter().enumerate() {
                h.data[i * k + user] += scale * gain * ai;
            }
            user_paths.push(PathComponent { gain, angle });
        }
        paths.push(user_paths);
    }
    MimoChannel { h, paths, spacing }
}

/// Circular complex Gaussian sample with total variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// Noise power per receive antenna for unit transmit power per user.
/// `+∞` dB disables noise.
pub fn noise_variance_from_snr(snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        10f64.powf(-snr_db / 10.0)
    }
}

/// A block of transmitted and received samples, indexed by time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub sent_symbols: Vec<Vec<Complex64>>,
    pub received: Vec<Vec<Complex64>>,
    pub noise_variance: f64,
}

/// Passes each time instant's symbol vector through the per-user front-ends,
/// the channel, and complex AWGN.
pub fn transmit_frame<R: Rng + ?Sized>(
    symbols: &[Vec<Complex64>],
    imps: &[UserImpairments],
    ch: &MimoChannel,
    snr_db: f64,
    rng: &mut R,
) -> Result<FrameRecord> {
    let k = ch.n_users();
    if symbols.is_empty() {
        return Err(Error::InvalidParameter("empty symbol block".into()));
    }
    if imps.len() != k {
        return Err(Error::DimensionMismatch {
            context: "transmit_frame impairments",
            expected: k,
            actual: imps.len(),
        });
    }
    let noise_variance = noise_variance_from_snr(snr_db);
    let mut received = Vec::with_capacity(symbols.len());
    for x in symbols {
        if x.len() != k {
            return Err(Error::DimensionMismatch {
                context: "transmit_frame symbols",
                expected: k,
                actual: x.len(),
            });
        }
        let s: Vec<Complex64> = x.iter().zip(imps).map(|(xi, imp)| imp.distort(*xi)).collect();
        let mut y = ch.h.matvec(&s);
        if noise_variance > 0.0 {
            for yi in &mut y {
                *yi += complex_gaussian(rng, noise_variance);
            }
        }
        received.push(y);
    }
    Ok(FrameRecord {
        sent_symbols: symbols.to_vec(),
        received,
        noise_variance,
    })
}

/// `(Re v; Im v)`.
pub fn to_real(v: &[Complex64]) -> Vec<f64> {
    v.iter().map(|c| c.re).chain(v.iter().map(|c| c.im)).collect()
}

/// Inverse of [`to_real`].
pub fn from_real(v: &[f64]) -> Vec<Complex64> {
    let n = v.len() / 2;
    (0..n).map(|i| Complex64::new(v[i], v[n + i])).collect()
}

/// `[[Re H, −Im H], [Im H, Re H]]`.
pub fn to_real_matrix(h: &ComplexMatrix) -> RealMatrix {
    let (n, k) = (h.rows, h.cols);
    RealMatrix::from_fn(2 * n, 2 * k, |i, j| {
        let c = h.get(i % n, j % k);
        match (i < n, j < k) {
            (true, true) | (false, false) => c.re,
            (true, false) => -c.im,
            (false, true) => c.im,
        }
    })
}
