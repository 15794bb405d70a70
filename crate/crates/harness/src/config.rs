//! Flat `key = value` experiment configuration.

use mpnn_core::airlink::{IqImbalance, PaModel, PolynomialPa, PowerAmplifier, UserImpairments};
use mpnn_core::modem::{build_bpsk, build_gray_qam16, build_qpsk, Constellation};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.key {
            Some(k) => write!(f, "config key `{k}`: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        key: Some(key.to_string()),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modulation {
    Qam16,
    Qpsk,
    Bpsk,
}

impl Modulation {
    pub fn constellation(self) -> Constellation {
        match self {
            Self::Qam16 => build_gray_qam16(),
            Self::Qpsk => build_qpsk(),
            Self::Bpsk => build_bpsk(),
        }
    }
}

impl FromStr for Modulation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "qam16" | "16qam" | "16-qam" => Ok(Self::Qam16),
            "qpsk" => Ok(Self::Qpsk),
            "bpsk" => Ok(Self::Bpsk),
            _ => Err(format!("unknown modulation `{s}` (qam16, qpsk, bpsk)")),
        }
    }
}

/// Hardware impairment presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    /// Ideal front-ends.
    None,
    Moderate,
    Severe,
    Extreme,
}

impl Severity {
    pub fn impairments(self) -> UserImpairments {
        let theta = |deg: f64| deg.to_radians();
        match self {
            Self::None => UserImpairments::ideal(),
            Self::Moderate => UserImpairments {
                iq: IqImbalance::new(0.05, theta(4.0)),
                pa: PowerAmplifier::Saturating(PaModel::moderate()),
                drive: 1.0,
            },
            Self::Severe => UserImpairments {
                iq: IqImbalance::new(0.05, theta(4.0)),
                pa: PowerAmplifier::Saturating(PaModel::severe()),
                drive: 1.0,
            },
            Self::Extreme => UserImpairments {
                iq: IqImbalance::new(0.05, theta(10.0)),
                pa: PowerAmplifier::Polynomial(PolynomialPa::fifth_order()),
                drive: 1.0,
            },
        }
    }
}

impl FromStr for Severity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Self::None),
            "moderate" => Ok(Self::Moderate),
            "severe" => Ok(Self::Severe),
            "extreme" => Ok(Self::Extreme),
            _ => Err(format!("unknown severity `{s}` (none, moderate, severe, extreme)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DetectorKind {
    /// Message passing on the trained signal-flow network.
    Mpnn,
    /// The same detector without the unitary transform.
    Amp,
    /// Memory-polynomial direct detector.
    Drmp,
    /// Fully connected direct detector.
    Ddnn,
    /// Zero forcing with the true channel, ignoring impairments.
    Zf,
    /// Message passing on the true linear channel through identity
    /// sub-networks; a genie reference for linear links.
    Probe,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 6] = [Self::Mpnn, Self::Amp, Self::Drmp, Self::Ddnn, Self::Zf, Self::Probe];

    pub fn name(self) -> &'static str {
        match self {
            Self::Mpnn => "mpnn",
            Self::Amp => "amp",
            Self::Drmp => "drmp",
            Self::Ddnn => "ddnn",
            Self::Zf => "zf",
            Self::Probe => "probe",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .iter()
            .copied()
            .find(|d| d.name() == s)
            .ok_or_else(|| format!("unknown detector `{s}` (mpnn, amp, drmp, ddnn, zf, probe)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_antennas: usize,
    pub n_users: usize,
    pub paths: usize,
    pub modulation: Modulation,
    pub snr_db: Vec<f64>,
    pub pilot_lengths: Vec<usize>,
    /// Symbols per user per realization (uncoded runs).
    pub data_length: usize,
    pub realizations: usize,
    pub seed: u64,
    pub detectors: Vec<DetectorKind>,
    pub severity: Severity,
    /// Scaling of the unit-energy symbols at the front-end input.
    pub pa_drive: f64,
    pub hidden: usize,
    pub tied: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Share of the pilot block used for fitting in the modelling study.
    pub train_fraction: f64,
    /// Hidden layer widths of the direct DNN detector.
    pub ddnn_hidden: Vec<usize>,
    pub rmp_order: usize,
    pub rmp_memory: usize,
    pub nmse_orders: Vec<usize>,
    pub coded: bool,
    pub info_bits: usize,
    /// Codewords per user per realization (coded runs).
    pub codewords: usize,
    pub turbo_iterations: usize,
    pub detector_iterations: usize,
    /// Failed realizations tolerated before the run counts as a numerical
    /// failure.
    pub max_failures: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_antennas: 10,
            n_users: 5,
            paths: 3,
            modulation: Modulation::Qam16,
            snr_db: vec![20.0, 25.0, 30.0],
            pilot_lengths: vec![500],
            data_length: 20_000,
            realizations: 100,
            seed: 1,
            detectors: vec![DetectorKind::Mpnn, DetectorKind::Drmp, DetectorKind::Ddnn],
            severity: Severity::Moderate,
            pa_drive: 1.0,
            hidden: 20,
            tied: true,
            epochs: 300,
            batch_size: 100,
            learning_rate: 0.01,
            train_fraction: 0.8,
            ddnn_hidden: vec![30, 40],
            rmp_order: 5,
            rmp_memory: 0,
            nmse_orders: vec![5, 12],
            coded: false,
            info_bits: 1332,
            codewords: 1,
            turbo_iterations: 3,
            detector_iterations: 30,
            max_failures: 0,
        }
    }
}

fn parse_one<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| err(key, format!("cannot parse `{v}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    let items: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_one(key, s))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(err(key, "empty list"));
    }
    Ok(items)
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(err(key, format!("expected true or false, got `{v}`"))),
    }
}

/// SNR values accept `inf` for a noiseless link.
fn parse_snr(key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    let list: Vec<String> = parse_list(key, v)?;
    list.iter()
        .map(|s| match s.as_str() {
            "inf" | "+inf" => Ok(f64::INFINITY),
            other => {
                let x: f64 = parse_one(key, other)?;
                if x.is_finite() {
                    Ok(x)
                } else {
                    Err(err(key, format!("invalid SNR `{other}`")))
                }
            }
        })
        .collect()
}

impl ExperimentConfig {
    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError {
                key: None,
                message: format!("line {}: expected `key = value`, got `{line}`", lineno + 1),
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "n_antennas" => self.n_antennas = parse_one(key, v)?,
            "n_users" => self.n_users = parse_one(key, v)?,
            "paths" => self.paths = parse_one(key, v)?,
            "modulation" => self.modulation = parse_one(key, v)?,
            "snr_db" => self.snr_db = parse_snr(key, v)?,
            "pilot_lengths" => self.pilot_lengths = parse_list(key, v)?,
            "data_length" => self.data_length = parse_one(key, v)?,
            "realizations" => self.realizations = parse_one(key, v)?,
            "seed" => self.seed = parse_one(key, v)?,
            "detectors" => self.detectors = parse_list(key, v)?,
            "severity" => self.severity = parse_one(key, v)?,
            "pa_drive" => self.pa_drive = parse_one(key, v)?,
            "hidden" => self.hidden = parse_one(key, v)?,
            "tied" => self.tied = parse_bool(key, v)?,
            "epochs" => self.epochs = parse_one(key, v)?,
            "batch_size" => self.batch_size = parse_one(key, v)?,
            "learning_rate" => self.learning_rate = parse_one(key, v)?,
            "train_fraction" => self.train_fraction = parse_one(key, v)?,
            "ddnn_hidden" => self.ddnn_hidden = parse_list(key, v)?,
            "rmp_order" => self.rmp_order = parse_one(key, v)?,
            "rmp_memory" => self.rmp_memory = parse_one(key, v)?,
            "nmse_orders" => self.nmse_orders = parse_list(key, v)?,
            "coded" => self.coded = parse_bool(key, v)?,
            "info_bits" => self.info_bits = parse_one(key, v)?,
            "codewords" => self.codewords = parse_one(key, v)?,
            "turbo_iterations" => self.turbo_iterations = parse_one(key, v)?,
            "detector_iterations" => self.detector_iterations = parse_one(key, v)?,
            "max_failures" => self.max_failures = parse_one(key, v)?,
            _ => return Err(err(key, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("n_antennas", self.n_antennas),
            ("n_users", self.n_users),
            ("paths", self.paths),
            ("data_length", self.data_length),
            ("realizations", self.realizations),
            ("hidden", self.hidden),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("rmp_order", self.rmp_order),
            ("info_bits", self.info_bits),
            ("codewords", self.codewords),
            ("detector_iterations", self.detector_iterations),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(err(key, "must be positive"));
            }
        }
        if self.pilot_lengths.iter().any(|&m| m < self.batch_size) {
            return Err(err("pilot_lengths", "each pilot length must be at least batch_size"));
        }
        if !(self.pa_drive > 0.0 && self.pa_drive.is_finite()) {
            return Err(err("pa_drive", "must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(err("learning_rate", "must be positive"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(err("train_fraction", "must lie strictly between 0 and 1"));
        }
        if self.ddnn_hidden.contains(&0) {
            return Err(err("ddnn_hidden", "widths must be positive"));
        }
        if self.nmse_orders.contains(&0) {
            return Err(err("nmse_orders", "orders must be positive"));
        }
        if self.detectors.is_empty() {
            return Err(err("detectors", "empty list"));
        }
        if self.coded {
            let code = mpnn_core::modem::ConvCode::rate_two_thirds();
            let coded = code.coded_len(self.info_bits);
            let bps = self.modulation.constellation().bits_per_symbol;
            if code.steps(self.info_bits) % code.period() != 0 || coded % bps != 0 {
                return Err(err(
                    "info_bits",
                    format!("{} info bits do not give whole symbols after coding", self.info_bits),
                ));
            }
        }
        Ok(())
    }

    /// Symbols per user carried by one codeword.
    pub fn symbols_per_codeword(&self) -> usize {
        let code = mpnn_core::modem::ConvCode::rate_two_thirds();
        code.coded_len(self.info_bits) / self.modulation.constellation().bits_per_symbol
    }

    pub fn train_config(&self, seed: u64, train_fraction: f64) -> mpnn_core::signal_flow_nn::TrainConfig {
        mpnn_core::signal_flow_nn::TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed,
            train_fraction,
            ..Default::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_comments() {
        let cfg = ExperimentConfig::parse(
            "# comment\nsnr_db = 10, 20, inf  # trailing\ndetectors = mpnn,zf\ntied = false\nseed = 42\n",
        )
        .unwrap();
        assert_eq!(cfg.snr_db, vec![10.0, 20.0, f64::INFINITY]);
        assert_eq!(cfg.detectors, vec![DetectorKind::Mpnn, DetectorKind::Zf]);
        assert!(!cfg.tied);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.n_antennas, 10);
    }

    #[test]
    fn errors_name_the_key() {
        let e = ExperimentConfig::parse("n_users = five").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("n_users"));
        let e = ExperimentConfig::parse("bogus = 1").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("bogus"));
        assert!(e.to_string().contains("bogus"));
        let e = ExperimentConfig::parse("detectors = mpnn, nope").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("detectors"));
        assert!(ExperimentConfig::parse("no equals sign").unwrap_err().key.is_none());
        let e = ExperimentConfig::parse("coded = true\ninfo_bits = 10").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("info_bits"));
    }

    #[test]
    fn default_code_fits_whole_symbols() {
        let cfg = ExperimentConfig {
            coded: true,
            ..ExperimentConfig::default()
        };
        cfg.validate().unwrap();
        assert_eq!(cfg.symbols_per_codeword(), 501);
    }
}
