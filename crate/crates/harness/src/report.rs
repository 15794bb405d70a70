//! Result rows and their CSV form.

use std::fmt::Write as _;

pub const CSV_HEADER: &str = "detector,snr_db,pilot_len,metric,value,trials,stderr";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Ser,
    Ber,
    NmseDb,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ser => "SER",
            Self::Ber => "BER",
            Self::NmseDb => "NMSE_dB",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub detector: String,
    pub snr_db: f64,
    pub pilot_len: usize,
    pub metric: Metric,
    pub value: f64,
    pub trials: u64,
    pub stderr: f64,
}

impl ResultRow {
    /// Error rate with its binomial standard error.
    pub fn rate(detector: &str, snr_db: f64, pilot_len: usize, metric: Metric, errors: u64, trials: u64) -> Self {
        let p = if trials == 0 { f64::NAN } else { errors as f64 / trials as f64 };
        Self {
            detector: detector.to_string(),
            snr_db,
            pilot_len,
            metric,
            value: p,
            trials,
            stderr: binomial_stderr(p, trials),
        }
    }

    /// Sample mean of per-realization values with the standard error of
    /// the mean.
    pub fn mean(detector: &str, snr_db: f64, pilot_len: usize, metric: Metric, values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            detector: detector.to_string(),
            snr_db,
            pilot_len,
            metric,
            value: mean,
            trials: values.len() as u64,
            stderr: (var / n).sqrt(),
        }
    }
}

pub fn binomial_stderr(p: f64, trials: u64) -> f64 {
    if trials == 0 {
        return f64::NAN;
    }
    (p * (1.0 - p) / trials as f64).sqrt()
}

fn fmt_num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v}")
    }
}

/// CSV text with header and LF line endings.
pub fn to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.detector,
            fmt_num(r.snr_db),
            r.pilot_len,
            r.metric.name(),
            fmt_num(r.value),
            r.trials,
            fmt_num(r.stderr)
        );
    }
    out
}

/// The row for one detector at one operating point.
pub fn find<'a>(rows: &'a [ResultRow], detector: &str, snr_db: f64, pilot_len: usize) -> Option<&'a ResultRow> {
    rows.iter()
        .find(|r| r.detector == detector && r.snr_db == snr_db && r.pilot_len == pilot_len)
}
