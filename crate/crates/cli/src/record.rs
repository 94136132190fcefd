//! Flat output rows and their CSV/JSON encodings.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use tfqkd::measurement::{MeasurementSettings, ProtocolParams};
use tfqkd::validation::CheckResult;

use crate::config::OutputFormat;
use crate::error::CliError;

/// Significant digits kept in every emitted number.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Rounds to [`SIGNIFICANT_DIGITS`] significant digits. Rounding happens when
/// a record is built so that written files parse back to identical values.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

fn opt(x: f64) -> Option<f64> {
    x.is_finite().then(|| round_sig(x))
}

/// One output row. Columns that a subcommand does not produce stay empty.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResultRecord {
    pub command: String,
    pub protocol: String,
    pub eta_d: Option<f64>,
    pub visibility: Option<f64>,
    pub distance_km: Option<f64>,
    pub rep_rate: Option<f64>,
    pub rounds: Option<f64>,
    /// Maximized |S|.
    pub s: Option<f64>,
    /// Asymptotic key rate per heralded round.
    pub r: Option<f64>,
    pub q_opt: Option<f64>,
    pub p_h: Option<f64>,
    /// Asymptotic throughput in bits per second.
    pub rate_bps: Option<f64>,
    /// Finite-size ℓ/N per heralded round.
    pub finite_rate: Option<f64>,
    pub finite_bps: Option<f64>,
    pub threshold: Option<f64>,
    /// g for the 1-photon protocol, g_a for the 2-photon protocol.
    pub gain: Option<f64>,
    pub t_s: Option<f64>,
    pub alpha1_mag: Option<f64>,
    pub alpha1_phase: Option<f64>,
    pub alpha2_mag: Option<f64>,
    pub alpha2_phase: Option<f64>,
    pub beta1_mag: Option<f64>,
    pub beta1_phase: Option<f64>,
    pub beta2_mag: Option<f64>,
    pub beta2_phase: Option<f64>,
    pub beta3_mag: Option<f64>,
    pub beta3_phase: Option<f64>,
    pub converged: bool,
    pub seed: u64,
}

impl ResultRecord {
    pub fn new(command: &str, protocol: &str, seed: u64) -> Self {
        Self { command: command.to_owned(), protocol: protocol.to_owned(), seed, ..Default::default() }
    }

    /// Stores a value rounded to the output precision; non-finite becomes empty.
    pub fn put(slot: &mut Option<f64>, x: f64) {
        *slot = opt(x);
    }

    pub fn with_inputs(mut self, eta_d: Option<f64>, visibility: Option<f64>, distance_km: Option<f64>) -> Self {
        self.eta_d = eta_d.and_then(opt);
        self.visibility = visibility.and_then(opt);
        self.distance_km = distance_km.and_then(opt);
        self
    }

    /// Fills the source and measurement columns from an argmax.
    pub fn with_argmax(mut self, params: &ProtocolParams, settings: &MeasurementSettings, with_key: bool) -> Self {
        self.gain = opt(params.gain());
        self.t_s = params.t_s().and_then(opt);
        let s = settings.canonical();
        let pair = |d: tfqkd::measurement::DisplacementSetting| (opt(d.magnitude), opt(d.phase));
        (self.alpha1_mag, self.alpha1_phase) = pair(s.alice[0]);
        (self.alpha2_mag, self.alpha2_phase) = pair(s.alice[1]);
        (self.beta1_mag, self.beta1_phase) = pair(s.bob[0]);
        (self.beta2_mag, self.beta2_phase) = pair(s.bob[1]);
        if with_key {
            (self.beta3_mag, self.beta3_phase) = pair(s.bob[2]);
        }
        self
    }
}

pub fn write_records<W: Write>(records: &[ResultRecord], format: OutputFormat, out: W) -> Result<(), CliError> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in records {
                w.serialize(r).map_err(|e| CliError::Encode(e.to_string()))?;
            }
            w.flush().map_err(|e| CliError::Encode(e.to_string()))
        }
        OutputFormat::Json => write_json(records, out),
    }
}

fn write_json<W: Write, T: Serialize>(rows: &[T], mut out: W) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut out, rows).map_err(|e| CliError::Encode(e.to_string()))?;
    writeln!(out).map_err(|e| CliError::Encode(e.to_string()))
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ResultRecord>, CliError> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Encode(e.to_string()))
}

pub fn read_json<R: Read>(input: R) -> Result<Vec<ResultRecord>, CliError> {
    serde_json::from_reader(input).map_err(|e| CliError::Encode(e.to_string()))
}

/// Row of the `validate` report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub formula: String,
    pub passed: bool,
    pub samples: usize,
    pub tolerance: f64,
    pub max_error: f64,
    /// `name=value` pairs joined by `;`.
    pub worst_draw: String,
}

impl From<&CheckResult> for CheckRecord {
    fn from(c: &CheckResult) -> Self {
        let draw: Vec<String> = c.worst_draw.iter().map(|(k, v)| format!("{k}={}", round_sig(*v))).collect();
        Self {
            formula: c.formula.clone(),
            passed: c.passed,
            samples: c.samples,
            tolerance: c.tolerance,
            max_error: round_sig(c.max_error),
            worst_draw: draw.join(";"),
        }
    }
}

pub fn write_checks<W: Write>(rows: &[CheckRecord], format: OutputFormat, out: W) -> Result<(), CliError> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in rows {
                w.serialize(r).map_err(|e| CliError::Encode(e.to_string()))?;
            }
            w.flush().map_err(|e| CliError::Encode(e.to_string()))
        }
        OutputFormat::Json => write_json(rows, out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    #[allow(clippy::approx_constant)] // the literal is the rounded value under test
    fn rounding_keeps_twelve_digits() {
        assert_eq!(round_sig(std::f64::consts::PI), 3.14159265359);
        assert_eq!(round_sig(-1.234567890123456e-7), -1.23456789012e-7);
        assert_eq!(round_sig(0.0), 0.0);
        assert!(round_sig(f64::NAN).is_nan());
        assert_eq!(opt(f64::INFINITY), None);
    }

    #[test]
    fn csv_quotes_awkward_text() {
        let mut r = ResultRecord::new("chsh", "one, \"odd\"", 1);
        r.s = Some(2.5);
        let mut buf = Vec::new();
        write_records(&[r.clone()], OutputFormat::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"one, \"\"odd\"\"\""));
        assert_eq!(read_csv(buf.as_slice()).unwrap(), vec![r]);
    }
}
