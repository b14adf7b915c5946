//! CSV and JSON emission of result records.
//!
//! CSV cells use nine significant digits; JSON keeps full precision and uses
//! the CSV column names as field names. Missing values are empty CSV cells
//! and JSON `null`s.

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bounds::BoundReport;
use crate::sim::SweepRecord;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::config(
                "format",
                format!("expected csv or json, got {other:?}"),
            )),
        }
    }
}

/// A record with a fixed column layout.
pub trait Tabular {
    const COLUMNS: &'static [&'static str];
    fn cells(&self) -> Vec<String>;
}

/// Decimal rendering with nine significant digits; scientific notation
/// outside `[1e-5, 1e15)`.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.8e}");
    let exponent: i32 = sci[sci.find('e').expect("exponent marker") + 1..]
        .parse()
        .expect("integer exponent");
    if (-5..15).contains(&exponent) {
        let decimals = (8 - exponent).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        sci
    }
}

pub fn cell(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

pub fn emit<T: Tabular + Serialize, W: Write>(
    records: &[T],
    format: Format,
    mut sink: W,
) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut sink);
            w.write_record(T::COLUMNS)?;
            for r in records {
                w.write_record(r.cells())?;
            }
            w.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut sink, records)?;
            sink.write_all(b"\n")?;
        }
    }
    sink.flush()?;
    Ok(())
}

pub fn emit_to_string<T: Tabular + Serialize>(records: &[T], format: Format) -> Result<String> {
    let mut buf = Vec::new();
    emit(records, format, &mut buf)?;
    Ok(String::from_utf8(buf).expect("emitted text is UTF-8"))
}

impl Tabular for BoundReport {
    const COLUMNS: &'static [&'static str] = &[
        "n",
        "epsilon",
        "eta",
        "weak_rate",
        "strong_converse",
        "achievability_theta",
        "be_upper_main",
        "be_lower_main",
        "log_term",
        "v",
        "t",
    ];

    fn cells(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            fmt_sig(self.epsilon),
            fmt_sig(self.eta),
            fmt_sig(self.weak_converse_rate),
            cell(self.strong_converse),
            cell(self.achievability),
            cell(self.be_upper),
            cell(self.be_lower),
            fmt_sig(self.log_term),
            cell(self.v),
            cell(self.t),
        ]
    }
}

impl Tabular for SweepRecord {
    const COLUMNS: &'static [&'static str] = &[
        "strategy",
        "n",
        "epsilon",
        "eta",
        "theta",
        "psi_hat",
        "psi_ci",
        "phi_hat",
        "phi_ci",
        "neg_log_phi",
        "censored",
        "phi_is",
        "phi_is_ci",
        "neg_log_phi_is",
        "neg_log_phi_is_ci",
        "weak_rate",
        "strong_converse",
        "achievability_theta",
        "be_upper_main",
        "be_lower_main",
        "log_term",
        "v",
        "t",
        "error",
    ];

    fn cells(&self) -> Vec<String> {
        vec![
            self.strategy.clone(),
            self.n.to_string(),
            fmt_sig(self.epsilon),
            fmt_sig(self.eta),
            cell(self.theta),
            cell(self.psi_hat),
            cell(self.psi_ci),
            cell(self.phi_hat),
            cell(self.phi_ci),
            cell(self.neg_log_phi),
            self.censored.to_string(),
            cell(self.phi_is),
            cell(self.phi_is_ci),
            cell(self.neg_log_phi_is),
            cell(self.neg_log_phi_is_ci),
            cell(self.weak_rate),
            cell(self.strong_converse),
            cell(self.achievability_theta),
            cell(self.be_upper_main),
            cell(self.be_lower_main),
            cell(self.log_term),
            cell(self.v),
            cell(self.t),
            self.error.clone().unwrap_or_default(),
        ]
    }
}
