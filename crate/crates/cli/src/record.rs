//! Output records and their CSV / JSON-lines encodings.
//!
//! Per-group vectors follow the market's internal order, decreasing
//! willingness to pay, and `theta` is carried alongside them so a record
//! can be read without the scenario.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Version of the CSV layout, written as the first line.
pub const CSV_SCHEMA: u32 = 1;
pub const CSV_HEADER: &str = "scheme,S,J,revenue,gain_vs_sp,k_eff";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Flags {
    /// Fewer prices than requested were used.
    pub capped: bool,
    /// A self-selection menu reproduces the complete-differentiation outcome.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ic_feasible: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub scheme: String,
    #[serde(rename = "S")]
    pub supply: f64,
    #[serde(rename = "J")]
    pub j: usize,
    pub revenue: f64,
    /// `revenue / R_sp - 1`; 0 when the single-price revenue is 0.
    pub gain_vs_sp: f64,
    pub k_eff: usize,
    pub theta: Vec<f64>,
    pub prices: Vec<f64>,
    pub allocations: Vec<f64>,
    pub flags: Flags,
}

/// One point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scheme: String,
    #[serde(rename = "S")]
    pub supply: f64,
    #[serde(rename = "J")]
    pub j: usize,
    pub revenue: f64,
    pub gain_vs_sp: f64,
    pub k_eff: usize,
}

impl From<&ResultRecord> for SweepRow {
    fn from(r: &ResultRecord) -> Self {
        SweepRow {
            scheme: r.scheme.clone(),
            supply: r.supply,
            j: r.j,
            revenue: r.revenue,
            gain_vs_sp: r.gain_vs_sp,
            k_eff: r.k_eff,
        }
    }
}

/// `x` rounded to 12 significant digits, printed in its shortest form.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("exponent form parses");
    // Normalizes -0 so equal rows print equally.
    if rounded == 0.0 {
        "0".into()
    } else {
        rounded.to_string()
    }
}

impl SweepRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.scheme,
            fmt_sig(self.supply),
            self.j,
            fmt_sig(self.revenue),
            fmt_sig(self.gain_vs_sp),
            self.k_eff
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    JsonLines,
}

/// Writes rows in the chosen format. JSON lines keep full precision;
/// `extra` records are appended in that format only.
pub fn write_rows<T: Serialize>(
    out: &mut dyn Write,
    format: Format,
    rows: &[SweepRow],
    full: &[T],
    extra: &[serde_json::Value],
) -> Result<(), CliError> {
    match format {
        Format::Csv => {
            writeln!(out, "schema={CSV_SCHEMA}")?;
            writeln!(out, "{CSV_HEADER}")?;
            for r in rows {
                writeln!(out, "{}", r.csv_line())?;
            }
        }
        Format::JsonLines => {
            for r in full {
                writeln!(out, "{}", json_line(r))?;
            }
            for e in extra {
                writeln!(out, "{e}")?;
            }
        }
    }
    Ok(())
}

pub fn json_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("records hold finite numbers")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(0.1 + 0.2), "0.3");
        assert_eq!(fmt_sig(2.0 / 3.0), "0.666666666667");
        assert_eq!(fmt_sig(123456789012345.0), "123456789012000");
        assert_eq!(fmt_sig(-0.0), "0");
        assert_eq!(fmt_sig(1e-20 / 3.0), "0.00000000000000000000333333333333");
        assert_eq!(fmt_sig(50.0), "50");
    }

    #[test]
    fn csv_row() {
        let row = SweepRow { scheme: "PP2".into(), supply: 3.41, j: 2, revenue: 10.0 / 3.0, gain_vs_sp: 0.0, k_eff: 2 };
        assert_eq!(row.csv_line(), "PP2,3.41,2,3.33333333333,0,2");
    }
}
