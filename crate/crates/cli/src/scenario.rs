//! Scenario documents.
//!
//! A scenario is a TOML file:
//!
//! ```toml
//! supply = 100.0
//!
//! [[groups]]
//! theta = 16.0
//! n = 2
//!
//! [[groups]]
//! theta = 8.0
//! n = 3
//!
//! [options]            # every key optional
//! j = 2                # price count for solve-pp
//! tolerance = 1e-9     # threshold tolerance for all solvers
//! search = "best-revenue"   # or "first-feasible"
//! placement = "tight"       # or "midpoint"
//!
//! [options.sweep]
//! s_min = 0.0
//! s_max = 50.0
//! steps = 5001         # omit for 0.01 spacing up to 50, then 1.0
//! j = [1, 2, 3]
//! ```
//!
//! Unknown keys anywhere are rejected.

use std::ops::Range;

use serde::Deserialize;
use tariff_core::iccp::ThresholdPlacement;
use tariff_core::pp::PpSearch;
use tariff_core::{Group, Market};
use toml::Spanned;

use crate::error::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    supply: Spanned<f64>,
    groups: Spanned<Vec<Spanned<RawGroup>>>,
    #[serde(default)]
    options: Options,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGroup {
    theta: Spanned<f64>,
    n: Spanned<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    pub j: Option<usize>,
    pub tolerance: Option<f64>,
    pub search: Option<PpSearch>,
    pub placement: Option<ThresholdPlacement>,
    pub sweep: Option<SweepOptions>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepOptions {
    #[serde(default)]
    pub s_min: f64,
    #[serde(default = "default_s_max")]
    pub s_max: f64,
    pub steps: Option<usize>,
    pub j: Option<Vec<usize>>,
}

fn default_s_max() -> f64 {
    50.0
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { s_min: 0.0, s_max: default_s_max(), steps: None, j: None }
    }
}

/// Spacing of the default sweep up to [`FINE_LIMIT`].
pub const FINE_STEP: f64 = 0.01;
pub const FINE_LIMIT: f64 = 50.0;
/// Spacing of the default sweep beyond [`FINE_LIMIT`].
pub const COARSE_STEP: f64 = 1.0;

impl SweepOptions {
    /// Supplies to visit, strictly ascending.
    pub fn grid(&self) -> Result<Vec<f64>, CliError> {
        let (lo, hi) = (self.s_min, self.s_max);
        if !(lo >= 0.0) || !hi.is_finite() || hi < lo {
            return Err(CliError::schema(format!("options.sweep: need 0 <= s_min <= s_max, got [{lo}, {hi}]")));
        }
        if let Some(steps) = self.steps {
            if steps < 2 {
                return Err(CliError::schema(format!("options.sweep.steps: need at least 2, got {steps}")));
            }
            let width = (hi - lo) / (steps - 1) as f64;
            return Ok((0..steps).map(|i| if i + 1 == steps { hi } else { lo + width * i as f64 }).collect());
        }
        let mut grid = Vec::new();
        if lo <= FINE_LIMIT {
            let end = hi.min(FINE_LIMIT);
            // Index arithmetic keeps grid points on exact multiples of the step.
            let first = (lo / FINE_STEP - 1e-9).ceil() as i64;
            let last = (end / FINE_STEP + 1e-9).floor() as i64;
            grid.extend((first..=last).map(|i| i as f64 * FINE_STEP));
            if grid.first().is_none_or(|&f| f > lo) {
                grid.insert(0, lo);
            }
        }
        let mut s = grid.last().map_or(lo, |&l| l + COARSE_STEP);
        while s <= hi + 1e-9 {
            grid.push(s);
            s += COARSE_STEP;
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub groups: Vec<Group>,
    pub supply: f64,
    pub options: Options,
}

impl ScenarioFile {
    pub fn market(&self) -> Market {
        Market::new(self.groups.clone(), self.supply).expect("validated while parsing")
    }
}

fn line_of(text: &str, span: Range<usize>) -> usize {
    text[..span.start.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a scenario. Errors name the offending field and
/// its line.
pub fn parse_scenario(text: &str) -> Result<ScenarioFile, CliError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s));
        CliError::parse(e.message().trim().to_string(), line)
    })?;

    let supply = *raw.supply.get_ref();
    if !(supply >= 0.0) || !supply.is_finite() {
        return Err(CliError::invalid(
            format!("supply: must be nonnegative and finite, got {supply}"),
            "supply",
            line_of(text, raw.supply.span()),
        ));
    }
    let entries = raw.groups.get_ref();
    if entries.is_empty() {
        return Err(CliError::invalid(
            "groups: at least one group is required",
            "groups",
            line_of(text, raw.groups.span()),
        ));
    }

    let mut groups = Vec::with_capacity(entries.len());
    for (i, entry) in entries.iter().enumerate() {
        let g = entry.get_ref();
        let theta = *g.theta.get_ref();
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(CliError::invalid(
                format!("groups[{i}].theta: must be positive and finite, got {theta}"),
                format!("groups[{i}].theta"),
                line_of(text, g.theta.span()),
            ));
        }
        let n = *g.n.get_ref();
        if n < 1 {
            return Err(CliError::invalid(
                format!("groups[{i}].n: must be at least 1, got {n}"),
                format!("groups[{i}].n"),
                line_of(text, g.n.span()),
            ));
        }
        groups.push(Group::new(theta, n as u64));
    }
    for b in 1..groups.len() {
        if let Some(a) = (0..b).find(|&a| groups[a].theta == groups[b].theta) {
            let (la, lb) = (line_of(text, entries[a].span()), line_of(text, entries[b].span()));
            return Err(CliError::invalid(
                format!("groups[{a}] (line {la}) and groups[{b}] (line {lb}) share theta = {}", groups[a].theta),
                format!("groups[{b}].theta"),
                lb,
            ));
        }
    }
    if let Some(tol) = raw.options.tolerance {
        if !(tol >= 0.0) || !tol.is_finite() {
            return Err(CliError::schema(format!("options.tolerance: must be nonnegative, got {tol}")));
        }
    }
    if raw.options.j == Some(0) {
        return Err(CliError::schema("options.j: must be at least 1"));
    }

    Market::new(groups.clone(), supply).map_err(|e| CliError::schema(e.to_string()))?;
    Ok(ScenarioFile { groups, supply, options: raw.options })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = "supply = 4.0\n\n[[groups]]\ntheta = 4.0\nn = 1\n\n[[groups]]\ntheta = 1.0\nn = 1\n";

    #[test]
    fn parses_basic() {
        let s = parse_scenario(BASIC).unwrap();
        assert_eq!(s.supply, 4.0);
        assert_eq!(s.groups, vec![Group::new(4.0, 1), Group::new(1.0, 1)]);
        assert_eq!(s.options, Options::default());
    }

    #[test]
    fn default_grid() {
        let g = SweepOptions::default().grid().unwrap();
        assert_eq!(g.len(), 5001);
        assert_eq!(g[341], 3.41);
        assert_eq!(*g.last().unwrap(), 50.0);
        let wide = SweepOptions { s_max: 53.5, ..SweepOptions::default() }.grid().unwrap();
        assert_eq!(&wide[5000..], &[50.0, 51.0, 52.0, 53.0]);
        let far = SweepOptions { s_min: 60.0, s_max: 62.0, ..SweepOptions::default() }.grid().unwrap();
        assert_eq!(far, vec![60.0, 61.0, 62.0]);
        let odd = SweepOptions { s_min: 0.005, s_max: 0.03, ..SweepOptions::default() }.grid().unwrap();
        assert_eq!(odd, vec![0.005, 0.01, 0.02, 0.03]);
    }

    #[test]
    fn explicit_grid() {
        let g = SweepOptions { s_min: 1.0, s_max: 2.0, steps: Some(3), j: None }.grid().unwrap();
        assert_eq!(g, vec![1.0, 1.5, 2.0]);
        assert!(SweepOptions { steps: Some(1), ..SweepOptions::default() }.grid().is_err());
        assert!(SweepOptions { s_min: 3.0, s_max: 2.0, ..SweepOptions::default() }.grid().is_err());
    }
}
