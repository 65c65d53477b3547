//! Revenue-gain analysis: the closed-form two-group case and resource sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::Market;
use crate::pp::{solve_pp_with, PpOptions};
use crate::sp::solve_sp_with;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainRegion {
    /// Both groups buy under a single price.
    Increasing,
    /// Only the top group buys under a single price; both buy under CP.
    Decreasing,
    /// Only the top group buys under either scheme.
    Zero,
}

/// Relative revenue gain of complete differentiation over a single price in
/// a two-group market.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainPoint {
    /// `sqrt(theta_1 / theta_2)`.
    pub t: f64,
    /// Share of users in the high group.
    pub alpha: f64,
    /// Supply per user.
    pub s_bar: f64,
    pub gain: f64,
    pub region: GainRegion,
}

fn check_shape(alpha: f64, s_bar: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(s_bar > 0.0) || !s_bar.is_finite() {
        return Err(Error::Domain(format!("s_bar must be positive and finite, got {s_bar}")));
    }
    Ok(())
}

pub fn gain_two_group(t: f64, alpha: f64, s_bar: f64) -> Result<GainPoint> {
    if !(t > 1.0) || !t.is_finite() {
        return Err(Error::Domain(format!("t must exceed 1, got {t}")));
    }
    check_shape(alpha, s_bar)?;
    let edge = (s_bar + alpha) / alpha;
    let (increasing, decreasing) = gain_branches(t, alpha, s_bar);
    let (gain, region) = if t * t < edge {
        (increasing, GainRegion::Increasing)
    } else if t < edge {
        (decreasing, GainRegion::Decreasing)
    } else {
        (0.0, GainRegion::Zero)
    };
    Ok(GainPoint { t, alpha, s_bar, gain, region })
}

/// Both branch formulas evaluated at the same point, without choosing one.
/// They agree at `t = sqrt((s_bar + alpha) / alpha)`.
pub fn gain_branches(t: f64, alpha: f64, s_bar: f64) -> (f64, f64) {
    let increasing = alpha * (1.0 - alpha) * (t - 1.0).powi(2) / (s_bar * (1.0 + alpha * (t * t - 1.0)));
    let decreasing = (1.0 - alpha) * (s_bar + alpha - t * alpha).powi(2) / (alpha * s_bar * (1.0 + s_bar) * t * t);
    (increasing, decreasing)
}

/// Location and height of the gain peak over `t`.
pub fn gain_max(alpha: f64, s_bar: f64) -> Result<(f64, f64)> {
    check_shape(alpha, s_bar)?;
    let t_peak = ((s_bar + alpha) / alpha).sqrt();
    let g_max = (1.0 - alpha) * ((s_bar + alpha).sqrt() - alpha.sqrt()).powi(2) / (s_bar * (1.0 + s_bar));
    Ok((t_peak, g_max))
}

/// Supremum of the peak gain over all supplies per user, as `(s_bar, g_max)`.
///
/// The peak is unimodal in `ln s_bar`; a coarse log grid brackets it and
/// golden-section search refines it.
pub fn gain_max_over_supply(alpha: f64) -> Result<(f64, f64)> {
    check_shape(alpha, 1.0)?;
    let g = |x: f64| gain_max(alpha, x.exp()).map(|(_, g)| g).unwrap_or(0.0);
    let (lo, hi, n) = (-12.0_f64, 12.0_f64, 2400);
    let step = (hi - lo) / n as f64;
    let best = (0..=n).map(|i| lo + step * i as f64).fold((lo, g(lo)), |acc, x| {
        let v = g(x);
        if v > acc.1 {
            (x, v)
        } else {
            acc
        }
    });
    let (mut a, mut b) = (best.0 - step, best.0 + step);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if g(c) > g(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x.exp(), g(x).max(best.1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSample {
    pub s: f64,
    pub revenue: f64,
    /// `revenue / R_sp - 1`; 0 when the single-price revenue is 0.
    pub gain: f64,
    pub k_eff: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCurve {
    /// "SP", "CP" or "PP<j>".
    pub label: String,
    pub j: usize,
    pub samples: Vec<GainSample>,
    /// Supplies at which this curve splits from the next curve of the sweep.
    pub separations: Vec<f64>,
}

/// Relative revenue gap above which two curves count as apart.
pub const SEPARATION_RTOL: f64 = 1e-6;
/// Consecutive samples the gap must persist for.
pub const SEPARATION_RUN: usize = 3;

pub fn scheme_label(j: usize, groups: usize) -> String {
    if j == 1 {
        "SP".into()
    } else if j >= groups {
        "CP".into()
    } else {
        format!("PP{j}")
    }
}

/// Solves every `J` in `j_set` at every supply in `s_values`.
///
/// Curves come back in `j_set` order. Each curve's separations are taken
/// against the curve that follows it.
pub fn sweep_resource(market: &Market, s_values: &[f64], j_set: &[usize], opts: PpOptions) -> Result<Vec<GainCurve>> {
    if s_values.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(Error::Domain("supplies must be nonnegative and finite".into()));
    }
    if s_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("supplies must be strictly ascending".into()));
    }
    if j_set.contains(&0) {
        return Err(Error::Domain("price counts must be positive".into()));
    }

    // One row per supply: SP revenue, then one (revenue, k) per J.
    let rows: Vec<(f64, Vec<(f64, usize)>)> = s_values
        .par_iter()
        .map(|&s| {
            let m = market.with_supply(s)?;
            let base = solve_sp_with(&m, opts.tol).revenue;
            let per_j = j_set
                .iter()
                .map(|&j| solve_pp_with(&m, j, opts).map(|sol| (sol.revenue, sol.k_eff)))
                .collect::<Result<Vec<_>>>()?;
            Ok((base, per_j))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut curves: Vec<GainCurve> = j_set
        .iter()
        .enumerate()
        .map(|(c, &j)| GainCurve {
            label: scheme_label(j, market.len()),
            j,
            samples: s_values
                .iter()
                .zip(&rows)
                .map(|(&s, (base, per_j))| {
                    let (revenue, k_eff) = per_j[c];
                    let gain = if *base > 0.0 { revenue / base - 1.0 } else { 0.0 };
                    GainSample { s, revenue, gain, k_eff }
                })
                .collect(),
            separations: Vec::new(),
        })
        .collect();

    for c in 0..curves.len().saturating_sub(1) {
        curves[c].separations = separation_points(&curves[c], &curves[c + 1]);
    }
    Ok(curves)
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Supplies where two curves go from coinciding to apart.
///
/// A split is reported at the first sample of a run of at least
/// [`SEPARATION_RUN`] samples whose relative revenue gap exceeds
/// [`SEPARATION_RTOL`], provided the curves coincided just before.
pub fn separation_points(a: &GainCurve, b: &GainCurve) -> Vec<f64> {
    let apart: Vec<bool> =
        a.samples.iter().zip(&b.samples).map(|(x, y)| relative_gap(x.revenue, y.revenue) > SEPARATION_RTOL).collect();
    let mut points = Vec::new();
    let mut i = 0;
    while i < apart.len() {
        if !apart[i] {
            i += 1;
            continue;
        }
        let run = apart[i..].iter().take_while(|&&x| x).count();
        if run >= SEPARATION_RUN && i > 0 {
            points.push(a.samples[i].s);
        }
        i += run;
    }
    points
}

/// Supplies at which the gain has a strict local maximum.
pub fn gain_peaks(curve: &GainCurve) -> Vec<f64> {
    curve
        .samples
        .windows(3)
        .filter(|w| w[1].gain > w[0].gain && w[1].gain >= w[2].gain && w[1].gain > 1e-12)
        .map(|w| w[1].s)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cp::solve_cp;
    use crate::market::Group;
    use crate::sp::solve_sp;
    use approx::assert_abs_diff_eq;

    #[test]
    fn increasing_branch() {
        let p = gain_two_group(2.0, 0.5, 2.0).unwrap();
        assert_eq!(p.region, GainRegion::Increasing);
        assert_abs_diff_eq!(p.gain, 0.05, epsilon = 1e-15);
        let m = Market::new(vec![Group::new(4.0, 1), Group::new(1.0, 1)], 4.0).unwrap();
        let ratio = solve_cp(&m).revenue / solve_sp(&m).revenue - 1.0;
        assert_abs_diff_eq!(p.gain, ratio, epsilon = 1e-12);
    }

    #[test]
    fn zero_branch() {
        let p = gain_two_group(5.0, 0.5, 2.0).unwrap();
        assert_eq!(p.region, GainRegion::Zero);
        assert_eq!(p.gain, 0.0);
    }

    #[test]
    fn continuity_at_peak() {
        let t = 5f64.sqrt();
        let (alpha, s_bar) = (0.5, 2.0);
        let (inc, dec) = gain_branches(t, alpha, s_bar);
        assert_abs_diff_eq!(inc, dec, epsilon = 1e-12);
        assert_abs_diff_eq!(inc, 0.0637, epsilon = 1e-4);
        let (t_peak, g) = gain_max(alpha, s_bar).unwrap();
        assert_abs_diff_eq!(t_peak, t, epsilon = 1e-15);
        assert_abs_diff_eq!(g, inc, epsilon = 1e-12);
    }

    #[test]
    fn domain_errors() {
        assert!(gain_two_group(1.0, 0.5, 2.0).is_err());
        assert!(gain_two_group(2.0, 0.0, 2.0).is_err());
        assert!(gain_two_group(2.0, 1.0, 2.0).is_err());
        assert!(gain_two_group(2.0, 0.5, 0.0).is_err());
        assert!(gain_max(0.5, -1.0).is_err());
    }

    #[test]
    fn headline_peaks() {
        assert!(gain_max_over_supply(0.01).unwrap().1 > 0.5);
        assert!(gain_max_over_supply(0.1).unwrap().1 > 0.2);
        assert!(gain_max_over_supply(0.5).unwrap().1 <= 0.08);
        assert!(gain_max_over_supply(0.9).unwrap().1 <= 0.02);
    }

    #[test]
    fn peak_decreases_with_alpha() {
        for &s_bar in &[0.01, 0.3, 1.0, 7.0, 100.0] {
            let peaks: Vec<f64> = (1..100).map(|i| gain_max(i as f64 / 100.0, s_bar).unwrap().1).collect();
            assert!(peaks.windows(2).all(|w| w[1] < w[0]), "s_bar = {s_bar}");
        }
    }

    fn curve(values: &[(f64, f64)]) -> GainCurve {
        GainCurve {
            label: "x".into(),
            j: 1,
            samples: values.iter().map(|&(s, revenue)| GainSample { s, revenue, gain: 0.0, k_eff: 1 }).collect(),
            separations: vec![],
        }
    }

    #[test]
    fn separation_needs_a_run() {
        let a = curve(&[(0.0, 1.0), (1.0, 1.0), (2.0, 1.0), (3.0, 1.0), (4.0, 1.0), (5.0, 1.0)]);
        let b = curve(&[(0.0, 1.0), (1.0, 1.1), (2.0, 1.0), (3.0, 1.1), (4.0, 1.1), (5.0, 1.1)]);
        assert_eq!(separation_points(&a, &b), vec![3.0]);
        assert_eq!(separation_points(&a, &a), Vec::<f64>::new());
    }

    #[test]
    fn two_group_sweep_peaks_where_sp_threshold_moves() {
        let m = Market::new(vec![Group::new(9.0, 1), Group::new(1.0, 3)], 1.0).unwrap();
        let s: Vec<f64> = (1..=2000).map(|i| i as f64 * 0.01).collect();
        let curves = sweep_resource(&m, &s, &[2], PpOptions::default()).unwrap();
        let peaks = gain_peaks(&curves[0]);
        assert_eq!(peaks.len(), 1);
        // Single price starts serving group 2 once N_1 (theta_1 - theta_2) = S theta_2.
        assert!((peaks[0] - 8.0).abs() <= 0.01 + 1e-12, "{peaks:?}");
    }

    #[test]
    fn sweep_validates_input() {
        let m = Market::new(vec![Group::new(9.0, 1)], 1.0).unwrap();
        assert!(sweep_resource(&m, &[2.0, 1.0], &[1], PpOptions::default()).is_err());
        assert!(sweep_resource(&m, &[1.0], &[0], PpOptions::default()).is_err());
        assert!(sweep_resource(&m, &[-1.0], &[1], PpOptions::default()).is_err());
    }
}
