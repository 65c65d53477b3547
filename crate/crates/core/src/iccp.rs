//! Quantity-based price menus for the incomplete-information case.
//!
//! The provider cannot tell groups apart, so it posts one step tariff: the
//! larger the purchase, the higher the unit price. Each group should pick
//! the step carrying its complete-differentiation price and quantity. A
//! group `i` tempted by the cheaper step `q` can buy at most the
//! indifference quantity `s_{i->q}` before it is better off staying, which
//! bounds where the step boundaries may sit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cp::CpSolution;
use crate::error::{Error, Result};
use crate::market::{Market, Tolerance};

/// Absolute width at which bisection stops.
const BISECTION_TOL: f64 = 1e-13;
const MAX_BISECTIONS: usize = 400;

/// Upper end of the bracket for every `t_q`.
const T_BRACKET_HI: f64 = 2.5;

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> Result<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if !(flo < 0.0 && fhi > 0.0) {
        return Err(Error::RootNotBracketed { lo, hi });
    }
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= BISECTION_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Quantity below `s_i` at which group `i`, paying `p_q` instead of `p_i`,
/// earns exactly the surplus of its intended purchase `s_i`.
pub fn indifference_quantity(theta_i: f64, p_i: f64, p_q: f64, s_i: f64) -> Result<f64> {
    if !(p_q >= 0.0 && p_q < p_i) {
        return Err(Error::Domain(format!("need 0 <= p_q < p_i, got p_q={p_q}, p_i={p_i}")));
    }
    if !(theta_i > p_i) || !theta_i.is_finite() {
        return Err(Error::Domain(format!("group must buy at its own price: theta={theta_i}, p={p_i}")));
    }
    if !(s_i > 0.0) || !s_i.is_finite() {
        return Err(Error::Domain(format!("intended quantity must be positive, got {s_i}")));
    }
    let target = theta_i * s_i.ln_1p() - p_i * s_i;
    // Negative at 0, equal to (p_i - p_q) s_i > 0 at s_i.
    bisect(0.0, s_i, |s| theta_i * s.ln_1p() - p_q * s - target)
}

/// `ln(1 + x) / x`, continuous at 0.
fn ln_1p_ratio(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.ln_1p() / x
    }
}

/// `g(t) / (t - 1)` where
/// `g(t) = t^2 ln t - (t^2 - 1) + (a t + b)(t - 1) / d`.
fn reduced_g(t: f64, a: f64, b: f64, d: f64) -> f64 {
    t * t * ln_1p_ratio(t - 1.0) - (t + 1.0) + (a * t + b) / d
}

/// Larger root of `t^2 ln t = t^2 - 1`; no `t_q` can reach it.
pub fn t_root() -> f64 {
    bisect(1.0, T_BRACKET_HI, |t| reduced_g(t, 0.0, 0.0, 1.0)).expect("bracket verified analytically")
}

/// Adjacent-ratio test for a menu that reproduces complete differentiation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcFeasibility {
    /// `t_q` for each adjacent pair `(q, q + 1)` of effective groups.
    pub t_thresholds: Vec<f64>,
    /// `sqrt(theta_q / theta_{q+1})`.
    pub ratios: Vec<f64>,
    pub feasible: bool,
    /// `ratios - t_thresholds`.
    pub margins: Vec<f64>,
}

impl IcFeasibility {
    /// First adjacent pair with a negative margin.
    pub fn first_violation(&self) -> Option<(usize, f64)> {
        self.margins.iter().copied().enumerate().find(|&(_, m)| m < 0.0)
    }
}

fn check_solution(market: &Market, cp: &CpSolution) -> Result<()> {
    if cp.prices.len() != market.len() || cp.allocations.len() != market.len() {
        return Err(Error::MismatchedSolution("group count differs"));
    }
    if cp.supply != market.supply() {
        return Err(Error::MismatchedSolution("supply differs"));
    }
    if cp.k_eff > market.len() {
        return Err(Error::MismatchedSolution("effective market larger than the market"));
    }
    Ok(())
}

pub fn feasibility_thresholds(market: &Market, cp: &CpSolution) -> Result<IcFeasibility> {
    check_solution(market, cp)?;
    let k = cp.k_eff;
    if k < 2 {
        return Ok(IcFeasibility { t_thresholds: vec![], ratios: vec![], feasible: true, margins: vec![] });
    }
    let d = market.supply() + market.users_in_prefix(k);
    let mut t_thresholds = Vec::with_capacity(k - 1);
    let mut ratios = Vec::with_capacity(k - 1);
    let mut above = 0.0;
    for q in 0..k - 1 {
        above += market.population(q);
        let next = market.population(q + 1);
        t_thresholds.push(bisect(1.0, T_BRACKET_HI, |t| reduced_g(t, above, next, d))?);
        ratios.push((market.theta(q) / market.theta(q + 1)).sqrt());
    }
    let margins: Vec<f64> = ratios.iter().zip(&t_thresholds).map(|(r, t)| r - t).collect();
    let feasible = margins.iter().all(|&m| m >= 0.0);
    Ok(IcFeasibility { t_thresholds, ratios, feasible, margins })
}

/// One step of a menu: unit `price` for quantities in `(lower, upper]`.
/// The first step has no upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MenuStep {
    pub price: f64,
    pub lower: f64,
    pub upper: Option<f64>,
}

impl MenuStep {
    pub fn contains(&self, s: f64) -> bool {
        s > self.lower && self.upper.is_none_or(|u| s <= u)
    }
}

/// Step tariff with unit prices decreasing as the purchased quantity falls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceMenu {
    steps: Vec<MenuStep>,
}

impl PriceMenu {
    /// `prices` strictly decreasing and positive; `thresholds` strictly
    /// decreasing and positive with one fewer entry. Threshold `q` separates
    /// step `q` (above it) from step `q + 1` (at or below it).
    pub fn from_thresholds(prices: &[f64], thresholds: &[f64]) -> Result<Self> {
        if prices.is_empty() {
            return Err(Error::InvalidMenu("no prices".into()));
        }
        if thresholds.len() + 1 != prices.len() {
            return Err(Error::InvalidMenu(format!(
                "{} prices need {} thresholds, got {}",
                prices.len(),
                prices.len() - 1,
                thresholds.len()
            )));
        }
        if prices.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidMenu("prices must be positive and finite".into()));
        }
        if thresholds.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidMenu("thresholds must be positive and finite".into()));
        }
        if prices.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidMenu("prices must be strictly decreasing".into()));
        }
        if thresholds.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidMenu("thresholds must be strictly decreasing".into()));
        }
        let steps = prices
            .iter()
            .enumerate()
            .map(|(q, &price)| MenuStep {
                price,
                lower: thresholds.get(q).copied().unwrap_or(0.0),
                upper: if q == 0 { None } else { Some(thresholds[q - 1]) },
            })
            .collect();
        Ok(PriceMenu { steps })
    }

    pub fn steps(&self) -> &[MenuStep] {
        &self.steps
    }

    pub fn prices(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.price).collect()
    }

    pub fn thresholds(&self) -> Vec<f64> {
        self.steps[..self.steps.len() - 1].iter().map(|s| s.lower).collect()
    }

    /// Step that applies to a purchase of `s > 0` units.
    pub fn step_for(&self, s: f64) -> Option<usize> {
        self.steps.iter().position(|step| step.contains(s))
    }
}

/// Where each boundary sits inside its admissible band
/// `[s*_q, min_{i<q} s_{i->q}]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdPlacement {
    /// At the intended quantity of the cheaper step.
    #[default]
    Tight,
    Midpoint,
}

/// For each boundary `q` (between steps `q` and `q + 1`): the intended
/// quantity `s*_{q+1}` and the smallest indifference quantity of any
/// higher-priced group at price `p*_{q+1}`.
pub fn admissible_bands(market: &Market, cp: &CpSolution) -> Result<Vec<(f64, f64)>> {
    check_solution(market, cp)?;
    let k = cp.k_eff;
    (1..k)
        .map(|q| {
            let mut least = f64::INFINITY;
            for i in 0..q {
                let s = indifference_quantity(market.theta(i), cp.prices[i], cp.prices[q], cp.allocations[i])?;
                least = least.min(s);
            }
            Ok((cp.allocations[q], least))
        })
        .collect()
}

pub fn build_menu(market: &Market, cp: &CpSolution) -> Result<PriceMenu> {
    build_menu_with(market, cp, ThresholdPlacement::Tight, Tolerance::default())
}

pub fn build_menu_with(
    market: &Market,
    cp: &CpSolution,
    placement: ThresholdPlacement,
    tol: Tolerance,
) -> Result<PriceMenu> {
    let report = feasibility_thresholds(market, cp)?;
    if let Some((q, margin)) = report.first_violation() {
        return Err(Error::Infeasible { q, margin });
    }
    if cp.k_eff == 0 {
        return Err(Error::InvalidMenu("no group buys at zero supply".into()));
    }
    let bands = admissible_bands(market, cp)?;
    let mut thresholds = Vec::with_capacity(bands.len());
    for (q, &(intended, indifference)) in bands.iter().enumerate() {
        if intended > indifference + tol.eps() {
            return Err(Error::IncentiveViolation { step: q + 1, intended, indifference });
        }
        thresholds.push(match placement {
            ThresholdPlacement::Tight => intended,
            ThresholdPlacement::Midpoint => 0.5 * (intended + indifference.max(intended)),
        });
    }
    PriceMenu::from_thresholds(&cp.prices[..cp.k_eff], &thresholds)
}

/// What one group buys from the menu, next to what it was meant to buy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupChoice {
    /// `None` when the group buys nothing.
    pub step: Option<usize>,
    pub quantity: f64,
    pub surplus: f64,
    pub intended_step: Option<usize>,
    pub intended_quantity: f64,
    pub intended_surplus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub choices: Vec<GroupChoice>,
    /// Every group picked its intended step and quantity.
    pub compatible: bool,
    /// Payments collected under the observed choices.
    pub revenue: f64,
}

/// Surplus ties within this relative gap go to the higher-priced step.
const TIE_RTOL: f64 = 1e-12;
/// Quantity agreement required for a choice to count as intended.
const QUANTITY_TOL: f64 = 1e-8;

/// Best purchase for a user with willingness to pay `theta`.
///
/// Maximizes surplus over each step's interval in closed form and keeps the
/// best step. Buying nothing is always available.
pub fn best_response(menu: &PriceMenu, theta: f64) -> (Option<usize>, f64, f64) {
    let mut best: (Option<usize>, f64, f64) = (None, 0.0, 0.0);
    for (q, step) in menu.steps().iter().enumerate() {
        let free = theta / step.price - 1.0;
        let s = free.max(step.lower).min(step.upper.unwrap_or(f64::INFINITY));
        if s <= 0.0 {
            continue;
        }
        let u = theta * s.ln_1p() - step.price * s;
        if u > best.2 + TIE_RTOL * best.2.abs().max(1e-300) && u > 0.0 {
            best = (Some(q), s, u);
        }
    }
    best
}

pub fn simulate_self_selection(menu: &PriceMenu, market: &Market, cp: &CpSolution) -> Result<SelectionReport> {
    check_solution(market, cp)?;
    let choices: Vec<GroupChoice> = (0..market.len())
        .into_par_iter()
        .map(|i| {
            let theta = market.theta(i);
            let (step, quantity, surplus) = best_response(menu, theta);
            let (intended_step, intended_quantity, intended_surplus) = if i < cp.k_eff {
                let (p, s) = (cp.prices[i], cp.allocations[i]);
                (Some(i), s, theta * s.ln_1p() - p * s)
            } else {
                (None, 0.0, 0.0)
            };
            GroupChoice { step, quantity, surplus, intended_step, intended_quantity, intended_surplus }
        })
        .collect();

    let compatible = choices.iter().all(|c| {
        c.step == c.intended_step
            && (c.quantity - c.intended_quantity).abs() <= QUANTITY_TOL * c.intended_quantity.max(1.0)
    });
    let revenue = choices
        .iter()
        .zip(market.groups())
        .map(|(c, g)| c.step.map_or(0.0, |q| g.n as f64 * menu.steps()[q].price * c.quantity))
        .sum();
    Ok(SelectionReport { choices, compatible, revenue })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cp::solve_cp;
    use crate::market::Group;
    use approx::assert_abs_diff_eq;

    fn two_group(theta2: f64) -> Market {
        Market::new(vec![Group::new(4.0, 1), Group::new(theta2, 1)], 4.0).unwrap()
    }

    #[test]
    fn indifference_values() {
        let s = indifference_quantity(4.0, 1.0, 0.5, 3.0).unwrap();
        assert_abs_diff_eq!(s, 1.193, epsilon = 1e-3);
        let lhs = 4.0 * s.ln_1p() - 0.5 * s;
        assert_abs_diff_eq!(lhs, 4.0 * 4f64.ln() - 3.0, epsilon = 1e-10);

        let near = indifference_quantity(4.0, 1.0, 1.0 - 1e-9, 3.0).unwrap();
        assert!((near - 3.0).abs() < 1e-3);

        let cheap = indifference_quantity(4.0, 1.0, 1e-9, 3.0).unwrap();
        assert_abs_diff_eq!(cheap, (4f64.ln() - 0.75).exp() - 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(cheap, 0.889, epsilon = 1e-3);
    }

    #[test]
    fn indifference_domain() {
        assert!(indifference_quantity(4.0, 1.0, 1.0, 3.0).is_err());
        assert!(indifference_quantity(4.0, 1.0, 2.0, 3.0).is_err());
        assert!(indifference_quantity(1.0, 1.0, 0.5, 3.0).is_err());
        assert!(indifference_quantity(4.0, 1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn root_of_unbounded_case() {
        let t = t_root();
        assert_abs_diff_eq!(t, 2.21846, epsilon = 1e-4);
        assert!((t * t * t.ln() - (t * t - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn two_group_threshold() {
        let m = two_group(1.0);
        let f = feasibility_thresholds(&m, &solve_cp(&m)).unwrap();
        assert_eq!(f.t_thresholds.len(), 1);
        let t = f.t_thresholds[0];
        assert_abs_diff_eq!(t, 1.756_161_763_33, epsilon = 1e-9);
        let g = t * t * t.ln() - (t * t - 1.0) + (t + 1.0) * (t - 1.0) / 6.0;
        assert!(g.abs() < 1e-10);
        assert!(f.feasible);
        assert_abs_diff_eq!(f.margins[0], 2.0 - t, epsilon = 1e-15);
    }

    #[test]
    fn close_groups_are_infeasible() {
        let m = two_group(3.9);
        let cp = solve_cp(&m);
        let f = feasibility_thresholds(&m, &cp).unwrap();
        assert!(!f.feasible);
        assert!(f.ratios[0] < 1.013);
        assert!(matches!(build_menu(&m, &cp), Err(Error::Infeasible { q: 0, .. })));
    }

    #[test]
    fn single_effective_group_is_trivially_feasible() {
        let m = Market::new(vec![Group::new(4.0, 1), Group::new(1.0, 1)], 1.0).unwrap();
        let cp = solve_cp(&m);
        let f = feasibility_thresholds(&m, &cp).unwrap();
        assert!(f.feasible && f.t_thresholds.is_empty());
        let menu = build_menu(&m, &cp).unwrap();
        assert_eq!(menu.steps().len(), 1);
        assert!(menu.thresholds().is_empty());
        let r = simulate_self_selection(&menu, &m, &cp).unwrap();
        assert!(r.compatible);
        assert_eq!(r.choices[1].quantity, 0.0);
    }

    #[test]
    fn two_step_menu() {
        let m = two_group(1.0);
        let cp = solve_cp(&m);
        let menu = build_menu(&m, &cp).unwrap();
        assert_eq!(menu.prices(), vec![1.0, 0.5]);
        assert_abs_diff_eq!(menu.thresholds()[0], 1.0, epsilon = 1e-12);
        assert_eq!(menu.step_for(1.0 + 1e-9), Some(0));
        assert_eq!(menu.step_for(1.0), Some(1));
        assert_eq!(menu.step_for(0.0), None);

        let r = simulate_self_selection(&menu, &m, &cp).unwrap();
        assert!(r.compatible);
        assert_eq!(r.choices[0].step, Some(0));
        assert_abs_diff_eq!(r.choices[0].quantity, 3.0, epsilon = 1e-12);
        assert_eq!(r.choices[1].step, Some(1));
        assert_abs_diff_eq!(r.choices[1].quantity, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.revenue, 3.5, epsilon = 1e-12);
    }

    #[test]
    fn midpoint_placement_stays_compatible() {
        let m = two_group(1.0);
        let cp = solve_cp(&m);
        let menu = build_menu_with(&m, &cp, ThresholdPlacement::Midpoint, Tolerance::default()).unwrap();
        let s12 = indifference_quantity(4.0, 1.0, 0.5, 3.0).unwrap();
        assert_abs_diff_eq!(menu.thresholds()[0], 0.5 * (1.0 + s12), epsilon = 1e-12);
        assert!(simulate_self_selection(&menu, &m, &cp).unwrap().compatible);
    }

    #[test]
    fn loose_threshold_invites_defection() {
        let m = two_group(1.0);
        let cp = solve_cp(&m);
        let menu = PriceMenu::from_thresholds(&[1.0, 0.5], &[1.5]).unwrap();
        let r = simulate_self_selection(&menu, &m, &cp).unwrap();
        assert!(!r.compatible);
        assert_eq!(r.choices[0].step, Some(1));
        assert_abs_diff_eq!(r.choices[0].quantity, 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.choices[0].surplus, 4.0 * 2.5f64.ln() - 0.75, epsilon = 1e-12);
        assert!(r.choices[0].surplus > r.choices[0].intended_surplus);
    }

    #[test]
    fn priced_out_user_buys_nothing() {
        let menu = PriceMenu::from_thresholds(&[1.0, 0.5], &[1.0]).unwrap();
        assert_eq!(best_response(&menu, 0.4), (None, 0.0, 0.0));
        assert_eq!(best_response(&menu, 0.5), (None, 0.0, 0.0));
    }

    #[test]
    fn menu_validation() {
        assert!(PriceMenu::from_thresholds(&[], &[]).is_err());
        assert!(PriceMenu::from_thresholds(&[1.0, 2.0], &[1.0]).is_err());
        assert!(PriceMenu::from_thresholds(&[2.0, 1.0], &[]).is_err());
        assert!(PriceMenu::from_thresholds(&[3.0, 2.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(PriceMenu::from_thresholds(&[2.0, 1.0], &[-1.0]).is_err());
    }

    #[test]
    fn four_group_menu() {
        let m =
            Market::new(vec![Group::new(729.0, 1), Group::new(81.0, 2), Group::new(9.0, 4), Group::new(1.0, 8)], 60.0)
                .unwrap();
        let cp = solve_cp(&m);
        assert_eq!(cp.k_eff, 4);
        let menu = build_menu(&m, &cp).unwrap();
        assert_eq!(menu.steps().len(), 4);
        assert!(menu.prices().windows(2).all(|w| w[0] > w[1]));
        assert!(menu.thresholds().windows(2).all(|w| w[0] > w[1]));
        let r = simulate_self_selection(&menu, &m, &cp).unwrap();
        assert!(r.compatible);
        assert_abs_diff_eq!(r.revenue, cp.revenue, epsilon = 1e-8 * cp.revenue);
    }

    #[test]
    fn reduced_g_shape() {
        // g(1) = 0, g'(1) < 0, g convex beyond 1.
        let (a, b, d) = (3.0, 2.0, 9.0);
        let g = |t: f64| (t - 1.0) * reduced_g(t, a, b, d);
        assert_eq!(g(1.0), 0.0);
        let h = 1e-5;
        assert!((g(1.0 + h) - g(1.0)) / h < 0.0);
        for i in 1..100 {
            let t = 1.0 + 0.02 * i as f64;
            assert!(g(t + h) - 2.0 * g(t) + g(t - h) > 0.0, "not convex at {t}");
        }
    }
}
