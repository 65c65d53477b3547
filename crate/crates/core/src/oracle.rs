//! Brute-force reference solvers.
//!
//! Nothing here calls into the production solvers; each routine reaches its
//! answer by a different method (bisection, grid search, unrestricted
//! enumeration) so that agreement means something.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iccp::PriceMenu;
use crate::market::{Group, Market};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Points in log-spaced price grids.
    pub grid_points: usize,
    /// Relative bracket width at which bisection stops.
    pub bisection_rtol: f64,
    /// Largest market the exhaustive partition search accepts.
    pub max_groups: usize,
    /// Largest cluster count the exhaustive partition search accepts.
    pub max_clusters: usize,
    /// Margin by which a group's willingness to pay must exceed its price.
    pub eps: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { grid_points: 100_000, bisection_rtol: 1e-15, max_groups: 12, max_clusters: 4, eps: 1e-9 }
    }
}

fn water_residual(market: &Market, lambda: f64) -> f64 {
    let used: f64 = market.groups().iter().map(|g| g.n as f64 * ((g.theta / lambda).sqrt() - 1.0).max(0.0)).sum();
    used - market.supply()
}

/// Multiplier of the resource constraint by bisection on the decreasing
/// residual `sum N_i (sqrt(theta_i / lambda) - 1)^+ - S`.
pub fn brute_lambda_bisection(market: &Market) -> Result<f64> {
    brute_lambda_bisection_with(market, &OracleConfig::default())
}

pub fn brute_lambda_bisection_with(market: &Market, cfg: &OracleConfig) -> Result<f64> {
    if !(market.supply() > 0.0) {
        return Err(Error::Domain("bisection needs a positive supply".into()));
    }
    let mut hi = market.theta(0);
    let mut lo = hi;
    while water_residual(market, lo) <= 0.0 {
        lo *= 0.25;
    }
    for _ in 0..2000 {
        if hi - lo <= cfg.bisection_rtol * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if water_residual(market, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn log_grid(lo: f64, hi: f64, points: usize) -> impl Iterator<Item = f64> {
    let (a, b) = (lo.ln(), hi.ln());
    let step = (b - a) / (points - 1) as f64;
    (0..points).map(move |i| if i + 1 == points { hi } else { (a + step * i as f64).exp() })
}

fn sp_grid_bounds(market: &Market) -> (f64, f64) {
    let low = market.theta(market.len() - 1);
    let lo = (low * 1e-3).min(low / (2.0 * (market.supply() + 1.0)));
    (lo, market.theta(0))
}

/// Best single price on a log grid, skipping prices whose demand exceeds
/// the supply. Returns `(price, revenue)`.
pub fn brute_best_single_price(market: &Market, grid_points: usize) -> Result<(f64, f64)> {
    if grid_points < 1000 {
        return Err(Error::Domain(format!("need at least 1000 grid points, got {grid_points}")));
    }
    if !(market.supply() > 0.0) {
        return Err(Error::Domain("grid search needs a positive supply".into()));
    }
    let (lo, hi) = sp_grid_bounds(market);
    let mut best = (hi, 0.0);
    for p in log_grid(lo, hi, grid_points) {
        let demand: f64 = market.groups().iter().map(|g| g.n as f64 * (g.theta / p - 1.0).max(0.0)).sum();
        if demand > market.supply() {
            continue;
        }
        let revenue = p * demand;
        if revenue > best.1 {
            best = (p, revenue);
        }
    }
    Ok(best)
}

/// Largest revenue the grid can miss when the true optimum is `price`.
///
/// The nearest feasible grid point lies within one log step above the
/// optimum, and revenue falls by at most the total population per unit of
/// price increase.
pub fn single_price_grid_error(market: &Market, grid_points: usize, price: f64) -> f64 {
    let (lo, hi) = sp_grid_bounds(market);
    let delta = (hi / lo).ln() / (grid_points - 1) as f64;
    market.total_users() * price * delta.exp_m1()
}

/// Best partition found by exhaustive search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExhaustiveResult {
    pub revenue: f64,
    /// Group indices in each cluster, clusters by decreasing price.
    pub clusters: Vec<Vec<usize>>,
    /// Groups that buy a positive amount, ascending.
    pub effective: Vec<usize>,
    /// Every cluster is a run of consecutive group indices.
    pub consecutive: bool,
    /// The effective groups are `0..effective.len()`.
    pub prefix: bool,
}

/// Highest revenue over every subset of groups as the served set and every
/// split of that subset into at most `j` clusters, consecutive or not.
pub fn brute_pp_exhaustive(market: &Market, j: usize) -> Result<ExhaustiveResult> {
    brute_pp_exhaustive_with(market, j, &OracleConfig::default())
}

pub fn brute_pp_exhaustive_with(market: &Market, j: usize, cfg: &OracleConfig) -> Result<ExhaustiveResult> {
    if market.len() > cfg.max_groups {
        return Err(Error::OracleCap(format!("{} groups exceeds {}", market.len(), cfg.max_groups)));
    }
    if j > cfg.max_clusters {
        return Err(Error::OracleCap(format!("{j} clusters exceeds {}", cfg.max_clusters)));
    }
    if j == 0 {
        return Err(Error::Domain("need at least one price".into()));
    }
    let empty = ExhaustiveResult { revenue: 0.0, clusters: vec![], effective: vec![], consecutive: true, prefix: true };
    if market.supply() == 0.0 {
        return Ok(empty);
    }

    let groups = market.groups();
    let mut best: Option<(f64, Vec<usize>, Vec<usize>)> = None;
    let mut labels = Vec::new();
    for mask in 1u32..(1 << groups.len()) {
        let members: Vec<usize> = (0..groups.len()).filter(|&i| mask & (1 << i) != 0).collect();
        labels.clear();
        labels.resize(members.len(), 0);
        loop {
            if let Some(revenue) = evaluate_assignment(groups, market.supply(), &members, &labels, cfg.eps) {
                if best.as_ref().is_none_or(|b| revenue > b.0) {
                    best = Some((revenue, members.clone(), labels.clone()));
                }
            }
            if !next_restricted_growth(&mut labels, j) {
                break;
            }
        }
    }

    let Some((revenue, members, labels)) = best else {
        return Ok(empty);
    };
    let blocks = labels.iter().max().map_or(0, |&m| m + 1);
    let mut clusters: Vec<Vec<usize>> =
        (0..blocks).map(|b| members.iter().zip(&labels).filter(|&(_, &l)| l == b).map(|(&i, _)| i).collect()).collect();
    clusters.sort_by_key(|c| c[0]);
    let consecutive = clusters.iter().all(|c| c.windows(2).all(|w| w[1] == w[0] + 1));
    let prefix = members.iter().enumerate().all(|(pos, &i)| pos == i);
    Ok(ExhaustiveResult { revenue, clusters, effective: members, consecutive, prefix })
}

/// Revenue when `members[t]` sits in cluster `labels[t]` and every member
/// must buy; `None` if some member would not.
fn evaluate_assignment(groups: &[Group], supply: f64, members: &[usize], labels: &[usize], eps: f64) -> Option<f64> {
    let blocks = labels.iter().max().unwrap() + 1;
    let mut users = vec![0.0; blocks];
    let mut weighted = vec![0.0; blocks];
    for (&i, &b) in members.iter().zip(labels) {
        users[b] += groups[i].n as f64;
        weighted[b] += groups[i].n as f64 * groups[i].theta;
    }
    let total: f64 = users.iter().sum();
    let v: f64 = (0..blocks).map(|b| users[b] * (weighted[b] / users[b]).sqrt()).sum();
    let sqrt_lambda = v / (supply + total);
    let mut revenue = 0.0;
    for (&i, &b) in members.iter().zip(labels) {
        let price = (weighted[b] / users[b]).sqrt() * sqrt_lambda;
        let g = groups[i];
        if g.theta <= price + eps {
            return None;
        }
        revenue += g.n as f64 * price * (g.theta / price - 1.0);
    }
    Some(revenue)
}

/// Next restricted-growth string with labels below `max_blocks`.
fn next_restricted_growth(labels: &mut [usize], max_blocks: usize) -> bool {
    for pos in (1..labels.len()).rev() {
        let ceiling = labels[..pos].iter().max().unwrap() + 1;
        if labels[pos] < ceiling && labels[pos] + 1 < max_blocks {
            labels[pos] += 1;
            for l in &mut labels[pos + 1..] {
                *l = 0;
            }
            return true;
        }
    }
    false
}

/// Best purchase from a menu found on a dense quantity grid over
/// `(0, s_max]`, plus every step boundary. Returns `(step, quantity, surplus)`;
/// the step is `None` when buying nothing is best.
pub fn brute_user_best_response(
    menu: &PriceMenu,
    theta: f64,
    s_max: f64,
    grid_points: usize,
) -> Result<(Option<usize>, f64, f64)> {
    if !(s_max > 0.0) || grid_points < 2 {
        return Err(Error::Domain("need a positive s_max and at least two grid points".into()));
    }
    let grid = (1..=grid_points).map(|i| s_max * i as f64 / grid_points as f64);
    let mut best = (None, 0.0, 0.0);
    for s in grid.chain(menu.thresholds()) {
        let Some(q) = menu.step_for(s) else { continue };
        let u = theta * s.ln_1p() - menu.steps()[q].price * s;
        if u > best.2 {
            best = (Some(q), s, u);
        }
    }
    Ok(best)
}

/// Smallest ratio allowed between adjacent willingness-to-pay values.
pub const MIN_THETA_RATIO: f64 = 1.0 + 1e-3;

/// Random market with up to `max_groups` groups: `theta` log-uniform on
/// `[0.1, 100]` with adjacent ratios at least [`MIN_THETA_RATIO`], `N` uniform
/// on `1..=50`, `S` log-uniform on `[0.01, 1000]`.
pub fn random_market<R: Rng + ?Sized>(rng: &mut R, max_groups: usize) -> Market {
    let count = rng.gen_range(1..=max_groups.max(1));
    random_market_with(rng, count)
}

/// Like [`random_market`] with exactly `count` groups.
pub fn random_market_with<R: Rng + ?Sized>(rng: &mut R, count: usize) -> Market {
    let log_uniform = |rng: &mut R, lo: f64, hi: f64| rng.gen_range(lo.ln()..hi.ln()).exp();
    let thetas = loop {
        let mut t: Vec<f64> = (0..count).map(|_| log_uniform(rng, 0.1, 100.0)).collect();
        t.sort_by(|a, b| b.total_cmp(a));
        if t.windows(2).all(|w| w[0] >= MIN_THETA_RATIO * w[1]) {
            break t;
        }
    };
    let groups = thetas.into_iter().map(|theta| Group::new(theta, rng.gen_range(1..=50))).collect();
    let supply = log_uniform(rng, 0.01, 1000.0);
    Market::new(groups, supply).expect("generated market is valid")
}
