//! Single pricing: every admitted user pays the same unit price.

use serde::{Deserialize, Serialize};

use crate::cp::solve_cp_with;
use crate::error::{Error, Result};
use crate::market::{Group, Market, Tolerance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpSolution {
    pub price: f64,
    /// Size of the effective market; 0 only when the supply is zero.
    pub k_eff: usize,
    pub allocations: Vec<f64>,
    pub revenue: f64,
    pub supply: f64,
}

/// Threshold search over a slice of groups sorted by decreasing `theta`.
///
/// Returns the effective prefix length and the market-clearing price
/// `sum N_i theta_i / (supply + sum N_i)` over that prefix. With zero supply
/// nobody buys and the price is the top willingness to pay.
pub(crate) fn single_price_threshold(groups: &[Group], supply: f64, eps: f64) -> (usize, f64) {
    if supply == 0.0 {
        return (0, groups[0].theta);
    }
    let mut weighted: f64 = groups.iter().map(|g| g.n as f64 * g.theta).sum();
    let mut users: f64 = groups.iter().map(|g| g.n as f64).sum();
    let mut k = groups.len();
    loop {
        let price = weighted / (supply + users);
        if k == 1 || groups[k - 1].theta > price + eps {
            return (k, price);
        }
        weighted -= groups[k - 1].n as f64 * groups[k - 1].theta;
        users -= groups[k - 1].n as f64;
        k -= 1;
    }
}

pub fn solve_sp(market: &Market) -> SpSolution {
    solve_sp_with(market, Tolerance::default())
}

pub fn solve_sp_with(market: &Market, tol: Tolerance) -> SpSolution {
    let (k, price) = single_price_threshold(market.groups(), market.supply(), tol.eps());
    let allocations: Vec<f64> =
        market.groups().iter().enumerate().map(|(i, g)| if i < k { g.theta / price - 1.0 } else { 0.0 }).collect();
    let revenue = market.groups().iter().zip(&allocations).map(|(g, s)| g.n as f64 * price * s).sum();
    SpSolution { price, k_eff: k, allocations, revenue, supply: market.supply() }
}

/// How one group fares under complete differentiation relative to the
/// single price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub cp_price_higher: bool,
    pub cp_alloc_lower: bool,
    /// The group's CP price equals the single price within tolerance; both
    /// flags are false in that case.
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub k_cp: usize,
    pub k_sp: usize,
    /// `p*^2 / lambda*`: the willingness to pay at which both schemes charge
    /// the same price.
    pub crossing_theta: f64,
    /// Groups `0..crossing_index` pay at least the single price under CP and
    /// receive no more resource; groups `crossing_index..k_sp` pay less and
    /// receive more.
    pub crossing_index: usize,
    pub groups: Vec<GroupComparison>,
}

pub fn compare_cp_sp(market: &Market) -> Result<ComparisonReport> {
    compare_cp_sp_with(market, Tolerance::default())
}

pub fn compare_cp_sp_with(market: &Market, tol: Tolerance) -> Result<ComparisonReport> {
    if market.supply() == 0.0 {
        return Err(Error::Domain("comparison needs a positive supply".into()));
    }
    let cp = solve_cp_with(market, tol);
    let sp = solve_sp_with(market, tol);
    let crossing_theta = sp.price * sp.price / cp.lambda_star;
    let crossing_index = (0..sp.k_eff).take_while(|&i| market.theta(i) >= crossing_theta - tol.eps()).count().max(1);

    let groups = (0..market.len())
        .map(|i| {
            let diff = cp.prices[i] - sp.price;
            let boundary = diff.abs() <= tol.eps();
            GroupComparison {
                cp_price_higher: !boundary && diff > 0.0,
                cp_alloc_lower: !boundary && cp.allocations[i] < sp.allocations[i],
                boundary,
            }
        })
        .collect();

    Ok(ComparisonReport { k_cp: cp.k_eff, k_sp: sp.k_eff, crossing_theta, crossing_index, groups })
}
