//! Complete price differentiation: one price per group.
//!
//! The revenue problem reduces to a weighted water-filling over the groups,
//! `sum_i N_i (sqrt(theta_i / lambda) - 1)^+ = S`. Because groups are sorted
//! by willingness to pay, the active set is always a prefix, so the
//! multiplier is found by shrinking the prefix from `I` until its lowest
//! group sits strictly above the water level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{Market, Tolerance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpSolution {
    /// Multiplier of the resource constraint.
    pub lambda_star: f64,
    /// Size of the effective market; 0 only when the supply is zero.
    pub k_eff: usize,
    pub prices: Vec<f64>,
    pub allocations: Vec<f64>,
    /// Admitted users per group. Always the full population.
    pub admitted: Vec<u64>,
    pub revenue: f64,
    /// Supply the solution was computed for.
    pub supply: f64,
}

/// `lambda(k) = (sum_{i<k} N_i sqrt(theta_i) / (S + sum_{i<k} N_i))^2` for `1 <= k <= I`.
pub fn water_fill_lambda(market: &Market, k: usize) -> Result<f64> {
    if k == 0 || k > market.len() {
        return Err(Error::IndexOutOfRange { index: k, len: market.len() });
    }
    let groups = &market.groups()[..k];
    let weighted: f64 = groups.iter().map(|g| g.n as f64 * g.theta.sqrt()).sum();
    let users: f64 = groups.iter().map(|g| g.n as f64).sum();
    Ok((weighted / (market.supply() + users)).powi(2))
}

pub fn solve_cp(market: &Market) -> CpSolution {
    solve_cp_with(market, Tolerance::default())
}

pub fn solve_cp_with(market: &Market, tol: Tolerance) -> CpSolution {
    let supply = market.supply();
    let groups = market.groups();
    if supply == 0.0 {
        return CpSolution {
            lambda_star: groups[0].theta,
            k_eff: 0,
            prices: groups.iter().map(|g| g.theta).collect(),
            allocations: vec![0.0; groups.len()],
            admitted: groups.iter().map(|g| g.n).collect(),
            revenue: 0.0,
            supply,
        };
    }

    // Prefix sums shrink as k decreases, so the whole search is O(I).
    let mut weighted: f64 = groups.iter().map(|g| g.n as f64 * g.theta.sqrt()).sum();
    let mut users: f64 = market.total_users();
    let mut k = groups.len();
    let lambda = loop {
        let lambda = (weighted / (supply + users)).powi(2);
        if k == 1 || groups[k - 1].theta > lambda + tol.eps() {
            break lambda;
        }
        let dropped = &groups[k - 1];
        weighted -= dropped.n as f64 * dropped.theta.sqrt();
        users -= dropped.n as f64;
        k -= 1;
    };

    let mut prices = Vec::with_capacity(groups.len());
    let mut allocations = Vec::with_capacity(groups.len());
    for (i, g) in groups.iter().enumerate() {
        if i < k {
            prices.push((g.theta * lambda).sqrt());
            allocations.push((g.theta / lambda).sqrt() - 1.0);
        } else {
            prices.push(g.theta);
            allocations.push(0.0);
        }
    }
    let revenue = groups.iter().zip(prices.iter().zip(&allocations)).map(|(g, (p, s))| g.n as f64 * p * s).sum();

    CpSolution {
        lambda_star: lambda,
        k_eff: k,
        prices,
        allocations,
        admitted: groups.iter().map(|g| g.n).collect(),
        revenue,
        supply,
    }
}

/// Revenue written as the single-price part plus a price-dispersion term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RevenueDecomposition {
    /// Users in the effective market.
    pub n_eff: f64,
    /// Average resource per effective user.
    pub s_bar: f64,
    /// Average willingness to pay per effective user.
    pub theta_bar: f64,
    /// Differentiation gain `g`; zero iff the effective market has one group.
    pub gain: f64,
    /// `n_eff * (s_bar * theta_bar + gain) / (s_bar + 1)`.
    pub revenue: f64,
}

pub fn cp_revenue_decomposition(market: &Market, sol: &CpSolution) -> Result<RevenueDecomposition> {
    if sol.prices.len() != market.len() || sol.allocations.len() != market.len() {
        return Err(Error::MismatchedSolution("group count differs"));
    }
    if sol.supply != market.supply() {
        return Err(Error::MismatchedSolution("supply differs"));
    }
    if sol.k_eff > market.len() {
        return Err(Error::MismatchedSolution("effective market larger than the market"));
    }
    let k = sol.k_eff;
    if k == 0 {
        return Ok(RevenueDecomposition { n_eff: 0.0, s_bar: 0.0, theta_bar: 0.0, gain: 0.0, revenue: 0.0 });
    }

    let n_eff = market.users_in_prefix(k);
    let share: Vec<f64> = (0..k).map(|i| market.population(i) / n_eff).collect();
    let s_bar = market.supply() / n_eff;
    let theta_bar: f64 = (0..k).map(|i| share[i] * market.theta(i)).sum();

    let mut dispersion = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            dispersion += share[i] * share[j] * (sol.prices[i] - sol.prices[j]).powi(2);
        }
    }
    let gain = dispersion / sol.lambda_star;
    let revenue = n_eff * (s_bar * theta_bar + gain) / (s_bar + 1.0);
    Ok(RevenueDecomposition { n_eff, s_bar, theta_bar, gain, revenue })
}
