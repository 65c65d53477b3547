//! Market description and the users' best response.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default absolute tolerance for threshold comparisons.
pub const DEFAULT_EPS: f64 = 1e-9;

/// Absolute tolerance used when a solver compares a willingness to pay
/// against a water level or a price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance(pub f64);

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance(DEFAULT_EPS)
    }
}

impl Tolerance {
    pub fn eps(self) -> f64 {
        self.0
    }
}

/// One class of homogeneous users.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Group {
    /// Willingness to pay.
    pub theta: f64,
    /// Number of users in the group.
    pub n: u64,
}

impl Group {
    pub fn new(theta: f64, n: u64) -> Self {
        Group { theta, n }
    }
}

/// Validated solver input: groups sorted by strictly decreasing `theta`
/// plus the total supply.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Market {
    groups: Vec<Group>,
    supply: f64,
}

impl Market {
    pub fn new(groups: Vec<Group>, supply: f64) -> Result<Self> {
        validate_market(groups, supply)
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn supply(&self) -> f64 {
        self.supply
    }

    /// Number of groups, `I`.
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn theta(&self, i: usize) -> f64 {
        self.groups[i].theta
    }

    pub fn population(&self, i: usize) -> f64 {
        self.groups[i].n as f64
    }

    /// Total number of users in groups `0..k`.
    pub fn users_in_prefix(&self, k: usize) -> f64 {
        self.groups[..k].iter().map(|g| g.n as f64).sum()
    }

    pub fn total_users(&self) -> f64 {
        self.users_in_prefix(self.len())
    }

    /// Same groups, different supply.
    pub fn with_supply(&self, supply: f64) -> Result<Self> {
        check_supply(supply)?;
        Ok(Market { groups: self.groups.clone(), supply })
    }
}

fn check_supply(supply: f64) -> Result<()> {
    if !(supply >= 0.0) || !supply.is_finite() {
        return Err(Error::InvalidSupply(supply));
    }
    Ok(())
}

/// Builds a [`Market`], sorting groups by decreasing willingness to pay.
///
/// Groups that share a willingness to pay are rejected rather than merged;
/// callers that want merging can sum the populations themselves.
pub fn validate_market(groups: Vec<Group>, supply: f64) -> Result<Market> {
    if groups.is_empty() {
        return Err(Error::EmptyMarket);
    }
    for (index, g) in groups.iter().enumerate() {
        if !(g.theta > 0.0) || !g.theta.is_finite() {
            return Err(Error::InvalidTheta { index, value: g.theta });
        }
        if g.n == 0 {
            return Err(Error::InvalidPopulation { index });
        }
    }
    check_supply(supply)?;

    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| groups[b].theta.total_cmp(&groups[a].theta));
    for pair in order.windows(2) {
        if groups[pair[0]].theta == groups[pair[1]].theta {
            let (first, second) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            return Err(Error::DuplicateTheta { first, second, theta: groups[first].theta });
        }
    }
    let groups = order.into_iter().map(|i| groups[i]).collect();
    Ok(Market { groups, supply })
}

/// Users' optimal purchase at a given unit price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandResult {
    pub quantity: f64,
    pub surplus: f64,
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::Domain(format!("willingness to pay must be positive, got {theta}")));
    }
    Ok(())
}

fn check_quantity(s: f64) -> Result<()> {
    if !(s >= 0.0) {
        return Err(Error::Domain(format!("quantity must be nonnegative, got {s}")));
    }
    Ok(())
}

/// `theta * ln(1 + s)`.
pub fn utility(theta: f64, s: f64) -> Result<f64> {
    check_theta(theta)?;
    check_quantity(s)?;
    Ok(theta * s.ln_1p())
}

/// Utility minus payment for buying `s` units at unit price `price`.
pub fn surplus_at(theta: f64, s: f64, price: f64) -> Result<f64> {
    Ok(utility(theta, s)? - price * s)
}

/// Best response `max(theta / price - 1, 0)` and the surplus it earns.
pub fn demand(theta: f64, price: f64) -> Result<DemandResult> {
    check_theta(theta)?;
    if !(price > 0.0) {
        return Err(Error::Domain(format!("price must be positive, got {price}")));
    }
    let quantity = (theta / price - 1.0).max(0.0);
    let surplus = surplus_at(theta, quantity, price)?;
    Ok(DemandResult { quantity, surplus })
}
