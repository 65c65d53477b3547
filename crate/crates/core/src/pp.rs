//! Partial price differentiation: at most `J` distinct prices.
//!
//! Groups charged the same price form a cluster. Within a cluster the
//! provider faces a single-price problem, so each cluster acts like one
//! "super-group" with the summed population and the population-weighted
//! average willingness to pay. Across clusters the problem is then a
//! complete-differentiation problem over super-groups, whose revenue for an
//! effective prefix `0..k` is
//!
//! ```text
//! R(a) = sum_{i<k} N_i theta_i - (sum_j N^j sqrt(theta^j))^2 / (S + sum_{i<k} N_i)
//! ```
//!
//! Only partitions into runs of consecutive groups need to be searched,
//! which leaves `C(k-1, J-1)` candidates per prefix.

use std::fmt;
use std::ops::Range;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::cp::solve_cp_with;
use crate::error::{Error, Result};
use crate::market::{Market, Tolerance};
use crate::sp::single_price_threshold;

/// Split of groups `0..k` into consecutive, nonempty clusters.
///
/// `boundaries` holds the first group index of clusters `1..J`; cluster 0
/// always starts at group 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    k: usize,
    boundaries: Vec<usize>,
}

impl Partition {
    pub fn new(k: usize, boundaries: Vec<usize>) -> Result<Self> {
        let mut prev = 0;
        for &b in &boundaries {
            if b <= prev || b >= k {
                return Err(Error::Domain(format!("bad cluster boundaries {boundaries:?} for {k} groups")));
            }
            prev = b;
        }
        if k == 0 && !boundaries.is_empty() {
            return Err(Error::Domain("empty partition cannot have boundaries".into()));
        }
        Ok(Partition { k, boundaries })
    }

    /// The partition of nothing, used when the effective market is empty.
    pub fn empty() -> Self {
        Partition { k: 0, boundaries: Vec::new() }
    }

    /// Number of groups covered.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn num_clusters(&self) -> usize {
        if self.k == 0 {
            0
        } else {
            self.boundaries.len() + 1
        }
    }

    pub fn clusters(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        let n = self.num_clusters();
        (0..n).map(move |c| self.cluster(c))
    }

    pub fn cluster(&self, c: usize) -> Range<usize> {
        let start = if c == 0 { 0 } else { self.boundaries[c - 1] };
        let end = self.boundaries.get(c).copied().unwrap_or(self.k);
        start..end
    }

    /// Cluster index of group `i` (which must be below `k`).
    pub fn cluster_of(&self, i: usize) -> usize {
        assert!(i < self.k, "group {i} outside partition of {} groups", self.k);
        self.boundaries.partition_point(|&b| b <= i)
    }

    pub fn cluster_map(&self) -> Vec<usize> {
        (0..self.k).map(|i| self.cluster_of(i)).collect()
    }
}

impl fmt::Display for Partition {
    /// One-based group numbers, clusters separated by `|`: `(1|2,3)`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (c, range) in self.clusters().enumerate() {
            if c > 0 {
                write!(f, "|")?;
            }
            for (n, i) in range.enumerate() {
                if n > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{}", i + 1)?;
            }
        }
        write!(f, ")")
    }
}

/// Advances `cuts` (strictly increasing values in `1..k`) to the next
/// combination in lexicographic order. Returns false when exhausted.
fn next_cuts(cuts: &mut [usize], k: usize) -> bool {
    let m = cuts.len();
    for r in (0..m).rev() {
        let max = k - (m - r);
        if cuts[r] < max {
            cuts[r] += 1;
            for t in r + 1..m {
                cuts[t] = cuts[t - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Streams every consecutive partition of `k` groups into `j` clusters in
/// lexicographic order of the boundaries. Holds O(j) state.
#[derive(Debug, Clone)]
pub struct ConsecutivePartitions {
    k: usize,
    cuts: Vec<usize>,
    state: IterState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum IterState {
    Fresh,
    Running,
    Done,
}

impl Iterator for ConsecutivePartitions {
    type Item = Partition;

    fn next(&mut self) -> Option<Partition> {
        match self.state {
            IterState::Done => return None,
            IterState::Fresh => self.state = IterState::Running,
            IterState::Running => {
                if !next_cuts(&mut self.cuts, self.k) {
                    self.state = IterState::Done;
                    return None;
                }
            }
        }
        Some(Partition { k: self.k, boundaries: self.cuts.clone() })
    }
}

/// All ways to cut groups `0..k` into `j` runs; empty when `j == 0` or `j > k`.
pub fn enumerate_consecutive_partitions(k: usize, j: usize) -> ConsecutivePartitions {
    let state = if j == 0 || j > k { IterState::Done } else { IterState::Fresh };
    let cuts = if state == IterState::Done { Vec::new() } else { (1..j).collect() };
    ConsecutivePartitions { k, cuts, state }
}

/// Largest group count accepted by [`partition_count_unrestricted`].
pub const MAX_STIRLING_GROUPS: usize = 1000;

/// Number of ways to split `i` labelled groups into `j` nonempty clusters
/// (Stirling number of the second kind).
pub fn partition_count_unrestricted(i: usize, j: usize) -> Result<BigUint> {
    if i > MAX_STIRLING_GROUPS {
        return Err(Error::Domain(format!("group count {i} exceeds {MAX_STIRLING_GROUPS}")));
    }
    if j == 0 || j > i {
        return Err(Error::Domain(format!("need 1 <= j <= i, got i={i}, j={j}")));
    }
    // S(i, j) = (1/j!) sum_{t=1..j} (-1)^(j+t) C(j, t) t^i
    let mut total = BigInt::zero();
    let mut binom = BigInt::one();
    for t in 1..=j {
        binom = binom * BigInt::from(j - t + 1) / BigInt::from(t);
        let term = &binom * BigInt::from(t).pow(i as u32);
        if (j + t).is_multiple_of(2) {
            total += term;
        } else {
            total -= term;
        }
    }
    let factorial: BigInt = (1..=j).map(BigInt::from).product();
    let count = total / factorial;
    debug_assert!(!count.is_negative());
    Ok(count.to_biguint().expect("Stirling numbers are nonnegative"))
}

/// Number of consecutive partitions, `C(i-1, j-1)`.
pub fn partition_count_consecutive(i: usize, j: usize) -> Result<BigUint> {
    if j == 0 || j > i {
        return Err(Error::Domain(format!("need 1 <= j <= i, got i={i}, j={j}")));
    }
    let (n, r) = (i - 1, j - 1);
    let r = r.min(n - r);
    let mut c = BigUint::one();
    for t in 0..r {
        c = c * BigUint::from(n - t) / BigUint::from(t + 1);
    }
    Ok(c)
}

/// A cluster viewed as one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuperGroup {
    pub n_total: u64,
    pub theta_avg: f64,
}

/// Single-price solution of one cluster given its resource budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterAggregate {
    /// Aggregated over the cluster's effective groups only.
    pub supergroup: SuperGroup,
    /// How many of the cluster's groups (from its top) buy a positive amount.
    pub effective: usize,
    pub revenue: f64,
}

/// Solves the single-price problem inside `cluster` with `budget` units and
/// summarizes the effective part of the cluster as a super-group.
pub fn aggregate_supergroup(market: &Market, cluster: Range<usize>, budget: f64) -> Result<ClusterAggregate> {
    aggregate_supergroup_with(market, cluster, budget, Tolerance::default())
}

pub fn aggregate_supergroup_with(
    market: &Market,
    cluster: Range<usize>,
    budget: f64,
    tol: Tolerance,
) -> Result<ClusterAggregate> {
    if cluster.is_empty() || cluster.end > market.len() {
        return Err(Error::Domain(format!("cluster {cluster:?} is empty or outside the market")));
    }
    if !(budget >= 0.0) || !budget.is_finite() {
        return Err(Error::Domain(format!("cluster budget must be nonnegative, got {budget}")));
    }
    let groups = &market.groups()[cluster];
    // With no budget nobody buys; report the top group so the super-group
    // stays well defined.
    let (effective, _) = single_price_threshold(groups, budget, tol.eps());
    let effective = effective.max(1);
    let n_total: u64 = groups[..effective].iter().map(|g| g.n).sum();
    let weighted: f64 = groups[..effective].iter().map(|g| g.n as f64 * g.theta).sum();
    let theta_avg = weighted / n_total as f64;
    let n = n_total as f64;
    let revenue = budget * n * theta_avg / (budget + n);
    Ok(ClusterAggregate { supergroup: SuperGroup { n_total, theta_avg }, effective, revenue })
}

/// Prefix sums used to aggregate consecutive clusters in O(1).
struct Prefix {
    users: Vec<f64>,
    weighted: Vec<f64>,
}

impl Prefix {
    fn new(market: &Market) -> Self {
        let mut users = vec![0.0];
        let mut weighted = vec![0.0];
        for g in market.groups() {
            users.push(users.last().unwrap() + g.n as f64);
            weighted.push(weighted.last().unwrap() + g.n as f64 * g.theta);
        }
        Prefix { users, weighted }
    }

    fn cluster(&self, r: Range<usize>) -> (f64, f64) {
        let n = self.users[r.end] - self.users[r.start];
        let w = self.weighted[r.end] - self.weighted[r.start];
        (n, w / n)
    }
}

/// Evaluates the inner objective `v(a) = sum_j N^j sqrt(theta^j)` for the
/// partition described by `cuts` over groups `0..k`, or `None` when some
/// cluster's lowest group would not buy at its cluster price.
fn evaluate_cuts(market: &Market, prefix: &Prefix, k: usize, cuts: &[usize], eps: f64) -> Option<f64> {
    let bounds = || std::iter::once(0).chain(cuts.iter().copied()).zip(cuts.iter().copied().chain(std::iter::once(k)));
    let v: f64 = bounds()
        .map(|(a, b)| {
            let (n, theta) = prefix.cluster(a..b);
            n * theta.sqrt()
        })
        .sum();
    let sqrt_lambda = v / (market.supply() + prefix.users[k]);
    for (a, b) in bounds() {
        let (_, theta) = prefix.cluster(a..b);
        let price = theta.sqrt() * sqrt_lambda;
        if market.theta(b - 1) <= price + eps {
            return None;
        }
    }
    Some(v)
}

/// Best consecutive partition of the prefix `0..k` into `j` clusters.
///
/// Minimizes `v(a)` over partitions in which every group of the prefix buys
/// a positive amount at its cluster price. Ties keep the lexicographically
/// first boundaries. `None` when no partition keeps the whole prefix active.
pub fn solve_level1(market: &Market, k: usize, j: usize) -> Result<Option<(Partition, f64)>> {
    solve_level1_with(market, k, j, Tolerance::default())
}

pub fn solve_level1_with(market: &Market, k: usize, j: usize, tol: Tolerance) -> Result<Option<(Partition, f64)>> {
    if k == 0 || k > market.len() {
        return Err(Error::IndexOutOfRange { index: k, len: market.len() });
    }
    if j == 0 || j > k {
        return Err(Error::IndexOutOfRange { index: j, len: k });
    }
    let prefix = Prefix::new(market);
    Ok(level1(market, &prefix, k, j, tol.eps()))
}

fn level1(market: &Market, prefix: &Prefix, k: usize, j: usize, eps: f64) -> Option<(Partition, f64)> {
    let mut cuts: Vec<usize> = (1..j).collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    loop {
        if let Some(v) = evaluate_cuts(market, prefix, k, &cuts, eps) {
            if best.as_ref().is_none_or(|(_, bv)| v < *bv) {
                best = Some((cuts.clone(), v));
            }
        }
        if !next_cuts(&mut cuts, k) {
            break;
        }
    }
    best.map(|(boundaries, v)| (Partition { k, boundaries }, v))
}

/// How the outer search over effective-market sizes picks `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PpSearch {
    /// Solve every prefix `k <= K^cp` and keep the highest revenue.
    #[default]
    BestRevenue,
    /// Walk down from `K^cp` and stop at the first prefix with a feasible
    /// partition. Can miss the optimum when dropping a group lets the
    /// remaining ones be split more profitably.
    FirstFeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PpOptions {
    pub search: PpSearch,
    pub tol: Tolerance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpSolution {
    /// Number of prices requested.
    pub j_prices: usize,
    /// Number of prices actually used: `min(j_prices, k_eff)`.
    pub j_used: usize,
    pub k_eff: usize,
    pub partition: Partition,
    pub supergroups: Vec<SuperGroup>,
    /// Multiplier of the resource constraint across super-groups.
    pub lambda: f64,
    /// Strictly decreasing cluster prices `sqrt(theta^j * lambda)`.
    pub cluster_prices: Vec<f64>,
    /// Price faced by each group; `theta_i` outside the effective market.
    pub group_prices: Vec<f64>,
    pub allocations: Vec<f64>,
    pub revenue: f64,
    pub supply: f64,
}

impl PpSolution {
    /// `true` when fewer prices than requested were needed.
    pub fn capped(&self) -> bool {
        self.j_used < self.j_prices
    }
}

pub fn solve_pp(market: &Market, j: usize) -> Result<PpSolution> {
    solve_pp_with(market, j, PpOptions::default())
}

pub fn solve_pp_with(market: &Market, j: usize, opts: PpOptions) -> Result<PpSolution> {
    if j == 0 {
        return Err(Error::Domain("need at least one price".into()));
    }
    let eps = opts.tol.eps();
    let supply = market.supply();
    if supply == 0.0 {
        return Ok(PpSolution {
            j_prices: j,
            j_used: 0,
            k_eff: 0,
            partition: Partition::empty(),
            supergroups: Vec::new(),
            lambda: market.theta(0),
            cluster_prices: Vec::new(),
            group_prices: market.groups().iter().map(|g| g.theta).collect(),
            allocations: vec![0.0; market.len()],
            revenue: 0.0,
            supply,
        });
    }

    let prefix = Prefix::new(market);
    let k_cp = solve_cp_with(market, opts.tol).k_eff;
    let mut best: Option<(Partition, f64, f64)> = None;
    for k in (1..=k_cp).rev() {
        let Some((partition, v)) = level1(market, &prefix, k, j.min(k), eps) else {
            continue;
        };
        let revenue = prefix.weighted[k] - v * v / (supply + prefix.users[k]);
        let better = best.as_ref().is_none_or(|(_, _, r)| revenue > r + 1e-12 * r.abs());
        if better {
            best = Some((partition, v, revenue));
        }
        if opts.search == PpSearch::FirstFeasible {
            break;
        }
    }
    // k = 1 with one cluster is always feasible for positive supply.
    let (partition, v, _) = best.expect("single-group prefix is always feasible");
    Ok(assemble(market, &prefix, j, partition, v))
}

fn assemble(market: &Market, prefix: &Prefix, j: usize, partition: Partition, v: f64) -> PpSolution {
    let k = partition.k();
    let supply = market.supply();
    let lambda = (v / (supply + prefix.users[k])).powi(2);
    let supergroups: Vec<SuperGroup> = partition
        .clusters()
        .map(|r| {
            let (n, theta) = prefix.cluster(r.clone());
            let n_total = market.groups()[r].iter().map(|g| g.n).sum();
            debug_assert_eq!(n_total as f64, n);
            SuperGroup { n_total, theta_avg: theta }
        })
        .collect();
    let cluster_prices: Vec<f64> = supergroups.iter().map(|sg| (sg.theta_avg * lambda).sqrt()).collect();

    let mut group_prices = Vec::with_capacity(market.len());
    let mut allocations = Vec::with_capacity(market.len());
    for (i, g) in market.groups().iter().enumerate() {
        if i < k {
            let p = cluster_prices[partition.cluster_of(i)];
            group_prices.push(p);
            allocations.push(g.theta / p - 1.0);
        } else {
            group_prices.push(g.theta);
            allocations.push(0.0);
        }
    }
    let revenue =
        market.groups().iter().zip(group_prices.iter().zip(&allocations)).map(|(g, (p, s))| g.n as f64 * p * s).sum();

    PpSolution {
        j_prices: j,
        j_used: partition.num_clusters(),
        k_eff: k,
        partition,
        supergroups,
        lambda,
        cluster_prices,
        group_prices,
        allocations,
        revenue,
        supply,
    }
}
