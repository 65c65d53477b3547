//! Revenue-maximizing usage-based tariffs for a monopoly provider.
//!
//! A provider sells `S` units of a divisible resource to several groups of
//! users. Users in group `i` all share the logarithmic utility
//! `theta_i * ln(1 + s)` and buy the quantity that maximizes their surplus
//! at the unit price they are offered. The provider picks prices to
//! maximize revenue. This crate solves that leader/follower problem for
//! four tariff families:
//!
//! | Scheme | Module | What the provider may do |
//! |--------|--------|--------------------------|
//! | complete differentiation | [`cp`] | one price per group |
//! | single pricing | [`sp`] | one price for everyone |
//! | partial differentiation | [`pp`] | at most `J` distinct prices |
//! | quantity menu | [`iccp`] | one step tariff, users self-select |
//!
//! [`analysis`] holds the closed-form two-group gain and the resource
//! sweeps. [`oracle`] contains slow brute-force verifiers that share no
//! code with the solvers and are used by the test suites and `verify`.
//!
//! Groups are always ordered by decreasing willingness to pay and indexed
//! from zero. An "effective market" of size `k` means groups `0..k` get a
//! positive allocation.

pub mod analysis;
pub mod cp;
pub mod error;
pub mod iccp;
pub mod market;
pub mod oracle;
pub mod pp;
pub mod sp;

pub use error::{Error, Result};
pub use market::{demand, surplus_at, utility, validate_market, DemandResult, Group, Market, Tolerance};
