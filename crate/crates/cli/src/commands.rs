use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use tariff_core::analysis::{gain_peaks, sweep_resource};
use tariff_core::cp::solve_cp_with;
use tariff_core::iccp::{
    best_response, build_menu_with, feasibility_thresholds, simulate_self_selection, ThresholdPlacement,
};
use tariff_core::oracle::{
    brute_best_single_price, brute_lambda_bisection, brute_pp_exhaustive, brute_user_best_response, random_market,
    single_price_grid_error, OracleConfig,
};
use tariff_core::pp::{solve_pp_with, PpOptions, PpSearch};
use tariff_core::sp::solve_sp_with;
use tariff_core::{Market, Tolerance};

use crate::error::CliError;
use crate::record::{json_line, write_rows, Flags, Format, ResultRecord, SweepRow};
use crate::scenario::{parse_scenario, ScenarioFile, SweepOptions};

#[derive(Debug, Parser)]
#[command(name = "tariff", version, about = "Revenue-maximizing tariffs for a shared, divisible resource")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Write results here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replaces the scenario's supply.
    #[arg(long)]
    pub supply: Option<f64>,
    /// Replaces the scenario's threshold tolerance.
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SearchArg {
    BestRevenue,
    FirstFeasible,
}

impl From<SearchArg> for PpSearch {
    fn from(s: SearchArg) -> Self {
        match s {
            SearchArg::BestRevenue => PpSearch::BestRevenue,
            SearchArg::FirstFeasible => PpSearch::FirstFeasible,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlacementArg {
    Tight,
    Midpoint,
}

impl From<PlacementArg> for ThresholdPlacement {
    fn from(p: PlacementArg) -> Self {
        match p {
            PlacementArg::Tight => ThresholdPlacement::Tight,
            PlacementArg::Midpoint => ThresholdPlacement::Midpoint,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Complete price differentiation.
    SolveCp {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// One price for everyone.
    SolveSp {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// At most J prices over consecutive clusters of groups.
    SolvePp {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
        /// Price count; falls back to options.j, then 2.
        #[arg(long)]
        j: Option<usize>,
        #[arg(long, value_enum)]
        search: Option<SearchArg>,
    },
    /// Quantity-based price menu that users self-select into (JSON).
    DesignMenu {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        placement: Option<PlacementArg>,
    },
    /// Adjacent-ratio test for a self-selection menu (JSON).
    CheckIc {
        #[command(flatten)]
        common: Common,
    },
    /// Revenue of several price counts over a supply grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
        /// Price counts, comma separated; falls back to options.sweep.j,
        /// then 1..=I.
        #[arg(long, value_delimiter = ',')]
        j: Vec<usize>,
        #[arg(long, value_enum)]
        search: Option<SearchArg>,
        #[arg(long)]
        s_min: Option<f64>,
        #[arg(long)]
        s_max: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Cross-check the solvers against brute-force oracles on the scenario
    /// and on seeded random markets (JSON).
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random markets to check.
        #[arg(long, default_value_t = 100)]
        cases: usize,
    },
}

struct Loaded {
    scenario: ScenarioFile,
    market: Market,
    tol: Tolerance,
}

fn load(common: &Common) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(&common.scenario)
        .map_err(|e| CliError::io(format!("{}: {e}", common.scenario.display())))?;
    let scenario = parse_scenario(&text)?;
    let mut market = scenario.market();
    if let Some(s) = common.supply {
        market = market.with_supply(s).map_err(|e| CliError::schema(format!("--supply: {e}")))?;
    }
    let eps = common.tolerance.or(scenario.options.tolerance);
    if let Some(t) = eps {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(CliError::schema(format!("--tolerance: must be nonnegative, got {t}")));
        }
    }
    let tol = eps.map_or_else(Tolerance::default, Tolerance);
    Ok(Loaded { scenario, market, tol })
}

fn gain(revenue: f64, base: f64) -> f64 {
    if base > 0.0 {
        revenue / base - 1.0
    } else {
        0.0
    }
}

fn thetas(m: &Market) -> Vec<f64> {
    m.groups().iter().map(|g| g.theta).collect()
}

pub fn cp_record(m: &Market, tol: Tolerance) -> ResultRecord {
    let cp = solve_cp_with(m, tol);
    let base = solve_sp_with(m, tol).revenue;
    let ic = feasibility_thresholds(m, &cp).ok().map(|f| f.feasible);
    ResultRecord {
        scheme: "CP".into(),
        supply: m.supply(),
        j: m.len(),
        revenue: cp.revenue,
        gain_vs_sp: gain(cp.revenue, base),
        k_eff: cp.k_eff,
        theta: thetas(m),
        prices: cp.prices,
        allocations: cp.allocations,
        flags: Flags { capped: false, ic_feasible: ic },
    }
}

pub fn sp_record(m: &Market, tol: Tolerance) -> ResultRecord {
    let sp = solve_sp_with(m, tol);
    ResultRecord {
        scheme: "SP".into(),
        supply: m.supply(),
        j: 1,
        revenue: sp.revenue,
        gain_vs_sp: 0.0,
        k_eff: sp.k_eff,
        theta: thetas(m),
        prices: vec![sp.price; m.len()],
        allocations: sp.allocations,
        flags: Flags::default(),
    }
}

pub fn pp_record(m: &Market, j: usize, opts: PpOptions) -> Result<ResultRecord, CliError> {
    let pp = solve_pp_with(m, j, opts)?;
    let base = solve_sp_with(m, opts.tol).revenue;
    Ok(ResultRecord {
        scheme: format!("PP{j}"),
        supply: m.supply(),
        j,
        revenue: pp.revenue,
        gain_vs_sp: gain(pp.revenue, base),
        k_eff: pp.k_eff,
        theta: thetas(m),
        flags: Flags { capped: pp.capped(), ic_feasible: None },
        prices: pp.group_prices,
        allocations: pp.allocations,
    })
}

fn write_records(out: &mut dyn Write, format: Format, records: &[ResultRecord]) -> Result<(), CliError> {
    let rows: Vec<SweepRow> = records.iter().map(SweepRow::from).collect();
    write_rows(out, format, &rows, records, &[])
}

fn pp_options(search: Option<SearchArg>, loaded: &Loaded) -> PpOptions {
    PpOptions {
        search: search.map(PpSearch::from).or(loaded.scenario.options.search).unwrap_or_default(),
        tol: loaded.tol,
    }
}

/// Runs one command, writing results to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::SolveCp { common, format } => {
            let l = load(common)?;
            write_records(out, *format, &[cp_record(&l.market, l.tol)])
        }
        Command::SolveSp { common, format } => {
            let l = load(common)?;
            write_records(out, *format, &[sp_record(&l.market, l.tol)])
        }
        Command::SolvePp { common, format, j, search } => {
            let l = load(common)?;
            let j = j.or(l.scenario.options.j).unwrap_or(2);
            if j == 0 {
                return Err(CliError::schema("--j: must be at least 1"));
            }
            let rec = pp_record(&l.market, j, pp_options(*search, &l))?;
            write_records(out, *format, &[rec])
        }
        Command::DesignMenu { common, placement } => design_menu(common, *placement, out),
        Command::CheckIc { common } => check_ic(common, out),
        Command::Sweep { common, format, j, search, s_min, s_max, steps } => {
            let l = load(common)?;
            let mut sweep = l.scenario.options.sweep.clone().unwrap_or_default();
            if let Some(v) = s_min {
                sweep.s_min = *v;
            }
            if let Some(v) = s_max {
                sweep.s_max = *v;
            }
            if steps.is_some() {
                sweep.steps = *steps;
            }
            let j_set = if !j.is_empty() {
                j.clone()
            } else {
                sweep.j.clone().unwrap_or_else(|| (1..=l.market.len()).collect())
            };
            run_sweep(&l.market, &sweep, &j_set, pp_options(*search, &l), *format, out)
        }
        Command::Verify { common, seed, cases } => verify(common, *seed, *cases, out),
    }
}

fn run_sweep(
    market: &Market,
    sweep: &SweepOptions,
    j_set: &[usize],
    opts: PpOptions,
    format: Format,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    if j_set.contains(&0) {
        return Err(CliError::schema("sweep: price counts must be at least 1"));
    }
    let grid = sweep.grid()?;
    let curves = sweep_resource(market, &grid, j_set, opts)?;
    let rows: Vec<SweepRow> = curves
        .iter()
        .flat_map(|c| {
            c.samples.iter().map(|s| SweepRow {
                scheme: c.label.clone(),
                supply: s.s,
                j: c.j,
                revenue: s.revenue,
                gain_vs_sp: s.gain,
                k_eff: s.k_eff,
            })
        })
        .collect();
    let summary: Vec<serde_json::Value> = curves
        .iter()
        .map(|c| json!({ "summary": c.label, "J": c.j, "separations": c.separations, "peaks": gain_peaks(c) }))
        .collect();
    write_rows(out, format, &rows, &rows, &summary)
}

fn design_menu(common: &Common, placement: Option<PlacementArg>, out: &mut dyn Write) -> Result<(), CliError> {
    let l = load(common)?;
    let placement = placement.map(ThresholdPlacement::from).or(l.scenario.options.placement).unwrap_or_default();
    let cp = solve_cp_with(&l.market, l.tol);
    let feasibility = feasibility_thresholds(&l.market, &cp)?;
    if let Some((q, margin)) = feasibility.first_violation() {
        writeln!(out, "{}", json_line(&json!({ "feasibility": feasibility })))?;
        return Err(CliError::infeasible(format!(
            "no self-selection menu: pair ({q}, {}) misses its threshold by {}",
            q + 1,
            -margin
        )));
    }
    let menu = build_menu_with(&l.market, &cp, placement, l.tol)?;
    let selection = simulate_self_selection(&menu, &l.market, &cp)?;
    writeln!(out, "{}", json_line(&json!({ "menu": menu, "selection": selection, "feasibility": feasibility })))?;
    if !selection.compatible {
        return Err(CliError::infeasible("some group defects from its intended step"));
    }
    Ok(())
}

fn check_ic(common: &Common, out: &mut dyn Write) -> Result<(), CliError> {
    let l = load(common)?;
    let cp = solve_cp_with(&l.market, l.tol);
    let feasibility = feasibility_thresholds(&l.market, &cp)?;
    writeln!(out, "{}", json_line(&feasibility))?;
    match feasibility.first_violation() {
        Some((q, margin)) => {
            Err(CliError::infeasible(format!("pair ({q}, {}) misses its threshold by {}", q + 1, -margin)))
        }
        None => Ok(()),
    }
}

/// Grid size for single-price and best-response oracles.
const VERIFY_GRID: usize = 20_000;
/// Largest random market drawn by `verify`.
const VERIFY_MAX_GROUPS: usize = 6;
/// Largest price count checked against exhaustive search.
const VERIFY_MAX_J: usize = 3;

#[derive(Debug, Default, Serialize)]
struct CheckReport {
    check: &'static str,
    subject: &'static str,
    cases: usize,
    failures: usize,
    skipped: usize,
    /// Largest error seen, relative to the quantity checked.
    worst: f64,
    pass: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    examples: Vec<String>,
}

impl CheckReport {
    fn new(check: &'static str, subject: &'static str) -> Self {
        CheckReport { check, subject, ..Default::default() }
    }

    fn record(&mut self, label: &str, error: f64, ok: bool) {
        self.cases += 1;
        self.worst = self.worst.max(error);
        if !ok {
            self.failures += 1;
            if self.examples.len() < 5 {
                self.examples.push(format!("{label}: error {error:e}"));
            }
        }
    }

    fn finish(mut self) -> Self {
        self.pass = self.failures == 0;
        self
    }
}

struct Checks {
    lambda: CheckReport,
    single_price: CheckReport,
    partitions: CheckReport,
    menu: CheckReport,
}

impl Checks {
    fn new(subject: &'static str) -> Self {
        Checks {
            lambda: CheckReport::new("cp-lambda", subject),
            single_price: CheckReport::new("sp-grid", subject),
            partitions: CheckReport::new("pp-exhaustive", subject),
            menu: CheckReport::new("menu-best-response", subject),
        }
    }

    fn run(&mut self, m: &Market, label: &str, tol: Tolerance) -> Result<(), CliError> {
        if m.supply() == 0.0 {
            for r in [&mut self.lambda, &mut self.single_price, &mut self.partitions, &mut self.menu] {
                r.skipped += 1;
            }
            return Ok(());
        }
        let cp = solve_cp_with(m, tol);
        let lambda = brute_lambda_bisection(m)?;
        let err = (cp.lambda_star - lambda).abs() / lambda;
        self.lambda.record(label, err, err <= 1e-8);

        let sp = solve_sp_with(m, tol);
        let (_, grid) = brute_best_single_price(m, VERIFY_GRID)?;
        let bound = single_price_grid_error(m, VERIFY_GRID, sp.price);
        // Error is the excess over what the grid spacing allows.
        let scale = sp.revenue.max(1e-300);
        let excess = (grid - sp.revenue - 1e-12 * scale).max(sp.revenue - grid - bound).max(0.0);
        self.single_price.record(label, excess / scale, excess == 0.0);

        if m.len() <= OracleConfig::default().max_groups {
            for j in 1..=VERIFY_MAX_J.min(m.len()) {
                let sol = solve_pp_with(m, j, PpOptions { search: PpSearch::BestRevenue, tol })?;
                let best = brute_pp_exhaustive(m, j)?;
                let err = (sol.revenue - best.revenue).abs() / best.revenue.abs().max(1.0);
                self.partitions.record(&format!("{label} J={j}"), err, err <= 1e-8);
            }
        } else {
            self.partitions.skipped += 1;
        }

        let feasible = feasibility_thresholds(m, &cp)?.feasible;
        if feasible && cp.k_eff >= 1 {
            let menu = build_menu_with(m, &cp, ThresholdPlacement::Tight, tol)?;
            let last = menu.prices()[menu.prices().len() - 1];
            for g in m.groups() {
                let (_, _, exact) = best_response(&menu, g.theta);
                let top = cp.allocations[0].max(g.theta / last);
                let span = 2.0 * top + 1.0;
                let (_, _, grid) = brute_user_best_response(&menu, g.theta, span, VERIFY_GRID)?;
                let h = span / VERIFY_GRID as f64;
                let err = (exact - grid) / exact.abs().max(1.0);
                // The grid cannot beat the closed form; it may trail it by a
                // second-order step error.
                let ok = grid <= exact + 1e-9 * exact.abs().max(1.0) && exact - grid <= g.theta * h * h + 1e-9;
                self.menu.record(&format!("{label} theta={}", g.theta), err.abs(), ok);
            }
        } else {
            self.menu.skipped += 1;
        }
        Ok(())
    }

    fn finish(self) -> [CheckReport; 4] {
        [self.lambda.finish(), self.single_price.finish(), self.partitions.finish(), self.menu.finish()]
    }
}

fn verify(common: &Common, seed: u64, cases: usize, out: &mut dyn Write) -> Result<(), CliError> {
    let l = load(common)?;
    let mut own = Checks::new("scenario");
    own.run(&l.market, "scenario", l.tol)?;

    let mut random = Checks::new("random");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for c in 0..cases {
        let m = random_market(&mut rng, VERIFY_MAX_GROUPS);
        random.run(&m, &format!("seed {seed} case {c}"), l.tol)?;
    }

    let reports: Vec<CheckReport> = own.finish().into_iter().chain(random.finish()).collect();
    for r in &reports {
        writeln!(out, "{}", json_line(r))?;
    }
    let failed: Vec<String> =
        reports.iter().filter(|r| !r.pass).map(|r| format!("{}/{}", r.check, r.subject)).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::oracle_mismatch(format!("oracle mismatch in {}", failed.join(", "))))
    }
}
