use std::path::{Path, PathBuf};

use cfmm_fees::flow::{
    build_distribution_at, normalize_snapshots_with, parse_trades_csv, replay_at,
    write_trades_csv, SyntheticTrades, BALANCE_TOLERANCE,
};
use cfmm_fees::game::{
    best_response_with, find_equilibrium_with, utilities_with, utility_with, Demand, GameConfig, SingleTrade,
    STANDARD_FEE,
};
use cfmm_fees::routing::{closed_form_allocation, solve_otp, solve_otp_waterfill, DEFAULT_TOL};
use cfmm_fees::sweep::PoolParams;
use cfmm_fees::{
    run_sweep, FeeProfile, Market, Pool, PoolSnapshot, SweepKind, SweepSpec, TradeRecord, TradeSizeDistribution,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::format::{csv_document, json_document, list, number};
use crate::{Cli, Command, DemandArgs, MarketArgs, Solver};

type Result<T> = std::result::Result<T, CliError>;

pub fn dispatch(cli: &Cli) -> Result<()> {
    let sink = Sink { dir: cli.out.clone() };
    match &cli.command {
        Command::Route { market, trade, tol, solver } => route(&sink, market, *trade, *tol, *solver),
        Command::Sweep {
            kind,
            spec,
            pools,
            points,
            trade,
            start,
            tol,
            max_iters,
            pool,
        } => {
            let overrides = SweepOverrides {
                kind: kind.as_deref(),
                pools: pools.as_deref(),
                points: *points,
                trade: *trade,
                start: *start,
                tol: *tol,
                max_iters: *max_iters,
                pool: *pool,
            };
            sweep(&sink, spec.as_deref(), overrides)
        }
        Command::BestResponse {
            market,
            demand,
            pool,
            fees,
            tol,
        } => best_response(&sink, market, demand, *pool, fees.as_deref(), *tol),
        Command::Equilibrium {
            market,
            demand,
            start,
            tol,
            max_iters,
        } => equilibrium(&sink, market, demand, start.as_deref(), *tol, *max_iters),
        Command::Replay {
            market,
            trades,
            fees,
            tol,
        } => replay(&sink, market, trades, fees.as_deref(), *tol),
        Command::ExpectedFees { market, demand, fees } => expected_fees(&sink, market, demand, fees.as_deref()),
        Command::SynthTrades {
            seed,
            count,
            median,
            sigma,
            price,
        } => {
            let defaults = SyntheticTrades::default();
            let params = SyntheticTrades {
                seed: seed.unwrap_or(defaults.seed),
                count: count.unwrap_or(defaults.count),
                median_size: median.unwrap_or(defaults.median_size),
                sigma: sigma.unwrap_or(defaults.sigma),
                target_price: price.unwrap_or(defaults.target_price),
                ..defaults
            };
            synth_trades(&sink, &params)
        }
    }
}

/// Where results go: files in `dir`, or stdout with the summary on stderr.
struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    fn emit(&self, name: &str, contents: &str, summary: &str) -> Result<()> {
        match &self.dir {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
                let path = dir.join(name);
                std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
                println!("{summary} -> {}", path.display());
            }
            None => {
                print!("{contents}");
                eprintln!("{summary}");
            }
        }
        Ok(())
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PoolEntry {
    Balanced(PoolParams),
    Snapshot(PoolSnapshot),
}

/// A market plus the price converting raw target-token amounts to source tokens.
struct Inputs {
    market: Market,
    target_price: f64,
}

fn load_market(args: &MarketArgs) -> Result<Inputs> {
    load_pools(&args.pools)
}

fn load_pools(arg: &str) -> Result<Inputs> {
    let (text, origin) = if arg.trim_start().starts_with('[') {
        (arg.to_string(), "--pools".to_string())
    } else {
        (read(Path::new(arg))?, arg.to_string())
    };
    let located = |e: cfmm_fees::Error| CliError::Config(format!("{origin}: {e}"));
    let entries: Vec<PoolEntry> = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{origin}: line {}, column {}: {e}", e.line(), e.column())))?;
    if entries.is_empty() {
        return Err(CliError::Config(format!("{origin}: at least one pool is required")));
    }
    let snapshots: Vec<PoolSnapshot> = entries
        .iter()
        .filter_map(|e| match e {
            PoolEntry::Snapshot(s) => Some(*s),
            PoolEntry::Balanced(_) => None,
        })
        .collect();
    if snapshots.len() == entries.len() {
        let normalized = normalize_snapshots_with(&snapshots, BALANCE_TOLERANCE).map_err(located)?;
        return Ok(Inputs {
            market: normalized.market,
            target_price: normalized.target_price,
        });
    }
    let pools = entries
        .iter()
        .enumerate()
        .map(|(k, e)| match e {
            PoolEntry::Balanced(p) => {
                Pool::new(p.reserve, p.fee).map_err(|err| CliError::Config(format!("{origin}: pools[{k}]: {err}")))
            }
            PoolEntry::Snapshot(_) => Err(CliError::Config(format!(
                "{origin}: pools[{k}]: snapshot entries cannot be mixed with balanced ones"
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Inputs {
        market: Market::new(pools)?,
        target_price: 1.0,
    })
}

fn parse_fees(text: &str, flag: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Config(format!("{flag}: `{}`: {e}", s.trim())))
        })
        .collect()
}

fn profile_for(market: &Market, fees: Option<&str>) -> Result<FeeProfile> {
    let Some(text) = fees else {
        return Ok(FeeProfile::of(market));
    };
    let fees = parse_fees(text, "--fees")?;
    if fees.len() != market.len() {
        return Err(CliError::Config(format!(
            "--fees: {} fees given for {} pools",
            fees.len(),
            market.len()
        )));
    }
    FeeProfile::new(fees).map_err(|e| CliError::Config(format!("--fees: {e}")))
}

fn load_trades(path: &Path) -> Result<Vec<TradeRecord>> {
    let records = parse_trades_csv(&read(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if records.is_empty() {
        return Err(CliError::Config(format!("{}: no trades", path.display())));
    }
    Ok(records)
}

enum DemandSource {
    Single(SingleTrade),
    Trades(TradeSizeDistribution),
}

impl DemandSource {
    fn load(args: &DemandArgs, target_price: f64) -> Result<Self> {
        match (args.trade, &args.trades) {
            (Some(t), None) => {
                if t.is_finite() && t > 0.0 {
                    Ok(DemandSource::Single(SingleTrade(t)))
                } else {
                    Err(CliError::Config(format!("--trade must be positive, got {t}")))
                }
            }
            (None, Some(path)) => Ok(DemandSource::Trades(build_distribution_at(&load_trades(path)?, target_price)?)),
            _ => Err(CliError::Config("exactly one of --trade and --trades is required".into())),
        }
    }

    fn demand(&self) -> &dyn Demand {
        match self {
            DemandSource::Single(d) => d,
            DemandSource::Trades(d) => d,
        }
    }

    fn distribution(&self) -> Result<TradeSizeDistribution> {
        match self {
            DemandSource::Single(SingleTrade(t)) => Ok(TradeSizeDistribution::point(*t)?),
            DemandSource::Trades(d) => Ok(d.clone()),
        }
    }

    fn describe(&self) -> String {
        match self {
            DemandSource::Single(SingleTrade(t)) => format!("t={}", number(*t)),
            DemandSource::Trades(d) => format!("{} trades", d.len()),
        }
    }
}

#[derive(Serialize)]
struct RouteOutput {
    solver: &'static str,
    trade: f64,
    allocation: Vec<f64>,
    fractions: Vec<f64>,
    output: f64,
    interior: bool,
    lambda: Option<f64>,
}

fn route(sink: &Sink, market: &MarketArgs, t: f64, tol: Option<f64>, solver: Solver) -> Result<()> {
    let m = load_market(market)?.market;
    let tol = tol.unwrap_or(DEFAULT_TOL);
    let (name, allocation, lambda) = match solver {
        Solver::Ternary => {
            let r = solve_otp(&m, t, tol)?;
            ("ternary", r.allocation, r.lambda)
        }
        Solver::Waterfill => {
            let r = solve_otp_waterfill(&m, t, tol)?;
            ("waterfill", r.allocation, r.lambda)
        }
        Solver::ClosedForm => ("closed_form", closed_form_allocation(&m, t)?, None),
    };
    let out = RouteOutput {
        solver: name,
        trade: t,
        fractions: (0..m.len()).map(|i| allocation.fraction(i)).collect(),
        output: m.output(allocation.amounts()),
        interior: allocation.amounts().iter().all(|&x| x > 0.0),
        allocation: allocation.into_amounts(),
        lambda,
    };
    let summary = format!(
        "route: t={} over {} pools, allocation {}, output {}",
        number(t),
        m.len(),
        list(&out.allocation),
        number(out.output)
    );
    sink.emit("route.json", &json_document(&out), &summary)
}

struct SweepOverrides<'a> {
    kind: Option<&'a str>,
    pools: Option<&'a str>,
    points: Option<usize>,
    trade: Option<f64>,
    start: Option<f64>,
    tol: Option<f64>,
    max_iters: Option<usize>,
    pool: Option<usize>,
}

fn parse_kind(name: &str) -> Result<SweepKind> {
    SweepKind::parse(name).ok_or_else(|| {
        let names: Vec<&str> = SweepKind::ALL.iter().map(|k| k.name()).collect();
        CliError::Config(format!("--kind: unknown sweep `{name}`, expected one of {}", names.join(", ")))
    })
}

fn sweep(sink: &Sink, spec_path: Option<&Path>, o: SweepOverrides) -> Result<()> {
    let mut spec = match (spec_path, o.kind) {
        (Some(path), kind) => {
            let spec = SweepSpec::from_json(&read(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if let Some(kind) = kind {
                if parse_kind(kind)? != spec.kind {
                    return Err(CliError::Config(format!("--kind {kind} conflicts with {}", path.display())));
                }
            }
            spec
        }
        (None, Some(kind)) => SweepSpec::new(parse_kind(kind)?),
        (None, None) => return Err(CliError::Config("one of --kind and --spec is required".into())),
    };
    if let Some(points) = o.points {
        if points < 2 {
            return Err(CliError::Config("--points must be at least 2".into()));
        }
        spec.grid = spec.kind.default_grid(points);
    }
    if let Some(arg) = o.pools {
        let m = load_pools(arg)?.market;
        spec.pools = m.pools().iter().map(|p| PoolParams { reserve: p.reserve(), fee: p.fee() }).collect();
    }
    if let Some(t) = o.trade {
        spec.trade = t;
    }
    if let Some(s) = o.start {
        spec.start_fee = s;
    }
    if let Some(tol) = o.tol {
        spec.fee_tol = tol;
    }
    if let Some(n) = o.max_iters {
        spec.max_iters = n;
    }
    if let Some(k) = o.pool {
        spec.pool_index = k.checked_sub(1).ok_or_else(|| CliError::Config("--pool is 1-based".into()))?;
    }
    spec.validate()?;

    let table = run_sweep(&spec)?;
    let stalled = table
        .column("converged")
        .map_or(0, |c| c.iter().filter(|&&v| v == 0.0).count());
    let name = format!("{}.csv", spec.kind.name());
    let mut summary = format!("sweep {}: {} rows", spec.kind.name(), table.rows.len());
    if stalled > 0 {
        summary.push_str(&format!(", {stalled} not converged"));
    }
    sink.emit(&name, &csv_document(&table.columns, &table.rows), &summary)?;
    if stalled > 0 {
        return Err(CliError::NotConverged(format!("{stalled} equilibria did not converge")));
    }
    Ok(())
}

#[derive(Serialize)]
struct BestResponseOutput {
    pool: usize,
    fee: f64,
    utility: f64,
    current_fee: f64,
    current_utility: f64,
    evaluations: usize,
}

fn best_response(
    sink: &Sink,
    market: &MarketArgs,
    demand: &DemandArgs,
    pool: usize,
    fees: Option<&str>,
    tol: Option<f64>,
) -> Result<()> {
    let inputs = load_market(market)?;
    let m = inputs.market;
    let i = pool
        .checked_sub(1)
        .filter(|&i| i < m.len())
        .ok_or_else(|| CliError::Config(format!("--pool must be in 1..={}", m.len())))?;
    let profile = profile_for(&m, fees)?;
    let source = DemandSource::load(demand, inputs.target_price)?;
    let mut cfg = GameConfig::default();
    if let Some(tol) = tol {
        cfg.response_tol = tol;
    }
    let br = best_response_with(&m, &profile, i, source.demand(), &cfg)?;
    let current = utility_with(&m, &profile, i, source.demand(), &cfg)?;
    let out = BestResponseOutput {
        pool,
        fee: br.fee,
        utility: br.utility,
        current_fee: profile.get(i),
        current_utility: current,
        evaluations: br.evaluations,
    };
    let summary = format!(
        "best response of pool {pool} ({}): fee {} earns {} (fee {} earns {})",
        source.describe(),
        number(out.fee),
        number(out.utility),
        number(out.current_fee),
        number(out.current_utility)
    );
    sink.emit("best_response.json", &json_document(&out), &summary)
}

#[derive(Serialize)]
struct EquilibriumOutput {
    converged: bool,
    start: Vec<f64>,
    fees: Vec<f64>,
    utilities: Vec<f64>,
    /// Fees collected per unit of pool size.
    relative_fees: Vec<f64>,
    iterations: usize,
    last_step: f64,
    max_gain: f64,
    gains: Vec<f64>,
}

fn equilibrium(
    sink: &Sink,
    market: &MarketArgs,
    demand: &DemandArgs,
    start: Option<&str>,
    tol: Option<f64>,
    max_iters: Option<usize>,
) -> Result<()> {
    let inputs = load_market(market)?;
    let m = inputs.market;
    let start = match start {
        None => FeeProfile::uniform(m.len(), STANDARD_FEE)?,
        Some(text) => {
            let fees = parse_fees(text, "--start")?;
            match fees.len() {
                1 => FeeProfile::uniform(m.len(), fees[0]),
                n if n == m.len() => FeeProfile::new(fees),
                n => {
                    return Err(CliError::Config(format!("--start: {n} fees given for {} pools", m.len())));
                }
            }
            .map_err(|e| CliError::Config(format!("--start: {e}")))?
        }
    };
    let source = DemandSource::load(demand, inputs.target_price)?;
    let mut cfg = GameConfig::default();
    if let Some(tol) = tol {
        cfg.fee_tol = tol;
    }
    if let Some(n) = max_iters {
        cfg.max_iters = n;
    }
    let eq = find_equilibrium_with(&m, &start, source.demand(), &cfg)?;
    let out = EquilibriumOutput {
        converged: eq.converged,
        start: start.fees().to_vec(),
        fees: eq.fees.fees().to_vec(),
        relative_fees: eq.utilities.iter().zip(m.pools()).map(|(u, p)| u / p.size()).collect(),
        utilities: eq.utilities,
        iterations: eq.iterations,
        last_step: eq.last_step,
        max_gain: eq.max_gain,
        gains: eq.gains,
    };
    let summary = format!(
        "equilibrium ({}): {} after {} rounds, fees {}, max deviation gain {}",
        source.describe(),
        if out.converged { "converged" } else { "NOT converged" },
        out.iterations,
        list(&out.fees),
        number(out.max_gain)
    );
    sink.emit("equilibrium.json", &json_document(&out), &summary)?;
    if !out.converged {
        return Err(CliError::NotConverged(format!(
            "no certified equilibrium after {} rounds (last step {}, max gain {})",
            out.iterations,
            number(out.last_step),
            number(out.max_gain)
        )));
    }
    Ok(())
}

fn replay(sink: &Sink, market: &MarketArgs, trades: &Path, fees: Option<&str>, tol: Option<f64>) -> Result<()> {
    let inputs = load_market(market)?;
    let profile = profile_for(&inputs.market, fees)?;
    let records = load_trades(trades)?;
    let tol = tol.unwrap_or(GameConfig::default().route_tol);
    let report = replay_at(&inputs.market, &profile, &records, inputs.target_price, tol)?;
    let summary = format!(
        "replay: {} trades, fees collected {}",
        report.trade_count,
        list(&report.per_pool_fees_collected)
    );
    sink.emit("replay.json", &json_document(&report), &summary)
}

#[derive(Serialize)]
struct ExpectedFeesOutput {
    fees: Vec<f64>,
    atoms: usize,
    mean_size: f64,
    /// Expected fees per trade over the distribution.
    expected_utility: Vec<f64>,
    /// Fees of a single trade of the mean size, routed optimally.
    utility_at_mean: Vec<f64>,
    /// Same, with the unconstrained closed-form split (may be negative).
    closed_form_utility_at_mean: Vec<f64>,
}

fn expected_fees(sink: &Sink, market: &MarketArgs, demand: &DemandArgs, fees: Option<&str>) -> Result<()> {
    let inputs = load_market(market)?;
    let profile = profile_for(&inputs.market, fees)?;
    let source = DemandSource::load(demand, inputs.target_price)?;
    let dist = source.distribution()?;
    let cfg = GameConfig::default();
    let m = profile.apply(&inputs.market)?;
    let mean = dist.mean();
    let closed_form = closed_form_allocation(&m, mean)?;
    let out = ExpectedFeesOutput {
        fees: profile.fees().to_vec(),
        atoms: dist.len(),
        mean_size: mean,
        expected_utility: utilities_with(&m, &profile, &dist, &cfg)?,
        utility_at_mean: utilities_with(&m, &profile, &SingleTrade(mean), &cfg)?,
        closed_form_utility_at_mean: m
            .pools()
            .iter()
            .zip(closed_form.amounts())
            .map(|(p, &x)| p.fee() * x)
            .collect(),
    };
    let summary = format!(
        "expected fees ({}): {} per trade, {} at the mean size {}",
        source.describe(),
        list(&out.expected_utility),
        list(&out.utility_at_mean),
        number(mean)
    );
    sink.emit("expected_fees.json", &json_document(&out), &summary)
}

fn synth_trades(sink: &Sink, params: &SyntheticTrades) -> Result<()> {
    let records = params
        .generate()
        .map_err(|e| CliError::Config(format!("synth-trades: {e}")))?;
    let summary = format!("synth-trades: {} records, seed {}", records.len(), params.seed);
    sink.emit("trades.csv", &write_trades_csv(&records), &summary)
}
