//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so every line is printed; the process fails if any criterion does.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use cfmm_fees::flow::{build_distribution_at, expected_utility, normalize_snapshots_with, parse_trades_csv, replay_at};
use cfmm_fees::flow::{parse_pool_snapshots, BALANCE_TOLERANCE};
use cfmm_fees::game::{best_response_with, deviation_gains, GameConfig, SingleTrade, STANDARD_FEE};
use cfmm_fees::routing::DEFAULT_TOL;
use cfmm_fees::sweep::DEFAULT_GRID_POINTS;
use cfmm_fees::{
    best_response, closed_form_allocation, find_equilibrium, pool_utility, quasiconcavity_cubic, run_sweep,
    solve_otp, solve_otp_waterfill, split_fraction_curve, utility_level_sets_are_intervals, CubicLevelSet,
    FeeProfile, Market, SweepKind, SweepSpec, Table, TradeSizeDistribution,
};
use cfmm_fees_validation::{count_runs, grid_argmax, log_uniform, rises_then_falls};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn example_market() -> Market {
    Market::from_params(&[(1e6, STANDARD_FEE), (2e6, STANDARD_FEE)]).unwrap()
}

fn example_split() -> Check {
    let start = Instant::now();
    let t = 1000.0;
    let route = solve_otp(&example_market(), t, DEFAULT_TOL).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let expected = [t / 3.0, 2.0 * t / 3.0];
    for (x, e) in route.amounts().iter().zip(expected) {
        ensure((x - e).abs() <= 1e-3 * e, || format!("allocation {:?}, expected {expected:?}", route.amounts()))?;
    }
    within_time(elapsed, Duration::from_secs(1))?;
    Ok(format!("allocation {:?} in {elapsed:.2?}", route.amounts()))
}

fn proportional_split_law() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=10);
        let fee = rng.random_range(0.0..0.05);
        let params: Vec<(f64, f64)> = (0..n).map(|_| (log_uniform(&mut rng, 1e4, 1e8), fee)).collect();
        let m = Market::from_params(&params).unwrap();
        let t = log_uniform(&mut rng, 1e-2, 0.1 * m.total_reserve());
        let route = solve_otp(&m, t, DEFAULT_TOL).map_err(|e| e.to_string())?;
        let total: f64 = params.iter().map(|p| p.0).sum();
        for (x, p) in route.amounts().iter().zip(&params) {
            worst = worst.max((x - t * p.0 / total).abs() / t);
        }
    }
    let elapsed = start.elapsed();
    ensure(worst <= 1e-6, || format!("max |x_i - t A_i / sum A| / t = {worst:e}"))?;
    within_time(elapsed, Duration::from_secs(30))?;
    Ok(format!("max deviation {worst:.2e}·t over 1000 markets in {elapsed:.2?}"))
}

fn solver_cross_validation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let start = Instant::now();
    let (mut worst_wf, mut worst_cf, mut interior) = (0.0_f64, 0.0_f64, 0);
    for _ in 0..1000 {
        let n = rng.random_range(1..=6);
        let params: Vec<(f64, f64)> = (0..n)
            .map(|_| (log_uniform(&mut rng, 1e4, 1e8), rng.random_range(0.0..0.05)))
            .collect();
        let m = Market::from_params(&params).unwrap();
        let min_reserve = params.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let t = log_uniform(&mut rng, 1e-4 * min_reserve, 1e-2 * min_reserve);
        let ternary = solve_otp(&m, t, DEFAULT_TOL).map_err(|e| e.to_string())?;
        let waterfill = solve_otp_waterfill(&m, t, DEFAULT_TOL).map_err(|e| e.to_string())?;
        worst_wf = worst_wf.max((ternary.output - waterfill.output).abs() / ternary.output);
        let raw = closed_form_allocation(&m, t).map_err(|e| e.to_string())?;
        if raw.amounts().iter().all(|&x| x > 0.0) {
            interior += 1;
            let out = m.output(raw.amounts());
            worst_cf = worst_cf.max((ternary.output - out).abs() / ternary.output);
        }
    }
    let elapsed = start.elapsed();
    ensure(worst_wf <= 1e-6, || format!("ternary vs water-filling output gap {worst_wf:e}"))?;
    ensure(worst_cf <= 1e-6, || format!("ternary vs closed-form output gap {worst_cf:e}"))?;
    within_time(elapsed, Duration::from_secs(60))?;
    Ok(format!(
        "max relative gaps: water-filling {worst_wf:.2e}, closed form {worst_cf:.2e} ({interior} interior) in {elapsed:.2?}"
    ))
}

fn undercut_best_response() -> Check {
    let m = example_market();
    let profile = FeeProfile::uniform(2, STANDARD_FEE).unwrap();
    let br = best_response(&m, &profile, 0, 1000.0, 1e-10).map_err(|e| e.to_string())?;
    let baseline = pool_utility(&m, &profile, 0, 1000.0).map_err(|e| e.to_string())?;
    ensure((0.0018..=0.0022).contains(&br.fee), || format!("b_1 = {}", br.fee))?;
    ensure(br.utility > baseline, || format!("u(b_1) = {} <= u(0.003) = {baseline}", br.utility))?;
    Ok(format!("b_1 = {:.6}, utility {:.6} vs {baseline:.6} at 0.3%", br.fee, br.utility))
}

fn split_vs_fee_consistency() -> Check {
    let m = example_market();
    let at_standard = split_fraction_curve(&m, 1000.0, 0, &[STANDARD_FEE]).map_err(|e| e.to_string())?[0].1;
    ensure((at_standard - 1.0 / 3.0).abs() <= 1e-3, || format!("fraction at 0.3% = {at_standard}"))?;

    let spec = SweepSpec::new(SweepKind::SplitVsFee);
    let table = run_sweep(&spec).map_err(|e| e.to_string())?;
    let fees = table.column("fee").unwrap();
    let fraction = table.column("fraction").unwrap();
    let closed = table.column("fraction_closed_form").unwrap();
    for k in 1..fraction.len() {
        ensure(fraction[k] <= fraction[k - 1] + DEFAULT_TOL, || {
            format!("fraction rises from {} to {} at fee {}", fraction[k - 1], fraction[k], fees[k])
        })?;
    }
    let mut coincide = Vec::new();
    for k in 0..fees.len() {
        let raw = closed_form_allocation(&m.with_fee(0, fees[k]).unwrap(), 1000.0).unwrap();
        if raw.amounts().iter().all(|&x| x > 0.0) {
            ensure((closed[k] - fraction[k]).abs() <= 1e-6 * fraction[k], || {
                format!("closed form {} vs constrained {} at fee {}", closed[k], fraction[k], fees[k])
            })?;
            coincide.push(fees[k]);
        }
    }
    let (lo, hi) = (coincide.first().copied().unwrap_or(f64::NAN), coincide.last().copied().unwrap_or(f64::NAN));
    Ok(format!(
        "fraction at 0.3% = {at_standard:.9}; monotone over {} fees; closed form coincides on [{lo:.5}, {hi:.5}]",
        fees.len()
    ))
}

const FEE_SLACK: f64 = 1e-7;
const REL_SLACK: f64 = 1e-4;

fn two_pool_sweep(grid: Vec<f64>) -> Result<Table, String> {
    let mut spec = SweepSpec::new(SweepKind::TwoPoolShare);
    spec.grid = grid;
    run_sweep(&spec).map_err(|e| e.to_string())
}

fn two_pool_equilibria() -> Check {
    let table = two_pool_sweep(SweepKind::TwoPoolShare.default_grid(DEFAULT_GRID_POINTS))?;
    let cols = |name: &str| table.column(name).unwrap();
    let (share, f1, f2, r1, r2, conv) = (
        cols("share"),
        cols("fee_pool1"),
        cols("fee_pool2"),
        cols("relfee_pool1"),
        cols("relfee_pool2"),
        cols("converged"),
    );
    for k in 0..share.len() {
        ensure(conv[k] == 1.0, || format!("no equilibrium at share {}", share[k]))?;
        let (big_fee, small_fee, big_rel, small_rel) = if share[k] >= 0.5 {
            (f1[k], f2[k], r1[k], r2[k])
        } else {
            (f2[k], f1[k], r2[k], r1[k])
        };
        ensure(big_fee >= small_fee - FEE_SLACK, || {
            format!("share {}: larger pool fee {big_fee} < smaller {small_fee}", share[k])
        })?;
        ensure(small_rel >= big_rel * (1.0 - REL_SLACK), || {
            format!("share {}: smaller pool relative fee {small_rel} < larger {big_rel}", share[k])
        })?;
    }
    let mid = two_pool_sweep(vec![0.5])?;
    let row = &mid.rows[0];
    let (fa, fb, ra, rb) = (row[1], row[2], row[3], row[4]);
    ensure((fa - fb).abs() <= FEE_SLACK, || format!("share 0.5 fees {fa} vs {fb}"))?;
    ensure((ra - rb).abs() <= REL_SLACK * ra.max(rb), || format!("share 0.5 relative fees {ra} vs {rb}"))?;
    Ok(format!(
        "{} shares ordered as claimed; at 0.5 fees {fa:.9} / {fb:.9}, relative fees {ra:.6e} / {rb:.6e}",
        share.len()
    ))
}

fn three_pool_equilibria() -> Check {
    let mut spec = SweepSpec::new(SweepKind::ThreePoolShare);
    let table = run_sweep(&spec).map_err(|e| e.to_string())?;
    let cols = |t: &Table, name: &str| t.column(name).unwrap();
    let avg = cols(&table, "relfee_weighted_avg");
    let peak = avg[0].max(avg[avg.len() - 1]);
    let interior_max = avg[1..avg.len() - 1].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ensure(peak >= interior_max, || {
        format!("weighted average peaks inside the sweep: {interior_max} > endpoints {peak}")
    })?;

    let bench = two_pool_sweep(vec![0.5])?;
    let benchmark = bench.rows[0][3];

    spec.grid = vec![0.1, 0.9];
    let ends = run_sweep(&spec).map_err(|e| e.to_string())?;
    let mut points: Vec<(f64, f64, f64)> = Vec::new();
    for t in [&table, &ends] {
        let (s, r1, r2) = (cols(t, "share"), cols(t, "relfee_pool1"), cols(t, "relfee_pool2"));
        for k in 0..s.len() {
            if (0.1..=0.9).contains(&s[k]) {
                points.push((s[k], r1[k], r2[k]));
            }
        }
    }
    let above: Vec<&(f64, f64, f64)> = points.iter().filter(|p| p.1 >= benchmark || p.2 >= benchmark).collect();
    if let Some(worst) = above.iter().max_by(|a, b| a.1.max(a.2).total_cmp(&b.1.max(b.2))) {
        return Err(format!(
            "{} of {} shares in [0.1, 0.9] have a pool above the 3M/3M benchmark {benchmark:.6e}; \
             worst share {:.4}: relative fees {:.6e} / {:.6e}",
            above.len(),
            points.len(),
            worst.0,
            worst.1,
            worst.2
        ));
    }
    Ok(format!(
        "weighted average peaks at the endpoints ({peak:.6e}); {} shares below benchmark {benchmark:.6e}",
        points.len()
    ))
}

fn equilibrium_audit() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = GameConfig::default();
    let mut audited = 0;
    let mut worst: f64 = 0.0;
    for case in 0..24 {
        let n = if case < 16 { 2 + case % 3 } else { 2 + case % 2 };
        let symmetric = case >= 16;
        let base = log_uniform(&mut rng, 1e5, 1e7);
        let params: Vec<(f64, f64)> = (0..n)
            .map(|_| (if symmetric { base } else { log_uniform(&mut rng, 1e5, 1e7) }, STANDARD_FEE))
            .collect();
        let m = Market::from_params(&params).unwrap();
        let t = log_uniform(&mut rng, 10.0, 1e4);
        let eq = find_equilibrium(&m, &FeeProfile::of(&m), t, cfg.fee_tol, cfg.max_iters).map_err(|e| e.to_string())?;
        if !eq.converged {
            continue;
        }
        audited += 1;
        // Independent audit: a grid over the whole strategy interval plus a fine grid around each fee.
        for i in 0..n {
            let u = |fee: f64| pool_utility(&m, &eq.fees.with(i, fee).unwrap(), i, t).unwrap();
            let current = eq.utilities[i];
            let (_, coarse) = grid_argmax(0.0, 0.9995, 5e-4, u);
            let fee = eq.fees.get(i);
            let (_, fine) = grid_argmax((fee - 1e-4).max(0.0), fee + 1e-4, 1e-7, u);
            let gain = (coarse.max(fine) - current) / current;
            worst = worst.max(gain);
            ensure(gain <= cfg.deviation_tol, || format!("case {case}: pool {i} gains {gain:e} by deviating"))?;
        }
        let lib_gains = deviation_gains(&m, &eq.fees, &eq.utilities, &SingleTrade(t), &cfg).map_err(|e| e.to_string())?;
        ensure(lib_gains.iter().all(|&g| g <= cfg.deviation_tol), || format!("case {case}: audit gains {lib_gains:?}"))?;
        if symmetric {
            let fees = eq.fees.fees();
            let spread = fees.iter().copied().fold(f64::NEG_INFINITY, f64::max) - fees.iter().copied().fold(f64::INFINITY, f64::min);
            ensure(spread <= cfg.fee_tol, || format!("case {case}: symmetric market fees {fees:?}"))?;
        }
    }
    ensure(audited >= 20, || format!("only {audited} of 24 equilibrium searches converged"))?;
    Ok(format!("{audited} equilibria audited, max deviation gain {worst:.2e}"))
}

fn quasiconcavity_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let samples = cfmm_fees::game::LEVEL_SET_SAMPLES;
    let mut nonempty = 0;
    for _ in 0..10_000 {
        let level = CubicLevelSet::new(
            log_uniform(&mut rng, 1e-6, 10.0),
            log_uniform(&mut rng, 1e-3, 1e3),
            log_uniform(&mut rng, 1e-3, 1e3),
        )
        .unwrap();
        let mask: Vec<bool> = (0..samples)
            .map(|k| quasiconcavity_cubic(&level, k as f64 / (samples - 1) as f64) <= 0.0)
            .collect();
        let runs = count_runs(&mask);
        ensure(runs <= 1, || format!("{level:?}: {runs} runs"))?;
        nonempty += runs;
    }

    let mut markets = 0;
    while markets < 100 {
        let n = rng.random_range(2..=5);
        let params: Vec<(f64, f64)> = (0..n)
            .map(|_| (log_uniform(&mut rng, 1e5, 1e7), rng.random_range(0.001..0.01)))
            .collect();
        let m = Market::from_params(&params).unwrap();
        let t = log_uniform(&mut rng, 10.0, 1e4);
        if !closed_form_allocation(&m, t).unwrap().amounts().iter().all(|&x| x > 0.0) {
            continue;
        }
        markets += 1;
        let profile = FeeProfile::of(&m);
        let i = rng.random_range(0..n);
        ensure(utility_level_sets_are_intervals(&m, &profile, i, t), || format!("interior utility dips on {params:?}"))?;
        let sampled: Vec<f64> = (0..=2000)
            .map(|k| pool_utility(&m, &profile.with(i, 0.05 * k as f64 / 2000.0).unwrap(), i, t).unwrap())
            .collect();
        ensure(rises_then_falls(&sampled, 1e-9), || format!("routed utility dips on {params:?}, pool {i}"))?;
    }
    Ok(format!("10000 cubics ({nonempty} nonempty level sets) and {markets} markets"))
}

fn distribution_linearity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    while cases < 20 {
        let n = rng.random_range(2..=4);
        let params: Vec<(f64, f64)> = (0..n)
            .map(|_| (log_uniform(&mut rng, 1e6, 1e7), rng.random_range(0.002..0.004)))
            .collect();
        let m = Market::from_params(&params).unwrap();
        let sizes: Vec<(f64, f64)> = (0..100)
            .map(|_| (log_uniform(&mut rng, 1.0, 1e4), rng.random_range(0.1..1.0)))
            .collect();
        let dist = TradeSizeDistribution::new(sizes).unwrap();
        let interior = |t: f64| closed_form_allocation(&m, t).unwrap().amounts().iter().all(|&x| x > 0.0);
        if !dist.entries().iter().all(|&(t, _)| interior(t)) {
            continue;
        }
        cases += 1;
        let profile = FeeProfile::of(&m);
        for i in 0..n {
            let e = expected_utility(&m, &profile, i, &dist).map_err(|e| e.to_string())?;
            let u = pool_utility(&m, &profile, i, dist.mean()).map_err(|e| e.to_string())?;
            let gap = (e - u).abs() / u;
            worst = worst.max(gap);
            ensure(gap <= 1e-9, || format!("pool {i} of {params:?}: expected {e} vs mean-size {u}"))?;
        }
    }
    Ok(format!("{cases} interior markets, 100-atom distributions, max relative gap {worst:.2e}"))
}

fn fixture_replay() -> Check {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures");
    let read = |name: &str| std::fs::read_to_string(format!("{dir}/{name}")).map_err(|e| e.to_string());
    let snapshots = parse_pool_snapshots(&read("weth_usdc_pools.json")?).map_err(|e| e.to_string())?;
    let normalized = normalize_snapshots_with(&snapshots, BALANCE_TOLERANCE).map_err(|e| e.to_string())?;
    let (m, price) = (&normalized.market, normalized.target_price);
    let records = parse_trades_csv(&read("synthetic_trades.csv")?).map_err(|e| e.to_string())?;
    let dist = build_distribution_at(&records, price).map_err(|e| e.to_string())?;
    let cfg = GameConfig::default();
    let n_trades = records.len() as f64;

    let mut worst: f64 = 0.0;
    for fees in [[0.003, 0.003], [0.0, 0.0], [0.001, 0.004], [0.0025, 0.003], [0.01, 0.0005]] {
        let profile = FeeProfile::new(fees.to_vec()).unwrap();
        let report = replay_at(m, &profile, &records, price, cfg.route_tol).map_err(|e| e.to_string())?;
        for i in 0..2 {
            let expected = n_trades * expected_utility(m, &profile, i, &dist).map_err(|e| e.to_string())?;
            let got = report.per_pool_fees_collected[i];
            let gap = if expected == 0.0 { got.abs() } else { (got - expected).abs() / expected };
            worst = worst.max(gap);
            ensure(gap <= 1e-9, || format!("fees {fees:?}, pool {i}: replay {got} vs N·E {expected}"))?;
        }
    }

    let baseline = FeeProfile::uniform(2, STANDARD_FEE).unwrap();
    let base = replay_at(m, &baseline, &records, price, cfg.route_tol).map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    for i in 0..2 {
        let br = best_response_with(m, &baseline, i, &dist, &cfg).map_err(|e| e.to_string())?;
        let moved = baseline.with(i, br.fee).unwrap();
        let after = replay_at(m, &moved, &records, price, cfg.route_tol).map_err(|e| e.to_string())?;
        let (b, a) = (base.per_pool_fees_collected[i], after.per_pool_fees_collected[i]);
        ensure(a > b, || format!("pool {i}: optimized fee {} earns {a} <= baseline {b}", br.fee))?;
        notes.push(format!("pool {} {:.5}%: {b:.0} -> {a:.0}", i + 1, 100.0 * br.fee));
    }
    Ok(format!("replay identity max gap {worst:.2e}; {}", notes.join(", ")))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 11] = [
        ("example optimal split", example_split),
        ("proportional split law", proportional_split_law),
        ("solver cross-validation", solver_cross_validation),
        ("best response undercuts", undercut_best_response),
        ("split-vs-fee consistency", split_vs_fee_consistency),
        ("two-pool equilibria", two_pool_equilibria),
        ("three-pool equilibria", three_pool_equilibria),
        ("equilibrium audit", equilibrium_audit),
        ("quasiconcavity suite", quasiconcavity_suite),
        ("distribution linearity", distribution_linearity),
        ("synthetic trade replay", fixture_replay),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{elapsed:.2?}]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} [{elapsed:.2?}]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
