mod args;

use std::path::Path;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;

use args::{
    default_grid, ClearingArgs, Cli, Command, ModelArgs, SimulateArgs, SweepArgs, SweepKind, ThresholdArgs,
    TradeoffArgs,
};
use carequeue_core::clearing::{check_departure_order, sweep_instances};
use carequeue_core::experiments::{
    assignment_sweep, h1_h2_gap, priority_sweep, priority_threshold, tradeoff_curve, tradeoff_load_points,
    PolicyResult, SweepRow, SweepSpec, SweptParam,
};
use carequeue_core::report::{self, Schema};
use carequeue_core::{replicate, simulate_clearing, ClearingInstance, Estimate, ParamError, PolicySpec, SystemParams};

/// Bad input: reported with exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() || e.downcast_ref::<ParamError>().is_some() => {
            eprintln!("error: {e}");
            eprintln!("run with --help for usage");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Threshold(a) => threshold(a),
        Command::Clearing(a) => clearing(a),
        Command::Tradeoff(a) => tradeoff(a),
    }
}

fn resolve(model: &ModelArgs, default_nurses: usize) -> anyhow::Result<SystemParams> {
    if model.reps < 2 {
        return Err(usage("--reps must be at least 2 to estimate a standard error"));
    }
    let params = model.raw(default_nurses).validate()?;
    if params.theta_raw_sum() != 1.0 && params.theta_mode() == carequeue_core::ThetaMode::Normalize {
        println!(
            "theta normalized: weights summed to {}, scaled by {}",
            report::fmt_sig(params.theta_raw_sum()),
            report::fmt_sig(1.0 / params.theta_raw_sum())
        );
    }
    if params.is_unstable() {
        println!("warning: load ratio {} >= 1, queues grow without bound", report::fmt_sig(params.stability_ratio()));
    }
    Ok(params)
}

fn model_manifest(command: &str, params: &SystemParams, model: &ModelArgs) -> Vec<(String, String)> {
    let theta: Vec<String> = params.theta().iter().map(|&t| report::fmt_sig(t)).collect();
    let mut m: Vec<(String, String)> = vec![
        ("command", command.to_string()),
        ("version", env!("CARGO_PKG_VERSION").to_string()),
        ("alpha", report::fmt_sig(params.alpha())),
        ("beta", report::fmt_sig(params.beta())),
        ("gamma", report::fmt_sig(params.gamma())),
        ("a", report::fmt_sig(params.exponent())),
        ("stages", params.stages().to_string()),
        ("nurses", params.nurses().to_string()),
        ("periods", params.horizon().to_string()),
        ("warmup", params.warmup().to_string()),
        ("theta", theta.join(",")),
        ("theta_mode", params.theta_mode().to_string()),
        ("theta_raw_sum", report::fmt_sig(params.theta_raw_sum())),
        ("stability_ratio", report::fmt_sig(params.stability_ratio())),
        ("reps", model.reps.to_string()),
        ("seed", model.seed.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    m.push(("seed_range".into(), format!("{}..={}", model.seed, model.seed.wrapping_add(model.reps as u64 - 1))));
    m
}

fn write_outputs(
    out: Option<&Path>,
    schema: Schema,
    rows: &[Vec<String>],
    manifest: &[(String, String)],
) -> anyhow::Result<()> {
    let Some(path) = out else { return Ok(()) };
    report::write_csv(path, schema, rows).with_context(|| format!("writing {}", path.display()))?;
    let mpath = report::manifest_path(path);
    report::write_manifest(&mpath, manifest).with_context(|| format!("writing {}", mpath.display()))?;
    println!("wrote {} ({} rows) and {}", path.display(), rows.len(), mpath.display());
    Ok(())
}

fn fmt_est(e: &Estimate) -> String {
    format!("{} (se {})", report::fmt_sig(e.mean), report::fmt_sig(e.se))
}

fn simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let params = resolve(&args.model, 1)?;
    let policy = PolicySpec::new(args.priority, args.assignment);
    let runs = replicate(&params, policy, args.model.reps, args.model.seed);
    let totals: Vec<f64> = runs.iter().map(|r| r.total_cost).collect();
    let j = Estimate::from_samples(&totals);
    let queue = Estimate::from_samples(&runs.iter().map(|r| r.avg_queue_all()).collect::<Vec<_>>());
    let hi = Estimate::from_samples(&runs.iter().map(|r| r.avg_queue_hi()).collect::<Vec<_>>());
    let admitted: u64 = runs.iter().map(|r| r.admissions).sum();
    let discharged: u64 = runs.iter().map(|r| r.discharges).sum();

    println!("policy {}", policy.label());
    println!("load ratio {}", report::fmt_sig(params.stability_ratio()));
    println!("J {}", fmt_est(&j));
    println!("avg needy queue {}", fmt_est(&queue));
    println!("avg needy queue, two most severe types {}", fmt_est(&hi));
    println!("admissions {admitted}, discharges {discharged} over {} replications", runs.len());

    let result =
        PolicyResult { policy, estimate: j, totals, arrival_digests: runs.iter().map(|r| r.arrival_digest).collect() };
    let row = SweepRow {
        param: SweptParam::A,
        value: params.exponent(),
        results: vec![result],
        improvements: vec![],
        degenerate: j.mean == 0.0,
    };
    let mut manifest = model_manifest("simulate", &params, &args.model);
    manifest.push(("policy".into(), policy.label()));
    manifest.push(("J".into(), report::fmt_sig(j.mean)));
    manifest.push(("se".into(), report::fmt_sig(j.se)));
    write_outputs(args.out.as_deref(), Schema::Sweep, &report::sweep_rows(&[row]), &manifest)
}

fn sweep(args: SweepArgs) -> anyhow::Result<()> {
    let default_nurses = match args.kind {
        SweepKind::Priority => 1,
        SweepKind::Assignment => 2,
    };
    let params = resolve(&args.model, default_nurses)?;
    let grid = args.grid.clone().unwrap_or_else(|| default_grid(args.param, args.kind));
    let spec = SweepSpec {
        param: args.param,
        grid: grid.values.clone(),
        template: params.clone(),
        n_reps: args.model.reps,
        base_seed: args.model.seed,
    };
    let rows = match args.kind {
        SweepKind::Priority => priority_sweep(&spec),
        SweepKind::Assignment => assignment_sweep(&spec),
    }
    .map_err(|e| usage(e.to_string()))?;

    for row in &rows {
        let mut line = format!("{}={}", row.param, report::fmt_sig(row.value));
        if row.degenerate {
            line.push_str("  zero cost, improvement undefined");
        }
        for imp in &row.improvements {
            if let (Some(p), Some(se)) = (imp.pct, imp.se_pct) {
                line.push_str(&format!(
                    "  {} vs {}: {}% (se {})",
                    imp.candidate.label(),
                    imp.baseline.label(),
                    report::fmt_sig(p),
                    report::fmt_sig(se)
                ));
            }
        }
        if let Some(gap) = h1_h2_gap(row) {
            line.push_str(&format!("  J_h2-J_h1 {}", fmt_est(&gap)));
        }
        println!("{line}");
    }

    let mut manifest = model_manifest("sweep", &params, &args.model);
    manifest.push(("kind".into(), format!("{:?}", args.kind).to_lowercase()));
    manifest.push(("param".into(), args.param.to_string()));
    manifest.push(("grid".into(), grid.spec.clone()));
    write_outputs(args.out.as_deref(), Schema::Sweep, &report::sweep_rows(&rows), &manifest)
}

fn threshold(args: ThresholdArgs) -> anyhow::Result<()> {
    let params = resolve(&args.model, 1)?;
    let curve = priority_threshold(&params, &args.a_grid.values, args.model.reps, args.model.seed)
        .map_err(|e| usage(e.to_string()))?;
    let mut manifest = model_manifest("threshold", &params, &args.model);
    manifest.push(("a_grid".into(), args.a_grid.spec.clone()));
    match curve.crossing {
        Some(c) => {
            println!(
                "a_hat = {} (between a = {} and a = {})",
                report::fmt_sig(c.a_hat),
                report::fmt_sig(c.lower),
                report::fmt_sig(c.upper)
            );
            manifest.push(("a_hat".into(), report::fmt_sig(c.a_hat)));
        }
        None => {
            println!("no crossing: the cost difference keeps one sign on the grid");
            manifest.push(("a_hat".into(), "none".into()));
        }
    }
    write_outputs(args.out.as_deref(), Schema::Threshold, &report::threshold_rows(&curve), &manifest)
}

fn parse_durations(spec: &str, i: usize, j: usize) -> anyhow::Result<ClearingInstance> {
    let inst = if spec == "unit" {
        ClearingInstance::unit(i, j)
    } else {
        let (needy, content) = spec.split_once('/').unwrap_or((spec, ""));
        let list = |s: &str| -> anyhow::Result<Vec<u32>> {
            s.split(',')
                .filter(|p| !p.trim().is_empty())
                .map(|p| p.trim().parse::<u32>().map_err(|_| usage(format!("bad duration `{p}`"))))
                .collect()
        };
        ClearingInstance::new(i, j, list(needy)?, list(content)?)
    };
    inst.map_err(|e| usage(e.to_string()))
}

fn clearing(args: ClearingArgs) -> anyhow::Result<()> {
    if let Some(max_j) = args.exhaustive {
        return clearing_exhaustive(max_j);
    }
    let inst = parse_durations(&args.durations, args.i, args.j)?;
    if args.a_grid.values.iter().any(|&a| !a.is_finite() || a < 0.0) {
        return Err(usage("exponents must be finite and nonnegative"));
    }
    let result = simulate_clearing(&inst);
    let order = check_departure_order(&result);
    println!(
        "instance i={} j={} needy {:?} content {:?}",
        inst.i(),
        inst.j(),
        inst.needy_durations(),
        inst.content_durations()
    );
    println!(
        "departure order: first chain {}, second chain {}, s1 needy order {}, s1 content order {}",
        order.first_chain, order.second_chain, order.s1_needy_order, order.s1_content_order
    );
    let threshold = carequeue_core::clearing_threshold(&inst, 1e-9)?;
    println!("threshold {}", report::fmt_sig(threshold));
    let rows = report::clearing_rows(&result, &args.a_grid.values);
    for r in &rows {
        println!("a={} c1={} c2={} diff={}", r[2], r[3], r[4], r[5]);
    }
    let manifest: Vec<(String, String)> = vec![
        ("command".to_string(), "clearing".to_string()),
        ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("i".to_string(), inst.i().to_string()),
        ("j".to_string(), inst.j().to_string()),
        ("durations".to_string(), args.durations.clone()),
        ("a_grid".to_string(), args.a_grid.spec.clone()),
        ("lemma2_pass".to_string(), order.holds().to_string()),
        ("threshold".to_string(), report::fmt_sig(threshold)),
    ];
    write_outputs(args.out.as_deref(), Schema::Clearing, &rows, &manifest)
}

fn clearing_exhaustive(max_j: usize) -> anyhow::Result<()> {
    if max_j == 0 || max_j > 10 {
        return Err(usage("--exhaustive takes a bound between 1 and 10"));
    }
    let checks = sweep_instances(&ClearingInstance::enumerate(max_j, &[1, 2]), 1e-9);
    let order = checks.iter().filter(|c| !c.departure_order.holds()).count();
    let signs = checks.iter().filter(|c| c.diff_at_zero < 0.0 || c.diff_at_one > 0.0).count();
    let late = checks.iter().filter(|c| c.diff_at_zero != c.late_waiting as f64).count();
    let gap = checks.iter().map(|c| c.max_form_gap).fold(0.0, f64::max);
    let interior = checks.iter().filter(|c| c.threshold > 0.0 && c.threshold < 1.0).count();
    println!("{} instances with j <= {max_j}, durations in {{1, 2}}", checks.len());
    println!("departure order failures {order}");
    println!("sign failures at a = 0 or 1: {signs}");
    println!("c2(0) - c1(0) differs from late waiting of patient 2: {late}");
    println!("largest gap between cost forms {gap:.3e}");
    println!("thresholds strictly inside (0, 1): {interior}");
    Ok(())
}

fn tradeoff(args: TradeoffArgs) -> anyhow::Result<()> {
    let params = resolve(&args.model, 1)?;
    let loads = tradeoff_load_points();
    let points = tradeoff_curve(&params, &loads, &args.a_grid.values, args.model.reps, args.model.seed)
        .map_err(|e| usage(e.to_string()))?;
    println!("{} load settings x {} exponents = {} points", loads.len(), args.a_grid.values.len(), points.len());
    let mut manifest = model_manifest("tradeoff", &params, &args.model);
    manifest.retain(|(k, _)| !matches!(k.as_str(), "alpha" | "beta" | "gamma" | "a" | "stability_ratio"));
    manifest.push(("a_grid".into(), args.a_grid.spec.clone()));
    manifest.push(("loads".into(), "alpha 0.05:0.25:0.05, beta 0.8:1:0.1, gamma 0.1:0.5:0.1".into()));
    write_outputs(args.out.as_deref(), Schema::Tradeoff, &report::tradeoff_rows(&points), &manifest)
}
