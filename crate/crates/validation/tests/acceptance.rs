//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::Instant;

use carequeue_core::clearing::{sweep_instances, ClearingInstance};
use carequeue_core::experiments::{
    assignment_sweep, h1_h2_gap, priority_sweep, priority_threshold, spearman, tradeoff_curve, tradeoff_load_points,
    unit_grid, SweepSpec, SweptParam,
};
use carequeue_core::model::{Assignment, PolicySpec, Priority, RawParams, SystemParams};
use carequeue_core::report::{threshold_rows, write_rows, Schema};
use carequeue_core::{run_replication, run_replication_with};

const REPS: usize = 20;
const SEED: u64 = 20_240_601;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn baseline(edit: impl FnOnce(&mut RawParams)) -> SystemParams {
    let mut raw = RawParams::default();
    edit(&mut raw);
    raw.validate().expect("valid parameters")
}

fn threshold_reproduction() -> Verdict {
    let curve = priority_threshold(&baseline(|_| {}), &unit_grid(0.05), REPS, SEED).unwrap();
    match curve.crossing {
        Some(c) => verdict((0.5..=0.7).contains(&c.a_hat), format!("a_hat = {:.4}", c.a_hat)),
        None => verdict(false, "no crossing on [0, 1]"),
    }
}

fn priority_signs() -> Verdict {
    let alphas = vec![0.05, 0.10, 0.15, 0.20, 0.25];
    let mut pass = true;
    let mut parts = Vec::new();
    for (a, want_positive) in [(0.0, true), (1.0, false)] {
        let spec = SweepSpec {
            param: SweptParam::Alpha,
            grid: alphas.clone(),
            template: baseline(|r| r.exponent = a),
            n_reps: REPS,
            base_seed: SEED,
        };
        let rows = priority_sweep(&spec).unwrap();
        let imps: Vec<_> = rows.iter().map(|r| r.improvements[0]).collect();
        let signs_ok =
            imps.iter().all(
                |i| {
                    if want_positive {
                        i.significantly_positive(2.0)
                    } else {
                        i.significantly_negative(2.0)
                    }
                },
            );
        let magnitudes: Vec<f64> = imps.iter().map(|i| i.pct.unwrap().abs()).collect();
        let rho = spearman(&alphas, &magnitudes).unwrap_or(0.0);
        pass &= signs_ok && rho > 0.0;
        let pcts: Vec<String> = imps.iter().map(|i| format!("{:+.1}", i.pct.unwrap())).collect();
        parts.push(format!(
            "a={a}: pct [{}] signs {} rho {rho:.2}",
            pcts.join(" "),
            if signs_ok { "ok" } else { "bad" }
        ));
    }
    verdict(pass, parts.join("; "))
}

fn assignment_ordering() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for a in [0.0, 1.0] {
        let spec = SweepSpec {
            param: SweptParam::A,
            grid: vec![a],
            template: baseline(|r| {
                r.nurses = 2;
                r.alpha = 0.4;
            }),
            n_reps: REPS,
            base_seed: SEED,
        };
        let row = &assignment_sweep(&spec).unwrap()[0];
        let priority = Priority::paired_with_exponent(a);
        let h1 = row.improvement_of(PolicySpec::new(priority, Assignment::H1)).unwrap();
        let h2 = row.improvement_of(PolicySpec::new(priority, Assignment::H2)).unwrap();
        let gap = h1_h2_gap(row).unwrap();
        let ok = h1.significantly_positive(2.0) && h2.significantly_positive(2.0) && gap.mean >= 0.0;
        pass &= ok;
        parts.push(format!(
            "a={a} ({}): h1 {:+.1}% h2 {:+.1}% vs random, J_h2-J_h1 {:.0}",
            priority.name(),
            h1.pct.unwrap(),
            h2.pct.unwrap(),
            gap.mean
        ));
    }
    verdict(pass, parts.join("; "))
}

fn clearing_checks() -> Vec<carequeue_core::clearing::InstanceCheck> {
    sweep_instances(&ClearingInstance::enumerate(8, &[1, 2]), 1e-9)
}

fn departure_order(checks: &[carequeue_core::clearing::InstanceCheck]) -> Verdict {
    let failures = checks.iter().filter(|c| !c.departure_order.holds()).count();
    verdict(failures == 0, format!("{} instances, {failures} failures", checks.len()))
}

fn sign_conditions(checks: &[carequeue_core::clearing::InstanceCheck]) -> (Verdict, Vec<(String, Verdict)>) {
    let sign_fail = checks.iter().filter(|c| c.diff_at_zero < 0.0 || c.diff_at_one > 0.0).count();
    let late_fail = checks.iter().filter(|c| c.diff_at_zero != c.late_waiting as f64).count();
    let form_gap = checks.iter().map(|c| c.max_form_gap).fold(0.0, f64::max);
    let subs = vec![
        ("5a sign at a=0 and a=1".to_string(), verdict(sign_fail == 0, format!("{sign_fail} failures"))),
        (
            "5b c2(0)-c1(0) = late waiting of patient 2 in s2".to_string(),
            verdict(late_fail == 0, format!("{late_fail} of {} instances differ", checks.len())),
        ),
        ("5c per-period vs waiting form".to_string(), verdict(form_gap <= 1e-9, format!("max gap {form_gap:.1e}"))),
    ];
    let pass = subs.iter().all(|(_, v)| v.pass);
    let failed: Vec<&str> = subs.iter().filter(|(_, v)| !v.pass).map(|(n, _)| &n[..2]).collect();
    let detail =
        if failed.is_empty() { "all clauses hold".to_string() } else { format!("failing: {}", failed.join(", ")) };
    (verdict(pass, detail), subs)
}

fn convexity() -> Verdict {
    let grid = unit_grid(0.1);
    let mut worst = 0.0f64;
    let mut pass = true;
    for seed in SEED..SEED + 5 {
        for priority in Priority::ALL {
            let policy = PolicySpec::single(priority);
            let j: Vec<f64> =
                grid.iter().map(|&a| run_replication(&baseline(|r| r.exponent = a), policy, seed).total_cost).collect();
            let scale = j.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            let tol = 1e-9 * scale;
            for w in j.windows(2) {
                let d = w[1] - w[0];
                worst = worst.min(d / scale);
                pass &= d >= -tol;
            }
            for w in j.windows(3) {
                let d2 = w[2] - 2.0 * w[1] + w[0];
                worst = worst.min(d2 / scale);
                pass &= d2 >= -tol;
            }
        }
    }
    verdict(pass, format!("10 paths x 11 exponents, most negative relative difference {worst:.1e}"))
}

fn determinism() -> Verdict {
    let params = baseline(|r| r.horizon = 4_000);
    let render = || {
        let curve = priority_threshold(&params, &unit_grid(0.1), 6, SEED).unwrap();
        let mut buf = Vec::new();
        write_rows(&mut buf, Schema::Threshold, &threshold_rows(&curve)).unwrap();
        buf
    };
    let identical = render() == render();
    let mut periods = 0u64;
    let mut violations = 0u64;
    for policy in [
        PolicySpec::new(Priority::ShortestFirst, Assignment::H1),
        PolicySpec::new(Priority::LongestFirst, Assignment::H2),
        PolicySpec::new(Priority::ShortestFirst, Assignment::Random),
    ] {
        let p = baseline(|r| {
            r.nurses = 2;
            r.alpha = 0.4;
            r.horizon = 4_000;
        });
        for seed in SEED..SEED + 4 {
            run_replication_with(&p, policy, seed, |_, state| {
                periods += 1;
                if !state.is_conserved() {
                    violations += 1;
                }
            });
        }
    }
    verdict(
        identical && violations == 0,
        format!("csv identical: {identical}; conservation violations {violations} in {periods} periods"),
    )
}

fn tradeoff() -> Verdict {
    let grid = unit_grid(0.1);
    let points = tradeoff_curve(&baseline(|_| {}), &tradeoff_load_points(), &grid, REPS, SEED).unwrap();
    let mut min_fail = 0;
    let mut trend_fail = 0;
    let n_sets = points.len() / grid.len();
    for set in points.chunks(grid.len()) {
        let zero = &set[0];
        let best = set.iter().map(|p| p.avg_queue_all.mean).fold(f64::INFINITY, f64::min);
        if zero.avg_queue_all.mean > best + 2.0 * zero.avg_queue_all.se {
            min_fail += 1;
        }
        let hi: Vec<f64> = set.iter().map(|p| p.avg_queue_hi.mean).collect();
        if spearman(&grid, &hi).unwrap_or(0.0) > 0.0 {
            trend_fail += 1;
        }
    }
    verdict(
        min_fail == 0 && trend_fail == 0,
        format!("{n_sets} sets x {} exponents; min violations {min_fail}, trend violations {trend_fail}", grid.len()),
    )
}

fn report(id: &str, name: &str, v: &Verdict, secs: f64) {
    let tag = if v.pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {id} {tag} {name}: {} [{secs:.1}s]", v.detail);
}

fn run(failed: &mut Vec<String>, id: &str, name: &str, f: impl FnOnce() -> Verdict) {
    let start = Instant::now();
    let v = f();
    report(id, name, &v, start.elapsed().as_secs_f64());
    if !v.pass {
        failed.push(id.to_string());
    }
}

fn main() {
    let mut failed = Vec::new();
    run(&mut failed, "1", "threshold reproduction", threshold_reproduction);
    run(&mut failed, "2", "priority sign structure", priority_signs);
    run(&mut failed, "3", "assignment ordering", assignment_ordering);

    let mut checks = Vec::new();
    run(&mut failed, "4", "clearing chains, exhaustive", || {
        checks = clearing_checks();
        departure_order(&checks)
    });
    run(&mut failed, "5", "clearing cost sign conditions", || {
        let (v, subs) = sign_conditions(&checks);
        for (name, sub) in &subs {
            println!("    {} {name}: {}", if sub.pass { "pass" } else { "fail" }, sub.detail);
        }
        v
    });

    run(&mut failed, "6", "pathwise monotone convexity in a", convexity);
    run(&mut failed, "7", "determinism and conservation", determinism);
    run(&mut failed, "8", "queue-length tradeoff", tradeoff);

    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {}", failed.join(", "));
        std::process::exit(1);
    }
}
