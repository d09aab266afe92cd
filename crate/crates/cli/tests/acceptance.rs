//! Acceptance gate. Prints one `[PASS]`/`[FAIL]` line per criterion and exits
//! nonzero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use serde_json::Value;

use homlab::runner::RICHARDSON_TOLERANCE;
use homlab::{run, Experiment, ExperimentConfig, RawConfig};
use homlab_core::ensembles::u_path_series;
use homlab_core::estimators::{
    caccioppoli_check, default_side, estimate_ahom, estimate_moment, neighbor_distance_moments, spectral_gap_check,
    t_sweep, MonteCarlo,
};
use homlab_core::{DirectionVector, EnsembleSpec, SolverConfig, Verdict};

const SEED: u64 = 2024;
const T_GRID: [f64; 4] = [4.0, 16.0, 64.0, 256.0];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn config(experiment: Experiment, keys: &[(&str, &str)]) -> ExperimentConfig {
    let mut raw = RawConfig::default();
    for (k, v) in keys {
        raw.set(k, v);
    }
    raw.resolve(experiment).expect("valid acceptance config")
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn mc(spec: EnsembleSpec, side: usize, samples: usize) -> MonteCarlo {
    MonteCarlo { spec, dim: 3, side, samples, master_seed: SEED, solver: SolverConfig::default() }
}

/// Criteria 1 and 2 share one run of the identity suite.
fn identities() -> (Outcome, Outcome) {
    let start = Instant::now();
    let cfg = config(
        Experiment::VerifyIdentities,
        &[("dim", "3"), ("side", "4"), ("t", "8"), ("samples", "50"), ("h", "1e-4"), ("seed", "1")],
    );
    let out = run(&cfg).expect("identity run");
    let elapsed = start.elapsed();
    let r = &out.report.results;
    let err = |id: &str| f(&r["max_errors"][id]);

    let limits = [
        ("integration-by-parts", 1e-12),
        ("green-mass", 1e-9),
        ("corrector-mean", 1e-9),
        ("corrector-energy", 1e-8),
        ("dipole-energy", 1e-6),
    ];
    let ok = limits.iter().all(|(id, lim)| err(id) < *lim);
    let detail = limits.iter().map(|(id, lim)| format!("{id} {:.1e} (< {lim:.0e})", err(id))).collect::<Vec<_>>();
    let first = outcome(
        ok && out.report.failures.is_empty() && elapsed < Duration::from_secs(60),
        format!("50 configurations, {}; {:.1}s", detail.join(", "), elapsed.as_secs_f64()),
    );

    let ode = ["ode0", "ode1", "ode2", "rel3"];
    let ode_ok = ode.iter().all(|id| err(id) < 1e-5);
    let ratios: Vec<f64> = r["richardson"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|rep| rep["checks"].as_array().unwrap().iter().map(|c| f(&c["lhs"])))
        .collect();
    let ratios_ok = !ratios.is_empty() && ratios.iter().all(|q| (q - 4.0).abs() <= RICHARDSON_TOLERANCE);
    let single: Vec<f64> =
        r["single_bond"]["checks"].as_array().unwrap().iter().map(|c| f(&c["relative_error"])).collect();
    let single_ok = single.len() == 3 && single.iter().all(|e| *e <= 1e-8);
    let (rmin, rmax) = ratios.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &q| (a.min(q), b.max(q)));
    let second = outcome(
        ode_ok && ratios_ok && single_ok && elapsed < Duration::from_secs(120),
        format!(
            "max FD errors {} (< 1e-5); halving ratios in [{rmin:.4}, {rmax:.4}]; single bond max error {:.1e}",
            ode.iter().map(|id| format!("{id} {:.1e}", err(id))).collect::<Vec<_>>().join(", "),
            single.iter().cloned().fold(0.0, f64::max),
        ),
    );
    (first, second)
}

fn inequalities() -> Outcome {
    let cfg = config(
        Experiment::IneqSuite,
        &[
            ("dim", "3"),
            ("side", "8"),
            ("p", "5"),
            ("trials", "1000"),
            ("pairs", "1000000"),
            ("leibniz-p", "1,2,4"),
            ("seed", "3"),
        ],
    );
    let out = run(&cfg).expect("inequality run");
    let r = &out.report.results;
    let reports = r["inequalities"].as_array().unwrap();
    let failing: Vec<String> =
        reports.iter().filter(|x| x["passed"] != true).map(|x| x["id"].as_str().unwrap_or("?").to_string()).collect();
    let tallies = r["osc"]["tallies"].as_array().unwrap();
    let violations: u64 = tallies.iter().map(|t| t["violations"].as_u64().unwrap()).sum();
    // g = 0 or 1 - a g = 0 would be reported as degenerate, so this is strict positivity
    let positivity_degenerate: u64 = tallies
        .iter()
        .filter(|t| t["identity"].as_str().unwrap().starts_with("positivity"))
        .map(|t| t["degenerate"].as_u64().unwrap())
        .sum();
    let osc_trials = f(&r["osc"]["trials"]);
    let coercivity = &reports[0];
    let leibniz_pairs: u64 = reports
        .iter()
        .skip(1)
        .filter(|x| x["id"].as_str().is_some_and(|id| id.starts_with("leibniz-ii-")))
        .map(|x| x["trials"].as_u64().unwrap())
        .sum();
    outcome(
        failing.is_empty()
            && violations == 0
            && positivity_degenerate == 0
            && out.report.verdict == Verdict::Pass
            && osc_trials >= 1000.0
            && leibniz_pairs >= 3_000_000,
        format!(
            "osc {osc_trials} triples, {violations} violations; coercivity p=5 max ratio {:.3} vs C {:.4}; \
             Leibniz {leibniz_pairs} pairs; failing {failing:?}",
            f(&coercivity["max_ratio"]),
            f(&coercivity["constant"]),
        ),
    )
}

fn spectral_gap() -> Outcome {
    let start = Instant::now();
    let e = DirectionVector::axis(3, 1).unwrap();
    let r = spectral_gap_check(&mc(EnsembleSpec::modified_bernoulli(0.7), 4, 200), 16.0, &e).expect("sg run");
    let elapsed = start.elapsed();
    outcome(
        r.check.verdict == Verdict::Pass && r.failures.is_empty() && elapsed < Duration::from_secs(600),
        format!(
            "Var {:.4} [{:.4}, {:.4}] vs vertical energy {:.4} [{:.4}, {:.4}]; {:.1}s",
            r.variance,
            r.variance_ci.lo,
            r.variance_ci.hi,
            r.vertical_energy,
            r.vertical_energy_ci.lo,
            r.vertical_energy_ci.hi,
            elapsed.as_secs_f64()
        ),
    )
}

fn green_decay() -> Outcome {
    let start = Instant::now();
    let base = [("dim", "3"), ("side", "64"), ("t", "256"), ("p", "1.5"), ("r0", "2"), ("k", "3"), ("seed", "2024")];
    let mut fixed = base.to_vec();
    fixed.push(("ensemble", "deterministic"));
    fixed.push(("value", "1"));
    let one = run(&config(Experiment::GreenDecay, &fixed)).expect("decay run");
    let mut random = base.to_vec();
    random.extend([("ensemble", "modified-bernoulli"), ("lambda", "0.7"), ("samples", "20")]);
    let mb = run(&config(Experiment::GreenDecay, &random)).expect("decay run");
    let elapsed = start.elapsed();
    let s1 = f(&one.report.results["profile"]["slope"]);
    let s2 = f(&mb.report.results["profile"]["slope"]);
    outcome(
        (s1 + 2.0).abs() <= 0.3 && s2 <= -1.5 && mb.report.failures.is_empty() && elapsed < Duration::from_secs(900),
        format!(
            "a=1 slope {s1:.3} (target -2 +- 0.3); MB(0.7) n=20 slope {s2:.3} (<= -1.5); {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

/// Criteria 6 and 7 share the corrector solves of one `T` sweep per ensemble.
fn sweeps() -> (Outcome, Outcome) {
    let e = DirectionVector::axis(3, 1).unwrap();
    let samples = 8;
    let mb = t_sweep(&mc(EnsembleSpec::modified_bernoulli(0.7), 0, samples), &T_GRID, default_side, 2, &e, 2.0)
        .expect("sweep");
    let uniform = caccioppoli_check(
        &mc(EnsembleSpec::IidUniform { lo: 0.5, hi: 1.0 }, 0, samples),
        &T_GRID,
        default_side,
        2,
        &e,
        2.0,
    )
    .expect("sweep");

    let sides_ok = mb.moments.iter().all(|m| m.side as f64 >= 8.0 * m.t.sqrt());
    let last = mb.ratios.last().expect("four T values");
    let ratio_ok = last.ci.lo >= 0.8 && last.ci.hi <= 1.25;
    let control = T_GRID
        .iter()
        .map(|&t| {
            estimate_moment(&mc(EnsembleSpec::modified_bernoulli(1.0), default_side(t), 2), t, 2.0, &e)
                .expect("control")
                .estimate
        })
        .collect::<Vec<_>>();
    let control_ok = control.iter().all(|&m| m == 0.0);
    let sixth = outcome(
        sides_ok && ratio_ok && control_ok && mb.moments.iter().all(|m| m.failures.is_empty()),
        format!(
            "<phi^2>^1/2 {}; ratio 64->256 {:.3} CI [{:.3}, {:.3}] (within [0.8, 1.25]); lambda=1 control {control:?}",
            mb.moments
                .iter()
                .map(|m| format!("T={} L={}: {:.4}", m.t, m.side, m.estimate))
                .collect::<Vec<_>>()
                .join(", "),
            last.ratio,
            last.ci.lo,
            last.ci.hi,
        ),
    );

    let c = &mb.caccioppoli;
    let seventh = outcome(
        c.verdict == Verdict::Pass && uniform.verdict == Verdict::Pass,
        format!(
            "A/B across T grid: MB(0.7) {:?} spread {:.3}; IidUniform(0.5,1) {:?} spread {:.3} (band 2)",
            c.rows.iter().map(|r| (r.ratio * 1e3).round() / 1e3).collect::<Vec<_>>(),
            c.spread,
            uniform.rows.iter().map(|r| (r.ratio * 1e3).round() / 1e3).collect::<Vec<_>>(),
            uniform.spread,
        ),
    );
    (sixth, seventh)
}

fn neighbor_distance() -> Outcome {
    let full = neighbor_distance_moments(1.0, 1.0, 1, 3, 16, 100, SEED).expect("distance run");
    let half = neighbor_distance_moments(0.5, 2.0, 1, 3, 32, 10_000, SEED).expect("distance run");
    let bound = u_path_series(0.5, 2.0);
    outcome(
        full.estimate == 3.0 && full.max_distance == 3.0 && half.ci.hi <= bound && half.wrapped == 0,
        format!(
            "lambda=1 distance {} (max {}); lambda=0.5 p=2 n=1e4 moment {:.3} CI [{:.3}, {:.3}] <= series {bound:.4}",
            full.estimate, full.max_distance, half.estimate, half.ci.lo, half.ci.hi
        ),
    )
}

fn ahom() -> Outcome {
    let diagonal = DirectionVector::normalized(vec![1.0, 2.0, 3.0]).unwrap();
    let unit = estimate_ahom(&mc(EnsembleSpec::Deterministic { value: 1.0 }, 16, 2), 256.0, &diagonal).expect("ahom");
    let e2 = DirectionVector::axis(3, 1).unwrap();
    let r = estimate_ahom(&mc(EnsembleSpec::modified_bernoulli(0.7), 32, 30), 256.0, &e2).expect("ahom");
    outcome(
        (unit.estimate - 1.0).abs() <= 1e-9 && r.estimate <= 0.7 + r.ci.half_width(),
        format!(
            "a=1: {:.12}; MB(0.7) e2: {:.4} CI [{:.4}, {:.4}] (<= 0.7 + CI)",
            unit.estimate, r.estimate, r.ci.lo, r.ci.hi
        ),
    )
}

fn homlab(dir: &Path, workers: &str, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_homlab"))
        .args(args)
        .args(["--workers", workers, "--out"])
        .arg(dir)
        .env_remove("HOMLAB_OUT")
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 3] = [
        &["moments", "--t", "4,16", "--side", "8", "--samples", "6", "--seed", "11"],
        &["verify-identities", "--samples", "8", "--seed", "12"],
        &["neighbor-dist", "--samples", "300", "--side", "32", "--seed", "13"],
    ];
    let mut compared = 0;
    for (i, args) in runs.iter().enumerate() {
        let (a, b) = (tmp.path().join(format!("{i}-w1")), tmp.path().join(format!("{i}-w3")));
        if !homlab(&a, "1", args) || !homlab(&b, "3", args) {
            return outcome(false, format!("{} exited nonzero", args[0]));
        }
        let mut files: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        files.retain(|n| n != "run_meta.json");
        for name in files {
            if fs::read(a.join(&name)).unwrap() != fs::read(b.join(&name)).unwrap() {
                return outcome(false, format!("{} differs between 1 and 3 workers: {name:?}", args[0]));
            }
            compared += 1;
        }
    }
    outcome(compared >= 6, format!("{compared} output files byte-identical across 1 and 3 workers"))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: u32, o: Outcome| {
        println!("[{}] criterion {n}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        if !o.passed {
            failed += 1;
        }
    };
    let (c1, c2) = identities();
    report(1, c1);
    report(2, c2);
    report(3, inequalities());
    report(4, spectral_gap());
    report(5, green_decay());
    let (c6, c7) = sweeps();
    report(6, c6);
    report(7, c7);
    report(8, neighbor_distance());
    report(9, ahom());
    report(10, reproducibility());
    if failed == 0 {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
