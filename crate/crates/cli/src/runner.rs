//! Dispatch from a resolved configuration to the library operations.
//!
//! A run produces a [`RunReport`] plus named artifacts held in memory; the
//! caller decides where they are written. Nothing in the report depends on
//! the output location, wall-clock time or worker count.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{json, Value};

use homlab_core::ensembles::ConductanceField;
use homlab_core::estimators::{self, DecaySource, MonteCarlo, SampleFailure};
use homlab_core::inequalities::{self, InequalityReport};
use homlab_core::report::combine;
use homlab_core::sensitivity::{convergence_ratios, osc_trials, verify_ode_identities, ODE_NAMES};
use homlab_core::{graph_metric, io, par, seed, solver};
use homlab_core::{Bond, CheckReport, EnsembleSpec, IdentityCheck, TorusLattice, Verdict};

use crate::config::{Experiment, ExperimentConfig};
use crate::RunError;

/// Sample failure with the part of the run it belongs to.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Failure {
    pub context: String,
    pub index: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub experiment: Experiment,
    pub version: &'static str,
    pub config: ExperimentConfig,
    pub verdict: Verdict,
    pub failures: Vec<Failure>,
    pub results: Value,
    /// File names relative to the output directory.
    pub artifacts: Vec<String>,
}

impl RunReport {
    /// 0 when every verdict holds, 1 on a violated check, 3 when samples failed.
    pub fn exit_code(&self) -> i32 {
        if !self.failures.is_empty() {
            3
        } else if self.verdict == Verdict::Violated {
            1
        } else {
            0
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub artifacts: Vec<Artifact>,
}

/// What an experiment hands back before the report is assembled.
#[derive(Default)]
struct Outcome {
    verdict: Option<Verdict>,
    failures: Vec<Failure>,
    results: Value,
    artifacts: Vec<Artifact>,
}

fn failed(e: homlab_core::Error) -> RunError {
    RunError::Failure(e.to_string())
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn table(name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<Artifact, RunError> {
    let mut bytes = Vec::new();
    io::write_table(&mut bytes, header, &rows).map_err(failed)?;
    Ok(Artifact { name: name.into(), bytes })
}

fn dat(name: &str, rows: &[(f64, f64)]) -> Result<Artifact, RunError> {
    let mut bytes = Vec::new();
    io::write_dat(&mut bytes, rows).map_err(failed)?;
    Ok(Artifact { name: name.into(), bytes })
}

fn log_failures(context: impl Into<String>, failures: &[SampleFailure]) -> Vec<Failure> {
    let context = context.into();
    failures.iter().map(|f| Failure { context: context.clone(), index: f.index, message: f.message.clone() }).collect()
}

fn monte_carlo(cfg: &ExperimentConfig, side: usize) -> MonteCarlo {
    MonteCarlo {
        spec: cfg.ensemble.clone(),
        dim: cfg.dim,
        side,
        samples: cfg.samples,
        master_seed: cfg.seed,
        solver: cfg.solver,
    }
}

fn lattice(cfg: &ExperimentConfig, t: f64) -> Result<TorusLattice, RunError> {
    TorusLattice::new(cfg.dim, cfg.side_for(t)).map_err(|e| RunError::Usage(e.to_string()))
}

fn check_rows(label: &str, report: &CheckReport) -> Vec<Vec<String>> {
    report
        .checks
        .iter()
        .map(|c| {
            vec![
                label.to_string(),
                report.name.clone(),
                c.identity.clone(),
                c.lhs.to_string(),
                c.rhs.to_string(),
                c.relative_error.to_string(),
                to_value(&c.verdict).as_str().unwrap_or("").to_string(),
            ]
        })
        .collect()
}

const CHECK_HEADER: &[&str] = &["label", "report", "identity", "lhs", "rhs", "error", "verdict"];

/// Allowed distance of an error-reduction ratio from 4 when `h` is halved.
pub const RICHARDSON_TOLERANCE: f64 = 0.25;

/// Runs the configured experiment. The configuration must already be
/// validated (see [`ExperimentConfig::validate`]).
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let outcome = match cfg.experiment {
        Experiment::VerifyIdentities => verify_identities(cfg)?,
        Experiment::IneqSuite => ineq_suite(cfg)?,
        Experiment::Moments => moments(cfg)?,
        Experiment::SgCheck => sg_check(cfg)?,
        Experiment::Caccioppoli => caccioppoli(cfg)?,
        Experiment::GreenDecay => green_decay(cfg)?,
        Experiment::Ahom => ahom(cfg)?,
        Experiment::Growth => growth(cfg)?,
        Experiment::NeighborDist => neighbor_dist(cfg)?,
        Experiment::Gen => gen(cfg)?,
    };
    let report = RunReport {
        experiment: cfg.experiment,
        version: env!("CARGO_PKG_VERSION"),
        config: cfg.clone(),
        verdict: outcome.verdict.unwrap_or(Verdict::NoVerdict),
        failures: outcome.failures,
        results: outcome.results,
        artifacts: outcome.artifacts.iter().map(|a| a.name.clone()).collect(),
    };
    Ok(RunOutput { report, artifacts: outcome.artifacts })
}

fn verify_identities(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let t = cfg.t[0];
    let lat = lattice(cfg, t)?;
    let e = cfg.direction();
    let per_config = par::map_indexed(cfg.samples, |i| -> homlab_core::Result<(Bond, CheckReport, CheckReport)> {
        let s = seed::derive_seed(cfg.seed, i as u64);
        let a = cfg.ensemble.sample(&lat, s)?;
        let b = lat.bond_at((seed::derive_seed(s, seed::stream::AUX) % lat.bond_count() as u64) as usize);
        let ids = solver::verify_identities(&lat, &a, t, &e, b, s, &cfg.solver)?;
        let ode = verify_ode_identities(&lat, &a, t, &e, b, cfg.h, &cfg.solver)?;
        Ok((b, ids, ode))
    });
    let per_config = per_config.into_iter().collect::<homlab_core::Result<Vec<_>>>().map_err(failed)?;

    // Richardson ratios on the first few configurations, at a step where
    // truncation error dominates solver noise
    let richardson = (0..cfg.samples.min(5))
        .map(|i| -> homlab_core::Result<CheckReport> {
            let s = seed::derive_seed(cfg.seed, i as u64);
            let a = cfg.ensemble.sample(&lat, s)?;
            let b = per_config[i].0;
            let ratios = convergence_ratios(&lat, &a, t, &e, b, cfg.h_ratio, &cfg.solver)?;
            let checks = ODE_NAMES
                .iter()
                .zip(ratios)
                .map(|(n, r)| IdentityCheck::absolute(format!("richardson-{n}"), r, 4.0, RICHARDSON_TOLERANCE));
            Ok(CheckReport::new("richardson", checks.collect()))
        })
        .collect::<homlab_core::Result<Vec<_>>>()
        .map_err(failed)?;
    let origin_bond = Bond { site: lat.origin(), axis: 0 };
    let single = [0.1, 0.5, 1.0]
        .iter()
        .map(|&s| solver::single_bond_check(&lat, t, origin_bond, s, 1e-8, &cfg.solver))
        .collect::<homlab_core::Result<Vec<_>>>()
        .map_err(failed)?;
    let single = CheckReport::new("single-bond", single);

    let mut max_errors: BTreeMap<String, f64> = BTreeMap::new();
    let mut rows = Vec::new();
    for (i, (_, ids, ode)) in per_config.iter().enumerate() {
        for r in [ids, ode] {
            for c in &r.checks {
                let m = max_errors.entry(c.identity.clone()).or_insert(0.0);
                *m = m.max(c.relative_error);
            }
            rows.extend(check_rows(&format!("config-{i}"), r));
        }
    }
    for (i, r) in richardson.iter().enumerate() {
        rows.extend(check_rows(&format!("config-{i}"), r));
    }
    rows.extend(check_rows("single-bond", &single));
    let verdict = combine(
        per_config
            .iter()
            .flat_map(|(_, a, b)| [a.verdict, b.verdict])
            .chain(richardson.iter().map(|r| r.verdict))
            .chain([single.verdict]),
    );
    let results = json!({
        "t": t,
        "side": lat.side(),
        "configurations": cfg.samples,
        "max_errors": max_errors,
        "bonds": per_config.iter().map(|(b, _, _)| b).collect::<Vec<_>>(),
        "identities": per_config.iter().map(|(_, r, _)| r).collect::<Vec<_>>(),
        "ode": per_config.iter().map(|(_, _, r)| r).collect::<Vec<_>>(),
        "richardson": richardson,
        "single_bond": single,
    });
    Ok(Outcome {
        verdict: Some(verdict),
        results,
        artifacts: vec![table("identities.csv", CHECK_HEADER, rows)?],
        ..Outcome::default()
    })
}

fn inequality_rows(reports: &[InequalityReport]) -> Vec<Vec<String>> {
    reports
        .iter()
        .map(|r| {
            vec![
                r.id.clone(),
                r.trials.to_string(),
                r.degenerate.to_string(),
                r.max_ratio.to_string(),
                r.constant.to_string(),
                r.passed.to_string(),
            ]
        })
        .collect()
}

fn ineq_suite(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let lat = lattice(cfg, cfg.t[0])?;
    let p = cfg.first_p();
    let constant = inequalities::coercivity_constant(p, cfg.dim).map_err(failed)?;
    let mut reports = vec![inequalities::coercivity_trials(&lat, p, cfg.trials, cfg.seed).map_err(failed)?];
    let mut oracles = Vec::new();
    for &q in &cfg.leibniz_p {
        oracles.push(inequalities::constant_oracle(q).map_err(failed)?);
        reports.extend(inequalities::leibniz_suite(q, cfg.pairs, cfg.seed).map_err(failed)?);
    }
    let osc = osc_trials(&lat, cfg.trials, cfg.seed, &cfg.solver).map_err(failed)?;
    let verdict = Verdict::from_pass(reports.iter().all(|r| r.passed) && osc.passed());
    let osc_rows = osc
        .tallies
        .iter()
        .map(|t| {
            vec![
                t.identity.clone(),
                t.trials.to_string(),
                t.violations.to_string(),
                t.degenerate.to_string(),
                t.max_ratio.to_string(),
            ]
        })
        .collect();
    let results = json!({
        "coercivity_constant": constant,
        "oracles": oracles,
        "inequalities": reports,
        "osc": osc,
    });
    Ok(Outcome {
        verdict: Some(verdict),
        results,
        artifacts: vec![
            table(
                "inequalities.csv",
                &["id", "trials", "degenerate", "max_ratio", "constant", "passed"],
                inequality_rows(&reports),
            )?,
            table("osc.csv", &["identity", "trials", "violations", "degenerate", "max_ratio"], osc_rows)?,
        ],
        ..Outcome::default()
    })
}

fn moments(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let e = cfg.direction();
    let mut failures = Vec::new();
    let mut per_p = Vec::new();
    let mut rows = Vec::new();
    let mut artifacts = Vec::new();
    let mut verdicts = Vec::new();
    for &p in &cfg.p {
        let mut reports = Vec::new();
        for &t in &cfg.t {
            let r = estimators::estimate_moment(&monte_carlo(cfg, cfg.side_for(t)), t, p, &e).map_err(failed)?;
            failures.extend(log_failures(format!("p={p} T={t}"), &r.failures));
            rows.push(vec![
                p.to_string(),
                t.to_string(),
                r.side.to_string(),
                r.samples.to_string(),
                r.estimate.to_string(),
                r.ci.lo.to_string(),
                r.ci.hi.to_string(),
            ]);
            reports.push(r);
        }
        let ratios = estimators::successive_ratios(&reports);
        let verdict = if reports.iter().all(|r| r.estimate == 0.0) {
            Verdict::Degenerate
        } else {
            match ratios.last() {
                None => Verdict::NoVerdict,
                Some(r) => Verdict::from_pass(r.ci.lo >= cfg.ratio_lo && r.ci.hi <= cfg.ratio_hi),
            }
        };
        verdicts.push(verdict);
        let points: Vec<(f64, f64)> = reports.iter().map(|r| (r.t, r.estimate)).collect();
        artifacts.push(dat(&format!("moments_p{p}.dat"), &points)?);
        per_p.push(json!({ "p": p, "reports": reports, "ratios": ratios, "verdict": verdict }));
    }
    artifacts.insert(0, table("moments.csv", &["p", "t", "side", "samples", "estimate", "ci_lo", "ci_hi"], rows)?);
    Ok(Outcome { verdict: Some(combine(verdicts)), failures, results: json!({ "moments": per_p }), artifacts })
}

fn sg_check(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let t = cfg.t[0];
    let r = estimators::spectral_gap_check(&monte_carlo(cfg, cfg.side_for(t)), t, &cfg.direction()).map_err(failed)?;
    Ok(Outcome {
        verdict: Some(r.check.verdict),
        failures: log_failures(format!("T={t}"), &r.failures),
        results: to_value(&r),
        artifacts: Vec::new(),
    })
}

fn caccioppoli(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let p = cfg.first_p() as u32;
    let r =
        estimators::caccioppoli_check(&monte_carlo(cfg, 0), &cfg.t, |t| cfg.side_for(t), p, &cfg.direction(), cfg.band)
            .map_err(failed)?;
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    for row in &r.rows {
        failures.extend(log_failures(format!("T={}", row.t), &row.failures));
        rows.push(vec![
            row.t.to_string(),
            row.side.to_string(),
            row.samples.to_string(),
            row.gradient_moment.to_string(),
            row.field_moment.to_string(),
            row.ratio.to_string(),
            row.ratio_ci.lo.to_string(),
            row.ratio_ci.hi.to_string(),
        ]);
    }
    let points: Vec<(f64, f64)> = r.rows.iter().map(|row| (row.t, row.ratio)).collect();
    Ok(Outcome {
        verdict: Some(r.verdict),
        failures,
        results: to_value(&r),
        artifacts: vec![
            table(
                "caccioppoli.csv",
                &["t", "side", "samples", "gradient_moment", "field_moment", "ratio", "ci_lo", "ci_hi"],
                rows,
            )?,
            dat("caccioppoli.dat", &points)?,
        ],
    })
}

fn green_decay(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let t = cfg.t[0];
    let side = cfg.side_for(t);
    let lat = lattice(cfg, t)?;
    let (source, fixed) = match cfg.ensemble {
        EnsembleSpec::Deterministic { value } => {
            (DecaySource::Fixed(ConductanceField::constant(&lat, value).map_err(failed)?), true)
        }
        _ => (DecaySource::Ensemble(monte_carlo(cfg, side)), false),
    };
    let r = estimators::green_decay_profile(&source, cfg.dim, side, t, cfg.first_p(), cfg.r0, cfg.k, &cfg.solver)
        .map_err(failed)?;
    let target = 1.0 - cfg.dim as f64;
    let verdict = if fixed {
        Verdict::from_pass((r.slope - target).abs() <= cfg.slope_tol)
    } else {
        Verdict::from_pass(r.slope <= cfg.slope_max)
    };
    let rows = (0..=r.k_max)
        .map(|k| {
            vec![
                k.to_string(),
                (r.r0 * 2f64.powi(k as i32)).to_string(),
                r.shell_means[k].to_string(),
                r.shell_constants[k].to_string(),
            ]
        })
        .collect();
    let points: Vec<(f64, f64)> = r.shell_means.iter().enumerate().map(|(k, m)| (k as f64, *m)).collect();
    Ok(Outcome {
        verdict: Some(verdict),
        failures: log_failures(format!("T={t}"), &r.failures),
        results: json!({ "profile": r, "reference_slope": target, "fixed_environment": fixed }),
        artifacts: vec![
            table("annuli.csv", &["k", "outer_radius", "shell_mean", "shell_constant"], rows)?,
            dat("decay.dat", &points)?,
        ],
    })
}

fn ahom(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let t = cfg.t[0];
    let r = estimators::estimate_ahom(&monte_carlo(cfg, cfg.side_for(t)), t, &cfg.direction()).map_err(failed)?;
    let check = CheckReport::new(
        "ahom-upper-bound",
        vec![IdentityCheck::at_most("phi-zero-competitor", r.ci.lo, r.upper_bound_ci.hi, 0.0)],
    );
    Ok(Outcome {
        verdict: Some(check.verdict),
        failures: log_failures(format!("T={t}"), &r.failures),
        results: json!({ "estimate": r, "check": check }),
        artifacts: Vec::new(),
    })
}

fn growth(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let t = cfg.t[0];
    let lat = lattice(cfg, t)?;
    let a = cfg.ensemble.sample(&lat, seed::derive_seed(cfg.seed, 0)).map_err(failed)?;
    let g = estimators::growth_profile(&lat, &a, t, &cfg.direction(), cfg.theta, &cfg.radii, &cfg.solver)
        .map_err(failed)?;
    let points: Vec<(f64, f64)> = g.radii.iter().zip(&g.values).map(|(r, v)| (*r as f64, *v)).collect();
    Ok(Outcome {
        verdict: Some(g.verdict),
        results: to_value(&g),
        artifacts: vec![dat("growth.dat", &points)?],
        ..Outcome::default()
    })
}

fn neighbor_dist(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let EnsembleSpec::ModifiedBernoulli { lambda, .. } = cfg.ensemble else {
        return Err(RunError::Usage("neighbor-dist runs on the modified Bernoulli ensemble".into()));
    };
    let side = cfg.side_for(cfg.t[0]);
    let r =
        estimators::neighbor_distance_moments(lambda, cfg.first_p(), cfg.axis, cfg.dim, side, cfg.samples, cfg.seed)
            .map_err(failed)?;
    Ok(Outcome { verdict: Some(r.check.verdict), results: to_value(&r), ..Outcome::default() })
}

fn gen(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let lat = lattice(cfg, cfg.t[0])?;
    let mut artifacts = Vec::new();
    let mut summary = Vec::new();
    for i in 0..cfg.samples {
        let a = cfg.ensemble.sample(&lat, seed::derive_seed(cfg.seed, i as u64)).map_err(failed)?;
        let mut bin = Vec::new();
        io::write_binary(&mut bin, a.shape(), a.values()).map_err(failed)?;
        let mut csv = Vec::new();
        io::write_bond_csv(&mut csv, &lat, a.as_bond_field()).map_err(failed)?;
        let (omega, omega0) = graph_metric::weight_map(&lat, &a);
        let mut weights = Vec::new();
        io::write_weight_csv(&mut weights, &omega, &omega0).map_err(failed)?;
        let closed = a.values().iter().filter(|&&v| v == 0.0).count();
        summary.push(json!({
            "sample": i,
            "mean_conductance": homlab_core::stats::mean(a.values()),
            "closed_fraction": closed as f64 / lat.bond_count() as f64,
            "infinite_omega0": omega0.iter().filter(|w| !w.is_finite()).count(),
        }));
        artifacts.push(Artifact { name: format!("a_{i}.bin"), bytes: bin });
        artifacts.push(Artifact { name: format!("a_{i}.csv"), bytes: csv });
        artifacts.push(Artifact { name: format!("weights_{i}.csv"), bytes: weights });
    }
    Ok(Outcome {
        verdict: Some(Verdict::Pass),
        results: json!({ "side": lat.side(), "samples": summary }),
        artifacts,
        ..Outcome::default()
    })
}
