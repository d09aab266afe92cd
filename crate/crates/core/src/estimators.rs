//! Monte Carlo estimators for the probabilistic statements: corrector
//! moments, the spectral gap inequality, the Caccioppoli estimate in
//! probability, Green's-gradient decay over dyadic annuli, the homogenized
//! coefficient, sublinear growth and neighbour-distance moments.
//!
//! Expectations of stationary fields are estimated by averaging over the
//! torus first and over samples second. Sample `i` of a run draws its
//! environment from `derive_seed(master_seed, i)`; per-sample results are
//! reduced in index order, so reports do not depend on the schedule.

use serde::{Deserialize, Serialize};

use crate::ensembles::{u_path_series, ConductanceField, EnsembleSpec};
use crate::error::{Error, Result};
use crate::graph_metric::{
    bond_distance, deleted_bond_path, dyadic_annuli, power_mean, weight_omega, BoxSpec, ExtReal,
};
use crate::inequalities::{coercivity_prob_constant, InequalityReport};
use crate::lattice::{Bond, DirectionVector, ScalarField, TorusLattice};
use crate::report::{CheckReport, IdentityCheck, Verdict};
use crate::sensitivity::conditional_deviation;
use crate::solver::{solve_green, solve_modified_corrector, SolverConfig};
use crate::stats::{self, Bootstrap, Interval};
use crate::{par, seed};

/// Common parameters of a Monte Carlo run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub spec: EnsembleSpec,
    pub dim: usize,
    pub side: usize,
    pub samples: usize,
    pub master_seed: u64,
    pub solver: SolverConfig,
}

/// A sample whose solve failed; it is left out of every estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub index: usize,
    pub message: String,
}

impl MonteCarlo {
    pub fn lattice(&self) -> Result<TorusLattice> {
        let lat = TorusLattice::new(self.dim, self.side)?;
        self.spec.validate(self.dim)?;
        self.solver.validate()?;
        Ok(lat)
    }

    pub fn sample_seed(&self, i: usize) -> u64 {
        seed::derive_seed(self.master_seed, i as u64)
    }

    pub fn environment(&self, lat: &TorusLattice, i: usize) -> Result<ConductanceField> {
        self.spec.sample(lat, self.sample_seed(i))
    }

    fn require_samples(&self, min: usize) -> Result<()> {
        if self.samples < min {
            return Err(Error::Precondition(format!("need at least {min} samples, got {}", self.samples)));
        }
        Ok(())
    }

    /// Runs `f` on every sample (in parallel when enabled) and splits the
    /// results into successes, in index order, and failures.
    pub fn map_samples<T, F>(&self, lat: &TorusLattice, f: F) -> (Vec<T>, Vec<SampleFailure>)
    where
        T: Send,
        F: Fn(&ConductanceField) -> Result<T> + Sync + Send,
    {
        let results = par::map_indexed(self.samples, |i| self.environment(lat, i).and_then(|a| f(&a)));
        let mut ok = Vec::with_capacity(self.samples);
        let mut failed = Vec::new();
        for (index, r) in results.into_iter().enumerate() {
            match r {
                Ok(v) => ok.push(v),
                Err(e) => failed.push(SampleFailure { index, message: e.to_string() }),
            }
        }
        (ok, failed)
    }
}

/// Default side length `max(16, 8 ceil(sqrt T))`, capped at 128, so that the
/// regularization length stays well inside the torus.
pub fn default_side(t: f64) -> usize {
    (8 * t.sqrt().ceil() as usize).clamp(16, 128)
}

/// Whether the regularization length `sqrt(T)` exceeds `L/4`, where torus
/// effects start to matter. Results are still reported, with this flag set.
pub fn finite_size(t: f64, side: usize) -> bool {
    t.sqrt() > side as f64 / 4.0
}

fn site_mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    stats::mean(&v)
}

// ---------------------------------------------------------------------------
// Moments

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub p: f64,
    pub t: f64,
    pub side: usize,
    /// `sqrt(T)` exceeds a quarter of the side length.
    pub finite_size: bool,
    pub samples: usize,
    pub failures: Vec<SampleFailure>,
    /// `<|phi_T|^p>^{1/p}`.
    pub estimate: f64,
    pub ci: Interval,
    pub seed: u64,
}

/// Per-sample torus averages of `|phi_T|^p`.
fn moment_samples(mc: &MonteCarlo, t: f64, p: f64, e: &DirectionVector) -> Result<(Vec<f64>, Vec<SampleFailure>)> {
    let lat = mc.lattice()?;
    Ok(mc.map_samples(&lat, |a| {
        let phi = solve_modified_corrector(&lat, a, t, e, &mc.solver)?.phi;
        Ok(site_mean(phi.values.iter().map(|v| v.abs().powf(p))))
    }))
}

fn check_moment_exponent(p: f64) -> Result<()> {
    if !(p >= 1.0) {
        return Err(Error::Precondition(format!("moment exponent must be >= 1, got {p}")));
    }
    Ok(())
}

/// Moment report from per-sample torus averages of `|phi_T|^p`.
pub fn moment_report(mc: &MonteCarlo, t: f64, p: f64, values: &[f64], failures: Vec<SampleFailure>) -> MomentReport {
    let estimate = stats::mean(values).powf(1.0 / p);
    let ci = Bootstrap::new(mc.master_seed)
        .interval(values.len(), |idx| {
            let picked: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
            stats::mean(&picked).powf(1.0 / p)
        })
        .including(estimate);
    MomentReport {
        p,
        t,
        side: mc.side,
        finite_size: finite_size(t, mc.side),
        samples: values.len(),
        failures,
        estimate,
        ci,
        seed: mc.master_seed,
    }
}

pub fn estimate_moment(mc: &MonteCarlo, t: f64, p: f64, e: &DirectionVector) -> Result<MomentReport> {
    check_moment_exponent(p)?;
    mc.require_samples(2)?;
    let (values, failures) = moment_samples(mc, t, p, e)?;
    Ok(moment_report(mc, t, p, &values, failures))
}

/// Ratio of successive moment estimates with the interval obtained from
/// the two bootstrap intervals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRatio {
    pub t_from: f64,
    pub t_to: f64,
    pub ratio: f64,
    pub ci: Interval,
}

pub fn successive_ratios(reports: &[MomentReport]) -> Vec<MomentRatio> {
    reports
        .windows(2)
        .map(|w| {
            let (a, b) = (&w[0], &w[1]);
            MomentRatio {
                t_from: a.t,
                t_to: b.t,
                ratio: b.estimate / a.estimate,
                ci: Interval { lo: b.ci.lo / a.ci.hi, hi: b.ci.hi / a.ci.lo },
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Spectral gap

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralGapReport {
    pub t: f64,
    pub side: usize,
    /// `sqrt(T)` exceeds a quarter of the side length.
    pub finite_size: bool,
    pub samples: usize,
    pub failures: Vec<SampleFailure>,
    /// `Var(phi_T(0))`.
    pub variance: f64,
    pub variance_ci: Interval,
    /// `sum_b <(d phi_T(0) / d b)^2>`.
    pub vertical_energy: f64,
    pub vertical_energy_ci: Interval,
    /// Interval for the mean of `variance - rho * vertical_energy` over samples.
    pub difference_ci: Interval,
    pub rho: f64,
    pub check: CheckReport,
}

/// `Var(phi_T(0)) <= rho sum_b <(d phi_T(0)/d b)^2>`, with all vertical
/// derivatives computed exactly for discrete single-bond laws. Both sides
/// are averaged over the torus; the spatial mean of `phi_T` vanishes, so
/// `<phi_T^2>` is the variance.
pub fn spectral_gap_check(mc: &MonteCarlo, t: f64, e: &DirectionVector) -> Result<SpectralGapReport> {
    if !mc.spec.is_product() {
        return Err(Error::Precondition("spectral gap check needs a product ensemble".into()));
    }
    mc.require_samples(2)?;
    let lat = mc.lattice()?;
    let (pairs, failures) = mc.map_samples(&lat, |a| {
        let phi = solve_modified_corrector(&lat, a, t, e, &mc.solver)?.phi;
        let v = site_mean(phi.values.iter().map(|x| x * x));
        let mut energy = vec![0.0; lat.site_count()];
        for b in lat.bonds() {
            let law = mc.spec.single_bond_law(b);
            if let crate::ensembles::SingleBondLaw::PointMass(c) = law {
                if c == a.get(b) {
                    continue;
                }
            }
            let dev = conditional_deviation(&lat, &law, a, t, e, b, &phi, &mc.solver)?;
            energy.iter_mut().zip(&dev.values).for_each(|(s, d)| *s += d * d);
        }
        Ok((v, stats::mean(&energy)))
    });
    let rho = mc.spec.rho();
    let v: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let s: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let diff: Vec<f64> = pairs.iter().map(|p| p.0 - rho * p.1).collect();
    let boot = Bootstrap::new(mc.master_seed);
    let variance = stats::mean(&v);
    let vertical_energy = stats::mean(&s);
    let difference_ci = boot.mean_interval(&diff);
    let mut check = IdentityCheck::at_most("spectral-gap", variance, rho * vertical_energy, 0.0);
    if check.verdict == Verdict::Violated && difference_ci.lo <= 0.0 {
        // not resolved by the sample: the joint interval still contains 0
        check.verdict = Verdict::Pass;
    }
    let report = CheckReport::new("spectral-gap", vec![check]);
    Ok(SpectralGapReport {
        t,
        side: mc.side,
        finite_size: finite_size(t, mc.side),
        samples: v.len(),
        failures,
        variance,
        variance_ci: boot.mean_interval(&v).including(variance),
        vertical_energy,
        vertical_energy_ci: boot.mean_interval(&s).including(vertical_energy),
        difference_ci,
        rho,
        check: report,
    })
}

// ---------------------------------------------------------------------------
// Caccioppoli in probability

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaccioppoliRow {
    pub t: f64,
    pub side: usize,
    /// `sqrt(T)` exceeds a quarter of the side length.
    pub finite_size: bool,
    pub samples: usize,
    pub failures: Vec<SampleFailure>,
    /// `max_i <|grad phi_T(b_i)|^{2p+1}>^{1/(2p+1)}` over the bonds `b_i = {0, e_i}`.
    pub gradient_moment: f64,
    /// `<phi_T^{2p}>^{(1/2p) p/(p+1)}`.
    pub field_moment: f64,
    pub ratio: f64,
    pub ratio_ci: Interval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaccioppoliReport {
    pub p: u32,
    pub rows: Vec<CaccioppoliRow>,
    /// Largest over smallest ratio across the `T` grid.
    pub spread: f64,
    pub band: f64,
    pub verdict: Verdict,
}

/// Torus averages of one corrector sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectorStats {
    /// `phi_T^2`.
    pub second: f64,
    /// `phi_T^{2p}`.
    pub field: f64,
    /// `|grad phi_T|^{2p+1}`, one entry per axis.
    pub gradient: Vec<f64>,
}

/// Solves for `phi_T` once per sample and records the averages needed by
/// both the moment estimates and the Caccioppoli check.
pub fn corrector_stats(
    mc: &MonteCarlo,
    t: f64,
    p: u32,
    e: &DirectionVector,
) -> Result<(Vec<CorrectorStats>, Vec<SampleFailure>)> {
    let lat = mc.lattice()?;
    let d = lat.dim();
    let q = (2 * p + 1) as f64;
    Ok(mc.map_samples(&lat, |a| {
        let phi = solve_modified_corrector(&lat, a, t, e, &mc.solver)?.phi;
        let grad = lat.gradient(&phi)?;
        let mut per_axis = vec![Vec::with_capacity(lat.site_count()); d];
        for (i, g) in grad.values.iter().enumerate() {
            per_axis[i % d].push(g.abs().powf(q));
        }
        Ok(CorrectorStats {
            second: site_mean(phi.values.iter().map(|x| x * x)),
            field: site_mean(phi.values.iter().map(|x| x.powi(2 * p as i32))),
            gradient: per_axis.iter().map(|v| stats::mean(v)).collect(),
        })
    }))
}

/// One row of the Caccioppoli check from per-sample statistics.
pub fn caccioppoli_row(
    mc: &MonteCarlo,
    t: f64,
    p: u32,
    rows: &[CorrectorStats],
    failures: Vec<SampleFailure>,
) -> CaccioppoliRow {
    let pf = p as f64;
    let q = 2.0 * pf + 1.0;
    let d = rows.first().map_or(0, |r| r.gradient.len());
    let moments = |idx: &[usize]| -> (f64, f64) {
        let grad = (0..d)
            .map(|axis| {
                let v: Vec<f64> = idx.iter().map(|&i| rows[i].gradient[axis]).collect();
                stats::mean(&v).powf(1.0 / q)
            })
            .fold(0.0, f64::max);
        let f: Vec<f64> = idx.iter().map(|&i| rows[i].field).collect();
        (grad, stats::mean(&f).powf(1.0 / (2.0 * pf) * pf / (pf + 1.0)))
    };
    let all: Vec<usize> = (0..rows.len()).collect();
    let (gradient_moment, field_moment) = moments(&all);
    let ratio = if field_moment == 0.0 && gradient_moment == 0.0 { f64::NAN } else { gradient_moment / field_moment };
    let ratio_ci = if ratio.is_nan() {
        Interval { lo: f64::NAN, hi: f64::NAN }
    } else {
        Bootstrap::new(mc.master_seed)
            .interval(rows.len(), |idx| {
                let (g, f) = moments(idx);
                g / f
            })
            .including(ratio)
    };
    CaccioppoliRow {
        t,
        side: mc.side,
        finite_size: finite_size(t, mc.side),
        samples: rows.len(),
        failures,
        gradient_moment,
        field_moment,
        ratio,
        ratio_ci,
    }
}

/// Caccioppoli verdict over rows computed at different `T`.
pub fn caccioppoli_summary(p: u32, rows: Vec<CaccioppoliRow>, band: f64) -> CaccioppoliReport {
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let (spread, verdict) = if ratios.iter().all(|r| r.is_nan()) {
        (f64::NAN, Verdict::Degenerate)
    } else {
        let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let spread = hi / lo;
        (spread, Verdict::from_pass(spread <= band && ratios.iter().all(|r| r.is_finite())))
    };
    CaccioppoliReport { p, rows, spread, band, verdict }
}

fn check_caccioppoli_exponent(p: u32) -> Result<()> {
    if p == 0 || !p.is_multiple_of(2) {
        return Err(Error::Precondition(format!("Caccioppoli exponent must be an even integer >= 2, got {p}")));
    }
    Ok(())
}

/// Caccioppoli ratios across a `T` grid, each on a lattice of side
/// `side_for(T)`; passes when the ratios stay within a factor `band`.
pub fn caccioppoli_check(
    mc: &MonteCarlo,
    t_grid: &[f64],
    side_for: impl Fn(f64) -> usize,
    p: u32,
    e: &DirectionVector,
    band: f64,
) -> Result<CaccioppoliReport> {
    check_caccioppoli_exponent(p)?;
    mc.require_samples(2)?;
    let mut rows = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let at = MonteCarlo { side: side_for(t), ..mc.clone() };
        let (stats, failures) = corrector_stats(&at, t, p, e)?;
        rows.push(caccioppoli_row(&at, t, p, &stats, failures));
    }
    Ok(caccioppoli_summary(p, rows, band))
}

/// Moment and Caccioppoli rows along a `T` grid from shared solves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TSweep {
    pub moments: Vec<MomentReport>,
    pub ratios: Vec<MomentRatio>,
    pub caccioppoli: CaccioppoliReport,
}

pub fn t_sweep(
    mc: &MonteCarlo,
    t_grid: &[f64],
    side_for: impl Fn(f64) -> usize,
    p: u32,
    e: &DirectionVector,
    band: f64,
) -> Result<TSweep> {
    check_caccioppoli_exponent(p)?;
    mc.require_samples(2)?;
    let mut moments = Vec::with_capacity(t_grid.len());
    let mut rows = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let at = MonteCarlo { side: side_for(t), ..mc.clone() };
        let (stats, failures) = corrector_stats(&at, t, p, e)?;
        let second: Vec<f64> = stats.iter().map(|s| s.second).collect();
        moments.push(moment_report(&at, t, 2.0, &second, failures.clone()));
        rows.push(caccioppoli_row(&at, t, p, &stats, failures));
    }
    let ratios = successive_ratios(&moments);
    Ok(TSweep { moments, ratios, caccioppoli: caccioppoli_summary(p, rows, band) })
}

// ---------------------------------------------------------------------------
// Green's-gradient decay

/// Environment for a decay profile.
#[derive(Clone, Debug)]
pub enum DecaySource {
    Fixed(ConductanceField),
    Ensemble(MonteCarlo),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnuliReport {
    pub p: f64,
    pub r0: f64,
    pub k_max: usize,
    pub t: f64,
    pub side: usize,
    /// `sqrt(T)` exceeds a quarter of the side length.
    pub finite_size: bool,
    pub samples: usize,
    pub failures: Vec<SampleFailure>,
    /// `(|A_k|^{-1} sum_{A_k} |grad G_T(., 0)|^p)^{1/p}`, sample-averaged
    /// inside the power.
    pub shell_means: Vec<f64>,
    /// Least-squares slope of `log2 m_k` against `k` over `k >= 1`.
    pub slope: f64,
    pub p_star: f64,
    pub beta: f64,
    /// `p / (2 - p)`, the averaging exponent of the weight.
    pub q: f64,
    /// Per shell `C(a, Q_{2^{k+1} R0}(0), q)^{beta/2}`, averaged over samples;
    /// infinite when a weight is.
    pub shell_constants: Vec<f64>,
}

/// Validates the decay preconditions without solving anything.
pub fn check_decay_parameters(dim: usize, side: usize, t: f64, p: f64, r0: f64, k_max: usize) -> Result<()> {
    let d = dim as f64;
    let lo = 2.0 * d / (d + 2.0);
    if !(p > lo && p < 2.0) {
        return Err(Error::Precondition(format!("decay exponent p must lie in ({lo}, 2) for d = {dim}, got {p}")));
    }
    if !(r0 > 1.0) {
        return Err(Error::Precondition(format!("R0 must be > 1, got {r0}")));
    }
    let outer = 2f64.powi(k_max as i32 + 1) * r0;
    if outer > side as f64 / 2.0 {
        return Err(Error::Precondition(format!("2^(K+1) R0 = {outer} exceeds L/2 = {}", side as f64 / 2.0)));
    }
    let reach = 2f64.powi(k_max as i32) * r0;
    if t < reach * reach {
        return Err(Error::Precondition(format!(
            "T = {t} truncates the decay range; need T >= (2^K R0)^2 = {}",
            reach * reach
        )));
    }
    Ok(())
}

pub fn green_decay_profile(
    source: &DecaySource,
    dim: usize,
    side: usize,
    t: f64,
    p: f64,
    r0: f64,
    k_max: usize,
    solver: &SolverConfig,
) -> Result<AnnuliReport> {
    check_decay_parameters(dim, side, t, p, r0, k_max)?;
    let lat = TorusLattice::new(dim, side)?;
    let annuli = dyadic_annuli(&lat, r0, k_max)?;
    let d = dim as f64;
    let p_star = d * p / (d - p);
    let beta = 2.0 * (p_star - 1.0) / (p_star - 2.0) + p_star;
    let q = p / (2.0 - p);
    let origin = lat.origin();
    let boxes: Vec<Vec<Bond>> =
        (0..=k_max).map(|k| BoxSpec { center: origin, radius: annuli.outer_radius(k + 1) }.bonds(&lat)).collect();

    let per_sample = |a: &ConductanceField| -> Result<(Vec<f64>, Vec<f64>)> {
        let g = solve_green(&lat, a, t, origin, solver)?.g;
        let sums = annuli
            .shells
            .iter()
            .map(|shell| site_mean(shell.iter().map(|&b| green_gradient(&lat, &g, b).abs().powf(p))))
            .collect();
        // omega on the largest cube, reused for the nested ones
        let mut omega = vec![ExtReal::ZERO; lat.bond_count()];
        for &b in boxes.last().unwrap() {
            omega[lat.bond_index(b)] = weight_omega(&lat, a, b);
        }
        let constants = boxes
            .iter()
            .map(|bonds| {
                let c = power_mean(bonds.iter().map(|&b| omega[lat.bond_index(b)]), q);
                if c.is_finite() {
                    c.value().powf(beta / 2.0)
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        Ok((sums, constants))
    };

    let (rows, failures, samples) = match source {
        DecaySource::Fixed(a) => {
            lat.check_shape(a.shape())?;
            (vec![per_sample(a)?], Vec::new(), 1)
        }
        DecaySource::Ensemble(mc) => {
            if mc.dim != dim || mc.side != side {
                return Err(Error::Precondition("ensemble lattice differs from the decay lattice".into()));
            }
            mc.lattice()?;
            let (rows, failures) = mc.map_samples(&lat, per_sample);
            let n = rows.len();
            (rows, failures, n)
        }
    };
    if rows.is_empty() {
        return Err(Error::Precondition("every sample failed".into()));
    }
    let shell_means: Vec<f64> = (0..=k_max)
        .map(|k| {
            let v: Vec<f64> = rows.iter().map(|r| r.0[k]).collect();
            stats::mean(&v).powf(1.0 / p)
        })
        .collect();
    let shell_constants = (0..=k_max)
        .map(|k| {
            let v: Vec<f64> = rows.iter().map(|r| r.1[k]).collect();
            stats::mean(&v)
        })
        .collect();
    let ks: Vec<f64> = (1..=k_max).map(|k| k as f64).collect();
    let logs: Vec<f64> = shell_means[1..].iter().map(|m| m.log2()).collect();
    let slope = if ks.len() >= 2 { stats::slope(&ks, &logs) } else { f64::NAN };
    Ok(AnnuliReport {
        p,
        r0,
        k_max,
        t,
        side,
        finite_size: finite_size(t, side),
        samples,
        failures,
        shell_means,
        slope,
        p_star,
        beta,
        q,
        shell_constants,
    })
}

fn green_gradient(lat: &TorusLattice, g: &ScalarField, b: Bond) -> f64 {
    let (x, y) = lat.endpoints(b);
    g[y] - g[x]
}

// ---------------------------------------------------------------------------
// Homogenized coefficient

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogReport {
    pub e: Vec<f64>,
    pub t: f64,
    pub side: usize,
    /// `sqrt(T)` exceeds a quarter of the side length.
    pub finite_size: bool,
    pub samples: usize,
    pub failures: Vec<SampleFailure>,
    /// `<(e + grad phi_T) . a (e + grad phi_T)>`.
    pub estimate: f64,
    pub ci: Interval,
    /// `<e . a e>`, the energy of the competitor `phi = 0`.
    pub upper_bound: f64,
    pub upper_bound_ci: Interval,
}

pub fn estimate_ahom(mc: &MonteCarlo, t: f64, e: &DirectionVector) -> Result<HomogReport> {
    mc.require_samples(1)?;
    let lat = mc.lattice()?;
    let d = lat.dim();
    let (pairs, failures) = mc.map_samples(&lat, |a| {
        let phi = solve_modified_corrector(&lat, a, t, e, &mc.solver)?.phi;
        let grad = lat.gradient(&phi)?;
        let mut energy = vec![0.0; lat.site_count()];
        let mut plain = vec![0.0; lat.site_count()];
        for (i, (g, ab)) in grad.values.iter().zip(a.values()).enumerate() {
            let ei = e.component(i % d);
            energy[i / d] += ab * (ei + g) * (ei + g);
            plain[i / d] += ab * ei * ei;
        }
        Ok((stats::mean(&energy), stats::mean(&plain)))
    });
    let est: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ub: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let boot = Bootstrap::new(mc.master_seed);
    let estimate = stats::mean(&est);
    let upper_bound = stats::mean(&ub);
    Ok(HomogReport {
        e: e.components().to_vec(),
        t,
        side: mc.side,
        finite_size: finite_size(t, mc.side),
        samples: est.len(),
        failures,
        estimate,
        ci: boot.mean_interval(&est).including(estimate),
        upper_bound,
        upper_bound_ci: boot.mean_interval(&ub).including(upper_bound),
    })
}

// ---------------------------------------------------------------------------
// Sublinear growth

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthProfile {
    pub theta: f64,
    pub t: f64,
    pub finite_size: bool,
    pub radii: Vec<usize>,
    /// `max_{B_R(0)} |chi| / R^{1-theta}` with `chi = phi_T - phi_T(0)`.
    pub values: Vec<f64>,
    pub verdict: Verdict,
}

/// Profiles at `theta` at or above this are recorded without a verdict.
pub const GROWTH_NO_VERDICT_THETA: f64 = 0.9;

pub fn growth_profile(
    lat: &TorusLattice,
    a: &ConductanceField,
    t: f64,
    e: &DirectionVector,
    theta: f64,
    radii: &[usize],
    cfg: &SolverConfig,
) -> Result<GrowthProfile> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Precondition(format!("theta must lie in (0, 1), got {theta}")));
    }
    if radii.is_empty() || radii.iter().any(|&r| r == 0 || 2 * r > lat.side()) {
        return Err(Error::Precondition(format!("radii must be in [1, L/2 = {}]", lat.side() / 2)));
    }
    let phi = solve_modified_corrector(lat, a, t, e, cfg)?.phi;
    let anchor = phi[lat.origin()];
    // running maximum of |chi| by sup-norm shell
    let rmax = *radii.iter().max().unwrap();
    let mut shell_max = vec![0.0f64; rmax + 1];
    for x in 0..lat.site_count() {
        let n = lat.linf_norm(x);
        if n <= rmax {
            shell_max[n] = shell_max[n].max((phi[x] - anchor).abs());
        }
    }
    for r in 1..=rmax {
        shell_max[r] = shell_max[r].max(shell_max[r - 1]);
    }
    let values: Vec<f64> = radii.iter().map(|&r| shell_max[r] / (r as f64).powf(1.0 - theta)).collect();
    let verdict = if theta >= GROWTH_NO_VERDICT_THETA {
        Verdict::NoVerdict
    } else if values.iter().all(|&v| v == 0.0) {
        Verdict::Degenerate
    } else {
        // non-increasing over the largest decade of the grid
        let top = rmax as f64 / 10.0;
        let tail: Vec<f64> = radii.iter().zip(&values).filter(|(r, _)| **r as f64 >= top).map(|(_, v)| *v).collect();
        Verdict::from_pass(tail.windows(2).all(|w| w[1] <= w[0]))
    };
    Ok(GrowthProfile { theta, t, finite_size: finite_size(t, lat.side()), radii: radii.to_vec(), values, verdict })
}

// ---------------------------------------------------------------------------
// Neighbour distance after deleting a bond

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborDistanceReport {
    pub lambda: f64,
    pub p: f64,
    pub axis: usize,
    pub side: usize,
    pub trials: usize,
    /// Samples whose minimizing path wraps around the torus; excluded.
    pub wrapped: usize,
    /// Samples where the endpoints are disconnected after deletion.
    pub disconnected: usize,
    /// `<dist_{a^{b,0}}(0, e_axis)^p>`.
    pub estimate: f64,
    pub ci: Interval,
    pub max_distance: f64,
    /// 95% quantile of the distance; the torus must be at least four times wider.
    pub quantile_95: f64,
    /// `sum_{k>=1} (2k+1)^p (1-lambda)^{2(k-1)}`.
    pub bound: f64,
    pub check: CheckReport,
}

pub fn neighbor_distance_moments(
    lambda: f64,
    p: f64,
    axis: usize,
    dim: usize,
    side: usize,
    n: usize,
    master_seed: u64,
) -> Result<NeighborDistanceReport> {
    let spec = EnsembleSpec::modified_bernoulli(lambda);
    spec.validate(dim)?;
    if axis == 0 || axis >= dim {
        return Err(Error::Precondition(format!("axis must differ from the open axis 0 and be < {dim}")));
    }
    if !(p >= 1.0) {
        return Err(Error::Precondition(format!("p must be >= 1, got {p}")));
    }
    let mc = MonteCarlo { spec, dim, side, samples: n, master_seed, solver: SolverConfig::default() };
    let lat = mc.lattice()?;
    let b = Bond { site: lat.origin(), axis };
    let (paths, _) = mc.map_samples(&lat, |a| Ok(deleted_bond_path(&lat, a, b)));
    let mut values = Vec::with_capacity(paths.len());
    let (mut wrapped, mut disconnected) = (0, 0);
    for path in &paths {
        match path {
            None => disconnected += 1,
            Some(info) if info.wraps => wrapped += 1,
            Some(info) => values.push(info.distance.value()),
        }
    }
    let moments: Vec<f64> = values.iter().map(|v| v.powf(p)).collect();
    let estimate = stats::mean(&moments);
    let ci = Bootstrap::new(master_seed).mean_interval(&moments).including(estimate);
    let bound = u_path_series(lambda, p);
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let quantile_95 = stats::quantile_sorted(&sorted, 0.95);
    let mut checks = vec![
        IdentityCheck::at_most("u-path-bound", estimate, bound, 0.0),
        IdentityCheck::at_most("torus-size", 4.0 * quantile_95, side as f64, 0.0),
    ];
    if disconnected > 0 {
        checks.push(IdentityCheck::absolute("connected", disconnected as f64, 0.0, 0.0));
    }
    Ok(NeighborDistanceReport {
        lambda,
        p,
        axis,
        side,
        trials: n,
        wrapped,
        disconnected,
        estimate,
        ci,
        max_distance: values.iter().cloned().fold(0.0, f64::max),
        quantile_95,
        bound,
        check: CheckReport::new("neighbor-distance", checks),
    })
}

// ---------------------------------------------------------------------------
// Averaged coercivity

/// `max_j <|grad u(b_j)|^2 dist^{-p}(x_{b_j}, y_{b_j})>` against
/// `C sum_i <a(b_i) |grad u(b_i)|^2>` for `u = phi_T`, with `b_i = {0, e_i}`
/// and expectations realized by torus and sample averages.
pub fn coercivity_prob_check(mc: &MonteCarlo, t: f64, e: &DirectionVector, p: f64) -> Result<InequalityReport> {
    let lat = mc.lattice()?;
    let c = coercivity_prob_constant(p, lat.dim())?;
    let d = lat.dim();
    let (rows, _failures) = mc.map_samples(&lat, |a| {
        let phi = solve_modified_corrector(&lat, a, t, e, &mc.solver)?.phi;
        let grad = lat.gradient(&phi)?;
        let mut lhs = vec![Vec::with_capacity(lat.site_count()); d];
        let mut rhs = vec![Vec::with_capacity(lat.site_count()); d];
        for (i, g) in grad.values.iter().enumerate() {
            let b = lat.bond_at(i);
            lhs[i % d].push(g * g * bond_distance(&lat, a, b, false).inv_pow(p));
            rhs[i % d].push(a.values()[i] * g * g);
        }
        let lhs: Vec<f64> = lhs.iter().map(|v| stats::mean(v)).collect();
        let rhs: Vec<f64> = rhs.iter().map(|v| stats::mean(v)).collect();
        Ok((lhs, rhs))
    });
    let lhs = (0..d).map(|j| stats::mean(&rows.iter().map(|r| r.0[j]).collect::<Vec<_>>())).fold(0.0, f64::max);
    let rhs: f64 = (0..d).map(|i| stats::mean(&rows.iter().map(|r| r.1[i]).collect::<Vec<_>>())).sum();
    let mut report = InequalityReport::from_pairs("coercivity-prob", c.value, [(lhs, rhs)]);
    report.trials = rows.len();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mc(spec: EnsembleSpec, side: usize, samples: usize) -> MonteCarlo {
        MonteCarlo { spec, dim: 3, side, samples, master_seed: 7, solver: SolverConfig::default() }
    }

    fn e2() -> DirectionVector {
        DirectionVector::axis(3, 1).unwrap()
    }

    #[test]
    fn moments_vanish_for_constant_fields() {
        for spec in [EnsembleSpec::modified_bernoulli(1.0), EnsembleSpec::Deterministic { value: 0.3 }] {
            let r = estimate_moment(&mc(spec, 8, 3), 16.0, 2.0, &e2()).unwrap();
            assert_eq!(r.estimate, 0.0);
            assert!(r.failures.is_empty());
        }
    }

    #[test]
    fn moment_report_is_reproducible() {
        let m = mc(EnsembleSpec::modified_bernoulli(0.7), 6, 4);
        let a = estimate_moment(&m, 4.0, 2.0, &e2()).unwrap();
        let b = estimate_moment(&m, 4.0, 2.0, &e2()).unwrap();
        assert_eq!(a, b);
        assert!(a.estimate > 0.0 && a.ci.contains(a.estimate));
    }

    #[test]
    fn spectral_gap_trivial_and_small() {
        let r = spectral_gap_check(&mc(EnsembleSpec::Deterministic { value: 0.5 }, 4, 3), 4.0, &e2()).unwrap();
        assert_eq!((r.variance, r.vertical_energy), (0.0, 0.0));
        assert_eq!(r.check.verdict, Verdict::Degenerate);
        let r = spectral_gap_check(&mc(EnsembleSpec::modified_bernoulli(0.7), 4, 10), 4.0, &e2()).unwrap();
        assert!(r.variance > 0.0 && r.check.passed(), "{r:?}");
    }

    #[test]
    fn caccioppoli_degenerate_at_full_percolation() {
        let r = caccioppoli_check(&mc(EnsembleSpec::modified_bernoulli(1.0), 8, 2), &[4.0, 16.0], |_| 8, 2, &e2(), 2.0)
            .unwrap();
        assert_eq!(r.verdict, Verdict::Degenerate);
        assert!(
            caccioppoli_check(&mc(EnsembleSpec::modified_bernoulli(1.0), 8, 2), &[4.0], |_| 8, 3, &e2(), 2.0).is_err()
        );
    }

    #[test]
    fn decay_parameter_checks() {
        assert!(check_decay_parameters(3, 64, 256.0, 1.5, 2.0, 3).is_ok());
        assert!(check_decay_parameters(3, 64, 256.0, 2.5, 2.0, 3).is_err());
        assert!(check_decay_parameters(3, 64, 256.0, 1.1, 2.0, 3).is_err());
        assert!(check_decay_parameters(3, 32, 256.0, 1.5, 2.0, 3).is_err());
        assert!(check_decay_parameters(3, 64, 100.0, 1.5, 2.0, 3).is_err());
    }

    #[test]
    fn ahom_constant_and_upper_bound() {
        let lat = TorusLattice::new(3, 8).unwrap();
        let e = DirectionVector::normalized(vec![1.0, 2.0, -0.5]).unwrap();
        let r = estimate_ahom(&mc(EnsembleSpec::Deterministic { value: 1.0 }, 8, 2), 16.0, &e).unwrap();
        assert!((r.estimate - 1.0).abs() < 1e-9);
        let r = estimate_ahom(&mc(EnsembleSpec::modified_bernoulli(0.6), 8, 3), 16.0, &e2()).unwrap();
        assert!(r.estimate <= r.upper_bound + 1e-12, "{r:?}");
        drop(lat);
    }

    #[test]
    fn growth_profile_cases() {
        let lat = TorusLattice::new(3, 16).unwrap();
        let ones = ConductanceField::constant(&lat, 1.0).unwrap();
        let g = growth_profile(&lat, &ones, 64.0, &e2(), 0.5, &[1, 2, 4, 8], &SolverConfig::default()).unwrap();
        assert!(g.values.iter().all(|&v| v == 0.0));
        assert_eq!(g.verdict, Verdict::Degenerate);
        let a = EnsembleSpec::modified_bernoulli(0.7).sample(&lat, 1).unwrap();
        let g = growth_profile(&lat, &a, 64.0, &e2(), 0.95, &[1, 2, 4, 8], &SolverConfig::default()).unwrap();
        assert_eq!(g.verdict, Verdict::NoVerdict);
        assert!(growth_profile(&lat, &a, 64.0, &e2(), 0.5, &[9], &SolverConfig::default()).is_err());
    }

    #[test]
    fn neighbor_distance_full_percolation() {
        let r = neighbor_distance_moments(1.0, 2.0, 1, 3, 12, 5, 1).unwrap();
        assert_eq!(r.estimate, 9.0);
        assert_eq!(r.max_distance, 3.0);
        assert!(r.check.passed());
    }

    #[test]
    fn coercivity_prob_small() {
        let r = coercivity_prob_check(&mc(EnsembleSpec::modified_bernoulli(0.7), 6, 3), 8.0, &e2(), 5.0).unwrap();
        assert!(r.passed, "{r:?}");
        let r = coercivity_prob_check(&mc(EnsembleSpec::modified_bernoulli(1.0), 6, 2), 8.0, &e2(), 5.0).unwrap();
        assert_eq!(r.degenerate, 1);
    }
}
