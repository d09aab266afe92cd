//! Classical and vertical derivatives of `phi_T(0)` with respect to one bond,
//! and numerical checks of the single-bond derivative identities and the
//! oscillation and weight bounds built on them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensembles::{ConductanceField, EnsembleSpec, SingleBondLaw};
use crate::error::{Error, Result};
use crate::graph_metric::weight_omega0;
use crate::lattice::{Bond, DirectionVector, ScalarField, TorusLattice};
use crate::report::{CheckReport, IdentityCheck, Verdict};
use crate::solver::{solve_modified_corrector, GreenCache, SolverConfig};

/// Tolerance for the finite-difference identity checks.
pub const ODE_TOLERANCE: f64 = 1e-5;

/// Denominator floor for relative errors of quantities that may vanish.
const RELATIVE_FLOOR: f64 = 1e-8;

/// Single-bond quantities of one environment that the identities relate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BondProbe {
    /// `phi_T(0)`.
    pub phi0: f64,
    /// `grad phi_T(b) + e(b)`.
    pub flux: f64,
    /// `grad G_T(b, 0)`.
    pub grad_g_origin: f64,
    /// `grad G_T(b, x_b)`.
    pub grad_g_tail: f64,
    /// `G_T(0, x_b)`.
    pub green_origin_tail: f64,
    /// `grad grad G_T(b, b)`.
    pub g: f64,
}

impl BondProbe {
    /// `-grad G_T(b, 0) (grad phi_T(b) + e(b))`.
    pub fn classical(&self) -> f64 {
        -self.grad_g_origin * self.flux
    }

    /// `1 + a(b) / (1 - a(b) g)`.
    pub fn factor(&self, ab: f64) -> f64 {
        1.0 + ab / (1.0 - ab * self.g)
    }
}

pub fn probe(
    lat: &TorusLattice,
    a: &ConductanceField,
    t: f64,
    e: &DirectionVector,
    b: Bond,
    cfg: &SolverConfig,
) -> Result<BondProbe> {
    let corr = solve_modified_corrector(lat, a, t, e, cfg)?;
    let (xb, yb) = lat.endpoints(b);
    let phi = &corr.phi;
    let mut cache = GreenCache::new(lat, a, t, *cfg)?;
    let origin = lat.origin();
    Ok(BondProbe {
        phi0: phi[origin],
        flux: phi[yb] - phi[xb] + e.component(b.axis),
        grad_g_origin: cache.gradient_at(b, origin)?,
        grad_g_tail: cache.gradient_at(b, xb)?,
        green_origin_tail: cache.column(xb)?.g[origin],
        g: cache.second_gradient(b, b)?,
    })
}

/// `d phi_T(0) / d a(b)` from one corrector solve and one Green column.
pub fn classical_derivative(
    lat: &TorusLattice,
    a: &ConductanceField,
    t: f64,
    e: &DirectionVector,
    b: Bond,
    cfg: &SolverConfig,
) -> Result<f64> {
    let corr = solve_modified_corrector(lat, a, t, e, cfg)?;
    let (xb, yb) = lat.endpoints(b);
    let flux = corr.phi[yb] - corr.phi[xb] + e.component(b.axis);
    let mut cache = GreenCache::new(lat, a, t, *cfg)?;
    Ok(-cache.gradient_at(b, lat.origin())? * flux)
}

/// `phi_T(a, .) - E_b[phi_T(a^{b,s}, .)]` at every site, with `s` drawn from
/// the single-bond law of `spec` at `b`.
pub fn vertical_derivative_field(
    lat: &TorusLattice,
    spec: &EnsembleSpec,
    a: &ConductanceField,
    t: f64,
    e: &DirectionVector,
    b: Bond,
    cfg: &SolverConfig,
) -> Result<ScalarField> {
    let law = spec.single_bond_law(b);
    let ab = a.get(b);
    if let SingleBondLaw::PointMass(c) = law {
        if c == ab {
            return Ok(lat.zeros());
        }
    }
    let phi = solve_modified_corrector(lat, a, t, e, cfg)?.phi;
    conditional_deviation(lat, &law, a, t, e, b, &phi, cfg)
}

/// `phi - E_b[phi(a^{b,s})]` given the already solved `phi = phi_T(a)`.
pub(crate) fn conditional_deviation(
    lat: &TorusLattice,
    law: &SingleBondLaw,
    a: &ConductanceField,
    t: f64,
    e: &DirectionVector,
    b: Bond,
    phi: &ScalarField,
    cfg: &SolverConfig,
) -> Result<ScalarField> {
    let ab = a.get(b);
    let mut scratch = a.clone();
    let mut acc = vec![0.0; lat.site_count()];
    for (s, w) in law.nodes() {
        if s == ab {
            acc.iter_mut().zip(&phi.values).for_each(|(acc, p)| *acc += w * p);
            continue;
        }
        scratch.replace_bond(b, s)?;
        let sol = solve_modified_corrector(lat, &scratch, t, e, cfg)?;
        acc.iter_mut().zip(&sol.phi.values).for_each(|(acc, p)| *acc += w * p);
    }
    let values = phi.values.iter().zip(&acc).map(|(p, m)| p - m).collect();
    lat.scalar_field(values)
}

/// `phi_T(0) - E_b[phi_T(0)]`.
pub fn vertical_derivative(
    lat: &TorusLattice,
    spec: &EnsembleSpec,
    a: &ConductanceField,
    t: f64,
    e: &DirectionVector,
    b: Bond,
    cfg: &SolverConfig,
) -> Result<f64> {
    Ok(vertical_derivative_field(lat, spec, a, t, e, b, cfg)?[lat.origin()])
}

/// Second-order difference quotient of `f` at `s0`: central when `s0 +- h`
/// stays in `[0, 1]`, otherwise the three-point one-sided stencil.
fn difference<F>(s0: f64, h: f64, mut f: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if s0 - h >= 0.0 && s0 + h <= 1.0 {
        Ok((f(s0 + h)? - f(s0 - h)?) / (2.0 * h))
    } else if s0 + 2.0 * h <= 1.0 {
        Ok((-3.0 * f(s0)? + 4.0 * f(s0 + h)? - f(s0 + 2.0 * h)?) / (2.0 * h))
    } else if s0 - 2.0 * h >= 0.0 {
        Ok((3.0 * f(s0)? - 4.0 * f(s0 - h)? + f(s0 - 2.0 * h)?) / (2.0 * h))
    } else {
        Err(Error::Precondition(format!("step {h} does not fit in [0, 1] around {s0}")))
    }
}

/// Finite-difference and analytic sides of the four single-bond identities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeSides {
    pub h: f64,
    /// `(finite difference, analytic)` per identity, in the order
    /// `ode0, ode1, ode2, rel3`.
    pub pairs: [(f64, f64); 4],
}

pub const ODE_NAMES: [&str; 4] = ["ode0", "ode1", "ode2", "rel3"];

impl OdeSides {
    pub fn relative_errors(&self) -> [f64; 4] {
        self.pairs.map(|(fd, an)| crate::report::relative_error(fd, an, RELATIVE_FLOOR))
    }
}

pub fn ode_sides(
    lat: &TorusLattice,
    a: &ConductanceField,
    t: f64,
    e: &DirectionVector,
    b: Bond,
    h: f64,
    cfg: &SolverConfig,
) -> Result<OdeSides> {
    if !(h > 0.0) {
        return Err(Error::Precondition(format!("step must be > 0, got {h}")));
    }
    let base = probe(lat, a, t, e, b, cfg)?;
    let s0 = a.get(b);
    let mut scratch = a.clone();
    let mut at = |s: f64| -> Result<BondProbe> {
        scratch.replace_bond(b, s)?;
        probe(lat, &scratch, t, e, b, cfg)
    };
    // one probe per stencil point serves all four identities
    let mut cache: Vec<(f64, BondProbe)> = Vec::new();
    let mut eval = |s: f64| -> Result<BondProbe> {
        if let Some((_, p)) = cache.iter().find(|(x, _)| *x == s) {
            return Ok(*p);
        }
        let p = if s == s0 { base } else { at(s)? };
        cache.push((s, p));
        Ok(p)
    };
    let d_phi = difference(s0, h, |s| Ok(eval(s)?.phi0))?;
    let d_classical = difference(s0, h, |s| Ok(eval(s)?.classical()))?;
    let d_g = difference(s0, h, |s| Ok(eval(s)?.g))?;
    let d_green = difference(s0, h, |s| Ok(eval(s)?.green_origin_tail))?;
    let c = base.classical();
    Ok(OdeSides {
        h,
        pairs: [
            (d_phi, c),
            (d_classical, -2.0 * base.g * c),
            (d_g, -base.g * base.g),
            (d_green, -base.grad_g_tail * base.grad_g_origin),
        ],
    })
}

/// The four identities at step `h`, each against [`ODE_TOLERANCE`].
pub fn verify_ode_identities(
    lat: &TorusLattice,
    a: &ConductanceField,
    t: f64,
    e: &DirectionVector,
    b: Bond,
    h: f64,
    cfg: &SolverConfig,
) -> Result<CheckReport> {
    let sides = ode_sides(lat, a, t, e, b, h, cfg)?;
    let checks = ODE_NAMES
        .iter()
        .zip(sides.pairs)
        .map(|(name, (fd, an))| IdentityCheck::equality(*name, fd, an, ODE_TOLERANCE, RELATIVE_FLOOR))
        .collect();
    Ok(CheckReport::new("ode-identities", checks))
}

/// Ratio `err(h) / err(h/2)` per identity; close to 4 for a second-order
/// difference in the truncation-dominated regime.
pub fn convergence_ratios(
    lat: &TorusLattice,
    a: &ConductanceField,
    t: f64,
    e: &DirectionVector,
    b: Bond,
    h: f64,
    cfg: &SolverConfig,
) -> Result<[f64; 4]> {
    let coarse = ode_sides(lat, a, t, e, b, h, cfg)?;
    let fine = ode_sides(lat, a, t, e, b, 0.5 * h, cfg)?;
    let ec = coarse.pairs.map(|(fd, an)| (fd - an).abs());
    let ef = fine.pairs.map(|(fd, an)| (fd - an).abs());
    Ok(std::array::from_fn(|i| ec[i] / ef[i]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeRecord {
    pub bond: Bond,
    pub classical: f64,
    pub vertical: f64,
    pub factor: f64,
    pub g: f64,
    /// `omega_0(b)`; infinite when deleting `b` disconnects its endpoints.
    pub omega0: f64,
}

impl DerivativeRecord {
    /// `factor / omega_0^2`, zero when `omega_0` is infinite.
    pub fn kappa_ratio(&self) -> f64 {
        if self.omega0.is_finite() {
            self.factor / (self.omega0 * self.omega0)
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscOutcome {
    pub record: DerivativeRecord,
    /// `grad grad G_T(a^{b,0}, b, b)`.
    pub g_deleted: f64,
    pub report: CheckReport,
}

/// Oscillation bound, positivity pair, the reduction to the deleted-bond
/// field, and (when `kappa` is given) the weight bounds with constant `kappa`.
pub fn osc_bound_check(
    lat: &TorusLattice,
    spec: &EnsembleSpec,
    a: &ConductanceField,
    t: f64,
    e: &DirectionVector,
    b: Bond,
    kappa: Option<f64>,
    cfg: &SolverConfig,
) -> Result<OscOutcome> {
    let ab = a.get(b);
    let base = probe(lat, a, t, e, b, cfg)?;
    let law = spec.single_bond_law(b);
    let vertical = match law {
        SingleBondLaw::PointMass(c) if c == ab => 0.0,
        _ => {
            let phi = solve_modified_corrector(lat, a, t, e, cfg)?.phi;
            conditional_deviation(lat, &law, a, t, e, b, &phi, cfg)?[lat.origin()]
        }
    };
    let deleted = a.set_bond(b, 0.0)?;
    let g_deleted = GreenCache::new(lat, &deleted, t, *cfg)?.second_gradient(b, b)?;
    let omega0 = weight_omega0(lat, a, b).value();
    let classical = base.classical();
    let factor = base.factor(ab);

    // both sides carry solver error of relative size ~tolerance in phi
    let slack = 1e-6 * cfg.tolerance.max(1e-14).sqrt() * (base.phi0.abs() + 1.0);
    let mut checks = vec![
        IdentityCheck::at_most("osc", vertical.abs(), factor * classical.abs(), slack),
        IdentityCheck::at_most("positivity-g", -base.g, 0.0, 0.0),
        IdentityCheck::at_most("positivity-margin", ab * base.g - 1.0, 0.0, 0.0),
        IdentityCheck::at_most("deleted-bond-reduction", ab / (1.0 - ab * base.g), (1.0 + g_deleted).powi(2), 1e-9),
    ];
    // strict positivity: zero is a violation, not a degenerate case
    for c in &mut checks[1..3] {
        if c.lhs >= 0.0 {
            c.verdict = Verdict::Violated;
        }
    }
    if let Some(k) = kappa {
        let w2 = omega0 * omega0;
        checks.push(IdentityCheck::at_most("weight-bound", factor, k * w2, 0.0));
        checks.push(IdentityCheck::at_most(
            "combined-bound",
            vertical.abs(),
            k * w2 * base.grad_g_origin.abs() * base.flux.abs(),
            slack,
        ));
    }
    let record = DerivativeRecord { bond: b, classical, vertical, factor, g: base.g, omega0 };
    Ok(OscOutcome { record, g_deleted, report: CheckReport::new("osc-bound", checks) })
}

/// Largest observed `factor / omega_0^2`; the empirical constant of the
/// weight bound.
pub fn calibrate_kappa<'r>(records: impl IntoIterator<Item = &'r DerivativeRecord>) -> f64 {
    records.into_iter().map(DerivativeRecord::kappa_ratio).fold(0.0, f64::max)
}

/// Outcome counts of one check over a batch of trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckTally {
    pub identity: String,
    pub trials: usize,
    pub violations: usize,
    pub degenerate: usize,
    /// Largest `lhs / rhs` over non-degenerate trials.
    pub max_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscSummary {
    pub trials: usize,
    pub tallies: Vec<CheckTally>,
    /// Empirical weight-bound constant over all trials.
    pub kappa: f64,
}

impl OscSummary {
    pub fn passed(&self) -> bool {
        self.tallies.iter().all(|t| t.violations == 0)
    }
}

/// Ensemble, environment, `T`, direction and bond for oscillation trial `i`.
pub fn osc_trial(
    lat: &TorusLattice,
    master_seed: u64,
    i: u64,
) -> Result<(EnsembleSpec, ConductanceField, f64, DirectionVector, Bond)> {
    let s = crate::seed::derive_seed(master_seed, i);
    let mut rng = crate::seed::rng(crate::seed::derive_seed(s, crate::seed::stream::AUX));
    let lambda = rng.random_range(0.05..1.0);
    let d = lat.dim();
    let spec = match i % 3 {
        0 => EnsembleSpec::ModifiedBernoulli { lambda, open_axis: (i as usize / 3) % d },
        1 => EnsembleSpec::IidBernoulli { lambda },
        _ => EnsembleSpec::IidUniform { lo: 0.0, hi: 1.0 },
    };
    let a = spec.sample(lat, s)?;
    let t = 2f64.powf(rng.random_range(0.0..6.0));
    let e = DirectionVector::normalized((0..d).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let b = lat.bond_at(rng.random_range(0..lat.bond_count()));
    Ok((spec, a, t, e, b))
}

/// Oscillation bound and positivity pair over `n` random triples.
pub fn osc_trials(lat: &TorusLattice, n: usize, master_seed: u64, cfg: &SolverConfig) -> Result<OscSummary> {
    let outcomes = crate::par::map_indexed(n, |i| -> Result<OscOutcome> {
        let (spec, a, t, e, b) = osc_trial(lat, master_seed, i as u64)?;
        osc_bound_check(lat, &spec, &a, t, &e, b, None, cfg)
    });
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let mut tallies: Vec<CheckTally> = Vec::new();
    for o in &outcomes {
        for c in &o.report.checks {
            let tally = match tallies.iter_mut().find(|t| t.identity == c.identity) {
                Some(t) => t,
                None => {
                    tallies.push(CheckTally {
                        identity: c.identity.clone(),
                        trials: 0,
                        violations: 0,
                        degenerate: 0,
                        max_ratio: f64::NEG_INFINITY,
                    });
                    tallies.last_mut().unwrap()
                }
            };
            tally.trials += 1;
            match c.verdict {
                Verdict::Violated => tally.violations += 1,
                Verdict::Degenerate => tally.degenerate += 1,
                _ => {}
            }
            if c.verdict != Verdict::Degenerate {
                tally.max_ratio = tally.max_ratio.max(c.relative_error);
            }
        }
    }
    let kappa = calibrate_kappa(outcomes.iter().map(|o| &o.record));
    Ok(OscSummary { trials: n, tallies, kappa })
}
