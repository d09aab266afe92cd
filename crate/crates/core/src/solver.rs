//! The regularized operator `1/T + div a grad` on the torus, the modified
//! corrector, Green's function columns and mixed second differences of the
//! Green's function.
//!
//! The operator is symmetric with quadratic form `(1/T) sum u^2 + sum a |grad u|^2`,
//! so it is positive definite for every `a` in `[0,1]^bonds`; all solves use
//! Jacobi-preconditioned conjugate gradients.

use std::collections::HashMap;

use rand::Rng;

use serde::{Deserialize, Serialize};

use crate::ensembles::ConductanceField;
use crate::error::{Error, Result};
use crate::lattice::{Bond, DirectionVector, ScalarField, TorusLattice};
use crate::par;
use crate::report::{CheckReport, IdentityCheck, Verdict};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Target `||A x - f|| / ||f||`.
    pub tolerance: f64,
    /// Defaults to `20 * siteCount` when absent.
    pub max_iterations: Option<usize>,
    pub precondition: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iterations: None, precondition: true }
    }
}

impl SolverConfig {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self { tolerance, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Precondition(format!("solver tolerance must be > 0, got {}", self.tolerance)));
        }
        if self.max_iterations == Some(0) {
            return Err(Error::Precondition("max iterations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

/// `u -> u/T + div(a grad u)` for a fixed environment.
pub struct Operator<'a> {
    lat: &'a TorusLattice,
    a: &'a ConductanceField,
    inv_t: f64,
    diag: Vec<f64>,
}

impl<'a> Operator<'a> {
    pub fn new(lat: &'a TorusLattice, a: &'a ConductanceField, t: f64) -> Result<Self> {
        lat.check_shape(a.shape())?;
        if !(t > 0.0) {
            return Err(Error::Precondition(format!("T must be > 0, got {t}")));
        }
        let inv_t = 1.0 / t;
        let d = lat.dim();
        let av = a.values();
        let mut diag = vec![0.0; lat.site_count()];
        par::fill_indexed(&mut diag, |x| {
            let mut s = inv_t;
            for axis in 0..d {
                s += av[x * d + axis] + av[lat.backward(x, axis) * d + axis];
            }
            s
        });
        Ok(Self { lat, a, inv_t, diag })
    }

    pub fn t(&self) -> f64 {
        1.0 / self.inv_t
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let lat = self.lat;
        let d = lat.dim();
        let av = self.a.values();
        let inv_t = self.inv_t;
        par::fill_indexed(out, |x| {
            let ux = u[x];
            let mut s = inv_t * ux;
            for axis in 0..d {
                let f = lat.forward(x, axis);
                let b = lat.backward(x, axis);
                s += av[x * d + axis] * (ux - u[f]) + av[b * d + axis] * (ux - u[b]);
            }
            s
        });
    }

    /// Preconditioned conjugate gradients from a zero initial guess.
    pub fn solve(&self, rhs: &[f64], cfg: &SolverConfig) -> Result<(Vec<f64>, SolveStats)> {
        cfg.validate()?;
        let n = rhs.len();
        let max_iter = cfg.max_iterations.unwrap_or(20 * n);
        let rhs_norm = par::dot(rhs, rhs).sqrt();
        let mut x = vec![0.0; n];
        if rhs_norm == 0.0 {
            return Ok((x, SolveStats::default()));
        }
        let inv_diag: Vec<f64> =
            if cfg.precondition { self.diag.iter().map(|d| 1.0 / d).collect() } else { vec![1.0; n] };
        let precond = |r: &[f64], z: &mut [f64]| par::fill_indexed(z, |i| inv_diag[i] * r[i]);

        let mut r = rhs.to_vec();
        let mut z = vec![0.0; n];
        let mut ap = vec![0.0; n];
        let mut iterations = 0;
        let mut restarts = 0;
        loop {
            precond(&r, &mut z);
            let mut p = z.clone();
            let mut rz = par::dot(&r, &z);
            let mut rel = par::dot(&r, &r).sqrt() / rhs_norm;
            while rel > cfg.tolerance && iterations < max_iter {
                self.apply(&p, &mut ap);
                let alpha = rz / par::dot(&p, &ap);
                par::axpy(alpha, &p, &mut x);
                par::axpy(-alpha, &ap, &mut r);
                iterations += 1;
                rel = par::dot(&r, &r).sqrt() / rhs_norm;
                precond(&r, &mut z);
                let rz_new = par::dot(&r, &z);
                let beta = rz_new / rz;
                rz = rz_new;
                par::xpby(&z, beta, &mut p);
            }
            // recompute the true residual; the recurrence drifts near round-off
            self.apply(&x, &mut ap);
            par::fill_indexed(&mut r, |i| rhs[i] - ap[i]);
            let true_rel = par::dot(&r, &r).sqrt() / rhs_norm;
            if true_rel <= cfg.tolerance {
                return Ok((x, SolveStats { iterations, residual: true_rel }));
            }
            restarts += 1;
            if iterations >= max_iter || restarts > 4 {
                return Err(Error::NotConverged { iterations, residual: true_rel });
            }
        }
    }
}

/// `u/T + div(a grad u)`.
pub fn apply_operator(lat: &TorusLattice, a: &ConductanceField, t: f64, u: &ScalarField) -> Result<ScalarField> {
    lat.check_shape(u.shape())?;
    let op = Operator::new(lat, a, t)?;
    let mut out = lat.zeros();
    op.apply(&u.values, &mut out.values);
    Ok(out)
}

/// Modified corrector `phi_T` with its solve metadata.
#[derive(Clone, Debug)]
pub struct CorrectorSolution {
    pub phi: ScalarField,
    pub t: f64,
    pub e: DirectionVector,
    pub residual: f64,
    pub iterations: usize,
}

/// Solves `phi/T + div(a (grad phi + e)) = 0`.
pub fn solve_modified_corrector(
    lat: &TorusLattice,
    a: &ConductanceField,
    t: f64,
    e: &DirectionVector,
    cfg: &SolverConfig,
) -> Result<CorrectorSolution> {
    let op = Operator::new(lat, a, t)?;
    let mut flux = lat.direction_field(e)?;
    flux.values.iter_mut().zip(a.values()).for_each(|(f, &ab)| *f *= -ab);
    let rhs = lat.divergence(&flux)?;
    let (phi, stats) = op.solve(&rhs.values, cfg)?;
    Ok(CorrectorSolution {
        phi: lat.scalar_field(phi)?,
        t,
        e: e.clone(),
        residual: stats.residual,
        iterations: stats.iterations,
    })
}

/// Column `G_T(., pole)` of the Green's function.
#[derive(Clone, Debug)]
pub struct GreenFunction {
    pub g: ScalarField,
    pub pole: usize,
    pub t: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Solves `G/T + div(a grad G) = delta(. - pole)`.
pub fn solve_green(
    lat: &TorusLattice,
    a: &ConductanceField,
    t: f64,
    pole: usize,
    cfg: &SolverConfig,
) -> Result<GreenFunction> {
    let op = Operator::new(lat, a, t)?;
    solve_green_with(&op, lat, pole, cfg)
}

fn solve_green_with(op: &Operator<'_>, lat: &TorusLattice, pole: usize, cfg: &SolverConfig) -> Result<GreenFunction> {
    let rhs = lat.indicator(pole);
    let (g, stats) = op.solve(&rhs.values, cfg)?;
    Ok(GreenFunction {
        g: lat.scalar_field(g)?,
        pole,
        t: op.t(),
        residual: stats.residual,
        iterations: stats.iterations,
    })
}

/// Green's function columns for one `(a, T)`, solved on first use.
pub struct GreenCache<'a> {
    lat: &'a TorusLattice,
    op: Operator<'a>,
    cfg: SolverConfig,
    columns: HashMap<usize, GreenFunction>,
}

impl<'a> GreenCache<'a> {
    pub fn new(lat: &'a TorusLattice, a: &'a ConductanceField, t: f64, cfg: SolverConfig) -> Result<Self> {
        Ok(Self { lat, op: Operator::new(lat, a, t)?, cfg, columns: HashMap::new() })
    }

    pub fn column(&mut self, pole: usize) -> Result<&GreenFunction> {
        if !self.columns.contains_key(&pole) {
            let g = solve_green_with(&self.op, self.lat, pole, &self.cfg)?;
            self.columns.insert(pole, g);
        }
        Ok(&self.columns[&pole])
    }

    /// `grad_y G(x, b) = G(x, y_b) - G(x, x_b)` for every `x`.
    pub fn dipole(&mut self, b: Bond) -> Result<Vec<f64>> {
        let (xb, yb) = self.lat.endpoints(b);
        let gy = self.column(yb)?.g.values.clone();
        let gx = &self.column(xb)?.g.values;
        Ok(gy.iter().zip(gx).map(|(p, q)| p - q).collect())
    }

    /// `grad G(b', y) = G(y_{b'}, y) - G(x_{b'}, y)`.
    pub fn gradient_at(&mut self, b_prime: Bond, pole: usize) -> Result<f64> {
        let (x, y) = self.lat.endpoints(b_prime);
        let g = &self.column(pole)?.g;
        Ok(g[y] - g[x])
    }

    /// Mixed second difference: `grad` in the second argument along `b`, then
    /// in the first argument along `b'`.
    pub fn second_gradient(&mut self, b_prime: Bond, b: Bond) -> Result<f64> {
        let (xb, yb) = self.lat.endpoints(b);
        Ok(self.gradient_at(b_prime, yb)? - self.gradient_at(b_prime, xb)?)
    }

    pub fn cached_columns(&self) -> usize {
        self.columns.len()
    }
}

/// `grad grad G_T(b', b)`.
pub fn green_second_gradient(
    lat: &TorusLattice,
    a: &ConductanceField,
    t: f64,
    b: Bond,
    b_prime: Bond,
    cfg: &SolverConfig,
) -> Result<f64> {
    GreenCache::new(lat, a, t, *cfg)?.second_gradient(b_prime, b)
}

/// Both sides of the energy identity for the dipole column `grad_y G(., b)`:
/// `(1/T) sum_x w(x)^2 + sum_b' a(b') (grad w(b'))^2` and `grad grad G(b, b)`.
pub fn dipole_energy_identity(
    lat: &TorusLattice,
    a: &ConductanceField,
    cache: &mut GreenCache<'_>,
    b: Bond,
) -> Result<(f64, f64)> {
    let w = lat.scalar_field(cache.dipole(b)?)?;
    let gw = lat.gradient(&w)?;
    let t = cache.op.t();
    let lhs = w.dot(&w) / t
        + crate::stats::pairwise_sum(&gw.values.iter().zip(a.values()).map(|(g, ab)| ab * g * g).collect::<Vec<_>>());
    Ok((lhs, gw.at(b)))
}

pub const IBP_TOLERANCE: f64 = 1e-12;
pub const MASS_TOLERANCE: f64 = 1e-9;
pub const ENERGY_TOLERANCE: f64 = 1e-8;
pub const DIPOLE_TOLERANCE: f64 = 1e-6;

/// Exact identities for one environment: summation by parts on random
/// fields, Green's mass, zero corrector mean, the corrector energy identity
/// and the dipole energy identity at `b`. Solve with a tolerance well below
/// `MASS_TOLERANCE` for the mass checks to be meaningful.
pub fn verify_identities(
    lat: &TorusLattice,
    a: &ConductanceField,
    t: f64,
    e: &DirectionVector,
    b: Bond,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<CheckReport> {
    let mut rng = crate::seed::rng(seed);
    let u = lat.scalar_field((0..lat.site_count()).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let f = lat.bond_field((0..lat.bond_count()).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let ibp = IdentityCheck::equality(
        "integration-by-parts",
        lat.gradient(&u)?.dot(&f),
        u.dot(&lat.divergence(&f)?),
        IBP_TOLERANCE,
        1.0,
    );

    let mut cache = GreenCache::new(lat, a, t, *cfg)?;
    let mass = cache.column(lat.origin())?.g.sum() / t;
    let phi = solve_modified_corrector(lat, a, t, e, cfg)?.phi;
    let grad = lat.gradient(&phi)?;
    let ef = lat.direction_field(e)?;
    let dirichlet: Vec<f64> = grad.values.iter().zip(a.values()).map(|(g, ab)| ab * g * g).collect();
    let cross: Vec<f64> =
        grad.values.iter().zip(a.values()).zip(&ef.values).map(|((g, ab), ev)| -ab * ev * g).collect();
    let energy = IdentityCheck::equality(
        "corrector-energy",
        phi.dot(&phi) / t + crate::stats::pairwise_sum(&dirichlet),
        crate::stats::pairwise_sum(&cross),
        ENERGY_TOLERANCE,
        f64::MIN_POSITIVE,
    );
    let (lhs, rhs) = dipole_energy_identity(lat, a, &mut cache, b)?;
    let checks = vec![
        ibp,
        IdentityCheck::absolute("green-mass", mass, 1.0, MASS_TOLERANCE),
        IdentityCheck::absolute("corrector-mean", phi.sum(), 0.0, MASS_TOLERANCE),
        degenerate_if_zero(energy),
        IdentityCheck::equality("dipole-energy", lhs, rhs, DIPOLE_TOLERANCE, f64::MIN_POSITIVE),
    ];
    Ok(CheckReport::new("identities", checks))
}

fn degenerate_if_zero(mut c: IdentityCheck) -> IdentityCheck {
    if c.lhs == 0.0 && c.rhs == 0.0 {
        c.verdict = Verdict::Degenerate;
    }
    c
}

/// `grad grad G_T(b, b)` against `2T / (1 + 2T s)` in the environment where
/// `b` is the only bond, with conductance `s`.
pub fn single_bond_check(
    lat: &TorusLattice,
    t: f64,
    b: Bond,
    s: f64,
    tol: f64,
    cfg: &SolverConfig,
) -> Result<IdentityCheck> {
    let a = ConductanceField::constant(lat, 0.0)?.set_bond(b, s)?;
    let g = green_second_gradient(lat, &a, t, b, b, cfg)?;
    Ok(IdentityCheck::absolute(format!("single-bond-s{s}"), g, 2.0 * t / (1.0 + 2.0 * t * s), tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::EnsembleSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lat(d: usize, l: usize) -> TorusLattice {
        TorusLattice::new(d, l).unwrap()
    }

    /// Dense matrix of the operator built from bond incidences.
    fn dense_matrix(lat: &TorusLattice, a: &ConductanceField, t: f64) -> Vec<Vec<f64>> {
        let n = lat.site_count();
        let mut m = vec![vec![0.0; n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0 / t;
        }
        for b in lat.bonds() {
            let (x, y) = lat.endpoints(b);
            let c = a.get(b);
            m[x][x] += c;
            m[y][y] += c;
            m[x][y] -= c;
            m[y][x] -= c;
        }
        m
    }

    /// Gaussian elimination with partial pivoting.
    fn dense_solve(mut m: Vec<Vec<f64>>, mut f: Vec<f64>) -> Vec<f64> {
        let n = f.len();
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
            m.swap(col, piv);
            f.swap(col, piv);
            for row in col + 1..n {
                let k = m[row][col] / m[col][col];
                for c in col..n {
                    m[row][c] -= k * m[col][c];
                }
                f[row] -= k * f[col];
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let s: f64 = (row + 1..n).map(|c| m[row][c] * x[c]).sum();
            x[row] = (f[row] - s) / m[row][row];
        }
        x
    }

    fn random_field(l: &TorusLattice, seed: u64) -> ConductanceField {
        EnsembleSpec::IidUniform { lo: 0.0, hi: 1.0 }.sample(l, seed).unwrap()
    }

    #[test]
    fn operator_trivial_cases() {
        let l = lat(3, 4);
        let zero = ConductanceField::constant(&l, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = l.scalar_field((0..64).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let out = apply_operator(&l, &zero, 4.0, &u).unwrap();
        assert!(out.values.iter().zip(&u.values).all(|(o, v)| (o - v / 4.0).abs() < 1e-16));
        let a = random_field(&l, 2);
        let c = l.scalar_field(vec![3.0; 64]).unwrap();
        let out = apply_operator(&l, &a, 2.0, &c).unwrap();
        assert!(out.values.iter().all(|&o| (o - 1.5).abs() < 1e-14));
        assert!(apply_operator(&l, &a, 0.0, &c).is_err());
    }

    #[test]
    fn operator_matches_dense_assembly() {
        for (d, side) in [(3, 2), (2, 3)] {
            let l = lat(d, side);
            let a = random_field(&l, 5);
            let m = dense_matrix(&l, &a, 3.0);
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            let u = l.scalar_field((0..l.site_count()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let out = apply_operator(&l, &a, 3.0, &u).unwrap();
            for (row, o) in m.iter().zip(&out.values) {
                let e: f64 = row.iter().zip(&u.values).map(|(p, q)| p * q).sum();
                assert!((e - o).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn operator_is_coercive() {
        let l = lat(3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for s in 0..20 {
            let a = random_field(&l, s);
            let t = rng.random_range(0.1..100.0);
            let u = l.scalar_field((0..64).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let au = apply_operator(&l, &a, t, &u).unwrap();
            assert!(u.dot(&au) >= u.dot(&u) / t * (1.0 - 1e-14));
        }
    }

    #[test]
    fn corrector_vanishes_for_constant_coefficients() {
        let l = lat(3, 4);
        let e = DirectionVector::normalized(vec![1.0, 2.0, -0.5]).unwrap();
        for c in [1.0, 0.3] {
            let a = ConductanceField::constant(&l, c).unwrap();
            let sol = solve_modified_corrector(&l, &a, 7.0, &e, &SolverConfig::default()).unwrap();
            assert!(sol.phi.values.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn corrector_matches_dense_solve() {
        for (d, side) in [(3, 2), (2, 3)] {
            let l = lat(d, side);
            let a = EnsembleSpec::modified_bernoulli(0.7).sample(&l, 21).unwrap();
            let e = DirectionVector::axis(d, 1).unwrap();
            let sol = solve_modified_corrector(&l, &a, 4.0, &e, &SolverConfig::with_tolerance(1e-13)).unwrap();
            let mut flux = l.direction_field(&e).unwrap();
            flux.values.iter_mut().zip(a.values()).for_each(|(f, ab)| *f *= -ab);
            let rhs = l.divergence(&flux).unwrap().values;
            let dense = dense_solve(dense_matrix(&l, &a, 4.0), rhs);
            for (p, q) in sol.phi.values.iter().zip(&dense) {
                assert!((p - q).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn corrector_mean_zero_and_energy_identity() {
        let l = lat(3, 4);
        let a = random_field(&l, 13);
        let e = DirectionVector::axis(3, 2).unwrap();
        let sol = solve_modified_corrector(&l, &a, 8.0, &e, &SolverConfig::with_tolerance(1e-12)).unwrap();
        assert!(sol.residual <= 1e-12);
        assert!(sol.phi.sum().abs() < 1e-9);
        let g = l.gradient(&sol.phi).unwrap();
        let ef = l.direction_field(&e).unwrap();
        let lhs: f64 =
            sol.phi.dot(&sol.phi) / 8.0 + g.values.iter().zip(a.values()).map(|(gv, ab)| ab * gv * gv).sum::<f64>();
        let rhs: f64 = -g.values.iter().zip(a.values()).zip(&ef.values).map(|((gv, ab), ev)| ab * ev * gv).sum::<f64>();
        assert!((lhs - rhs).abs() < 1e-8 * lhs.abs().max(1e-3));
    }

    #[test]
    fn green_without_conductance_is_scaled_delta() {
        let l = lat(3, 4);
        let a = ConductanceField::constant(&l, 0.0).unwrap();
        let g = solve_green(&l, &a, 5.0, 9, &SolverConfig::default()).unwrap();
        for (x, &v) in g.g.values.iter().enumerate() {
            assert!((v - if x == 9 { 5.0 } else { 0.0 }).abs() < 1e-12);
        }
    }

    #[test]
    fn green_mass_positivity_and_symmetry() {
        let l = lat(3, 4);
        for s in 0..5 {
            let a = EnsembleSpec::modified_bernoulli(0.5).sample(&l, s).unwrap();
            let t = 8.0;
            let cfg = SolverConfig::with_tolerance(1e-12);
            let g0 = solve_green(&l, &a, t, 0, &cfg).unwrap();
            let g1 = solve_green(&l, &a, t, 37, &cfg).unwrap();
            assert!((g0.g.sum() / t - 1.0).abs() < 1e-9);
            assert!(g0.g.values.iter().all(|&v| v >= -1e-12));
            assert!((g0.g[37] - g1.g[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn green_translation_covariant_for_unit_field() {
        let l = lat(3, 16);
        let a = ConductanceField::constant(&l, 1.0).unwrap();
        let cfg = SolverConfig::default();
        let g0 = solve_green(&l, &a, 10.0, 0, &cfg).unwrap();
        let z = [3i64, -2, 5];
        let zs = l.site_at(&z);
        let gz = solve_green(&l, &a, 10.0, zs, &cfg).unwrap();
        for x in (0..l.site_count()).step_by(37) {
            assert!((g0.g[x] - gz.g[l.translate(x, &z)]).abs() < 1e-8);
        }
    }

    #[test]
    fn second_gradient_closed_forms() {
        let l = lat(3, 4);
        let t = 3.0;
        let b = Bond { site: 5, axis: 1 };
        let cfg = SolverConfig::with_tolerance(1e-13);
        let zero = ConductanceField::constant(&l, 0.0).unwrap();
        let g = green_second_gradient(&l, &zero, t, b, b, &cfg).unwrap();
        assert!((g - 2.0 * t).abs() < 1e-10);
        for s in [0.1, 0.5, 1.0] {
            let a = zero.set_bond(b, s).unwrap();
            let g = green_second_gradient(&l, &a, t, b, b, &cfg).unwrap();
            assert!((g - 2.0 * t / (1.0 + 2.0 * t * s)).abs() < 1e-8, "s = {s}: {g}");
        }
    }

    #[test]
    fn dipole_energy_identity_holds() {
        let l = lat(3, 4);
        let a = random_field(&l, 44);
        let mut cache = GreenCache::new(&l, &a, 8.0, SolverConfig::with_tolerance(1e-12)).unwrap();
        for b in [Bond { site: 0, axis: 0 }, Bond { site: 21, axis: 2 }] {
            let (lhs, rhs) = dipole_energy_identity(&l, &a, &mut cache, b).unwrap();
            assert!((lhs - rhs).abs() < 1e-6 * rhs.abs());
            assert!(rhs > 0.0 && 1.0 - a.get(b) * rhs > 0.0);
        }
        assert_eq!(cache.cached_columns(), 4);
    }

    #[test]
    fn non_convergence_is_reported() {
        let l = lat(3, 6);
        let a = random_field(&l, 3);
        let cfg = SolverConfig { tolerance: 1e-12, max_iterations: Some(2), precondition: true };
        let e = DirectionVector::axis(3, 0).unwrap();
        match solve_modified_corrector(&l, &a, 100.0, &e, &cfg) {
            Err(Error::NotConverged { iterations, residual }) => {
                assert!(iterations >= 2);
                assert!(residual > 1e-12);
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn identity_suite_passes() {
        let l = lat(3, 4);
        let e = DirectionVector::normalized(vec![1.0, -1.0, 0.5]).unwrap();
        let cfg = SolverConfig::with_tolerance(1e-13);
        for s in 0..3 {
            let a = random_field(&l, 100 + s);
            let r = verify_identities(&l, &a, 8.0, &e, Bond { site: 7, axis: 1 }, s, &cfg).unwrap();
            assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
        }
        let ones = ConductanceField::constant(&l, 1.0).unwrap();
        let r = verify_identities(&l, &ones, 8.0, &e, Bond { site: 0, axis: 0 }, 1, &cfg).unwrap();
        assert_eq!(r.get("corrector-energy").unwrap().verdict, Verdict::Degenerate);
        assert!(r.passed());
    }

    #[test]
    fn single_bond_check_matches_closed_form() {
        let l = lat(3, 4);
        let c = single_bond_check(&l, 8.0, Bond { site: 0, axis: 2 }, 0.3, 1e-8, &SolverConfig::with_tolerance(1e-13))
            .unwrap();
        assert_eq!(c.verdict, Verdict::Pass);
    }
}
