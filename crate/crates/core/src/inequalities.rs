//! Deterministic checks of the weighted coercivity inequalities and of the
//! discrete Leibniz-rule replacements, with their constants computed
//! numerically.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensembles::{ConductanceField, EnsembleSpec};
use crate::error::{Error, Result};
use crate::graph_metric::bond_distance;
use crate::lattice::{ScalarField, TorusLattice};
use crate::{par, seed, stats};

/// Relative slack on the stated constant.
pub const SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub id: String,
    pub trials: usize,
    /// Trials where both sides vanish; excluded from `max_ratio`.
    pub degenerate: usize,
    pub max_ratio: f64,
    pub constant: f64,
    pub passed: bool,
}

impl InequalityReport {
    /// Folds `(lhs, rhs_without_constant)` pairs into a report against
    /// `lhs <= constant * rhs`.
    pub fn from_pairs(id: impl Into<String>, constant: f64, pairs: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut trials = 0;
        let mut degenerate = 0;
        let mut max_ratio: f64 = 0.0;
        for (lhs, rhs) in pairs {
            trials += 1;
            if lhs == 0.0 && rhs == 0.0 {
                degenerate += 1;
                continue;
            }
            let r = if rhs == 0.0 { f64::INFINITY } else { lhs / rhs };
            max_ratio = if r.is_nan() { f64::NAN } else { max_ratio.max(r) };
        }
        Self::from_max(id, trials, degenerate, max_ratio, constant)
    }

    pub fn from_max(id: impl Into<String>, trials: usize, degenerate: usize, max_ratio: f64, constant: f64) -> Self {
        let passed = max_ratio <= constant + SLACK * constant.max(1.0);
        Self { id: id.into(), trials, degenerate, max_ratio, constant, passed }
    }

    /// Combines reports of the same inequality and constant.
    pub fn merge(self, other: &InequalityReport) -> Self {
        debug_assert_eq!(self.id, other.id);
        let max_ratio = if self.max_ratio.is_nan() || other.max_ratio.is_nan() {
            f64::NAN
        } else {
            self.max_ratio.max(other.max_ratio)
        };
        Self::from_max(
            self.id,
            self.trials + other.trials,
            self.degenerate + other.degenerate,
            max_ratio,
            self.constant,
        )
    }
}

/// A constant given by a convergent series, with a bracket certified by
/// integral comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesConstant {
    /// Certified lower bound; used as the constant in checks.
    pub value: f64,
    pub upper: f64,
}

fn check_exponent(p: f64, d: usize) -> Result<()> {
    if !(p > d as f64 + 1.0) {
        return Err(Error::Precondition(format!("need p > d + 1 = {}, got p = {p}", d + 1)));
    }
    Ok(())
}

/// Coefficients of `(2m-1)^d - (2m-3)^d` as a polynomial in `m`, lowest
/// degree first: the number of sites with sup-norm `m - 1`.
fn shell_polynomial(d: usize) -> Vec<f64> {
    let mut coef = vec![0.0; d + 1];
    let mut binom = 1.0;
    for j in 0..=d {
        // (2m + c)^d = sum_j C(d, j) (2m)^j c^{d-j}
        let pow2 = 2f64.powi(j as i32);
        coef[j] = binom * pow2 * ((-1f64).powi((d - j) as i32) - (-3f64).powi((d - j) as i32));
        binom = binom * (d - j) as f64 / (j + 1) as f64;
    }
    coef
}

/// `sum_{x in Z^d} (|x|_inf + 1)^{1-p}` for `p > d + 1`.
pub fn coercivity_constant(p: f64, d: usize) -> Result<SeriesConstant> {
    check_exponent(p, d)?;
    const M: usize = 1_000_000;
    let poly = shell_polynomial(d);
    let f = |m: f64| poly.iter().rev().fold(0.0, |acc, c| acc * m + c) * m.powf(1.0 - p);
    // m = r + 1 indexes shells of radius r; the origin shell holds one site
    let terms: Vec<f64> = (2..=M).rev().map(|m| f(m as f64)).collect();
    let partial = 1.0 + stats::pairwise_sum(&terms);
    // sum_{m > M} f(m) lies between the integrals from M + 1 and from M
    let integral = |from: f64| -> f64 {
        poly.iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(j, c)| c * from.powf(j as f64 + 2.0 - p) / (p - j as f64 - 2.0))
            .sum()
    };
    Ok(SeriesConstant { value: partial + integral(M as f64 + 1.0), upper: partial + integral(M as f64) })
}

/// `sum_{k>=0} 2^{k(1-p)} |B_{2^{k+1}}(0)|` with `|B_R| = (2R+1)^d`.
pub fn coercivity_prob_constant(p: f64, d: usize) -> Result<SeriesConstant> {
    check_exponent(p, d)?;
    let term = |k: i32| 2f64.powf(k as f64 * (1.0 - p)) * (2f64.powi(k + 2) + 1.0).powi(d as i32);
    let mut sum = 0.0;
    let mut k = 0;
    loop {
        let t = term(k);
        sum += t;
        // consecutive ratios are at most 2^{d+1-p}
        let r = 2f64.powf(d as f64 + 1.0 - p);
        let tail = term(k + 1) / (1.0 - r);
        if tail < 1e-17 * sum || k > 4000 {
            return Ok(SeriesConstant { value: sum, upper: sum + tail });
        }
        k += 1;
    }
}

/// Both sides of the weighted coercivity inequality:
/// `(sum_b |grad u|^2 dist_a^{-p}(x_b, y_b), sum_b a(b) |grad u|^2)`.
pub fn coercivity_sides(lat: &TorusLattice, a: &ConductanceField, u: &ScalarField, p: f64) -> Result<(f64, f64)> {
    check_exponent(p, lat.dim())?;
    let grad = lat.gradient(u)?;
    let weighted = par::map_indexed(lat.bond_count(), |i| {
        let b = lat.bond_at(i);
        grad.values[i] * grad.values[i] * bond_distance(lat, a, b, false).inv_pow(p)
    });
    let energy: Vec<f64> = grad.values.iter().zip(a.values()).map(|(g, ab)| ab * g * g).collect();
    Ok((stats::pairwise_sum(&weighted), stats::pairwise_sum(&energy)))
}

pub fn coercivity_check(lat: &TorusLattice, a: &ConductanceField, u: &ScalarField, p: f64) -> Result<InequalityReport> {
    let c = coercivity_constant(p, lat.dim())?;
    let sides = coercivity_sides(lat, a, u, p)?;
    Ok(InequalityReport::from_pairs("coercivity", c.value, [sides]))
}

/// Random environment for trial `i`: alternates between product laws that
/// produce zero bonds, isolated sites and a continuum of values.
pub fn trial_environment(lat: &TorusLattice, master_seed: u64, i: u64) -> Result<ConductanceField> {
    let s = seed::derive_seed(master_seed, i);
    let mut rng = seed::rng(seed::derive_seed(s, seed::stream::AUX));
    let lambda = rng.random_range(0.05..1.0);
    let spec = match i % 4 {
        0 => EnsembleSpec::IidBernoulli { lambda },
        1 => EnsembleSpec::IidUniform { lo: 0.0, hi: 1.0 },
        2 => EnsembleSpec::ModifiedBernoulli { lambda, open_axis: (i as usize / 4) % lat.dim() },
        _ => EnsembleSpec::IidUniform { lo: 0.0, hi: lambda },
    };
    spec.sample(lat, s)
}

/// Random function for trial `i`: either white noise or a localized bump.
pub fn trial_function(lat: &TorusLattice, master_seed: u64, i: u64) -> Result<ScalarField> {
    let mut rng = seed::rng(seed::derive_seed(seed::derive_seed(master_seed, i), seed::stream::AUX - 1));
    let values = if i.is_multiple_of(2) {
        (0..lat.site_count()).map(|_| rng.random_range(-1.0..1.0)).collect()
    } else {
        let center = rng.random_range(0..lat.site_count());
        let mut v = vec![0.0; lat.site_count()];
        v[center] = 1.0;
        for axis in 0..lat.dim() {
            v[lat.forward(center, axis)] = rng.random_range(-1.0..1.0);
        }
        v
    };
    lat.scalar_field(values)
}

/// `n` random `(a, u)` trials of the weighted coercivity inequality.
pub fn coercivity_trials(lat: &TorusLattice, p: f64, n: usize, master_seed: u64) -> Result<InequalityReport> {
    let c = coercivity_constant(p, lat.dim())?;
    let sides = par::map_indexed(n, |i| -> Result<(f64, f64)> {
        let a = trial_environment(lat, master_seed, i as u64)?;
        let u = trial_function(lat, master_seed, i as u64)?;
        coercivity_sides(lat, &a, &u, p)
    });
    let sides = sides.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(InequalityReport::from_pairs("coercivity", c.value, sides))
}

// ---------------------------------------------------------------------------
// Leibniz-rule replacements

/// `sum_{k<n} x^k y^{n-1-k}`, so that `y^n - x^n = (y - x) * geometric(x, y, n)`.
fn geometric(x: f64, y: f64, n: u32) -> f64 {
    (0..n).map(|k| x.powi(k as i32) * y.powi((n - 1 - k) as i32)).sum()
}

/// `(y^n - x^n) / (y - x)`, free of cancellation when `x` and `y` share a sign.
fn power_quotient(x: f64, y: f64, n: u32) -> f64 {
    if x * y >= 0.0 || x == y {
        geometric(x, y, n)
    } else {
        (y.powi(n as i32) - x.powi(n as i32)) / (y - x)
    }
}

fn normalize(x: f64, y: f64) -> Option<(f64, f64)> {
    let s = x.abs().max(y.abs());
    if s == 0.0 || !s.is_finite() {
        None
    } else {
        Some((x / s, y / s))
    }
}

/// The Leibniz-type ratios for one pair `(F(x_b), F(y_b))`. Each is
/// homogeneous of degree zero and continuous across `F(x_b) = F(y_b)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeibnizRatio {
    /// `|grad F^{p+1}| / (|grad F| (F^p(x) + F^p(y)) / 2)`, `p` even.
    Comparability,
    /// `|grad F^{p+1}|^2 / (grad F grad F^{2p+1})`.
    Product,
    /// `|grad F^{2p+1}| / (|grad F| ((F^p(x) + F^p(y)) / 2)^2)`, `p` even.
    CorollaryUpper,
    /// `|grad F|^2 ((F^p(x) + F^p(y)) / 2)^2 / |grad F^{p+1}|^2`, `p` even.
    CorollaryLower,
}

impl LeibnizRatio {
    pub fn id(self) -> &'static str {
        match self {
            LeibnizRatio::Comparability => "leibniz-i",
            LeibnizRatio::Product => "leibniz-ii",
            LeibnizRatio::CorollaryUpper => "leibniz-corollary-1",
            LeibnizRatio::CorollaryLower => "leibniz-corollary-2",
        }
    }

    /// `None` when `F(x) = F(y) = 0`, where all sides vanish.
    pub fn eval(self, p: u32, fx: f64, fy: f64) -> Option<f64> {
        let (x, y) = normalize(fx, fy)?;
        let mean_p = 0.5 * (x.powi(p as i32) + y.powi(p as i32));
        let r = match self {
            LeibnizRatio::Comparability => power_quotient(x, y, p + 1).abs() / mean_p,
            LeibnizRatio::Product => {
                let q = power_quotient(x, y, p + 1);
                q * q / power_quotient(x, y, 2 * p + 1)
            }
            LeibnizRatio::CorollaryUpper => power_quotient(x, y, 2 * p + 1).abs() / (mean_p * mean_p),
            LeibnizRatio::CorollaryLower => {
                let q = power_quotient(x, y, p + 1);
                mean_p * mean_p / (q * q)
            }
        };
        Some(r)
    }
}

/// Sharp constants of the Leibniz-type inequalities for one `p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeibnizConstants {
    pub p: u32,
    /// `sup_{f >= 0} (1 - f^{p+1})^2 / ((1 - f)(1 - f^{2p+1}))`.
    pub product: f64,
    /// `sup` and `inf` of the comparability ratio (even `p` only).
    pub comparability_upper: Option<f64>,
    pub comparability_lower: Option<f64>,
    pub corollary_upper: Option<f64>,
    pub corollary_lower: Option<f64>,
}

impl LeibnizConstants {
    pub fn for_ratio(&self, r: LeibnizRatio) -> Option<f64> {
        match r {
            LeibnizRatio::Comparability => self.comparability_upper,
            LeibnizRatio::Product => Some(self.product),
            LeibnizRatio::CorollaryUpper => self.corollary_upper,
            LeibnizRatio::CorollaryLower => self.corollary_lower,
        }
    }
}

/// `f -> (1 - f^{p+1})^2 / ((1 - f)(1 - f^{2p+1}))` on `[0, 1]`; the map
/// `f -> 1/f` leaves it invariant, so this covers `f >= 0`.
pub fn product_ratio(p: u32, f: f64) -> f64 {
    let q = geometric(f, 1.0, p + 1);
    q * q / geometric(f, 1.0, 2 * p + 1)
}

/// Maximizes (or minimizes, with `sign = -1`) `g` over `[lo, hi]` by a dense
/// scan followed by golden-section refinement around the best grid points.
fn scan_extremum<G: Fn(f64) -> f64>(g: G, lo: f64, hi: f64, n: usize, sign: f64) -> f64 {
    let h = (hi - lo) / n as f64;
    let vals: Vec<f64> = (0..=n).map(|i| sign * g(lo + i as f64 * h)).collect();
    let mut best = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut idx: Vec<usize> = (0..=n).collect();
    idx.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    for &i in idx.iter().take(8) {
        let (mut a, mut b) = ((lo + (i as f64 - 1.0) * h).max(lo), (lo + (i as f64 + 1.0) * h).min(hi));
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        for _ in 0..200 {
            if sign * g(c) > sign * g(d) {
                b = d;
            } else {
                a = c;
            }
            c = b - inv_phi * (b - a);
            d = a + inv_phi * (b - a);
            if b - a < 1e-15 {
                break;
            }
        }
        best = best.max(sign * g(0.5 * (a + b)));
    }
    sign * best
}

/// Default scan density.
pub const ORACLE_GRID: usize = 1 << 16;

/// Sharp constants by one-dimensional scans. The two-variable ratios are
/// parametrized by the angle of `(F(x), F(y))` on the unit circle, which
/// covers every sign pattern.
pub fn constant_oracle(p: u32) -> Result<LeibnizConstants> {
    constant_oracle_with_grid(p, ORACLE_GRID)
}

pub fn constant_oracle_with_grid(p: u32, grid: usize) -> Result<LeibnizConstants> {
    if p < 1 {
        return Err(Error::Precondition("p must be >= 1".into()));
    }
    let product = scan_extremum(|f| product_ratio(p, f), 0.0, 1.0, grid, 1.0);
    let on_circle = |r: LeibnizRatio| move |theta: f64| r.eval(p, theta.cos(), theta.sin()).unwrap_or(0.0);
    let tau = 2.0 * std::f64::consts::PI;
    let even = p.is_multiple_of(2);
    let sup = |r: LeibnizRatio| even.then(|| scan_extremum(on_circle(r), 0.0, tau, grid, 1.0));
    let comparability_lower = even.then(|| scan_extremum(on_circle(LeibnizRatio::Comparability), 0.0, tau, grid, -1.0));
    Ok(LeibnizConstants {
        p,
        product,
        comparability_upper: sup(LeibnizRatio::Comparability),
        comparability_lower,
        corollary_upper: sup(LeibnizRatio::CorollaryUpper),
        corollary_lower: sup(LeibnizRatio::CorollaryLower),
    })
}

/// Random pair for Leibniz trials: log-uniform magnitudes over twelve decades
/// with random signs, mixed with atoms at `0` and `+-1` and near-diagonal
/// pairs.
pub fn leibniz_pair<R: Rng>(rng: &mut R) -> (f64, f64) {
    let draw = |rng: &mut R| -> f64 {
        let u: f64 = rng.random();
        if u < 0.1 {
            0.0
        } else if u < 0.2 {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        } else {
            let mag = 10f64.powf(rng.random_range(-6.0..6.0));
            if rng.random::<bool>() {
                mag
            } else {
                -mag
            }
        }
    };
    let x = draw(rng);
    if rng.random::<f64>() < 0.2 {
        let eps = 10f64.powf(rng.random_range(-12.0..-1.0)) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        (x, x * (1.0 + eps))
    } else {
        (x, draw(rng))
    }
}

/// Trials are split into fixed blocks with their own streams so the result
/// does not depend on the schedule.
const LEIBNIZ_BLOCK: usize = 1 << 14;

/// Checks each applicable ratio over `n` random pairs against the oracle
/// constants. The comparability lower bound is reported through the
/// corollary's second form (`1 / lower^2`).
pub fn leibniz_suite(p: u32, n: usize, master_seed: u64) -> Result<Vec<InequalityReport>> {
    let consts = constant_oracle(p)?;
    let ratios: Vec<LeibnizRatio> = [
        LeibnizRatio::Comparability,
        LeibnizRatio::Product,
        LeibnizRatio::CorollaryUpper,
        LeibnizRatio::CorollaryLower,
    ]
    .into_iter()
    .filter(|r| consts.for_ratio(*r).is_some())
    .collect();
    let blocks = n.div_ceil(LEIBNIZ_BLOCK);
    let partial = par::map_indexed(blocks, |blk| {
        let mut rng = seed::rng(seed::derive_seed(master_seed, blk as u64));
        let count = LEIBNIZ_BLOCK.min(n - blk * LEIBNIZ_BLOCK);
        let mut max = vec![0.0f64; ratios.len()];
        let mut degenerate = 0usize;
        for _ in 0..count {
            let (fx, fy) = leibniz_pair(&mut rng);
            if fx == fy {
                // every side carries a factor grad F
                degenerate += 1;
                continue;
            }
            for (m, r) in max.iter_mut().zip(&ratios) {
                match r.eval(p, fx, fy) {
                    Some(v) if v.is_nan() => *m = f64::NAN,
                    Some(v) => *m = m.max(v),
                    None => {}
                }
            }
        }
        (count, degenerate, max)
    });
    Ok(ratios
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let (trials, degenerate, max) = partial.iter().fold((0, 0, 0.0f64), |(t, d, m), (c, g, mx)| {
                (t + c, d + g, if mx[k].is_nan() || m.is_nan() { f64::NAN } else { m.max(mx[k]) })
            });
            InequalityReport::from_max(
                format!("{}-p{p}", r.id()),
                trials,
                degenerate,
                max,
                consts.for_ratio(*r).unwrap(),
            )
        })
        .collect())
}
