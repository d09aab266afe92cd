//! Random conductance fields: sampling laws, shifts and single-bond edits.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Bond, BondField, Shape, TorusLattice};
use crate::seed;

/// Conductances `a: bonds -> [0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConductanceField(BondField);

impl ConductanceField {
    pub fn new(field: BondField) -> Result<Self> {
        if let Some(&bad) = field.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::ConductanceOutOfRange(bad));
        }
        Ok(Self(field))
    }

    pub fn constant(lat: &TorusLattice, c: f64) -> Result<Self> {
        Self::new(lat.bond_field(vec![c; lat.bond_count()])?)
    }

    pub fn shape(&self) -> Shape {
        self.0.shape()
    }

    #[inline]
    pub fn get(&self, b: Bond) -> f64 {
        self.0.at(b)
    }

    pub fn values(&self) -> &[f64] {
        &self.0.values
    }

    pub fn as_bond_field(&self) -> &BondField {
        &self.0
    }

    /// `a^{b,s}`: agrees with `self` except on `b`, where it equals `s`.
    pub fn set_bond(&self, b: Bond, s: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::ConductanceOutOfRange(s));
        }
        let mut out = self.clone();
        let d = self.shape().dim;
        out.0.values[b.site * d + b.axis] = s;
        Ok(out)
    }

    /// In-place variant of [`set_bond`](Self::set_bond); returns the old value.
    pub fn replace_bond(&mut self, b: Bond, s: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::ConductanceOutOfRange(s));
        }
        let d = self.shape().dim;
        Ok(std::mem::replace(&mut self.0.values[b.site * d + b.axis], s))
    }

    /// The shifted environment `a(. + z)`: bond `(x, i)` of the result carries
    /// the value of bond `(x + z, i)`.
    pub fn shift(&self, lat: &TorusLattice, z: &[i64]) -> Result<Self> {
        lat.check_shape(self.shape())?;
        if z.len() != lat.dim() {
            return Err(Error::Precondition(format!("shift has {} components, expected {}", z.len(), lat.dim())));
        }
        let d = lat.dim();
        let mut values = vec![0.0; lat.bond_count()];
        for x in 0..lat.site_count() {
            let src = lat.translate(x, z);
            values[x * d..(x + 1) * d].copy_from_slice(&self.0.values[src * d..(src + 1) * d]);
        }
        Ok(Self(lat.bond_field(values)?))
    }
}

/// Law of the random environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnsembleSpec {
    /// i.i.d. Bernoulli(`lambda`) bonds, except that every bond parallel to
    /// `open_axis` is open (`a = 1`).
    ModifiedBernoulli {
        lambda: f64,
        open_axis: usize,
    },
    IidBernoulli {
        lambda: f64,
    },
    IidUniform {
        lo: f64,
        hi: f64,
    },
    Deterministic {
        value: f64,
    },
}

/// Descriptor of the bound `Lambda(p)` on neighbour-distance moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MomentBound {
    /// `(sum_{k>=1} (2k+1)^p (1-lambda)^{2(k-1)})^{1/p}`, from U-shaped detours
    /// through the open axis.
    UPathSeries { lambda: f64 },
    /// Deterministic bound on the deleted-bond distance.
    Constant { value: f64 },
    /// No bound is known for this law.
    Unknown,
}

impl MomentBound {
    pub fn value(&self, p: f64) -> Option<f64> {
        match *self {
            MomentBound::UPathSeries { lambda } => Some(u_path_series(lambda, p).powf(1.0 / p)),
            MomentBound::Constant { value } => Some(value),
            MomentBound::Unknown => None,
        }
    }
}

impl EnsembleSpec {
    pub fn modified_bernoulli(lambda: f64) -> Self {
        EnsembleSpec::ModifiedBernoulli { lambda, open_axis: 0 }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidEnsemble(msg));
        match *self {
            EnsembleSpec::ModifiedBernoulli { lambda, open_axis } => {
                if !(lambda > 0.0 && lambda <= 1.0) {
                    return bad(format!("lambda must lie in (0, 1], got {lambda}"));
                }
                if open_axis >= dim {
                    return bad(format!("open axis {open_axis} >= dimension {dim}"));
                }
            }
            EnsembleSpec::IidBernoulli { lambda } => {
                if !(0.0..=1.0).contains(&lambda) {
                    return bad(format!("lambda must lie in [0, 1], got {lambda}"));
                }
            }
            EnsembleSpec::IidUniform { lo, hi } => {
                if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                    return bad(format!("need 0 <= lo <= hi <= 1, got [{lo}, {hi}]"));
                }
            }
            EnsembleSpec::Deterministic { value } => {
                if !(0.0..=1.0).contains(&value) {
                    return bad(format!("value must lie in [0, 1], got {value}"));
                }
            }
        }
        Ok(())
    }

    /// Spectral-gap constant. Every supported law is a product measure.
    pub fn rho(&self) -> f64 {
        1.0
    }

    pub fn is_product(&self) -> bool {
        true
    }

    pub fn moment_bound(&self) -> MomentBound {
        match *self {
            EnsembleSpec::ModifiedBernoulli { lambda, .. } => MomentBound::UPathSeries { lambda },
            // a three-bond detour around the deleted bond costs at most 3 / lo
            EnsembleSpec::IidUniform { lo, .. } if lo > 0.0 => MomentBound::Constant { value: 3.0 / lo },
            EnsembleSpec::Deterministic { value } if value > 0.0 => MomentBound::Constant { value: 3.0 / value },
            _ => MomentBound::Unknown,
        }
    }

    /// Single-bond marginal at `b`; conditioning on the other bonds is
    /// trivial because all laws are products.
    pub fn single_bond_law(&self, b: Bond) -> SingleBondLaw {
        match *self {
            EnsembleSpec::ModifiedBernoulli { lambda, open_axis } => {
                if b.axis == open_axis {
                    SingleBondLaw::PointMass(1.0)
                } else {
                    SingleBondLaw::Bernoulli(lambda)
                }
            }
            EnsembleSpec::IidBernoulli { lambda } => SingleBondLaw::Bernoulli(lambda),
            EnsembleSpec::IidUniform { lo, hi } => SingleBondLaw::Uniform { lo, hi },
            EnsembleSpec::Deterministic { value } => SingleBondLaw::PointMass(value),
        }
    }

    /// Draws a field; identical `(spec, lattice, seed)` give identical bits.
    pub fn sample(&self, lat: &TorusLattice, seed: u64) -> Result<ConductanceField> {
        self.validate(lat.dim())?;
        let mut rng = seed::rng(seed);
        let d = lat.dim();
        let mut values = vec![0.0; lat.bond_count()];
        match *self {
            EnsembleSpec::ModifiedBernoulli { lambda, open_axis } => {
                for (i, v) in values.iter_mut().enumerate() {
                    *v = if i % d == open_axis || rng.random::<f64>() < lambda { 1.0 } else { 0.0 };
                }
            }
            EnsembleSpec::IidBernoulli { lambda } => {
                for v in values.iter_mut() {
                    *v = if rng.random::<f64>() < lambda { 1.0 } else { 0.0 };
                }
            }
            EnsembleSpec::IidUniform { lo, hi } => {
                for v in values.iter_mut() {
                    *v = (lo + (hi - lo) * rng.random::<f64>()).min(hi);
                }
            }
            EnsembleSpec::Deterministic { value } => values.fill(value),
        }
        ConductanceField::new(lat.bond_field(values)?)
    }
}

/// Law of one conductance given all others.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SingleBondLaw {
    PointMass(f64),
    Bernoulli(f64),
    Uniform { lo: f64, hi: f64 },
}

impl SingleBondLaw {
    /// Node count of the Gauss-Legendre rule used for continuous laws.
    pub const QUADRATURE_NODES: usize = 16;

    /// Support points with their probabilities. Exact for the discrete laws,
    /// Gauss-Legendre for the uniform law.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        match *self {
            SingleBondLaw::PointMass(c) => vec![(c, 1.0)],
            SingleBondLaw::Bernoulli(lambda) => {
                let mut out = Vec::with_capacity(2);
                if lambda > 0.0 {
                    out.push((1.0, lambda));
                }
                if lambda < 1.0 {
                    out.push((0.0, 1.0 - lambda));
                }
                out
            }
            SingleBondLaw::Uniform { lo, hi } => {
                if hi == lo {
                    return vec![(lo, 1.0)];
                }
                let half = 0.5 * (hi - lo);
                let mid = 0.5 * (hi + lo);
                gauss_legendre(Self::QUADRATURE_NODES)
                    .into_iter()
                    // weights sum to 2 on [-1, 1]; the density contributes 1 / (hi - lo)
                    .map(|(x, w)| (mid + half * x, 0.5 * w))
                    .collect()
            }
        }
    }

    /// `E[f(s)]` for `s` drawn from this law.
    pub fn expect<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes().into_iter().map(|(s, w)| w * f(s)).sum()
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// `sum_{k>=1} (2k+1)^p (1-lambda)^{2(k-1)}`, summed until the geometric tail
/// bound drops below machine precision relative to the partial sum.
pub fn u_path_series(lambda: f64, p: f64) -> f64 {
    let r = (1.0 - lambda) * (1.0 - lambda);
    let mut sum = 0.0;
    for k in 1u64.. {
        let term = (2.0 * k as f64 + 1.0).powf(p) * r.powi((k - 1) as i32);
        sum += term;
        if r == 0.0 {
            break;
        }
        // ratio of consecutive terms, decreasing in k
        let ratio = ((2.0 * k as f64 + 3.0) / (2.0 * k as f64 + 1.0)).powf(p) * r;
        if ratio < 1.0 && term * ratio / (1.0 - ratio) < 1e-17 * sum {
            break;
        }
        if k > 100_000_000 {
            break;
        }
    }
    sum
}
