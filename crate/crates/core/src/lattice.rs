//! Periodic lattice `(Z/LZ)^d` with nearest-neighbour bonds and the discrete
//! gradient / divergence pair.
//!
//! Sites are indexed row-major (the last coordinate varies fastest). A bond is
//! the pair `(x, i)` and stands for `{x, x + e_i mod L}`; its bond index is
//! `x * d + i`. For `L = 2` the bonds `(x, i)` and `(x + e_i, i)` join the same
//! two sites and are kept as two distinct bonds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimension and side length; the identity of a lattice for field checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub dim: usize,
    pub side: usize,
}

impl Shape {
    pub fn site_count(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    pub fn bond_count(&self) -> usize {
        self.dim * self.site_count()
    }
}

/// Nearest-neighbour bond `{site, site + e_axis}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bond {
    pub site: usize,
    pub axis: usize,
}

#[derive(Clone, Debug)]
pub struct TorusLattice {
    shape: Shape,
    strides: Vec<usize>,
    forward: Vec<u32>,
    backward: Vec<u32>,
}

impl TorusLattice {
    pub fn new(dim: usize, side: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidLattice(format!("dimension must be >= 2, got {dim}")));
        }
        if side < 2 {
            return Err(Error::InvalidLattice(format!("side length must be >= 2, got {side}")));
        }
        let sites = (side as u128).checked_pow(dim as u32).unwrap_or(u128::MAX);
        if sites * dim as u128 > u32::MAX as u128 {
            return Err(Error::InvalidLattice(format!("L={side}, d={dim} is too large")));
        }
        let shape = Shape { dim, side };
        let n = shape.site_count();
        let mut strides = vec![1usize; dim];
        for i in (0..dim.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * side;
        }

        let mut forward = vec![0u32; n * dim];
        let mut backward = vec![0u32; n * dim];
        for site in 0..n {
            for (axis, &stride) in strides.iter().enumerate() {
                let c = (site / stride) % side;
                let up = if c + 1 == side { site - c * stride } else { site + stride };
                let down = if c == 0 { site + (side - 1) * stride } else { site - stride };
                forward[site * dim + axis] = up as u32;
                backward[site * dim + axis] = down as u32;
            }
        }
        Ok(Self { shape, strides, forward, backward })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.dim
    }

    pub fn side(&self) -> usize {
        self.shape.side
    }

    pub fn site_count(&self) -> usize {
        self.shape.site_count()
    }

    pub fn bond_count(&self) -> usize {
        self.shape.bond_count()
    }

    pub fn origin(&self) -> usize {
        0
    }

    pub fn coords(&self, site: usize) -> Vec<usize> {
        self.strides.iter().map(|&s| (site / s) % self.shape.side).collect()
    }

    /// Site at integer coordinates, reduced modulo `L`.
    pub fn site_at(&self, coords: &[i64]) -> usize {
        debug_assert_eq!(coords.len(), self.dim());
        let l = self.shape.side as i64;
        coords.iter().zip(&self.strides).map(|(&c, &s)| c.rem_euclid(l) as usize * s).sum()
    }

    #[inline]
    pub fn forward(&self, site: usize, axis: usize) -> usize {
        self.forward[site * self.shape.dim + axis] as usize
    }

    #[inline]
    pub fn backward(&self, site: usize, axis: usize) -> usize {
        self.backward[site * self.shape.dim + axis] as usize
    }

    /// `x + z` on the torus.
    pub fn translate(&self, site: usize, z: &[i64]) -> usize {
        let c: Vec<i64> = self.coords(site).into_iter().zip(z).map(|(c, &dz)| c as i64 + dz).collect();
        self.site_at(&c)
    }

    /// Coordinates of `site` reduced to the minimal image around the origin,
    /// each in `(-L/2, L/2]`.
    pub fn min_image(&self, site: usize) -> Vec<i64> {
        let l = self.shape.side as i64;
        self.coords(site)
            .into_iter()
            .map(|c| {
                let c = c as i64;
                if 2 * c > l {
                    c - l
                } else {
                    c
                }
            })
            .collect()
    }

    /// Torus-minimal sup-norm distance of `site` from the origin.
    pub fn linf_norm(&self, site: usize) -> usize {
        self.min_image(site).into_iter().map(|c| c.unsigned_abs() as usize).max().unwrap_or(0)
    }

    #[inline]
    pub fn bond_index(&self, b: Bond) -> usize {
        b.site * self.shape.dim + b.axis
    }

    #[inline]
    pub fn bond_at(&self, index: usize) -> Bond {
        Bond { site: index / self.shape.dim, axis: index % self.shape.dim }
    }

    pub fn bonds(&self) -> impl Iterator<Item = Bond> + '_ {
        (0..self.bond_count()).map(move |i| self.bond_at(i))
    }

    /// `(x_b, y_b)` with `y_b - x_b = e_axis mod L`.
    #[inline]
    pub fn endpoints(&self, b: Bond) -> (usize, usize) {
        (b.site, self.forward(b.site, b.axis))
    }

    pub fn zeros(&self) -> ScalarField {
        ScalarField { shape: self.shape, values: vec![0.0; self.site_count()] }
    }

    pub fn scalar_field(&self, values: Vec<f64>) -> Result<ScalarField> {
        if values.len() != self.site_count() {
            return Err(Error::Precondition(format!(
                "scalar field has {} values, lattice has {} sites",
                values.len(),
                self.site_count()
            )));
        }
        Ok(ScalarField { shape: self.shape, values })
    }

    pub fn bond_field(&self, values: Vec<f64>) -> Result<BondField> {
        if values.len() != self.bond_count() {
            return Err(Error::Precondition(format!(
                "bond field has {} values, lattice has {} bonds",
                values.len(),
                self.bond_count()
            )));
        }
        Ok(BondField { shape: self.shape, values })
    }

    pub fn indicator(&self, site: usize) -> ScalarField {
        let mut u = self.zeros();
        u.values[site] = 1.0;
        u
    }

    pub(crate) fn check_shape(&self, found: Shape) -> Result<()> {
        if found != self.shape {
            return Err(Error::ShapeMismatch { expected: self.shape, found });
        }
        Ok(())
    }

    /// `grad u (b) = u(y_b) - u(x_b)`.
    pub fn gradient(&self, u: &ScalarField) -> Result<BondField> {
        self.check_shape(u.shape)?;
        let d = self.dim();
        let mut out = vec![0.0; self.bond_count()];
        for (x, chunk) in out.chunks_mut(d).enumerate() {
            let ux = u.values[x];
            for (axis, g) in chunk.iter_mut().enumerate() {
                *g = u.values[self.forward(x, axis)] - ux;
            }
        }
        Ok(BondField { shape: self.shape, values: out })
    }

    /// Adjoint of [`gradient`](Self::gradient):
    /// `div F (x) = sum_i F({x - e_i, x}) - F({x, x + e_i})`.
    pub fn divergence(&self, f: &BondField) -> Result<ScalarField> {
        self.check_shape(f.shape)?;
        let d = self.dim();
        let mut out = vec![0.0; self.site_count()];
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for axis in 0..d {
                let back = self.backward(x, axis);
                acc += f.values[back * d + axis] - f.values[x * d + axis];
            }
            *o = acc;
        }
        Ok(ScalarField { shape: self.shape, values: out })
    }

    /// The constant vector `e` read as a bond field, `e(b) = e . (y_b - x_b)`.
    pub fn direction_field(&self, e: &DirectionVector) -> Result<BondField> {
        if e.dim() != self.dim() {
            return Err(Error::InvalidDirection(format!(
                "direction has {} components, lattice dimension is {}",
                e.dim(),
                self.dim()
            )));
        }
        let values = (0..self.bond_count()).map(|i| e.component(i % self.dim())).collect();
        Ok(BondField { shape: self.shape, values })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    shape: Shape,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        crate::stats::pairwise_sum(&self.values)
    }

    pub fn dot(&self, other: &ScalarField) -> f64 {
        crate::par::dot(&self.values, &other.values)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }
}

impl std::ops::Index<usize> for ScalarField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BondField {
    shape: Shape,
    pub values: Vec<f64>,
}

impl BondField {
    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn at(&self, b: Bond) -> f64 {
        self.values[b.site * self.shape.dim + b.axis]
    }

    pub fn dot(&self, other: &BondField) -> f64 {
        crate::par::dot(&self.values, &other.values)
    }
}

/// Unit vector `e` in `R^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionVector(Vec<f64>);

impl DirectionVector {
    pub const UNIT_TOLERANCE: f64 = 1e-12;

    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() || components.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidDirection(format!("{components:?}")));
        }
        let norm = components.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > Self::UNIT_TOLERANCE {
            return Err(Error::InvalidDirection(format!("|e| = {norm}, expected 1")));
        }
        Ok(Self(components))
    }

    /// Rescales `v` to unit length.
    pub fn normalized(v: Vec<f64>) -> Result<Self> {
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidDirection(format!("cannot normalize {v:?}")));
        }
        Self::new(v.into_iter().map(|c| c / norm).collect())
    }

    /// Coordinate vector `e_{axis}` (zero-based axis).
    pub fn axis(dim: usize, axis: usize) -> Result<Self> {
        if axis >= dim {
            return Err(Error::InvalidDirection(format!("axis {axis} >= dimension {dim}")));
        }
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        Ok(Self(v))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn component(&self, axis: usize) -> f64 {
        self.0[axis]
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }
}
