//! Chemical distance with edge cost `1/a(b)`, the weights `omega` and
//! `omega_0`, box averages of the weights and dyadic bond annuli.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::ensembles::ConductanceField;
use crate::error::{Error, Result};
use crate::lattice::{Bond, TorusLattice};

/// Nonnegative real or `+inf`, with `1/inf = 0` and `1/0 = inf`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ExtReal(f64);

impl ExtReal {
    pub const INFINITY: ExtReal = ExtReal(f64::INFINITY);
    pub const ZERO: ExtReal = ExtReal(0.0);

    pub fn new(v: f64) -> Self {
        debug_assert!(v >= 0.0, "ExtReal must be nonnegative, got {v}");
        ExtReal(v)
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn recip(self) -> ExtReal {
        if self.0 == 0.0 {
            ExtReal::INFINITY
        } else {
            ExtReal(1.0 / self.0)
        }
    }

    pub fn powf(self, p: f64) -> ExtReal {
        ExtReal(self.0.powf(p))
    }

    /// `self^{-p}` with `inf^{-p} = 0`.
    pub fn inv_pow(self, p: f64) -> f64 {
        if self.0.is_infinite() {
            0.0
        } else {
            self.0.powf(-p)
        }
    }
}

impl std::ops::Add for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: ExtReal) -> ExtReal {
        ExtReal(self.0 + rhs.0)
    }
}

impl std::fmt::Display for ExtReal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    cost: f64,
    site: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on cost; ties broken by site for a deterministic order
        other.cost.total_cmp(&self.cost).then_with(|| other.site.cmp(&self.site))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Positive-conductance edges at `x`: `(neighbour, bond, +1 | -1 step)`.
fn edges<'a>(
    lat: &'a TorusLattice,
    a: &'a ConductanceField,
    x: usize,
) -> impl Iterator<Item = (usize, Bond, i64)> + 'a {
    (0..lat.dim()).flat_map(move |axis| {
        let fwd = Bond { site: x, axis };
        let back_site = lat.backward(x, axis);
        let bwd = Bond { site: back_site, axis };
        [(lat.forward(x, axis), fwd, 1i64), (back_site, bwd, -1i64)]
            .into_iter()
            .filter(move |(_, b, _)| a.get(*b) > 0.0)
    })
}

/// A minimizing path and whether it leaves the fundamental box around its
/// source (finite-size contamination of the infinite-lattice distance).
#[derive(Clone, Debug, PartialEq)]
pub struct PathInfo {
    pub distance: ExtReal,
    pub bonds: Vec<Bond>,
    pub wraps: bool,
}

struct Search {
    dist: HashMap<usize, f64>,
    parent: HashMap<usize, (usize, Bond, usize, i64)>,
}

/// Dijkstra from `src` until `dst` is settled or the frontier exceeds `cutoff`.
fn pair_search(
    lat: &TorusLattice,
    a: &ConductanceField,
    src: usize,
    dst: usize,
    excluded: Option<Bond>,
    cutoff: f64,
) -> (Option<f64>, Search) {
    let mut s = Search { dist: HashMap::new(), parent: HashMap::new() };
    let mut heap = BinaryHeap::new();
    s.dist.insert(src, 0.0);
    heap.push(Entry { cost: 0.0, site: src });
    while let Some(Entry { cost, site }) = heap.pop() {
        if cost > s.dist[&site] {
            continue;
        }
        if site == dst {
            return (Some(cost), s);
        }
        if cost >= cutoff {
            break;
        }
        for (next, bond, step) in edges(lat, a, site) {
            if Some(bond) == excluded {
                continue;
            }
            let nc = cost + 1.0 / a.get(bond);
            if s.dist.get(&next).is_none_or(|&old| nc < old) {
                s.dist.insert(next, nc);
                s.parent.insert(next, (site, bond, bond.axis, step));
                heap.push(Entry { cost: nc, site: next });
            }
        }
    }
    (None, s)
}

/// `dist_a(x, y)`: infimum over paths of `sum 1/a(b)`, on the torus graph.
pub fn chemical_distance(lat: &TorusLattice, a: &ConductanceField, x: usize, y: usize) -> ExtReal {
    match pair_search(lat, a, x, y, None, f64::INFINITY).0 {
        Some(d) => ExtReal::new(d),
        None => ExtReal::INFINITY,
    }
}

/// Shortest path from `x` to `y` with its bonds, or `None` if disconnected.
pub fn shortest_path(lat: &TorusLattice, a: &ConductanceField, x: usize, y: usize) -> Option<PathInfo> {
    shortest_path_excluding(lat, a, x, y, None)
}

fn shortest_path_excluding(
    lat: &TorusLattice,
    a: &ConductanceField,
    x: usize,
    y: usize,
    excluded: Option<Bond>,
) -> Option<PathInfo> {
    let (found, search) = pair_search(lat, a, x, y, excluded, f64::INFINITY);
    let distance = found?;
    let mut steps = Vec::new();
    let mut cur = y;
    while cur != x {
        let (prev, bond, axis, step) = search.parent[&cur];
        steps.push((bond, axis, step));
        cur = prev;
    }
    steps.reverse();

    let l = lat.side() as i64;
    let mut offset = vec![0i64; lat.dim()];
    let mut wraps = false;
    for &(_, axis, step) in &steps {
        offset[axis] += step;
        if 2 * offset[axis].abs() >= l {
            wraps = true;
        }
    }
    // the lifted endpoint must be the minimal image of y relative to x
    let rel: Vec<i64> = lat.coords(y).into_iter().zip(lat.coords(x)).map(|(cy, cx)| cy as i64 - cx as i64).collect();
    let target = lat.min_image(lat.site_at(&rel));
    if offset != target {
        wraps = true;
    }
    Some(PathInfo { distance: ExtReal::new(distance), bonds: steps.into_iter().map(|s| s.0).collect(), wraps })
}

/// Distances from `src` to every site.
pub fn distances_from(lat: &TorusLattice, a: &ConductanceField, src: usize) -> Vec<ExtReal> {
    let mut dist = vec![f64::INFINITY; lat.site_count()];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(Entry { cost: 0.0, site: src });
    while let Some(Entry { cost, site }) = heap.pop() {
        if cost > dist[site] {
            continue;
        }
        for (next, bond, _) in edges(lat, a, site) {
            let nc = cost + 1.0 / a.get(bond);
            if nc < dist[next] {
                dist[next] = nc;
                heap.push(Entry { cost: nc, site: next });
            }
        }
    }
    dist.into_iter().map(ExtReal::new).collect()
}

/// Distance between the endpoints of `b`, in `a` or (when `deleted`) in
/// `a^{b,0}`.
pub fn bond_distance(lat: &TorusLattice, a: &ConductanceField, b: Bond, deleted: bool) -> ExtReal {
    let ab = a.get(b);
    let direct = if deleted || ab == 0.0 { f64::INFINITY } else { 1.0 / ab };
    // with L >= 3 every other path has at least three bonds of cost >= 1
    if lat.side() >= 3 && direct <= 3.0 {
        return ExtReal::new(direct);
    }
    let (x, y) = lat.endpoints(b);
    match pair_search(lat, a, x, y, Some(b), direct).0 {
        Some(d) => ExtReal::new(d.min(direct)),
        None => ExtReal::new(direct),
    }
}

/// Shortest detour between the endpoints of `b` in `a^{b,0}`.
pub fn deleted_bond_path(lat: &TorusLattice, a: &ConductanceField, b: Bond) -> Option<PathInfo> {
    let (x, y) = lat.endpoints(b);
    shortest_path_excluding(lat, a, x, y, Some(b))
}

/// `omega(a, b) = dist_a(x_b, y_b)^{d+2}`.
pub fn weight_omega(lat: &TorusLattice, a: &ConductanceField, b: Bond) -> ExtReal {
    bond_distance(lat, a, b, false).powf((lat.dim() + 2) as f64)
}

/// `omega_0(a, b) = omega(a^{b,0}, b)`.
pub fn weight_omega0(lat: &TorusLattice, a: &ConductanceField, b: Bond) -> ExtReal {
    bond_distance(lat, a, b, true).powf((lat.dim() + 2) as f64)
}

/// `(omega, omega_0)` for every bond, in bond-index order.
pub fn weight_map(lat: &TorusLattice, a: &ConductanceField) -> (Vec<ExtReal>, Vec<ExtReal>) {
    let pairs = crate::par::map_indexed(lat.bond_count(), |i| {
        let b = lat.bond_at(i);
        (weight_omega(lat, a, b), weight_omega0(lat, a, b))
    });
    pairs.into_iter().unzip()
}

/// Site cube `B_R(x0)` and bond cube `Q_R(x0)` on the torus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub center: usize,
    pub radius: f64,
}

impl BoxSpec {
    pub fn sites(&self, lat: &TorusLattice) -> Vec<usize> {
        let r = self.radius.floor().max(0.0) as i64;
        let d = lat.dim();
        let width = (2 * r + 1) as usize;
        let mut out = Vec::with_capacity(width.pow(d as u32));
        let mut offset = vec![-r; d];
        loop {
            out.push(lat.translate(self.center, &offset));
            let mut axis = 0;
            loop {
                if axis == d {
                    out.sort_unstable();
                    out.dedup();
                    return out;
                }
                offset[axis] += 1;
                if offset[axis] <= r {
                    break;
                }
                offset[axis] = -r;
                axis += 1;
            }
        }
    }

    pub fn bonds(&self, lat: &TorusLattice) -> Vec<Bond> {
        self.sites(lat).into_iter().flat_map(|site| (0..lat.dim()).map(move |axis| Bond { site, axis })).collect()
    }
}

/// `(mean of w^q)^{1/q}`, infinite as soon as one weight is.
pub fn power_mean(weights: impl IntoIterator<Item = ExtReal>, q: f64) -> ExtReal {
    let mut terms = Vec::new();
    for w in weights {
        if !w.is_finite() {
            return ExtReal::INFINITY;
        }
        terms.push(w.value().powf(q));
    }
    if terms.is_empty() {
        return ExtReal::ZERO;
    }
    ExtReal::new(crate::stats::mean(&terms).powf(1.0 / q))
}

/// `C(a, Q_R(x0), q)`: the `q`-power mean of `omega` over the bond cube.
pub fn spatial_average(lat: &TorusLattice, a: &ConductanceField, bx: &BoxSpec, q: f64) -> Result<ExtReal> {
    if q < 1.0 {
        return Err(Error::Precondition(format!("spatial average needs q >= 1, got {q}")));
    }
    let bonds = bx.bonds(lat);
    if bonds.is_empty() {
        return Err(Error::Precondition("empty bond box".into()));
    }
    Ok(power_mean(bonds.into_iter().map(|b| weight_omega(lat, a, b)), q))
}

/// Dyadic bond shells `A_0 = Q_{R0}(0)`, `A_k = Q_{2^k R0}(0) \ Q_{2^{k-1} R0}(0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnuliFamily {
    pub r0: f64,
    pub k_max: usize,
    pub shells: Vec<Vec<Bond>>,
}

impl AnnuliFamily {
    pub fn outer_radius(&self, k: usize) -> f64 {
        self.r0 * 2f64.powi(k as i32)
    }
}

pub fn dyadic_annuli(lat: &TorusLattice, r0: f64, k_max: usize) -> Result<AnnuliFamily> {
    if !(r0 > 1.0) {
        return Err(Error::Precondition(format!("annuli need R0 > 1, got {r0}")));
    }
    let outer = 2f64.powi(k_max as i32 + 1) * r0;
    if outer > lat.side() as f64 / 2.0 {
        return Err(Error::Precondition(format!(
            "2^(K+1) R0 = {outer} exceeds L/2 = {}; use fewer shells or a larger lattice",
            lat.side() as f64 / 2.0
        )));
    }
    let radii: Vec<usize> = (0..=k_max).map(|k| (r0 * 2f64.powi(k as i32)).floor() as usize).collect();
    let mut shells = vec![Vec::new(); k_max + 1];
    for site in 0..lat.site_count() {
        let n = lat.linf_norm(site);
        if let Some(k) = radii.iter().position(|&r| n <= r) {
            shells[k].extend((0..lat.dim()).map(|axis| Bond { site, axis }));
        }
    }
    Ok(AnnuliFamily { r0, k_max, shells })
}
