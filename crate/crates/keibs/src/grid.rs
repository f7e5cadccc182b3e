//! Dyadic grids in one dimension, full grids, classical sparse grids, and
//! truncated sparse grids on the open unit cube.
//!
//! A level-`l` dyadic grid holds the points `i * 2^-l` for `i = 1..2^l - 1`.
//! Every point of (0,1) that appears in such a grid has a unique canonical
//! address `(l, i)` with `i` odd: the level at which the point first appears.
//! Classical sparse grids are unions of anisotropic full grids whose level
//! multi-indices satisfy `|l| <= tau + d - 1`, and a truncated sparse grid is
//! a complete sparse grid plus a subset of the next level's increment.
//!
//! All constructors order points canonically: ascending level-sum `|l|`, then
//! lexicographic on the level multi-index, then lexicographic on the position
//! multi-index. Matrices built elsewhere in the crate index into that order.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest dyadic level at which coordinates are detected and represented.
/// `i * 2^-l` with `l <= MAX_LEVEL` and odd `i` is exactly representable in
/// an f64, so equality on addresses is exact.
pub const MAX_LEVEL: u32 = 48;

/// Canonical address of a one-dimensional dyadic point: `coordinate = i * 2^-l`
/// with `i` odd, so `(l, i)` is the unique level at which the point appears.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicIndex {
    level: u32,
    position: u64,
}

impl DyadicIndex {
    /// Canonical address for `position * 2^-level`. Even positions are
    /// reduced to the coarser level where the point first appears.
    pub fn new(level: u32, position: u64) -> Result<Self> {
        if level == 0 || level > MAX_LEVEL {
            return Err(Error::invalid(format!(
                "dyadic level must be in 1..={MAX_LEVEL}, got {level}"
            )));
        }
        if position == 0 || position >= (1u64 << level) {
            return Err(Error::invalid(format!(
                "dyadic position must satisfy 1 <= i <= 2^{level} - 1, got {position}"
            )));
        }
        let mut level = level;
        let mut position = position;
        while position % 2 == 0 {
            position /= 2;
            level -= 1;
        }
        Ok(DyadicIndex { level, position })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Odd position index within the level-`l` grid.
    pub fn position(&self) -> u64 {
        self.position
    }

    /// The coordinate `i * 2^-l`, exact in f64 for all levels handled here.
    pub fn coordinate(&self) -> f64 {
        (self.position as f64) * (2.0f64).powi(-(self.level as i32))
    }

    /// Recover the canonical address of a coordinate, if it is a dyadic
    /// rational of level at most [`MAX_LEVEL`].
    pub fn from_coordinate(x: f64) -> Option<Self> {
        if !(x > 0.0 && x < 1.0) {
            return None;
        }
        let mut scaled = x;
        for level in 1..=MAX_LEVEL {
            scaled *= 2.0;
            if scaled.fract() == 0.0 {
                let position = scaled as u64;
                // The first level at which the scaled value is an integer
                // yields an odd position, hence the canonical address.
                return DyadicIndex::new(level, position).ok();
            }
        }
        None
    }
}

/// A `d`-tuple of per-dimension levels `l = (l_1, ..., l_d)`, all >= 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LevelMultiIndex {
    levels: Vec<u32>,
}

impl LevelMultiIndex {
    pub fn new(levels: Vec<u32>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::invalid("level multi-index must have dimension >= 1"));
        }
        if levels.iter().any(|&l| l == 0 || l > MAX_LEVEL) {
            return Err(Error::invalid(format!(
                "every level must be in 1..={MAX_LEVEL}, got {levels:?}"
            )));
        }
        Ok(LevelMultiIndex { levels })
    }

    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    /// The order `|l| = l_1 + ... + l_d`.
    pub fn order(&self) -> u32 {
        self.levels.iter().sum()
    }
}

impl fmt::Display for LevelMultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.levels)
    }
}

/// A point of the open unit cube, carrying its exact dyadic address whenever
/// the coordinates are dyadic rationals. Equality and hashing go through the
/// address (or the exact bit pattern for non-dyadic query points), never
/// through an epsilon comparison.
#[derive(Debug, Clone)]
pub struct GridPoint {
    coords: Vec<f64>,
    dyadic: Option<Vec<DyadicIndex>>,
}

impl GridPoint {
    pub fn from_dyadic(dyadic: Vec<DyadicIndex>) -> Result<Self> {
        if dyadic.is_empty() {
            return Err(Error::invalid("grid point must have dimension >= 1"));
        }
        let coords = dyadic.iter().map(|d| d.coordinate()).collect();
        Ok(GridPoint {
            coords,
            dyadic: Some(dyadic),
        })
    }

    /// Build a point from raw coordinates in (0,1)^d, detecting an exact
    /// dyadic address when one exists.
    pub fn from_coords(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("grid point must have dimension >= 1"));
        }
        if coords.iter().any(|&x| !(x > 0.0 && x < 1.0) || !x.is_finite()) {
            return Err(Error::invalid(format!(
                "coordinates must lie in the open unit interval, got {coords:?}"
            )));
        }
        let detected: Option<Vec<DyadicIndex>> = coords
            .iter()
            .map(|&x| DyadicIndex::from_coordinate(x))
            .collect();
        Ok(GridPoint {
            coords,
            dyadic: detected,
        })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dyadic(&self) -> Option<&[DyadicIndex]> {
        self.dyadic.as_deref()
    }

    /// Level multi-index of a dyadic point.
    pub fn level_multi_index(&self) -> Option<LevelMultiIndex> {
        self.dyadic
            .as_ref()
            .map(|d| LevelMultiIndex::new(d.iter().map(|i| i.level()).collect()).expect("valid"))
    }

    /// Sum of per-dimension canonical levels; `None` for non-dyadic points.
    pub fn level_sum(&self) -> Option<u32> {
        self.dyadic
            .as_ref()
            .map(|d| d.iter().map(|i| i.level()).sum())
    }
}

impl PartialEq for GridPoint {
    fn eq(&self, other: &Self) -> bool {
        match (&self.dyadic, &other.dyadic) {
            (Some(a), Some(b)) => a == b,
            _ => {
                self.coords.len() == other.coords.len()
                    && self
                        .coords
                        .iter()
                        .zip(&other.coords)
                        .all(|(a, b)| a.to_bits() == b.to_bits())
            }
        }
    }
}

impl Eq for GridPoint {}

impl std::hash::Hash for GridPoint {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        match &self.dyadic {
            Some(d) => d.hash(state),
            None => {
                for x in &self.coords {
                    x.to_bits().hash(state);
                }
            }
        }
    }
}

impl Serialize for GridPoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for GridPoint {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let coords = Vec::<f64>::deserialize(deserializer)?;
        GridPoint::from_coords(coords).map_err(serde::de::Error::custom)
    }
}

/// Number of points in a classical sparse grid of level `tau` in dimension
/// `d`: the sum over `l = 0..tau-1` of `2^l * C(d-1+l, d-1)`.
pub fn sg_size(d: usize, tau: u32) -> Result<u64> {
    if d == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    if tau == 0 {
        return Err(Error::invalid("sparse grid level must be >= 1"));
    }
    let mut total: u128 = 0;
    for l in 0..tau as u128 {
        let c = binomial_u128(d as u128 - 1 + l, d as u128 - 1)
            .ok_or_else(|| Error::Overflow(format!("C({}, {})", d - 1 + l as usize, d - 1)))?;
        let term = (1u128 << l)
            .checked_mul(c)
            .ok_or_else(|| Error::Overflow("sparse grid size term".into()))?;
        total = total
            .checked_add(term)
            .ok_or_else(|| Error::Overflow("sparse grid size".into()))?;
    }
    u64::try_from(total).map_err(|_| Error::Overflow("sparse grid size exceeds u64".into()))
}

fn binomial_u128(n: u128, k: u128) -> Option<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)?;
        acc /= i + 1;
    }
    Some(acc)
}

/// Exact binomial coefficient in signed arithmetic, for the combination
/// technique's alternating weights.
pub(crate) fn binomial_i64(n: u32, k: u32) -> i64 {
    if k > n {
        return 0;
    }
    binomial_u128(n as u128, k as u128).expect("small binomial") as i64
}

/// The set of odd position multi-indices for a level multi-index: the
/// Cartesian product of `{1, 3, ..., 2^{l_j} - 1}` over dimensions.
pub fn rho(l: &LevelMultiIndex) -> Vec<Vec<u64>> {
    let mut out = Vec::with_capacity(rho_size(l) as usize);
    let mut current = vec![1u64; l.dim()];
    loop {
        out.push(current.clone());
        // odometer over odd positions, last dimension fastest
        let mut dim = l.dim();
        loop {
            if dim == 0 {
                return out;
            }
            dim -= 1;
            current[dim] += 2;
            if current[dim] < (1u64 << l.levels()[dim]) {
                break;
            }
            current[dim] = 1;
        }
    }
}

/// Cardinality of [`rho`]: the product of `2^{l_j - 1}`.
pub fn rho_size(l: &LevelMultiIndex) -> u64 {
    l.levels().iter().map(|&lj| 1u64 << (lj - 1)).product()
}

/// All level multi-indices of dimension `d` with `|l| = total`. Earlier
/// dimensions carry the higher levels first, matching the canonical point
/// ordering of [`classical_sg`].
pub(crate) fn compositions(d: usize, total: u32) -> Vec<LevelMultiIndex> {
    let mut out = Vec::new();
    if (total as usize) < d {
        return out;
    }
    let mut current = vec![1u32; d];
    fn rec(current: &mut Vec<u32>, dim: usize, remaining: u32, out: &mut Vec<LevelMultiIndex>) {
        let d = current.len();
        if dim == d - 1 {
            current[dim] = remaining;
            out.push(LevelMultiIndex::new(current.clone()).expect("valid levels"));
            return;
        }
        // leave at least 1 per remaining dimension
        let max_here = remaining - (d - dim - 1) as u32;
        for v in (1..=max_here).rev() {
            current[dim] = v;
            rec(current, dim + 1, remaining - v, out);
        }
    }
    rec(&mut current, 0, total, &mut out);
    out
}

/// One-dimensional dyadic grid of level `l`: all points `i * 2^-l`,
/// `i = 1..2^l - 1`, in increasing order.
pub fn dyadic_grid_1d(level: u32) -> Vec<f64> {
    let n = (1u64 << level) - 1;
    (1..=n)
        .map(|i| (i as f64) * (2.0f64).powi(-(level as i32)))
        .collect()
}

/// Points of the anisotropic full grid `X_{1,l_1} x ... x X_{d,l_d}` in
/// row-major order with the last dimension varying fastest. This matches the
/// Kronecker vectorization convention used by the fast inverse algorithms.
pub fn full_grid_points(l: &LevelMultiIndex) -> Vec<GridPoint> {
    let d = l.dim();
    let sizes: Vec<u64> = l.levels().iter().map(|&lj| (1u64 << lj) - 1).collect();
    let total: u64 = sizes.iter().product();
    let mut out = Vec::with_capacity(total as usize);
    let mut idx = vec![1u64; d];
    loop {
        let dyadic: Vec<DyadicIndex> = idx
            .iter()
            .zip(l.levels())
            .map(|(&i, &lj)| DyadicIndex::new(lj, i).expect("valid"))
            .collect();
        out.push(GridPoint::from_dyadic(dyadic).expect("valid"));
        let mut dim = d;
        loop {
            if dim == 0 {
                return out;
            }
            dim -= 1;
            idx[dim] += 1;
            if idx[dim] <= sizes[dim] {
                break;
            }
            idx[dim] = 1;
        }
    }
}

/// The classical sparse grid of level `tau` in dimension `d`, in canonical
/// order: ascending `|l|`, lexicographic `l`, lexicographic position.
pub fn classical_sg(d: usize, tau: u32) -> Result<Vec<GridPoint>> {
    if d == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    if tau == 0 {
        return Err(Error::invalid("sparse grid level must be >= 1"));
    }
    let expected = sg_size(d, tau)?;
    let mut out = Vec::with_capacity(expected as usize);
    for order in d as u32..=(tau + d as u32 - 1) {
        for l in compositions(d, order) {
            for pos in rho(&l) {
                let dyadic: Vec<DyadicIndex> = pos
                    .iter()
                    .zip(l.levels())
                    .map(|(&i, &lj)| DyadicIndex::new(lj, i).expect("odd position"))
                    .collect();
                out.push(GridPoint::from_dyadic(dyadic).expect("valid"));
            }
        }
    }
    debug_assert_eq!(out.len() as u64, expected);
    Ok(out)
}

/// The increment from level `tau` to `tau + 1`: exactly the points with
/// `|l| = tau + d` and odd positions, in canonical order.
pub fn sg_increment(d: usize, tau: u32) -> Result<Vec<GridPoint>> {
    if d == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    if tau == 0 {
        return Err(Error::invalid("sparse grid level must be >= 1"));
    }
    let mut out = Vec::new();
    for l in compositions(d, tau + d as u32) {
        for pos in rho(&l) {
            let dyadic: Vec<DyadicIndex> = pos
                .iter()
                .zip(l.levels())
                .map(|(&i, &lj)| DyadicIndex::new(lj, i).expect("odd position"))
                .collect();
            out.push(GridPoint::from_dyadic(dyadic).expect("valid"));
        }
    }
    Ok(out)
}

/// An ordered design: a complete classical sparse grid of `base_level` plus
/// a subset of the next level's increment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncatedSparseGrid {
    dim: usize,
    base_level: u32,
    base: Vec<GridPoint>,
    augment: Vec<GridPoint>,
}

impl TruncatedSparseGrid {
    /// Validate and assemble a truncated sparse grid. `base` must be exactly
    /// the classical sparse grid of `base_level` (any order is rejected other
    /// than canonical), `augment` must be distinct increment points, and the
    /// total size must stay below the next complete level.
    pub fn new(
        dim: usize,
        base_level: u32,
        base: Vec<GridPoint>,
        augment: Vec<GridPoint>,
    ) -> Result<Self> {
        let canonical = classical_sg(dim, base_level)?;
        if base != canonical {
            return Err(Error::invalid(
                "base must be the complete classical sparse grid of base_level in canonical order",
            ));
        }
        let next_size = sg_size(dim, base_level + 1)?;
        let n = base.len() as u64 + augment.len() as u64;
        if n >= next_size {
            return Err(Error::invalid(format!(
                "truncated sparse grid size {n} must be < next complete level size {next_size}"
            )));
        }
        let target_order = base_level + dim as u32;
        let mut seen = HashSet::with_capacity(augment.len());
        for (idx, p) in augment.iter().enumerate() {
            if p.dim() != dim {
                return Err(Error::invalid(format!(
                    "augment point {idx} has dimension {} != {dim}",
                    p.dim()
                )));
            }
            match p.level_sum() {
                Some(order) if order == target_order => {}
                _ => {
                    return Err(Error::invalid(format!(
                        "augment point {idx} is not a level-{} increment point",
                        base_level + 1
                    )));
                }
            }
            if !seen.insert(p.clone()) {
                return Err(Error::invalid(format!("duplicate augment point {idx}")));
            }
        }
        Ok(TruncatedSparseGrid {
            dim,
            base_level,
            base,
            augment,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn base_level(&self) -> u32 {
        self.base_level
    }

    pub fn base(&self) -> &[GridPoint] {
        &self.base
    }

    pub fn augment(&self) -> &[GridPoint] {
        &self.augment
    }

    /// Base points followed by augment points; the matrix index order.
    pub fn points(&self) -> impl Iterator<Item = &GridPoint> {
        self.base.iter().chain(self.augment.iter())
    }

    pub fn len(&self) -> usize {
        self.base.len() + self.augment.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// The truncated sparse grid of size `n` whose augment is filled in
/// canonical increment order.
pub fn canonical_tsg(d: usize, n: u64) -> Result<TruncatedSparseGrid> {
    if n < 1 {
        return Err(Error::invalid("truncated sparse grid size must be >= 1"));
    }
    let tau = level_for_budget(d, n)?;
    let base = classical_sg(d, tau)?;
    let need = (n - base.len() as u64) as usize;
    let mut augment = sg_increment(d, tau)?;
    augment.truncate(need);
    TruncatedSparseGrid::new(d, tau, base, augment)
}

/// Largest `tau` with `sg_size(d, tau) <= n`.
pub fn level_for_budget(d: usize, n: u64) -> Result<u32> {
    if d == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    if n < 1 {
        return Err(Error::invalid("budget must be >= 1"));
    }
    let mut tau = 1u32;
    loop {
        match sg_size(d, tau + 1) {
            Ok(next) if next <= n => tau += 1,
            // overflow of the next size means it certainly exceeds n
            _ => return Ok(tau),
        }
    }
}
