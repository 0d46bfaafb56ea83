//! Uniform grids, cell masks, cell fields and the pairwise discrete perimeter.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A point in physical coordinates. Components beyond the domain dimension are ignored.
pub type Point = [f64; 3];

/// Axis-aligned box of cells with uniform spacing `h`, in 2 or 3 dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDomain {
    dim: usize,
    counts: [usize; 3],
    spacing: f64,
    origin: [f64; 3],
}

impl GridDomain {
    pub fn new(counts: &[usize], spacing: f64, origin: &[f64]) -> Result<Self> {
        let dim = counts.len();
        if !(2..=3).contains(&dim) {
            return Err(invalid("n", format!("dimension must be 2 or 3, got {dim}")));
        }
        if origin.len() != dim {
            return Err(invalid(
                "origin",
                format!("expected {dim} coordinates, got {}", origin.len()),
            ));
        }
        if counts.iter().any(|&c| c == 0) {
            return Err(invalid("counts", "every axis needs at least one cell"));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(invalid("h", format!("spacing must be positive, got {spacing}")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(invalid("origin", "coordinates must be finite"));
        }
        let mut c = [1usize; 3];
        let mut o = [0.0; 3];
        c[..dim].copy_from_slice(counts);
        o[..dim].copy_from_slice(origin);
        c.iter()
            .try_fold(1usize, |acc, &x| acc.checked_mul(x))
            .ok_or_else(|| invalid("counts", "cell count overflows"))?;
        Ok(Self {
            dim,
            counts: c,
            spacing,
            origin: o,
        })
    }

    /// Cube `[lo, hi]^dim` split into `cells` cells per axis.
    pub fn cube(dim: usize, cells: usize, lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(invalid("extent", format!("need lo < hi, got [{lo}, {hi}]")));
        }
        let h = (hi - lo) / cells.max(1) as f64;
        Self::new(&vec![cells; dim], h, &vec![lo; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts[..self.dim]
    }

    pub(crate) fn counts3(&self) -> [usize; 3] {
        self.counts
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin[..self.dim]
    }

    pub fn cell_count(&self) -> usize {
        self.counts.iter().product()
    }

    /// h^n
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// h^{n-1}
    pub fn face_measure(&self) -> f64 {
        self.spacing.powi(self.dim as i32 - 1)
    }

    /// Physical upper corner.
    pub fn upper(&self) -> Point {
        let mut u = [0.0; 3];
        for d in 0..self.dim {
            u[d] = self.origin[d] + self.counts[d] as f64 * self.spacing;
        }
        u
    }

    pub fn index(&self, c: [usize; 3]) -> usize {
        c[0] + self.counts[0] * (c[1] + self.counts[1] * c[2])
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.counts[0];
        let ny = self.counts[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    pub fn center(&self, idx: usize) -> Point {
        self.center_of(self.coords(idx))
    }

    pub fn center_of(&self, c: [usize; 3]) -> Point {
        let mut x = [0.0; 3];
        for d in 0..self.dim {
            x[d] = self.origin[d] + (c[d] as f64 + 0.5) * self.spacing;
        }
        x
    }

    /// Cell containing `x`, if any.
    pub fn locate(&self, x: &Point) -> Option<usize> {
        let mut c = [0usize; 3];
        for d in 0..self.dim {
            let t = ((x[d] - self.origin[d]) / self.spacing).floor();
            if !(t >= 0.0 && t < self.counts[d] as f64) {
                return None;
            }
            c[d] = t as usize;
        }
        Some(self.index(c))
    }

    /// Neighbor of `c` at integer offset `off`, if it lies in the domain.
    pub fn offset(&self, c: [usize; 3], off: [i32; 3]) -> Option<usize> {
        let mut n = [0usize; 3];
        for d in 0..3 {
            let v = c[d] as i64 + off[d] as i64;
            if v < 0 || v >= self.counts[d] as i64 {
                return None;
            }
            n[d] = v as usize;
        }
        Some(self.index(n))
    }

    /// Signed linear index delta of an offset.
    pub(crate) fn linear_delta(&self, off: [i32; 3]) -> isize {
        off[0] as isize
            + self.counts[0] as isize * (off[1] as isize + self.counts[1] as isize * off[2] as isize)
    }

    pub(crate) fn same_grid(&self, other: &GridDomain) -> bool {
        self.dim == other.dim
            && self.counts == other.counts
            && self.spacing == other.spacing
            && self.origin == other.origin
    }

    pub(crate) fn check_same(&self, other: &GridDomain, what: &str) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::DomainMismatch(format!(
                "{what}: {:?}/{}/{:?} vs {:?}/{}/{:?}",
                self.counts(),
                self.spacing,
                self.origin(),
                other.counts(),
                other.spacing,
                other.origin()
            )))
        }
    }

    /// Calls `f(a, b)` for every ordered cell pair `(a, a + off)` inside the domain.
    pub(crate) fn for_each_pair(&self, off: [i32; 3], mut f: impl FnMut(usize, usize)) {
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for d in 0..3 {
            let o = off[d] as i64;
            let n = self.counts[d] as i64;
            let (l, h) = if o >= 0 { (0, n - o) } else { (-o, n) };
            if h <= l {
                return;
            }
            lo[d] = l as usize;
            hi[d] = h as usize;
        }
        let delta = self.linear_delta(off);
        for k in lo[2]..hi[2] {
            for j in lo[1]..hi[1] {
                let row = self.index([0, j, k]);
                for i in lo[0]..hi[0] {
                    let a = row + i;
                    f(a, (a as isize + delta) as usize);
                }
            }
        }
    }
}

/// A set represented as a union of grid cells.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMask {
    domain: GridDomain,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(domain: GridDomain) -> Self {
        Self {
            bits: vec![false; domain.cell_count()],
            domain,
        }
    }

    pub fn full(domain: GridDomain) -> Self {
        Self {
            bits: vec![true; domain.cell_count()],
            domain,
        }
    }

    pub fn from_bits(domain: GridDomain, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != domain.cell_count() {
            return Err(Error::DomainMismatch(format!(
                "mask has {} bits, domain has {} cells",
                bits.len(),
                domain.cell_count()
            )));
        }
        Ok(Self { domain, bits })
    }

    /// Cell is set iff `pred(center)` holds.
    pub fn from_predicate(domain: GridDomain, pred: impl Fn(&Point) -> bool + Sync) -> Self {
        use rayon::prelude::*;
        let bits = (0..domain.cell_count())
            .into_par_iter()
            .map(|i| pred(&domain.center(i)))
            .collect();
        Self { domain, bits }
    }

    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    pub fn set(&mut self, idx: usize, v: bool) {
        self.bits[idx] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn complement(&self) -> Self {
        Self {
            domain: self.domain,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    fn zip(&self, other: &Self, what: &str, f: impl Fn(bool, bool) -> bool) -> Result<Self> {
        self.domain.check_same(&other.domain, what)?;
        Ok(Self {
            domain: self.domain,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn intersection(&self, other: &Self) -> Result<Self> {
        self.zip(other, "intersection", |a, b| a && b)
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        self.zip(other, "union", |a, b| a || b)
    }

    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.zip(other, "difference", |a, b| a && !b)
    }

    pub fn symmetric_difference(&self, other: &Self) -> Result<Self> {
        self.zip(other, "symmetric difference", |a, b| a != b)
    }

    pub fn is_subset_of(&self, other: &Self) -> Result<bool> {
        self.domain.check_same(&other.domain, "subset test")?;
        Ok(self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b))
    }

    /// Cells of `self` with a stencil neighbor outside `self` (or off the domain).
    pub fn boundary_cells(&self, weights: &PerimeterWeights) -> Vec<usize> {
        let dom = self.domain;
        self.ones()
            .filter(|&i| {
                let c = dom.coords(i);
                weights.offsets.iter().any(|s| {
                    [s.offset, neg(s.offset)]
                        .iter()
                        .any(|&o| dom.offset(c, o).map_or(true, |j| !self.bits[j]))
                })
            })
            .collect()
    }
}

/// Physical meaning of a field's values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldUnit {
    /// 1/length
    Curvature,
    Dimensionless,
}

/// One finite real value per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    domain: GridDomain,
    values: Vec<f64>,
    unit: Option<FieldUnit>,
}

impl ScalarField {
    pub fn new(domain: GridDomain, values: Vec<f64>, unit: Option<FieldUnit>) -> Result<Self> {
        if values.len() != domain.cell_count() {
            return Err(Error::DomainMismatch(format!(
                "field has {} values, domain has {} cells",
                values.len(),
                domain.cell_count()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(
                "field",
                format!("non-finite value {} at cell {i}", values[i]),
            ));
        }
        Ok(Self {
            domain,
            values,
            unit,
        })
    }

    pub fn constant(domain: GridDomain, c: f64, unit: Option<FieldUnit>) -> Result<Self> {
        Self::new(domain, vec![c; domain.cell_count()], unit)
    }

    pub fn from_fn(
        domain: GridDomain,
        unit: Option<FieldUnit>,
        f: impl Fn(&Point) -> f64 + Sync,
    ) -> Result<Self> {
        use rayon::prelude::*;
        let values = (0..domain.cell_count())
            .into_par_iter()
            .map(|i| f(&domain.center(i)))
            .collect();
        Self::new(domain, values, unit)
    }

    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn unit(&self) -> Option<FieldUnit> {
        self.unit
    }
}

/// One half-stencil offset with its interaction weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StencilOffset {
    pub offset: [i32; 3],
    pub weight: f64,
}

/// Pairwise perimeter weights. Only one offset of each `±o` pair is stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerimeterWeights {
    name: String,
    dim: usize,
    offsets: Vec<StencilOffset>,
}

// Minimax fits with the axis direction pinned exact.
const W16_AXIS: f64 = 0.194_253_646_342_265_88;
const W16_DIAG: f64 = 0.035_977_552_216_736_28;
const W16_KNIGHT: f64 = 0.122_298_541_537_376_92;
const W26_FACE: f64 = 0.086_465_015_624_938_01;
const W26_EDGE: f64 = 0.122_859_061_462_856_26;
const W26_BODY: f64 = 0.105_524_684_630_909_24;

fn neg(o: [i32; 3]) -> [i32; 3] {
    [-o[0], -o[1], -o[2]]
}

impl PerimeterWeights {
    pub fn custom(name: &str, dim: usize, offsets: Vec<StencilOffset>) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(invalid("n", format!("dimension must be 2 or 3, got {dim}")));
        }
        for (k, s) in offsets.iter().enumerate() {
            if !(s.weight.is_finite() && s.weight > 0.0) {
                return Err(invalid("weights", format!("offset {:?} has weight {}", s.offset, s.weight)));
            }
            if s.offset == [0, 0, 0] || (dim == 2 && s.offset[2] != 0) {
                return Err(invalid("weights", format!("bad offset {:?}", s.offset)));
            }
            if offsets[..k]
                .iter()
                .any(|t| t.offset == s.offset || t.offset == neg(s.offset))
            {
                return Err(invalid(
                    "weights",
                    format!("offset {:?} listed twice (up to sign)", s.offset),
                ));
            }
        }
        Ok(Self {
            name: name.to_string(),
            dim,
            offsets,
        })
    }

    fn fixed(name: &str, dim: usize, groups: &[(&[[i32; 3]], f64)]) -> Self {
        let offsets = groups
            .iter()
            .flat_map(|(offs, w)| {
                offs.iter().map(move |&offset| StencilOffset {
                    offset,
                    weight: *w,
                })
            })
            .collect();
        Self {
            name: name.to_string(),
            dim,
            offsets,
        }
    }

    /// 4-neighborhood in 2D: exact on axis directions, up to √2 error on diagonals.
    pub fn n4() -> Self {
        Self::fixed("n4", 2, &[(&[[1, 0, 0], [0, 1, 0]], 1.0)])
    }

    /// 16-neighborhood in 2D, anisotropy below 2%.
    pub fn n16() -> Self {
        Self::fixed(
            "n16",
            2,
            &[
                (&[[1, 0, 0], [0, 1, 0]], W16_AXIS),
                (&[[1, 1, 0], [1, -1, 0]], W16_DIAG),
                (&[[2, 1, 0], [1, 2, 0], [2, -1, 0], [1, -2, 0]], W16_KNIGHT),
            ],
        )
    }

    /// 6-neighborhood in 3D.
    pub fn n6() -> Self {
        Self::fixed("n6", 3, &[(&[[1, 0, 0], [0, 1, 0], [0, 0, 1]], 1.0)])
    }

    /// 26-neighborhood in 3D, anisotropy below 6%.
    pub fn n26() -> Self {
        Self::fixed(
            "n26",
            3,
            &[
                (&[[1, 0, 0], [0, 1, 0], [0, 0, 1]], W26_FACE),
                (
                    &[
                        [1, 1, 0],
                        [1, -1, 0],
                        [1, 0, 1],
                        [1, 0, -1],
                        [0, 1, 1],
                        [0, 1, -1],
                    ],
                    W26_EDGE,
                ),
                (&[[1, 1, 1], [1, 1, -1], [1, -1, 1], [1, -1, -1]], W26_BODY),
            ],
        )
    }

    /// Default stencil for a dimension: `n16` in 2D, `n26` in 3D.
    pub fn standard(dim: usize) -> Result<Self> {
        match dim {
            2 => Ok(Self::n16()),
            3 => Ok(Self::n26()),
            _ => Err(invalid("n", format!("dimension must be 2 or 3, got {dim}"))),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "n4" => Ok(Self::n4()),
            "n16" => Ok(Self::n16()),
            "n6" => Ok(Self::n6()),
            "n26" => Ok(Self::n26()),
            _ => Err(invalid(
                "stencil",
                format!("unknown stencil `{name}` (expected n4, n16, n6 or n26)"),
            )),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn offsets(&self) -> &[StencilOffset] {
        &self.offsets
    }

    /// Largest offset component in absolute value.
    pub fn radius(&self) -> usize {
        self.offsets
            .iter()
            .flat_map(|s| s.offset.iter().map(|c| c.unsigned_abs() as usize))
            .max()
            .unwrap_or(0)
    }

    /// Continuum surface tension of a flat interface with unit normal `nu`.
    pub fn surface_tension(&self, nu: &Point) -> f64 {
        self.offsets
            .iter()
            .map(|s| {
                let dot: f64 = (0..3).map(|d| s.offset[d] as f64 * nu[d]).sum();
                s.weight * dot.abs()
            })
            .sum()
    }

    pub(crate) fn check_dim(&self, domain: &GridDomain) -> Result<()> {
        if self.dim == domain.dim() {
            Ok(())
        } else {
            Err(Error::DomainMismatch(format!(
                "stencil `{}` is {}-dimensional, domain is {}-dimensional",
                self.name,
                self.dim,
                domain.dim()
            )))
        }
    }
}

/// Discrete perimeter of `mask`: weighted cut pairs with an endpoint in `region`, times h^{n-1}.
pub fn perimeter(
    mask: &BinaryMask,
    region: Option<&BinaryMask>,
    weights: &PerimeterWeights,
) -> Result<f64> {
    let dom = mask.domain();
    weights.check_dim(dom)?;
    if let Some(r) = region {
        dom.check_same(r.domain(), "perimeter region")?;
    }
    let bits = mask.bits();
    let mut total = 0.0;
    for s in weights.offsets() {
        let mut cut = 0usize;
        match region {
            None => dom.for_each_pair(s.offset, |a, b| cut += (bits[a] != bits[b]) as usize),
            Some(r) => {
                let rb = r.bits();
                dom.for_each_pair(s.offset, |a, b| {
                    cut += (bits[a] != bits[b] && (rb[a] || rb[b])) as usize
                })
            }
        }
        total += s.weight * cut as f64;
    }
    Ok(total * dom.face_measure())
}

/// Shape descriptors for rasterization.
#[derive(Clone)]
pub enum Shape {
    /// Open ball.
    Ball { center: Point, radius: f64 },
    /// Open cylinder B^{n-1}_r(x̄) × (x_n − r, x_n + r).
    Cylinder { center: Point, radius: f64 },
    /// {x : x·normal < offset}
    HalfSpace { normal: Point, offset: f64 },
    /// {x : x_n < f(x̄)}, `f` receiving the first n−1 coordinates.
    Subgraph(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
    Predicate(Arc<dyn Fn(&Point) -> bool + Send + Sync>),
}

impl std::fmt::Debug for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Shape::Ball { center, radius } => write!(f, "Ball({center:?}, {radius})"),
            Shape::Cylinder { center, radius } => write!(f, "Cylinder({center:?}, {radius})"),
            Shape::HalfSpace { normal, offset } => write!(f, "HalfSpace({normal:?}, {offset})"),
            Shape::Subgraph(_) => write!(f, "Subgraph"),
            Shape::Predicate(_) => write!(f, "Predicate"),
        }
    }
}

impl Shape {
    pub fn contains(&self, dim: usize, x: &Point) -> bool {
        match self {
            Shape::Ball { center, radius } => dist2(dim, x, center) < radius * radius,
            Shape::Cylinder { center, radius } => {
                dist2(dim - 1, x, center) < radius * radius
                    && (x[dim - 1] - center[dim - 1]).abs() < *radius
            }
            Shape::HalfSpace { normal, offset } => {
                (0..dim).map(|d| x[d] * normal[d]).sum::<f64>() < *offset
            }
            Shape::Subgraph(f) => x[dim - 1] < f(&x[..dim - 1]),
            Shape::Predicate(p) => p(x),
        }
    }

    /// Axis-aligned bounding box when the shape is bounded.
    fn bounds(&self, dim: usize) -> Option<(Point, Point)> {
        match self {
            Shape::Ball { center, radius } | Shape::Cylinder { center, radius } => {
                let mut lo = [0.0; 3];
                let mut hi = [0.0; 3];
                for d in 0..dim {
                    lo[d] = center[d] - radius;
                    hi[d] = center[d] + radius;
                }
                Some((lo, hi))
            }
            _ => None,
        }
    }
}

pub(crate) fn dist2(dim: usize, a: &Point, b: &Point) -> f64 {
    (0..dim).map(|d| (a[d] - b[d]) * (a[d] - b[d])).sum()
}

/// Rasterized mask plus clipping metadata.
#[derive(Clone, Debug)]
pub struct Raster {
    pub mask: BinaryMask,
    /// The shape extends beyond the domain.
    pub clipped: bool,
}

/// Cell is set iff its center lies in the shape.
pub fn rasterize(shape: &Shape, domain: GridDomain) -> Raster {
    let dim = domain.dim();
    let clipped = shape.bounds(dim).map_or(false, |(lo, hi)| {
        let up = domain.upper();
        (0..dim).any(|d| lo[d] < domain.origin()[d] || hi[d] > up[d])
    });
    if clipped {
        log::debug!("rasterize: {shape:?} clipped to domain");
    }
    Raster {
        mask: BinaryMask::from_predicate(domain, |x| shape.contains(dim, x)),
        clipped,
    }
}

/// Result of an L^p norm evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpNorm {
    pub value: f64,
    pub empty_region: bool,
}

/// (Σ |v|^p h^n)^{1/p} over region cells, or the max for `p = ∞`.
pub fn lp_norm(field: &ScalarField, p: f64, region: Option<&BinaryMask>) -> Result<LpNorm> {
    if !(p >= 1.0) {
        return Err(invalid("p", format!("need p >= 1, got {p}")));
    }
    let dom = field.domain();
    if let Some(r) = region {
        dom.check_same(r.domain(), "lp_norm region")?;
    }
    let vals = field
        .values()
        .iter()
        .enumerate()
        .filter(|(i, _)| region.map_or(true, |r| r.get(*i)))
        .map(|(_, v)| v.abs());
    let mut n = 0usize;
    let value = if p.is_infinite() {
        vals.inspect(|_| n += 1).fold(0.0, f64::max)
    } else {
        let s: f64 = vals.inspect(|_| n += 1).map(|v| v.powf(p)).sum();
        (s * dom.cell_volume()).powf(1.0 / p)
    };
    Ok(LpNorm {
        value: if n == 0 { 0.0 } else { value },
        empty_region: n == 0,
    })
}
