//! Optimal curvature of a set from the nested minimizers of
//! P(F) + λ μ(E ∖ F) over F ⊆ E, where μ = h_E dx.

use serde::{Deserialize, Serialize};

use crate::cut::{solve_binary, to_units, BinaryGraph};
use crate::error::{invalid, Error, Result};
use crate::grid::{BinaryMask, FieldUnit, GridDomain, PerimeterWeights, ScalarField};

/// Strictly increasing positive λ values (1/length).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaSchedule {
    values: Vec<f64>,
}

impl LambdaSchedule {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("schedule", "empty"));
        }
        if !(values[0].is_finite() && values[0] > 0.0) {
            return Err(invalid("schedule", format!("first value {} is not positive", values[0])));
        }
        if let Some(w) = values.windows(2).find(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(invalid("schedule", format!("not strictly increasing at {} → {}", w[0], w[1])));
        }
        Ok(Self { values })
    }

    /// `points` geometrically spaced values from `min` to `max` inclusive.
    pub fn geometric(min: f64, max: f64, points: usize) -> Result<Self> {
        if points == 0 || !(min > 0.0) || !(max >= min) {
            return Err(invalid("schedule", format!("bad geometric range [{min}, {max}] x {points}")));
        }
        if points == 1 {
            return Self::new(vec![min]);
        }
        let r = (max / min).ln() / (points - 1) as f64;
        let mut v: Vec<f64> = (0..points).map(|k| min * (r * k as f64).exp()).collect();
        v[points - 1] = max;
        Self::new(v)
    }

    /// 64 points from n / (half the domain diagonal) to n / (2h).
    pub fn default_for(domain: &GridDomain) -> Result<Self> {
        let n = domain.dim() as f64;
        let h = domain.spacing();
        let diag = domain
            .counts()
            .iter()
            .map(|&c| (c as f64 * h).powi(2))
            .sum::<f64>()
            .sqrt();
        Self::geometric(2.0 * n / diag, n / (2.0 * h), 64)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest ratio between consecutive values (1 for a single value).
    pub fn max_step_ratio(&self) -> f64 {
        self.values.windows(2).map(|w| w[1] / w[0]).fold(1.0, f64::max)
    }
}

fn check_weight(set: &BinaryMask, weight: &ScalarField) -> Result<()> {
    set.domain().check_same(weight.domain(), "weight field")?;
    if let Some(i) = set.ones().find(|&i| !(weight.get(i) > 0.0)) {
        return Err(invalid(
            "h_E",
            format!("weight must be positive on E, found {} at cell {i}", weight.get(i)),
        ));
    }
    Ok(())
}

/// Smallest minimizer of P(F) + λ Σ_{E∖F} h_E h^n over F ⊆ E.
pub fn solve_cp(
    set: &BinaryMask,
    weight: &ScalarField,
    lambda: f64,
    weights: &PerimeterWeights,
) -> Result<BinaryMask> {
    check_weight(set, weight)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", format!("must be positive, got {lambda}")));
    }
    solve_cp_unchecked(set, weight, lambda, weights)
}

fn solve_cp_unchecked(
    set: &BinaryMask,
    weight: &ScalarField,
    lambda: f64,
    weights: &PerimeterWeights,
) -> Result<BinaryMask> {
    let vol = set.domain().cell_volume();
    let empty = BinaryMask::empty(*set.domain());
    let w = weight.values();
    // excluding a cell costs λ h_E h^n, so including it changes the energy by −λ h_E h^n
    let (f, _) = solve_binary(weights, set, &empty, |i| -lambda * w[i] * vol)?;
    Ok(f)
}

/// CP_λ for increasing λ on one graph. Raising λ only raises source
/// capacities, so the previous flow stays feasible and is extended.
/// Each result is the smallest minimizer for its λ, identical to a fresh solve.
struct ParametricCp {
    graph: BinaryGraph,
    /// h_E h^n per node.
    mass: Vec<f64>,
    /// Source capacity per node already added, in energy units.
    added: Vec<i64>,
    lambda: f64,
}

impl ParametricCp {
    fn new(set: &BinaryMask, weight: &ScalarField, weights: &PerimeterWeights) -> Result<Self> {
        let vol = set.domain().cell_volume();
        let graph = BinaryGraph::new(weights, set, &BinaryMask::empty(*set.domain()))?;
        let mass: Vec<f64> = graph.cells().iter().map(|&i| weight.get(i) * vol).collect();
        let added = vec![0; mass.len()];
        Ok(Self {
            graph,
            mass,
            added,
            lambda: 0.0,
        })
    }

    fn solve(&mut self, lambda: f64) -> Result<BinaryMask> {
        debug_assert!(lambda >= self.lambda);
        self.lambda = lambda;
        for k in 0..self.mass.len() {
            // same rounding as a fresh solve, so the capacities match exactly
            let target = -to_units(-lambda * self.mass[k])?;
            let delta = target - self.added[k];
            if delta > 0 {
                self.graph.add_unary_units(k, -delta);
                self.added[k] = target;
            }
        }
        Ok(self.graph.solve())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Stop once the uncovered fraction of E is at most this.
    pub coverage_tolerance: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            coverage_tolerance: 0.0,
        }
    }
}

/// Nested minimizers E_λ along a schedule.
#[derive(Clone, Debug)]
pub struct LambdaSweep {
    set: BinaryMask,
    weight: ScalarField,
    schedule: LambdaSchedule,
    masks: Vec<BinaryMask>,
}

impl LambdaSweep {
    pub fn set(&self) -> &BinaryMask {
        &self.set
    }

    pub fn weight(&self) -> &ScalarField {
        &self.weight
    }

    /// The solved prefix of the requested schedule.
    pub fn schedule(&self) -> &LambdaSchedule {
        &self.schedule
    }

    pub fn masks(&self) -> &[BinaryMask] {
        &self.masks
    }

    pub fn uncovered_fraction(&self) -> f64 {
        let total = self.set.count();
        if total == 0 {
            return 0.0;
        }
        let last = self.masks.last().map_or(0, |m| m.count());
        (total - last) as f64 / total as f64
    }

    fn check_nested(&self) -> Result<()> {
        let lam = self.schedule.values();
        for k in 0..self.masks.len() {
            if let Some(i) = self.masks[k].ones().find(|&i| !self.set.get(i)) {
                return Err(Error::Precondition(format!(
                    "E_λ at λ={} leaves E at cell {i}",
                    lam[k]
                )));
            }
            if k > 0 {
                if let Some(cell) = self.masks[k - 1].ones().find(|&i| !self.masks[k].get(i)) {
                    return Err(Error::Nestedness {
                        cell,
                        lower: lam[k - 1],
                        upper: lam[k],
                    });
                }
            }
        }
        Ok(())
    }
}

pub fn lambda_sweep(
    set: &BinaryMask,
    weight: &ScalarField,
    schedule: &LambdaSchedule,
    weights: &PerimeterWeights,
) -> Result<LambdaSweep> {
    lambda_sweep_with(set, weight, schedule, weights, &SweepOptions::default())
}

/// Solves the schedule in increasing order, stopping once coverage is reached.
pub fn lambda_sweep_with(
    set: &BinaryMask,
    weight: &ScalarField,
    schedule: &LambdaSchedule,
    weights: &PerimeterWeights,
    opts: &SweepOptions,
) -> Result<LambdaSweep> {
    check_weight(set, weight)?;
    weights.check_dim(set.domain())?;
    let lam = schedule.values();
    let total = set.count();
    let mut masks: Vec<BinaryMask> = Vec::with_capacity(lam.len());
    let mut cp = ParametricCp::new(set, weight, weights)?;
    for &l in lam {
        let m = cp.solve(l)?;
        let covered = m.count();
        masks.push(m);
        if total == 0 || (total - covered) as f64 <= opts.coverage_tolerance * total as f64 {
            break;
        }
    }
    let sweep = LambdaSweep {
        set: set.clone(),
        weight: weight.clone(),
        schedule: LambdaSchedule::new(lam[..masks.len()].to_vec())?,
        masks,
    };
    sweep.check_nested()?;
    Ok(sweep)
}

/// Inserts geometric midpoints wherever E_λ changes across a step wider than `max_ratio`,
/// until every changing step is narrow enough. Each round solves its midpoints on a fresh graph.
pub fn refine_sweep(
    sweep: &LambdaSweep,
    weights: &PerimeterWeights,
    max_ratio: f64,
) -> Result<LambdaSweep> {
    if !(max_ratio > 1.0) {
        return Err(invalid("max_ratio", format!("must exceed 1, got {max_ratio}")));
    }
    let mut lam = sweep.schedule.values().to_vec();
    let mut masks = sweep.masks.clone();
    loop {
        let gaps: Vec<usize> = (1..lam.len())
            .filter(|&k| lam[k] / lam[k - 1] > max_ratio && masks[k].count() != masks[k - 1].count())
            .collect();
        if gaps.is_empty() {
            break;
        }
        let mids: Vec<f64> = gaps.iter().map(|&k| (lam[k] * lam[k - 1]).sqrt()).collect();
        let mut cp = ParametricCp::new(&sweep.set, &sweep.weight, weights)?;
        let solved: Vec<BinaryMask> = mids.iter().map(|&l| cp.solve(l)).collect::<Result<_>>()?;
        for ((&k, &l), m) in gaps.iter().zip(&mids).zip(solved).rev() {
            lam.insert(k, l);
            masks.insert(k, m);
        }
    }
    let out = LambdaSweep {
        set: sweep.set.clone(),
        weight: sweep.weight.clone(),
        schedule: LambdaSchedule::new(lam)?,
        masks,
    };
    out.check_nested()?;
    Ok(out)
}

/// Curvature values with the cells they are defined on.
#[derive(Clone, Debug)]
pub struct BarozziCurvature {
    /// Curvature on covered cells, 0 elsewhere.
    pub values: ScalarField,
    pub covered: BinaryMask,
    pub uncovered: usize,
}

impl BarozziCurvature {
    /// Σ |H| h^n over covered cells.
    pub fn l1_norm(&self) -> f64 {
        crate::grid::lp_norm(&self.values, 1.0, Some(&self.covered))
            .map(|n| n.value)
            .unwrap_or(0.0)
    }
}

/// H_E(x) = min{λ h_E(x) : x ∈ E_λ} on E; uncovered cells are flagged and left at 0.
pub fn barozzi_curvature(sweep: &LambdaSweep) -> Result<BarozziCurvature> {
    if sweep.masks.is_empty() {
        return Err(invalid("sweep", "empty"));
    }
    let dom = *sweep.set.domain();
    let mut values = vec![0.0; dom.cell_count()];
    let mut covered = BinaryMask::empty(dom);
    let lam = sweep.schedule.values();
    for (k, m) in sweep.masks.iter().enumerate().rev() {
        for i in m.ones() {
            values[i] = lam[k] * sweep.weight.get(i);
            covered.set(i, true);
        }
    }
    let uncovered = sweep.set.count() - covered.count();
    if uncovered > 0 {
        log::warn!("{uncovered} cells of E never entered E_λ; they are excluded from norms");
    }
    Ok(BarozziCurvature {
        values: ScalarField::new(dom, values, Some(FieldUnit::Curvature))?,
        covered,
        uncovered,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BarozziOptions {
    /// Schedule points per side; the range is the default range of each side's domain.
    pub points: usize,
    /// Refine changing schedule steps down to this ratio (no refinement if `None`).
    pub refine_ratio: Option<f64>,
    /// Padding of E's bounding box on each side, as a fraction of its extent.
    pub complement_padding: f64,
}

impl Default for BarozziOptions {
    fn default() -> Self {
        Self {
            points: 64,
            refine_ratio: None,
            complement_padding: 0.25,
        }
    }
}

fn side_curvature(
    set: &BinaryMask,
    weights: &PerimeterWeights,
    opts: &BarozziOptions,
    schedule_domain: &GridDomain,
) -> Result<BarozziCurvature> {
    let dom = *set.domain();
    let base = LambdaSchedule::default_for(schedule_domain)?;
    let sched = LambdaSchedule::geometric(base.values()[0], *base.values().last().unwrap(), opts.points)?;
    let ones = ScalarField::constant(dom, 1.0, Some(FieldUnit::Dimensionless))?;
    let mut sweep = lambda_sweep(set, &ones, &sched, weights)?;
    if let Some(r) = opts.refine_ratio {
        sweep = refine_sweep(&sweep, weights, r)?;
    }
    barozzi_curvature(&sweep)
}

/// H_E with h_E ≡ 1 on E, and −H_{C} on C = (padded bounding box of E) ∖ E.
/// Cells outside the padded box are uncovered.
pub fn barozzi_full(
    set: &BinaryMask,
    weights: &PerimeterWeights,
    opts: &BarozziOptions,
) -> Result<BarozziCurvature> {
    let dom = *set.domain();
    let dim = dom.dim();
    if set.is_empty() {
        return Err(invalid("E", "empty set"));
    }
    let inside = side_curvature(set, weights, opts, &dom)?;

    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for i in set.ones() {
        let c = dom.coords(i);
        for d in 0..dim {
            lo[d] = lo[d].min(c[d]);
            hi[d] = hi[d].max(c[d]);
        }
    }
    let r = weights.radius() as i64;
    let mut counts = vec![0usize; dim];
    let mut origin = vec![0.0; dim];
    let mut shift = [0i64; 3];
    for d in 0..dim {
        let ext = (hi[d] - lo[d] + 1) as f64;
        let pad = ((opts.complement_padding * ext).ceil() as i64).max(r + 1);
        shift[d] = lo[d] as i64 - pad;
        counts[d] = (hi[d] - lo[d] + 1) + 2 * pad as usize;
        origin[d] = dom.origin()[d] + shift[d] as f64 * dom.spacing();
    }
    let bx = GridDomain::new(&counts, dom.spacing(), &origin)?;
    let to_orig = |c: [usize; 3]| -> Option<usize> {
        let mut o = [0usize; 3];
        for d in 0..dim {
            let v = c[d] as i64 + shift[d];
            if v < 0 || v >= dom.counts()[d] as i64 {
                return None;
            }
            o[d] = v as usize;
        }
        Some(dom.index(o))
    };
    let comp = BinaryMask::from_bits(
        bx,
        (0..bx.cell_count())
            .map(|i| to_orig(bx.coords(i)).map_or(true, |j| !set.get(j)))
            .collect(),
    )?;
    let outside = side_curvature(&comp, weights, opts, &bx)?;

    let mut values = inside.values.values().to_vec();
    let mut covered = inside.covered.clone();
    for i in outside.covered.ones() {
        if let Some(j) = to_orig(bx.coords(i)) {
            values[j] = -outside.values.get(i);
            covered.set(j, true);
        }
    }
    let uncovered = dom.cell_count() - covered.count();
    Ok(BarozziCurvature {
        values: ScalarField::new(dom, values, Some(FieldUnit::Curvature))?,
        covered,
        uncovered,
    })
}

/// Ĥ = H₁ on E ∩ U, H₂ on U ∖ E, 0 off U.
pub fn compose_curvature(
    h1: &ScalarField,
    h2: &ScalarField,
    set: &BinaryMask,
    free: &BinaryMask,
) -> Result<ScalarField> {
    let dom = set.domain();
    dom.check_same(h1.domain(), "H1")?;
    dom.check_same(h2.domain(), "H2")?;
    dom.check_same(free.domain(), "free region")?;
    let values = (0..dom.cell_count())
        .map(|i| match (free.get(i), set.get(i)) {
            (false, _) => 0.0,
            (true, true) => h1.get(i),
            (true, false) => h2.get(i),
        })
        .collect();
    ScalarField::new(*dom, values, h1.unit())
}
