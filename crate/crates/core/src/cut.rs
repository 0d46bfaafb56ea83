//! Exact minimization of P(F, U) − ∫_{F∩U} H over masks agreeing with a datum off U.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{perimeter, BinaryMask, GridDomain, PerimeterWeights, ScalarField};
use crate::maxflow::{FlowStats, Graph};

/// Energies are rounded to multiples of this before the cut is computed.
pub const ENERGY_RESOLUTION: f64 = 1e-9;

pub(crate) fn to_units(v: f64) -> Result<i64> {
    let u = (v / ENERGY_RESOLUTION).round();
    if !(u.abs() < 4.0e18) {
        return Err(invalid("energy", format!("term {v} exceeds the integer capacity range")));
    }
    Ok(u as i64)
}

/// Every stencil neighbor of every free cell must exist.
pub(crate) fn check_frozen_ring(free: &BinaryMask, weights: &PerimeterWeights) -> Result<()> {
    let dom = free.domain();
    let r = weights.radius();
    let counts = dom.counts();
    for i in free.ones() {
        let c = dom.coords(i);
        if (0..dom.dim()).any(|d| c[d] < r || c[d] + r >= counts[d]) {
            return Err(Error::Config(format!(
                "free region touches the domain boundary at cell {c:?}; a frozen ring of {r} cells is required"
            )));
        }
    }
    Ok(())
}

/// Graph of Σ_{pairs touching `free`} w·[x_a ≠ x_b] with x = `fixed` off `free`.
/// Unary terms are added per free cell; capacities may grow between solves.
pub(crate) struct BinaryGraph {
    g: Graph,
    cells: Vec<usize>,
    fixed: BinaryMask,
}

impl BinaryGraph {
    pub(crate) fn new(weights: &PerimeterWeights, free: &BinaryMask, fixed: &BinaryMask) -> Result<Self> {
        let dom = *free.domain();
        dom.check_same(fixed.domain(), "datum")?;
        weights.check_dim(&dom)?;
        let cells: Vec<usize> = free.ones().collect();
        let mut node_of = vec![u32::MAX; dom.cell_count()];
        for (k, &i) in cells.iter().enumerate() {
            node_of[i] = k as u32;
        }
        let mut g = Graph::with_capacity(cells.len(), cells.len() * weights.offsets().len());
        g.add_nodes(cells.len());
        let face = dom.face_measure();
        let pair_units: Vec<i64> = weights
            .offsets()
            .iter()
            .map(|s| to_units(s.weight * face))
            .collect::<Result<_>>()?;
        for (k, &i) in cells.iter().enumerate() {
            let c = dom.coords(i);
            for (s, &w) in weights.offsets().iter().zip(&pair_units) {
                let o = s.offset;
                for (off, forward) in [(o, true), ([-o[0], -o[1], -o[2]], false)] {
                    // pairs leaving the domain do not exist in the ambient perimeter
                    let Some(j) = dom.offset(c, off) else { continue };
                    match node_of[j] {
                        u32::MAX => {
                            if fixed.get(j) {
                                g.add_terminal(k, w, 0);
                            } else {
                                g.add_terminal(k, 0, w);
                            }
                        }
                        nj if forward => g.add_edge(k, nj as usize, w, w),
                        _ => {}
                    }
                }
            }
        }
        Ok(Self {
            g,
            cells,
            fixed: fixed.clone(),
        })
    }

    /// Free cells in node order.
    pub(crate) fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// Adds `units` (in `ENERGY_RESOLUTION`) to the cost of x = 1 at node `k`.
    pub(crate) fn add_unary_units(&mut self, k: usize, units: i64) {
        if units > 0 {
            self.g.add_terminal(k, 0, units);
        } else {
            self.g.add_terminal(k, -units, 0);
        }
    }

    /// Completes the flow on the current capacities; the residual flow is kept.
    pub(crate) fn solve(&mut self) -> BinaryMask {
        self.g.solve();
        let side = self.g.source_side();
        let mut out = self.fixed.clone();
        for (k, &i) in self.cells.iter().enumerate() {
            out.set(i, side[k]);
        }
        out
    }

    pub(crate) fn stats(&self) -> FlowStats {
        self.g.stats()
    }
}

/// Minimizes Σ_{pairs touching `free`} w·[x_a ≠ x_b] + Σ_{i ∈ free} unary(i)·x_i
/// with x = `fixed` off `free`. Returns the smallest minimizer.
pub(crate) fn solve_binary(
    weights: &PerimeterWeights,
    free: &BinaryMask,
    fixed: &BinaryMask,
    unary: impl Fn(usize) -> f64,
) -> Result<(BinaryMask, FlowStats)> {
    let mut bg = BinaryGraph::new(weights, free, fixed)?;
    for k in 0..bg.cells.len() {
        let u = to_units(unary(bg.cells[k]))?;
        bg.add_unary_units(k, u);
    }
    let out = bg.solve();
    Ok((out, bg.stats()))
}

/// A Massari minimization instance.
#[derive(Clone, Debug)]
pub struct CutProblem {
    curvature: ScalarField,
    datum: BinaryMask,
    free: BinaryMask,
    weights: PerimeterWeights,
}

impl CutProblem {
    pub fn new(
        curvature: ScalarField,
        datum: BinaryMask,
        free: BinaryMask,
        weights: PerimeterWeights,
    ) -> Result<Self> {
        let dom = *datum.domain();
        dom.check_same(curvature.domain(), "curvature field")?;
        dom.check_same(free.domain(), "free region")?;
        weights.check_dim(&dom)?;
        check_frozen_ring(&free, &weights)?;
        Ok(Self {
            curvature,
            datum,
            free,
            weights,
        })
    }

    pub fn domain(&self) -> &GridDomain {
        self.datum.domain()
    }

    pub fn curvature(&self) -> &ScalarField {
        &self.curvature
    }

    pub fn datum(&self) -> &BinaryMask {
        &self.datum
    }

    pub fn free(&self) -> &BinaryMask {
        &self.free
    }

    pub fn weights(&self) -> &PerimeterWeights {
        &self.weights
    }

    /// P(F, U) − Σ_{F∩U} H h^n, with its two parts.
    pub fn energy(&self, f: &BinaryMask) -> Result<EnergyParts> {
        self.domain().check_same(f.domain(), "candidate")?;
        let per = perimeter(f, Some(&self.free), &self.weights)?;
        let vol = self.domain().cell_volume();
        let bulk: f64 = self
            .free
            .ones()
            .filter(|&i| f.get(i))
            .map(|i| self.curvature.get(i) * vol)
            .sum();
        Ok(EnergyParts {
            energy: per - bulk,
            perimeter: per,
            bulk,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyParts {
    pub energy: f64,
    pub perimeter: f64,
    pub bulk: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub nodes: usize,
    pub arcs: usize,
    /// Max-flow value in energy units.
    pub max_flow: f64,
}

impl From<FlowStats> for SolverStats {
    fn from(s: FlowStats) -> Self {
        Self {
            nodes: s.nodes,
            arcs: s.arcs,
            max_flow: s.flow as f64 * ENERGY_RESOLUTION,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CutSolution {
    pub minimizer: BinaryMask,
    pub energy: f64,
    pub perimeter: f64,
    pub bulk: f64,
    pub stats: SolverStats,
}

/// Smallest global minimizer of the discrete Massari energy.
pub fn minimize_massari(problem: &CutProblem) -> Result<CutSolution> {
    let vol = problem.domain().cell_volume();
    let h = problem.curvature.values();
    let (minimizer, stats) = solve_binary(&problem.weights, &problem.free, &problem.datum, |i| {
        -h[i] * vol
    })?;
    let parts = problem.energy(&minimizer)?;
    Ok(CutSolution {
        minimizer,
        energy: parts.energy,
        perimeter: parts.perimeter,
        bulk: parts.bulk,
        stats: stats.into(),
    })
}

/// Ξ(E, U): least perimeter in U with datum E, and the smallest perimeter minimizer.
pub fn xi(
    set: &BinaryMask,
    free: &BinaryMask,
    weights: &PerimeterWeights,
) -> Result<(f64, BinaryMask)> {
    set.domain().check_same(free.domain(), "free region")?;
    check_frozen_ring(free, weights)?;
    let (a, _) = solve_binary(weights, free, set, |_| 0.0)?;
    Ok((perimeter(&a, Some(free), weights)?, a))
}

/// Ψ(E, U) = P(E, U) − Ξ(E, U) ≥ 0.
pub fn psi(set: &BinaryMask, free: &BinaryMask, weights: &PerimeterWeights) -> Result<f64> {
    let (x, _) = xi(set, free, weights)?;
    let p = perimeter(set, Some(free), weights)?;
    Ok((p - x).max(0.0))
}

/// How a perturbation modifies the cells it covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationMode {
    Add,
    Remove,
    Toggle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub center_cell: usize,
    pub radius_cells: f64,
    pub mode: PerturbationMode,
    pub flipped: usize,
    pub improvement: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerturbationOptions {
    pub trials: usize,
    pub seed: u64,
    /// Largest ball radius of a perturbation, in cells.
    pub max_radius_cells: f64,
    /// Fraction of trials centered on cells adjacent to the candidate's boundary.
    pub boundary_bias: f64,
}

impl Default for PerturbationOptions {
    fn default() -> Self {
        Self {
            trials: 1000,
            seed: 0,
            max_radius_cells: 6.0,
            boundary_bias: 0.8,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MinimalityReport {
    pub trials: usize,
    /// Largest energy decrease achieved by a perturbation; ≤ 0 means none improved.
    pub max_improvement: f64,
    /// Trials whose improvement exceeded the rounding bound of the cut solver.
    pub improving: usize,
    pub worst: Option<Perturbation>,
}

/// Energy change of flipping `flipped` (sorted, all in the free region) in `f`.
pub(crate) fn flip_delta(problem: &CutProblem, f: &BinaryMask, flipped: &[usize]) -> f64 {
    let dom = problem.domain();
    let vol = dom.cell_volume();
    let face = dom.face_measure();
    let is_flipped = |j: usize| flipped.binary_search(&j).is_ok();
    let new = |j: usize| f.get(j) != is_flipped(j);
    let mut delta = 0.0;
    for &a in flipped {
        let h = problem.curvature.get(a);
        delta += if f.get(a) { h * vol } else { -h * vol };
        let c = dom.coords(a);
        for s in problem.weights.offsets() {
            let o = s.offset;
            for off in [o, [-o[0], -o[1], -o[2]]] {
                let Some(b) = dom.offset(c, off) else { continue };
                if is_flipped(b) && b < a {
                    continue;
                }
                let old_cut = f.get(a) != f.get(b);
                let new_cut = new(a) != new(b);
                delta += s.weight * face * (new_cut as i32 - old_cut as i32) as f64;
            }
        }
    }
    delta
}

/// Random local perturbations of `candidate` inside the free region; reports the best energy decrease.
pub fn verify_minimality(
    problem: &CutProblem,
    candidate: &BinaryMask,
    opts: &PerturbationOptions,
) -> Result<MinimalityReport> {
    let dom = *problem.domain();
    dom.check_same(candidate.domain(), "candidate")?;
    if !(opts.max_radius_cells >= 0.0) || !(0.0..=1.0).contains(&opts.boundary_bias) {
        return Err(invalid("perturbation options", "radius must be ≥ 0 and bias in [0, 1]"));
    }
    let free_cells: Vec<usize> = problem.free.ones().collect();
    if free_cells.is_empty() {
        return Err(invalid("free region", "empty"));
    }
    let near_boundary: Vec<usize> = free_cells
        .iter()
        .copied()
        .filter(|&i| {
            let c = dom.coords(i);
            problem.weights.offsets().iter().any(|s| {
                let o = s.offset;
                [o, [-o[0], -o[1], -o[2]]]
                    .iter()
                    .any(|&off| dom.offset(c, off).map_or(false, |j| candidate.get(j) != candidate.get(i)))
            })
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = MinimalityReport {
        trials: 0,
        max_improvement: f64::NEG_INFINITY,
        improving: 0,
        worst: None,
    };
    let dim = dom.dim();
    while report.trials < opts.trials {
        let center = if !near_boundary.is_empty() && rng.gen_bool(opts.boundary_bias) {
            near_boundary[rng.gen_range(0..near_boundary.len())]
        } else {
            free_cells[rng.gen_range(0..free_cells.len())]
        };
        let radius = if rng.gen_bool(0.2) {
            0.0
        } else {
            rng.gen_range(0.0..=opts.max_radius_cells)
        };
        let mode = match rng.gen_range(0..3) {
            0 => PerturbationMode::Add,
            1 => PerturbationMode::Remove,
            _ => PerturbationMode::Toggle,
        };
        let c = dom.coords(center);
        let r = radius.floor() as i32;
        let mut flipped = Vec::new();
        let span = |d: usize| if d < dim { -r..=r } else { 0..=0 };
        for dz in span(2) {
            for dy in span(1) {
                for dx in span(0) {
                    if ((dx * dx + dy * dy + dz * dz) as f64) > radius * radius {
                        continue;
                    }
                    let Some(j) = dom.offset(c, [dx, dy, dz]) else { continue };
                    if !problem.free.get(j) {
                        continue;
                    }
                    let flip = match mode {
                        PerturbationMode::Add => !candidate.get(j),
                        PerturbationMode::Remove => candidate.get(j),
                        PerturbationMode::Toggle => true,
                    };
                    if flip {
                        flipped.push(j);
                    }
                }
            }
        }
        if flipped.is_empty() {
            continue;
        }
        flipped.sort_unstable();
        report.trials += 1;
        let improvement = -flip_delta(problem, candidate, &flipped);
        // each rounded term is off by at most half a unit
        let rounding = ENERGY_RESOLUTION * (flipped.len() * (1 + 2 * problem.weights.offsets().len())) as f64;
        if improvement > rounding {
            report.improving += 1;
        }
        if improvement > report.max_improvement {
            report.max_improvement = improvement;
            report.worst = Some(Perturbation {
                center_cell: center,
                radius_cells: radius,
                mode,
                flipped: flipped.len(),
                improvement,
            });
        }
    }
    Ok(report)
}
