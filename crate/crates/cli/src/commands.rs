//! Subcommands. Flags take physical units (lengths, curvatures); cell counts are derived.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use varcurv_core::barozzi::{barozzi_curvature, barozzi_full, lambda_sweep, refine_sweep, BarozziOptions};
use varcurv_core::counterexamples::{
    cusp2d_curvature, cusp2d_lp_classify, cusp2d_region, cusp2d_set, cusp_nd_bounds,
    cusp_nd_curvature_bound_and_classify, cusp_nd_set, log_example_lipschitz_ratio, lp_threshold, Cusp2dParams,
    Integrability, LpClassification,
};
use varcurv_core::cut::{verify_minimality, PerturbationOptions};
use varcurv_core::graph_pmc::{
    c11_witness_2d, check_divergence_bound, minimize_nonparametric, random_piecewise_curvature,
    write_solution_csv, GraphProblem, NodeGrid, SolverOptions,
};
use varcurv_core::io::{load_cut_problem, read_json, read_mask, write_field, write_json, write_mask};
use varcurv_core::regularity::{dyadic_radii, iterate_exponent, psi_decay_fit, ExponentParams};
use varcurv_core::{
    minimize_massari, BinaryMask, FieldUnit, GridDomain, LambdaSchedule, PerimeterWeights, ScalarField,
};

/// Flags shared by every run.
#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
pub struct Common {
    /// Artifact directory; receives the outputs and `manifest.json`.
    #[arg(long, default_value = "varcurv-out")]
    #[serde(skip)]
    pub out: PathBuf,
    /// Flat `key = value` file of flags; command-line flags override it.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Minimize the Massari energy of a cut problem bundle.
    Minimize(MinimizeArgs),
    /// Barozzi curvature of a set by a λ-sweep.
    Curvature(CurvatureArgs),
    /// Counterexample generators and L^p classifiers.
    Counterexample(CounterexampleArgs),
    /// Ψ-decay fit of a set around a point.
    PsiFit(PsiFitArgs),
    /// Hölder exponent iteration α₀, g(α₀), … and its fixed point.
    Exponent(ExponentArgs),
    /// Nonparametric prescribed-curvature graph.
    Pmc(PmcArgs),
    /// Random-perturbation minimality report of a candidate set.
    Verify(VerifyArgs),
    /// Re-run a manifest into a new directory and compare outputs byte for byte.
    #[serde(skip)]
    Replay(ReplayArgs),
}

pub const NAMES: [&str; 8] = ["minimize", "curvature", "counterexample", "psi-fit", "exponent", "pmc", "verify", "replay"];

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Minimize(_) => "minimize",
            Command::Curvature(_) => "curvature",
            Command::Counterexample(_) => "counterexample",
            Command::PsiFit(_) => "psi-fit",
            Command::Exponent(_) => "exponent",
            Command::Pmc(_) => "pmc",
            Command::Verify(_) => "verify",
            Command::Replay(_) => "replay",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Minimize(a) => &a.common,
            Command::Curvature(a) => &a.common,
            Command::Counterexample(a) => &a.common,
            Command::PsiFit(a) => &a.common,
            Command::Exponent(a) => &a.common,
            Command::Pmc(a) => &a.common,
            Command::Verify(a) => &a.common,
            Command::Replay(a) => &a.common,
        }
    }

    pub fn common_mut(&mut self) -> &mut Common {
        match self {
            Command::Minimize(a) => &mut a.common,
            Command::Curvature(a) => &mut a.common,
            Command::Counterexample(a) => &mut a.common,
            Command::PsiFit(a) => &mut a.common,
            Command::Exponent(a) => &mut a.common,
            Command::Pmc(a) => &mut a.common,
            Command::Verify(a) => &mut a.common,
            Command::Replay(a) => &mut a.common,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Pmc(a) => Some(a.seed),
            Command::Verify(a) => Some(a.seed),
            _ => None,
        }
    }

    /// Makes input paths absolute so a manifest replays from any working directory.
    pub fn absolutize_inputs(&mut self) -> Result<()> {
        for (flag, p) in self.inputs_mut() {
            let abs = std::fs::canonicalize(&*p).with_context(|| format!("{flag}: cannot open {}", p.display()))?;
            *p = abs;
        }
        Ok(())
    }

    pub fn inputs(&mut self) -> Vec<PathBuf> {
        self.inputs_mut().into_iter().map(|(_, p)| p.clone()).collect()
    }

    fn inputs_mut(&mut self) -> Vec<(&'static str, &mut PathBuf)> {
        match self {
            Command::Minimize(a) => vec![("--problem", &mut a.problem)],
            Command::Curvature(a) => vec![("--set", &mut a.set)],
            Command::PsiFit(a) => vec![("--set", &mut a.set)],
            Command::Pmc(a) => a.problem.iter_mut().map(|p| ("--problem", p)).collect(),
            Command::Verify(a) => vec![("--problem", &mut a.problem), ("--candidate", &mut a.candidate)],
            _ => Vec::new(),
        }
    }

    pub fn run(&self, out: &mut Artifacts) -> Result<()> {
        match self {
            Command::Minimize(a) => minimize(a, out),
            Command::Curvature(a) => curvature(a, out),
            Command::Counterexample(a) => counterexample(a, out),
            Command::PsiFit(a) => psi_fit(a, out),
            Command::Exponent(a) => exponent(a, out),
            Command::Pmc(a) => pmc(a, out),
            Command::Verify(a) => verify(a, out),
            Command::Replay(_) => unreachable!("replay is dispatched by main"),
        }
    }
}

/// Output directory plus the names written so far.
pub struct Artifacts {
    pub dir: PathBuf,
    pub outputs: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir).with_context(|| format!("--out: cannot create {}", dir.display()))?;
        Ok(Self { dir, outputs: Vec::new() })
    }

    /// Path of a new artifact; mask and field sidecars are recorded too.
    pub fn file(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        if name.ends_with(".pbm") || name.ends_with(".f64") {
            self.outputs.push(Path::new(name).with_extension("json").to_string_lossy().into_owned());
        }
        self.dir.join(name)
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.file(name);
        std::fs::write(&p, text).with_context(|| format!("cannot write {}", p.display()))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        Ok(write_json(&self.file(name), value)?)
    }
}

fn weights_for(name: &Option<String>, dim: usize) -> Result<PerimeterWeights> {
    let w = match name {
        Some(n) => PerimeterWeights::by_name(n).context("--weights")?,
        None => PerimeterWeights::standard(dim)?,
    };
    ensure!(w.dim() == dim, "--weights: stencil `{}` is {}D but the set is {dim}D", w.name(), w.dim());
    Ok(w)
}

/// f64 that may be infinite: JSON numbers, or the strings `inf` / `-inf`.
mod extended_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

// ------------------------------------------------------------------ minimize

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct MinimizeArgs {
    /// Problem bundle JSON (curvature field, datum and free masks, stencil name).
    #[arg(long)]
    pub problem: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Serialize)]
struct MinimizeReport {
    energy: f64,
    perimeter: f64,
    bulk: f64,
    cells: usize,
    stats: varcurv_core::cut::SolverStats,
}

fn minimize(a: &MinimizeArgs, out: &mut Artifacts) -> Result<()> {
    let problem = load_cut_problem(&a.problem).with_context(|| format!("--problem {}", a.problem.display()))?;
    let sol = minimize_massari(&problem)?;
    write_mask(&out.file("minimizer.pbm"), &sol.minimizer)?;
    let rep = MinimizeReport {
        energy: sol.energy,
        perimeter: sol.perimeter,
        bulk: sol.bulk,
        cells: sol.minimizer.count(),
        stats: sol.stats,
    };
    out.json("energy.json", &rep)?;
    println!("energy = {}  perimeter = {}  bulk = {}", rep.energy, rep.perimeter, rep.bulk);
    Ok(())
}

// ------------------------------------------------------------------ curvature

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct CurvatureArgs {
    /// Set E as a P4 mask with JSON sidecar.
    #[arg(long)]
    pub set: PathBuf,
    /// Stencil name; defaults to n16 in 2D and n26 in 3D.
    #[arg(long)]
    pub weights: Option<String>,
    /// Number of geometric λ values.
    #[arg(long, default_value_t = 64)]
    pub points: usize,
    /// Smallest λ (1/length); defaults to the domain's natural range.
    #[arg(long)]
    pub lambda_min: Option<f64>,
    /// Largest λ (1/length).
    #[arg(long)]
    pub lambda_max: Option<f64>,
    /// Refine λ steps whose masks change down to this ratio.
    #[arg(long)]
    pub refine_ratio: Option<f64>,
    /// Also compute −H of the complement in a padded box.
    #[arg(long)]
    pub full: bool,
    /// Write every E_λ into `sweep/`.
    #[arg(long)]
    pub archive: bool,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Serialize)]
struct CurvatureSummary {
    uncovered: usize,
    l1_norm: f64,
    lambdas: Vec<f64>,
}

#[derive(Serialize)]
struct SweepIndex {
    lambdas: Vec<f64>,
    masks: Vec<String>,
}

fn curvature(a: &CurvatureArgs, out: &mut Artifacts) -> Result<()> {
    let set = read_mask(&a.set).with_context(|| format!("--set {}", a.set.display()))?;
    let dom = *set.domain();
    let w = weights_for(&a.weights, dom.dim())?;
    let (curv, lambdas) = if a.full {
        ensure!(
            a.lambda_min.is_none() && a.lambda_max.is_none() && !a.archive,
            "--full: uses the default λ range per side and keeps no archive"
        );
        let opts = BarozziOptions { points: a.points, refine_ratio: a.refine_ratio, ..Default::default() };
        (barozzi_full(&set, &w, &opts)?, Vec::new())
    } else {
        let base = LambdaSchedule::default_for(&dom)?;
        let lo = a.lambda_min.unwrap_or(base.values()[0]);
        let hi = a.lambda_max.unwrap_or(*base.values().last().expect("nonempty schedule"));
        let sched = LambdaSchedule::geometric(lo, hi, a.points).context("--lambda-min/--lambda-max/--points")?;
        let ones = ScalarField::constant(dom, 1.0, Some(FieldUnit::Dimensionless))?;
        let mut sweep = lambda_sweep(&set, &ones, &sched, &w)?;
        if let Some(r) = a.refine_ratio {
            sweep = refine_sweep(&sweep, &w, r).context("--refine-ratio")?;
        }
        if a.archive {
            std::fs::create_dir_all(out.dir.join("sweep"))?;
            let mut names = Vec::new();
            for (k, (lam, m)) in sweep.schedule().values().iter().zip(sweep.masks()).enumerate() {
                let name = format!("sweep/lambda_{k:03}_{lam:.6e}.pbm");
                write_mask(&out.file(&name), m)?;
                names.push(name);
            }
            out.json(
                "sweep/index.json",
                &SweepIndex { lambdas: sweep.schedule().values().to_vec(), masks: names },
            )?;
        }
        (barozzi_curvature(&sweep)?, sweep.schedule().values().to_vec())
    };
    write_field(&out.file("curvature.f64"), &curv.values)?;
    write_mask(&out.file("covered.pbm"), &curv.covered)?;
    let summary = CurvatureSummary { uncovered: curv.uncovered, l1_norm: curv.l1_norm(), lambdas };
    out.json("curvature.json", &summary)?;
    println!("uncovered cells = {}  |H|_1 = {}", summary.uncovered, summary.l1_norm);
    Ok(())
}

// ------------------------------------------------------------------ counterexample

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Planar set below x₂ = sgn(x₁)|x₁|^{1+α}.
    Cusp2d,
    /// Rotationally symmetric cusp body in R^n.
    CuspNd,
    /// Graph of the logarithmic non-C^{1,1} example.
    Log,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct CounterexampleArgs {
    #[arg(long, value_enum)]
    pub family: Family,
    /// Cusp exponent α ∈ (0, 1).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Integrability exponent p of the curvature.
    #[arg(long)]
    pub p: Option<f64>,
    /// Ambient dimension for cusp-nd.
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    /// Print whether ‖H‖_p is finite, with the threshold (p − n)/(p + 1).
    #[arg(long)]
    pub classify: bool,
    /// Write the classification table over α ∈ {0.05, …, 0.95}, p ∈ {2.5, 3, 4, 6, 10}, n ∈ {2, 3}.
    #[arg(long)]
    pub threshold_table: bool,
    /// Rasterize the set (and the planar curvature) with this cell spacing (length).
    #[arg(long)]
    pub spacing: Option<f64>,
    /// Exponent s of the log example.
    #[arg(long, default_value_t = 0.5)]
    pub s: f64,
    /// Dyadic scales 2^-1 … 2^-levels for the log example's Lipschitz ratio.
    #[arg(long, default_value_t = 12)]
    pub levels: i32,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

fn class_name(c: Integrability) -> &'static str {
    match c {
        Integrability::Finite => "finite",
        Integrability::Divergent => "divergent",
    }
}

fn classification(n: usize, alpha: f64, p: f64) -> Result<LpClassification> {
    Ok(if n == 2 {
        cusp2d_lp_classify(alpha, p)?
    } else {
        cusp_nd_curvature_bound_and_classify(n, alpha, p)?.classification
    })
}

fn counterexample(a: &CounterexampleArgs, out: &mut Artifacts) -> Result<()> {
    let n = if a.family == Family::Cusp2d { 2 } else { a.n };
    if a.threshold_table {
        let mut csv = String::from("n,p,alpha,classification,alpha_opt\n");
        for n in [2usize, 3] {
            for p in [2.5, 3.0, 4.0, 6.0, 10.0] {
                for k in 1..=19 {
                    let alpha = k as f64 * 0.05;
                    let c = classification(n, alpha, p)?;
                    csv += &format!("{n},{p},{alpha:.2},{},{}\n", class_name(c.class), lp_threshold(n, p));
                }
            }
        }
        out.text("thresholds.csv", &csv)?;
    }
    if a.classify {
        ensure!(a.family != Family::Log, "--classify: applies to cusp families only");
        let alpha = a.alpha.context("--alpha: required with --classify")?;
        let p = a.p.context("--p: required with --classify")?;
        let c = classification(n, alpha, p)?;
        println!("{}, threshold {}", class_name(c.class), c.threshold);
        out.json("classification.json", &c)?;
    }
    if let Some(h) = a.spacing {
        ensure!(h > 0.0 && h.is_finite(), "--spacing: must be a positive length");
        let alpha = a.alpha.context("--alpha: required with --spacing")?;
        match a.family {
            Family::Cusp2d => {
                let cells = (2.0 / h).ceil() as usize;
                let half = cells as f64 * h / 2.0;
                let dom = GridDomain::new(&[cells, cells], h, &[-half, -half])?;
                let set = cusp2d_set(alpha, dom)?;
                let field = ScalarField::from_fn(dom, Some(FieldUnit::Curvature), |x| {
                    let y = [x[0], x[1]];
                    if x[0].abs() < 1.0 && x[1].abs() < 1.0 && cusp2d_region(alpha, y).is_open_piece() {
                        Cusp2dParams::new(alpha, y).and_then(|p| cusp2d_curvature(&p)).unwrap_or(0.0)
                    } else {
                        0.0
                    }
                })?;
                write_mask(&out.file("set.pbm"), &set)?;
                write_field(&out.file("curvature.f64"), &field)?;
            }
            Family::CuspNd => {
                let (lo, hi) = cusp_nd_bounds(n, alpha);
                let mut counts = vec![0usize; n];
                let mut origin = vec![0.0; n];
                for d in 0..n {
                    counts[d] = ((hi[d] - lo[d]) / h).ceil() as usize + 4;
                    origin[d] = lo[d] - 2.0 * h;
                }
                let dom = GridDomain::new(&counts, h, &origin)?;
                write_mask(&out.file("set.pbm"), &cusp_nd_set(n, alpha, dom)?)?;
            }
            Family::Log => bail!("--spacing: the log example has no set generator"),
        }
    }
    if a.family == Family::Log {
        ensure!(a.levels >= 1, "--levels: must be at least 1");
        let mut csv = String::from("delta,ratio\n");
        for k in 1..=a.levels {
            let d = 2f64.powi(-k);
            csv += &format!("{d},{}\n", log_example_lipschitz_ratio(a.s, d).context("--s")?);
        }
        out.text("lipschitz.csv", &csv)?;
    }
    ensure!(!out.outputs.is_empty(), "nothing to do: pass --classify, --threshold-table, --spacing or --family log");
    Ok(())
}

// ------------------------------------------------------------------ psi-fit

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct PsiFitArgs {
    #[arg(long)]
    pub set: PathBuf,
    /// Ball center, comma separated coordinates.
    #[arg(long, value_delimiter = ',', num_args = 1, allow_hyphen_values = true)]
    pub center: Vec<f64>,
    /// Smallest radius (length).
    #[arg(long)]
    pub r_min: f64,
    /// Largest radius (length).
    #[arg(long)]
    pub r_max: f64,
    #[arg(long, default_value_t = 2)]
    pub per_octave: usize,
    #[arg(long)]
    pub weights: Option<String>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

fn psi_fit(a: &PsiFitArgs, out: &mut Artifacts) -> Result<()> {
    let set = read_mask(&a.set).with_context(|| format!("--set {}", a.set.display()))?;
    let dim = set.domain().dim();
    ensure!(a.center.len() == dim, "--center: {} coordinates for a {dim}D set", a.center.len());
    let mut c = [0.0; 3];
    c[..dim].copy_from_slice(&a.center);
    let w = weights_for(&a.weights, dim)?;
    let radii = dyadic_radii(a.r_min, a.r_max, a.per_octave).context("--r-min/--r-max")?;
    let rep = psi_decay_fit(&set, c, &radii, &w)?;
    let mut csv = String::from("r,psi\n");
    for (r, p) in rep.radii.iter().zip(&rep.psi) {
        csv += &format!("{r},{p}\n");
    }
    out.text("psi.csv", &csv)?;
    out.json("psi_fit.json", &rep)?;
    match (rep.exact_minimizer, rep.slope, rep.implied_alpha) {
        (true, ..) => println!("exact minimizer: Psi = 0 at every radius"),
        (_, Some(s), Some(al)) => println!("slope = {s}  implied alpha = {al}"),
        _ => {}
    }
    Ok(())
}

// ------------------------------------------------------------------ exponent

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct ExponentArgs {
    #[arg(long)]
    pub n: usize,
    /// Curvature integrability p > n; `inf` allowed.
    #[arg(long)]
    #[serde(with = "extended_float")]
    pub p: f64,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

fn exponent(a: &ExponentArgs, out: &mut Artifacts) -> Result<()> {
    let params = ExponentParams::new(a.n, a.p).context("--n/--p")?;
    let rep = iterate_exponent(&params)?;
    let mut csv = String::from("k,alpha_k\n");
    for (k, v) in rep.iterates.iter().enumerate() {
        csv += &format!("{k},{v}\n");
    }
    println!("alpha0 = {}", params.alpha0());
    println!("alpha_star = {}", rep.fixed_point);
    print!("{csv}");
    out.text("iterates.csv", &csv)?;
    out.json("exponent.json", &rep)?;
    Ok(())
}

// ------------------------------------------------------------------ pmc

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct PmcArgs {
    /// Serialized GraphProblem; otherwise one is generated from the flags below.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    /// Base dimension, 1 or 2.
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    /// Nodes per axis.
    #[arg(long, default_value_t = 257)]
    pub nodes: usize,
    /// Base interval (or square side) ends, lengths.
    #[arg(long, default_value_t = -0.5, allow_hyphen_values = true)]
    pub lo: f64,
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    pub hi: f64,
    /// Height bound: graphs take values in (−r, r).
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    /// Constant curvature H (1/length).
    #[arg(long, allow_hyphen_values = true, conflicts_with = "random_bound")]
    pub constant_curvature: Option<f64>,
    /// Random piecewise-constant H with |H| ≤ this bound (1/length), drawn from the seed.
    #[arg(long)]
    pub random_bound: Option<f64>,
    #[arg(long, default_value_t = 6)]
    pub blocks_y: usize,
    #[arg(long, default_value_t = 8)]
    pub blocks_s: usize,
    /// Boundary values g(y) = offset + slope·y₁.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub boundary_offset: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub boundary_slope: f64,
    /// Exponent q of the divergence bound check.
    #[arg(long, default_value_t = f64::INFINITY)]
    #[serde(with = "extended_float")]
    pub q: f64,
    /// Stationarity tolerance (1/length).
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 5)]
    pub starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Serialize)]
struct PmcReport {
    energy: f64,
    residual: f64,
    iterations: usize,
    start_energies: Vec<f64>,
    divergence: varcurv_core::graph_pmc::DivergenceBoundReport,
    lipschitz: Option<varcurv_core::graph_pmc::LipschitzReport>,
}

fn pmc(a: &PmcArgs, out: &mut Artifacts) -> Result<()> {
    let problem = match &a.problem {
        Some(p) => read_json::<GraphProblem>(p)
            .and_then(GraphProblem::rebuild)
            .with_context(|| format!("--problem {}", p.display()))?,
        None => {
            let grid = NodeGrid::new(a.dim, a.nodes, a.lo, a.hi).context("--dim/--nodes/--lo/--hi")?;
            let (c, s) = (a.boundary_offset, a.boundary_slope);
            let g = move |y: &[f64; 2]| c + s * y[0];
            match (a.constant_curvature, a.random_bound) {
                (Some(h), None) => GraphProblem::from_fn(grid, a.r, move |_, _| h, g, None)?,
                (None, Some(b)) => {
                    ensure!(b >= 0.0, "--random-bound: must be ≥ 0");
                    let h = random_piecewise_curvature(a.seed, a.blocks_y, a.blocks_s, b, (a.lo, a.hi), a.r);
                    GraphProblem::from_fn(grid, a.r, h, g, None)?
                }
                _ => bail!("--problem, --constant-curvature or --random-bound: exactly one source of H is needed"),
            }
        }
    };
    let opts = SolverOptions {
        tolerance: a.tolerance,
        max_iterations: a.max_iterations,
        starts: a.starts,
        seed: a.seed,
    };
    let sol = minimize_nonparametric(&problem, &opts)?;
    let phi = match problem.phi() {
        Some(p) => p.to_vec(),
        None => vec![problem.sup_norm(); problem.grid().len()],
    };
    let divergence = check_divergence_bound(&problem, &sol, &phi, a.q).context("--q")?;
    let lipschitz = if problem.grid().dim() == 1 { Some(c11_witness_2d(&problem, &sol)?) } else { None };
    write_solution_csv(&out.file("solution.csv"), &sol)?;
    out.json("problem.json", &problem)?;
    let rep = PmcReport {
        energy: sol.energy,
        residual: sol.residual,
        iterations: sol.trace.len(),
        start_energies: sol.start_energies.clone(),
        divergence,
        lipschitz,
    };
    out.json("report.json", &rep)?;
    println!(
        "energy = {}  residual = {:e}  divergence bound {}",
        rep.energy,
        rep.residual,
        if rep.divergence.passes { "holds" } else { "violated" }
    );
    Ok(())
}

// ------------------------------------------------------------------ verify

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct VerifyArgs {
    /// Problem bundle JSON.
    #[arg(long)]
    pub problem: PathBuf,
    /// Candidate minimizer mask.
    #[arg(long)]
    pub candidate: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest perturbation radius (length); defaults to 6 cells.
    #[arg(long)]
    pub max_radius: Option<f64>,
    /// Fraction of perturbations centered next to the candidate's boundary.
    #[arg(long, default_value_t = 0.8)]
    pub boundary_bias: f64,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

fn verify(a: &VerifyArgs, out: &mut Artifacts) -> Result<()> {
    let problem = load_cut_problem(&a.problem).with_context(|| format!("--problem {}", a.problem.display()))?;
    let cand: BinaryMask = read_mask(&a.candidate).with_context(|| format!("--candidate {}", a.candidate.display()))?;
    let h = problem.domain().spacing();
    let mut opts = PerturbationOptions { trials: a.trials, seed: a.seed, boundary_bias: a.boundary_bias, ..Default::default() };
    if let Some(r) = a.max_radius {
        ensure!(r >= 0.0, "--max-radius: must be ≥ 0");
        opts.max_radius_cells = r / h;
    }
    let rep = verify_minimality(&problem, &cand, &opts).context("--candidate")?;
    out.json("minimality.json", &rep)?;
    println!("trials = {}  max improvement = {:e}  improving = {}", rep.trials, rep.max_improvement, rep.improving);
    Ok(())
}

// ------------------------------------------------------------------ replay

#[derive(Args, Clone, Debug)]
pub struct ReplayArgs {
    /// Manifest of the run to repeat.
    pub manifest: PathBuf,
    #[command(flatten)]
    pub common: Common,
}
