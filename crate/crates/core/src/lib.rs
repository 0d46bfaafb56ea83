//! Discrete variational mean curvature on uniform grids.
//!
//! Sets are cell masks, perimeters are pairwise-interaction sums, and every
//! prescribed-curvature energy is solved exactly by a minimum cut.

pub mod error;
pub mod grid;
pub mod io;
pub mod maxflow;
pub mod cut;
pub mod barozzi;
pub mod counterexamples;
pub mod regularity;
pub mod graph_pmc;

pub use error::{Error, Result};
pub use grid::{
    lp_norm, perimeter, rasterize, BinaryMask, FieldUnit, GridDomain, LpNorm, PerimeterWeights,
    Point, Raster, ScalarField, Shape,
};
pub use cut::{minimize_massari, psi, verify_minimality, xi, CutProblem, CutSolution, MinimalityReport};
pub use barozzi::{barozzi_curvature, lambda_sweep, BarozziCurvature, LambdaSchedule, LambdaSweep};
pub use counterexamples::{Integrability, LpClassification};
pub use regularity::{iterate_exponent, psi_decay_fit, ExponentParams, ExponentReport, PsiDecayReport};
pub use graph_pmc::{minimize_nonparametric, GraphProblem, GraphSolution, NodeGrid, SolverOptions};
