//! The sharp counterexamples: the planar cusp with an explicit normal extension,
//! the convex cusp body in n ≥ 2 with its ball-based curvature bound, and the
//! three-dimensional C^{1,α}-but-not-C^{1,1} graph.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barozzi::{barozzi_curvature, compose_curvature, lambda_sweep, refine_sweep, LambdaSchedule};
use crate::cut::{verify_minimality, CutProblem, MinimalityReport, PerturbationOptions};
use crate::error::{invalid, Error, Result};
use crate::grid::{dist2, BinaryMask, FieldUnit, GridDomain, PerimeterWeights, Point, ScalarField};

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")))
    }
}

/// α_opt(n, p) = (p − n)/(p + 1); 1 for p = ∞. Nonpositive when p ≤ n.
pub fn lp_threshold(n: usize, p: f64) -> f64 {
    if p == f64::INFINITY {
        1.0
    } else {
        (p - n as f64) / (p + 1.0)
    }
}

// ---------------------------------------------------------------- planar cusp

/// Pieces of (−1, 1)² cut out by the curves |x₂| = |x₁|^{1+α}.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CuspRegion {
    /// |x₂| < |x₁|^{1+α}, x₁ > 0
    D1Plus,
    D1Minus,
    /// |x₂| > |x₁|^{1+α}, x₂ > 0
    D2Plus,
    D2Minus,
    /// x₂ = sgn(x₁)|x₁|^{1+α}
    Boundary,
    /// x₂ = −sgn(x₁)|x₁|^{1+α}, x ≠ 0
    Interface,
}

impl CuspRegion {
    pub fn is_open_piece(self) -> bool {
        !matches!(self, CuspRegion::Boundary | CuspRegion::Interface)
    }
}

pub fn cusp2d_region(alpha: f64, x: [f64; 2]) -> CuspRegion {
    let g = x[0].abs().powf(1.0 + alpha);
    let a = x[1].abs();
    if a < g {
        if x[0] > 0.0 {
            CuspRegion::D1Plus
        } else {
            CuspRegion::D1Minus
        }
    } else if a > g {
        if x[1] > 0.0 {
            CuspRegion::D2Plus
        } else {
            CuspRegion::D2Minus
        }
    } else if x[1] == x[0].signum() * g || (x[0] == 0.0 && x[1] == 0.0) {
        CuspRegion::Boundary
    } else {
        CuspRegion::Interface
    }
}

/// α, a point of (−1, 1)², and the piece whose formulas apply there.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cusp2dParams {
    pub alpha: f64,
    pub x: [f64; 2],
    pub region: CuspRegion,
}

impl Cusp2dParams {
    pub fn new(alpha: f64, x: [f64; 2]) -> Result<Self> {
        Self::with_region(alpha, x, cusp2d_region(alpha, x))
    }

    /// On a curve, any adjacent open piece may be chosen for one-sided evaluation.
    pub fn with_region(alpha: f64, x: [f64; 2], region: CuspRegion) -> Result<Self> {
        check_alpha(alpha)?;
        if !(x[0].abs() < 1.0 && x[1].abs() < 1.0) {
            return Err(invalid("x", format!("{x:?} is outside (-1, 1)^2")));
        }
        let actual = cusp2d_region(alpha, x);
        let ok = region == actual
            || (!actual.is_open_piece() && {
                use CuspRegion::*;
                let d1 = if x[0] >= 0.0 { D1Plus } else { D1Minus };
                let d2 = if x[1] >= 0.0 { D2Plus } else { D2Minus };
                region == d1 || region == d2
            });
        if !ok {
            return Err(invalid("region", format!("{region:?} is inconsistent with {x:?} ({actual:?})")));
        }
        Ok(Self { alpha, x, region })
    }
}

/// E = {x₂ < sgn(x₁)|x₁|^{1+α}}, by cell centers; cells outside (−1, 1)² follow the same predicate.
pub fn cusp2d_set(alpha: f64, domain: GridDomain) -> Result<BinaryMask> {
    check_alpha(alpha)?;
    if domain.dim() != 2 {
        return Err(invalid("domain", "the planar cusp needs n = 2"));
    }
    let up = domain.upper();
    let o = domain.origin();
    if o[0] > -1.0 || o[1] > -1.0 || up[0] < 1.0 || up[1] < 1.0 {
        return Err(Error::Precondition(format!(
            "domain [{:?}, {:?}] does not cover (-1, 1)^2",
            &o[..2],
            &up[..2]
        )));
    }
    Ok(BinaryMask::from_predicate(domain, |x| {
        x[1] < x[0].signum() * x[0].abs().powf(1.0 + alpha)
    }))
}

/// (−u, 1)/√(1 + u²)
fn tilted(u: f64) -> [f64; 2] {
    let s = (1.0 + u * u).sqrt();
    [-u / s, 1.0 / s]
}

/// The continuous extension V of the outward normal.
pub fn cusp2d_normal_field(alpha: f64, x: [f64; 2]) -> [f64; 2] {
    let a1 = 1.0 + alpha;
    match cusp2d_region(alpha, x) {
        CuspRegion::D2Plus | CuspRegion::D2Minus => tilted(a1 * x[1].abs().powf(alpha / a1)),
        // D₁ and both curves share the |x₁| formula
        _ => tilted(a1 * x[0].abs().powf(alpha)),
    }
}

/// H = div V on the piece named by the region tag.
pub fn cusp2d_curvature(params: &Cusp2dParams) -> Result<f64> {
    let alpha = params.alpha;
    let a1 = 1.0 + alpha;
    let x = params.x;
    // V = (−u, 1)/√(1+u²) with u = (1+α)t^e; only the component along t varies,
    // and its derivative is −u′/(1+u²)^{3/2} (D₁) or −u u′/(1+u²)^{3/2} (D₂)
    let (t, e, power, sign) = match params.region {
        CuspRegion::D1Plus => (x[0], alpha, alpha - 1.0, -1.0),
        CuspRegion::D1Minus => (-x[0], alpha, alpha - 1.0, 1.0),
        CuspRegion::D2Plus => (x[1], alpha / a1, 2.0 * alpha / a1 - 1.0, -1.0),
        CuspRegion::D2Minus => (-x[1], alpha / a1, 2.0 * alpha / a1 - 1.0, 1.0),
        r => {
            return Err(Error::Precondition(format!(
                "{x:?} lies on a branch curve ({r:?}); pass an adjacent piece"
            )))
        }
    };
    if !(t > 0.0) {
        return Err(Error::Precondition(format!("{x:?} is on a singular axis")));
    }
    let u = a1 * t.powf(e);
    Ok(sign * alpha * a1 * t.powf(power) / (1.0 + u * u).powf(1.5))
}

/// c(α) = α(1+α): the largest prefactor of |H| over both pieces.
pub fn cusp2d_bound_constant(alpha: f64) -> f64 {
    alpha * (1.0 + alpha)
}

/// c(α)(|x₁|^{α−1} 1_{D₁} + |x₂|^{2α/(1+α)−1} 1_{D₂}); ∞ on the curves.
pub fn cusp2d_curvature_bound(alpha: f64, x: [f64; 2]) -> f64 {
    let c = cusp2d_bound_constant(alpha);
    match cusp2d_region(alpha, x) {
        CuspRegion::D1Plus | CuspRegion::D1Minus => c * x[0].abs().powf(alpha - 1.0),
        CuspRegion::D2Plus | CuspRegion::D2Minus => c * x[1].abs().powf(2.0 * alpha / (1.0 + alpha) - 1.0),
        _ => f64::INFINITY,
    }
}

// ---------------------------------------------------------------- L^p classification

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrability {
    Finite,
    Divergent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpClassification {
    pub class: Integrability,
    pub threshold: f64,
    /// Exponents e of the power terms t^e in the threshold integral over (0, 1).
    pub exponents: Vec<f64>,
    /// Quadrature of the threshold integral, when finite.
    pub quadrature: Option<f64>,
    /// Σ 1/(e + 1), when finite.
    pub closed_form: Option<f64>,
}

const DYADIC_LEVELS: usize = 64;
const GAUSS_POINTS: usize = 24;

/// ∫₀¹ Σ t^{e_k} dt: Gauss–Legendre on [2^{−j−1}, 2^{−j}] for j < 64, and the power's
/// antiderivative on [0, 2^{−64}]. `None` if some e ≤ −1.
fn power_integral(exponents: &[f64]) -> Option<f64> {
    if exponents.iter().any(|&e| e <= -1.0) {
        return None;
    }
    let gl = GaussLegendre::new(NonZeroUsize::new(GAUSS_POINTS).expect("nonzero"));
    let f = |t: f64| exponents.iter().map(|&e| t.powf(e)).sum::<f64>();
    let mut total = 0.0;
    let mut hi = 1.0f64;
    for _ in 0..DYADIC_LEVELS {
        let lo = hi / 2.0;
        total += gl.integrate(lo, hi, f);
        hi = lo;
    }
    total += exponents.iter().map(|&e| hi.powf(e + 1.0) / (e + 1.0)).sum::<f64>();
    Some(total)
}

fn classify(exponents: Vec<f64>, threshold: f64, alpha: f64) -> LpClassification {
    let finite = alpha > threshold;
    let quadrature = if finite { power_integral(&exponents) } else { None };
    let closed_form = quadrature.map(|_| exponents.iter().map(|&e| 1.0 / (e + 1.0)).sum());
    LpClassification {
        class: if finite { Integrability::Finite } else { Integrability::Divergent },
        threshold,
        exponents,
        quadrature,
        closed_form,
    }
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(invalid("p", format!("must lie in [1, ∞), got {p}")))
    }
}

/// ∫₀¹ t^{1+α−(1−α)p} + t^{1/(1+α) − (1−α)p/(1+α)} dt, finite iff α > (p−2)/(p+1).
pub fn cusp2d_lp_classify(alpha: f64, p: f64) -> Result<LpClassification> {
    check_alpha(alpha)?;
    check_p(p)?;
    let a1 = 1.0 + alpha;
    let e1 = 1.0 + alpha - (1.0 - alpha) * p;
    let e2 = 1.0 / a1 - (1.0 - alpha) * p / a1;
    Ok(classify(vec![e1, e2], lp_threshold(2, p), alpha))
}

// ---------------------------------------------------------------- convex cusp body, n ≥ 2

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CuspNdParams {
    pub n: usize,
    pub alpha: f64,
    pub p: f64,
}

fn check_nd(n: usize, alpha: f64) -> Result<()> {
    check_alpha(alpha)?;
    if !(2..=3).contains(&n) {
        return Err(invalid("n", format!("must be 2 or 3, got {n}")));
    }
    Ok(())
}

/// Center height and radius of the cap ball B, tangent to |x̄|^{1+α} = x_n at x_n = 1.
pub fn cusp_nd_cap(alpha: f64) -> (f64, f64) {
    let k = 1.0 / (1.0 + alpha);
    (1.0 + k, (1.0 + k * k).sqrt())
}

/// x ∈ Ẽ ∪ B.
pub fn cusp_nd_contains(n: usize, alpha: f64, x: &Point) -> bool {
    let xn = x[n - 1];
    let rho2: f64 = x[..n - 1].iter().map(|v| v * v).sum();
    let in_tilde = xn < 1.0 && rho2.sqrt().powf(1.0 + alpha) < xn;
    let (c, r) = cusp_nd_cap(alpha);
    in_tilde || rho2 + (xn - c).powi(2) < r * r
}

/// Bounding box of E: |x̄| ≤ R_B, 0 ≤ x_n ≤ c + R_B.
pub fn cusp_nd_bounds(n: usize, alpha: f64) -> (Point, Point) {
    let (c, r) = cusp_nd_cap(alpha);
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for d in 0..n - 1 {
        lo[d] = -r;
        hi[d] = r;
    }
    hi[n - 1] = c + r;
    (lo, hi)
}

/// Rasterized E = Ẽ ∪ B; the domain must contain E's bounding box with one cell to spare.
pub fn cusp_nd_set(n: usize, alpha: f64, domain: GridDomain) -> Result<BinaryMask> {
    check_nd(n, alpha)?;
    if domain.dim() != n {
        return Err(invalid("domain", format!("dimension {} differs from n = {n}", domain.dim())));
    }
    let (lo, hi) = cusp_nd_bounds(n, alpha);
    let h = domain.spacing();
    let o = domain.origin();
    let up = domain.upper();
    if (0..n).any(|d| lo[d] - h < o[d] || hi[d] + h > up[d]) {
        return Err(Error::Precondition(format!(
            "domain too small: E spans {:?} to {:?}",
            &lo[..n],
            &hi[..n]
        )));
    }
    Ok(BinaryMask::from_predicate(domain, |x| cusp_nd_contains(n, alpha, x)))
}

/// (z_x, r_x) with x ∈ B_{r_x}(z_x) ⊆ E for x ∈ Ẽ at height x_n.
pub fn cusp_nd_ball_data(n: usize, alpha: f64, x_n: f64) -> Result<(Point, f64)> {
    check_nd(n, alpha)?;
    if !(x_n > 0.0 && x_n <= 1.0) {
        return Err(invalid("x_n", format!("must lie in (0, 1], got {x_n}")));
    }
    let a1 = 1.0 + alpha;
    let q = x_n.powf((1.0 - alpha) / a1);
    let mut z = [0.0; 3];
    z[n - 1] = q / a1 + x_n;
    let r = (q * q / (a1 * a1) + x_n.powf(2.0 / a1)).sqrt();
    Ok((z, r))
}

/// Slopes dρ/dx_n of the cusp section and of the cap circle where they meet (x_n = 1, ρ = 1).
pub fn cusp_nd_junction_slopes(alpha: f64) -> (f64, f64) {
    let a1 = 1.0 + alpha;
    // ρ = x_n^{1/(1+α)}
    let cusp = 1.0 / a1;
    // ρ² + (x_n − c)² = R²  ⇒  dρ/dx_n = −(x_n − c)/ρ
    let (c, _) = cusp_nd_cap(alpha);
    (cusp, c - 1.0)
}

/// Boundary points of E in the (ρ, x_n) half-plane with outward normals.
fn cusp_nd_section_samples(alpha: f64, samples: usize) -> Vec<([f64; 2], [f64; 2])> {
    let a1 = 1.0 + alpha;
    let (c, r) = cusp_nd_cap(alpha);
    let mut out = Vec::with_capacity(2 * samples + 1);
    for k in 0..=samples {
        // ρ ∈ [0, 1] on the cusp part, x_n = ρ^{1+α}
        let rho = k as f64 / samples as f64;
        let slope = a1 * rho.powf(alpha);
        let s = (1.0 + slope * slope).sqrt();
        out.push(([rho, rho.powf(a1)], [slope / s, -1.0 / s]));
    }
    // the cap arc from the junction over the top
    let start = (1.0f64 - c).atan2(1.0);
    let end = std::f64::consts::FRAC_PI_2;
    for k in 1..=samples {
        let th = start + (end - start) * k as f64 / samples as f64;
        let (sn, cs) = th.sin_cos();
        out.push(([r * cs, c + r * sn], [cs, sn]));
    }
    out
}

/// ε: 0.9 × the smallest clearance ball between ∂E and ∂U along outward normals,
/// where U = B_{radius}(center) must contain E.
pub fn cusp_nd_complement_clearance(n: usize, alpha: f64, center: Point, radius: f64) -> Result<f64> {
    check_nd(n, alpha)?;
    let section = cusp_nd_section_samples(alpha, 2000);
    let azimuths = if n == 2 { 2 } else { 64 };
    let mut best = f64::INFINITY;
    for k in 0..azimuths {
        let phi = if n == 2 {
            // the two half-lines ρ ≥ 0 and ρ ≤ 0 of the plane
            std::f64::consts::PI * k as f64
        } else {
            std::f64::consts::TAU * k as f64 / azimuths as f64
        };
        let (s, c) = phi.sin_cos();
        for (pt, nu) in &section {
            let mut p = [0.0; 3];
            let mut v = [0.0; 3];
            if n == 2 {
                p[0] = c * pt[0];
                v[0] = c * nu[0];
            } else {
                p[0] = c * pt[0];
                p[1] = s * pt[0];
                v[0] = c * nu[0];
                v[1] = s * nu[0];
            }
            p[n - 1] = pt[1];
            v[n - 1] = nu[1];
            let off: Vec<f64> = (0..n).map(|d| p[d] - center[d]).collect();
            let dist2_c: f64 = off.iter().map(|x| x * x).sum();
            if dist2_c >= radius * radius {
                return Err(Error::Precondition(format!("E is not inside U: boundary point {:?}", &p[..n])));
            }
            let b: f64 = (0..n).map(|d| v[d] * off[d]).sum();
            let gap = -b + (b * b + radius * radius - dist2_c).sqrt();
            let mut m = [0.0; 3];
            for d in 0..n {
                m[d] = p[d] + 0.5 * gap * v[d];
            }
            let fit = radius - dist2(n, &m, &center).sqrt();
            best = best.min(fit.min(0.5 * gap));
        }
    }
    Ok(0.9 * best)
}

/// Curvature bound and L^p classification for the convex cusp body.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CuspNdBound {
    pub params: CuspNdParams,
    pub classification: LpClassification,
    /// c(n, α) = n(1+α), so that n/r_x ≤ c x_n^{−(1−α)/(1+α)}.
    pub constant: f64,
}

pub fn cusp_nd_curvature_bound_and_classify(n: usize, alpha: f64, p: f64) -> Result<CuspNdBound> {
    check_nd(n, alpha)?;
    check_p(p)?;
    let a1 = 1.0 + alpha;
    let e = (n as f64 - 1.0) / a1 - (1.0 - alpha) * p / a1;
    Ok(CuspNdBound {
        params: CuspNdParams { n, alpha, p },
        classification: classify(vec![e], lp_threshold(n, p), alpha),
        constant: n as f64 * a1,
    })
}

impl CuspNdBound {
    /// Bound on |H| at x: n/r_x on Ẽ (capped by n/R_B inside B), n/R_B on B ∖ Ẽ,
    /// n/ε on U ∖ E, 0 outside U.
    pub fn bound_at(&self, x: &Point, u_center: Point, u_radius: f64, eps: f64) -> f64 {
        let CuspNdParams { n, alpha, .. } = self.params;
        let nf = n as f64;
        if dist2(n, x, &u_center) >= u_radius * u_radius {
            return 0.0;
        }
        if !cusp_nd_contains(n, alpha, x) {
            return nf / eps;
        }
        let (c, r) = cusp_nd_cap(alpha);
        let rho2: f64 = x[..n - 1].iter().map(|v| v * v).sum();
        let in_cap = rho2 + (x[n - 1] - c).powi(2) < r * r;
        let cap = nf / r;
        let xn = x[n - 1];
        let in_tilde = xn < 1.0 && rho2.sqrt().powf(1.0 + alpha) < xn;
        if in_tilde {
            let (_, rx) = cusp_nd_ball_data(n, alpha, xn).expect("0 < x_n < 1 on Ẽ");
            let v = nf / rx;
            if in_cap {
                v.min(cap)
            } else {
                v
            }
        } else {
            cap
        }
    }

    pub fn bound_field(&self, domain: GridDomain, u_center: Point, u_radius: f64) -> Result<ScalarField> {
        let eps = cusp_nd_complement_clearance(self.params.n, self.params.alpha, u_center, u_radius)?;
        ScalarField::from_fn(domain, Some(FieldUnit::Curvature), |x| {
            self.bound_at(x, u_center, u_radius, eps)
        })
    }
}

/// H = H_E on E and −H_{U∖E} on U ∖ E, both from λ-sweeps with h ≡ 1.
#[derive(Clone, Debug)]
pub struct ComposedCurvature {
    pub values: ScalarField,
    /// Cells of U never reached by either sweep (left at 0).
    pub uncovered: usize,
}

/// Barozzi curvature of E composed with minus that of U ∖ E; `refine_ratio` refines both sweeps.
pub fn composed_barozzi_curvature(
    set: &BinaryMask,
    u: &BinaryMask,
    weights: &PerimeterWeights,
    refine_ratio: Option<f64>,
) -> Result<ComposedCurvature> {
    let dom = *set.domain();
    dom.check_same(u.domain(), "U")?;
    if !set.is_subset_of(u)? {
        return Err(Error::Precondition("E is not contained in U".into()));
    }
    let outer = u.difference(set)?;
    let sched = LambdaSchedule::default_for(&dom)?;
    let ones = ScalarField::constant(dom, 1.0, Some(FieldUnit::Dimensionless))?;
    let side = |s: &BinaryMask| -> Result<crate::barozzi::BarozziCurvature> {
        let mut sw = lambda_sweep(s, &ones, &sched, weights)?;
        if let Some(r) = refine_ratio {
            sw = refine_sweep(&sw, weights, r)?;
        }
        barozzi_curvature(&sw)
    };
    let inner = side(set)?;
    let outside = side(&outer)?;
    let neg: Vec<f64> = outside.values.values().iter().map(|v| -v).collect();
    let h2 = ScalarField::new(dom, neg, Some(FieldUnit::Curvature))?;
    let values = compose_curvature(&inner.values, &h2, set, u)?;
    Ok(ComposedCurvature {
        values,
        uncovered: inner.uncovered + outside.uncovered,
    })
}

/// (Σ |H|^p h²)^{1/p} of the planar cusp curvature sampled at the centers of an
/// N×N grid on (−1, 1)²; center cells on a curve use the D₁ side.
pub fn cusp2d_grid_lp_norm(alpha: f64, p: f64, cells: usize) -> Result<f64> {
    check_alpha(alpha)?;
    check_p(p)?;
    if cells == 0 {
        return Err(invalid("cells", "must be positive"));
    }
    let h = 2.0 / cells as f64;
    let field = CuspNormalField { alpha };
    let sum: f64 = (0..cells)
        .into_par_iter()
        .map(|j| {
            let y = -1.0 + (j as f64 + 0.5) * h;
            (0..cells)
                .map(|i| {
                    let x = -1.0 + (i as f64 + 0.5) * h;
                    field.divergence(&[x, y, 0.0]).map_or(0.0, |v| v.abs().powf(p))
                })
                .sum::<f64>()
        })
        .sum();
    Ok((sum * h * h).powf(1.0 / p))
}

/// (Σ |b|^p hⁿ)^{1/p} of the bound b = n/r_x over the cells of Ẽ, on cubic cells of side
/// 2/N covering [−1, 1]^{n−1} × [0, 1].
pub fn cusp_nd_grid_lp_norm(n: usize, alpha: f64, p: f64, cells: usize) -> Result<f64> {
    check_nd(n, alpha)?;
    check_p(p)?;
    if cells < 2 {
        return Err(invalid("cells", "must be at least 2"));
    }
    let h = 2.0 / cells as f64;
    let layers = cells / 2;
    let lateral = if n == 3 { cells } else { 1 };
    let nf = n as f64;
    let sum: f64 = (0..layers)
        .into_par_iter()
        .map(|k| {
            let xn = (k as f64 + 0.5) * h;
            let (_, rx) = cusp_nd_ball_data(n, alpha, xn).expect("0 < x_n < 1");
            let v = (nf / rx).powf(p);
            let rmax = xn.powf(1.0 / (1.0 + alpha));
            let mut count = 0usize;
            for j in 0..lateral {
                let y = if n == 3 { -1.0 + (j as f64 + 0.5) * h } else { 0.0 };
                for i in 0..cells {
                    let x = -1.0 + (i as f64 + 0.5) * h;
                    if (x * x + y * y).sqrt() < rmax {
                        count += 1;
                    }
                }
            }
            v * count as f64
        })
        .sum();
    Ok((sum * h.powi(n as i32)).powf(1.0 / p))
}

// ---------------------------------------------------------------- C^{1,α} graph without C^{1,1}

fn check_log_point(s: f64, x: f64, y: f64) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(invalid("s", format!("must lie in (0, 1), got {s}")));
    }
    if !(x * x + y * y < s * s) {
        return Err(invalid("(x, y)", format!("({x}, {y}) is outside the disk of radius {s}")));
    }
    Ok(())
}

/// f(x, y) = (x² − y²)√(−log √(x² + y²)), f(0, 0) = 0.
pub fn log_example_field(s: f64, x: f64, y: f64) -> Result<f64> {
    check_log_point(s, x, y)?;
    let r = x.hypot(y);
    if r == 0.0 {
        return Ok(0.0);
    }
    Ok((x * x - y * y) * (-r.ln()).sqrt())
}

/// ∇f; 0 at the origin.
pub fn log_example_gradient(s: f64, x: f64, y: f64) -> Result<[f64; 2]> {
    check_log_point(s, x, y)?;
    let r2 = x * x + y * y;
    if r2 == 0.0 {
        return Ok([0.0, 0.0]);
    }
    let g = (-0.5 * r2.ln()).sqrt();
    let q = (x * x - y * y) / (2.0 * r2 * g);
    Ok([2.0 * x * g - q * x, -2.0 * y * g - q * y])
}

/// sup |∇f(a) − ∇f(b)|/|a − b| over a fixed pattern of points in the closed disk of radius δ
/// (the origin, and 64 directions at radii δ and δ/2).
pub fn log_example_lipschitz_ratio(s: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < s) {
        return Err(invalid("delta", format!("must lie in (0, s), got {delta}")));
    }
    let mut pts = vec![[0.0, 0.0]];
    for k in 0..64 {
        let th = std::f64::consts::TAU * (k as f64 + 0.5) / 64.0;
        for rad in [delta, 0.5 * delta] {
            pts.push([rad * th.cos(), rad * th.sin()]);
        }
    }
    let grads: Vec<[f64; 2]> = pts
        .iter()
        .map(|p| log_example_gradient(s, p[0], p[1]))
        .collect::<Result<_>>()?;
    let mut best: f64 = 0.0;
    for i in 0..pts.len() {
        for j in 0..i {
            let d = (pts[i][0] - pts[j][0]).hypot(pts[i][1] - pts[j][1]);
            let g = (grads[i][0] - grads[j][0]).hypot(grads[i][1] - grads[j][1]);
            best = best.max(g / d);
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------- divergence curvatures

/// A vector field on ℝⁿ; `divergence` returns the closed form where one exists.
pub trait VectorField: Sync {
    fn value(&self, x: &Point) -> Point;

    fn divergence(&self, _x: &Point) -> Option<f64> {
        None
    }
}

/// V ≡ v.
#[derive(Clone, Copy, Debug)]
pub struct ConstantField(pub Point);

impl VectorField for ConstantField {
    fn value(&self, _x: &Point) -> Point {
        self.0
    }

    fn divergence(&self, _x: &Point) -> Option<f64> {
        Some(0.0)
    }
}

/// V(x) = (x − c)/|x − c| in dimension `dim`; div V = (n−1)/|x − c|.
#[derive(Clone, Copy, Debug)]
pub struct RadialField {
    pub dim: usize,
    pub center: Point,
}

impl VectorField for RadialField {
    fn value(&self, x: &Point) -> Point {
        let r = dist2(self.dim, x, &self.center).sqrt();
        let mut v = [0.0; 3];
        if r > 0.0 {
            for d in 0..self.dim {
                v[d] = (x[d] - self.center[d]) / r;
            }
        }
        v
    }

    fn divergence(&self, x: &Point) -> Option<f64> {
        let r = dist2(self.dim, x, &self.center).sqrt();
        (r > 0.0).then(|| (self.dim as f64 - 1.0) / r)
    }
}

/// The normal extension of the planar cusp; on a curve the D₁ side is used.
#[derive(Clone, Copy, Debug)]
pub struct CuspNormalField {
    pub alpha: f64,
}

impl VectorField for CuspNormalField {
    fn value(&self, x: &Point) -> Point {
        let v = cusp2d_normal_field(self.alpha, [x[0], x[1]]);
        [v[0], v[1], 0.0]
    }

    fn divergence(&self, x: &Point) -> Option<f64> {
        let p = [x[0], x[1]];
        let mut region = cusp2d_region(self.alpha, p);
        if !region.is_open_piece() {
            region = if p[0] >= 0.0 { CuspRegion::D1Plus } else { CuspRegion::D1Minus };
        }
        let params = Cusp2dParams { alpha: self.alpha, x: p, region };
        cusp2d_curvature(&params).ok()
    }
}

/// Central-difference divergence with step `step` per axis.
pub fn divergence_fd(field: &dyn VectorField, dim: usize, x: &Point, step: f64) -> f64 {
    (0..dim)
        .map(|d| {
            let mut a = *x;
            let mut b = *x;
            a[d] += step;
            b[d] -= step;
            (field.value(&a)[d] - field.value(&b)[d]) / (2.0 * step)
        })
        .sum()
}

/// Outcome of a divergence-curvature minimality check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DivergenceReport {
    /// Largest |V| over the free cells.
    pub max_norm: f64,
    /// Cells whose divergence came from finite differences.
    pub fd_cells: usize,
    /// Mean and largest 1 − V·ν̂ over boundary cells of E in the free region,
    /// with ν̂ the mask normal estimated from a 3-cell neighborhood.
    pub alignment_mean: f64,
    pub alignment_max: f64,
    pub minimality: MinimalityReport,
}

const NORM_SLACK: f64 = 1e-12;
const FD_STEP_CELLS: f64 = 1e-3;
const NORMAL_RADIUS_CELLS: i32 = 3;

/// Rasterizes H = div V on the free cells and checks E against random local perturbations.
pub fn verify_divergence_curvature(
    field: &dyn VectorField,
    set: &BinaryMask,
    free: &BinaryMask,
    weights: &PerimeterWeights,
    opts: &PerturbationOptions,
) -> Result<DivergenceReport> {
    let dom = *set.domain();
    dom.check_same(free.domain(), "free region")?;
    let dim = dom.dim();
    let h = dom.spacing();
    let cells: Vec<usize> = free.ones().collect();
    let evaluated: Vec<(f64, f64, bool)> = cells
        .par_iter()
        .map(|&i| {
            let x = dom.center(i);
            let v = field.value(&x);
            let norm = (0..dim).map(|d| v[d] * v[d]).sum::<f64>().sqrt();
            match field.divergence(&x) {
                Some(div) => (norm, div, false),
                None => (norm, divergence_fd(field, dim, &x, FD_STEP_CELLS * h), true),
            }
        })
        .collect();
    let max_norm = evaluated.iter().map(|e| e.0).fold(0.0, f64::max);
    if max_norm > 1.0 + NORM_SLACK {
        return Err(Error::Precondition(format!("|V| reaches {max_norm} > 1 on the free region")));
    }
    let mut values = vec![0.0; dom.cell_count()];
    for (&i, e) in cells.iter().zip(&evaluated) {
        if !e.1.is_finite() {
            return Err(Error::Precondition(format!("div V is not finite at cell {i}")));
        }
        values[i] = e.1;
    }
    let fd_cells = evaluated.iter().filter(|e| e.2).count();

    let boundary: Vec<usize> = set
        .boundary_cells(weights)
        .into_iter()
        .filter(|&i| free.get(i) && set.get(i))
        .collect();
    let misalign: Vec<f64> = boundary
        .par_iter()
        .filter_map(|&i| {
            let c = dom.coords(i);
            let r = NORMAL_RADIUS_CELLS;
            let mut acc = [0.0; 3];
            let span = |d: usize| if d < dim { -r..=r } else { 0..=0 };
            for dz in span(2) {
                for dy in span(1) {
                    for dx in span(0) {
                        if dx * dx + dy * dy + dz * dz > r * r {
                            continue;
                        }
                        // a clipped neighborhood would bias the estimate
                        let j = dom.offset(c, [dx, dy, dz])?;
                        let s = if set.get(j) { -1.0 } else { 1.0 };
                        for (d, o) in [dx, dy, dz].into_iter().enumerate() {
                            acc[d] += s * o as f64;
                        }
                    }
                }
            }
            let len = acc.iter().map(|a| a * a).sum::<f64>().sqrt();
            (len > 0.0).then(|| {
                let v = field.value(&dom.center(i));
                1.0 - (0..dim).map(|d| v[d] * acc[d] / len).sum::<f64>()
            })
        })
        .collect();
    let (alignment_mean, alignment_max) = if misalign.is_empty() {
        (0.0, 0.0)
    } else {
        (
            misalign.iter().sum::<f64>() / misalign.len() as f64,
            misalign.iter().copied().fold(0.0, f64::max),
        )
    };

    let hfield = ScalarField::new(dom, values, Some(FieldUnit::Curvature))?;
    let problem = CutProblem::new(hfield, set.clone(), free.clone(), weights.clone())?;
    let minimality = verify_minimality(&problem, set, opts)?;
    Ok(DivergenceReport {
        max_norm,
        fd_cells,
        alignment_mean,
        alignment_max,
        minimality,
    })
}

/// Free region of a domain: every cell at least one stencil radius from the edge.
pub fn interior_free_region(domain: GridDomain, weights: &PerimeterWeights) -> BinaryMask {
    let r = weights.radius();
    let counts = domain.counts().to_vec();
    let dim = domain.dim();
    BinaryMask::from_bits(
        domain,
        (0..domain.cell_count())
            .map(|i| {
                let c = domain.coords(i);
                (0..dim).all(|d| c[d] >= r && c[d] + r < counts[d])
            })
            .collect(),
    )
    .expect("bit count matches the domain")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fd_div2(alpha: f64, x: [f64; 2], step: f64) -> f64 {
        let v = |p: [f64; 2]| cusp2d_normal_field(alpha, p);
        (v([x[0] + step, x[1]])[0] - v([x[0] - step, x[1]])[0]) / (2.0 * step)
            + (v([x[0], x[1] + step])[1] - v([x[0], x[1] - step])[1]) / (2.0 * step)
    }

    #[test]
    fn cusp_set_is_odd_up_to_the_center_row() {
        let dom = GridDomain::cube(2, 64, -1.0, 1.0).unwrap();
        let e = cusp2d_set(0.5, dom).unwrap();
        let mut mismatched_rows = std::collections::BTreeSet::new();
        for i in 0..dom.cell_count() {
            let c = dom.coords(i);
            let j = dom.index([63 - c[0], 63 - c[1], 0]);
            if e.get(i) == e.get(j) {
                mismatched_rows.insert(c[1]);
            }
        }
        assert!(mismatched_rows.len() <= 1, "{mismatched_rows:?}");
    }

    #[test]
    fn cusp_set_membership_examples() {
        let dom = GridDomain::cube(2, 20, -1.0, 1.0).unwrap();
        let e = cusp2d_set(0.5, dom).unwrap();
        // 0.1 spacing: centers at ±0.05, ±0.15, …; (0.55, 0.35) and (−0.55, 0.35)
        let inside = dom.locate(&[0.55, 0.35, 0.0]).unwrap();
        let outside = dom.locate(&[-0.55, 0.35, 0.0]).unwrap();
        assert_eq!(e.get(inside), 0.35 < 0.55f64.powf(1.5));
        assert!(e.get(inside));
        assert!(!e.get(outside));
        assert!(0.3 < 0.5f64.powf(1.5) && Cusp2dParams::new(0.5, [0.5, 0.3]).unwrap().region == CuspRegion::D1Plus);
        assert!(cusp2d_set(1.0, dom).is_err());
        let small = GridDomain::cube(2, 8, -0.5, 0.5).unwrap();
        assert!(matches!(cusp2d_set(0.5, small), Err(Error::Precondition(_))));
    }

    #[test]
    fn normal_field_matches_boundary_and_axis_formulas() {
        for &alpha in &[0.3, 0.5, 0.8] {
            let a1: f64 = 1.0 + alpha;
            for &t in &[0.01, 0.2, 0.7] {
                let v = cusp2d_normal_field(alpha, [t, t.powf(a1)]);
                let s = (1.0 + a1 * a1 * t.powf(2.0 * alpha)).sqrt();
                assert!((v[0] + a1 * t.powf(alpha) / s).abs() < 1e-15);
                assert!((v[1] - 1.0 / s).abs() < 1e-15);
                let w = cusp2d_normal_field(alpha, [0.0, t]);
                let q = t.powf(alpha / a1);
                let s2 = (1.0 + a1 * a1 * q * q).sqrt();
                assert!((w[0] + a1 * q / s2).abs() < 1e-15 && (w[1] - 1.0 / s2).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn normal_field_is_continuous_across_the_interface() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let alpha: f64 = rng.gen_range(0.05..0.95);
            let x1: f64 = rng.gen_range(-0.99..0.99);
            let x2 = -x1.signum() * x1.abs().powf(1.0 + alpha);
            let a1 = 1.0 + alpha;
            let d1 = tilted(a1 * x1.abs().powf(alpha));
            let d2 = tilted(a1 * x2.abs().powf(alpha / a1));
            assert!((d1[0] - d2[0]).abs() < 1e-12 && (d1[1] - d2[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn curvature_matches_finite_differences_at_the_reference_point() {
        let p = Cusp2dParams::new(0.5, [0.25, 0.05]).unwrap();
        assert_eq!(p.region, CuspRegion::D1Plus);
        let h = cusp2d_curvature(&p).unwrap();
        let fd = fd_div2(0.5, p.x, 1e-5);
        assert!(((h - fd) / h).abs() < 1e-6, "{h} vs {fd}");
    }

    #[test]
    fn curvature_near_the_axis_follows_the_d2_power() {
        let alpha = 0.5;
        let pts: Vec<(f64, f64)> = (2..7)
            .map(|k| {
                let t = 10f64.powi(-k);
                let h = cusp2d_curvature(&Cusp2dParams::new(alpha, [0.0, t]).unwrap()).unwrap();
                (t.ln(), h.abs().ln())
            })
            .collect();
        let slope = (pts[4].1 - pts[3].1) / (pts[4].0 - pts[3].0);
        assert!((slope - (2.0 * alpha / 1.5 - 1.0)).abs() < 1e-3, "{slope}");
    }

    #[test]
    fn curvature_on_a_curve_needs_an_adjacent_piece() {
        let x = [0.5, 0.5f64.powf(1.5)];
        let on = Cusp2dParams::new(0.5, x).unwrap();
        assert_eq!(on.region, CuspRegion::Boundary);
        assert!(cusp2d_curvature(&on).is_err());
        let side = Cusp2dParams::with_region(0.5, x, CuspRegion::D2Plus).unwrap();
        assert!(cusp2d_curvature(&side).unwrap() < 0.0);
        assert!(Cusp2dParams::with_region(0.5, [0.5, 0.01], CuspRegion::D2Plus).is_err());
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(lp_threshold(2, 5.0), 0.5);
        assert_eq!(lp_threshold(3, 3.0), 0.0);
        assert_eq!(lp_threshold(2, f64::INFINITY), 1.0);
        let c = cusp2d_lp_classify(0.5, 3.0).unwrap();
        assert_eq!((c.class, c.threshold), (Integrability::Finite, 0.25));
        assert_eq!(cusp2d_lp_classify(0.2, 3.0).unwrap().class, Integrability::Divergent);
        assert_eq!(cusp2d_lp_classify(0.01, 2.0).unwrap().class, Integrability::Finite);
        let b = cusp_nd_curvature_bound_and_classify(3, 0.5, 4.0).unwrap();
        assert_eq!(b.classification.class, Integrability::Finite);
        assert!((b.classification.threshold - 0.2).abs() < 1e-15);
        assert_eq!(b.classification.exponents, vec![0.0]);
        assert!((b.classification.quadrature.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(
            cusp_nd_curvature_bound_and_classify(3, 0.1, 4.0).unwrap().classification.class,
            Integrability::Divergent
        );
    }

    #[test]
    fn cusp_body_membership_and_junction() {
        let x = [0.0, 0.0, 0.5];
        assert!(cusp_nd_contains(3, 0.5, &x));
        assert!(!cusp_nd_contains(3, 0.5, &[0.0, 0.0, -0.01]));
        assert!(!cusp_nd_contains(2, 0.5, &[0.001, -0.001, 0.0]));
        let (cusp, cap) = cusp_nd_junction_slopes(0.5);
        assert!((cusp - cap).abs() < 1e-15 && (cusp - 1.0 / 1.5).abs() < 1e-15);
        // the section of the cap at x_n = 1 has radius 1
        let (c, r) = cusp_nd_cap(0.5);
        assert!(((r * r - (1.0 - c).powi(2)).sqrt() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ball_data_limits() {
        let (_, r1) = cusp_nd_ball_data(3, 0.5, 1.0).unwrap();
        assert!((r1 - (1.0 / 2.25 + 1.0f64).sqrt()).abs() < 1e-15);
        let xn: f64 = 1e-8;
        let (_, r) = cusp_nd_ball_data(2, 0.5, xn).unwrap();
        let lead = xn.powf(0.5 / 1.5) / 1.5;
        assert!((r / lead - 1.0).abs() < 1e-3);
        assert!(cusp_nd_ball_data(3, 0.5, 0.0).is_err());
    }

    #[test]
    fn rasterized_ball_sits_inside_the_body() {
        let (n, alpha, xn) = (3, 0.5, 0.25);
        let (z, r) = cusp_nd_ball_data(n, alpha, xn).unwrap();
        let (_, hi) = cusp_nd_bounds(n, alpha);
        let h = hi[2] / 256.0;
        let cells = (2.0 * r / h).ceil() as usize + 4;
        let origin = [z[0] - cells as f64 * h / 2.0, z[1] - cells as f64 * h / 2.0, z[2] - cells as f64 * h / 2.0];
        let dom = GridDomain::new(&[cells; 3], h, &origin).unwrap();
        let ball = crate::grid::rasterize(&crate::grid::Shape::Ball { center: z, radius: r }, dom).mask;
        let mut outside = 0;
        for i in ball.ones() {
            let y = dom.center(i);
            if cusp_nd_contains(n, alpha, &y) {
                continue;
            }
            outside += 1;
            // within one cell of E
            let near = (0..3).any(|d| {
                [-h, h].iter().any(|&s| {
                    let mut q = y;
                    q[d] += s;
                    cusp_nd_contains(n, alpha, &q)
                })
            });
            assert!(near, "cell {y:?} is more than a cell away from E");
        }
        assert!(outside < ball.count() / 100);
    }

    #[test]
    fn cusp_body_is_convex_on_cell_centers() {
        let dom = GridDomain::new(&[64, 72], 3.0 / 64.0, &[-1.5, -0.2]).unwrap();
        let e = cusp_nd_set(2, 0.5, dom).unwrap();
        let cells: Vec<usize> = e.ones().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..2000 {
            let a = dom.center(cells[rng.gen_range(0..cells.len())]);
            let b = dom.center(cells[rng.gen_range(0..cells.len())]);
            let t: f64 = rng.gen();
            let m = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), 0.0];
            assert!(cusp_nd_contains(2, 0.5, &m), "{a:?} {b:?} {t}");
        }
        let tiny = GridDomain::cube(2, 16, -1.0, 1.0).unwrap();
        assert!(matches!(cusp_nd_set(2, 0.5, tiny), Err(Error::Precondition(_))));
    }

    #[test]
    fn clearance_is_bounded_by_the_gap_to_u() {
        let (c, r) = cusp_nd_cap(0.5);
        let top = c + r;
        let center = [0.0, 0.0, top / 2.0];
        let reach = (r * r + 0.3f64.powi(2)).sqrt().max(top / 2.0);
        let radius = reach + 0.4;
        let eps = cusp_nd_complement_clearance(3, 0.5, center, radius).unwrap();
        // every normal gap is at least radius − reach, and at most the gap at the apex
        assert!(eps >= 0.9 * (radius - reach) / 2.0 - 1e-12, "{eps}");
        assert!(eps <= 0.9 * (radius - top / 2.0) / 2.0 + 1e-12, "{eps}");
        assert!(cusp_nd_complement_clearance(3, 0.5, center, 1.0).is_err());
    }

    #[test]
    fn bound_field_follows_the_ball_radii() {
        let b = cusp_nd_curvature_bound_and_classify(2, 0.5, 3.0).unwrap();
        let center = [0.0, 1.4, 0.0];
        let eps = 0.05;
        let x = [0.0, 0.04, 0.0];
        let (_, rx) = cusp_nd_ball_data(2, 0.5, 0.04).unwrap();
        assert_eq!(b.bound_at(&x, center, 2.0, eps), 2.0 / rx);
        assert!(2.0 / rx <= b.constant * 0.04f64.powf(-0.5 / 1.5));
        assert_eq!(b.bound_at(&[0.0, -0.3, 0.0], center, 2.0, eps), 2.0 / eps);
        assert_eq!(b.bound_at(&[0.0, -0.7, 0.0], center, 2.0, eps), 0.0);
    }

    #[test]
    fn log_example_basics() {
        assert_eq!(log_example_field(0.5, 0.0, 0.0).unwrap(), 0.0);
        assert!(log_example_field(0.5, 0.6, 0.0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let (x, y): (f64, f64) = (rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
            let f = log_example_field(0.5, x, y).unwrap();
            assert!((f + log_example_field(0.5, y, x).unwrap()).abs() < 1e-15);
            let g = log_example_gradient(0.5, x, y).unwrap();
            let st = 1e-6;
            let fx = (log_example_field(0.5, x + st, y).unwrap() - log_example_field(0.5, x - st, y).unwrap()) / (2.0 * st);
            let fy = (log_example_field(0.5, x, y + st).unwrap() - log_example_field(0.5, x, y - st).unwrap()) / (2.0 * st);
            assert!((g[0] - fx).abs() < 1e-6 && (g[1] - fy).abs() < 1e-6);
        }
    }

    #[test]
    fn log_example_lipschitz_ratio_grows() {
        let ratios: Vec<f64> = (4..=12)
            .map(|k| log_example_lipschitz_ratio(0.5, 2f64.powi(-k)).unwrap())
            .collect();
        assert!(ratios.windows(2).all(|w| w[1] > w[0]), "{ratios:?}");
        // grows like √(−log δ), so the ratio of the extremes is about √(12/4)
        let growth = ratios[8] / ratios[0];
        assert!(growth > 1.4 && growth < 2.0, "{growth}");
    }

    #[test]
    fn half_space_with_constant_normal_is_exactly_minimal() {
        let dom = GridDomain::cube(2, 40, -1.0, 1.0).unwrap();
        let w = PerimeterWeights::n16();
        let e = BinaryMask::from_predicate(dom, |x| x[1] < 0.0);
        let free = interior_free_region(dom, &w);
        let rep = verify_divergence_curvature(&ConstantField([0.0, 1.0, 0.0]), &e, &free, &w, &PerturbationOptions::default()).unwrap();
        assert!(rep.minimality.max_improvement <= 1e-12, "{:?}", rep.minimality);
        assert_eq!(rep.fd_cells, 0);
        assert!(rep.alignment_max < 1e-12);
    }

    #[test]
    fn ball_with_radial_field_is_minimal_on_an_annulus() {
        let dom = GridDomain::cube(2, 96, -1.0, 1.0).unwrap();
        let w = PerimeterWeights::n16();
        let e = BinaryMask::from_predicate(dom, |x| x[0].hypot(x[1]) < 0.5);
        let free = BinaryMask::from_predicate(dom, |x| (0.25..0.8).contains(&x[0].hypot(x[1])));
        let field = RadialField { dim: 2, center: [0.0; 3] };
        let opts = PerturbationOptions::default();
        let rep = verify_divergence_curvature(&field, &e, &free, &w, &opts).unwrap();
        let h = dom.spacing();
        assert!(rep.minimality.max_improvement <= 3.0 * h, "{:?}", rep.minimality);
        assert!(rep.alignment_mean < 0.05, "{}", rep.alignment_mean);
        // 2V has |2V| = 2
        struct Doubled;
        impl VectorField for Doubled {
            fn value(&self, x: &Point) -> Point {
                let v = RadialField { dim: 2, center: [0.0; 3] }.value(x);
                [2.0 * v[0], 2.0 * v[1], 0.0]
            }
        }
        assert!(matches!(
            verify_divergence_curvature(&Doubled, &e, &free, &w, &opts),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn finite_difference_fallback_is_used_without_a_closed_form() {
        struct Rot;
        impl VectorField for Rot {
            fn value(&self, x: &Point) -> Point {
                // div = 0.2
                [0.1 * x[0], 0.1 * x[1], 0.0]
            }
        }
        let dom = GridDomain::cube(2, 16, -1.0, 1.0).unwrap();
        let w = PerimeterWeights::n4();
        let e = BinaryMask::from_predicate(dom, |x| x[0] < 0.0);
        let free = interior_free_region(dom, &w);
        let rep = verify_divergence_curvature(&Rot, &e, &free, &w, &PerturbationOptions { trials: 10, ..Default::default() }).unwrap();
        assert_eq!(rep.fd_cells, free.count());
        assert!((divergence_fd(&Rot, 2, &[0.3, 0.2, 0.0], 1e-4) - 0.2).abs() < 1e-9);
    }

    #[test]
    fn composed_curvature_of_the_planar_body_obeys_the_ball_bound() {
        let alpha = 0.5;
        let (c, r) = cusp_nd_cap(alpha);
        let top = c + r;
        let center = [0.0, top / 2.0, 0.0];
        let radius = top / 2.0 + 0.35;
        let h = 2.0 * (radius + 0.1) / 64.0;
        let dom = GridDomain::new(&[64, 64], h, &[-(radius + 0.1), center[1] - (radius + 0.1)]).unwrap();
        let w = PerimeterWeights::n16();
        let e = cusp_nd_set(2, alpha, dom).unwrap();
        let u = BinaryMask::from_predicate(dom, |x| dist2(2, x, &center) < radius * radius);
        let comp = composed_barozzi_curvature(&e, &u, &w, Some(1.02)).unwrap();
        assert_eq!(comp.uncovered, 0);
        let b = cusp_nd_curvature_bound_and_classify(2, alpha, 3.0).unwrap();
        let eps = cusp_nd_complement_clearance(2, alpha, center, radius).unwrap();
        let mut checked = 0;
        let mut within = 0;
        for i in e.ones() {
            let x = dom.center(i);
            // the containment law holds up to a two-cell boundary layer
            let inset = (0..2).all(|d| {
                [-2.0 * h, 2.0 * h].iter().all(|&s| {
                    let mut q = x;
                    q[d] += s;
                    cusp_nd_contains(2, alpha, &q)
                })
            });
            if inset {
                checked += 1;
                within += usize::from(comp.values.get(i) <= b.bound_at(&x, center, radius, eps) * 1.02 + 1e-12);
            }
            assert!(comp.values.get(i) >= 0.0);
        }
        assert!(within as f64 >= 0.9 * checked as f64, "{within}/{checked}");
        for i in u.difference(&e).unwrap().ones() {
            assert!(comp.values.get(i) <= 0.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn classifications_agree_with_the_threshold(alpha in 0.01f64..0.99, p in 1.0f64..40.0, n in 2usize..4) {
            let thr = lp_threshold(n, p);
            let nd = cusp_nd_curvature_bound_and_classify(n, alpha, p).unwrap();
            prop_assert_eq!(nd.classification.class == Integrability::Finite, alpha > thr);
            if n == 2 {
                let c = cusp2d_lp_classify(alpha, p).unwrap();
                prop_assert_eq!(c.class == Integrability::Finite, alpha > lp_threshold(2, p));
            }
        }

        #[test]
        fn quadrature_matches_the_antiderivative(alpha in 0.01f64..0.99, p in 1.0f64..40.0) {
            let c = cusp2d_lp_classify(alpha, p).unwrap();
            if let (Some(q), Some(cf)) = (c.quadrature, c.closed_form) {
                // exponents close to −1 make the integral huge; compare relative to it
                prop_assert!((q - cf).abs() <= 1e-8 * cf.max(1.0), "{} vs {}", q, cf);
            }
        }

        #[test]
        fn threshold_is_monotone(p in 3.01f64..1e6, dp in 0.001f64..10.0) {
            prop_assert!(lp_threshold(3, p + dp) > lp_threshold(3, p));
            prop_assert!(lp_threshold(3, p) < lp_threshold(2, p));
            prop_assert!(lp_threshold(3, p) < 1.0);
        }

        #[test]
        fn normal_field_is_unit_and_curvature_is_odd(alpha in 0.05f64..0.95, x1 in -0.99f64..0.99, x2 in -0.99f64..0.99) {
            let v = cusp2d_normal_field(alpha, [x1, x2]);
            prop_assert!((v[0].hypot(v[1]) - 1.0).abs() < 1e-12);
            let p = Cusp2dParams::new(alpha, [x1, x2]).unwrap();
            if p.region.is_open_piece() && x1 != 0.0 && x2 != 0.0 {
                let h = cusp2d_curvature(&p).unwrap();
                let m = cusp2d_curvature(&Cusp2dParams::new(alpha, [-x1, -x2]).unwrap()).unwrap();
                prop_assert!((h + m).abs() <= 1e-12 * h.abs().max(1.0));
                prop_assert!(h.abs() <= cusp2d_curvature_bound(alpha, [x1, x2]) * (1.0 + 1e-12));
            }
        }

        #[test]
        fn points_of_the_cusp_lie_in_their_ball(alpha in 0.05f64..0.95, xn in 0.001f64..0.999, frac in 0.0f64..1.0, th in 0.0f64..6.28) {
            let rho = frac * xn.powf(1.0 / (1.0 + alpha));
            let x = [rho * th.cos(), rho * th.sin(), xn];
            let (z, r) = cusp_nd_ball_data(3, alpha, xn).unwrap();
            prop_assert!(dist2(3, &x, &z) < r * r * (1.0 + 1e-12));
            // points of the ball's boundary sit in the closure of E
            for k in 0..16 {
                let phi = std::f64::consts::TAU * k as f64 / 16.0;
                let q = [r * phi.cos() * 0.999, 0.0, z[2] + r * phi.sin() * 0.999];
                prop_assert!(cusp_nd_contains(3, alpha, &q), "{:?}", q);
            }
        }
    }
}
