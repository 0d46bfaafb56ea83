//! Hölder exponents: the improvement map g and its fixed point, Ψ-decay slopes,
//! sampled Hölder constants of gradients and normals, and the cylinder height estimate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cut::psi;
use crate::error::{invalid, Error, Result};
use crate::grid::{dist2, rasterize, BinaryMask, PerimeterWeights, Point, Shape};

/// n, p and the stopping rule of the iteration α_k = g(α_{k−1}).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentParams {
    pub n: usize,
    /// p ∈ (n, ∞]; `f64::INFINITY` is accepted.
    pub p: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl ExponentParams {
    pub fn new(n: usize, p: f64) -> Result<Self> {
        let out = Self {
            n,
            p,
            tolerance: 1e-13,
            max_iterations: 200,
        };
        out.validate()?;
        Ok(out)
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid("n", format!("must be at least 2, got {}", self.n)));
        }
        if !(self.p > self.n as f64) {
            return Err(invalid("p", format!("must exceed n = {}, got {}", self.n, self.p)));
        }
        if !(self.tolerance > 0.0) {
            return Err(invalid("tolerance", "must be positive"));
        }
        Ok(())
    }

    /// α₀ = ¼(1 − n/p).
    pub fn alpha0(&self) -> f64 {
        0.25 * (1.0 - self.n as f64 / self.p)
    }

    /// g(s) = (1 − 1/p)s/2 + (p − n)/(2p).
    pub fn g(&self, s: f64) -> f64 {
        if self.p == f64::INFINITY {
            0.5 * s + 0.5
        } else {
            0.5 * (1.0 - 1.0 / self.p) * s + (self.p - self.n as f64) / (2.0 * self.p)
        }
    }

    /// Lipschitz constant of g.
    pub fn contraction(&self) -> f64 {
        0.5 * (1.0 - 1.0 / self.p)
    }

    /// α_* = (p − n)/(p + 1), the fixed point of g.
    pub fn fixed_point(&self) -> f64 {
        crate::counterexamples::lp_threshold(self.n, self.p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentReport {
    pub params: ExponentParams,
    /// α₀, α₁, … up to the first iterate within tolerance of α_*.
    pub iterates: Vec<f64>,
    /// Closed-form α_*.
    pub fixed_point: f64,
    pub converged: bool,
}

pub fn iterate_exponent(params: &ExponentParams) -> Result<ExponentReport> {
    params.validate()?;
    let target = params.fixed_point();
    let mut iterates = vec![params.alpha0()];
    let mut converged = (iterates[0] - target).abs() < params.tolerance;
    while !converged && iterates.len() <= params.max_iterations {
        let next = params.g(*iterates.last().expect("nonempty"));
        iterates.push(next);
        converged = (next - target).abs() < params.tolerance;
    }
    Ok(ExponentReport {
        params: *params,
        iterates,
        fixed_point: target,
        converged,
    })
}

// ---------------------------------------------------------------- Ψ decay

/// Ψ values at or below this multiple of h^{n−1} count as zero.
pub const PSI_ZERO: f64 = 1e-6;
/// Smallest usable ball radius, in cells.
pub const MIN_RADIUS_CELLS: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiDecayReport {
    pub radii: Vec<f64>,
    pub psi: Vec<f64>,
    /// All Ψ vanished: E attains Ξ in every ball.
    pub exact_minimizer: bool,
    /// Theil–Sen slope of log Ψ against log r over the nonzero entries.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// (slope − (n − 1))/2
    pub implied_alpha: Option<f64>,
    pub r_squared: Option<f64>,
}

/// Median of pairwise slopes, the median intercept for it, and the R² of that line.
pub fn theil_sen(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid("fit", "needs at least two paired points"));
    }
    let mut slopes = Vec::new();
    for i in 0..x.len() {
        for j in 0..i {
            if x[i] != x[j] {
                slopes.push((y[i] - y[j]) / (x[i] - x[j]));
            }
        }
    }
    if slopes.is_empty() {
        return Err(invalid("fit", "all abscissae coincide"));
    }
    let s = median(&mut slopes);
    let mut icpt: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - s * a).collect();
    let c = median(&mut icpt);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - s * a - c).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok((s, c, r2))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Ψ(E, B_r(center)) for each radius (physical units) and the log-log decay slope.
pub fn psi_decay_fit(
    set: &BinaryMask,
    center: Point,
    radii: &[f64],
    weights: &PerimeterWeights,
) -> Result<PsiDecayReport> {
    let dom = *set.domain();
    weights.check_dim(&dom)?;
    let n = dom.dim();
    let h = dom.spacing();
    if radii.iter().any(|&r| !(r >= MIN_RADIUS_CELLS * h)) {
        return Err(invalid("radii", format!("every radius must be at least {MIN_RADIUS_CELLS} cells")));
    }
    let (lo, hi) = radii
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    if radii.len() < 3 || hi / lo < 4.0 * (1.0 - 1e-12) {
        return Err(invalid("radii", "need at least 3 radii spanning 3 dyadic levels"));
    }
    let psi_values: Vec<f64> = radii
        .par_iter()
        .map(|&r| {
            let ball = rasterize(&Shape::Ball { center, radius: r }, dom);
            if ball.clipped {
                return Err(Error::Precondition(format!("ball of radius {r} leaves the domain")));
            }
            psi(set, &ball.mask, weights)
        })
        .collect::<Result<_>>()?;
    let zero = PSI_ZERO * h.powi(n as i32 - 1);
    let (xs, ys): (Vec<f64>, Vec<f64>) = radii
        .iter()
        .zip(&psi_values)
        .filter(|(_, &v)| v > zero)
        .map(|(&r, &v)| (r.ln(), v.ln()))
        .unzip();
    let mut report = PsiDecayReport {
        radii: radii.to_vec(),
        psi: psi_values,
        exact_minimizer: xs.is_empty(),
        slope: None,
        intercept: None,
        implied_alpha: None,
        r_squared: None,
    };
    if report.exact_minimizer {
        return Ok(report);
    }
    if xs.len() < 3 {
        return Err(Error::Precondition(format!(
            "only {} radii have Ψ > 0; at least 3 are needed",
            xs.len()
        )));
    }
    let (s, c, r2) = theil_sen(&xs, &ys)?;
    report.slope = Some(s);
    report.intercept = Some(c);
    report.implied_alpha = Some((s - (n as f64 - 1.0)) / 2.0);
    report.r_squared = Some(r2);
    Ok(report)
}

/// Geometric radii from `min` to `max` (inclusive), `per_octave` per doubling.
pub fn dyadic_radii(min: f64, max: f64, per_octave: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && max >= min) || per_octave == 0 {
        return Err(invalid("radii", format!("bad range [{min}, {max}]")));
    }
    let steps = ((max / min).log2() * per_octave as f64).round() as usize;
    Ok((0..=steps)
        .map(|k| min * 2f64.powf(k as f64 / per_octave as f64))
        .collect())
}

// ---------------------------------------------------------------- Hölder constants

/// A point with a vector sampled there (a gradient, or a normal).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientSample {
    pub x: Point,
    pub grad: Point,
}

fn norm3(a: &Point, b: &Point) -> f64 {
    dist2(3, a, b).sqrt()
}

/// 0, 0.01, …, 1.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=100).map(|k| k as f64 / 100.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    pub alpha: f64,
    pub constant: f64,
    pub pairs: usize,
    /// Dyadic distance bins (relative to the smallest distance) that carried oscillation.
    pub bins: usize,
}

pub const MIN_PAIRS: usize = 100;
pub const MIN_DECADES: f64 = 2.0;

/// α̂ makes log sup-oscillation − α log distance flattest (least squares) across the
/// smaller half of the dyadic distance bins; Ĉ = max |Δg|/|Δx|^α̂ over all pairs.
/// Affine data give Ĉ = 0, α̂ = 1.
pub fn holder_fit(samples: &[GradientSample], alpha_grid: &[f64]) -> Result<HolderFit> {
    if alpha_grid.is_empty() || alpha_grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(invalid("alpha grid", "must be a nonempty subset of [0, 1]"));
    }
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for i in 0..samples.len() {
        for j in 0..i {
            let d = norm3(&samples[i].x, &samples[j].x);
            if d > 0.0 {
                pairs.push((d, norm3(&samples[i].grad, &samples[j].grad)));
            }
        }
    }
    let dmin = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let dmax = pairs.iter().map(|p| p.0).fold(0.0, f64::max);
    if pairs.len() < MIN_PAIRS || dmax / dmin < 10f64.powf(MIN_DECADES) {
        return Err(Error::Precondition(format!(
            "degenerate sample spread: {} pairs over {:.2} decades",
            pairs.len(),
            (dmax / dmin).log10()
        )));
    }
    let nbins = (dmax / dmin).log2().floor() as usize + 1;
    let mut sup = vec![0.0f64; nbins];
    let mut dist = vec![0.0f64; nbins];
    for &(d, o) in &pairs {
        let k = ((d / dmin).log2().floor() as usize).min(nbins - 1);
        sup[k] = sup[k].max(o);
        dist[k] = dist[k].max(d);
    }
    // bounded gradients saturate at large separations; the exponent is read off the
    // small-scale half of the bins
    let used = (nbins + 1) / 2;
    let bins: Vec<(f64, f64)> = sup[..used]
        .iter()
        .zip(&dist[..used])
        .filter(|(&s, _)| s > 0.0)
        .map(|(&s, &d)| (d.ln(), s.ln()))
        .collect();
    if bins.is_empty() {
        return Ok(HolderFit {
            alpha: 1.0,
            constant: 0.0,
            pairs: pairs.len(),
            bins: 0,
        });
    }
    let spread = |a: f64| {
        let ys: Vec<f64> = bins.iter().map(|(ld, ls)| ls - a * ld).collect();
        let m = ys.iter().sum::<f64>() / ys.len() as f64;
        ys.iter().map(|y| (y - m).powi(2)).sum::<f64>()
    };
    let mut alpha = alpha_grid[0];
    let mut best = f64::INFINITY;
    for &a in alpha_grid {
        let v = spread(a);
        // ties resolve toward the larger exponent
        if v <= best * (1.0 + 1e-12) + 1e-300 {
            best = v;
            alpha = a;
        }
    }
    let constant = pairs.iter().map(|&(d, o)| o / d.powf(alpha)).fold(0.0, f64::max);
    Ok(HolderFit {
        alpha,
        constant,
        pairs: pairs.len(),
        bins: bins.len(),
    })
}

/// max |Δv|/|Δx|^α over all sample pairs.
pub fn holder_constant(samples: &[GradientSample], alpha: f64) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..samples.len() {
        for j in 0..i {
            let d = norm3(&samples[i].x, &samples[j].x);
            if d > 0.0 {
                best = best.max(norm3(&samples[i].grad, &samples[j].grad) / d.powf(alpha));
            }
        }
    }
    best
}

/// ν = (−∇f, 1)/√(1 + |∇f|²) for a gradient of f: ℝ^{n−1} → ℝ stored in the first n−1 slots.
pub fn unit_normal(grad: &Point, n: usize) -> Point {
    let g2: f64 = grad[..n - 1].iter().map(|v| v * v).sum();
    let s = (1.0 + g2).sqrt();
    let mut v = [0.0; 3];
    for d in 0..n - 1 {
        v[d] = -grad[d] / s;
    }
    v[n - 1] = 1.0 / s;
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalTransferReport {
    pub alpha: f64,
    pub gradient_constant: f64,
    pub normal_constant: f64,
    /// max |∇f| over the samples.
    pub max_gradient: f64,
    /// 2(1 + M²)^{1+α/2}
    pub factor: f64,
    /// C_ν ≤ C_∇f
    pub normal_below_gradient: bool,
    /// C_∇f ≤ factor · C_ν
    pub gradient_below_factor: bool,
}

const TRANSFER_SLACK: f64 = 1e-12;

/// Sampled Hölder constants of ∇f and of the normal ν, with both transfer inequalities.
pub fn normal_transfer_check(samples: &[GradientSample], n: usize, alpha: f64) -> Result<NormalTransferReport> {
    if !(2..=3).contains(&n) {
        return Err(invalid("n", format!("must be 2 or 3, got {n}")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid("alpha", format!("must lie in [0, 1], got {alpha}")));
    }
    if samples.iter().any(|s| s.grad.iter().any(|g| !g.is_finite())) {
        return Err(Error::Precondition("gradient samples must be finite".into()));
    }
    let normals: Vec<GradientSample> = samples
        .iter()
        .map(|s| GradientSample {
            x: s.x,
            grad: unit_normal(&s.grad, n),
        })
        .collect();
    let cg = holder_constant(samples, alpha);
    let cn = holder_constant(&normals, alpha);
    let m = samples
        .iter()
        .map(|s| s.grad[..n - 1].iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let factor = 2.0 * (1.0 + m * m).powf(1.0 + alpha / 2.0);
    Ok(NormalTransferReport {
        alpha,
        gradient_constant: cg,
        normal_constant: cn,
        max_gradient: m,
        factor,
        normal_below_gradient: cn <= cg * (1.0 + TRANSFER_SLACK) + TRANSFER_SLACK,
        gradient_below_factor: cg <= factor * cn * (1.0 + TRANSFER_SLACK) + TRANSFER_SLACK,
    })
}

// ---------------------------------------------------------------- cylinder estimate

/// f sampled at x̄ (first n−1 coordinates), with its gradient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSample {
    pub x: Point,
    pub f: f64,
    pub grad: Point,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderReport {
    pub alpha0: f64,
    /// Sampled C^{α₀} of ∇f.
    pub holder_constant: f64,
    pub radii: Vec<f64>,
    /// max |z_n − y_n| over E △ {z_n < y_n} inside C_r(y), per radius.
    pub max_height: Vec<f64>,
    /// max_height / r^{1+α₀}
    pub ratio: Vec<f64>,
    /// max_height ≤ C r^{1+α₀} + slack, per radius.
    pub passes: Vec<bool>,
}

const CRITICAL_GRADIENT: f64 = 1e-9;

/// Height of the subgraph's deviation from the tangent plane at a critical point ȳ,
/// against C^{α₀}_{∇f} r^{1+α₀}.
pub fn cylinder_estimate_check(
    samples: &[GraphSample],
    center: Point,
    alpha0: f64,
    radii: &[f64],
) -> Result<CylinderReport> {
    if !(alpha0 > 0.0 && alpha0 <= 1.0) {
        return Err(invalid("alpha0", format!("must lie in (0, 1], got {alpha0}")));
    }
    let c = samples
        .iter()
        .min_by(|a, b| norm3(&a.x, &center).total_cmp(&norm3(&b.x, &center)))
        .ok_or_else(|| invalid("samples", "empty"))?;
    if norm3(&c.x, &center) > 0.0 || norm3(&c.grad, &[0.0; 3]) > CRITICAL_GRADIENT {
        return Err(Error::Precondition(format!(
            "no critical point sampled at {center:?}"
        )));
    }
    let grads: Vec<GradientSample> = samples.iter().map(|s| GradientSample { x: s.x, grad: s.grad }).collect();
    let cst = holder_constant(&grads, alpha0);
    let heights: Vec<f64> = radii
        .iter()
        .map(|&r| {
            samples
                .iter()
                .filter(|s| norm3(&s.x, &center) < r)
                .map(|s| (s.f - c.f).abs().min(r))
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(cylinder_report(alpha0, cst, radii, heights, 0.0))
}

fn cylinder_report(alpha0: f64, cst: f64, radii: &[f64], heights: Vec<f64>, slack: f64) -> CylinderReport {
    let ratio: Vec<f64> = radii.iter().zip(&heights).map(|(r, m)| m / r.powf(1.0 + alpha0)).collect();
    let passes = radii
        .iter()
        .zip(&heights)
        .map(|(r, m)| *m <= cst * r.powf(1.0 + alpha0) * (1.0 + 1e-12) + slack)
        .collect();
    CylinderReport {
        alpha0,
        holder_constant: cst,
        radii: radii.to_vec(),
        max_height: heights,
        ratio,
        passes,
    }
}

/// The same check on a rasterized set: cells of E △ {z_n < y_n} inside the open cylinder
/// C_r(y), with the supplied Hölder constant and a half-cell slack.
pub fn cylinder_estimate_check_mask(
    set: &BinaryMask,
    center: Point,
    alpha0: f64,
    holder_constant: f64,
    radii: &[f64],
) -> Result<CylinderReport> {
    let dom = set.domain();
    let n = dom.dim();
    let heights = radii
        .iter()
        .map(|&r| {
            let cyl = rasterize(&Shape::Cylinder { center, radius: r }, *dom);
            if cyl.clipped {
                return Err(Error::Precondition(format!("cylinder of radius {r} leaves the domain")));
            }
            Ok(cyl
                .mask
                .ones()
                .filter(|&i| {
                    let z = dom.center(i);
                    set.get(i) != (z[n - 1] < center[n - 1])
                })
                .map(|i| (dom.center(i)[n - 1] - center[n - 1]).abs())
                .fold(0.0, f64::max))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(cylinder_report(alpha0, holder_constant, radii, heights, 0.5 * dom.spacing()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counterexamples::cusp2d_set;
    use crate::grid::GridDomain;
    use proptest::prelude::*;

    fn power_gradient(alpha: f64, m: usize) -> Vec<GradientSample> {
        (0..m)
            .map(|k| {
                let t = -1.0 + 2.0 * k as f64 / (m - 1) as f64;
                GradientSample {
                    x: [t, 0.0, 0.0],
                    grad: [(1.0 + alpha) * t.signum() * t.abs().powf(alpha), 0.0, 0.0],
                }
            })
            .collect()
    }

    #[test]
    fn exponent_closed_forms() {
        let p = ExponentParams::new(2, 4.0).unwrap();
        assert_eq!(p.alpha0(), 0.125);
        assert!((p.fixed_point() - 0.4).abs() < 1e-15);
        assert!((p.g(p.fixed_point()) - p.fixed_point()).abs() < 1e-15);
        let inf = ExponentParams::new(3, f64::INFINITY).unwrap();
        assert_eq!(inf.alpha0(), 0.25);
        assert_eq!(inf.fixed_point(), 1.0);
        assert_eq!(inf.g(0.5), 0.75);
    }

    #[test]
    fn exponent_rejects_bad_parameters() {
        assert!(ExponentParams::new(2, 2.0).is_err());
        assert!(ExponentParams::new(3, 2.5).is_err());
        assert!(ExponentParams::new(1, 4.0).is_err());
        assert!(ExponentParams::new(2, f64::NAN).is_err());
    }

    #[test]
    fn iteration_reaches_fixed_point() {
        let r = iterate_exponent(&ExponentParams::new(2, 4.0).unwrap()).unwrap();
        assert!(r.converged);
        assert!(r.iterates.len() <= 201);
        assert!((r.iterates.last().unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn theil_sen_recovers_line_despite_outlier() {
        let x: Vec<f64> = (0..9).map(|k| k as f64).collect();
        let mut y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        y[4] = 100.0;
        let (s, c, _) = theil_sen(&x, &y).unwrap();
        assert!((s - 2.0).abs() < 1e-12 && (c + 1.0).abs() < 1e-12);
        assert!(theil_sen(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn holder_fit_finds_power_exponent() {
        for alpha in [0.3, 0.5, 0.8] {
            // an even node count straddles 0, so near-symmetric pairs exist at every separation
            let fit = holder_fit(&power_gradient(alpha, 800), &default_alpha_grid()).unwrap();
            assert!((fit.alpha - alpha).abs() <= 0.05, "{alpha}: {fit:?}");
            // sup |Δf'|/|Δt|^α = (1 + α) 2^{1−α}, attained by symmetric pairs
            let exact = (1.0 + alpha) * 2f64.powf(1.0 - alpha);
            if (fit.alpha - alpha).abs() < 1e-12 {
                assert!((fit.constant - exact).abs() < 1e-9 * exact);
            }
        }
    }

    #[test]
    fn holder_fit_affine_is_lipschitz_zero() {
        let s: Vec<GradientSample> = (0..400)
            .map(|k| GradientSample {
                x: [k as f64 / 399.0, 0.0, 0.0],
                grad: [3.0, -1.0, 0.0],
            })
            .collect();
        let fit = holder_fit(&s, &default_alpha_grid()).unwrap();
        assert_eq!((fit.alpha, fit.constant), (1.0, 0.0));
    }

    #[test]
    fn holder_fit_degenerate_spread() {
        let few = power_gradient(0.5, 10);
        assert!(matches!(holder_fit(&few, &default_alpha_grid()), Err(Error::Precondition(_))));
        let tight: Vec<GradientSample> = (0..30)
            .map(|k| GradientSample {
                x: [1.0 + 0.01 * k as f64, 0.0, 0.0],
                grad: [k as f64, 0.0, 0.0],
            })
            .collect();
        assert!(matches!(holder_fit(&tight, &default_alpha_grid()), Err(Error::Precondition(_))));
        assert!(holder_fit(&power_gradient(0.5, 101), &[1.5]).is_err());
    }

    #[test]
    fn normal_transfer_flat_gradient_has_factor_two() {
        let s: Vec<GradientSample> = (0..50)
            .map(|k| GradientSample {
                x: [k as f64 * 0.02, 0.0, 0.0],
                grad: [0.0; 3],
            })
            .collect();
        let r = normal_transfer_check(&s, 2, 0.5).unwrap();
        assert_eq!(r.factor, 2.0);
        assert_eq!(r.gradient_constant, 0.0);
        assert!(r.normal_below_gradient && r.gradient_below_factor);
    }

    #[test]
    fn normal_transfer_rejects_nonfinite() {
        let s = vec![GradientSample {
            x: [0.0; 3],
            grad: [f64::NAN, 0.0, 0.0],
        }];
        assert!(normal_transfer_check(&s, 2, 0.5).is_err());
    }

    fn power_graph(alpha: f64, m: usize) -> Vec<GraphSample> {
        power_gradient(alpha, m)
            .into_iter()
            .map(|g| GraphSample {
                x: g.x,
                f: g.x[0].abs().powf(1.0 + alpha),
                grad: g.grad,
            })
            .collect()
    }

    #[test]
    fn cylinder_power_graph_ratio_is_one() {
        let radii = [0.5, 0.25, 0.125, 0.0625];
        let r = cylinder_estimate_check(&power_graph(0.5, 2001), [0.0; 3], 0.5, &radii).unwrap();
        for (k, ratio) in r.ratio.iter().enumerate() {
            assert!((ratio - 1.0).abs() < 0.02, "{k}: {ratio}");
        }
        assert!(r.passes.iter().all(|&p| p));
        assert!(cylinder_estimate_check(&power_graph(0.5, 2001), [0.5, 0.0, 0.0], 0.5, &radii).is_err());
    }

    #[test]
    fn cylinder_cusp_mask_bound() {
        let dom = GridDomain::cube(2, 512, -1.0, 1.0).unwrap();
        let e = cusp2d_set(0.5, dom).unwrap();
        let radii = dyadic_radii(1.0 / 32.0, 0.5, 1).unwrap();
        let r = cylinder_estimate_check_mask(&e, [0.0; 3], 0.5, 1.5, &radii).unwrap();
        assert!(r.passes.iter().all(|&p| p), "{r:?}");
        // the height is governed by |x₁|^{3/2} ≤ r^{3/2}
        for (m, rad) in r.max_height.iter().zip(&radii) {
            assert!(*m <= rad.powf(1.5) + dom.spacing());
        }
    }

    #[test]
    fn psi_vanishes_for_half_plane() {
        let dom = GridDomain::cube(2, 96, -1.0, 1.0).unwrap();
        let e = BinaryMask::from_predicate(dom, |x| x[1] < 0.013);
        let w = PerimeterWeights::n16();
        let radii = dyadic_radii(0.2, 0.8, 1).unwrap();
        let r = psi_decay_fit(&e, [0.0; 3], &radii, &w).unwrap();
        assert!(r.exact_minimizer && r.slope.is_none(), "{r:?}");
    }

    #[test]
    fn psi_decay_preconditions() {
        let dom = GridDomain::cube(2, 64, -1.0, 1.0).unwrap();
        let e = BinaryMask::from_predicate(dom, |x| x[1] < 0.0);
        let w = PerimeterWeights::n16();
        let h = dom.spacing();
        assert!(psi_decay_fit(&e, [0.0; 3], &[0.3, 0.6], &w).is_err());
        assert!(psi_decay_fit(&e, [0.0; 3], &[0.3, 0.4, 0.6], &w).is_err());
        assert!(psi_decay_fit(&e, [0.0; 3], &[4.0 * h, 0.3, 0.6], &w).is_err());
        assert!(matches!(psi_decay_fit(&e, [0.0; 3], &[0.3, 0.6, 1.2], &w), Err(Error::Precondition(_))));
    }

    #[test]
    fn psi_decay_of_corner_is_positive() {
        // a right-angle corner is not perimeter minimizing; Ψ grows like r^{n−1}
        let dom = GridDomain::cube(2, 128, -1.0, 1.0).unwrap();
        let e = BinaryMask::from_predicate(dom, |x| x[0] < 0.0 && x[1] < 0.0);
        let w = PerimeterWeights::n16();
        let radii = dyadic_radii(0.125, 0.8, 2).unwrap();
        let r = psi_decay_fit(&e, [0.0; 3], &radii, &w).unwrap();
        assert!(!r.exact_minimizer);
        let s = r.slope.unwrap();
        assert!((s - 1.0).abs() < 0.15, "{r:?}");
    }

    proptest! {
        #[test]
        fn fixed_point_lies_between_the_classical_exponents(n in 2usize..4, t in 1e-6f64..1.0, dp in 1e-3f64..10.0) {
            let p = n as f64 / (1.0 - t).max(1e-6);
            let star = ExponentParams::new(n, p).unwrap().fixed_point();
            let nf = n as f64;
            prop_assert!(0.5 * (1.0 - nf / p) < star && star < 1.0 - nf / p);
            prop_assert!(ExponentParams::new(n, p + dp).unwrap().fixed_point() > star);
            if p > nf + 1.0 {
                prop_assert!(ExponentParams::new(n + 1, p).unwrap().fixed_point() < star);
            }
        }

        #[test]
        fn g_contracts_and_iterates_rise(n in 2usize..4, q in 1e-6f64..1.0, big in proptest::bool::ANY) {
            let p = if big { n as f64 + 1e6 * q } else { n as f64 + (q * 50.0).max(1e-6) };
            let p = p.min(1e6).max(n as f64 * (1.0 + 1e-9));
            let prm = ExponentParams::new(n, p).unwrap();
            let c = prm.contraction();
            prop_assert!((c - 0.5 * (1.0 - 1.0 / p)).abs() < 1e-15);
            let (a, b) = (0.1, 0.7);
            prop_assert!(((prm.g(b) - prm.g(a)).abs() - c * (b - a)).abs() < 1e-14);
            let r = iterate_exponent(&prm).unwrap();
            prop_assert!(r.converged && r.iterates.len() <= 201);
            prop_assert!((r.fixed_point - (p - n as f64) / (p + 1.0)).abs() < 1e-15);
            prop_assert!((r.iterates.last().unwrap() - r.fixed_point).abs() < 1e-12);
            for w in r.iterates.windows(2) {
                prop_assert!(w[1] >= w[0] && w[1] <= r.fixed_point + 1e-15);
            }
            let base = 1.0 - n as f64 / p;
            prop_assert!(r.fixed_point >= 0.5 * base - 1e-15 && r.fixed_point <= base + 1e-15);
        }

        #[test]
        fn holder_fit_scale_covariant(alpha in 0.2f64..0.9, s in 0.01f64..100.0) {
            let base = power_gradient(alpha, 201);
            let scaled: Vec<GradientSample> = base
                .iter()
                .map(|g| GradientSample { x: [g.x[0] * s, 0.0, 0.0], grad: g.grad })
                .collect();
            let a = holder_fit(&base, &default_alpha_grid()).unwrap();
            let b = holder_fit(&scaled, &default_alpha_grid()).unwrap();
            prop_assert_eq!(a.alpha, b.alpha);
            let expect = a.constant * s.powf(-a.alpha);
            prop_assert!((b.constant - expect).abs() <= 1e-9 * expect.max(1e-300));
        }

        #[test]
        fn normal_transfer_inequalities(seed in 0u64..1000, alpha in 0.05f64..1.0, n in 2usize..4) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let s: Vec<GradientSample> = (0..40)
                .map(|_| {
                    let mut x = [0.0; 3];
                    let mut g = [0.0; 3];
                    for d in 0..n - 1 {
                        x[d] = rng.gen_range(-1.0..1.0);
                        g[d] = rng.gen_range(-3.0..3.0);
                    }
                    GradientSample { x, grad: g }
                })
                .collect();
            let r = normal_transfer_check(&s, n, alpha).unwrap();
            prop_assert!(r.normal_below_gradient, "{:?}", r);
            prop_assert!(r.gradient_below_factor, "{:?}", r);
        }
    }
}
