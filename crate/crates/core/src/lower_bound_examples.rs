//! The two optimality constructions: strip-modulated data for the twisted elliptic phase, whose
//! L^q norm on a thin slab pins the exponent at 10/3 in three dimensions, and a chirp for the
//! twisted hyperbolic phase, which concentrates at size λ^{-1/2} on a whole surface.

use crate::exponents::{loglog_fit, ExponentError, ExponentFit};
use crate::oscillatory_core::{evaluate_t, required_spacing_for, CoreError, FieldValues, Lattice, PhaseFunction, SampledField, C_NYQ};
use crate::poly::{ex, Poly};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExampleError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Fit(#[from] ExponentError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignMode {
    /// Square function Σ_s |I_s|², the mean of |Σ σ_s I_s|² over random signs.
    Averaged,
    Fixed(Vec<i8>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleConfig {
    pub lambda: f64,
    pub q: f64,
    /// Strip width in units of λ^{-1/2}.
    pub c: f64,
    /// Strips s = 0..=⌊c0 √λ⌋.
    pub c0: f64,
    pub signs: SignMode,
    /// Slab half-width in units of λ^{-1/2}.
    pub tol: f64,
    pub y1_range: [f64; 2],
    /// Region sampling: nodes along x1, along x3, and across the slab.
    pub region_counts: [usize; 3],
    pub strips: Option<usize>,
}

impl ExampleConfig {
    pub fn new(lambda: f64, q: f64) -> Self {
        ExampleConfig {
            lambda,
            q,
            c: 0.5,
            c0: 0.5,
            signs: SignMode::Averaged,
            tol: 0.1,
            y1_range: [-2.0, 1.0],
            region_counts: [5, 5, 3],
            strips: None,
        }
    }

    pub fn validate(&self) -> Result<(), ExampleError> {
        if !(self.lambda >= 16.0) {
            return Err(ExampleError::Domain("λ must be at least 16".into()));
        }
        if !(self.c > 0.0 && self.c < 1.0) || !(self.tol > 0.0) || !(self.q >= 1.0) {
            return Err(ExampleError::Domain("need 0 < c < 1, tol > 0, q ≥ 1".into()));
        }
        if self.strip_count() as f64 > self.lambda.sqrt() {
            return Err(ExampleError::Domain("more strips than √λ".into()));
        }
        if let SignMode::Fixed(s) = &self.signs {
            if s.len() < self.strip_count() || s.iter().any(|&v| v != 1 && v != -1) {
                return Err(ExampleError::Domain("need one ±1 sign per strip".into()));
            }
        }
        Ok(())
    }

    pub fn strip_count(&self) -> usize {
        self.strips.unwrap_or((self.c0 * self.lambda.sqrt()).floor() as usize + 1)
    }
}

pub fn in_region(lambda: f64, tol: f64, x: &[f64]) -> bool {
    (0.5..=1.0).contains(&x[2]) && (x[1] - x[0] * x[2]).abs() <= tol / lambda.sqrt()
}

/// Sample of the slab x1 ∈ [−¼, ¼], x3 ∈ [½, 1], |x2 − x1x3| ≤ tol/√λ on a lattice sheared
/// along x2 ↦ x2 − x1x3, so every column holds the same number of nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionGrid {
    pub points: Vec<Vec<f64>>,
    pub cell_volume: f64,
}

impl RegionGrid {
    pub fn volume(&self) -> f64 {
        self.points.len() as f64 * self.cell_volume
    }
}

pub fn build_region_r(lambda: f64, tol: f64, counts: [usize; 3]) -> Result<RegionGrid, ExampleError> {
    if counts.contains(&0) {
        return Err(ExampleError::Domain("region needs at least one node per axis".into()));
    }
    let w = tol / lambda.sqrt();
    let (h1, h3, h2) = (0.5 / counts[0] as f64, 0.5 / counts[1] as f64, 2.0 * w / counts[2] as f64);
    let mut points = Vec::with_capacity(counts.iter().product());
    for i3 in 0..counts[1] {
        let x3 = 0.5 + (i3 as f64 + 0.5) * h3;
        for i1 in 0..counts[0] {
            let x1 = -0.25 + (i1 as f64 + 0.5) * h1;
            for k in 0..counts[2] {
                let x2 = x1 * x3 - w + (k as f64 + 0.5) * h2;
                points.push(vec![x1, x2, x3]);
            }
        }
    }
    Ok(RegionGrid { points, cell_volume: h1 * h2 * h3 })
}

/// Strip integrals I_s(x) = ∫_{y2 ∈ [s, s+c]/√λ} e^{iλ[φ(x,y) + (s/√λ) y1]} dy, one row per strip.
pub fn strip_integrals(cfg: &ExampleConfig, xs: &[Vec<f64>]) -> Result<Vec<Vec<C64>>, ExampleError> {
    cfg.validate()?;
    let l = cfg.lambda;
    let phase = PhaseFunction::TwistedElliptic { lambda: l };
    let rl = l.sqrt();
    (0..cfg.strip_count())
        .map(|s| {
            let lo = [cfg.y1_range[0], s as f64 / rl];
            let hi = [cfg.y1_range[1], (s as f64 + cfg.c) / rl];
            let mut chirp = Poly::zero(2);
            chirp.add_term(ex(&[(0, 1)]), rl * s as f64);
            let h = required_spacing_for(&phase, &lo, &hi, xs, Some(&chirp), 0.0, C_NYQ);
            let lat = Lattice::over_box(&lo, &hi, h);
            let f = SampledField::constant(lat, C64::new(1.0, 0.0)).with_chirp(chirp);
            Ok(evaluate_t(&phase, &f, xs)?)
        })
        .collect()
}

/// Per-point |Tf|² under the sign mode.
pub fn combine_strips(strips: &[Vec<C64>], signs: &SignMode) -> Vec<f64> {
    let m = strips.first().map_or(0, |r| r.len());
    (0..m)
        .map(|i| match signs {
            SignMode::Averaged => strips.iter().map(|r| r[i].norm_sqr()).sum(),
            SignMode::Fixed(sg) => strips.iter().zip(sg).map(|(r, &s)| r[i] * s as f64).sum::<C64>().norm_sqr(),
        })
        .collect()
}

/// (Σ_x (|Tf(x)|²)^{q/2} · cell)^{1/q}.
pub fn norm_from_squares(sq: &[f64], cell_volume: f64, q: f64) -> f64 {
    let mut s = crate::numerics::KahanSum::new();
    for v in sq {
        s.add(v.powf(q / 2.0));
    }
    (s.value() * cell_volume).powf(1.0 / q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticReport {
    pub lambda: f64,
    pub q: f64,
    pub strips: usize,
    pub region_points: usize,
    pub region_volume: f64,
    pub region_norm: f64,
}

pub fn elliptic_example_norm(cfg: &ExampleConfig) -> Result<EllipticReport, ExampleError> {
    cfg.validate()?;
    let region = build_region_r(cfg.lambda, cfg.tol, cfg.region_counts)?;
    let strips = strip_integrals(cfg, &region.points)?;
    let sq = combine_strips(&strips, &cfg.signs);
    Ok(EllipticReport {
        lambda: cfg.lambda,
        q: cfg.q,
        strips: strips.len(),
        region_points: region.points.len(),
        region_volume: region.volume(),
        region_norm: norm_from_squares(&sq, region.cell_volume, cfg.q),
    })
}

/// Mean over `patterns` random sign choices of ∥Σ σ_s I_s∥²_{L²(R)}, next to the square-function
/// value ∥(Σ|I_s|²)^{1/2}∥²_{L²(R)}.
pub fn sign_average_check(cfg: &ExampleConfig, patterns: usize, seed: u64) -> Result<(f64, f64), ExampleError> {
    let region = build_region_r(cfg.lambda, cfg.tol, cfg.region_counts)?;
    let strips = strip_integrals(cfg, &region.points)?;
    let square: f64 = combine_strips(&strips, &SignMode::Averaged).iter().sum::<f64>() * region.cell_volume;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for _ in 0..patterns {
        let sg: Vec<i8> = (0..strips.len()).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
        acc += combine_strips(&strips, &SignMode::Fixed(sg)).iter().sum::<f64>() * region.cell_volume;
    }
    Ok((acc / patterns as f64, square))
}

/// φ(x, y) + σy1 for the twisted elliptic phase (λ = 1), after completing the square in y1 and
/// then in y2.
pub fn completed_square(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    let (x1, x2, x3) = (x[0], x[1], x[2]);
    let a = sigma - x1;
    let b = sigma + (x2 - x1 * x3) / x3;
    0.5 * x3 * (y[0] + x3 * y[1] + a / x3).powi(2) + 0.5 * x3 * (y[1] - b).powi(2) - 0.5 * x3 * b * b - a * a / (2.0 * x3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicConfig {
    /// Half-side of the square supporting the bump.
    pub half_side: f64,
    /// Frequency allowance for the bump in the resolution guard.
    pub bump_bandwidth: f64,
}

impl Default for HyperbolicConfig {
    fn default() -> Self {
        HyperbolicConfig { half_side: 0.5, bump_bandwidth: 10.0 }
    }
}

/// exp(1 − 1/(1 − (t/r)²)) on (−r, r), zero outside; equal to 1 at 0.
pub fn bump(t: f64, r: f64) -> f64 {
    let u = t / r;
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

pub fn surface_defect(x: &[f64]) -> f64 {
    (x[1] - x[0] * x[2]).abs()
}

/// ∫ e^{iλ[(y1 + x3y2)² − x1y1 − x2y2]} ψ(y1)ψ(y2) dy at each x.
pub fn hyperbolic_integral(lambda: f64, xs: &[Vec<f64>], cfg: &HyperbolicConfig) -> Result<Vec<C64>, ExampleError> {
    let phase = PhaseFunction::TwistedHyperbolic { lambda };
    let r = cfg.half_side;
    let (lo, hi) = ([-r, -r], [r, r]);
    let mut chirp = Poly::zero(2);
    chirp.add_term(ex(&[(0, 2)]), lambda);
    let h = required_spacing_for(&phase, &lo, &hi, xs, Some(&chirp), cfg.bump_bandwidth, C_NYQ);
    let lat = Lattice::over_box(&lo, &hi, h);
    let factors: Vec<Vec<C64>> = (0..2)
        .map(|ax| (0..lat.counts[ax]).map(|j| C64::new(bump(lat.coord(ax, j), r), 0.0)).collect())
        .collect();
    let f = SampledField::new(lat, FieldValues::Separable(factors), 1.0)?
        .with_chirp(chirp)
        .with_bandwidth(cfg.bump_bandwidth);
    Ok(evaluate_t(&phase, &f, xs)?)
}

/// The integral at a point within 1/λ of the surface x2 = x1x3.
pub fn hyperbolic_example_value(lambda: f64, x: &[f64], cfg: &HyperbolicConfig) -> Result<C64, ExampleError> {
    if surface_defect(x) > 1.0 / lambda {
        return Err(ExampleError::Domain(format!("|x2 − x1x3| = {} exceeds 1/λ", surface_defect(x))));
    }
    Ok(hyperbolic_integral(lambda, &[x.to_vec()], cfg)?[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCertificate {
    pub fit: ExponentFit,
    pub claimed: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Needs at least four scales spanning a factor of 8.
pub fn lq_rate_certificate(samples: &[(f64, f64)], claimed: f64, tolerance: f64) -> Result<RateCertificate, ExampleError> {
    let lo = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|s| s.0).fold(0.0, f64::max);
    if samples.len() < 4 || hi < 8.0 * lo {
        return Err(ExampleError::Domain("need ≥ 4 scales spanning a factor ≥ 8".into()));
    }
    let fit = loglog_fit(samples)?;
    let pass = (fit.slope - claimed).abs() <= tolerance;
    Ok(RateCertificate { fit, claimed, tolerance, pass })
}
