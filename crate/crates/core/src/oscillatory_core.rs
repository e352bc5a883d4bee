//! Direct quadrature of Tf(x) = ∫ e^{iφ(x,y)} f(y) dy over a box of parameters.
//!
//! Every evaluation point is summed independently in a fixed lattice order with compensated
//! accumulation, so results do not depend on the number of worker threads.

use crate::numerics::{norm, ComplexSum, KahanSum};
use crate::poly::{ex, Poly, MAXV};
use crate::surface_geometry::{parabolic_rescale_map, Cap, CapPartition, GeometryError, Surface};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const C_NYQ: f64 = 1.0 / 6.0;

/// Nodes between reseeds of the multiplicative phase recurrence.
const RESEED: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("y-lattice spacing {actual} too coarse, need h <= {required}")]
    Resolution { required: f64, actual: f64 },
    #[error("x-grid spacing {actual} too coarse, need spacing <= {required}")]
    XResolution { required: f64, actual: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unknown candidate {0}")]
    UnknownCandidate(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// c·x_i x_j y_k y_l / λ added to an extension phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HormanderTerm {
    pub x: [usize; 2],
    pub y: [usize; 2],
    pub coeff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PhaseFunction {
    /// x'·y + x_n φ1(y)
    Extension { surface: Surface },
    /// Extension phase plus λφ(x/λ, y) corrections quadratic in x and in y; needs |x| ≤ λ/4.
    Hormander { surface: Surface, terms: Vec<HormanderTerm>, lambda: f64 },
    /// λ[−x1y1 − x2y2 + ½x3y1² + x3²y1y2 + ½(x3 + x3³)y2²]
    TwistedElliptic { lambda: f64 },
    /// λ[−x1y1 − x2y2 + 2x3y1y2 + x3²y2²]
    TwistedHyperbolic { lambda: f64 },
}

/// φ(x, y) = Σ_k a_k(x) y^{e_k}.
#[derive(Debug, Clone)]
pub struct PhaseTemplate {
    pub xdim: usize,
    pub ydim: usize,
    pub terms: Vec<(Poly, [u8; MAXV])>,
}

impl PhaseTemplate {
    pub fn y_poly(&self, x: &[f64]) -> Poly {
        let mut p = Poly::zero(self.ydim);
        for (a, e) in &self.terms {
            p.add_term(*e, a.eval(x));
        }
        p
    }

    /// Upper bound for |∇_x φ| at x over |y_i| ≤ ymax_i.
    pub fn x_gradient_bound(&self, x: &[f64], ymax: &[f64]) -> f64 {
        let mut g = vec![0.0; self.xdim];
        for (a, e) in &self.terms {
            let ym = mono_abs(e, ymax);
            for (i, gi) in g.iter_mut().enumerate() {
                *gi += a.deriv(i).eval(x).abs() * ym;
            }
        }
        norm(&g)
    }
}

fn mono_abs(e: &[u8; MAXV], ymax: &[f64]) -> f64 {
    ymax.iter().zip(e).map(|(m, &k)| m.powi(k as i32)).product()
}

/// Upper bound for |∇_y P| over |y_i| ≤ ymax_i.
pub fn y_gradient_bound(p: &Poly, ymax: &[f64]) -> f64 {
    let mut g = vec![0.0; p.nvars];
    for m in &p.terms {
        for (i, gi) in g.iter_mut().enumerate() {
            if m.exps[i] > 0 {
                let mut e = m.exps;
                e[i] -= 1;
                *gi += m.coeff.abs() * m.exps[i] as f64 * mono_abs(&e, ymax);
            }
        }
    }
    norm(&g)
}

fn xmono(xdim: usize, parts: &[(usize, u8)], c: f64) -> Poly {
    let mut p = Poly::zero(xdim);
    p.add_term(ex(parts), c);
    p
}

impl PhaseFunction {
    pub fn extension(surface: Surface) -> Self {
        PhaseFunction::Extension { surface }
    }

    pub fn xdim(&self) -> usize {
        match self {
            PhaseFunction::Extension { surface } | PhaseFunction::Hormander { surface, .. } => surface.n,
            _ => 3,
        }
    }

    pub fn ydim(&self) -> usize {
        self.xdim() - 1
    }

    pub fn lambda(&self) -> f64 {
        match self {
            PhaseFunction::Extension { .. } => 1.0,
            PhaseFunction::Hormander { lambda, .. }
            | PhaseFunction::TwistedElliptic { lambda }
            | PhaseFunction::TwistedHyperbolic { lambda } => *lambda,
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        match self {
            PhaseFunction::Extension { surface } => surface.validate()?,
            PhaseFunction::Hormander { surface, terms, lambda } => {
                surface.validate()?;
                let n = surface.n;
                if terms.iter().any(|t| t.x.iter().any(|&i| i >= n) || t.y.iter().any(|&i| i >= n - 1)) {
                    return Err(CoreError::Domain("perturbation index out of range".into()));
                }
                if *lambda <= 0.0 {
                    return Err(CoreError::Domain("λ must be positive".into()));
                }
            }
            PhaseFunction::TwistedElliptic { lambda } | PhaseFunction::TwistedHyperbolic { lambda } => {
                if *lambda <= 0.0 {
                    return Err(CoreError::Domain("λ must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// Rejects evaluation points outside the admissible x-domain.
    pub fn check_x(&self, x: &[f64]) -> Result<(), CoreError> {
        if x.len() != self.xdim() {
            return Err(CoreError::Domain(format!("x has {} coordinates, expected {}", x.len(), self.xdim())));
        }
        if let PhaseFunction::Hormander { lambda, .. } = self {
            if norm(x) > lambda / 4.0 {
                return Err(CoreError::Domain(format!("|x| = {} exceeds λ/4 = {}", norm(x), lambda / 4.0)));
            }
        }
        Ok(())
    }

    pub fn template(&self) -> PhaseTemplate {
        let xdim = self.xdim();
        let mut terms = Vec::new();
        let extension_part = |surface: &Surface, terms: &mut Vec<(Poly, [u8; MAXV])>| {
            let d = surface.dim();
            for i in 0..d {
                terms.push((xmono(xdim, &[(i, 1)], 1.0), ex(&[(i, 1)])));
            }
            for m in surface.phi1_poly().terms {
                terms.push((xmono(xdim, &[(d, 1)], m.coeff), m.exps));
            }
        };
        match self {
            PhaseFunction::Extension { surface } => extension_part(surface, &mut terms),
            PhaseFunction::Hormander { surface, terms: hs, lambda } => {
                extension_part(surface, &mut terms);
                for h in hs {
                    terms.push((
                        xmono(xdim, &[(h.x[0], 1), (h.x[1], 1)], h.coeff / lambda),
                        ex(&[(h.y[0], 1), (h.y[1], 1)]),
                    ));
                }
            }
            PhaseFunction::TwistedElliptic { lambda: l } => {
                terms.push((xmono(3, &[(0, 1)], -l), ex(&[(0, 1)])));
                terms.push((xmono(3, &[(1, 1)], -l), ex(&[(1, 1)])));
                terms.push((xmono(3, &[(2, 1)], 0.5 * l), ex(&[(0, 2)])));
                terms.push((xmono(3, &[(2, 2)], *l), ex(&[(0, 1), (1, 1)])));
                let mut a = xmono(3, &[(2, 1)], 0.5 * l);
                a.add_term(ex(&[(2, 3)]), 0.5 * l);
                terms.push((a, ex(&[(1, 2)])));
            }
            PhaseFunction::TwistedHyperbolic { lambda: l } => {
                terms.push((xmono(3, &[(0, 1)], -l), ex(&[(0, 1)])));
                terms.push((xmono(3, &[(1, 1)], -l), ex(&[(1, 1)])));
                terms.push((xmono(3, &[(2, 1)], 2.0 * l), ex(&[(0, 1), (1, 1)])));
                terms.push((xmono(3, &[(2, 2)], *l), ex(&[(1, 2)])));
            }
        }
        PhaseTemplate { xdim, ydim: xdim - 1, terms }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.template().y_poly(x).eval(y)
    }
}

/// Midpoint lattice over a box; axis 0 varies fastest in flat indexing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub lo: Vec<f64>,
    pub spacing: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Lattice {
    pub fn with_counts(lo: &[f64], hi: &[f64], counts: &[usize]) -> Self {
        let spacing = lo.iter().zip(hi).zip(counts).map(|((a, b), &m)| (b - a) / m as f64).collect();
        Lattice { lo: lo.to_vec(), spacing, counts: counts.to_vec() }
    }

    /// Coarsest lattice with spacing at most h_max on every axis.
    pub fn over_box(lo: &[f64], hi: &[f64], h_max: f64) -> Self {
        Self::over_box_multiple(lo, hi, h_max, 1)
    }

    /// As `over_box`, with every count a multiple of m.
    pub fn over_box_multiple(lo: &[f64], hi: &[f64], h_max: f64, m: usize) -> Self {
        let counts: Vec<usize> = lo
            .iter()
            .zip(hi)
            .map(|(a, b)| {
                let c = (((b - a) / h_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
                c.div_ceil(m) * m
            })
            .collect();
        Self::with_counts(lo, hi, &counts)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn hi(&self, ax: usize) -> f64 {
        self.lo[ax] + self.counts[ax] as f64 * self.spacing[ax]
    }

    pub fn coord(&self, ax: usize, j: usize) -> f64 {
        self.lo[ax] + (j as f64 + 0.5) * self.spacing[ax]
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn measure(&self) -> f64 {
        self.cell_volume() * self.len() as f64
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    pub fn index(&self, flat: usize) -> Vec<usize> {
        let mut rem = flat;
        self.counts
            .iter()
            .map(|&c| {
                let j = rem % c;
                rem /= c;
                j
            })
            .collect()
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        let mut f = 0;
        let mut stride = 1;
        for (j, c) in idx.iter().zip(&self.counts) {
            f += j * stride;
            stride *= c;
        }
        f
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        self.index(flat).iter().enumerate().map(|(ax, &j)| self.coord(ax, j)).collect()
    }

    pub fn abs_max(&self) -> Vec<f64> {
        (0..self.dim()).map(|ax| self.lo[ax].abs().max(self.hi(ax).abs())).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldValues {
    Constant(C64),
    /// One value per lattice node in flat order.
    Dense(Vec<C64>),
    /// f(y) = Π_ax factors[ax][j_ax].
    Separable(Vec<Vec<C64>>),
    /// Piecewise constant on a product of node-index intervals; `edges[ax]` starts at 0 and ends
    /// at the axis count.
    Blocks { edges: Vec<Vec<usize>>, values: Vec<C64> },
}

/// Complex samples of f on a lattice, times an optional unimodular chirp e^{i·chirp(y)}.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    pub lattice: Lattice,
    pub values: FieldValues,
    pub sup_bound: f64,
    /// Frequency content of `values` not captured by the chirp; enters the resolution guard.
    pub bandwidth: f64,
    pub chirp: Option<Poly>,
}

impl SampledField {
    pub fn new(lattice: Lattice, values: FieldValues, sup_bound: f64) -> Result<Self, CoreError> {
        let d = lattice.dim();
        let ok = match &values {
            FieldValues::Constant(v) => v.norm() <= sup_bound,
            FieldValues::Dense(v) => v.len() == lattice.len() && v.iter().all(|z| z.norm() <= sup_bound),
            FieldValues::Separable(fs) => {
                fs.len() == d
                    && fs.iter().zip(&lattice.counts).all(|(f, &c)| f.len() == c)
                    && fs.iter().map(|f| f.iter().map(|z| z.norm()).fold(0.0, f64::max)).product::<f64>()
                        <= sup_bound * (1.0 + 1e-12)
            }
            FieldValues::Blocks { edges, values } => {
                edges.len() == d
                    && edges.iter().zip(&lattice.counts).all(|(e, &c)| {
                        e.first() == Some(&0) && e.last() == Some(&c) && e.windows(2).all(|w| w[0] < w[1])
                    })
                    && values.len() == edges.iter().map(|e| e.len() - 1).product::<usize>()
                    && values.iter().all(|z| z.norm() <= sup_bound)
            }
        };
        if !ok || !(sup_bound >= 0.0) {
            return Err(CoreError::Domain("field values inconsistent with lattice or sup bound".into()));
        }
        Ok(SampledField { lattice, values, sup_bound, bandwidth: 0.0, chirp: None })
    }

    pub fn constant(lattice: Lattice, v: C64) -> Self {
        SampledField { lattice, values: FieldValues::Constant(v), sup_bound: v.norm(), bandwidth: 0.0, chirp: None }
    }

    pub fn with_chirp(mut self, chirp: Poly) -> Self {
        self.chirp = Some(chirp);
        self
    }

    pub fn with_bandwidth(mut self, bw: f64) -> Self {
        self.bandwidth = bw;
        self
    }

    /// Value at a node, without the chirp.
    pub fn base_value(&self, idx: &[usize]) -> C64 {
        match &self.values {
            FieldValues::Constant(v) => *v,
            FieldValues::Dense(v) => v[self.lattice.flat(idx)],
            FieldValues::Separable(fs) => fs.iter().zip(idx).map(|(f, &j)| f[j]).product(),
            FieldValues::Blocks { edges, values } => {
                let mut b = 0;
                let mut stride = 1;
                for (e, &j) in edges.iter().zip(idx) {
                    let k = e.partition_point(|&s| s <= j) - 1;
                    b += k * stride;
                    stride *= e.len() - 1;
                }
                values[b]
            }
        }
    }

    pub fn value(&self, idx: &[usize]) -> C64 {
        let v = self.base_value(idx);
        match &self.chirp {
            None => v,
            Some(c) => {
                let y: Vec<f64> = idx.iter().enumerate().map(|(ax, &j)| self.lattice.coord(ax, j)).collect();
                v * C64::cis(c.eval(&y))
            }
        }
    }

    /// All node values (chirp included) in flat order.
    pub fn to_dense(&self) -> Vec<C64> {
        (0..self.lattice.len()).map(|k| self.value(&self.lattice.index(k))).collect()
    }

    /// ∥f∥₂² over a region.
    pub fn l2_norm_sq(&self, region: &Region) -> f64 {
        let mut s = KahanSum::new();
        for k in 0..self.lattice.len() {
            let idx = self.lattice.index(k);
            if region.contains(&self.lattice, &idx) {
                s.add(self.base_value(&idx).norm_sqr());
            }
        }
        s.value() * self.lattice.cell_volume()
    }

    pub fn vanishes_on(&self, region: &Region) -> bool {
        match &self.values {
            FieldValues::Constant(v) => *v == C64::new(0.0, 0.0),
            _ => (0..self.lattice.len()).all(|k| {
                let idx = self.lattice.index(k);
                !region.contains(&self.lattice, &idx) || self.base_value(&idx) == C64::new(0.0, 0.0)
            }),
        }
    }
}

/// Part of the lattice an integral runs over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Region {
    All,
    /// Half-open node-index box.
    IndexBox { start: Vec<usize>, end: Vec<usize> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Region {
    pub fn ball(cap: &Cap) -> Self {
        Region::Ball { center: cap.center.clone(), radius: cap.radius }
    }

    fn ranges(&self, lat: &Lattice) -> (Vec<usize>, Vec<usize>) {
        match self {
            Region::All => (vec![0; lat.dim()], lat.counts.clone()),
            Region::IndexBox { start, end } => {
                (start.clone(), end.iter().zip(&lat.counts).map(|(e, c)| (*e).min(*c)).collect())
            }
            Region::Ball { center, radius } => {
                let mut s = Vec::new();
                let mut e = Vec::new();
                for ax in 0..lat.dim() {
                    let (a, b) = axis_interval(lat, ax, center[ax] - radius, center[ax] + radius);
                    s.push(a);
                    e.push(b);
                }
                (s, e)
            }
        }
    }

    pub fn contains(&self, lat: &Lattice, idx: &[usize]) -> bool {
        match self {
            Region::All => true,
            Region::IndexBox { start, end } => idx.iter().zip(start.iter().zip(end)).all(|(j, (s, e))| s <= j && j < e),
            Region::Ball { center, radius } => {
                let rest: f64 = (1..lat.dim()).map(|ax| (lat.coord(ax, idx[ax]) - center[ax]).powi(2)).sum();
                let (a, b) = ball_row(lat, center, *radius, rest);
                a <= idx[0] && idx[0] < b
            }
        }
    }
}

/// Node indices j with lo ≤ coord(j) ≤ hi, as a half-open range.
fn axis_interval(lat: &Lattice, ax: usize, lo: f64, hi: f64) -> (usize, usize) {
    let h = lat.spacing[ax];
    let a = ((lo - lat.lo[ax]) / h - 0.5).ceil().max(0.0);
    let b = ((hi - lat.lo[ax]) / h - 0.5).floor() + 1.0;
    let m = lat.counts[ax] as f64;
    let a = a.min(m) as usize;
    let b = b.clamp(0.0, m) as usize;
    (a, b.max(a))
}

/// Axis-0 range of a ball row whose other coordinates contribute `rest` to the squared distance.
fn ball_row(lat: &Lattice, center: &[f64], radius: f64, rest: f64) -> (usize, usize) {
    let w2 = radius * radius - rest;
    if w2 < 0.0 {
        return (0, 0);
    }
    let w = w2.sqrt();
    axis_interval(lat, 0, center[0] - w, center[0] + w)
}

/// Node-index box of cap α of a grid partition.
pub fn cap_region(partition: &CapPartition, alpha: usize, lat: &Lattice) -> Result<Region, CoreError> {
    if partition.cells.is_empty() {
        return Err(CoreError::Domain("cap regions need a grid partition".into()));
    }
    let mut rem = alpha;
    let mut start = Vec::new();
    let mut end = Vec::new();
    for ax in 0..lat.dim() {
        let cell = rem % partition.cells[ax];
        rem /= partition.cells[ax];
        let js: Vec<usize> =
            (0..lat.counts[ax]).filter(|&j| partition.axis_cell(ax, lat.coord(ax, j)) == cell).collect();
        match (js.first(), js.last()) {
            (Some(&a), Some(&b)) => {
                start.push(a);
                end.push(b + 1);
            }
            _ => {
                start.push(0);
                end.push(0);
            }
        }
    }
    Ok(Region::IndexBox { start, end })
}

/// Largest admissible y-spacing c_nyq/(1 + sup_x |∇_y(φ + chirp)| + bandwidth).
pub fn required_spacing(phase: &PhaseFunction, f: &SampledField, xs: &[Vec<f64>], c_nyq: f64) -> f64 {
    let t = phase.template();
    let ymax = f.lattice.abs_max();
    let g = xs
        .par_iter()
        .map(|x| {
            let mut p = t.y_poly(x);
            if let Some(c) = &f.chirp {
                p.add(c);
            }
            y_gradient_bound(&p, &ymax)
        })
        .reduce(|| 0.0, f64::max);
    c_nyq / (1.0 + g + f.bandwidth)
}

/// Largest admissible spacing for a y-box given the x points, before any field exists.
pub fn required_spacing_for(
    phase: &PhaseFunction,
    lo: &[f64],
    hi: &[f64],
    xs: &[Vec<f64>],
    chirp: Option<&Poly>,
    bandwidth: f64,
    c_nyq: f64,
) -> f64 {
    let lat = Lattice::with_counts(lo, hi, &vec![1; lo.len()]);
    let mut f = SampledField::constant(lat, C64::new(1.0, 0.0)).with_bandwidth(bandwidth);
    f.chirp = chirp.cloned();
    required_spacing(phase, &f, xs, c_nyq)
}

fn preflight(phase: &PhaseFunction, f: &SampledField, xs: &[Vec<f64>], c_nyq: f64) -> Result<(), CoreError> {
    phase.validate()?;
    if f.lattice.dim() != phase.ydim() {
        return Err(CoreError::Domain("field lattice dimension does not match the phase".into()));
    }
    for x in xs {
        phase.check_x(x)?;
    }
    let required = required_spacing(phase, f, xs, c_nyq);
    let actual = f.lattice.max_spacing();
    if actual > required * (1.0 + 1e-12) {
        return Err(CoreError::Resolution { required, actual });
    }
    Ok(())
}

/// Tf(x) for each x, Riemann sum over the whole lattice.
pub fn evaluate_t(phase: &PhaseFunction, f: &SampledField, xs: &[Vec<f64>]) -> Result<Vec<C64>, CoreError> {
    evaluate_t_region(phase, f, &Region::All, xs, C_NYQ)
}

pub fn evaluate_t_region(
    phase: &PhaseFunction,
    f: &SampledField,
    region: &Region,
    xs: &[Vec<f64>],
    c_nyq: f64,
) -> Result<Vec<C64>, CoreError> {
    preflight(phase, f, xs, c_nyq)?;
    let t = phase.template();
    Ok(xs.par_iter().map(|x| integrate(&t, f, region, x)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapValues {
    pub raw: Vec<C64>,
    /// raw · e^{−iφ(x, y_α)}
    pub modulated: Vec<C64>,
}

pub fn evaluate_t_cap(
    phase: &PhaseFunction,
    f: &SampledField,
    region: &Region,
    cap_center: &[f64],
    xs: &[Vec<f64>],
) -> Result<CapValues, CoreError> {
    let raw = evaluate_t_region(phase, f, region, xs, C_NYQ)?;
    let t = phase.template();
    let modulated = raw.iter().zip(xs).map(|(z, x)| z * C64::cis(-t.y_poly(x).eval(cap_center))).collect();
    Ok(CapValues { raw, modulated })
}

fn integrate(t: &PhaseTemplate, f: &SampledField, region: &Region, x: &[f64]) -> C64 {
    let mut p = t.y_poly(x);
    if let Some(c) = &f.chirp {
        p.add(c);
    }
    let fast = match (&f.values, region) {
        (FieldValues::Dense(_), _) => false,
        (FieldValues::Blocks { .. }, Region::Ball { .. }) => false,
        _ => true,
    };
    if fast {
        if let Some((c0, per)) = p.split_separable() {
            return integrate_separable(c0, &per, f, region);
        }
    }
    integrate_rows(&p, f, region)
}

#[inline]
fn cubic(c: &[f64; 4], t: f64) -> f64 {
    ((c[3] * t + c[2]) * t + c[1]) * t + c[0]
}

/// Compensated prefix sums of w_j e^{iP(t_j)} over one axis, indices start..end.
fn axis_prefix(lat: &Lattice, ax: usize, c: &[f64; 4], w: Option<&[C64]>, start: usize, end: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(end - start + 1);
    let mut s = ComplexSum::new();
    out.push(C64::new(0.0, 0.0));
    for j in start..end {
        let mut z = C64::cis(cubic(c, lat.coord(ax, j)));
        if let Some(w) = w {
            z *= w[j];
        }
        s.add(z);
        out.push(s.value());
    }
    out
}

fn integrate_separable(c0: f64, per: &[[f64; 4]], f: &SampledField, region: &Region) -> C64 {
    let lat = &f.lattice;
    let d = lat.dim();
    let (start, end) = region.ranges(lat);
    if start.iter().zip(&end).any(|(s, e)| s >= e) {
        return C64::new(0.0, 0.0);
    }
    let factors = match &f.values {
        FieldValues::Separable(fs) => Some(fs),
        _ => None,
    };
    let pre: Vec<Vec<C64>> = (0..d)
        .map(|ax| axis_prefix(lat, ax, &per[ax], factors.map(|fs| fs[ax].as_slice()), start[ax], end[ax]))
        .collect();
    let range = |ax: usize, a: usize, b: usize| pre[ax][b - start[ax]] - pre[ax][a - start[ax]];
    let scale = C64::cis(c0) * lat.cell_volume();
    let total = match (&f.values, region) {
        (FieldValues::Blocks { edges, values }, _) => {
            let nb: Vec<usize> = edges.iter().map(|e| e.len() - 1).collect();
            let mut s = ComplexSum::new();
            'blocks: for (b, v) in values.iter().enumerate() {
                if *v == C64::new(0.0, 0.0) {
                    continue;
                }
                let mut rem = b;
                let mut prod = *v;
                for ax in 0..d {
                    let k = rem % nb[ax];
                    rem /= nb[ax];
                    let a = edges[ax][k].max(start[ax]);
                    let e = edges[ax][k + 1].min(end[ax]);
                    if a >= e {
                        continue 'blocks;
                    }
                    prod *= range(ax, a, e);
                }
                s.add(prod);
            }
            s.value()
        }
        (_, Region::Ball { center, radius }) => {
            let mut s = ComplexSum::new();
            let mut idx = start.clone();
            loop {
                let mut rest = 0.0;
                let mut w = C64::new(1.0, 0.0);
                for ax in 1..d {
                    rest += (lat.coord(ax, idx[ax]) - center[ax]).powi(2);
                    w *= range(ax, idx[ax], idx[ax] + 1);
                }
                let (a, b) = ball_row(lat, center, *radius, rest);
                let (a, b) = (a.max(start[0]), b.min(end[0]));
                if a < b {
                    s.add(w * range(0, a, b));
                }
                if !advance(&mut idx, &start, &end, 1) {
                    break;
                }
            }
            s.value()
        }
        _ => (0..d).map(|ax| range(ax, start[ax], end[ax])).product(),
    };
    let base = match &f.values {
        FieldValues::Constant(v) => *v,
        _ => C64::new(1.0, 0.0),
    };
    total * base * scale
}

/// Odometer over axes from..d; false once exhausted.
fn advance(idx: &mut [usize], start: &[usize], end: &[usize], from: usize) -> bool {
    for ax in from..idx.len() {
        idx[ax] += 1;
        if idx[ax] < end[ax] {
            return true;
        }
        idx[ax] = start[ax];
    }
    false
}

/// Row-by-row summation along axis 0 with a reseeded multiplicative recurrence for e^{iP}.
fn integrate_rows(p: &Poly, f: &SampledField, region: &Region) -> C64 {
    let lat = &f.lattice;
    let d = lat.dim();
    let (start, end) = region.ranges(lat);
    if start.iter().zip(&end).any(|(s, e)| s >= e) {
        return C64::new(0.0, 0.0);
    }
    let cubic_rows = p.degree_in(0) <= 3;
    let block_of: Vec<Vec<usize>> = match &f.values {
        FieldValues::Blocks { edges, .. } => (0..d)
            .map(|ax| (0..lat.counts[ax]).map(|j| edges[ax].partition_point(|&s| s <= j) - 1).collect())
            .collect(),
        _ => Vec::new(),
    };
    let mut total = ComplexSum::new();
    let mut idx = start.clone();
    let mut y = vec![0.0; d];
    loop {
        let mut rest = 0.0;
        for ax in 1..d {
            y[ax] = lat.coord(ax, idx[ax]);
        }
        let (a, b) = match region {
            Region::Ball { center, radius } => {
                for ax in 1..d {
                    rest += (y[ax] - center[ax]).powi(2);
                }
                let (a, b) = ball_row(lat, center, *radius, rest);
                (a.max(start[0]), b.min(end[0]))
            }
            _ => (start[0], end[0]),
        };
        if a < b {
            idx[0] = 0;
            let row_flat = lat.flat(&idx);
            let row_sum = match &f.values {
                FieldValues::Constant(v) => *v * row(p, lat, &y, a, b, cubic_rows, |_| C64::new(1.0, 0.0)),
                FieldValues::Dense(vals) => row(p, lat, &y, a, b, cubic_rows, |j| vals[row_flat + j]),
                FieldValues::Separable(fs) => {
                    let w: C64 = (1..d).map(|ax| fs[ax][idx[ax]]).product();
                    w * row(p, lat, &y, a, b, cubic_rows, |j| fs[0][j])
                }
                FieldValues::Blocks { edges, values } => {
                    let mut base = 0;
                    let mut stride = edges[0].len() - 1;
                    for ax in 1..d {
                        base += block_of[ax][idx[ax]] * stride;
                        stride *= edges[ax].len() - 1;
                    }
                    let b0 = &block_of[0];
                    row(p, lat, &y, a, b, cubic_rows, |j| values[base + b0[j]])
                }
            };
            total.add(row_sum);
        }
        idx[0] = start[0];
        if !advance(&mut idx, &start, &end, 1) {
            break;
        }
    }
    total.value() * lat.cell_volume()
}

#[inline]
fn row<W: Fn(usize) -> C64>(p: &Poly, lat: &Lattice, y: &[f64], a: usize, b: usize, cubic_rows: bool, w: W) -> C64 {
    let mut s = ComplexSum::new();
    if !cubic_rows {
        let mut yy = y.to_vec();
        for j in a..b {
            yy[0] = lat.coord(0, j);
            s.add(w(j) * C64::cis(p.eval(&yy)));
        }
        return s.value();
    }
    let c = p.coeffs_in(0, y);
    let h = lat.spacing[0];
    let mut j = a;
    while j < b {
        let stop = (j + RESEED).min(b);
        let t = lat.coord(0, j);
        let b0 = cubic(&c, t);
        let b1 = c[1] + (2.0 * c[2] + 3.0 * c[3] * t) * t;
        let b2 = c[2] + 3.0 * c[3] * t;
        let b3 = c[3];
        let mut e = C64::cis(b0);
        let mut d1 = C64::cis(b1 * h + b2 * h * h + b3 * h * h * h);
        let mut d2 = C64::cis(2.0 * b2 * h * h + 6.0 * b3 * h * h * h);
        let d3 = C64::cis(6.0 * b3 * h * h * h);
        for jj in j..stop {
            s.add(w(jj) * e);
            e *= d1;
            d1 *= d2;
            d2 *= d3;
        }
        j = stop;
    }
    s.value()
}

/// Ball of lattice points center + spacing·k, k ∈ Z^n; nested in the radius for a fixed spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationGrid {
    pub center: Vec<f64>,
    pub radius: f64,
    pub spacing: f64,
    pub nodes: Vec<Vec<f64>>,
}

impl EvaluationGrid {
    pub fn ball(center: &[f64], radius: f64, spacing: f64) -> Self {
        let n = center.len();
        let m = (radius / spacing).floor() as i64;
        let side = (2 * m + 1) as usize;
        let mut nodes = Vec::new();
        let mut k = vec![-m; n];
        for _ in 0..side.pow(n as u32) {
            let r2: f64 = k.iter().map(|&v| (v as f64 * spacing).powi(2)).sum();
            if r2 <= radius * radius * (1.0 + 1e-12) {
                nodes.push(center.iter().zip(&k).map(|(c, &v)| c + v as f64 * spacing).collect());
            }
            for v in k.iter_mut() {
                *v += 1;
                if *v <= m {
                    break;
                }
                *v = -m;
            }
        }
        EvaluationGrid { center: center.to_vec(), radius, spacing, nodes }
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.center.len() as i32)
    }

    /// Spacing must resolve the x-oscillation: spacing ≤ π / sup |∇_x φ|.
    pub fn check_resolution(&self, phase: &PhaseFunction, ylat: &Lattice) -> Result<(), CoreError> {
        let t = phase.template();
        let ymax = ylat.abs_max();
        let g = self.nodes.par_iter().map(|x| t.x_gradient_bound(x, &ymax)).reduce(|| 0.0, f64::max);
        let required = std::f64::consts::PI / g.max(1e-300);
        if self.spacing > required {
            return Err(CoreError::XResolution { required, actual: self.spacing });
        }
        Ok(())
    }
}

/// (Σ|v|^p · cell volume)^{1/p}; p = ∞ gives the largest modulus.
pub fn lattice_lp_norm(values: &[C64], cell_volume: f64, p: f64) -> Result<f64, CoreError> {
    if values.is_empty() {
        return Err(CoreError::Domain("empty grid".into()));
    }
    if !(p >= 1.0) {
        return Err(CoreError::Domain(format!("p = {p} below 1")));
    }
    if p.is_infinite() {
        return Ok(values.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    let mut s = KahanSum::new();
    for z in values {
        s.add(z.norm().powf(p));
    }
    Ok((s.value() * cell_volume).powf(1.0 / p))
}

/// Averaged norm (⨏ |v|^p)^{1/p} over the grid.
pub fn lattice_lp_average(values: &[C64], p: f64) -> Result<f64, CoreError> {
    let n = values.len() as f64;
    lattice_lp_norm(values, 1.0 / n, p)
}

/// Majorant profile: η̂ = 1 on |ω| ≤ r0 with a smooth taper to zero at 2r0, and
/// ζ1(u) = max_{|t−u|≤1} |η(t)| tabulated on the offsets −W, −W + du, …, W.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mollifier {
    pub r0: f64,
    pub window: f64,
    pub du: f64,
    pub zeta: Vec<f64>,
}

fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    a / (a + b)
}

impl Default for Mollifier {
    fn default() -> Self {
        Mollifier::new(2.0, 6.0, 0.25)
    }
}

impl Mollifier {
    pub fn new(r0: f64, window: f64, du: f64) -> Self {
        let mut m = Mollifier { r0, window, du, zeta: Vec::new() };
        let fine = 1.0 / 64.0;
        let tmax = window + 1.0 + fine;
        let nt = (2.0 * tmax / fine).ceil() as usize + 1;
        let eta: Vec<f64> = (0..nt).map(|i| m.eta(-tmax + i as f64 * fine).abs()).collect();
        let nu = (2.0 * window / du).round() as usize + 1;
        m.zeta = (0..nu)
            .map(|k| {
                let u = -window + k as f64 * du;
                let lo = (((u - 1.0 - fine) + tmax) / fine).floor().max(0.0) as usize;
                let hi = ((((u + 1.0 + fine) + tmax) / fine).ceil() as usize).min(nt - 1);
                eta[lo..=hi].iter().cloned().fold(0.0, f64::max)
            })
            .collect();
        m
    }

    pub fn eta_hat(&self, w: f64) -> f64 {
        1.0 - smooth_step((w.abs() - self.r0) / self.r0)
    }

    /// η(t) = (1/π)∫_0^{2r0} η̂(ω) cos(ωt) dω by the midpoint rule.
    pub fn eta(&self, t: f64) -> f64 {
        let m = 4000;
        let dw = 2.0 * self.r0 / m as f64;
        let mut s = KahanSum::new();
        for k in 0..m {
            let w = (k as f64 + 0.5) * dw;
            s.add(self.eta_hat(w) * (w * t).cos());
        }
        s.value() * dw / std::f64::consts::PI
    }

    pub fn offsets(&self) -> Vec<f64> {
        (0..self.zeta.len()).map(|k| -self.window + k as f64 * self.du).collect()
    }

    /// Discrete ∥ζ_K∥₁ in unit-scaled variables, (Σ ζ1 du)^n.
    pub fn l1(&self, n: usize) -> f64 {
        (self.zeta.iter().sum::<f64>() * self.du).powi(n as i32)
    }

    /// Sample points a + K·u and weights Π ζ1(u_j) du^n.
    pub fn stencil(&self, a: &[f64], k: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n = a.len();
        let off = self.offsets();
        let m = off.len();
        let mut pts = Vec::with_capacity(m.pow(n as u32));
        let mut ws = Vec::with_capacity(m.pow(n as u32));
        let mut idx = vec![0usize; n];
        loop {
            pts.push(a.iter().zip(&idx).map(|(ai, &j)| ai + k * off[j]).collect());
            ws.push(idx.iter().map(|&j| self.zeta[j] * self.du).product());
            let mut ax = 0;
            loop {
                if ax == n {
                    return (pts, ws);
                }
                idx[ax] += 1;
                if idx[ax] < m {
                    break;
                }
                idx[ax] = 0;
                ax += 1;
            }
        }
    }
}

/// c_α = Σ_u |T_α f(a + K u)| Π ζ1(u_j) du^n with T_α f the modulated cap integral.
#[allow(clippy::too_many_arguments)]
pub fn mollified_majorant(
    phase: &PhaseFunction,
    f: &SampledField,
    region: &Region,
    cap_center: &[f64],
    a: &[f64],
    k: f64,
    moll: &Mollifier,
) -> Result<f64, CoreError> {
    if f.vanishes_on(region) {
        return Ok(0.0);
    }
    let (pts, ws) = moll.stencil(a, k);
    let v = evaluate_t_cap(phase, f, region, cap_center, &pts)?;
    let mut s = KahanSum::new();
    for (z, w) in v.modulated.iter().zip(&ws) {
        s.add(z.norm() * w);
    }
    Ok(s.value())
}

/// Catalog of test functions; every entry has sup norm at most 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Candidate {
    Constant,
    /// Independent ±1 on each cell of a K×…×K grid over the lattice box.
    RandomCapSigns { k: usize, seed: u64 },
    /// Product bump of half-width `radius` at `center`.
    Knapp { center: Vec<f64>, radius: f64 },
    /// Σ σ_s 1[s/√λ, (s+c)/√λ](y2) e^{iλ(s/√λ)y1}; `signs` cycles, empty means all +1.
    SignStrips { lambda: f64, c: f64, #[serde(default)] signs: Vec<i8> },
    /// e^{i·scale·y1²}
    Chirp { scale: f64 },
}

fn bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - t * t)).exp()
    }
}

impl Candidate {
    pub fn id(&self) -> String {
        match self {
            Candidate::Constant => "constant".into(),
            Candidate::RandomCapSigns { k, seed } => format!("random-cap-signs(k={k},seed={seed})"),
            Candidate::Knapp { center, radius } => format!("knapp(center={center:?},radius={radius})"),
            Candidate::SignStrips { lambda, c, .. } => format!("sign-strips(lambda={lambda},c={c})"),
            Candidate::Chirp { scale } => format!("chirp(scale={scale})"),
        }
    }

    /// Frequency content entering the resolution guard.
    pub fn bandwidth(&self) -> f64 {
        match self {
            Candidate::Knapp { radius, .. } => 4.0 / radius,
            Candidate::SignStrips { lambda, c, .. } => {
                let s_max = (lambda.sqrt() - c).max(0.0).floor();
                lambda.sqrt() * s_max
            }
            _ => 0.0,
        }
    }

    pub fn chirp(&self, ydim: usize) -> Option<Poly> {
        match self {
            Candidate::Chirp { scale } => {
                let mut p = Poly::zero(ydim);
                p.add_term(ex(&[(0, 2)]), *scale);
                Some(p)
            }
            _ => None,
        }
    }

    pub fn sample(&self, lat: &Lattice) -> Result<SampledField, CoreError> {
        let one = C64::new(1.0, 0.0);
        let d = lat.dim();
        let field = match self {
            Candidate::Constant => SampledField::constant(lat.clone(), one),
            Candidate::Chirp { .. } => SampledField::constant(lat.clone(), one).with_chirp(self.chirp(d).unwrap()),
            Candidate::RandomCapSigns { k, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let nb = k.pow(d as u32);
                let values: Vec<C64> = (0..nb).map(|_| if rng.gen::<bool>() { one } else { -one }).collect();
                let mut edges = Vec::new();
                for ax in 0..d {
                    let w = (lat.hi(ax) - lat.lo[ax]) / *k as f64;
                    let mut e = vec![0];
                    for j in 1..lat.counts[ax] {
                        let cell = |jj: usize| (((lat.coord(ax, jj) - lat.lo[ax]) / w).floor() as usize).min(k - 1);
                        if cell(j) != cell(j - 1) {
                            e.push(j);
                        }
                    }
                    e.push(lat.counts[ax]);
                    if e.len() != k + 1 {
                        return Err(CoreError::Domain(format!("lattice too coarse for {k} sign cells")));
                    }
                    edges.push(e);
                }
                SampledField::new(lat.clone(), FieldValues::Blocks { edges, values }, 1.0)?
            }
            Candidate::Knapp { center, radius } => {
                if center.len() != d || *radius <= 0.0 {
                    return Err(CoreError::Domain("knapp center/radius invalid".into()));
                }
                let fs = (0..d)
                    .map(|ax| {
                        (0..lat.counts[ax])
                            .map(|j| C64::new(bump((lat.coord(ax, j) - center[ax]) / radius), 0.0))
                            .collect()
                    })
                    .collect();
                SampledField::new(lat.clone(), FieldValues::Separable(fs), 1.0)?.with_bandwidth(self.bandwidth())
            }
            Candidate::SignStrips { lambda, c, signs } => {
                if d != 2 || *lambda <= 0.0 || !(*c > 0.0 && *c < 1.0) {
                    return Err(CoreError::Domain("sign strips need two parameters, λ > 0, 0 < c < 1".into()));
                }
                let sl = lambda.sqrt();
                let mut vals = vec![C64::new(0.0, 0.0); lat.len()];
                for (k, v) in vals.iter_mut().enumerate() {
                    let idx = lat.index(k);
                    let (y1, y2) = (lat.coord(0, idx[0]), lat.coord(1, idx[1]));
                    let s = (y2 * sl).floor();
                    if s >= 0.0 && y2 * sl - s <= *c {
                        let sign = if signs.is_empty() { 1.0 } else { signs[s as usize % signs.len()] as f64 };
                        *v = C64::cis(lambda * (s / sl) * y1) * sign;
                    }
                }
                SampledField::new(lat.clone(), FieldValues::Dense(vals), 1.0)?.with_bandwidth(self.bandwidth())
            }
        };
        Ok(field)
    }
}

/// Builds a catalog entry from a name and JSON parameters.
pub fn candidate_extremizer(name: &str, params: &serde_json::Value, lat: &Lattice) -> Result<SampledField, CoreError> {
    let mut obj = match params {
        serde_json::Value::Object(m) => m.clone(),
        serde_json::Value::Null => serde_json::Map::new(),
        _ => return Err(CoreError::Domain("candidate parameters must be an object".into())),
    };
    obj.insert("name".into(), serde_json::Value::String(name.into()));
    let c: Candidate =
        serde_json::from_value(serde_json::Value::Object(obj)).map_err(|_| CoreError::UnknownCandidate(name.into()))?;
    c.sample(lat)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrEstimate {
    pub radius: f64,
    pub p: f64,
    pub best: f64,
    pub best_id: String,
    pub per_candidate: Vec<(String, f64)>,
    pub points: usize,
    pub y_spacing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrConfig {
    pub p: f64,
    pub x_spacing: f64,
    pub ylo: Vec<f64>,
    pub yhi: Vec<f64>,
    pub catalog: Vec<Candidate>,
    pub c_nyq: f64,
    /// Fixed y-spacing; must itself pass the resolution guard.
    #[serde(default)]
    pub y_spacing: Option<f64>,
}

impl QrConfig {
    pub fn unit_square(p: f64, catalog: Vec<Candidate>) -> Self {
        QrConfig { p, x_spacing: 2.0, ylo: vec![-0.5, -0.5], yhi: vec![0.5, 0.5], catalog, c_nyq: C_NYQ, y_spacing: None }
    }
}

/// Lower bound for max ∥Tf∥_{L^p(B_R)} over the catalog, for each radius. One y-lattice, fine
/// enough for the largest ball, is shared by the whole sweep so the balls are nested exactly.
pub fn qr_sweep(surface: &Surface, cfg: &QrConfig, radii: &[f64]) -> Result<Vec<QrEstimate>, CoreError> {
    if !(cfg.p >= 1.0) {
        return Err(CoreError::Domain("p must be at least 1".into()));
    }
    if cfg.catalog.is_empty() || radii.is_empty() {
        return Err(CoreError::Domain("empty catalog or sweep".into()));
    }
    let phase = PhaseFunction::extension(surface.clone());
    let n = surface.n;
    let rmax = radii.iter().cloned().fold(0.0, f64::max);
    let outer = EvaluationGrid::ball(&vec![0.0; n], rmax, cfg.x_spacing);
    let bw = cfg.catalog.iter().map(|c| c.bandwidth()).fold(0.0, f64::max);
    let mut h = f64::INFINITY;
    for c in &cfg.catalog {
        h = h.min(required_spacing_for(&phase, &cfg.ylo, &cfg.yhi, &outer.nodes, c.chirp(n - 1).as_ref(), bw, cfg.c_nyq));
    }
    let lat = Lattice::over_box(&cfg.ylo, &cfg.yhi, cfg.y_spacing.unwrap_or(h));
    outer.check_resolution(&phase, &lat)?;
    let fields: Vec<SampledField> = cfg.catalog.iter().map(|c| c.sample(&lat)).collect::<Result<_, _>>()?;
    let values: Vec<Vec<C64>> =
        fields.iter().map(|f| evaluate_t_region(&phase, f, &Region::All, &outer.nodes, cfg.c_nyq)).collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for &r in radii {
        let keep: Vec<usize> = (0..outer.nodes.len()).filter(|&i| norm(&outer.nodes[i]) <= r * (1.0 + 1e-12)).collect();
        let mut per = Vec::new();
        for (c, v) in cfg.catalog.iter().zip(&values) {
            let sel: Vec<C64> = keep.iter().map(|&i| v[i]).collect();
            per.push((c.id(), lattice_lp_norm(&sel, outer.cell_volume(), cfg.p)?));
        }
        let (best_id, best) = per
            .iter()
            .fold((String::new(), f64::NEG_INFINITY), |acc, (id, v)| if *v > acc.1 { (id.clone(), *v) } else { acc });
        out.push(QrEstimate { radius: r, p: cfg.p, best, best_id, per_candidate: per, points: keep.len(), y_spacing: lat.max_spacing() });
    }
    Ok(out)
}

pub fn estimate_qr(surface: &Surface, cfg: &QrConfig, radius: f64) -> Result<QrEstimate, CoreError> {
    Ok(qr_sweep(surface, cfg, &[radius])?.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalityReport {
    pub radius: usize,
    pub ratio: f64,
    pub caps: usize,
    pub points: usize,
}

/// Σ_α ∫_{B_R} |T_α f|² / (R ∥f∥₂²) for caps of side 1/R over the parameter box.
pub fn bessel_orthogonality_check(
    phase: &PhaseFunction,
    candidate: &Candidate,
    r: usize,
    ylo: &[f64],
    yhi: &[f64],
) -> Result<OrthogonalityReport, CoreError> {
    let n = phase.xdim();
    let grid = EvaluationGrid::ball(&vec![0.0; n], r as f64, r as f64 / 8.0);
    let h = required_spacing_for(phase, ylo, yhi, &grid.nodes, candidate.chirp(n - 1).as_ref(), candidate.bandwidth(), C_NYQ);
    let widths: Vec<f64> = ylo.iter().zip(yhi).map(|(a, b)| b - a).collect();
    if widths.iter().any(|w| (w - widths[0]).abs() > 1e-12) {
        return Err(CoreError::Domain("orthogonality check needs a cube of parameters".into()));
    }
    let k = r as f64 / widths[0];
    let lat = Lattice::over_box_multiple(ylo, yhi, h, r);
    let f = candidate.sample(&lat)?;
    let part = CapPartition::uniform(ylo, yhi, k);
    let mut total = KahanSum::new();
    for alpha in 0..part.len() {
        let region = cap_region(&part, alpha, &lat)?;
        if f.vanishes_on(&region) {
            continue;
        }
        let v = evaluate_t_region(phase, &f, &region, &grid.nodes, C_NYQ)?;
        for z in v {
            total.add(z.norm_sqr());
        }
    }
    let fnorm = f.l2_norm_sq(&Region::All);
    if fnorm == 0.0 {
        return Err(CoreError::Domain("zero field".into()));
    }
    Ok(OrthogonalityReport {
        radius: r,
        ratio: total.value() * grid.cell_volume() / (r as f64 * fnorm),
        caps: part.len(),
        points: grid.nodes.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescalingReport {
    pub x_spacing: f64,
    pub direct: f64,
    pub rescaled: f64,
    pub ratio: f64,
}

/// ∥T(1_cap)∥_{L^p(B_R)} computed directly and through the rescaled unit-cap problem on the
/// image of B_R, each path on its own lattices.
pub fn rescaling_paths(surface: &Surface, cap: &Cap, p: f64, r: f64, x_spacing: f64) -> Result<RescalingReport, CoreError> {
    let n = surface.n;
    let d = n - 1;
    let phase = PhaseFunction::extension(surface.clone());
    let grid = EvaluationGrid::ball(&vec![0.0; n], r, x_spacing);
    let lo: Vec<f64> = cap.center.iter().map(|c| c - cap.radius).collect();
    let hi: Vec<f64> = cap.center.iter().map(|c| c + cap.radius).collect();
    let h = required_spacing_for(&phase, &lo, &hi, &grid.nodes, None, 0.0, C_NYQ);
    let f = SampledField::constant(Lattice::over_box(&lo, &hi, h), C64::new(1.0, 0.0));
    let va = evaluate_t_region(&phase, &f, &Region::ball(cap), &grid.nodes, C_NYQ)?;
    let direct = lattice_lp_norm(&va, grid.cell_volume(), p)?;

    let map = parabolic_rescale_map(surface, cap)?;
    let rho = map.rho;
    let mut ext = Vec::with_capacity(n);
    for i in 0..d {
        ext.push(rho * r * (1.0 + map.grad_at_center[i].powi(2)).sqrt());
    }
    ext.push(rho * rho * r);
    let counts: Vec<usize> = ext.iter().map(|e| (2.0 * e / x_spacing).ceil().max(1.0) as usize).collect();
    let box_lo: Vec<f64> = ext.iter().map(|e| -e).collect();
    let box_hi: Vec<f64> = ext.clone();
    let xl = Lattice::with_counts(&box_lo, &box_hi, &counts);
    let nodes: Vec<Vec<f64>> = (0..xl.len())
        .map(|k| xl.node(k))
        .filter(|xt| norm(&map.unmap_x(xt)) <= r)
        .collect();
    let phase_b = PhaseFunction::extension(map.rescaled.clone());
    let unit = vec![0.0; d];
    let ulo = vec![-1.0; d];
    let uhi = vec![1.0; d];
    let hb = required_spacing_for(&phase_b, &ulo, &uhi, &nodes, None, 0.0, C_NYQ);
    let g = SampledField::constant(Lattice::over_box(&ulo, &uhi, hb), C64::new(1.0, 0.0));
    let vb = evaluate_t_region(&phase_b, &g, &Region::Ball { center: unit, radius: 1.0 }, &nodes, C_NYQ)?;
    let jac = map.jacobian();
    let rescaled = rho.powi(d as i32) * lattice_lp_norm(&vb, xl.cell_volume() / jac, p)?;
    Ok(RescalingReport { x_spacing, direct, rescaled, ratio: rescaled / direct })
}

/// Sum of e^{iφ(x,y_α)} T_α f over all cells of a grid partition.
pub fn modulated_sum(
    phase: &PhaseFunction,
    f: &SampledField,
    partition: &CapPartition,
    xs: &[Vec<f64>],
) -> Result<Vec<C64>, CoreError> {
    let t = phase.template();
    let mut acc = vec![ComplexSum::new(); xs.len()];
    for (alpha, cap) in partition.caps.iter().enumerate() {
        let region = cap_region(partition, alpha, &f.lattice)?;
        let v = evaluate_t_cap(phase, f, &region, &cap.center, xs)?;
        for (i, z) in v.modulated.iter().enumerate() {
            acc[i].add(z * C64::cis(t.y_poly(&xs[i]).eval(&cap.center)));
        }
    }
    Ok(acc.iter().map(|s| s.value()).collect())
}

/// Largest |T_α f| over a grid filling the box |x_j − a_j| ≤ K, for dominance checks.
pub fn box_maximum(
    phase: &PhaseFunction,
    f: &SampledField,
    region: &Region,
    cap_center: &[f64],
    a: &[f64],
    k: f64,
    per_axis: usize,
) -> Result<f64, CoreError> {
    let lo: Vec<f64> = a.iter().map(|v| v - k).collect();
    let hi: Vec<f64> = a.iter().map(|v| v + k).collect();
    let lat = Lattice::with_counts(&lo, &hi, &vec![per_axis; a.len()]);
    let xs: Vec<Vec<f64>> = (0..lat.len()).map(|i| lat.node(i)).collect();
    let v = evaluate_t_cap(phase, f, region, cap_center, &xs)?;
    Ok(v.modulated.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponents::loglog_fit;
    use proptest::prelude::*;
    use rand::Rng;

    fn square(h: f64) -> Lattice {
        Lattice::over_box(&[-0.5, -0.5], &[0.5, 0.5], h)
    }

    fn paraboloid() -> PhaseFunction {
        PhaseFunction::extension(Surface::paraboloid(3))
    }

    /// Plain double loop with explicit cos/sin, no recurrence and no separable shortcut.
    fn naive(phase: &PhaseFunction, f: &SampledField, region: &Region, x: &[f64]) -> C64 {
        let lat = &f.lattice;
        let mut s = C64::new(0.0, 0.0);
        for k in 0..lat.len() {
            let idx = lat.index(k);
            if region.contains(lat, &idx) {
                let y = lat.node(k);
                s += f.value(&idx) * C64::cis(phase.eval(x, &y));
            }
        }
        s * lat.cell_volume()
    }

    fn random_dense(lat: &Lattice, seed: u64) -> SampledField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..lat.len()).map(|_| C64::new(rng.gen_range(-0.7..0.7), rng.gen_range(-0.7..0.7))).collect();
        SampledField::new(lat.clone(), FieldValues::Dense(v), 1.0).unwrap()
    }

    fn rel(a: C64, b: C64) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn trivial_values() {
        let lat = square(1.0 / 64.0);
        let zero = SampledField::constant(lat.clone(), C64::new(0.0, 0.0));
        let xs = vec![vec![0.3, -0.2, 1.0], vec![0.0, 0.0, 0.0]];
        assert!(evaluate_t(&paraboloid(), &zero, &xs).unwrap().iter().all(|z| z.norm() == 0.0));
        let one = SampledField::constant(lat, C64::new(1.0, 0.0));
        let v = evaluate_t(&paraboloid(), &one, &[vec![0.0; 3]]).unwrap();
        assert!((v[0] - C64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn fast_paths_match_naive_sums() {
        let lat = square(1.0 / 160.0);
        let x = vec![2.3, -1.7, 3.1];
        let ph = paraboloid();
        let dense = random_dense(&lat, 7);
        let cases = vec![
            SampledField::constant(lat.clone(), C64::new(0.6, -0.3)),
            dense,
            Candidate::RandomCapSigns { k: 4, seed: 3 }.sample(&lat).unwrap(),
            Candidate::Knapp { center: vec![0.1, -0.05], radius: 0.3 }.sample(&lat).unwrap(),
            Candidate::Chirp { scale: 2.0 }.sample(&lat).unwrap(),
        ];
        let regions = vec![
            Region::All,
            Region::IndexBox { start: vec![3, 10], end: vec![30, 41] },
            Region::Ball { center: vec![0.1, 0.05], radius: 0.3 },
        ];
        for f in &cases {
            for r in &regions {
                let got = evaluate_t_region(&ph, f, r, std::slice::from_ref(&x), C_NYQ).unwrap()[0];
                let want = naive(&ph, f, r, &x);
                assert!(rel(got, want) < 1e-11, "{:?} {got} {want}", r);
            }
        }
        let twisted = PhaseFunction::TwistedElliptic { lambda: 8.0 };
        let f = random_dense(&Lattice::over_box(&[-1.0, 0.0], &[1.0, 0.5], 1.0 / 200.0), 9);
        let x = vec![0.2, -0.1, 0.7];
        let got = evaluate_t(&twisted, &f, std::slice::from_ref(&x)).unwrap()[0];
        assert!(rel(got, naive(&twisted, &f, &Region::All, &x)) < 1e-11);
    }

    #[test]
    fn resolution_guard_reports_requirement() {
        let f = SampledField::constant(square(0.1), C64::new(1.0, 0.0));
        match evaluate_t(&paraboloid(), &f, &[vec![40.0, 0.0, 0.0]]) {
            Err(CoreError::Resolution { required, actual }) => {
                assert!((required - C_NYQ / 41.0).abs() < 1e-12);
                assert_eq!(actual, 0.1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hormander_domain_is_enforced() {
        let ph = PhaseFunction::Hormander {
            surface: Surface::paraboloid(3),
            terms: vec![HormanderTerm { x: [0, 2], y: [0, 1], coeff: 1.0 }],
            lambda: 40.0,
        };
        let f = SampledField::constant(square(1.0 / 200.0), C64::new(1.0, 0.0));
        assert!(evaluate_t(&ph, &f, &[vec![0.0, 0.0, 9.0]]).is_ok());
        assert!(matches!(evaluate_t(&ph, &f, &[vec![0.0, 0.0, 11.0]]), Err(CoreError::Domain(_))));
        let x = [1.0, 2.0, 3.0];
        let y = [0.2, -0.4];
        let want = x[0] * y[0] + x[1] * y[1] + x[2] * (y[0] * y[0] + y[1] * y[1]) + x[0] * x[2] * y[0] * y[1] / 40.0;
        assert!((ph.eval(&x, &y) - want).abs() < 1e-14);
    }

    #[test]
    fn twisted_phases() {
        let x = [0.3, -0.2, 0.7];
        let y = [0.5, -0.25];
        let l = 3.0;
        let e = PhaseFunction::TwistedElliptic { lambda: l }.eval(&x, &y);
        let want = l
            * (-x[0] * y[0] - x[1] * y[1] + 0.5 * x[2] * y[0] * y[0] + x[2] * x[2] * y[0] * y[1]
                + 0.5 * (x[2] + x[2].powi(3)) * y[1] * y[1]);
        assert!((e - want).abs() < 1e-14);
        let hph = PhaseFunction::TwistedHyperbolic { lambda: l }.eval(&x, &y);
        let want = l * (-x[0] * y[0] - x[1] * y[1] + 2.0 * x[2] * y[0] * y[1] + x[2] * x[2] * y[1] * y[1]);
        assert!((hph - want).abs() < 1e-14);
    }

    #[test]
    fn caps_reassemble_the_integral() {
        let lat = square(1.0 / 120.0);
        let f = random_dense(&lat, 11);
        let ph = paraboloid();
        let xs = vec![vec![5.0, -3.0, 7.0], vec![-2.0, 1.0, -9.0], vec![0.0, 0.0, 0.0]];
        let whole = evaluate_t(&ph, &f, &xs).unwrap();
        for k in [1.0, 2.0, 5.0] {
            let part = CapPartition::uniform(&[-0.5, -0.5], &[0.5, 0.5], k);
            let sum = modulated_sum(&ph, &f, &part, &xs).unwrap();
            for (a, b) in sum.iter().zip(&whole) {
                assert!(rel(*a, *b) < 1e-10);
            }
        }
        let part = CapPartition::uniform(&[-0.5, -0.5], &[0.5, 0.5], 1.0);
        let full = cap_region(&part, 0, &lat).unwrap();
        let v = evaluate_t_region(&ph, &f, &full, &xs, C_NYQ).unwrap();
        assert_eq!(v, whole);
    }

    #[test]
    fn cap_integrals_obey_triangle_inequality() {
        let lat = square(1.0 / 400.0);
        let f = SampledField::constant(lat.clone(), C64::new(1.0, 0.0));
        let cap = Cap::new(vec![0.1, 0.2], 0.15);
        let xs = EvaluationGrid::ball(&[0.0; 3], 8.0, 2.0).nodes;
        let v = evaluate_t_region(&paraboloid(), &f, &Region::ball(&cap), &xs, C_NYQ).unwrap();
        let count = (0..lat.len()).filter(|&k| Region::ball(&cap).contains(&lat, &lat.index(k))).count();
        let measure = count as f64 * lat.cell_volume();
        assert!(v.iter().all(|z| z.norm() <= measure * (1.0 + 1e-12)));
        assert!((measure - std::f64::consts::PI * 0.15 * 0.15).abs() < 1e-3);
    }

    #[test]
    fn linearity_and_sup_bound() {
        let lat = square(1.0 / 100.0);
        let f = random_dense(&lat, 1);
        let g = random_dense(&lat, 2);
        let FieldValues::Dense(fv) = &f.values else { unreachable!() };
        let FieldValues::Dense(gv) = &g.values else { unreachable!() };
        let sum: Vec<C64> = fv.iter().zip(gv).map(|(a, b)| (a + b) * 0.5).collect();
        let s = SampledField::new(lat.clone(), FieldValues::Dense(sum), 1.0).unwrap();
        let xs = vec![vec![3.0, 4.0, -5.0], vec![0.5, 0.0, 2.0]];
        let (tf, tg, ts) = (
            evaluate_t(&paraboloid(), &f, &xs).unwrap(),
            evaluate_t(&paraboloid(), &g, &xs).unwrap(),
            evaluate_t(&paraboloid(), &s, &xs).unwrap(),
        );
        for i in 0..xs.len() {
            assert!(rel(ts[i], (tf[i] + tg[i]) * 0.5) < 1e-12);
            assert!(tf[i].norm() <= f.sup_bound * lat.measure());
        }
    }

    #[test]
    fn quadrature_converges_on_chirped_field() {
        let ph = paraboloid();
        let x = vec![3.0, -2.0, 4.0];
        let at = |h: f64| {
            let f = Candidate::Chirp { scale: 5.0 }.sample(&square(h)).unwrap();
            evaluate_t(&ph, &f, std::slice::from_ref(&x)).unwrap()[0]
        };
        let h = 1.0 / 100.0;
        let (a, b, c) = (at(h), at(h / 2.0), at(h / 4.0));
        assert!((a - b).norm() <= h);
        assert!((b - c).norm() <= (a - b).norm() / 2.0);
    }

    /// ∫_{−1}^{1} e^{iat²} dt by composite Simpson on a very fine grid.
    fn fresnel_1d(a: f64) -> C64 {
        let m = 400_000;
        let h = 2.0 / m as f64;
        let mut s = C64::new(0.0, 0.0);
        for k in 0..=m {
            let t = -1.0 + k as f64 * h;
            let w = if k == 0 || k == m { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            s += C64::cis(a * t * t) * w;
        }
        s * h / 3.0
    }

    #[test]
    fn stationary_phase_decay() {
        let ph = paraboloid();
        let x3s: Vec<f64> = (8..=64).map(|t| t as f64).collect();
        let xs: Vec<Vec<f64>> = x3s.iter().map(|&t| vec![0.0, 0.0, t]).collect();
        let h = required_spacing_for(&ph, &[-1.0, -1.0], &[1.0, 1.0], &xs, None, 0.0, C_NYQ);
        let f = SampledField::constant(Lattice::over_box(&[-1.0, -1.0], &[1.0, 1.0], h), C64::new(1.0, 0.0));
        let v = evaluate_t(&ph, &f, &xs).unwrap();
        for (z, &t) in v.iter().zip(&x3s).step_by(8) {
            let oracle = fresnel_1d(t).powi(2);
            assert!((z.norm() - oracle.norm()).abs() < 1e-3 * oracle.norm());
        }
        let pts: Vec<(f64, f64)> = x3s.iter().zip(&v).map(|(&t, z)| (t, z.norm())).collect();
        let fit = loglog_fit(&pts).unwrap();
        assert!((fit.slope + 1.0).abs() <= 0.05, "slope {}", fit.slope);
    }

    #[test]
    fn norms() {
        let ones = vec![C64::new(1.0, 0.0); 10];
        for p in [1.0, 2.0, 3.5, f64::INFINITY] {
            assert!((lattice_lp_average(&ones, p).unwrap() - 1.0).abs() < 1e-15);
        }
        let v = vec![C64::new(0.0, 3.0), C64::new(-4.0, 0.0), C64::new(1.0, 1.0)];
        assert_eq!(lattice_lp_norm(&v, 0.5, f64::INFINITY).unwrap(), 4.0);
        let half: Vec<C64> = (0..10).map(|i| C64::new(if i < 5 { 1.0 } else { 0.0 }, 0.0)).collect();
        assert!((lattice_lp_average(&half, 2.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(lattice_lp_norm(&[], 1.0, 2.0).is_err());
        assert!(lattice_lp_norm(&v, 1.0, 0.5).is_err());
    }

    #[test]
    fn catalog_entries() {
        let lat = square(1.0 / 64.0);
        let c = candidate_extremizer("constant", &serde_json::Value::Null, &lat).unwrap();
        assert!(c.to_dense().iter().all(|z| *z == C64::new(1.0, 0.0)));
        assert!(matches!(
            candidate_extremizer("nonsense", &serde_json::Value::Null, &lat),
            Err(CoreError::UnknownCandidate(_))
        ));
        let ch = candidate_extremizer("chirp", &serde_json::json!({"scale": 1.0}), &Lattice::over_box(&[-0.5, -0.5], &[0.5, 0.5], 1.0 / 3.0)).unwrap();
        // the middle node sits at y1 = 0
        assert!((ch.value(&[1, 0]) - C64::new(1.0, 0.0)).norm() < 1e-15);

        let sl = Lattice::over_box(&[-0.5, 0.0], &[0.5, 1.0], 1.0 / 2000.0);
        let f = candidate_extremizer("sign-strips", &serde_json::json!({"lambda": 100.0, "c": 0.5}), &sl).unwrap();
        for k in (0..sl.len()).step_by(997) {
            let idx = sl.index(k);
            let (y1, y2) = (sl.coord(0, idx[0]), sl.coord(1, idx[1]));
            let s = (y2 * 10.0).floor();
            let want = if y2 * 10.0 - s <= 0.5 { C64::cis(10.0 * s * y1) } else { C64::new(0.0, 0.0) };
            assert!((f.value(&idx) - want).norm() < 1e-12);
        }
        let signs = Candidate::RandomCapSigns { k: 4, seed: 5 }.sample(&lat).unwrap();
        assert!(signs.to_dense().iter().all(|z| z.norm() == 1.0));
        let again = Candidate::RandomCapSigns { k: 4, seed: 5 }.sample(&lat).unwrap();
        assert_eq!(signs, again);
    }

    #[test]
    fn constant_candidate_sup_norm() {
        let cfg = QrConfig::unit_square(f64::INFINITY, vec![Candidate::Constant]);
        for r in [4.0, 8.0] {
            let q = estimate_qr(&Surface::paraboloid(3), &cfg, r).unwrap();
            assert!((q.best - 1.0).abs() < 1e-12);
            assert_eq!(q.best_id, "constant");
        }
    }

    #[test]
    fn qr_monotone_in_catalog_and_radius() {
        let s = Surface::paraboloid(3);
        let small = QrConfig::unit_square(4.0, vec![Candidate::Constant]);
        let mut big = small.clone();
        big.catalog.push(Candidate::RandomCapSigns { k: 4, seed: 1 });
        big.catalog.push(Candidate::Knapp { center: vec![0.0, 0.0], radius: 0.25 });
        let b = qr_sweep(&s, &big, &[4.0, 6.0, 8.0]).unwrap();
        let mut small = small;
        small.y_spacing = Some(b[0].y_spacing);
        let a = qr_sweep(&s, &small, &[4.0, 6.0, 8.0]).unwrap();
        for w in b.windows(2) {
            assert!(w[1].best >= w[0].best);
        }
        for (qa, qb) in a.iter().zip(&b) {
            assert_eq!(qa.per_candidate[0], qb.per_candidate[0]);
            assert!(qb.best >= qa.best);
        }
    }

    #[test]
    fn majorant_basics() {
        let lat = square(1.0 / 64.0);
        let zero = SampledField::constant(lat, C64::new(0.0, 0.0));
        let m = Mollifier::default();
        let c = mollified_majorant(&paraboloid(), &zero, &Region::All, &[0.0, 0.0], &[0.0; 3], 4.0, &m).unwrap();
        assert_eq!(c, 0.0);
        assert!((m.eta_hat(1.9) - 1.0).abs() < 1e-15 && m.eta_hat(4.0) == 0.0);
        // η integrates to η̂(0) = 1
        let t: Vec<f64> = (-4000..=4000).map(|i| i as f64 * 0.01).collect();
        let integral: f64 = t.iter().map(|&s| m.eta(s)).sum::<f64>() * 0.01;
        assert!((integral - 1.0).abs() < 2e-3);
        assert!(m.zeta.iter().all(|&z| z > 0.0));
    }

    #[test]
    fn majorant_of_flat_modulus_is_l1_multiple() {
        // f ≡ 1 on a single node gives |T_α f| ≡ cell volume everywhere
        let lat = Lattice::with_counts(&[-0.01, -0.01], &[0.01, 0.01], &[1, 1]);
        let f = SampledField::constant(lat.clone(), C64::new(1.0, 0.0));
        let m = Mollifier::new(2.0, 3.0, 0.5);
        let c = mollified_majorant(&paraboloid(), &f, &Region::All, &[0.0, 0.0], &[0.0; 3], 0.2, &m).unwrap();
        assert!((c - lat.cell_volume() * m.l1(3)).abs() < 1e-12 * c);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn modulation_identity_any_grid(k in 1usize..6, seed in 0u64..1000, x in prop::collection::vec(-6.0f64..6.0, 3)) {
            let lat = square(1.0 / 120.0);
            let f = random_dense(&lat, seed);
            let part = CapPartition::uniform(&[-0.5, -0.5], &[0.5, 0.5], k as f64);
            let whole = evaluate_t(&paraboloid(), &f, std::slice::from_ref(&x)).unwrap()[0];
            let sum = modulated_sum(&paraboloid(), &f, &part, &[x]).unwrap()[0];
            prop_assert!((sum - whole).norm() <= 1e-10 * whole.norm().max(1e-3));
        }

        #[test]
        fn majorant_scales_with_field(s in 0.0f64..1.0, seed in 0u64..100) {
            let lat = square(1.0 / 64.0);
            let f = random_dense(&lat, seed);
            let FieldValues::Dense(v) = &f.values else { unreachable!() };
            let g = SampledField::new(lat, FieldValues::Dense(v.iter().map(|z| z * s).collect()), 1.0).unwrap();
            let m = Mollifier::new(2.0, 2.0, 0.5);
            let region = Region::IndexBox { start: vec![0, 0], end: vec![16, 16] };
            let cf = mollified_majorant(&paraboloid(), &f, &region, &[-0.375, -0.375], &[0.0; 3], 1.0, &m).unwrap();
            let cg = mollified_majorant(&paraboloid(), &g, &region, &[-0.375, -0.375], &[0.0; 3], 1.0, &m).unwrap();
            prop_assert!(cg <= cf * (1.0 + 1e-12));
        }
    }
}
