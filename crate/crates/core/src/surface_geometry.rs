//! Surfaces given as graphs y ↦ (y, φ1(y)), caps, normals, wedge volumes and rescaling maps.

use crate::numerics::{complete_frame, det, dist, dot, gram, is_positive_definite, norm, normalize, sub};
use crate::poly::{ex, Poly, MAXV};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurfaceKind {
    EllipticParaboloid,
    PerturbedElliptic,
    HyperbolicParaboloid,
}

/// c·y_i y_j y_k
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicTerm {
    pub idx: [usize; 3],
    pub coeff: f64,
}

/// φ1(y) = ⟨Ay, y⟩ + Σ cubic terms, ambient dimension n (so n − 1 parameters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub kind: SurfaceKind,
    pub n: usize,
    /// Symmetric (n−1)×(n−1), row-major.
    pub quad: Vec<f64>,
    #[serde(default)]
    pub cubic: Vec<CubicTerm>,
}

impl Surface {
    /// y1² + … + y_{n−1}².
    pub fn paraboloid(n: usize) -> Self {
        let d = n - 1;
        let mut quad = vec![0.0; d * d];
        for i in 0..d {
            quad[i * d + i] = 1.0;
        }
        Surface { kind: SurfaceKind::EllipticParaboloid, n, quad, cubic: Vec::new() }
    }

    pub fn perturbed(n: usize, quad: Vec<f64>, cubic: Vec<CubicTerm>) -> Result<Self, GeometryError> {
        let s = Surface { kind: SurfaceKind::PerturbedElliptic, n, quad, cubic };
        s.validate()?;
        Ok(s)
    }

    /// φ1 = y1·y2 in R³.
    pub fn hyperbolic() -> Self {
        Surface {
            kind: SurfaceKind::HyperbolicParaboloid,
            n: 3,
            quad: vec![0.0, 0.5, 0.5, 0.0],
            cubic: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n - 1
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let d = self.dim();
        if self.n < 2 || d > MAXV {
            return Err(GeometryError::Domain(format!("ambient dimension {} out of range", self.n)));
        }
        if self.quad.len() != d * d {
            return Err(GeometryError::Domain("quadratic form has the wrong size".into()));
        }
        for i in 0..d {
            for j in 0..d {
                if (self.quad[i * d + j] - self.quad[j * d + i]).abs() > 1e-14 {
                    return Err(GeometryError::Domain("quadratic form is not symmetric".into()));
                }
            }
        }
        if self.cubic.iter().any(|c| c.idx.iter().any(|&i| i >= d)) {
            return Err(GeometryError::Domain("cubic index out of range".into()));
        }
        match self.kind {
            SurfaceKind::EllipticParaboloid | SurfaceKind::PerturbedElliptic => {
                if !is_positive_definite(&self.quad, d) {
                    return Err(GeometryError::Domain("elliptic surface needs a positive-definite A".into()));
                }
                if self.kind == SurfaceKind::EllipticParaboloid && !self.cubic.is_empty() {
                    return Err(GeometryError::Domain("pure paraboloid carries no cubic terms".into()));
                }
            }
            SurfaceKind::HyperbolicParaboloid => {
                if self.n != 3 || self.quad != [0.0, 0.5, 0.5, 0.0] {
                    return Err(GeometryError::Domain("hyperbolic kind is y1·y2 in R³".into()));
                }
            }
        }
        Ok(())
    }

    pub fn is_elliptic(&self) -> bool {
        self.kind != SurfaceKind::HyperbolicParaboloid
    }

    pub fn phi1_poly(&self) -> Poly {
        let d = self.dim();
        let mut p = Poly::zero(d);
        for i in 0..d {
            for j in 0..d {
                p.add_term(ex(&[(i, 1), (j, 1)]), self.quad[i * d + j]);
            }
        }
        for c in &self.cubic {
            p.add_term(ex(&[(c.idx[0], 1), (c.idx[1], 1), (c.idx[2], 1)]), c.coeff);
        }
        p.canonical()
    }

    pub fn phi1(&self, y: &[f64]) -> f64 {
        self.phi1_poly().eval(y)
    }

    pub fn grad_phi1(&self, y: &[f64]) -> Vec<f64> {
        self.phi1_poly().gradient(y)
    }

    /// Point (y, φ1(y)) on the surface.
    pub fn lift(&self, y: &[f64]) -> Vec<f64> {
        let mut p = y.to_vec();
        p.push(self.phi1(y));
        p
    }
}

/// Unit normal: normalize(−∇φ1(y), 1).
pub fn gauss_normal(surface: &Surface, y: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = surface.grad_phi1(y).iter().map(|g| -g).collect();
    v.push(1.0);
    normalize(&v)
}

/// |v1 ∧ … ∧ vk| as the square root of the Gram determinant.
pub fn transversality_volume(vs: &[Vec<f64>]) -> Result<f64, GeometryError> {
    let k = vs.len();
    let n = vs.first().map(|v| v.len()).unwrap_or(0);
    if k == 0 {
        return Err(GeometryError::Domain("no vectors".into()));
    }
    if vs.iter().any(|v| v.len() != n) {
        return Err(GeometryError::Domain("vectors of mixed dimension".into()));
    }
    if k > n {
        return Err(GeometryError::Domain(format!("{k} vectors in dimension {n}")));
    }
    Ok(det(gram(vs), k).max(0.0).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cap {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Cap {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        Cap { center, radius }
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        dist(&self.center, y) <= self.radius
    }
}

/// Distance from the third center to the line through the first two.
pub fn distance_to_line(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let l = norm(&ab);
    if l == 0.0 {
        return norm(&ac);
    }
    let t = dot(&ab, &ac) / (l * l);
    let foot: Vec<f64> = a.iter().zip(&ab).map(|(x, d)| x + t * d).collect();
    dist(c, &foot)
}

/// True iff the third center lies farther than `margin` from the line through the first two.
/// Callers that care about the canonical labelling sort the triple with `order_triple` first.
pub fn noncollinearity_test(caps: [&Cap; 3], margin: f64) -> bool {
    distance_to_line(&caps[0].center, &caps[1].center, &caps[2].center) > margin
}

/// Relabels (α, β, γ) so that |yα − yβ| ≥ |yα − yγ| ≥ |yβ − yγ|; the distance of γ to ℓ(α, β)
/// is then the smallest altitude of the triangle.
pub fn order_triple(centers: [&[f64]; 3]) -> [usize; 3] {
    let d = |i: usize, j: usize| dist(centers[i], centers[j]);
    let pairs = [(0, 1, 2), (0, 2, 1), (1, 2, 0)];
    let mut best = pairs[0];
    for &p in &pairs[1..] {
        if d(p.0, p.1) > d(best.0, best.1) {
            best = p;
        }
    }
    let (a, b, c) = best;
    if d(a, c) >= d(b, c) {
        [a, b, c]
    } else {
        [b, a, c]
    }
}

/// Caps whose centers form a uniform grid over the box [lo, hi] at spacing 1/K; each cap has
/// radius (√(n−1)/2)/K so it contains its grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapPartition {
    pub caps: Vec<Cap>,
    pub scale: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Cells per axis for grid partitions; empty for explicit center lists.
    pub cells: Vec<usize>,
}

impl CapPartition {
    pub fn uniform(lo: &[f64], hi: &[f64], k: f64) -> Self {
        let d = lo.len();
        let cells: Vec<usize> = lo.iter().zip(hi).map(|(a, b)| (((b - a) * k) - 1e-9).ceil().max(1.0) as usize).collect();
        let radius = (d as f64).sqrt() / 2.0 / k;
        let total: usize = cells.iter().product();
        let mut caps = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut c = Vec::with_capacity(d);
            for ax in 0..d {
                let j = rem % cells[ax];
                rem /= cells[ax];
                let w = (hi[ax] - lo[ax]) / cells[ax] as f64;
                c.push(lo[ax] + (j as f64 + 0.5) * w);
            }
            caps.push(Cap::new(c, radius));
        }
        CapPartition { caps, scale: 1.0 / k, lo: lo.to_vec(), hi: hi.to_vec(), cells }
    }

    pub fn from_centers(centers: Vec<Vec<f64>>, radius: f64) -> Self {
        let d = centers.first().map(|c| c.len()).unwrap_or(0);
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for c in &centers {
            for i in 0..d {
                lo[i] = lo[i].min(c[i] - radius);
                hi[i] = hi[i].max(c[i] + radius);
            }
        }
        CapPartition {
            caps: centers.into_iter().map(|c| Cap::new(c, radius)).collect(),
            scale: radius,
            lo,
            hi,
            cells: Vec::new(),
        }
    }

    pub fn k(&self) -> f64 {
        1.0 / self.scale
    }

    pub fn len(&self) -> usize {
        self.caps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.caps.is_empty()
    }

    /// Cell index along one axis of a grid partition; boundary points go to the lower cell.
    pub fn axis_cell(&self, ax: usize, t: f64) -> usize {
        let m = self.cells[ax];
        let w = (self.hi[ax] - self.lo[ax]) / m as f64;
        let u = (t - self.lo[ax]) / w;
        let mut j = u.floor();
        if u == j && j > 0.0 {
            j -= 1.0;
        }
        (j.max(0.0) as usize).min(m - 1)
    }

    /// Nearest center, ties to the lowest index.
    pub fn locate(&self, y: &[f64]) -> usize {
        if !self.cells.is_empty() {
            let mut flat = 0;
            let mut stride = 1;
            for ax in 0..y.len() {
                flat += self.axis_cell(ax, y[ax]) * stride;
                stride *= self.cells[ax];
            }
            return flat;
        }
        let mut best = 0;
        let mut bd = f64::INFINITY;
        for (i, c) in self.caps.iter().enumerate() {
            let d = dist(&c.center, y);
            if d < bd {
                bd = d;
                best = i;
            }
        }
        best
    }
}

/// Affine change of variables taking a ρ-cap problem at center a to a unit-scale problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaleMap {
    pub center: Vec<f64>,
    pub rho: f64,
    pub n: usize,
    pub grad_at_center: Vec<f64>,
    pub phi1_at_center: f64,
    pub rescaled: Surface,
}

impl RescaleMap {
    /// x̃' = ρ(x' + x_n ∇φ1(a)), x̃_n = ρ² x_n.
    pub fn map_x(&self, x: &[f64]) -> Vec<f64> {
        let d = self.n - 1;
        let mut out: Vec<f64> = (0..d).map(|i| self.rho * (x[i] + x[d] * self.grad_at_center[i])).collect();
        out.push(self.rho * self.rho * x[d]);
        out
    }

    pub fn unmap_x(&self, xt: &[f64]) -> Vec<f64> {
        let d = self.n - 1;
        let xn = xt[d] / (self.rho * self.rho);
        let mut out: Vec<f64> = (0..d).map(|i| xt[i] / self.rho - xn * self.grad_at_center[i]).collect();
        out.push(xn);
        out
    }

    pub fn map_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.center).map(|(v, a)| (v - a) / self.rho).collect()
    }

    pub fn unmap_y(&self, eta: &[f64]) -> Vec<f64> {
        eta.iter().zip(&self.center).map(|(e, a)| a + self.rho * e).collect()
    }

    /// Phase constant so that Tf(x) = e^{i·carrier(x)} ρ^{n−1} Tg(map_x(x)).
    pub fn carrier(&self, x: &[f64]) -> f64 {
        let d = self.n - 1;
        dot(&x[..d], &self.center) + x[d] * self.phi1_at_center
    }

    /// Jacobian determinant of map_x, ρ^{n+1}.
    pub fn jacobian(&self) -> f64 {
        self.rho.powi(self.n as i32 + 1)
    }

    pub fn norm_factor(&self, p: f64) -> f64 {
        rescale_norm_factor(self.n, p, self.rho)
    }
}

/// ρ^{n−1−(n+1)/p}; p = ∞ is allowed.
pub fn rescale_norm_factor(n: usize, p: f64, rho: f64) -> f64 {
    let n = n as f64;
    let e = if p.is_infinite() { n - 1.0 } else { n - 1.0 - (n + 1.0) / p };
    rho.powf(e)
}

/// The composite shift/shear/dilation for an elliptic cap. The rescaled surface is exact: its
/// quadratic part absorbs half the Hessian of the cubic terms at the center and its cubic terms
/// shrink by ρ. For the pure paraboloid it is the paraboloid again.
pub fn parabolic_rescale_map(surface: &Surface, cap: &Cap) -> Result<RescaleMap, GeometryError> {
    if !surface.is_elliptic() {
        return Err(GeometryError::Unsupported(
            "hyperbolic surfaces use the strip rescaling instead".into(),
        ));
    }
    if !(cap.radius > 0.0 && cap.radius <= 1.0) {
        return Err(GeometryError::Domain("cap radius must lie in (0, 1]".into()));
    }
    let d = surface.dim();
    let rho = cap.radius;
    let a = cap.center.clone();
    let phi = surface.phi1_poly();
    let shifted = phi.affine_substitute(&a, rho);
    let mut quad = vec![0.0; d * d];
    let mut cubic = Vec::new();
    for m in &shifted.terms {
        let deg: u8 = m.exps.iter().sum();
        let vars: Vec<usize> = (0..d).flat_map(|i| std::iter::repeat_n(i, m.exps[i] as usize)).collect();
        match deg {
            2 => {
                let c = m.coeff / (rho * rho);
                if vars[0] == vars[1] {
                    quad[vars[0] * d + vars[0]] += c;
                } else {
                    quad[vars[0] * d + vars[1]] += c / 2.0;
                    quad[vars[1] * d + vars[0]] += c / 2.0;
                }
            }
            3 => cubic.push(CubicTerm { idx: [vars[0], vars[1], vars[2]], coeff: m.coeff / (rho * rho) }),
            _ => {}
        }
    }
    let kind = if surface.kind == SurfaceKind::EllipticParaboloid {
        SurfaceKind::EllipticParaboloid
    } else {
        SurfaceKind::PerturbedElliptic
    };
    let rescaled = Surface { kind, n: surface.n, quad, cubic };
    Ok(RescaleMap {
        grad_at_center: phi.gradient(&a),
        phi1_at_center: phi.eval(&a),
        center: a,
        rho,
        n: surface.n,
        rescaled,
    })
}

/// Norm factor K1^{−1+2/q} of the horizontal-strip map.
pub fn hyperbolic_strip_rescale(k1: f64, q: f64) -> Result<f64, GeometryError> {
    if q < 2.0 || k1 <= 0.0 {
        return Err(GeometryError::Domain("need q ≥ 2 and K1 > 0".into()));
    }
    Ok(k1.powf(-1.0 + 2.0 / q))
}

/// (x, y) ↦ (x1, K1 x2, K1 x3; y1, y2/K1).
pub fn hyperbolic_strip_map(x: &[f64; 3], y: &[f64; 2], k1: f64) -> ([f64; 3], [f64; 2]) {
    ([x[0], k1 * x[1], k1 * x[2]], [y[0], y[1] / k1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualBox {
    pub center: Vec<f64>,
    /// Orthonormal frame, the normal direction last.
    pub axes: Vec<Vec<f64>>,
    pub sides: Vec<f64>,
}

impl DualBox {
    pub fn corners(&self) -> Vec<Vec<f64>> {
        let n = self.axes.len();
        (0..1usize << n)
            .map(|mask| {
                let mut p = self.center.clone();
                for (j, ax) in self.axes.iter().enumerate() {
                    let s = if mask >> j & 1 == 1 { 0.5 } else { -0.5 } * self.sides[j];
                    for (pi, ai) in p.iter_mut().zip(ax) {
                        *pi += s * ai;
                    }
                }
                p
            })
            .collect()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        let r = sub(x, &self.center);
        self.axes.iter().zip(&self.sides).all(|(ax, s)| dot(&r, ax).abs() <= 0.5 * s * (1.0 + tol))
    }
}

/// Box dual to a δ-cap, scaled by K: sides K/δ across and K/δ² along the normal at the cap center.
pub fn dual_box_of(surface: &Surface, cap: &Cap, delta: f64, k: f64) -> Result<DualBox, GeometryError> {
    if !surface.is_elliptic() {
        return Err(GeometryError::Unsupported("dual boxes are built for elliptic caps".into()));
    }
    let n = surface.n;
    let nrm = gauss_normal(surface, &cap.center);
    let mut axes = complete_frame(std::slice::from_ref(&nrm), n);
    axes.rotate_left(1);
    let mut sides = vec![k / delta; n - 1];
    sides.push(k / (delta * delta));
    Ok(DualBox { center: vec![0.0; n], axes, sides })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestingReport {
    pub angle: f64,
    pub contained: bool,
    /// Largest corner coordinate over the allowed half-side.
    pub worst_ratio: f64,
}

/// Corner test: K·τ° inside the (2K/δ, …, 2K/δ²) box along the normal of τ_i. Both frames are
/// adapted to the plane in which the normal tilts, the second obtained from the first by the
/// minimal rotation.
pub fn dual_box_nesting(surface: &Surface, tau: &Cap, tau_i: &Cap, delta: f64, k: f64) -> NestingReport {
    let n = surface.n;
    let n0 = gauss_normal(surface, &tau.center);
    let n1 = gauss_normal(surface, &tau_i.center);
    let c = dot(&n0, &n1).clamp(-1.0, 1.0);
    let angle = c.acos();
    let tilt: Vec<f64> = n1.iter().zip(&n0).map(|(b, a)| b - c * a).collect();
    let lead = if norm(&tilt) > 1e-14 { vec![normalize(&tilt), n0.clone()] } else { vec![n0.clone()] };
    let f = complete_frame(&lead, n);
    let mut frame0: Vec<Vec<f64>> = f.iter().filter(|v| dot(v, &n0).abs() < 0.5).cloned().collect();
    frame0.push(n0.clone());
    let (s, cth) = (angle.sin(), angle.cos());
    let rotate = |v: &[f64]| -> Vec<f64> {
        if norm(&tilt) <= 1e-14 {
            return v.to_vec();
        }
        let u = normalize(&tilt);
        let a = dot(v, &n0);
        let b = dot(v, &u);
        v.iter()
            .zip(n0.iter().zip(&u))
            .map(|(vi, (ni, ui))| vi - a * ni - b * ui + (a * cth - b * s) * ni + (a * s + b * cth) * ui)
            .collect()
    };
    let frame1: Vec<Vec<f64>> = frame0.iter().map(|v| rotate(v)).collect();
    let mut big_sides = vec![k / delta; n - 1];
    big_sides.push(k / (delta * delta));
    let big = DualBox { center: vec![0.0; n], axes: frame0, sides: big_sides };
    let mut t_sides = vec![2.0 * k / delta; n - 1];
    t_sides.push(2.0 * k / (delta * delta));
    let mut worst: f64 = 0.0;
    for corner in big.corners() {
        for (ax, sd) in frame1.iter().zip(&t_sides) {
            worst = worst.max(dot(&corner, ax).abs() / (0.5 * sd));
        }
    }
    NestingReport { angle, contained: worst <= 1.0 + 1e-12, worst_ratio: worst }
}
