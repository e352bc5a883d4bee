//! δ-tubes around straight and polynomial cores, rasterized on a global lattice of spacing ≤ δ/2,
//! and the indicator-sum, bilinear, multilinear and union integrals computed from that raster.

use crate::numerics::{det, dot, gram, norm, normalize, sub, KahanSum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

pub const MAX_DIM: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KakeyaError {
    #[error("raster spacing {actual} too coarse, need at most {required}")]
    Resolution { required: f64, actual: f64 },
    #[error("point is outside the tube")]
    Outside,
    #[error("domain error: {0}")]
    Domain(String),
}

/// γ(t) = Σ_k coeffs[i][k] t^k per coordinate, t ∈ [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyCurve {
    pub coeffs: Vec<Vec<f64>>,
}

fn horner(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * t + a)
}

fn dcoeffs(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(k, a)| k as f64 * a).collect()
}

impl PolyCurve {
    pub fn new(coeffs: Vec<Vec<f64>>) -> Self {
        PolyCurve { coeffs }
    }

    /// Segment from a to a + v.
    pub fn segment(a: &[f64], v: &[f64]) -> Self {
        PolyCurve { coeffs: a.iter().zip(v).map(|(p, q)| vec![*p, *q]).collect() }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn degree(&self) -> usize {
        self.coeffs
            .iter()
            .map(|c| c.iter().rposition(|&a| a != 0.0).unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    pub fn is_straight(&self) -> bool {
        self.degree() <= 1
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        self.coeffs.iter().map(|c| horner(c, t)).collect()
    }

    pub fn deriv(&self, t: f64) -> Vec<f64> {
        self.coeffs.iter().map(|c| horner(&dcoeffs(c), t)).collect()
    }

    pub fn deriv2(&self, t: f64) -> Vec<f64> {
        self.coeffs.iter().map(|c| horner(&dcoeffs(&dcoeffs(c)), t)).collect()
    }

    /// sup |γ″| on a 257-point grid.
    pub fn c2_norm(&self) -> f64 {
        (0..=256).map(|i| norm(&self.deriv2(i as f64 / 256.0))).fold(0.0, f64::max)
    }

    pub fn speed_bound(&self) -> f64 {
        (0..=256).map(|i| norm(&self.deriv(i as f64 / 256.0))).fold(0.0, f64::max)
    }

    /// Newton on (γ(t) − x)·γ′(t) = 0 from `t0`, clamped to [0, 1], endpoints compared.
    pub fn nearest_from(&self, x: &[f64], t0: f64) -> (f64, f64) {
        let d2 = |t: f64| {
            let p = self.eval(t);
            p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        };
        let mut t = t0.clamp(0.0, 1.0);
        for _ in 0..30 {
            let r = sub(&self.eval(t), x);
            let g1 = self.deriv(t);
            let g2 = self.deriv2(t);
            let f = dot(&r, &g1);
            let fp = dot(&g1, &g1) + dot(&r, &g2);
            if fp <= 0.0 {
                break;
            }
            let next = (t - f / fp).clamp(0.0, 1.0);
            if (next - t).abs() < 1e-15 {
                t = next;
                break;
            }
            t = next;
        }
        let mut best = (t, d2(t));
        for e in [0.0, 1.0] {
            let v = d2(e);
            if v < best.1 {
                best = (e, v);
            }
        }
        (best.0, best.1.sqrt())
    }

    /// Global nearest parameter: a 1025-point scan, ties to the lowest parameter, then Newton.
    pub fn nearest(&self, x: &[f64]) -> (f64, f64) {
        if self.is_straight() {
            return self.nearest_straight(x);
        }
        let m = 1024;
        let mut best = (0.0, f64::INFINITY);
        for i in 0..=m {
            let t = i as f64 / m as f64;
            let d = norm(&sub(&self.eval(t), x));
            if d < best.1 - 1e-12 {
                best = (t, d);
            }
        }
        let polished = self.nearest_from(x, best.0);
        if polished.1 <= best.1 {
            polished
        } else {
            best
        }
    }

    fn nearest_straight(&self, x: &[f64]) -> (f64, f64) {
        let a = self.eval(0.0);
        let v = self.deriv(0.0);
        let vv = dot(&v, &v);
        let t = if vv == 0.0 { 0.0 } else { (dot(&sub(x, &a), &v) / vv).clamp(0.0, 1.0) };
        let p: Vec<f64> = a.iter().zip(&v).map(|(a, v)| a + t * v).collect();
        (t, norm(&sub(x, &p)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tube {
    pub core: PolyCurve,
    pub delta: f64,
    /// Label in the unit parameter ball used by the angle condition and by clumps.
    pub base: Vec<f64>,
}

impl Tube {
    pub fn straight(a: &[f64], v: &[f64], delta: f64, base: Vec<f64>) -> Self {
        Tube { core: PolyCurve::segment(a, v), delta, base }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.core.nearest(x).1 <= self.delta
    }
}

/// Unit tangent at the nearest core point.
pub fn tangent_field(tube: &Tube, x: &[f64]) -> Result<Vec<f64>, KakeyaError> {
    let (t, d) = tube.core.nearest(x);
    if d > tube.delta {
        return Err(KakeyaError::Outside);
    }
    Ok(normalize(&tube.core.deriv(t)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeFamily {
    pub tubes: Vec<Tube>,
    pub dim: usize,
    /// Base points are required to be δ-separated.
    pub angle_condition: bool,
}

impl TubeFamily {
    pub fn new(tubes: Vec<Tube>, dim: usize) -> Result<Self, KakeyaError> {
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(KakeyaError::Domain(format!("dimension {dim} unsupported")));
        }
        if tubes.iter().any(|t| t.core.dim() != dim || !(t.delta > 0.0)) {
            return Err(KakeyaError::Domain("tube dimension or radius invalid".into()));
        }
        Ok(TubeFamily { tubes, dim, angle_condition: false })
    }

    pub fn len(&self) -> usize {
        self.tubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tubes.is_empty()
    }

    pub fn delta(&self) -> f64 {
        self.tubes.iter().map(|t| t.delta).fold(0.0, f64::max)
    }

    /// Smallest base-point distance, when every base point has the same length.
    pub fn min_base_separation(&self) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..self.tubes.len() {
            for j in i + 1..self.tubes.len() {
                m = m.min(norm(&sub(&self.tubes[i].base, &self.tubes[j].base)));
            }
        }
        m
    }

    /// Marks the family as satisfying the separation part of the angle condition, if it does.
    pub fn with_angle_condition(mut self) -> Result<Self, KakeyaError> {
        if self.min_base_separation() < self.delta() * (1.0 - 1e-12) {
            return Err(KakeyaError::Domain("base points are not δ-separated".into()));
        }
        self.angle_condition = true;
        Ok(self)
    }
}

/// min over pairs of angle(v_i, v_j)/|y_i − y_j| for straight tubes.
pub fn angle_condition_constant(family: &TubeFamily) -> f64 {
    let dirs: Vec<Vec<f64>> = family.tubes.iter().map(|t| normalize(&t.core.deriv(0.0))).collect();
    let mut c = f64::INFINITY;
    for i in 0..dirs.len() {
        for j in i + 1..dirs.len() {
            let dy = norm(&sub(&family.tubes[i].base, &family.tubes[j].base));
            if dy > 0.0 {
                let ang = dot(&dirs[i], &dirs[j]).clamp(-1.0, 1.0).acos();
                c = c.min(ang / dy);
            }
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub family: u16,
    pub tube: u32,
    pub tangent: [f64; MAX_DIM],
}

/// Sparse raster: the lattice (Z + ½)·spacing restricted to nodes inside at least one tube,
/// with the tubes containing each node (CSR layout, nodes sorted).
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub dim: usize,
    pub spacing: f64,
    pub nodes: Vec<[i32; MAX_DIM]>,
    pub offsets: Vec<usize>,
    pub members: Vec<Member>,
}

impl Raster {
    pub fn build(families: &[&TubeFamily], spacing: f64) -> Result<Self, KakeyaError> {
        let dim = families.first().map(|f| f.dim).unwrap_or(3);
        if !(spacing > 0.0) {
            return Err(KakeyaError::Domain("spacing must be positive".into()));
        }
        if families.iter().any(|f| f.dim != dim) {
            return Err(KakeyaError::Domain("families of mixed dimension".into()));
        }
        let dmin = families
            .iter()
            .flat_map(|f| f.tubes.iter().map(|t| t.delta))
            .fold(f64::INFINITY, f64::min);
        if dmin.is_finite() && spacing > dmin / 2.0 * (1.0 + 1e-12) {
            return Err(KakeyaError::Resolution { required: dmin / 2.0, actual: spacing });
        }
        let jobs: Vec<(u16, u32, &Tube)> = families
            .iter()
            .enumerate()
            .flat_map(|(fi, f)| f.tubes.iter().enumerate().map(move |(ti, t)| (fi as u16, ti as u32, t)))
            .collect();
        let per: Vec<Vec<([i32; MAX_DIM], Member)>> =
            jobs.par_iter().map(|&(fi, ti, t)| stamp_tube(t, fi, ti, dim, spacing)).collect();
        let mut all: Vec<([i32; MAX_DIM], Member)> = per.into_iter().flatten().collect();
        all.sort_by_key(|a| a.0);
        let mut nodes = Vec::new();
        let mut offsets = vec![0];
        let mut members = Vec::with_capacity(all.len());
        for (key, m) in all {
            if nodes.last() != Some(&key) {
                if !nodes.is_empty() {
                    offsets.push(members.len());
                }
                nodes.push(key);
            }
            members.push(m);
        }
        offsets.push(members.len());
        if nodes.is_empty() {
            offsets = vec![0];
        }
        Ok(Raster { dim, spacing, nodes, offsets, members })
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    pub fn at(&self, i: usize) -> &[Member] {
        &self.members[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        (0..self.dim).map(|ax| (self.nodes[i][ax] as f64 + 0.5) * self.spacing).collect()
    }
}

fn stamp_tube(t: &Tube, fam: u16, tube: u32, dim: usize, s: f64) -> Vec<([i32; MAX_DIM], Member)> {
    let core = &t.core;
    let straight = core.is_straight();
    // Consecutive samples are at most δ/2 apart, so every point within δ of the core lies within
    // δ + δ/4 of some sample.
    let nsamp = ((core.speed_bound().max(1e-12) / (t.delta / 2.0)).ceil() as usize).max(1);
    let mut seen: HashSet<[i32; MAX_DIM]> = HashSet::new();
    let reach = 1.25 * t.delta * (1.0 + 1e-9);
    let r = (reach / s).ceil() as i32 + 1;
    let mut out = Vec::new();
    for k in 0..=nsamp {
        let t0 = k as f64 / nsamp as f64;
        let c = core.eval(t0);
        let base: Vec<i32> = c.iter().map(|v| (v / s - 0.5).round() as i32).collect();
        let side = (2 * r + 1) as usize;
        for flat in 0..side.pow(dim as u32) {
            let mut rem = flat;
            let mut key = [0i32; MAX_DIM];
            for ax in 0..dim {
                key[ax] = base[ax] + (rem % side) as i32 - r;
                rem /= side;
            }
            let x: Vec<f64> = (0..dim).map(|ax| (key[ax] as f64 + 0.5) * s).collect();
            let near = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= reach * reach;
            if near && seen.insert(key) {
                let (tp, d) = if straight { core.nearest(&x) } else { core.nearest_from(&x, t0) };
                if d <= t.delta {
                    let v = normalize(&core.deriv(tp));
                    let mut tan = [0.0; MAX_DIM];
                    tan[..dim].copy_from_slice(&v);
                    out.push((key, Member { family: fam, tube, tangent: tan }));
                }
            }
        }
    }
    out
}

/// (Σ_nodes (Σ_i w_i χ_{T_i})^p · cell)^{1/p} for a single-family raster.
pub fn indicator_sum_lp(raster: &Raster, p: f64, weights: Option<&[f64]>) -> Result<f64, KakeyaError> {
    if !(p >= 1.0) {
        return Err(KakeyaError::Domain("p must be at least 1".into()));
    }
    let mut s = KahanSum::new();
    let mut mx: f64 = 0.0;
    for i in 0..raster.nodes.len() {
        let v: f64 = raster.at(i).iter().map(|m| weights.map_or(1.0, |w| w[m.tube as usize])).sum();
        if p.is_infinite() {
            mx = mx.max(v.abs());
        } else {
            s.add(v.abs().powf(p));
        }
    }
    if p.is_infinite() {
        return Ok(mx);
    }
    Ok((s.value() * raster.cell_volume()).powf(1.0 / p))
}

pub fn indicator_sum_lp_family(family: &TubeFamily, p: f64, weights: Option<&[f64]>, spacing: f64) -> Result<f64, KakeyaError> {
    let r = Raster::build(&[family], spacing)?;
    indicator_sum_lp(&r, p, weights)
}

/// Rasterized measure of the union.
pub fn union_volume(raster: &Raster) -> f64 {
    raster.nodes.len() as f64 * raster.cell_volume()
}

pub fn union_volume_family(family: &TubeFamily, spacing: f64) -> Result<f64, KakeyaError> {
    Ok(union_volume(&Raster::build(&[family], spacing)?))
}

fn wedge2(a: &[f64], b: &[f64]) -> f64 {
    det(gram(&[a.to_vec(), b.to_vec()]), 2).max(0.0).sqrt()
}

fn wedge3(a: &[f64], b: &[f64], c: &[f64], dim: usize) -> f64 {
    if dim == 3 {
        let d = a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) + a[2] * (b[0] * c[1] - b[1] * c[0]);
        return d.abs();
    }
    det(gram(&[a.to_vec(), b.to_vec(), c.to_vec()]), 3).max(0.0).sqrt()
}

/// ∫ χ_{T1} χ_{T2} |v1 ∧ v2|.
pub fn bilinear_kakeya_integral(t1: &Tube, t2: &Tube, spacing: f64) -> Result<f64, KakeyaError> {
    let dim = t1.core.dim();
    let f1 = TubeFamily::new(vec![t1.clone()], dim)?;
    let f2 = TubeFamily::new(vec![t2.clone()], dim)?;
    let r = Raster::build(&[&f1, &f2], spacing)?;
    let mut s = KahanSum::new();
    for i in 0..r.nodes.len() {
        let ms = r.at(i);
        if ms.len() == 2 {
            s.add(wedge2(&ms[0].tangent[..dim], &ms[1].tangent[..dim]));
        }
    }
    Ok(s.value() * r.cell_volume())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultilinearReport {
    pub value: f64,
    pub delta: f64,
    pub n: usize,
    /// δ^dim N^{3/2}, N the largest family size.
    pub scale: f64,
    pub ratio: f64,
}

/// ∫ [Σ_{i,j,k} χ_{T_i} χ_{T_j} χ_{T_k} |v_i ∧ v_j ∧ v_k|]^{1/2} over three families.
pub fn multilinear_kakeya_integral(a: &TubeFamily, b: &TubeFamily, c: &TubeFamily, spacing: f64) -> Result<MultilinearReport, KakeyaError> {
    let dim = a.dim;
    if !(dim == 3 || dim == 4) {
        return Err(KakeyaError::Domain("multilinear integral is for dimension 3 or 4".into()));
    }
    let r = Raster::build(&[a, b, c], spacing)?;
    let vals: Vec<f64> = (0..r.nodes.len())
        .into_par_iter()
        .map(|i| {
            let ms = r.at(i);
            let mut s = 0.0;
            for x in ms.iter().filter(|m| m.family == 0) {
                for y in ms.iter().filter(|m| m.family == 1) {
                    for z in ms.iter().filter(|m| m.family == 2) {
                        s += wedge3(&x.tangent[..dim], &y.tangent[..dim], &z.tangent[..dim], dim);
                    }
                }
            }
            s.sqrt()
        })
        .collect();
    let mut total = KahanSum::new();
    for v in vals {
        total.add(v);
    }
    let value = total.value() * r.cell_volume();
    let delta = a.delta().max(b.delta()).max(c.delta());
    let n = a.len().max(b.len()).max(c.len());
    let scale = delta.powi(dim as i32) * (n as f64).powf(1.5);
    Ok(MultilinearReport { value, delta, n, scale, ratio: value / scale })
}

/// Tube cores along the twisted phase curves over the y-grid of spacing δ on [−½, ½)², parametrized by
/// x3 = t ∈ [0, 1]. The shifted variant moves each core by (y2, 0, 0), which puts it on the
/// surface x1x3 = x2.
pub fn curved_family_from_phase(delta: f64, shifted: bool) -> Result<TubeFamily, KakeyaError> {
    if !(delta > 0.0 && delta <= 0.25) {
        return Err(KakeyaError::Domain("δ must lie in (0, 1/4]".into()));
    }
    let m = (1.0 / delta).round() as usize;
    let mut tubes = Vec::with_capacity(m * m);
    for j in 0..m {
        for i in 0..m {
            let y = [-0.5 + i as f64 * delta, -0.5 + j as f64 * delta];
            tubes.push(Tube { core: phase_curve(y, shifted), delta, base: y.to_vec() });
        }
    }
    TubeFamily::new(tubes, 3)
}

/// x1 = y1t + y2t² (+ y2), x2 = y2t + y1t² + y2t³, x3 = t.
pub fn phase_curve(y: [f64; 2], shifted: bool) -> PolyCurve {
    let s = if shifted { y[1] } else { 0.0 };
    PolyCurve::new(vec![vec![s, y[0], y[1], 0.0], vec![0.0, y[1], y[0], y[1]], vec![0.0, 1.0, 0.0, 0.0]])
}

/// Straight tubes from random bases in [−½, ½]² × {0} in directions (y, 1), y on the δ-grid.
pub fn straight_contrast_family(delta: f64, seed: u64) -> Result<TubeFamily, KakeyaError> {
    let m = (1.0 / delta).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tubes = Vec::with_capacity(m * m);
    for j in 0..m {
        for i in 0..m {
            let y = [-0.5 + i as f64 * delta, -0.5 + j as f64 * delta];
            let a = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), 0.0];
            tubes.push(Tube::straight(&a, &[y[0], y[1], 1.0], delta, y.to_vec()));
        }
    }
    TubeFamily::new(tubes, 3)
}

/// Unit segments centered at the origin in directions normalize(y, 1), y ∈ δZ², |y| ≤ 1.
pub fn bush_family(delta: f64) -> Result<TubeFamily, KakeyaError> {
    let m = (1.0 / delta).floor() as i64;
    let mut tubes = Vec::new();
    for j in -m..=m {
        for i in -m..=m {
            let y = [i as f64 * delta, j as f64 * delta];
            if y[0] * y[0] + y[1] * y[1] <= 1.0 + 1e-12 {
                let v = normalize(&[y[0], y[1], 1.0]);
                let a: Vec<f64> = v.iter().map(|c| -0.5 * c).collect();
                tubes.push(Tube::straight(&a, &v, delta, y.to_vec()));
            }
        }
    }
    TubeFamily::new(tubes, 3)
}

/// N unit segments centered at random points of the cube of side 2δ√N around the origin, in
/// directions within `tilt` radians of e_axis.
pub fn transverse_family(axis: usize, n: usize, delta: f64, tilt: f64, rng: &mut ChaCha8Rng) -> Result<TubeFamily, KakeyaError> {
    let side = 2.0 * delta * (n as f64).sqrt();
    let mut tubes = Vec::with_capacity(n);
    for _ in 0..n {
        let mut v = [0.0; 3];
        v[axis] = 1.0;
        let (o1, o2) = ((axis + 1) % 3, (axis + 2) % 3);
        let ang = rng.gen_range(0.0..tilt);
        let phi = rng.gen_range(0.0..std::f64::consts::TAU);
        v[o1] = ang.tan() * phi.cos();
        v[o2] = ang.tan() * phi.sin();
        let v = normalize(&v);
        let c: Vec<f64> = (0..3).map(|_| rng.gen_range(-side / 2.0..side / 2.0)).collect();
        let a: Vec<f64> = c.iter().zip(&v).map(|(ci, vi)| ci - 0.5 * vi).collect();
        tubes.push(Tube::straight(&a, &v, delta, c));
    }
    TubeFamily::new(tubes, 3)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClumpClass {
    Narrow,
    Broad,
}

/// Narrow iff fewer than 10⁴K clumps hold at least half the tubes through the point. A point in
/// no tube is narrow.
pub fn clump_classify_at(tubes_through: &[usize], clump_of: &[usize], k: f64) -> ClumpClass {
    if tubes_through.is_empty() {
        return ClumpClass::Narrow;
    }
    let mut counts = std::collections::BTreeMap::new();
    for &t in tubes_through {
        *counts.entry(clump_of[t]).or_insert(0usize) += 1;
    }
    let mut c: Vec<usize> = counts.into_values().collect();
    c.sort_unstable_by(|a, b| b.cmp(a));
    let limit = 1e4 * k;
    let allowed = if limit.fract() == 0.0 { limit as usize - 1 } else { limit.floor() as usize };
    let held: usize = c.iter().take(allowed).sum();
    if 2 * held >= tubes_through.len() {
        ClumpClass::Narrow
    } else {
        ClumpClass::Broad
    }
}

pub fn clump_classify(family: &TubeFamily, clump_of: &[usize], k: f64, x: &[f64]) -> Result<ClumpClass, KakeyaError> {
    if clump_of.len() != family.len() {
        return Err(KakeyaError::Domain("clump assignment must cover every tube".into()));
    }
    let through: Vec<usize> = (0..family.len()).filter(|&i| family.tubes[i].contains(x)).collect();
    Ok(clump_classify_at(&through, clump_of, k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacksonFit {
    /// Chebyshev coefficients on [0, 1] (variable 2x − 1).
    pub chebyshev: Vec<f64>,
    /// Monomial coefficients in x.
    pub monomial: Vec<f64>,
    pub sup_error: f64,
    pub degree: usize,
}

fn clenshaw(c: &[f64], x: f64) -> f64 {
    let u = 2.0 * x - 1.0;
    let (mut b1, mut b2) = (0.0, 0.0);
    for &a in c.iter().skip(1).rev() {
        let b0 = a + 2.0 * u * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    c[0] + u * b1 - b2
}

/// Chebyshev interpolant of degree d at the Chebyshev–Gauss nodes, with its sup error measured
/// on a 4001-point grid. `k` only records the assumed smoothness for sizing.
pub fn jackson_approximate<F: Fn(f64) -> f64>(f: F, _k: u32, d: usize) -> Result<JacksonFit, KakeyaError> {
    if d < 1 {
        return Err(KakeyaError::Domain("degree must be at least 1".into()));
    }
    let m = d + 1;
    let pi = std::f64::consts::PI;
    let nodes: Vec<f64> = (0..m).map(|j| (pi * (j as f64 + 0.5) / m as f64).cos()).collect();
    let vals: Vec<f64> = nodes.iter().map(|&u| f((u + 1.0) / 2.0)).collect();
    let cheb: Vec<f64> = (0..m)
        .map(|k| {
            let s: f64 = (0..m).map(|j| vals[j] * (pi * k as f64 * (j as f64 + 0.5) / m as f64).cos()).sum();
            s * if k == 0 { 1.0 } else { 2.0 } / m as f64
        })
        .collect();
    let sup_error = (0..=4000)
        .map(|i| {
            let x = i as f64 / 4000.0;
            (f(x) - clenshaw(&cheb, x)).abs()
        })
        .fold(0.0, f64::max);
    // T_k(2x − 1) in monomials via the three-term recurrence.
    let mut monomial = vec![0.0; m];
    let mut t_prev = vec![1.0];
    let mut t_cur = vec![-1.0, 2.0];
    monomial[0] += cheb[0];
    if m > 1 {
        monomial[0] += cheb[1] * t_cur[0];
        monomial[1] += cheb[1] * t_cur[1];
    }
    for &ck in cheb.iter().skip(2) {
        let mut next = vec![0.0; t_cur.len() + 1];
        for (i, a) in t_cur.iter().enumerate() {
            next[i] -= 2.0 * a;
            next[i + 1] += 4.0 * a;
        }
        for (i, a) in t_prev.iter().enumerate() {
            next[i] -= a;
        }
        for (i, a) in next.iter().enumerate() {
            monomial[i] += ck * a;
        }
        t_prev = t_cur;
        t_cur = next;
    }
    Ok(JacksonFit { chebyshev: cheb, monomial, sup_error, degree: d })
}

impl JacksonFit {
    pub fn eval(&self, x: f64) -> f64 {
        clenshaw(&self.chebyshev, x)
    }
}

/// d = ⌈δ^{−1/k}⌉.
pub fn jackson_degree(delta: f64, k: u32) -> usize {
    (delta.powf(-1.0 / k as f64) - 1e-9).ceil() as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn phase_curve_point_and_surface_identity() {
        let c = phase_curve([1.0, 0.0], false);
        let p = c.eval(0.5);
        assert_relative_eq!(p[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(p[1], 0.25, epsilon = 1e-15);
        assert_relative_eq!(p[2], 0.5, epsilon = 1e-15);
        let fam = curved_family_from_phase(1.0 / 8.0, true).unwrap();
        for tube in &fam.tubes {
            for i in 0..=16 {
                let x = tube.core.eval(i as f64 / 16.0);
                assert!((x[0] * x[2] - x[1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_tube_volume() {
        let delta = 1.0 / 16.0;
        let t = Tube::straight(&[0.1, -0.2, -0.5], &[0.0, 0.0, 1.0], delta, vec![0.0, 0.0]);
        let fam = TubeFamily::new(vec![t], 3).unwrap();
        let pi = std::f64::consts::PI;
        let exact = pi * delta * delta + 4.0 / 3.0 * pi * delta.powi(3);
        for s in [delta / 2.0, delta / 4.0] {
            let v = union_volume_family(&fam, s).unwrap();
            assert!((v / exact - 1.0).abs() < 0.1, "{v} vs {exact}");
        }
    }

    #[test]
    fn coarse_raster_rejected() {
        let t = Tube::straight(&[0.0; 3], &[0.0, 0.0, 1.0], 0.1, vec![]);
        let fam = TubeFamily::new(vec![t], 3).unwrap();
        assert!(matches!(Raster::build(&[&fam], 0.06), Err(KakeyaError::Resolution { .. })));
    }

    #[test]
    fn tangent_field_inside_and_outside() {
        let t = Tube { core: phase_curve([0.2, 0.3], false), delta: 0.05, base: vec![0.2, 0.3] };
        let p = t.core.eval(0.4);
        let v = tangent_field(&t, &p).unwrap();
        let expect = normalize(&t.core.deriv(0.4));
        for i in 0..3 {
            assert_relative_eq!(v[i], expect[i], epsilon = 1e-9);
        }
        let far: Vec<f64> = p.iter().map(|c| c + 1.0).collect();
        assert_eq!(tangent_field(&t, &far), Err(KakeyaError::Outside));
    }

    #[test]
    fn tangent_tie_goes_to_lowest_parameter() {
        // Symmetric arc: x is equidistant from t = 0 and t = 1.
        let c = PolyCurve::new(vec![vec![-1.0, 2.0], vec![1.0, -4.0, 4.0], vec![0.0, 0.0]]);
        let t = Tube { core: c, delta: 2.0, base: vec![] };
        let x = [0.0, 1.0, 0.0];
        let (tp, _) = t.core.nearest(&x);
        assert!(tp < 0.5);
    }

    #[test]
    fn raster_is_deterministic_across_pools() {
        let fam = straight_contrast_family(1.0 / 8.0, 3).unwrap();
        let a = Raster::build(&[&fam], 1.0 / 16.0).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| Raster::build(&[&fam], 1.0 / 16.0).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn lp_additivity_at_p_one() {
        let fam = straight_contrast_family(1.0 / 8.0, 5).unwrap();
        let s = 1.0 / 16.0;
        let total = indicator_sum_lp_family(&fam, 1.0, None, s).unwrap();
        let parts: f64 = fam
            .tubes
            .iter()
            .map(|t| union_volume_family(&TubeFamily::new(vec![t.clone()], 3).unwrap(), s).unwrap())
            .sum();
        assert_relative_eq!(total, parts, max_relative = 1e-12);
    }

    #[test]
    fn lp_norm_is_monotone_in_p_ordering_free() {
        let fam = straight_contrast_family(1.0 / 8.0, 7).unwrap();
        let r = Raster::build(&[&fam], 1.0 / 16.0).unwrap();
        let sup = indicator_sum_lp(&r, f64::INFINITY, None).unwrap();
        assert!(sup >= 1.0);
        let w = vec![2.0; fam.len()];
        let a = indicator_sum_lp(&r, 1.5, None).unwrap();
        let b = indicator_sum_lp(&r, 1.5, Some(&w)).unwrap();
        assert_relative_eq!(b, 2.0 * a, max_relative = 1e-12);
    }

    #[test]
    fn bilinear_crossing_tubes() {
        let delta = 1.0 / 16.0;
        let pi = std::f64::consts::PI;
        for theta in [pi / 2.0, pi / 4.0] {
            let v2 = [theta.cos(), theta.sin(), 0.0, 0.0];
            let t1 = Tube::straight(&[-0.5, 0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0], delta, vec![]);
            let a2: Vec<f64> = v2.iter().map(|c| -0.5 * c).collect();
            let t2 = Tube::straight(&a2, &v2, delta, vec![]);
            let b = bilinear_kakeya_integral(&t1, &t2, delta / 4.0).unwrap();
            // Exact value of ∫χχ|v1∧v2| for two long 4D δ-sausages is 2πδ⁴.
            let exact = 2.0 * pi * delta.powi(4);
            assert!((b / exact - 1.0).abs() < 0.15, "θ={theta}: {b} vs {exact}");
        }
    }

    #[test]
    fn multilinear_symmetric_and_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = 1.0 / 16.0;
        let a = transverse_family(0, 8, d, 0.3, &mut rng).unwrap();
        let b = transverse_family(1, 8, d, 0.3, &mut rng).unwrap();
        let c = transverse_family(2, 8, d, 0.3, &mut rng).unwrap();
        let s = d / 2.0;
        let abc = multilinear_kakeya_integral(&a, &b, &c, s).unwrap().value;
        let cab = multilinear_kakeya_integral(&c, &a, &b, s).unwrap().value;
        assert_relative_eq!(abc, cab, max_relative = 1e-12);
        let mut bigger = a.clone();
        bigger.tubes.extend(transverse_family(0, 4, d, 0.3, &mut rng).unwrap().tubes);
        let more = multilinear_kakeya_integral(&bigger, &b, &c, s).unwrap().value;
        assert!(more >= abc);
    }

    #[test]
    fn clumps() {
        let clump_of: Vec<usize> = (0..200_000).collect();
        let through: Vec<usize> = (0..100_000).collect();
        assert_eq!(clump_classify_at(&through, &clump_of, 1.0), ClumpClass::Broad);
        let one: Vec<usize> = vec![0; 100_000];
        assert_eq!(clump_classify_at(&through, &one, 1.0), ClumpClass::Narrow);
        assert_eq!(clump_classify_at(&[], &one, 1.0), ClumpClass::Narrow);
    }

    #[test]
    fn jackson_exact_on_polynomials_and_fast_on_sine() {
        let fit = jackson_approximate(|x| 1.0 - 3.0 * x + 2.0 * x * x * x, 3, 4).unwrap();
        assert!(fit.sup_error < 1e-13);
        for (i, c) in [1.0, -3.0, 0.0, 2.0, 0.0].iter().enumerate() {
            assert!((fit.monomial[i] - c).abs() < 1e-11);
        }
        let pi = std::f64::consts::PI;
        let errs: Vec<(f64, f64)> = [4usize, 8, 16]
            .iter()
            .map(|&d| ((d as f64).ln(), jackson_approximate(|x| (2.0 * pi * x).sin(), 3, d).unwrap().sup_error.ln()))
            .collect();
        let slope = (errs[2].1 - errs[0].1) / (errs[2].0 - errs[0].0);
        assert!(slope <= -3.0);
        let delta = 1.0 / 64.0;
        let d = jackson_degree(delta, 3);
        let fit = jackson_approximate(|x| (2.0 * pi * x).sin() / (2.0 * pi).powi(3), 3, d).unwrap();
        assert!(fit.sup_error <= delta);
    }

    #[test]
    fn paraboloid_directions_satisfy_angle_condition() {
        let fam = straight_contrast_family(1.0 / 8.0, 1).unwrap().with_angle_condition().unwrap();
        assert!(angle_condition_constant(&fam) > 0.3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn nearest_point_beats_grid(y1 in -0.5f64..0.5, y2 in -0.5f64..0.5, t in 0.0f64..1.0, off in -0.05f64..0.05) {
            let c = phase_curve([y1, y2], true);
            let mut x = c.eval(t);
            x[0] += off;
            let (_, d) = c.nearest(&x);
            for i in 0..=200 {
                let p = c.eval(i as f64 / 200.0);
                prop_assert!(d <= norm(&sub(&p, &x)) + 1e-12);
            }
        }
    }
}
