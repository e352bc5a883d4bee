//! Pointwise broad/narrow classification from cap coefficients, its pointwise certificate, the
//! coplanar quadruple filter and the degenerate-direction test for the saddle.

use crate::numerics::{dist, dist_to_span, normalize, orthonormalize, symmetric_eigen};
use crate::oscillatory_core::{cap_region, mollified_majorant, CoreError, Mollifier, PhaseFunction, SampledField};
use crate::surface_geometry::{distance_to_line, order_triple, transversality_volume, CapPartition};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecompositionError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("certificate requires a broad class")]
    NotBroad,
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// c_α per cap of a partition at scale 1/K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapCoefficients {
    pub values: Vec<f64>,
    pub k: f64,
    pub k1: f64,
}

impl CapCoefficients {
    pub fn new(values: Vec<f64>, k: f64, k1: f64) -> Result<Self, DecompositionError> {
        if values.iter().any(|c| !(*c >= 0.0)) {
            return Err(DecompositionError::Domain("coefficients must be nonnegative".into()));
        }
        if values.is_empty() || !(k > 0.0 && k1 > 0.0) {
            return Err(DecompositionError::Domain("need caps and positive K, K1".into()));
        }
        Ok(CapCoefficients { values, k, k1 })
    }

    /// (c_*, α*) with the lowest index among maximizers.
    pub fn star(&self) -> (f64, usize) {
        let mut best = (self.values[0], 0);
        for (i, &c) in self.values.iter().enumerate().skip(1) {
            if c > best.0 {
                best = (c, i);
            }
        }
        best
    }
}

/// Mollified majorants c_α at the K-ball around `a` for every cap of a grid partition.
pub fn cap_coefficients(
    phase: &PhaseFunction,
    f: &SampledField,
    partition: &CapPartition,
    a: &[f64],
    k1: f64,
    moll: &Mollifier,
) -> Result<CapCoefficients, DecompositionError> {
    let k = partition.k();
    let mut values = Vec::with_capacity(partition.len());
    for (alpha, cap) in partition.caps.iter().enumerate() {
        let region = cap_region(partition, alpha, &f.lattice)?;
        values.push(mollified_majorant(phase, f, &region, &cap.center, a, k, moll)?);
    }
    CapCoefficients::new(values, k, k1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classify3Config {
    /// Separation of the third cap from the line through the other two, in units of 1/K.
    pub margin: f64,
    /// Significance threshold exponent: c_α > K^{−t} c_*.
    pub threshold_exp: f64,
}

impl Default for Classify3Config {
    fn default() -> Self {
        Classify3Config { margin: 1e3, threshold_exp: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "kebab-case")]
pub enum PointClass {
    /// Three caps, ordered so the third is the one off the line through the first two.
    Broad { caps: Vec<usize>, altitude: f64 },
    /// Every significant cap lies within 1/K1 of α*.
    NarrowNonTransverse { star: usize },
    TransverseCoplanar {
        star: usize,
        second: usize,
        line_point: Vec<f64>,
        line_dir: Vec<f64>,
        /// Largest distance of a significant cap center from the line.
        spread: f64,
    },
}

impl PointClass {
    pub fn tag(&self) -> &'static str {
        match self {
            PointClass::Broad { .. } => "broad",
            PointClass::NarrowNonTransverse { .. } => "narrow-non-transverse",
            PointClass::TransverseCoplanar { .. } => "transverse-coplanar",
        }
    }

    pub fn witnesses(&self) -> Vec<usize> {
        match self {
            PointClass::Broad { caps, .. } => caps.clone(),
            PointClass::NarrowNonTransverse { star } => vec![*star],
            PointClass::TransverseCoplanar { star, second, .. } => vec![*star, *second],
        }
    }
}

/// Cases tested in order: non-coplanar triple, concentration near α*, coplanar pair.
pub fn classify_point_3d(coeffs: &CapCoefficients, partition: &CapPartition, cfg: &Classify3Config) -> PointClass {
    let (cstar, star) = coeffs.star();
    let k = coeffs.k;
    let thr = k.powf(-cfg.threshold_exp) * cstar;
    let sig: Vec<usize> = (0..coeffs.values.len()).filter(|&i| coeffs.values[i] > thr).collect();
    let y = |i: usize| partition.caps[i].center.as_slice();
    let m = cfg.margin / k;
    for (a, &i) in sig.iter().enumerate() {
        for (b, &j) in sig.iter().enumerate().skip(a + 1) {
            for &l in &sig[b + 1..] {
                let tri = [i, j, l];
                let o = order_triple([y(i), y(j), y(l)]);
                let alt = distance_to_line(y(tri[o[0]]), y(tri[o[1]]), y(tri[o[2]]));
                if alt > m {
                    return PointClass::Broad { caps: vec![tri[o[0]], tri[o[1]], tri[o[2]]], altitude: alt };
                }
            }
        }
    }
    let far = sig.iter().copied().find(|&i| dist(y(i), y(star)) > 1.0 / coeffs.k1);
    match far {
        None => PointClass::NarrowNonTransverse { star },
        Some(second) => {
            let p = y(star).to_vec();
            let dir = normalize(&crate::numerics::sub(y(second), y(star)));
            let q: Vec<f64> = p.iter().zip(&dir).map(|(a, b)| a + b).collect();
            let spread = sig.iter().map(|&i| distance_to_line(&p, &q, y(i))).fold(0.0, f64::max);
            PointClass::TransverseCoplanar { star, second, line_point: p, line_dir: dir, spread }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// |Tf(x)| ≤ (1 + ε) · N · K^t · (Π c_{α_i})^{1/k}, where N is the number of caps and K^{−t} the
/// significance threshold of the classifier that produced the witness.
pub fn broad_pointwise_certificate(
    tf: C64,
    coeffs: &CapCoefficients,
    class: &PointClass,
    threshold_exp: f64,
    eps_moll: f64,
) -> Result<CertificateReport, DecompositionError> {
    let caps = match class {
        PointClass::Broad { caps, .. } => caps,
        _ => return Err(DecompositionError::NotBroad),
    };
    Ok(certificate(tf, coeffs, caps, threshold_exp, eps_moll))
}

fn certificate(tf: C64, coeffs: &CapCoefficients, caps: &[usize], threshold_exp: f64, eps_moll: f64) -> CertificateReport {
    let kk = caps.len() as f64;
    let logmean = caps.iter().map(|&i| coeffs.values[i].ln()).sum::<f64>() / kk;
    let n_caps = coeffs.values.len() as f64;
    let rhs = (1.0 + eps_moll) * n_caps * coeffs.k.powf(threshold_exp) * logmean.exp();
    let lhs = tf.norm();
    CertificateReport { lhs, rhs, holds: lhs <= rhs }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyNdConfig {
    /// Wedge lower bound c(K) for a broad tuple.
    pub wedge_min: f64,
}

/// Orthonormal basis of V_m plus the radius of the neighborhood that holds every significant normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceWitness {
    pub basis: Vec<Vec<f64>>,
    pub radius: f64,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "kebab-case")]
pub enum NdClass {
    Broad { level: usize, caps: Vec<usize>, wedge: f64 },
    Descend { witness: SubspaceWitness },
}

/// One level of the descent. `normals[α]` is the unit normal of cap α and `nbhd` the radius
/// around V_m that caps must fall in to be considered.
pub fn classify_point_nd(
    coeffs: &CapCoefficients,
    normals: &[Vec<f64>],
    m: usize,
    subspace: &[Vec<f64>],
    nbhd: f64,
    cfg: &ClassifyNdConfig,
) -> Result<NdClass, DecompositionError> {
    let n = normals.first().map(|v| v.len()).unwrap_or(0);
    if m < 2 {
        return Err(DecompositionError::Domain("the descent stops at m = 2".into()));
    }
    if m > n || subspace.len() != m || normals.len() != coeffs.values.len() {
        return Err(DecompositionError::Domain("level, subspace and normals disagree".into()));
    }
    let near: Vec<usize> = (0..normals.len()).filter(|&a| dist_to_span(&normals[a], subspace) <= nbhd).collect();
    let cstar = near.iter().map(|&a| coeffs.values[a]).fold(0.0, f64::max);
    let thr = coeffs.k.powi(-(m as i32)) * cstar;
    let sig: Vec<usize> = near.iter().copied().filter(|&a| coeffs.values[a] > thr).collect();

    if !sig.is_empty() {
        let star = *sig.iter().find(|&&a| coeffs.values[a] == cstar).unwrap();
        let mut chosen = vec![star];
        while chosen.len() < m {
            let mut best: Option<(f64, usize)> = None;
            for &a in &sig {
                if chosen.contains(&a) {
                    continue;
                }
                let mut vs: Vec<Vec<f64>> = chosen.iter().map(|&c| normals[c].clone()).collect();
                vs.push(normals[a].clone());
                let w = transversality_volume(&vs).unwrap_or(0.0);
                if best.is_none_or(|(bw, _)| w > bw) {
                    best = Some((w, a));
                }
            }
            match best {
                Some((_, a)) => chosen.push(a),
                None => break,
            }
        }
        if chosen.len() == m {
            let vs: Vec<Vec<f64>> = chosen.iter().map(|&c| normals[c].clone()).collect();
            let w = transversality_volume(&vs).unwrap_or(0.0);
            if w > cfg.wedge_min {
                return Ok(NdClass::Broad { level: m, caps: chosen, wedge: w });
            }
        }
    }

    // V_{m−1}: top directions of Σ c_α (Pξ_α)(Pξ_α)^T with P the projection onto V_m.
    let mut gram = vec![0.0; m * m];
    let coords: Vec<Vec<f64>> = sig
        .iter()
        .map(|&a| subspace.iter().map(|b| crate::numerics::dot(&normals[a], b)).collect())
        .collect();
    for (&a, c) in sig.iter().zip(&coords) {
        let w = coeffs.values[a];
        for i in 0..m {
            for j in 0..m {
                gram[i * m + j] += w * c[i] * c[j];
            }
        }
    }
    let (_, vecs) = symmetric_eigen(&gram, m);
    let lifted: Vec<Vec<f64>> = vecs
        .iter()
        .take(m - 1)
        .map(|v| {
            let mut out = vec![0.0; n];
            for (coef, b) in v.iter().zip(subspace) {
                for (o, bi) in out.iter_mut().zip(b) {
                    *o += coef * bi;
                }
            }
            out
        })
        .collect();
    let basis = orthonormalize(&lifted, 1e-12);
    let spread = sig.iter().map(|&a| dist_to_span(&normals[a], &basis)).fold(0.0, f64::max);
    Ok(NdClass::Descend {
        witness: SubspaceWitness { radius: spread.max(1.0 / coeffs.k), basis, members: sig },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdOutcome {
    pub class: NdClass,
    /// Number of descents taken.
    pub depth: usize,
    pub trail: Vec<SubspaceWitness>,
}

/// Runs the descent from V_n = R^n down to m = 2.
pub fn classify_point_nd_recursive(
    coeffs: &CapCoefficients,
    normals: &[Vec<f64>],
    cfg: &ClassifyNdConfig,
) -> Result<NdOutcome, DecompositionError> {
    let n = normals.first().map(|v| v.len()).unwrap_or(0);
    let mut basis: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            e
        })
        .collect();
    let mut nbhd = f64::INFINITY;
    let mut trail = Vec::new();
    let mut m = n;
    loop {
        let c = classify_point_nd(coeffs, normals, m, &basis, nbhd, cfg)?;
        match c {
            NdClass::Broad { .. } => return Ok(NdOutcome { class: c, depth: trail.len(), trail }),
            NdClass::Descend { witness } => {
                trail.push(witness.clone());
                if m == 2 {
                    return Ok(NdOutcome { class: NdClass::Descend { witness }, depth: trail.len(), trail });
                }
                basis = witness.basis.clone();
                nbhd = witness.radius;
                m -= 1;
                if basis.len() != m {
                    return Err(DecompositionError::Domain("degenerate subspace in descent".into()));
                }
            }
        }
    }
}

/// Certificate for a broad tuple found at level m, with threshold exponent m.
pub fn broad_nd_certificate(tf: C64, coeffs: &CapCoefficients, class: &NdClass, eps_moll: f64) -> Result<CertificateReport, DecompositionError> {
    match class {
        NdClass::Broad { level, caps, .. } => Ok(certificate(tf, coeffs, caps, *level as f64, eps_moll)),
        _ => Err(DecompositionError::NotBroad),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadrupleParams {
    pub k: f64,
    pub k1: f64,
    pub c: f64,
    /// |t1 − t1′| must exceed sep/K1.
    pub sep: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum QuadrupleVerdict {
    Precondition { reason: String },
    RejectedFirst,
    RejectedSecond,
    /// `bound` is C′K1²/K; both |t1 − t2| and |t1′ − t2′| are at most this.
    Accepted { bound: f64, d: f64, dprime: f64 },
}

/// Conclusion bound for the quadruple filter.
///
/// With ε = CK1/K, σ = sep/K1, d = t1 − t2, d′ = t1′ − t2′ the constraints give |d − d′| ≤ ε and
/// |d(t1 + t2) − d′(t1′ + t2′)| ≤ ε. Since (t1 + t2) − (t1′ + t2′) = 2(t1 − t1′) − (d − d′) has
/// modulus at least 2σ − ε, and t1′ + t2′ ≤ 2,
/// |d|(2σ − ε) ≤ ε + 2|d − d′| ≤ 3ε, and symmetrically for d′. Hence
/// |d|, |d′| ≤ 3ε/(2σ − ε) = C′K1²/K with C′ = 3C/(2 sep − CK1²/K).
pub fn quadruple_bound(p: &QuadrupleParams) -> Option<f64> {
    let eps = p.c * p.k1 / p.k;
    let sigma = p.sep / p.k1;
    (2.0 * sigma > eps).then(|| 3.0 * eps / (2.0 * sigma - eps))
}

pub fn coplanar_quadruple_filter(t1: f64, t2: f64, t1p: f64, t2p: f64, p: &QuadrupleParams) -> QuadrupleVerdict {
    let pre = |reason: &str| QuadrupleVerdict::Precondition { reason: reason.into() };
    if [t1, t2, t1p, t2p].iter().any(|t| !(0.0..=1.0).contains(t)) {
        return pre("parameters outside [0, 1]");
    }
    if (t1 - t2).abs() > 2.0 / p.k1 || (t1p - t2p).abs() > 2.0 / p.k1 {
        return pre("pair wider than 2/K1");
    }
    if (t1 - t1p).abs() <= p.sep / p.k1 {
        return pre("pairs not separated");
    }
    let Some(bound) = quadruple_bound(p) else {
        return pre("separation too small for the bound");
    };
    let eps = p.c * p.k1 / p.k;
    if (t1 - t2 - t1p + t2p).abs() > eps {
        return QuadrupleVerdict::RejectedFirst;
    }
    if (t1 * t1 - t2 * t2 - t1p * t1p + t2p * t2p).abs() > eps {
        return QuadrupleVerdict::RejectedSecond;
    }
    QuadrupleVerdict::Accepted { bound, d: t1 - t2, dprime: t1p - t2p }
}

/// Integer parameters for exhaustive grids; t = T/K.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactQuadrupleParams {
    pub k: i64,
    pub k1: i64,
    pub c: i64,
    pub sep: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExactVerdict {
    Precondition,
    RejectedFirst,
    RejectedSecond,
    /// Whether both differences satisfy the conclusion bound.
    Accepted { within_bound: bool },
}

/// The filter in exact integer arithmetic on the grid t = T/K.
pub fn quadruple_filter_exact(t1: i64, t2: i64, t1p: i64, t2p: i64, p: &ExactQuadrupleParams) -> ExactVerdict {
    let (k, k1, c, sep) = (p.k as i128, p.k1 as i128, p.c as i128, p.sep as i128);
    let (a, b, ap, bp) = (t1 as i128, t2 as i128, t1p as i128, t2p as i128);
    if [a, b, ap, bp].iter().any(|&t| t < 0 || t > k) {
        return ExactVerdict::Precondition;
    }
    // |t1 − t2| ≤ 2/K1 ⇔ |T1 − T2|·K1 ≤ 2K
    if (a - b).abs() * k1 > 2 * k || (ap - bp).abs() * k1 > 2 * k {
        return ExactVerdict::Precondition;
    }
    // |t1 − t1′| > sep/K1 ⇔ |T1 − T1′|·K1 > sep·K
    if (a - ap).abs() * k1 <= sep * k {
        return ExactVerdict::Precondition;
    }
    // 2σ > ε ⇔ 2·sep·K > C·K1²
    let denom = 2 * sep * k - c * k1 * k1;
    if denom <= 0 {
        return ExactVerdict::Precondition;
    }
    // ε in grid units is C·K1 (t-units C·K1/K)
    if (a - b - ap + bp).abs() > c * k1 {
        return ExactVerdict::RejectedFirst;
    }
    // squares in units 1/K²: |…| ≤ C·K1·K
    if (a * a - b * b - ap * ap + bp * bp).abs() > c * k1 * k {
        return ExactVerdict::RejectedSecond;
    }
    // |D|/K ≤ 3CK1²/(K·(2sep − CK1²/K)) ⇔ |D|·(2 sep K − C K1²) ≤ 3 C K1² K
    let lim = 3 * c * k1 * k1 * k;
    let ok = (a - b).abs() * denom <= lim && (ap - bp).abs() * denom <= lim;
    ExactVerdict::Accepted { within_bound: ok }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCensus {
    pub examined: u64,
    pub accepted: u64,
    pub rejected_first: u64,
    pub rejected_second: u64,
    pub violations: u64,
}

/// Exhaustive census: t1, t1′ on a grid of step `t_step` grid units, d = T1 − T2 in ±d_max and
/// d′ = T1′ − T2′ within ±dd of d. Every quadruple passing the first constraint is visited.
pub fn quadruple_grid_census(p: &ExactQuadrupleParams, t_step: i64, d_max: i64, dd: i64) -> GridCensus {
    use rayon::prelude::*;
    let ts: Vec<i64> = (0..=p.k / t_step).map(|i| i * t_step).collect();
    let pairs: Vec<(i64, i64)> = ts
        .iter()
        .flat_map(|&a| ts.iter().map(move |&b| (a, b)))
        .filter(|&(a, b)| (a - b).abs() as i128 * p.k1 as i128 > p.sep as i128 * p.k as i128)
        .collect();
    pairs
        .par_iter()
        .map(|&(t1, t1p)| {
            let mut g = GridCensus::default();
            for d in -d_max..=d_max {
                for dp in d - dd..=d + dd {
                    let v = quadruple_filter_exact(t1, t1 - d, t1p, t1p - dp, p);
                    if v == ExactVerdict::Precondition {
                        continue;
                    }
                    g.examined += 1;
                    match v {
                        ExactVerdict::RejectedFirst => g.rejected_first += 1,
                        ExactVerdict::RejectedSecond => g.rejected_second += 1,
                        ExactVerdict::Accepted { within_bound } => {
                            g.accepted += 1;
                            if !within_bound {
                                g.violations += 1;
                            }
                        }
                        ExactVerdict::Precondition => unreachable!(),
                    }
                }
            }
            g
        })
        .reduce(GridCensus::default, |a, b| GridCensus {
            examined: a.examined + b.examined,
            accepted: a.accepted + b.accepted,
            rejected_first: a.rejected_first + b.rejected_first,
            rejected_second: a.rejected_second + b.rejected_second,
            violations: a.violations + b.violations,
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectionClass {
    Generic,
    StripCase,
}

/// Strip case iff min(|v1|, |v2|) < 1/K1 for the unit direction of v.
pub fn hyperbolic_degenerate_direction_test(v: [f64; 2], k1: f64) -> DirectionClass {
    let u = normalize(&v);
    if u[0].abs().min(u[1].abs()) < 1.0 / k1 {
        DirectionClass::StripCase
    } else {
        DirectionClass::Generic
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface_geometry::{gauss_normal, Surface};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn explicit(centers: &[[f64; 2]]) -> CapPartition {
        CapPartition::from_centers(centers.iter().map(|c| c.to_vec()).collect(), 0.005)
    }

    /// Literal case conditions, checked independently of the classifier.
    fn witnesses_hold(c: &CapCoefficients, part: &CapPartition, cfg: &Classify3Config, class: &PointClass) -> bool {
        let (cstar, star) = c.star();
        let thr = c.k.powf(-cfg.threshold_exp) * cstar;
        let y = |i: usize| part.caps[i].center.clone();
        match class {
            PointClass::Broad { caps, .. } => {
                caps.iter().all(|&i| c.values[i] > thr)
                    && distance_to_line(&y(caps[0]), &y(caps[1]), &y(caps[2])) > cfg.margin / c.k
                    && distance_to_line(&y(caps[0]), &y(caps[2]), &y(caps[1])) > cfg.margin / c.k
                    && distance_to_line(&y(caps[1]), &y(caps[2]), &y(caps[0])) > cfg.margin / c.k
            }
            PointClass::NarrowNonTransverse { star: s } => {
                *s == star
                    && (0..c.values.len()).all(|a| dist(&y(a), &y(star)) <= 1.0 / c.k1 || c.values[a] <= thr)
            }
            PointClass::TransverseCoplanar { star: s, second, .. } => {
                *s == star && c.values[*second] > thr && dist(&y(*second), &y(star)) > 1.0 / c.k1
            }
        }
    }

    #[test]
    fn concentrated_mass_is_narrow() {
        let part = CapPartition::uniform(&[-0.5, -0.5], &[0.5, 0.5], 20.0);
        let mut v = vec![0.0; part.len()];
        v[210] = 1.0;
        v[211] = 0.5;
        v[5] = 1e-7;
        let c = CapCoefficients::new(v, 20.0, 4.0).unwrap();
        let cls = classify_point_3d(&c, &part, &Classify3Config::default());
        assert_eq!(cls, PointClass::NarrowNonTransverse { star: 210 });
    }

    #[test]
    fn spread_triple_is_broad() {
        let part = explicit(&[[0.0, 0.0], [0.5, 0.0], [0.0, 0.5], [0.25, 0.25]]);
        let c = CapCoefficients::new(vec![1.0, 1.0, 1.0, 0.0], 100.0, 10.0).unwrap();
        let cfg = Classify3Config { margin: 10.0, threshold_exp: 4.0 };
        let cls = classify_point_3d(&c, &part, &cfg);
        let PointClass::Broad { caps, .. } = &cls else { panic!("{cls:?}") };
        let mut s = caps.clone();
        s.sort();
        assert_eq!(s, vec![0, 1, 2]);
        // the literal margin 10³/K exceeds the diameter of the domain at K = 100
        let lit = classify_point_3d(&c, &part, &Classify3Config::default());
        assert_eq!(lit.tag(), "transverse-coplanar");
    }

    #[test]
    fn collinear_caps_are_coplanar() {
        let centers: Vec<[f64; 2]> = (0..9).map(|i| [-0.4 + 0.1 * i as f64, 0.0]).collect();
        let part = explicit(&centers);
        let c = CapCoefficients::new(vec![1.0; 9], 100.0, 10.0).unwrap();
        let cls = classify_point_3d(&c, &part, &Classify3Config { margin: 10.0, threshold_exp: 4.0 });
        match cls {
            PointClass::TransverseCoplanar { star, second, line_dir, spread, .. } => {
                assert_eq!((star, second), (0, 2));
                assert!(line_dir[1].abs() < 1e-15 && spread < 1e-15);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn certificate_on_zero_field() {
        let part = explicit(&[[0.0, 0.0], [0.5, 0.0], [0.0, 0.5]]);
        let c = CapCoefficients::new(vec![1.0, 1.0, 1.0], 20.0, 4.0).unwrap();
        let cls = classify_point_3d(&c, &part, &Classify3Config { margin: 1.0, threshold_exp: 4.0 });
        let rep = broad_pointwise_certificate(C64::new(0.0, 0.0), &c, &cls, 4.0, 0.1).unwrap();
        assert!(rep.holds && rep.lhs == 0.0);
        let narrow = PointClass::NarrowNonTransverse { star: 0 };
        assert_eq!(broad_pointwise_certificate(C64::new(0.0, 0.0), &c, &narrow, 4.0, 0.1), Err(DecompositionError::NotBroad));
    }

    #[test]
    fn threshold_boundary_is_not_significant() {
        let part = explicit(&[[0.0, 0.0], [0.5, 0.0], [0.0, 0.5]]);
        let k: f64 = 10.0;
        let edge = k.powi(-4);
        let c = CapCoefficients::new(vec![1.0, 1.0, edge], k, 4.0).unwrap();
        let cfg = Classify3Config { margin: 1.0, threshold_exp: 4.0 };
        assert_ne!(classify_point_3d(&c, &part, &cfg).tag(), "broad");
        let c2 = CapCoefficients::new(vec![1.0, 1.0, edge * (1.0 + 1e-12)], k, 4.0).unwrap();
        let cls = classify_point_3d(&c2, &part, &cfg);
        assert_eq!(cls.tag(), "broad");
        let rep = broad_pointwise_certificate(C64::new(3.0, 0.0), &c2, &cls, 4.0, 0.0).unwrap();
        assert!(rep.holds, "{rep:?}");
    }

    fn normals_at(surface: &Surface, ys: &[Vec<f64>]) -> Vec<Vec<f64>> {
        ys.iter().map(|y| gauss_normal(surface, y)).collect()
    }

    #[test]
    fn four_dimensional_broad() {
        let s = Surface::paraboloid(4);
        let ys = vec![vec![0.0, 0.0, 0.0], vec![0.4, 0.0, 0.0], vec![0.0, 0.4, 0.0], vec![0.0, 0.0, 0.4]];
        let normals = normals_at(&s, &ys);
        let c = CapCoefficients::new(vec![1.0; 4], 10.0, 2.0).unwrap();
        let out = classify_point_nd_recursive(&c, &normals, &ClassifyNdConfig { wedge_min: 0.1 }).unwrap();
        match out.class {
            NdClass::Broad { level, ref caps, .. } => {
                assert_eq!(level, 4);
                assert_eq!(caps.len(), 4);
            }
            ref other => panic!("{other:?}"),
        }
        assert_eq!(out.depth, 0);
    }

    #[test]
    fn planar_normals_descend_twice() {
        let s = Surface::paraboloid(4);
        let ys: Vec<Vec<f64>> = (0..6).map(|i| vec![-0.3 + 0.12 * i as f64, 0.0, 0.0]).collect();
        let normals = normals_at(&s, &ys);
        let c = CapCoefficients::new(vec![1.0; 6], 10.0, 2.0).unwrap();
        let out = classify_point_nd_recursive(&c, &normals, &ClassifyNdConfig { wedge_min: 0.05 }).unwrap();
        assert_eq!(out.depth, 2);
        assert!(matches!(out.class, NdClass::Broad { level: 2, .. }));
    }

    #[test]
    fn single_cap_descends_everywhere() {
        let s = Surface::paraboloid(4);
        let ys = vec![vec![0.1, 0.0, 0.0], vec![0.3, 0.2, -0.1]];
        let normals = normals_at(&s, &ys);
        let c = CapCoefficients::new(vec![1.0, 0.0], 10.0, 2.0).unwrap();
        let out = classify_point_nd_recursive(&c, &normals, &ClassifyNdConfig { wedge_min: 0.01 }).unwrap();
        assert_eq!(out.depth, 3);
        assert!(matches!(out.class, NdClass::Descend { .. }));
        assert!(classify_point_nd(&c, &normals, 1, &[normals[0].clone()], 1.0, &ClassifyNdConfig { wedge_min: 0.01 }).is_err());
    }

    #[test]
    fn quadruple_examples() {
        let p = QuadrupleParams { k: 1e9, k1: 1e3, c: 1.0, sep: 10.0 };
        assert!(matches!(coplanar_quadruple_filter(0.5, 0.5, 0.1, 0.1, &p), QuadrupleVerdict::Accepted { d, dprime, .. } if d == 0.0 && dprime == 0.0));
        let t = (0.5, 0.5 - 1.5 / 1e3, 0.1, 0.1 - 1.5 / 1e3);
        assert_eq!(coplanar_quadruple_filter(t.0, t.1, t.2, t.3, &p), QuadrupleVerdict::RejectedSecond);
        let literal = QuadrupleParams { sep: 1e6, ..p };
        assert!(matches!(coplanar_quadruple_filter(t.0, t.1, t.2, t.3, &literal), QuadrupleVerdict::Precondition { .. }));
    }

    #[test]
    fn exact_filter_small_census() {
        let p = ExactQuadrupleParams { k: 10_000, k1: 20, c: 1, sep: 4 };
        let g = quadruple_grid_census(&p, 250, 1000, 20);
        assert!(g.accepted > 0 && g.rejected_second > 0);
        assert_eq!(g.violations, 0);
    }

    #[test]
    fn direction_test() {
        assert_eq!(hyperbolic_degenerate_direction_test([1.0, 0.0], 100.0), DirectionClass::StripCase);
        let r = 0.5f64.sqrt();
        assert_eq!(hyperbolic_degenerate_direction_test([r, r], 100.0), DirectionClass::Generic);
        let th = (1.0f64 / 100.0).asin();
        assert_eq!(hyperbolic_degenerate_direction_test([(th * 0.99).cos(), (th * 0.99).sin()], 100.0), DirectionClass::StripCase);
        assert_eq!(hyperbolic_degenerate_direction_test([(th * 1.01).cos(), (th * 1.01).sin()], 100.0), DirectionClass::Generic);
    }

    fn fuzz_coeffs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let mode = rng.gen_range(0..3);
        (0..n)
            .map(|_| match mode {
                0 => rng.gen_range(0.0..1.0),
                1 => if rng.gen_bool(0.05) { rng.gen_range(0.0..1.0) } else { 0.0 },
                _ => 10f64.powf(rng.gen_range(-8.0..0.0)),
            })
            .collect()
    }

    #[test]
    fn fuzzed_classes_are_sound() {
        let part = CapPartition::uniform(&[-0.5, -0.5], &[0.5, 0.5], 6.0);
        let cfg = Classify3Config { margin: 1.0, threshold_exp: 4.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..500 {
            let c = CapCoefficients::new(fuzz_coeffs(&mut rng, part.len()), 6.0, 3.0).unwrap();
            let cls = classify_point_3d(&c, &part, &cfg);
            assert!(witnesses_hold(&c, &part, &cfg, &cls), "{cls:?}");
            let scaled = CapCoefficients::new(c.values.iter().map(|v| v * 37.5).collect(), 6.0, 3.0).unwrap();
            assert_eq!(classify_point_3d(&scaled, &part, &cfg), cls);
        }
    }

    proptest! {
        #[test]
        fn exact_and_float_filters_agree(t1 in 0i64..=100_000, d in -2000i64..=2000, t1p in 0i64..=100_000, dd in -100i64..=100) {
            let e = ExactQuadrupleParams { k: 100_000, k1: 100, c: 1, sep: 20 };
            let f = QuadrupleParams { k: 1e5, k1: 1e2, c: 1.0, sep: 20.0 };
            let (t2, t2p) = (t1 - d, t1p - d - dd);
            let ex = quadruple_filter_exact(t1, t2, t1p, t2p, &e);
            let fl = coplanar_quadruple_filter(t1 as f64 / 1e5, t2 as f64 / 1e5, t1p as f64 / 1e5, t2p as f64 / 1e5, &f);
            if let ExactVerdict::Accepted { within_bound } = ex {
                prop_assert!(within_bound);
            }
            // float boundaries may differ by rounding only on exact ties
            let same = matches!((ex, &fl),
                (ExactVerdict::Precondition, QuadrupleVerdict::Precondition { .. })
                | (ExactVerdict::RejectedFirst, QuadrupleVerdict::RejectedFirst)
                | (ExactVerdict::RejectedSecond, QuadrupleVerdict::RejectedSecond)
                | (ExactVerdict::Accepted { .. }, QuadrupleVerdict::Accepted { .. }));
            prop_assume!(same);
        }
    }
}
