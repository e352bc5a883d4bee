//! Covering a finite union of unit cubes by few sparse collections of balls.
//!
//! Radii grow like r_{k+1} = (|E| R_k)^C and overflow f64 after a few levels, so every radius is
//! carried as its natural logarithm.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoverError {
    #[error("domain error: {0}")]
    Domain(String),
}

/// Lower corners of distinct unit cubes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CubeSet {
    pub n: usize,
    pub corners: Vec<Vec<i64>>,
}

impl CubeSet {
    pub fn new(n: usize, corners: Vec<Vec<i64>>) -> Result<Self, CoverError> {
        if n == 0 || corners.iter().any(|c| c.len() != n) {
            return Err(CoverError::Domain("corner dimension mismatch".into()));
        }
        let distinct: BTreeSet<&Vec<i64>> = corners.iter().collect();
        if distinct.len() != corners.len() {
            return Err(CoverError::Domain("cubes must be distinct".into()));
        }
        Ok(CubeSet { n, corners })
    }

    /// m cubes along the first axis.
    pub fn row(n: usize, m: usize) -> Self {
        CubeSet { n, corners: (0..m as i64).map(|i| (0..n).map(|a| if a == 0 { i } else { 0 }).collect()).collect() }
    }

    pub fn len(&self) -> usize {
        self.corners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corners.is_empty()
    }

    pub fn center(&self, i: usize) -> Vec<f64> {
        self.corners[i].iter().map(|&c| c as f64 + 0.5).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub log_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCollection {
    pub balls: Vec<Ball>,
    /// Common radius of the balls; infinite once it leaves f64 range.
    pub radius: f64,
    pub log_radius: f64,
    pub level: usize,
}

impl SparseCollection {
    pub fn new(balls: Vec<Ball>, log_radius: f64, level: usize) -> Self {
        SparseCollection { balls, radius: log_radius.exp(), log_radius, level }
    }

    /// Collection with an exactly representable radius.
    pub fn with_radius(centers: Vec<Vec<f64>>, radius: f64) -> Self {
        let lr = radius.ln();
        SparseCollection { balls: centers.into_iter().map(|c| Ball { center: c, log_radius: lr }).collect(), radius, log_radius: lr, level: 0 }
    }

    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SparseMode {
    /// |a − a′| > (NR)^C
    Basic,
    /// |a − a′| > N^{(n+1)/(n(n−1))} R^{2n/(n−1)}
    Strengthened,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseReport {
    pub sparse: bool,
    pub min_distance: f64,
    pub log_threshold: f64,
    pub worst_pair: Option<(usize, usize)>,
}

pub fn log_threshold(mode: SparseMode, n: usize, count: usize, log_radius: f64, c: f64) -> f64 {
    let ln_n = (count as f64).ln();
    match mode {
        SparseMode::Basic => c * (ln_n + log_radius),
        SparseMode::Strengthened => {
            let nf = n as f64;
            (nf + 1.0) / (nf * (nf - 1.0)) * ln_n + 2.0 * nf / (nf - 1.0) * log_radius
        }
    }
}

fn linear_threshold(mode: SparseMode, n: usize, count: usize, radius: f64, c: f64) -> Option<f64> {
    let nf = n as f64;
    let t = match mode {
        SparseMode::Basic => (count as f64 * radius).powf(c),
        SparseMode::Strengthened => (count as f64).powf((nf + 1.0) / (nf * (nf - 1.0))) * radius.powf(2.0 * nf / (nf - 1.0)),
    };
    (t.is_finite() && t > 0.0).then_some(t)
}

/// The smallest C for which the basic condition implies the strengthened one, plus one.
pub fn default_exponent(n: usize) -> f64 {
    let nf = n as f64;
    ((nf + 1.0) / (nf * (nf - 1.0))).max(2.0 * nf / (nf - 1.0)) + 1.0
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Exhaustive pairwise check with strict inequality.
pub fn verify_sparse(col: &SparseCollection, n: usize, mode: SparseMode, c: f64) -> SparseReport {
    let lt = log_threshold(mode, n, col.balls.len(), col.log_radius, c);
    let m = col.balls.len();
    let best = (0..m)
        .into_par_iter()
        .flat_map_iter(|i| (i + 1..m).map(move |j| (i, j)))
        .map(|(i, j)| (dist(&col.balls[i].center, &col.balls[j].center), i, j))
        .reduce_with(|a, b| if b.0 < a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) { b } else { a });
    match best {
        None => SparseReport { sparse: true, min_distance: f64::INFINITY, log_threshold: lt, worst_pair: None },
        Some((d, i, j)) => {
            let sparse = match linear_threshold(mode, n, m, col.radius, c) {
                Some(thr) => d > thr,
                None => d.ln() > lt,
            };
            SparseReport { sparse, min_distance: d, log_threshold: lt, worst_pair: Some((i, j)) }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverResult {
    pub collections: Vec<SparseCollection>,
    pub delta: f64,
    pub exponent: f64,
    pub levels: usize,
    /// Level assigned to each cube.
    pub cube_levels: Vec<usize>,
    /// count / ((1/δ)|E|^δ)
    pub count_constant: f64,
    /// ln(max radius) / (C^{1/δ} ln|E|), with |E| replaced by 2 when |E| = 1.
    pub radius_exponent_ratio: f64,
}

/// ln(e^a + e^b)
fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Level radii ln r_0, …, ln r_K with r_0 = 0 and r_{k+1} = (N (r_k + √n/2))^C.
pub fn level_radii(n: usize, count: usize, levels: usize, c: f64) -> Vec<f64> {
    let half_diag = (n as f64).sqrt() / 2.0;
    let ln_n = (count as f64).ln();
    let mut r = vec![f64::NEG_INFINITY];
    for k in 0..levels {
        let big_r = log_add(r[k], half_diag.ln());
        r.push(c * (ln_n + big_r));
    }
    r
}

/// Every cube picks the first level k < K with #E∩B(x, r_{k+1}) ≤ |E|^δ #E∩B(x, r_k); such a
/// level exists because the ratios multiply to at most |E|. Level-k cubes are covered greedily by
/// balls of radius r_k + √n/2 centred at level-k cubes, and the centres are split into sparse
/// collections by greedy colouring of the graph joining centres closer than (|E| R_k)^C.
pub fn cover(e: &CubeSet, delta: f64, c: Option<f64>) -> Result<CoverResult, CoverError> {
    if e.is_empty() {
        return Err(CoverError::Domain("E must contain at least one cube".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(CoverError::Domain("δ must lie in (0, 1)".into()));
    }
    let n = e.n;
    let c = c.unwrap_or_else(|| default_exponent(n));
    if !(c >= 1.0) {
        return Err(CoverError::Domain("C must be at least 1".into()));
    }
    let m = e.len();
    let levels = (1.0 / delta - 1e-12).ceil() as usize;
    let radii = level_radii(n, m, levels, c);
    let centers: Vec<Vec<f64>> = (0..m).map(|i| e.center(i)).collect();
    let ln_d: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| (0..m).map(|j| dist(&centers[i], &centers[j]).ln()).collect())
        .collect();
    let count_within = |i: usize, lr: f64| ln_d[i].iter().filter(|&&d| d <= lr).count();
    let growth = (m as f64).powf(delta);
    let cube_levels: Vec<usize> = (0..m)
        .map(|i| {
            let counts: Vec<usize> = radii.iter().map(|&r| count_within(i, r)).collect();
            (0..levels).find(|&k| counts[k + 1] as f64 <= growth * counts[k] as f64).unwrap_or(levels - 1)
        })
        .collect();
    let half_diag = (n as f64).sqrt() / 2.0;
    let mut collections = Vec::new();
    for k in 0..levels {
        let members: Vec<usize> = (0..m).filter(|&i| cube_levels[i] == k).collect();
        if members.is_empty() {
            continue;
        }
        let mut covered = vec![false; m];
        let mut hubs = Vec::new();
        for &i in &members {
            if covered[i] {
                continue;
            }
            hubs.push(i);
            for &j in &members {
                if ln_d[i][j] <= radii[k] {
                    covered[j] = true;
                }
            }
        }
        let big_r = log_add(radii[k], half_diag.ln());
        let conflict = c * ((m as f64).ln() + big_r);
        let mut color = vec![usize::MAX; hubs.len()];
        for a in 0..hubs.len() {
            let used: BTreeSet<usize> =
                (0..a).filter(|&b| ln_d[hubs[a]][hubs[b]] <= conflict).map(|b| color[b]).collect();
            color[a] = (0..).find(|x| !used.contains(x)).unwrap();
        }
        let ncolors = color.iter().max().map_or(0, |x| x + 1);
        for col in 0..ncolors {
            let balls = hubs
                .iter()
                .zip(&color)
                .filter(|(_, &cl)| cl == col)
                .map(|(&h, _)| Ball { center: centers[h].clone(), log_radius: big_r })
                .collect();
            collections.push(SparseCollection::new(balls, big_r, k));
        }
    }
    let ln_e = (m.max(2) as f64).ln();
    let max_r = collections.iter().map(|c| c.log_radius).fold(f64::NEG_INFINITY, f64::max);
    Ok(CoverResult {
        count_constant: collections.len() as f64 / ((1.0 / delta) * (m as f64).powf(delta)),
        radius_exponent_ratio: max_r / (c.powf(1.0 / delta) * ln_e),
        collections,
        delta,
        exponent: c,
        levels,
        cube_levels,
    })
}

/// Every cube lies inside some ball: |center − cube centre| + √n/2 ≤ R.
pub fn covers(e: &CubeSet, result: &CoverResult) -> bool {
    let half_diag = (e.n as f64).sqrt() / 2.0;
    (0..e.len()).all(|i| {
        let x = e.center(i);
        result.collections.iter().flat_map(|c| &c.balls).any(|b| {
            let d = dist(&x, &b.center) + half_diag;
            let r = b.log_radius.exp();
            if r.is_finite() {
                d <= r * (1.0 + 1e-12)
            } else {
                d.ln() <= b.log_radius
            }
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponents::loglog_fit;
    use proptest::prelude::*;

    #[test]
    fn single_cube() {
        let e = CubeSet::new(3, vec![vec![0, 0, 0]]).unwrap();
        let r = cover(&e, 1.0 / 3.0, None).unwrap();
        assert_eq!(r.collections.len(), 1);
        assert_eq!(r.collections[0].len(), 1);
        assert!(covers(&e, &r));
    }

    #[test]
    fn already_sparse_cubes_give_one_collection() {
        let c = default_exponent(3);
        let gap = (5.0f64).powf(c) as i64 * 2;
        let e = CubeSet::new(3, (0..5).map(|i| vec![i * gap, 0, 0]).collect()).unwrap();
        let r = cover(&e, 1.0 / 3.0, None).unwrap();
        assert_eq!(r.collections.len(), 1);
        assert_eq!(r.collections[0].len(), 5);
        assert!(r.collections[0].log_radius.exp() <= 1.0);
        assert!(verify_sparse(&r.collections[0], 3, SparseMode::Basic, c).sparse);
    }

    #[test]
    fn verifier_examples() {
        let col = |xs: &[f64]| SparseCollection::with_radius(xs.iter().map(|&x| vec![x, 0.0, 0.0]).collect(), 2.0);
        assert!(verify_sparse(&col(&[0.0]), 3, SparseMode::Basic, 4.0).sparse);
        let four = col(&[0.0, 21.0, 42.0, 63.0]);
        let rep = verify_sparse(&four, 3, SparseMode::Strengthened, 4.0);
        assert!((rep.log_threshold.exp() - 4f64.powf(2.0 / 3.0) * 8.0).abs() < 1e-9);
        assert!(rep.sparse);
        let c = SparseCollection::with_radius(vec![vec![0.0; 3], vec![3.0, 0.0, 0.0]], 1.5);
        assert!(!verify_sparse(&c, 3, SparseMode::Basic, 1.0).sparse);
    }

    #[test]
    fn basic_implies_strengthened_at_default_exponent() {
        assert_eq!(default_exponent(3), 4.0);
        for &count in &[2usize, 5, 64] {
            for &lr in &[0.0, 1.0, 10.0] {
                let b = log_threshold(SparseMode::Basic, 3, count, lr, 4.0);
                assert!(b >= log_threshold(SparseMode::Strengthened, 3, count, lr, 4.0));
            }
        }
    }

    #[test]
    fn row_fixture() {
        let e = CubeSet::row(3, 64);
        let r = cover(&e, 1.0 / 3.0, None).unwrap();
        assert!(covers(&e, &r));
        assert!(r.collections.len() as f64 <= 12.0);
        for c in &r.collections {
            assert!(verify_sparse(c, 3, SparseMode::Basic, r.exponent).sparse);
            assert!(verify_sparse(c, 3, SparseMode::Strengthened, r.exponent).sparse);
        }
        let pts: Vec<(f64, f64)> =
            [8usize, 64, 512].iter().map(|&m| (m as f64, cover(&CubeSet::row(3, m), 1.0 / 3.0, None).unwrap().collections.len() as f64)).collect();
        assert!(loglog_fit(&pts).unwrap().slope <= 1.0 / 3.0 + 0.1);
    }

    #[test]
    fn deterministic() {
        let e = CubeSet::new(2, vec![vec![0, 0], vec![5, 1], vec![40, 3], vec![41, 3], vec![9000, 0]]).unwrap();
        assert_eq!(cover(&e, 0.5, Some(2.0)).unwrap(), cover(&e, 0.5, Some(2.0)).unwrap());
    }

    fn cubes() -> impl Strategy<Value = CubeSet> {
        proptest::collection::btree_set((0i64..6, 0i64..6).prop_map(|(a, b)| (a * a * a * 40 + b, b)), 1..20)
            .prop_map(|s| CubeSet::new(2, s.into_iter().map(|(a, b)| vec![a, b]).collect()).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn cover_is_sound(e in cubes(), c in 1.0f64..3.0, inv in 2usize..5) {
            let r = cover(&e, 1.0 / inv as f64, Some(c)).unwrap();
            prop_assert!(covers(&e, &r));
            for col in &r.collections {
                prop_assert!(verify_sparse(col, 2, SparseMode::Basic, c).sparse);
            }
        }
    }
}
