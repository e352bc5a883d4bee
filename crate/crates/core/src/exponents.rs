//! Exact exponent arithmetic and the log-log fitting used as the verdict format everywhere.

use num_rational::Ratio;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Q = Ratio<i128>;

pub fn q(n: i128, d: i128) -> Q {
    Ratio::new(n, d)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExponentError {
    #[error("dimension {0} is below 3")]
    DimensionTooSmall(u32),
    #[error("the two bounds do not cross zero")]
    NoCrossing,
    #[error("the supremum over the free parameters is unbounded")]
    Unbounded,
    #[error("no interpolation weight closes the exponent")]
    Infeasible,
    #[error("fit needs at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("log-log fit requires positive scales and values")]
    NonPositive,
}

/// The admissible-p threshold: max over 2 ≤ k ≤ n of 2·min(k/(k−1), (2n−k+1)/(2n−k−1)).
pub fn threshold_p(n: u32) -> Result<Q, ExponentError> {
    if n < 3 {
        return Err(ExponentError::DimensionTooSmall(n));
    }
    let n = n as i128;
    let two = Q::from_integer(2);
    let best = (2..=n)
        .map(|k| {
            let a = q(k, k - 1);
            let b = q(2 * n - k + 1, 2 * n - k - 1);
            two * if a < b { a } else { b }
        })
        .max()
        .expect("k range is nonempty");
    Ok(best)
}

/// Closed-form version of the same threshold, split by n mod 3.
pub fn threshold_case_formula(n: u32) -> Result<Q, ExponentError> {
    if n < 3 {
        return Err(ExponentError::DimensionTooSmall(n));
    }
    let n = n as i128;
    Ok(match n % 3 {
        0 => q(2 * (4 * n + 3), 4 * n - 3),
        1 => q(2 * n + 1, n - 1),
        _ => q(4 * (n + 1), 2 * n - 1),
    })
}

/// Stein–Tomas type exponent 2(n+2)/n, listed next to the others in the CLI table.
pub fn tomas_exponent(n: u32) -> Q {
    let n = n as i128;
    q(2 * (n + 2), n)
}

/// Zero of the exponent, taken affine in 1/q, through (q1, e1) and (q2, e2).
pub fn interpolation_threshold(b1: (Q, Q), b2: (Q, Q)) -> Result<Q, ExponentError> {
    let ((q1, e1), (q2, e2)) = (b1, b2);
    if e1.is_zero() {
        return Ok(q1);
    }
    if e2.is_zero() {
        return Ok(q2);
    }
    if e1.signum() == e2.signum() || q1 == q2 {
        return Err(ExponentError::NoCrossing);
    }
    let (t1, t2) = (q1.recip(), q2.recip());
    let t = t1 - e1 * (t2 - t1) / (e2 - e1);
    Ok(t.recip())
}

/// λ^l μ^m δ^d with λ = δ^a (a ≥ 0, so λ ≤ 1) and μ = δ^b (b ≤ 0, so μ ≥ 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Monomial {
    pub lambda: Q,
    pub mu: Q,
    pub delta: Q,
}

impl Monomial {
    pub fn new(lambda: Q, mu: Q, delta: Q) -> Self {
        Monomial { lambda, mu, delta }
    }

    pub fn delta_only(delta: Q) -> Self {
        Monomial::new(Q::zero(), Q::zero(), delta)
    }

    /// δ-exponent after substituting λ = δ^a, μ = δ^b.
    pub fn exponent_at(&self, a: Q, b: Q) -> Q {
        self.delta + self.lambda * a + self.mu * b
    }
}

/// A bound at exponent q given by the minimum of a few monomials.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleBound {
    pub q: Q,
    pub terms: Vec<Monomial>,
}

impl ScaleBound {
    pub fn new(q: Q, terms: Vec<Monomial>) -> Self {
        ScaleBound { q, terms }
    }
}

// Row r, relation r·x >= rhs.
struct Ineq {
    row: Vec<Q>,
    rhs: Q,
}

fn solve_square(mut a: Vec<Vec<Q>>, mut b: Vec<Q>) -> Option<Vec<Q>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, piv);
        b.swap(col, piv);
        let inv = a[col][col].recip();
        for c in col..n {
            a[col][c] *= inv;
        }
        b[col] *= inv;
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col];
                for c in col..n {
                    let v = a[col][c];
                    a[r][c] -= f * v;
                }
                let v = b[col];
                b[r] -= f * v;
            }
        }
    }
    Some(b)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Maximize obj·x over {x ≥ 0, Σx = 1, ineqs}; a subset of a simplex, so vertex enumeration
/// is exhaustive. Returns None when the region is empty.
fn simplex_lp_max(obj: &[Q], ineqs: &[Ineq]) -> Option<(Q, Vec<Q>)> {
    let m = obj.len();
    let mut all: Vec<Ineq> = (0..m)
        .map(|i| {
            let mut row = vec![Q::zero(); m];
            row[i] = Q::one();
            Ineq { row, rhs: Q::zero() }
        })
        .collect();
    all.extend(ineqs.iter().map(|c| Ineq { row: c.row.clone(), rhs: c.rhs }));
    let mut best: Option<(Q, Vec<Q>)> = None;
    for subset in combinations(all.len(), m - 1) {
        let mut a = vec![vec![Q::one(); m]];
        let mut b = vec![Q::one()];
        for &i in &subset {
            a.push(all[i].row.clone());
            b.push(all[i].rhs);
        }
        let Some(x) = solve_square(a, b) else { continue };
        let feasible = all.iter().all(|c| {
            let lhs: Q = c.row.iter().zip(&x).map(|(r, v)| *r * *v).sum();
            lhs >= c.rhs
        });
        if !feasible {
            continue;
        }
        let val: Q = obj.iter().zip(&x).map(|(c, v)| *c * *v).sum();
        if best.as_ref().is_none_or(|(bv, _)| val > *bv) {
            best = Some((val, x));
        }
    }
    best
}

/// δ-exponent of sup over λ ∈ (0,1], μ ≥ 1 of min(terms). Larger is better (δ < 1).
///
/// Solved through the dual: maximize Σ w_i d_i over convex weights with Σ w_i l_i ≥ 0 and
/// Σ w_i m_i ≤ 0. An empty dual means the primal sup is unbounded.
pub fn worst_case_min_exponent(terms: &[Monomial]) -> Result<Q, ExponentError> {
    if terms.is_empty() {
        return Err(ExponentError::Unbounded);
    }
    let obj: Vec<Q> = terms.iter().map(|t| t.delta).collect();
    let cons = [
        Ineq { row: terms.iter().map(|t| t.lambda).collect(), rhs: Q::zero() },
        Ineq { row: terms.iter().map(|t| -t.mu).collect(), rhs: Q::zero() },
    ];
    simplex_lp_max(&obj, &cons).map(|(v, _)| v).ok_or(ExponentError::Unbounded)
}

/// Smallest q between the two bounds at which the Hölder interpolant of a losing bound (`lo`)
/// and a winning bound (`hi`) has a nonnegative worst-case δ-exponent.
pub fn interpolate_bounds(lo: &ScaleBound, hi: &ScaleBound) -> Result<Q, ExponentError> {
    // Variables: weights on hi terms (their sum is θ) then on lo terms.
    let terms: Vec<&Monomial> = hi.terms.iter().chain(lo.terms.iter()).collect();
    let nh = hi.terms.len();
    let obj: Vec<Q> = (0..terms.len()).map(|i| if i < nh { -Q::one() } else { Q::zero() }).collect();
    let cons = [
        Ineq { row: terms.iter().map(|t| t.delta).collect(), rhs: Q::zero() },
        Ineq { row: terms.iter().map(|t| t.lambda).collect(), rhs: Q::zero() },
        Ineq { row: terms.iter().map(|t| -t.mu).collect(), rhs: Q::zero() },
    ];
    let (neg_theta, _) = simplex_lp_max(&obj, &cons).ok_or(ExponentError::Infeasible)?;
    let theta = -neg_theta;
    let inv = (Q::one() - theta) / lo.q + theta / hi.q;
    Ok(inv.recip())
}

/// Which linear Kakeya input feeds the bound pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KakeyaInput {
    Optimal,
    Wolff,
    Trivial,
}

/// The two (losing, winning) bound pairs whose interpolation gives the threshold.
pub fn kakeya_bound_pairs(input: KakeyaInput) -> [(ScaleBound, ScaleBound); 2] {
    let z = Q::zero();
    let m = Monomial::new;
    let three = Q::from_integer(3);
    let ten_thirds = q(10, 3);
    match input {
        KakeyaInput::Optimal => [
            (
                ScaleBound::new(three, vec![m(q(-1, 2), Q::one(), z)]),
                ScaleBound::new(ten_thirds, vec![m(q(1, 10), q(-1, 5), z)]),
            ),
            (
                ScaleBound::new(three, vec![m(z, Q::one(), z)]),
                ScaleBound::new(ten_thirds, vec![m(z, q(-1, 5), z)]),
            ),
        ],
        KakeyaInput::Wolff => [
            (
                ScaleBound::new(three, vec![Monomial::delta_only(q(-1, 6))]),
                ScaleBound::new(
                    ten_thirds,
                    vec![m(q(1, 10), q(-1, 5), z), m(q(-1, 2), Q::one(), q(1, 10))],
                ),
            ),
            (
                ScaleBound::new(three, vec![Monomial::delta_only(q(-1, 12))]),
                ScaleBound::new(ten_thirds, vec![m(z, q(-1, 5), z), m(z, Q::one(), q(1, 20))]),
            ),
        ],
        KakeyaInput::Trivial => [
            (
                ScaleBound::new(three, vec![Monomial::delta_only(q(-1, 6))]),
                ScaleBound::new(
                    ten_thirds,
                    vec![m(q(1, 10), q(-1, 5), z), m(q(-1, 2), Q::one(), q(-1, 5))],
                ),
            ),
            (
                ScaleBound::new(three, vec![Monomial::delta_only(q(-1, 12))]),
                ScaleBound::new(ten_thirds, vec![m(z, q(-1, 5), z), m(z, Q::one(), q(-1, 10))]),
            ),
        ],
    }
}

/// Threshold from the better of the two pair interpolations. When the winning bound has no
/// δ-gain at all the interpolation degenerates to its own exponent.
pub fn kakeya_threshold_with(input: KakeyaInput) -> Result<Q, ExponentError> {
    let mut best: Option<Q> = None;
    for (lo, hi) in kakeya_bound_pairs(input) {
        let t = match interpolate_bounds(&lo, &hi) {
            Ok(t) => t,
            Err(ExponentError::Infeasible) => continue,
            Err(e) => return Err(e),
        };
        best = Some(best.map_or(t, |b: Q| if t < b { t } else { b }));
    }
    best.ok_or(ExponentError::Infeasible)
}

pub fn kakeya_improved_threshold() -> Q {
    kakeya_threshold_with(KakeyaInput::Optimal).expect("hardcoded pairs are feasible")
}

pub fn fmt_q(x: &Q) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// Parses "a/b", an integer, or a decimal literal into an exact rational.
pub fn parse_q(s: &str) -> Option<Q> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let (a, b) = (a.trim().parse::<i128>().ok()?, b.trim().parse::<i128>().ok()?);
        return (b != 0).then(|| q(a, b));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let neg = int.starts_with('-');
        let scale = 10i128.checked_pow(frac.len() as u32)?;
        let i: i128 = if int == "-" || int.is_empty() { 0 } else { int.parse().ok()? };
        let f: i128 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
        let mag = i.abs() * scale + f;
        return Some(q(if neg { -mag } else { mag }, scale));
    }
    s.parse::<i128>().ok().map(Q::from_integer)
}

pub fn to_f64(x: &Q) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    pub samples: usize,
}

/// Least squares line through (ln scale, ln value).
pub fn loglog_fit(samples: &[(f64, f64)]) -> Result<ExponentFit, ExponentError> {
    if samples.len() < 2 {
        return Err(ExponentError::TooFewSamples { need: 2, got: samples.len() });
    }
    if samples.iter().any(|&(s, v)| !(s > 0.0) || !(v > 0.0)) {
        return Err(ExponentError::NonPositive);
    }
    let pts: Vec<(f64, f64)> = samples.iter().map(|&(s, v)| (s.ln(), v.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(ExponentFit { slope, intercept, residual_rms: (ss / n).sqrt(), samples: pts.len() })
}
