//! Small dense linear algebra and compensated summation shared by the modules.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

/// Neumaier accumulator. Order of `add` calls fully determines the result.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ComplexSum {
    re: KahanSum,
    im: KahanSum,
}

impl ComplexSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, z: C64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    pub fn value(&self) -> C64 {
        C64::new(self.re.value(), self.im.value())
    }
}

pub fn sum_f64<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut s = KahanSum::new();
    for x in it {
        s.add(x);
    }
    s.value()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: &[f64]) -> Vec<f64> {
    let n = norm(a);
    a.iter().map(|x| x / n).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Determinant of a row-major k×k matrix.
pub fn det(m: Vec<f64>, k: usize) -> f64 {
    DMatrix::from_row_slice(k, k, &m).determinant()
}

pub fn gram(vs: &[Vec<f64>]) -> Vec<f64> {
    let k = vs.len();
    let mut g = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            g[i * k + j] = dot(&vs[i], &vs[j]);
        }
    }
    g
}

/// Modified Gram–Schmidt; vectors that are (numerically) dependent on earlier ones are dropped.
pub fn orthonormalize(vs: &[Vec<f64>], tol: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for v in vs {
        let mut w = v.clone();
        for _ in 0..2 {
            for u in &out {
                let c = dot(&w, u);
                for (wi, ui) in w.iter_mut().zip(u) {
                    *wi -= c * ui;
                }
            }
        }
        let nw = norm(&w);
        if nw > tol {
            out.push(w.iter().map(|x| x / nw).collect());
        }
    }
    out
}

/// Orthonormal frame whose first vectors span `lead` (in order), completed by standard basis vectors.
pub fn complete_frame(lead: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let mut vs: Vec<Vec<f64>> = lead.to_vec();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        vs.push(e);
    }
    let mut f = orthonormalize(&vs, 1e-9);
    f.truncate(n);
    f
}

/// Distance from `v` to the span of the orthonormal `basis`.
pub fn dist_to_span(v: &[f64], basis: &[Vec<f64>]) -> f64 {
    let mut w = v.to_vec();
    for u in basis {
        let c = dot(&w, u);
        for (wi, ui) in w.iter_mut().zip(u) {
            *wi -= c * ui;
        }
    }
    norm(&w)
}

/// Cholesky test for positive definiteness of a symmetric row-major k×k matrix.
pub fn is_positive_definite(a: &[f64], k: usize) -> bool {
    DMatrix::from_row_slice(k, k, a).cholesky().is_some()
}

/// Eigen-decomposition of a symmetric k×k matrix, eigenvalues descending with unit eigenvectors.
pub fn symmetric_eigen(a: &[f64], k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let e = DMatrix::from_row_slice(k, k, a).symmetric_eigen();
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&i, &j| e.eigenvalues[j].total_cmp(&e.eigenvalues[i]).then(i.cmp(&j)));
    let vals = idx.iter().map(|&i| e.eigenvalues[i]).collect();
    let vecs = idx.iter().map(|&i| e.eigenvectors.column(i).iter().copied().collect()).collect();
    (vals, vecs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = KahanSum::new();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    #[test]
    fn determinant_and_pd() {
        assert!((det(vec![2.0, 1.0, 1.0, 3.0], 2) - 5.0).abs() < 1e-14);
        assert!(is_positive_definite(&[2.0, 1.0, 1.0, 3.0], 2));
        assert!(!is_positive_definite(&[0.0, 0.5, 0.5, 0.0], 2));
    }

    #[test]
    fn symmetric_eigen_pairs() {
        let a = [4.0, 1.0, 0.0, 1.0, 3.0, 0.0, 0.0, 0.0, 1.0];
        let (vals, vecs) = symmetric_eigen(&a, 3);
        assert!(vals[0] > vals[1] && vals[1] > vals[2]);
        for (l, v) in vals.iter().zip(&vecs) {
            for r in 0..3 {
                let av: f64 = (0..3).map(|c| a[r * 3 + c] * v[c]).sum();
                assert!((av - l * v[r]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn frame_completion() {
        let f = complete_frame(&[normalize(&[1.0, 1.0, 0.0])], 3);
        assert_eq!(f.len(), 3);
        let g = gram(&f);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g[i * 3 + j] - e).abs() < 1e-12);
            }
        }
    }
}
