//! Sparse real polynomials in up to six variables.

use serde::{Deserialize, Serialize};

pub const MAXV: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mono {
    pub exps: [u8; MAXV],
    pub coeff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poly {
    pub nvars: usize,
    pub terms: Vec<Mono>,
}

fn binom(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        assert!(nvars <= MAXV, "at most {MAXV} variables");
        Poly { nvars, terms: Vec::new() }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Poly::zero(nvars);
        p.add_term([0; MAXV], c);
        p
    }

    /// Adds c·Π y_i^{e_i}, merging with an existing monomial.
    pub fn add_term(&mut self, exps: [u8; MAXV], c: f64) {
        debug_assert!(exps[self.nvars..].iter().all(|&e| e == 0));
        if c == 0.0 {
            return;
        }
        match self.terms.iter_mut().find(|m| m.exps == exps) {
            Some(m) => m.coeff += c,
            None => self.terms.push(Mono { exps, coeff: c }),
        }
    }

    pub fn add(&mut self, other: &Poly) {
        for m in &other.terms {
            self.add_term(m.exps, m.coeff);
        }
    }

    pub fn scaled(&self, s: f64) -> Poly {
        let mut p = self.clone();
        for m in &mut p.terms {
            m.coeff *= s;
        }
        p
    }

    /// Sorted by exponents, zero coefficients dropped.
    pub fn canonical(&self) -> Poly {
        let mut p = self.clone();
        p.terms.retain(|m| m.coeff != 0.0);
        p.terms.sort_by_key(|a| a.exps);
        p
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|m| m.exps.iter().map(|&e| e as u32).sum()).max().unwrap_or(0)
    }

    pub fn degree_in(&self, var: usize) -> u8 {
        self.terms.iter().map(|m| m.exps[var]).max().unwrap_or(0)
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|m| {
                let mut v = m.coeff;
                for (i, &e) in m.exps[..self.nvars].iter().enumerate() {
                    for _ in 0..e {
                        v *= y[i];
                    }
                }
                v
            })
            .sum()
    }

    pub fn deriv(&self, var: usize) -> Poly {
        let mut p = Poly::zero(self.nvars);
        for m in &self.terms {
            if m.exps[var] > 0 {
                let mut e = m.exps;
                e[var] -= 1;
                p.add_term(e, m.coeff * m.exps[var] as f64);
            }
        }
        p
    }

    pub fn gradient(&self, y: &[f64]) -> Vec<f64> {
        (0..self.nvars).map(|i| self.deriv(i).eval(y)).collect()
    }

    /// Substitutes y_i = a_i + s·η_i.
    pub fn affine_substitute(&self, a: &[f64], s: f64) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for m in &self.terms {
            // Product over variables of Σ_k C(e,k) a^{e−k} s^k η^k.
            let mut partial: Vec<([u8; MAXV], f64)> = vec![([0; MAXV], m.coeff)];
            for i in 0..self.nvars {
                let e = m.exps[i] as u32;
                if e == 0 {
                    continue;
                }
                let mut next = Vec::with_capacity(partial.len() * (e as usize + 1));
                for (ex, c) in &partial {
                    for k in 0..=e {
                        let f = binom(e, k) * a[i].powi((e - k) as i32) * s.powi(k as i32);
                        let mut ex2 = *ex;
                        ex2[i] = k as u8;
                        next.push((ex2, c * f));
                    }
                }
                partial = next;
            }
            for (ex, c) in partial {
                out.add_term(ex, c);
            }
        }
        out
    }

    /// True when no monomial mixes two variables.
    pub fn is_separable(&self) -> bool {
        self.terms.iter().all(|m| m.exps.iter().filter(|&&e| e > 0).count() <= 1)
    }

    /// Coefficients of var^k (k = 0..=3) with the other variables fixed at `y` (y[var] ignored).
    pub fn coeffs_in(&self, var: usize, y: &[f64]) -> [f64; 4] {
        let mut c = [0.0; 4];
        for m in &self.terms {
            let mut v = m.coeff;
            for (i, &e) in m.exps[..self.nvars].iter().enumerate() {
                if i != var {
                    for _ in 0..e {
                        v *= y[i];
                    }
                }
            }
            c[m.exps[var] as usize] += v;
        }
        c
    }

    /// Splits a separable polynomial into its constant and per-variable cubic parts.
    pub fn split_separable(&self) -> Option<(f64, Vec<[f64; 4]>)> {
        if !self.is_separable() || (0..self.nvars).any(|v| self.degree_in(v) > 3) {
            return None;
        }
        let mut c0 = 0.0;
        let mut per = vec![[0.0; 4]; self.nvars];
        for m in &self.terms {
            match m.exps[..self.nvars].iter().position(|&e| e > 0) {
                None => c0 += m.coeff,
                Some(v) => per[v][m.exps[v] as usize] += m.coeff,
            }
        }
        Some((c0, per))
    }
}

/// Exponent tuple helper: `ex(&[(0, 2), (1, 1)])` is y0² y1.
pub fn ex(parts: &[(usize, u8)]) -> [u8; MAXV] {
    let mut e = [0; MAXV];
    for &(v, k) in parts {
        e[v] += k;
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Poly {
        let mut p = Poly::zero(2);
        p.add_term(ex(&[(0, 2)]), 1.0);
        p.add_term(ex(&[(0, 1), (1, 1)]), -0.5);
        p.add_term(ex(&[(1, 3)]), 0.25);
        p.add_term(ex(&[]), 2.0);
        p
    }

    #[test]
    fn derivative_and_coeffs() {
        let p = sample();
        let y = [0.3, -0.7];
        let g = p.gradient(&y);
        assert!((g[0] - (2.0 * 0.3 - 0.5 * -0.7)).abs() < 1e-15);
        assert!((g[1] - (-0.5 * 0.3 + 0.75 * 0.49)).abs() < 1e-15);
        let c = p.coeffs_in(0, &y);
        let direct = c[0] + c[1] * 0.3 + c[2] * 0.09 + c[3] * 0.027;
        assert!((direct - p.eval(&y)).abs() < 1e-14);
        assert!(!p.is_separable());
    }

    proptest! {
        #[test]
        fn substitution_matches_evaluation(a0 in -1.0f64..1.0, a1 in -1.0f64..1.0, s in 0.1f64..2.0,
                                           e0 in -1.0f64..1.0, e1 in -1.0f64..1.0) {
            let p = sample();
            let q = p.affine_substitute(&[a0, a1], s);
            let lhs = q.eval(&[e0, e1]);
            let rhs = p.eval(&[a0 + s * e0, a1 + s * e1]);
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
