//! Smallest eigenpair of `K x = λ M x` for sparse symmetric `K` and a
//! positive diagonal `M`.

use nalgebra::DVector;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix, CsrMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GeneralizedProblem {
    pub k: CsrMatrix<f64>,
    pub mass: Vec<f64>,
}

impl GeneralizedProblem {
    /// Assemble from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)], mass: Vec<f64>) -> Result<Self> {
        if mass.len() != n {
            return Err(Error::Domain(format!("mass has {} entries for {n} unknowns", mass.len())));
        }
        if let Some(m) = mass.iter().find(|m| !(**m > 0.0)) {
            return Err(Error::Domain(format!("mass entry {m} is not positive")));
        }
        let mut coo = CooMatrix::new(n, n);
        for &(r, c, v) in triplets {
            coo.push(r, c, v);
        }
        Ok(GeneralizedProblem { k: CsrMatrix::from(&coo), mass })
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn apply_k(&self, x: &[f64]) -> Vec<f64> {
        let (off, cols, vals) = (self.k.row_offsets(), self.k.col_indices(), self.k.values());
        (0..self.len())
            .into_par_iter()
            .map(|r| (off[r]..off[r + 1]).map(|p| vals[p] * x[cols[p]]).sum())
            .collect()
    }

    pub fn mass_norm_sq(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.mass).map(|(a, m)| m * a * a).sum()
    }

    /// `xᵀKx / xᵀMx`.
    pub fn rayleigh_quotient(&self, x: &[f64]) -> f64 {
        dot(x, &self.apply_k(x)) / self.mass_norm_sq(x)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    /// Target for `‖Kx - ρMx‖ / (‖Kx‖ + |ρ| ‖Mx‖)`.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Initial shift; lowered until `K - shift M` is positive definite.
    pub shift: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { tol: 1e-8, max_iter: 500, seed: 0, shift: -1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub lambda_min: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub factorizations: usize,
    pub residual: f64,
    pub final_shift: f64,
}

/// Cholesky factor of `K - σM`, or `None` when that matrix is not positive
/// definite, i.e. when `σ` is not below the smallest eigenvalue.
fn factor_shifted(p: &GeneralizedProblem, sigma: f64) -> Option<CscCholesky<f64>> {
    let n = p.len();
    let mut coo = CooMatrix::new(n, n);
    for (r, c, v) in p.k.triplet_iter() {
        coo.push(r, c, *v);
    }
    for (i, m) in p.mass.iter().enumerate() {
        coo.push(i, i, -sigma * m);
    }
    CscCholesky::factor(&CscMatrix::from(&coo)).ok()
}

fn normalize(p: &GeneralizedProblem, x: &mut [f64]) {
    let nrm = p.mass_norm_sq(x).sqrt();
    if nrm > 0.0 {
        x.iter_mut().for_each(|v| *v /= nrm);
    }
}

/// Smallest eigenpair by shifted inverse iteration with sparse Cholesky
/// solves.
///
/// A shift is accepted only when `K - σM` factors, which certifies
/// `σ < λ_min`. The shift then moves towards the Rayleigh quotient, halving
/// the step whenever the factorization fails.
pub fn min_eigenpair(p: &GeneralizedProblem, opts: &EigenOptions) -> Result<SpectrumResult> {
    let n = p.len();
    if n == 0 {
        return Err(Error::Domain("eigenproblem has no unknowns".into()));
    }
    let mut factorizations = 0;
    let mut sigma = opts.shift;
    let mut chol = loop {
        factorizations += 1;
        if let Some(c) = factor_shifted(p, sigma) {
            break c;
        }
        if factorizations > 60 {
            return Err(Error::Solver { message: "no shift below the spectrum found".into(), residual: f64::NAN });
        }
        sigma -= 2.0 * sigma.abs().max(1.0);
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<f64> = (0..n).map(|_| 1.0 + 0.1 * rng.gen::<f64>()).collect();
    normalize(p, &mut x);
    let mut residual = f64::INFINITY;
    let mut last_shift_at = 0;
    for it in 1..=opts.max_iter {
        let b: Vec<f64> = x.iter().zip(&p.mass).map(|(a, m)| a * m).collect();
        let y = chol.solve(&DVector::from_vec(b));
        x = y.iter().copied().collect();
        normalize(p, &mut x);
        let kx = p.apply_k(&x);
        let rho = dot(&x, &kx) / p.mass_norm_sq(&x);
        let r: Vec<f64> = (0..n).map(|i| kx[i] - rho * p.mass[i] * x[i]).collect();
        let mx_norm = x.iter().zip(&p.mass).map(|(a, m)| (a * m).powi(2)).sum::<f64>().sqrt();
        residual = dot(&r, &r).sqrt() / (dot(&kx, &kx).sqrt() + rho.abs() * mx_norm);
        if residual < opts.tol {
            return Ok(SpectrumResult { lambda_min: rho, vector: x, iterations: it, factorizations, residual, final_shift: sigma });
        }
        if it - last_shift_at >= 4 {
            last_shift_at = it;
            let mut step = 0.9 * (rho - sigma);
            for _ in 0..8 {
                factorizations += 1;
                if let Some(c) = factor_shifted(p, sigma + step) {
                    chol = c;
                    sigma += step;
                    break;
                }
                step *= 0.5;
            }
        }
    }
    Err(Error::Solver { message: format!("inverse iteration did not converge in {} iterations", opts.max_iter), residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_by_five_path_laplacian() {
        // Dirichlet path Laplacian: eigenvalues 2 - 2cos(kπ/6).
        let mut t = Vec::new();
        for i in 0..5 {
            t.push((i, i, 2.0));
            if i + 1 < 5 {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let p = GeneralizedProblem::from_triplets(5, &t, vec![1.0; 5]).unwrap();
        let r = min_eigenpair(&p, &EigenOptions::default()).unwrap();
        let exact = 2.0 - 2.0 * (std::f64::consts::PI / 6.0).cos();
        assert!((r.lambda_min - exact).abs() < 1e-10, "{} vs {exact}", r.lambda_min);
        for i in 0..5 {
            let e = ((i + 1) as f64 * std::f64::consts::PI / 6.0).sin();
            let ratio = r.vector[i] / r.vector[2];
            assert!((ratio - e / (std::f64::consts::PI / 2.0).sin()).abs() < 1e-6);
        }
    }

    #[test]
    fn indefinite_diagonal_with_mass() {
        let k = [3.0, -2.0, 5.0, 1.0, -0.5];
        let m = [1.0, 4.0, 1.0, 2.0, 0.5];
        let t: Vec<_> = (0..5).map(|i| (i, i, k[i])).collect();
        let p = GeneralizedProblem::from_triplets(5, &t, m.to_vec()).unwrap();
        let r = min_eigenpair(&p, &EigenOptions::default()).unwrap();
        assert!((r.lambda_min + 1.0).abs() < 1e-10, "{}", r.lambda_min);
    }
}
