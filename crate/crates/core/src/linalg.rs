//! Dense Hermitian eigensolver for the small matrices that appear in the
//! spin model (2x2 blocks up to the 9x9 electron-nuclear space).
//!
//! Cyclic complex Jacobi: each rotation first removes the phase of the
//! pivot element and then applies a real Givens rotation, so the diagonal
//! stays real throughout.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAX_DIMENSION: usize = 9;

const HERMITIAN_TOLERANCE: f64 = 1e-9;
const MAX_SWEEPS: usize = 64;

/// Eigen-decomposition `H = V diag(values) V†` with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: DVector<f64>,
    /// Eigenvectors stored column-wise, in the order of `values`.
    pub vectors: DMatrix<Complex64>,
}

impl HermitianEigen {
    pub fn vector(&self, k: usize) -> DVector<Complex64> {
        self.vectors.column(k).into_owned()
    }

    pub fn reconstruct(&self) -> DMatrix<Complex64> {
        let n = self.values.len();
        let mut lambda = DMatrix::<Complex64>::zeros(n, n);
        for k in 0..n {
            lambda[(k, k)] = Complex64::new(self.values[k], 0.0);
        }
        &self.vectors * lambda * self.vectors.adjoint()
    }
}

pub fn frobenius_norm(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn off_diagonal_norm(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += m[(i, j)].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

/// Relative asymmetry ‖H − H†‖ / ‖H‖ (zero for the zero matrix).
pub fn hermitian_defect(m: &DMatrix<Complex64>) -> f64 {
    let norm = frobenius_norm(m);
    if norm == 0.0 {
        return 0.0;
    }
    frobenius_norm(&(m - m.adjoint())) / norm
}

pub fn diagonalize_hermitian(h: &DMatrix<Complex64>) -> Result<HermitianEigen> {
    let n = h.nrows();
    if n != h.ncols() || n == 0 || n > MAX_DIMENSION {
        return Err(Error::BadDimension {
            rows: h.nrows(),
            cols: h.ncols(),
            max: MAX_DIMENSION,
        });
    }
    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("matrix"));
    }
    let defect = hermitian_defect(h);
    if defect > HERMITIAN_TOLERANCE {
        return Err(Error::NotHermitian(defect));
    }

    // Work on the exactly Hermitian part.
    let mut a = (h + h.adjoint()) * Complex64::new(0.5, 0.0);
    for i in 0..n {
        a[(i, i)] = Complex64::new(a[(i, i)].re, 0.0);
    }
    let mut v = DMatrix::<Complex64>::identity(n, n);
    let scale = frobenius_norm(&a);

    if scale > 0.0 {
        for _ in 0..MAX_SWEEPS {
            if off_diagonal_norm(&a) <= f64::EPSILON * 1e-2 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    rotate(&mut a, &mut v, p, q);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = DVector::from_iterator(n, order.iter().map(|&k| a[(k, k)].re));
    let mut vectors = DMatrix::<Complex64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    Ok(HermitianEigen { values, vectors })
}

/// One Jacobi rotation annihilating `a[(p, q)]`.
fn rotate(a: &mut DMatrix<Complex64>, v: &mut DMatrix<Complex64>, p: usize, q: usize) {
    let apq = a[(p, q)];
    let modulus = apq.norm();
    if modulus == 0.0 {
        return;
    }
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    // Tiny pivots relative to the diagonal gap are already converged.
    if modulus < f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) {
        a[(p, q)] = Complex64::new(0.0, 0.0);
        a[(q, p)] = Complex64::new(0.0, 0.0);
        return;
    }
    let phase = apq / modulus;
    let theta = (aqq - app) / (2.0 * modulus);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    // G acts on columns p, q:
    //   G_pp = c, G_pq = s, G_qp = -s e^{-iα}, G_qq = c e^{-iα}
    let g_pp = Complex64::new(c, 0.0);
    let g_pq = Complex64::new(s, 0.0);
    let g_qp = -phase.conj() * s;
    let g_qq = phase.conj() * c;

    let n = a.nrows();
    // A <- A G
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * g_pp + akq * g_qp;
        a[(k, q)] = akp * g_pq + akq * g_qq;
    }
    // A <- G† A
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = g_pp.conj() * apk + g_qp.conj() * aqk;
        a[(q, k)] = g_pq.conj() * apk + g_qq.conj() * aqk;
    }
    a[(p, q)] = Complex64::new(0.0, 0.0);
    a[(q, p)] = Complex64::new(0.0, 0.0);
    a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);
    // V <- V G
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * g_pp + vkq * g_qp;
        v[(k, q)] = vkp * g_pq + vkq * g_qq;
    }
}
