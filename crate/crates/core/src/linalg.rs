//! Small dense helpers: a row-pivoted LU with log-space determinants, and
//! principal-submatrix extraction.

use nalgebra::{DMatrix, DVector};

/// Determinant kept as a sign and the log of its magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDet {
    pub sign: f64,
    pub log_abs: f64,
}

impl LogDet {
    pub const ONE: LogDet = LogDet { sign: 1.0, log_abs: 0.0 };

    pub fn value(&self) -> f64 {
        self.sign * self.log_abs.exp()
    }

    /// `log det` when the determinant is strictly positive.
    pub fn positive_log(&self) -> Option<f64> {
        (self.sign > 0.0 && self.log_abs.is_finite()).then_some(self.log_abs)
    }

    pub fn is_finite(&self) -> bool {
        !self.log_abs.is_nan() && self.log_abs != f64::INFINITY
    }
}

/// LU factorization with partial (row) pivoting, `P A = L U`.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: DMatrix<f64>,
    perm: Vec<usize>,
    swaps: usize,
    singular: bool,
}

impl Lu {
    pub fn new(mut a: DMatrix<f64>) -> Self {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "LU of a non-square matrix");
        let mut perm: Vec<usize> = (0..n).collect();
        let mut swaps = 0;
        let mut singular = false;
        for k in 0..n {
            let mut piv = k;
            let mut best = a[(k, k)].abs();
            for i in k + 1..n {
                let v = a[(i, k)].abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if piv != k {
                a.swap_rows(piv, k);
                perm.swap(piv, k);
                swaps += 1;
            }
            let pivot = a[(k, k)];
            if pivot == 0.0 || !pivot.is_finite() {
                singular = true;
                continue;
            }
            for i in k + 1..n {
                let f = a[(i, k)] / pivot;
                a[(i, k)] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        let u = a[(k, j)];
                        a[(i, j)] -= f * u;
                    }
                }
            }
        }
        Lu { lu: a, perm, swaps, singular }
    }

    pub fn dim(&self) -> usize {
        self.lu.nrows()
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    pub fn log_det(&self) -> LogDet {
        let mut sign = if self.swaps % 2 == 0 { 1.0 } else { -1.0 };
        let mut log_abs = 0.0;
        for k in 0..self.dim() {
            let u = self.lu[(k, k)];
            if u == 0.0 {
                return LogDet { sign: 0.0, log_abs: f64::NEG_INFINITY };
            }
            if u.is_nan() {
                return LogDet { sign: f64::NAN, log_abs: f64::NAN };
            }
            if u < 0.0 {
                sign = -sign;
            }
            log_abs += u.abs().ln();
        }
        LogDet { sign, log_abs }
    }

    pub fn det(&self) -> f64 {
        self.log_det().value()
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut x = DVector::from_fn(n, |i, _| b[self.perm[i]]);
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }

    pub fn inverse(&self) -> Option<DMatrix<f64>> {
        if self.singular {
            return None;
        }
        let n = self.dim();
        let mut inv = DMatrix::zeros(n, n);
        let mut e = DVector::zeros(n);
        for j in 0..n {
            e.fill(0.0);
            e[j] = 1.0;
            inv.set_column(j, &self.solve_vec(&e));
        }
        inv.iter().all(|v| v.is_finite()).then_some(inv)
    }
}

pub fn log_det(a: &DMatrix<f64>) -> LogDet {
    if a.nrows() == 0 {
        return LogDet::ONE;
    }
    Lu::new(a.clone()).log_det()
}

pub fn principal_submatrix(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| a[(idx[r], idx[c])])
}

/// Smallest eigenvalue of the symmetric part `(A + Aᵀ) / 2`.
pub fn min_symmetric_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}
