//! Small dense linear algebra: everything here operates on matrices of size
//! at most 35x35, so plain `Vec<f64>` storage and textbook algorithms are
//! the right tool.

use alloc::vec;
use alloc::vec::Vec;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows[0].len();
        let mut m = Self::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            m.data[i * c..(i + 1) * c].copy_from_slice(row);
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] += v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.add_to(i, j, a * other.get(k, j));
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len());
        let mut y = vec![0.0; self.rows];
        for i in 0..self.rows {
            let mut s = 0.0;
            for j in 0..self.cols {
                s += self.get(i, j) * x[j];
            }
            y[i] = s;
        }
        y
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= *b;
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)))
    }
}

/// LU factorization with partial pivoting. Returns None for a singular matrix.
pub struct Lu {
    lu: DMat,
    piv: Vec<usize>,
    sign: f64,
}

impl Lu {
    pub fn new(a: &DMat) -> Option<Self> {
        assert_eq!(a.rows, a.cols);
        let n = a.rows;
        let mut lu = a.clone();
        let mut piv: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let mut p = k;
            let mut best = libm::fabs(lu.get(k, k));
            for i in k + 1..n {
                let v = libm::fabs(lu.get(i, k));
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return None;
            }
            if p != k {
                for j in 0..n {
                    let t = lu.get(k, j);
                    lu.set(k, j, lu.get(p, j));
                    lu.set(p, j, t);
                }
                piv.swap(k, p);
                sign = -sign;
            }
            let pivot = lu.get(k, k);
            for i in k + 1..n {
                let f = lu.get(i, k) / pivot;
                lu.set(i, k, f);
                for j in k + 1..n {
                    let v = lu.get(i, j) - f * lu.get(k, j);
                    lu.set(i, j, v);
                }
            }
        }
        Some(Self { lu, piv, sign })
    }

    pub fn det(&self) -> f64 {
        let n = self.lu.rows;
        let mut d = self.sign;
        for i in 0..n {
            d *= self.lu.get(i, i);
        }
        d
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows;
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[i] = b[self.piv[i]];
        }
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu.get(i, j) * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.lu.get(i, j) * x[j];
            }
            x[i] /= self.lu.get(i, i);
        }
        x
    }

    pub fn inverse(&self) -> DMat {
        let n = self.lu.rows;
        let mut inv = DMat::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.fill(0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv.set(i, j, col[i]);
            }
        }
        inv
    }
}

/// Least-squares solve of an overdetermined system via normal equations.
/// Fine for the well-conditioned embedding inversions used here.
pub fn lstsq(a: &DMat, b: &[f64]) -> Option<Vec<f64>> {
    let at = a.transpose();
    let ata = at.matmul(a);
    let atb = at.matvec(b);
    Lu::new(&ata).map(|lu| lu.solve(&atb))
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues ascending and the matrix of column eigenvectors.
pub fn sym_eigen(a: &DMat) -> (Vec<f64>, DMat) {
    assert_eq!(a.rows, a.cols);
    let n = a.rows;
    let mut m = a.clone();
    let mut v = DMat::identity(n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m.get(i, j) * m.get(i, j);
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if libm::fabs(apq) < 1e-300 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + libm::sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + libm::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vecs = DMat::zeros(n, n);
    for (new_j, &old_j) in order.iter().enumerate() {
        for i in 0..n {
            vecs.set(i, new_j, v.get(i, old_j));
        }
    }
    (vals, vecs)
}

/// Matrix exponential by scaling-and-squaring with a Taylor series.
pub fn mat_exp(a: &DMat) -> DMat {
    assert_eq!(a.rows, a.cols);
    let n = a.rows;
    let norm = a.max_abs() * n as f64;
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let mut b = a.clone();
    b.scale(scale);
    let mut result = DMat::identity(n);
    let mut term = DMat::identity(n);
    for k in 1..=20 {
        term = term.matmul(&b);
        term.scale(1.0 / k as f64);
        result = result.add(&term);
        if term.max_abs() < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = result.matmul(&result);
    }
    result
}

/// Orthonormal basis of the column span of `a` (modified Gram-Schmidt with
/// column pivoting); columns with residual below `tol` are dropped.
pub fn orthonormal_span(a: &DMat, tol: f64) -> DMat {
    let m = a.rows;
    let n = a.cols;
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..m).map(|i| a.get(i, j)).collect())
        .collect();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    loop {
        // Pick the remaining column with the largest residual norm.
        let mut best = tol;
        let mut pick = None;
        for (j, c) in cols.iter().enumerate() {
            let norm = libm::sqrt(c.iter().map(|v| v * v).sum());
            if norm > best {
                best = norm;
                pick = Some(j);
            }
        }
        let Some(j) = pick else { break };
        let norm = best;
        let q: Vec<f64> = cols[j].iter().map(|v| v / norm).collect();
        for c in cols.iter_mut() {
            let dot: f64 = c.iter().zip(&q).map(|(a, b)| a * b).sum();
            for (v, qv) in c.iter_mut().zip(&q) {
                *v -= dot * qv;
            }
        }
        basis.push(q);
    }
    let mut out = DMat::zeros(m, basis.len());
    for (j, q) in basis.iter().enumerate() {
        for i in 0..m {
            out.set(i, j, q[i]);
        }
    }
    out
}

/// Symmetric 7x7 convenience wrapper used by the metric code.
pub type Mat7 = [[f64; 7]; 7];

pub fn mat7_to_dmat(m: &Mat7) -> DMat {
    let mut d = DMat::zeros(7, 7);
    for i in 0..7 {
        for j in 0..7 {
            d.set(i, j, m[i][j]);
        }
    }
    d
}

pub fn dmat_to_mat7(d: &DMat) -> Mat7 {
    let mut m = [[0.0; 7]; 7];
    for i in 0..7 {
        for j in 0..7 {
            m[i][j] = d.get(i, j);
        }
    }
    m
}
