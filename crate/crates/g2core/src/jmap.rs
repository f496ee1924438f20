//! The equivariant isomorphism between the 27-dimensional piece of the
//! 3-forms and traceless symmetric bilinear forms.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::G2Error;
use crate::linalg::{lstsq, orthonormal_span, DMat, Mat7};
use crate::pform::PForm;
use crate::proj::G2Frame;

/// Symmetric bilinear form on R^7, optionally flagged traceless.
#[derive(Clone, Copy, Debug)]
pub struct Sym2 {
    pub h: Mat7,
    pub traceless: bool,
}

impl Sym2 {
    pub fn zero() -> Self {
        Self {
            h: [[0.0; 7]; 7],
            traceless: true,
        }
    }

    pub fn from_matrix(h: Mat7, traceless: bool) -> Self {
        Self { h, traceless }
    }

    pub fn trace_against(&self, g_inv: &Mat7) -> f64 {
        let mut t = 0.0;
        for i in 0..7 {
            for j in 0..7 {
                t += g_inv[i][j] * self.h[j][i];
            }
        }
        t
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for row in &self.h {
            for v in row {
                m = m.max(libm::fabs(*v));
            }
        }
        m
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut h = self.h;
        for i in 0..7 {
            for j in 0..7 {
                h[i][j] -= other.h[i][j];
            }
        }
        Self {
            h,
            traceless: self.traceless && other.traceless,
        }
    }

    /// Upper-triangle vectorization, 28 entries, row-major.
    pub fn to_upper(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(28);
        for i in 0..7 {
            for j in i..7 {
                v.push(self.h[i][j]);
            }
        }
        v
    }

    pub fn from_upper(v: &[f64]) -> Self {
        let mut h = [[0.0; 7]; 7];
        let mut k = 0;
        for i in 0..7 {
            for j in i..7 {
                h[i][j] = v[k];
                h[j][i] = v[k];
                k += 1;
            }
        }
        Self {
            h,
            traceless: false,
        }
    }
}

const MEMBERSHIP_TOL: f64 = 1e-10;

/// `j(gamma)(v, w) = star((v -| s) ^ (w -| s) ^ gamma)`, evaluated on the
/// coordinate frame. Restricted to the 27-part this is a bijection onto
/// traceless symmetric forms; inputs outside it are rejected with the
/// measured residual.
pub fn j_map(frame: &G2Frame, gamma: &PForm) -> Result<Sym2, G2Error> {
    assert_eq!(gamma.degree(), 3);
    let res = frame.residual_27(gamma);
    if res > MEMBERSHIP_TOL {
        return Err(G2Error::OutsideSubspace {
            expected: "Lambda^3_27",
            residual: res,
        });
    }
    Ok(j_map_unchecked(frame, gamma))
}

/// The raw bilinear evaluation without the membership check (used for the
/// structure form itself, where it reproduces six times the metric).
pub fn j_map_unchecked(frame: &G2Frame, gamma: &PForm) -> Sym2 {
    let mut basis_vec = [[0.0f64; 7]; 7];
    for i in 0..7 {
        basis_vec[i][i] = 1.0;
    }
    let contractions: [PForm; 7] =
        core::array::from_fn(|i| frame.sigma.interior(&basis_vec[i]).unwrap());
    let mut h = [[0.0; 7]; 7];
    for v in 0..7 {
        for w in v..7 {
            let pair = contractions[v].wedge(&contractions[w]).unwrap();
            let top = pair.wedge(gamma).unwrap().coeffs()[0];
            // star of a top form divides by the volume coefficient.
            h[v][w] = top / frame.metric.vol_coeff;
            h[w][v] = h[v][w];
        }
    }
    Sym2 { h, traceless: true }
}

/// Orthonormal coordinate basis of the 27-part (35 x 27 matrix of columns).
pub fn basis_27(frame: &G2Frame) -> DMat {
    let mut p27 = DMat::zeros(35, 35);
    for j in 0..35 {
        let mut e = PForm::zero(3);
        e.coeffs_mut()[j] = 1.0;
        let (_, _, g27) = frame.project_3(&e);
        for i in 0..35 {
            p27.set(i, j, g27.coeffs()[i]);
        }
    }
    orthonormal_span(&p27, 1e-8)
}

/// Inverse of `j_map` by a linear solve against the assembled matrix.
pub fn j_inverse(frame: &G2Frame, h: &Sym2) -> Result<PForm, G2Error> {
    let tr = h.trace_against(&frame.metric.g_inv);
    if libm::fabs(tr) > 1e-8 * (1.0 + h.max_abs()) {
        return Err(G2Error::OutsideSubspace {
            expected: "traceless Sym^2",
            residual: libm::fabs(tr),
        });
    }
    let basis = basis_27(frame);
    debug_assert_eq!(basis.cols, 27);
    // Columns: vectorized images of the basis 3-forms.
    let mut jmat = DMat::zeros(28, basis.cols);
    for c in 0..basis.cols {
        let mut gamma = PForm::zero(3);
        for i in 0..35 {
            gamma.coeffs_mut()[i] = basis.get(i, c);
        }
        let img = j_map_unchecked(frame, &gamma).to_upper();
        for r in 0..28 {
            jmat.set(r, c, img[r]);
        }
    }
    let target = h.to_upper();
    let coeffs = lstsq(&jmat, &target).ok_or(G2Error::InconsistentSolve {
        what: "j inverse",
        residual: f64::INFINITY,
    })?;
    let mut gamma = PForm::zero(3);
    for c in 0..basis.cols {
        for i in 0..35 {
            gamma.coeffs_mut()[i] += basis.get(i, c) * coeffs[c];
        }
    }
    Ok(gamma)
}

/// Smallest and largest singular values of the restricted map, computed from
/// the eigenvalues of J^T J over an orthonormal domain basis.
pub fn j_singular_range(frame: &G2Frame) -> (f64, f64) {
    let basis = basis_27(frame);
    let mut jmat = DMat::zeros(28, basis.cols);
    for c in 0..basis.cols {
        let mut gamma = PForm::zero(3);
        for i in 0..35 {
            gamma.coeffs_mut()[i] = basis.get(i, c);
        }
        // Weight the off-diagonal upper entries by sqrt(2) so the Euclidean
        // norm of the vector matches the Frobenius norm of the matrix.
        let s = j_map_unchecked(frame, &gamma);
        let mut v = vec![0.0; 28];
        let mut k = 0;
        for i in 0..7 {
            for j in i..7 {
                let w = if i == j { 1.0 } else { libm::sqrt(2.0) };
                v[k] = w * s.h[i][j];
                k += 1;
            }
        }
        for r in 0..28 {
            jmat.set(r, c, v[r]);
        }
    }
    let jtj = jmat.transpose().matmul(&jmat);
    let (vals, _) = crate::linalg::sym_eigen(&jtj);
    (
        libm::sqrt(vals[0].max(0.0)),
        libm::sqrt(vals[vals.len() - 1].max(0.0)),
    )
}
