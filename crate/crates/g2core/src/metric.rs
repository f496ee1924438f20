//! The metric induced by a definite 3-form, and the Hodge star it determines.

use crate::basis::{self, COMP_SIGN, COUNTS, DIM, MASKS};
use crate::error::G2Error;
use crate::linalg::{dmat_to_mat7, mat7_to_dmat, sym_eigen, DMat, Lu, Mat7};
use crate::pform::{minor, PForm};

/// Scale fixing `metric_from_sigma(standard_phi()) = id`: the bilinear pairing
/// below evaluates to `6 * id` on the standard form, and the determinant
/// normalization contributes the remaining power, leaving 6^(2/9).
fn metric_scale() -> f64 {
    ninth_root(1.0 / 36.0)
}

/// Riemannian metric data attached to a definite 3-form.
#[derive(Clone, Copy, Debug)]
pub struct Metric {
    pub g: Mat7,
    pub g_inv: Mat7,
    pub det_g: f64,
    /// Coefficient of `e^{1...7}` in the volume form, `sqrt(det g)`.
    pub vol_coeff: f64,
}

impl Metric {
    pub fn euclidean() -> Self {
        let mut id = [[0.0; 7]; 7];
        for i in 0..7 {
            id[i][i] = 1.0;
        }
        Self {
            g: id,
            g_inv: id,
            det_g: 1.0,
            vol_coeff: 1.0,
        }
    }

    pub fn from_matrix(g: Mat7) -> Result<Self, G2Error> {
        finish_metric(g)
    }

    pub fn volume_form(&self) -> PForm {
        let mut v = PForm::zero(7);
        v.coeffs_mut()[0] = self.vol_coeff;
        v
    }

    pub fn raise(&self, covector: &[f64; 7]) -> [f64; 7] {
        let mut v = [0.0; 7];
        for i in 0..7 {
            for j in 0..7 {
                v[i] += self.g_inv[i][j] * covector[j];
            }
        }
        v
    }

    pub fn lower(&self, vector: &[f64; 7]) -> [f64; 7] {
        let mut a = [0.0; 7];
        for i in 0..7 {
            for j in 0..7 {
                a[i] += self.g[i][j] * vector[j];
            }
        }
        a
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let (vals, _) = sym_eigen(&mat7_to_dmat(&self.g));
        vals[0]
    }

    /// Gram matrix of the induced inner product on degree-p forms:
    /// entry (I, J) is the minor of the inverse metric on those index sets.
    pub fn gram(&self, degree: usize) -> DMat {
        let n = COUNTS[degree];
        let mut gram = DMat::zeros(n, n);
        let mut iaxes = [0usize; 7];
        let mut jaxes = [0usize; 7];
        for i in 0..n {
            fill_axes(MASKS[degree][i], &mut iaxes);
            for j in i..n {
                fill_axes(MASKS[degree][j], &mut jaxes);
                let v = minor(&self.g_inv, &iaxes[..degree], &jaxes[..degree]);
                gram.set(i, j, v);
                gram.set(j, i, v);
            }
        }
        gram
    }

    /// Hodge star fixed by `a ^ star(b) = <a, b> vol` and the standard
    /// orientation; an involution in dimension 7.
    pub fn star(&self, a: &PForm) -> PForm {
        let p = a.degree();
        let q = DIM - p;
        let mut out = PForm::zero(q);
        let mut iaxes = [0usize; 7];
        let mut jaxes = [0usize; 7];
        for i in 0..COUNTS[p] {
            fill_axes(MASKS[p][i], &mut iaxes);
            // <e^I, a> under the induced metric.
            let mut inner = 0.0;
            for j in 0..COUNTS[p] {
                let c = a.coeffs()[j];
                if c == 0.0 {
                    continue;
                }
                fill_axes(MASKS[p][j], &mut jaxes);
                inner += c * minor(&self.g_inv, &iaxes[..p], &jaxes[..p]);
            }
            if inner == 0.0 {
                continue;
            }
            let slot = basis::complement_slot(p, i);
            out.coeffs_mut()[slot] += COMP_SIGN[p][i] as f64 * self.vol_coeff * inner;
        }
        out
    }

    /// Induced inner product on equal-degree forms.
    pub fn inner(&self, a: &PForm, b: &PForm) -> Result<f64, G2Error> {
        if a.degree() != b.degree() {
            return Err(G2Error::DegreeMismatch {
                left: a.degree(),
                right: b.degree(),
            });
        }
        let p = a.degree();
        let mut iaxes = [0usize; 7];
        let mut jaxes = [0usize; 7];
        let mut acc = 0.0;
        for i in 0..COUNTS[p] {
            let ai = a.coeffs()[i];
            if ai == 0.0 {
                continue;
            }
            fill_axes(MASKS[p][i], &mut iaxes);
            for j in 0..COUNTS[p] {
                let bj = b.coeffs()[j];
                if bj == 0.0 {
                    continue;
                }
                fill_axes(MASKS[p][j], &mut jaxes);
                acc += ai * bj * minor(&self.g_inv, &iaxes[..p], &jaxes[..p]);
            }
        }
        Ok(acc)
    }
}

fn fill_axes(mask: u8, out: &mut [usize; 7]) {
    let mut n = 0;
    for k in basis::axes_of(mask) {
        out[n] = k;
        n += 1;
    }
}

/// The bilinear pairing `B(u, v) = [(u -| s) ^ (v -| s) ^ s]_{e^{1...7}}`,
/// cubic in the 3-form and GL-natural up to a determinant weight.
pub fn sigma_bilinear(sigma: &PForm) -> Mat7 {
    assert_eq!(sigma.degree(), 3);
    let mut frame = [[0.0f64; 7]; 7];
    for i in 0..7 {
        frame[i][i] = 1.0;
    }
    let contractions: [PForm; 7] = core::array::from_fn(|i| sigma.interior(&frame[i]).unwrap());
    let mut b = [[0.0; 7]; 7];
    for i in 0..7 {
        for j in i..7 {
            let pair = contractions[i].wedge(&contractions[j]).unwrap();
            let top = pair.wedge(sigma).unwrap();
            b[i][j] = top.coeffs()[0];
            b[j][i] = b[i][j];
        }
    }
    b
}

fn ninth_root(x: f64) -> f64 {
    libm::cbrt(libm::cbrt(x))
}

fn finish_metric(g: Mat7) -> Result<Metric, G2Error> {
    let gd = mat7_to_dmat(&g);
    let Some(lu) = Lu::new(&gd) else {
        let (vals, _) = sym_eigen(&gd);
        return Err(G2Error::NotDefinite {
            det: 0.0,
            min_eig: vals[0],
        });
    };
    let det = lu.det();
    let (vals, _) = sym_eigen(&gd);
    if det <= 0.0 || vals[0] <= 0.0 {
        return Err(G2Error::NotDefinite {
            det,
            min_eig: vals[0],
        });
    }
    let g_inv = dmat_to_mat7(&lu.inverse());
    Ok(Metric {
        g,
        g_inv,
        det_g: det,
        vol_coeff: libm::sqrt(det),
    })
}

/// Canonical metric of a definite 3-form: the determinant-normalized bilinear
/// pairing. Satisfies `(u -| s) ^ (u -| s) ^ s = 6 |u|^2_g vol_g` and is
/// GL-natural: `metric(A^* s) = A^T metric(s) A`.
pub fn metric_from_sigma(sigma: &PForm) -> Result<Metric, G2Error> {
    let b = sigma_bilinear(sigma);
    let det_b = {
        let lu = Lu::new(&mat7_to_dmat(&b));
        match lu {
            Some(lu) => lu.det(),
            None => 0.0,
        }
    };
    if det_b == 0.0 || !det_b.is_finite() {
        let (vals, _) = sym_eigen(&mat7_to_dmat(&b));
        return Err(G2Error::NotDefinite {
            det: det_b,
            min_eig: vals[0],
        });
    }
    let scale = metric_scale() / ninth_root(det_b);
    let mut g = [[0.0; 7]; 7];
    for i in 0..7 {
        for j in 0..7 {
            g[i][j] = scale * b[i][j];
        }
    }
    finish_metric(g)
}

/// Whether the 3-form induces a Riemannian metric. Total: never errors.
pub fn is_definite(sigma: &PForm) -> bool {
    metric_from_sigma(sigma).is_ok()
}
