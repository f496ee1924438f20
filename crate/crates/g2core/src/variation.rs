//! Deformation bookkeeping: every 3-form variation splits uniquely into a
//! conformal part, a vector part and a traceless part, and the 14-part of
//! the 2-forms exponentiates into the stabilizer of the structure form.

use crate::error::G2Error;
use crate::linalg::{dmat_to_mat7, mat7_to_dmat, mat_exp, Mat7};
use crate::pform::PForm;
use crate::proj::G2Frame;

/// The unique decomposition `psi = 3 f0 sigma + star(f1 ^ sigma) + f3`
/// with `f3` in the 27-part.
#[derive(Clone, Copy, Debug)]
pub struct JoyceTriple {
    pub f0: f64,
    pub f1: PForm,
    pub f3: PForm,
}

impl JoyceTriple {
    pub fn zero() -> Self {
        Self {
            f0: 0.0,
            f1: PForm::zero(1),
            f3: PForm::zero(3),
        }
    }
}

/// Split a 3-form variation at the structure `frame`.
pub fn decompose_variation(frame: &G2Frame, psi: &PForm) -> JoyceTriple {
    assert_eq!(psi.degree(), 3);
    let ss = frame
        .metric
        .inner(&frame.sigma, &frame.sigma)
        .expect("degree 3");
    let ps = frame.metric.inner(psi, &frame.sigma).expect("degree 3");
    let f0 = ps / (3.0 * ss);
    let rest = psi.sub(&frame.sigma.scaled(3.0 * f0));
    let f1 = frame.invert_embedding_3(&rest);
    let f3 = rest.sub(&frame.embed_1_into_3(&f1));
    JoyceTriple { f0, f1, f3 }
}

/// Reassemble a variation from its triple. Rejects an `f3` outside the
/// 27-part, which otherwise would silently leak into the other components.
pub fn compose_variation(frame: &G2Frame, t: &JoyceTriple) -> Result<PForm, G2Error> {
    assert_eq!(t.f1.degree(), 1);
    assert_eq!(t.f3.degree(), 3);
    if t.f3.coeff_norm() > 0.0 {
        let res = frame.residual_27(&t.f3);
        if res > 1e-10 {
            return Err(G2Error::OutsideSubspace {
                expected: "Lambda^3_27",
                residual: res,
            });
        }
    }
    let mut out = frame.sigma.scaled(3.0 * t.f0);
    out.axpy(1.0, &frame.embed_1_into_3(&t.f1));
    out.axpy(1.0, &t.f3);
    Ok(out)
}

/// Skew endomorphism metrically associated to a 2-form.
pub fn skew_endomorphism(frame: &G2Frame, beta: &PForm) -> Mat7 {
    assert_eq!(beta.degree(), 2);
    // Matrix of the 2-form over the coordinate frame.
    let mut bmat = [[0.0; 7]; 7];
    for i in 0..7 {
        for j in (i + 1)..7 {
            let c = beta.coeff(&[i + 1, j + 1]);
            bmat[i][j] = c;
            bmat[j][i] = -c;
        }
    }
    let mut x = [[0.0; 7]; 7];
    for i in 0..7 {
        for j in 0..7 {
            for k in 0..7 {
                x[i][j] += frame.metric.g_inv[i][k] * bmat[k][j];
            }
        }
    }
    x
}

/// Exponential of the skew map associated to a 14-part 2-form. The result
/// pulls the structure form back to itself; only this stabilizer property
/// (scale independent) is promised.
pub fn g2_exp(frame: &G2Frame, beta: &PForm) -> Result<Mat7, G2Error> {
    if beta.coeff_norm() > 0.0 {
        let res = frame.residual_14(beta);
        if res > 1e-10 {
            return Err(G2Error::OutsideSubspace {
                expected: "Lambda^2_14",
                residual: res,
            });
        }
    }
    let x = skew_endomorphism(frame, beta);
    Ok(dmat_to_mat7(&mat_exp(&mat7_to_dmat(&x))))
}
