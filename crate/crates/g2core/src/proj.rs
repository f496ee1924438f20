//! Irreducible-bundle projections attached to a definite 3-form.
//!
//! 2-forms split as 7 + 14, 3-forms as 1 + 7 + 27; the 4- and 5-form splits
//! are the star images of those. The 2-form split uses the exact eigenvalue
//! structure of `b -> star(s ^ b)` (eigenvalues 2 and -1); the 3-form split
//! uses the line spanned by the structure form together with the embedding
//! `a -> star(a ^ s)` of 1-forms, inverted by least squares. Nothing here
//! transcribes component formulas: the splits are self-validating through
//! trace and idempotence checks in the tests.

use alloc::vec::Vec;

use crate::basis::COUNTS;
use crate::error::G2Error;
use crate::linalg::DMat;
use crate::metric::{metric_from_sigma, Metric};
use crate::pform::PForm;

/// A definite 3-form with its derived metric and dual 4-form, the working
/// unit for all pointwise structure-dependent operators.
#[derive(Clone, Debug)]
pub struct G2Frame {
    pub sigma: PForm,
    pub metric: Metric,
    pub star_sigma: PForm,
}

impl G2Frame {
    pub fn new(sigma: &PForm) -> Result<Self, G2Error> {
        let metric = metric_from_sigma(sigma)?;
        let star_sigma = metric.star(sigma);
        Ok(Self {
            sigma: *sigma,
            metric,
            star_sigma,
        })
    }

    pub fn star(&self, a: &PForm) -> PForm {
        self.metric.star(a)
    }

    /// `star(s ^ beta)`: the algebraic operator whose eigenspaces are the
    /// two irreducible pieces of the 2-forms.
    fn two_form_operator(&self, beta: &PForm) -> PForm {
        self.metric
            .star(&self.sigma.wedge(beta).expect("2-form wedge 3-form"))
    }

    /// Split a 2-form into its 7- and 14-dimensional parts.
    pub fn project_2(&self, beta: &PForm) -> (PForm, PForm) {
        assert_eq!(beta.degree(), 2);
        let k = self.two_form_operator(beta);
        // Spectral projector onto the eigenvalue-2 subspace of k = star(s^.).
        let mut b7 = beta.add(&k);
        for v in b7.coeffs_mut() {
            *v /= 3.0;
        }
        let b14 = beta.sub(&b7);
        (b7, b14)
    }

    /// Embedding of 1-forms into 3-forms, `a -> star(a ^ s)`, whose image is
    /// the 7-dimensional piece.
    pub fn embed_1_into_3(&self, alpha: &PForm) -> PForm {
        assert_eq!(alpha.degree(), 1);
        self.metric
            .star(&alpha.wedge(&self.sigma).expect("1-form wedge 3-form"))
    }

    /// Matrix of `embed_1_into_3` over the coordinate bases, 35 x 7.
    fn embedding_matrix(&self) -> DMat {
        let mut e = DMat::zeros(COUNTS[3], 7);
        for a in 0..7 {
            let mut alpha = PForm::zero(1);
            alpha.coeffs_mut()[a] = 1.0;
            let col = self.embed_1_into_3(&alpha);
            for i in 0..COUNTS[3] {
                e.set(i, a, col.coeffs()[i]);
            }
        }
        e
    }

    /// Solve `embed_1_into_3(a) ~ gamma` for the 1-form `a` in the induced
    /// metric (exact when gamma lies in the 7-part).
    pub fn invert_embedding_3(&self, gamma: &PForm) -> PForm {
        // <star(e^a ^ s), gamma> vol = (e^a ^ s) ^ gamma, so the normal
        // equations need only wedges and the embedding Gram matrix.
        let e = self.embedding_matrix();
        let gram3 = self.metric.gram(3);
        let weighted = gram3.matmul(&e);
        let ata = e.transpose().matmul(&weighted);
        let gvec: Vec<f64> = gamma.coeffs().to_vec();
        let atb = weighted.transpose().matvec(&gvec);
        let lu = crate::linalg::Lu::new(&ata).expect("embedding Gram is invertible");
        let sol = lu.solve(&atb);
        let mut alpha = PForm::zero(1);
        alpha.coeffs_mut().copy_from_slice(&sol);
        alpha
    }

    /// Split a 3-form into its 1-, 7- and 27-dimensional parts.
    pub fn project_3(&self, gamma: &PForm) -> (PForm, PForm, PForm) {
        assert_eq!(gamma.degree(), 3);
        let ss = self
            .metric
            .inner(&self.sigma, &self.sigma)
            .expect("degree 3");
        let gs = self.metric.inner(gamma, &self.sigma).expect("degree 3");
        let g1 = self.sigma.scaled(gs / ss);
        let rest = gamma.sub(&g1);
        let alpha = self.invert_embedding_3(&rest);
        let g7 = self.embed_1_into_3(&alpha);
        let g27 = rest.sub(&g7);
        (g1, g7, g27)
    }

    /// Split a 4-form through the star involution.
    pub fn project_4(&self, w: &PForm) -> (PForm, PForm, PForm) {
        assert_eq!(w.degree(), 4);
        let (a, b, c) = self.project_3(&self.metric.star(w));
        (
            self.metric.star(&a),
            self.metric.star(&b),
            self.metric.star(&c),
        )
    }

    /// Split a 5-form through the star involution.
    pub fn project_5(&self, w: &PForm) -> (PForm, PForm) {
        assert_eq!(w.degree(), 5);
        let (a, b) = self.project_2(&self.metric.star(w));
        (self.metric.star(&a), self.metric.star(&b))
    }

    /// Residual of membership in the 27-part: the two wedge conditions
    /// `gamma ^ s = 0` and `gamma ^ star(s) = 0`, relative to |gamma|.
    pub fn residual_27(&self, gamma: &PForm) -> f64 {
        let ws = gamma.wedge(&self.sigma).expect("3 wedge 3").coeff_norm();
        let wd = gamma
            .wedge(&self.star_sigma)
            .expect("3 wedge 4")
            .coeff_norm();
        let scale = gamma.coeff_norm().max(1e-300);
        libm::sqrt(ws * ws + wd * wd) / scale
    }

    /// Residual of membership in the 14-part of the 2-forms.
    pub fn residual_14(&self, beta: &PForm) -> f64 {
        let (b7, _) = self.project_2(beta);
        b7.coeff_norm() / beta.coeff_norm().max(1e-300)
    }
}

/// Spec-level entry point: split a 2-form under the structure `sigma`.
pub fn project_2forms(sigma: &PForm, beta: &PForm) -> Result<(PForm, PForm), G2Error> {
    Ok(G2Frame::new(sigma)?.project_2(beta))
}

/// Spec-level entry point: split a 3-form under the structure `sigma`.
pub fn project_3forms(sigma: &PForm, gamma: &PForm) -> Result<(PForm, PForm, PForm), G2Error> {
    Ok(G2Frame::new(sigma)?.project_3(gamma))
}
