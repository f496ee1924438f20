//! Constant-coefficient alternating forms on R^7.

use crate::basis::{self, COUNTS, DIM, INDEX_OF, MASKS, MAX_COMPS};
use crate::error::G2Error;
use crate::linalg::Mat7;

/// A degree-p form stored densely over the lexicographic multi-index basis.
/// The backing array is fixed-size; only the first `C(7, degree)` entries
/// are meaningful.
#[derive(Clone, Copy, Debug)]
pub struct PForm {
    degree: u8,
    coeffs: [f64; MAX_COMPS],
}

impl PForm {
    pub fn zero(degree: usize) -> Self {
        assert!(degree <= DIM);
        Self {
            degree: degree as u8,
            coeffs: [0.0; MAX_COMPS],
        }
    }

    pub fn from_coeffs(degree: usize, coeffs: &[f64]) -> Self {
        assert_eq!(coeffs.len(), COUNTS[degree]);
        let mut f = Self::zero(degree);
        f.coeffs[..coeffs.len()].copy_from_slice(coeffs);
        f
    }

    pub fn scalar(value: f64) -> Self {
        let mut f = Self::zero(0);
        f.coeffs[0] = value;
        f
    }

    /// Basis form `e^{axes}`, axes 1-based and strictly increasing.
    pub fn basis(axes: &[usize]) -> Self {
        let mut mask = 0u8;
        for &a in axes {
            assert!((1..=DIM).contains(&a));
            mask |= 1 << (a - 1);
        }
        assert_eq!(mask.count_ones() as usize, axes.len(), "repeated axis");
        let p = axes.len();
        let mut f = Self::zero(p);
        f.coeffs[INDEX_OF[p][mask as usize] as usize] = 1.0;
        f
    }

    #[inline]
    pub fn degree(&self) -> usize {
        self.degree as usize
    }

    #[inline]
    pub fn len(&self) -> usize {
        COUNTS[self.degree as usize]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs[..self.len()]
    }

    #[inline]
    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        let n = self.len();
        &mut self.coeffs[..n]
    }

    /// Coefficient on `e^{axes}` (1-based increasing axes).
    pub fn coeff(&self, axes: &[usize]) -> f64 {
        let mut mask = 0u8;
        for &a in axes {
            mask |= 1 << (a - 1);
        }
        self.coeffs[INDEX_OF[self.degree()][mask as usize] as usize]
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = *self;
        for v in out.coeffs_mut() {
            *v *= s;
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.degree, other.degree);
        let mut out = *self;
        for (a, b) in out.coeffs_mut().iter_mut().zip(other.coeffs()) {
            *a += *b;
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.degree, other.degree);
        let mut out = *self;
        for (a, b) in out.coeffs_mut().iter_mut().zip(other.coeffs()) {
            *a -= *b;
        }
        out
    }

    pub fn axpy(&mut self, s: f64, other: &Self) {
        assert_eq!(self.degree, other.degree);
        for (a, b) in self.coeffs_mut().iter_mut().zip(other.coeffs()) {
            *a += s * *b;
        }
    }

    /// Euclidean norm of the coefficient vector (basis-dependent).
    pub fn coeff_norm(&self) -> f64 {
        libm::sqrt(self.coeffs().iter().map(|v| v * v).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs()
            .iter()
            .fold(0.0f64, |m, v| m.max(libm::fabs(*v)))
    }

    /// Exterior product. Errors when the degrees add past 7.
    pub fn wedge(&self, other: &Self) -> Result<Self, G2Error> {
        let p = self.degree();
        let q = other.degree();
        if p + q > DIM {
            return Err(G2Error::DegreeOverflow { left: p, right: q });
        }
        let mut out = Self::zero(p + q);
        for i in 0..COUNTS[p] {
            let a = self.coeffs[i];
            if a == 0.0 {
                continue;
            }
            let ma = MASKS[p][i];
            for j in 0..COUNTS[q] {
                let b = other.coeffs[j];
                if b == 0.0 {
                    continue;
                }
                let mb = MASKS[q][j];
                if ma & mb != 0 {
                    continue;
                }
                let sign = basis::wedge_sign(ma, mb);
                let slot = INDEX_OF[p + q][(ma | mb) as usize] as usize;
                out.coeffs[slot] += sign * a * b;
            }
        }
        Ok(out)
    }

    /// Interior product `v -| self` for a tangent vector `v` (components in
    /// the standard frame). Errors on degree zero.
    pub fn interior(&self, v: &[f64; 7]) -> Result<Self, G2Error> {
        let p = self.degree();
        if p == 0 {
            return Err(G2Error::InteriorOfScalar);
        }
        let mut out = Self::zero(p - 1);
        for i in 0..COUNTS[p] {
            let a = self.coeffs[i];
            if a == 0.0 {
                continue;
            }
            let mask = MASKS[p][i];
            for k in basis::axes_of(mask) {
                let vk = v[k];
                if vk == 0.0 {
                    continue;
                }
                let sign = basis::interior_sign(mask, k);
                let slot = INDEX_OF[p - 1][(mask & !(1 << k)) as usize] as usize;
                out.coeffs[slot] += sign * vk * a;
            }
        }
        Ok(out)
    }

    /// Pullback along the linear map `a`: `(a^* w)(u, ...) = w(a u, ...)`.
    pub fn pullback(&self, a: &Mat7) -> Self {
        let p = self.degree();
        if p == 0 {
            return *self;
        }
        let mut out = Self::zero(p);
        for jslot in 0..COUNTS[p] {
            let w = self.coeffs[jslot];
            if w == 0.0 {
                continue;
            }
            let jmask = MASKS[p][jslot];
            let jaxes: [usize; 7] = collect_axes(jmask);
            for islot in 0..COUNTS[p] {
                let imask = MASKS[p][islot];
                let iaxes: [usize; 7] = collect_axes(imask);
                out.coeffs[islot] += w * minor(a, &jaxes[..p], &iaxes[..p]);
            }
        }
        out
    }
}

fn collect_axes(mask: u8) -> [usize; 7] {
    let mut out = [0usize; 7];
    let mut n = 0;
    for k in basis::axes_of(mask) {
        out[n] = k;
        n += 1;
    }
    out
}

/// Determinant of the submatrix `a[rows, cols]`, sizes up to 7.
pub fn minor(a: &Mat7, rows: &[usize], cols: &[usize]) -> f64 {
    debug_assert_eq!(rows.len(), cols.len());
    match rows.len() {
        0 => 1.0,
        1 => a[rows[0]][cols[0]],
        2 => a[rows[0]][cols[0]] * a[rows[1]][cols[1]] - a[rows[0]][cols[1]] * a[rows[1]][cols[0]],
        3 => {
            let m = |i: usize, j: usize| a[rows[i]][cols[j]];
            m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1))
                - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
                + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0))
        }
        n => {
            // Cofactor expansion along the first row; n <= 7 so this stays cheap.
            let mut det = 0.0;
            let mut sub_rows = [0usize; 7];
            sub_rows[..n - 1].copy_from_slice(&rows[1..]);
            let mut sub_cols = [0usize; 7];
            let mut sign = 1.0;
            for skip in 0..n {
                let c = a[rows[0]][cols[skip]];
                if c != 0.0 {
                    let mut idx = 0;
                    for (j, &cj) in cols.iter().enumerate() {
                        if j != skip {
                            sub_cols[idx] = cj;
                            idx += 1;
                        }
                    }
                    det += sign * c * minor(a, &sub_rows[..n - 1], &sub_cols[..n - 1]);
                }
                sign = -sign;
            }
            det
        }
    }
}

/// Plain-text dump: the degree, then the coefficients in lexicographic
/// multi-index order.
impl core::fmt::Display for PForm {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}", self.degree)?;
        for v in self.coeffs() {
            write!(f, " {v}")?;
        }
        Ok(())
    }
}

/// The standard definite 3-form: seven unit coefficients.
pub fn standard_phi() -> PForm {
    let mut phi = PForm::zero(3);
    let terms: [(&[usize], f64); 7] = [
        (&[1, 2, 3], 1.0),
        (&[1, 4, 5], 1.0),
        (&[1, 6, 7], 1.0),
        (&[2, 4, 6], 1.0),
        (&[2, 5, 7], -1.0),
        (&[3, 4, 7], -1.0),
        (&[3, 5, 6], -1.0),
    ];
    for (axes, sign) in terms {
        let mut mask = 0u8;
        for &a in axes {
            mask |= 1 << (a - 1);
        }
        phi.coeffs_mut()[INDEX_OF[3][mask as usize] as usize] = sign;
    }
    phi
}
