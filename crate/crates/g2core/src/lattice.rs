//! Discretized differential forms on a flat periodic 7-torus.
//!
//! Fields vary only along a small set of active axes (at most three) and are
//! constant along the rest; a full 7-axis grid is far beyond desk scale and
//! every identity exercised here is pointwise or involves derivatives along
//! active axes only. Derivatives are Fourier-spectral (periodic smooth data),
//! with 4th-order central differences available as a cross-check scheme.

use alloc::vec;
use alloc::vec::Vec;

use crate::basis::{self, COUNTS, DIM, INDEX_OF, MASKS};
use crate::error::G2Error;
use crate::metric::{metric_from_sigma, Metric};
use crate::pform::PForm;
use crate::proj::G2Frame;
use crate::rng::SplitMix64;

pub const TAU: f64 = 6.283_185_307_179_586_5;

/// Geometry of the reduced lattice: which coordinate axes vary, how many
/// samples per axis, and the period of each active axis.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeSpec {
    active_axes: Vec<u8>,
    n: usize,
    periods: Vec<f64>,
}

impl LatticeSpec {
    /// `active_axes` are 1-based, strictly increasing, at most three of them;
    /// `n` must be even and at least 8 when any axis is active.
    pub fn new(active_axes: &[u8], n: usize, periods: &[f64]) -> Result<Self, G2Error> {
        if active_axes.len() > 3 {
            return Err(G2Error::BadLattice("more than three active axes"));
        }
        for w in active_axes.windows(2) {
            if w[0] >= w[1] {
                return Err(G2Error::BadLattice("axes must be strictly increasing"));
            }
        }
        if active_axes.iter().any(|&a| a == 0 || a > 7) {
            return Err(G2Error::BadLattice("axes must lie in 1..=7"));
        }
        if !active_axes.is_empty() && (n < 8 || n % 2 != 0) {
            return Err(G2Error::BadLattice(
                "resolution must be even and at least 8",
            ));
        }
        if periods.len() != active_axes.len() || periods.iter().any(|&p| !(p > 0.0)) {
            return Err(G2Error::BadLattice(
                "need one positive period per active axis",
            ));
        }
        Ok(Self {
            active_axes: active_axes.to_vec(),
            n,
            periods: periods.to_vec(),
        })
    }

    /// Unit torus (period 2 pi on every active axis).
    pub fn unit(active_axes: &[u8], n: usize) -> Result<Self, G2Error> {
        let periods = vec![TAU; active_axes.len()];
        Self::new(active_axes, n, &periods)
    }

    pub fn active_axes(&self) -> &[u8] {
        &self.active_axes
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    pub fn rank(&self) -> usize {
        self.active_axes.len()
    }

    pub fn sites(&self) -> usize {
        self.n.pow(self.rank() as u32)
    }

    /// Coordinate volume of the full 7-torus (inactive axes keep period 2 pi).
    pub fn covolume(&self) -> f64 {
        let mut v = 1.0;
        for &p in &self.periods {
            v *= p;
        }
        for _ in self.rank()..DIM {
            v *= TAU;
        }
        v
    }

    pub fn spacing(&self, ai: usize) -> f64 {
        self.periods[ai] / self.n as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.rank()).fold(f64::INFINITY, |m, ai| m.min(self.spacing(ai)))
    }

    /// Grid indices of a site (last active axis fastest).
    pub fn indices(&self, site: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        let mut rest = site;
        for ai in (0..self.rank()).rev() {
            idx[ai] = rest % self.n;
            rest /= self.n;
        }
        idx
    }

    pub fn site_of(&self, idx: &[usize]) -> usize {
        let mut s = 0;
        for ai in 0..self.rank() {
            s = s * self.n + (idx[ai] % self.n);
        }
        s
    }

    /// Embedding coordinates of a site in R^7 (zero on inactive axes).
    pub fn point(&self, site: usize) -> [f64; 7] {
        let idx = self.indices(site);
        let mut x = [0.0; 7];
        for ai in 0..self.rank() {
            x[(self.active_axes[ai] - 1) as usize] = idx[ai] as f64 * self.spacing(ai);
        }
        x
    }

    /// Spectral differentiation matrix along active axis `ai` (dense n x n).
    pub fn spectral_derivative_matrix(&self, ai: usize) -> Vec<f64> {
        let n = self.n;
        let scale = TAU / self.periods[ai];
        let mut d = vec![0.0; n * n];
        for j in 0..n {
            for l in 0..n {
                if j == l {
                    continue;
                }
                let diff = j as isize - l as isize;
                let sign = if diff.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                let angle = diff as f64 * core::f64::consts::PI / n as f64;
                d[j * n + l] = scale * 0.5 * sign / libm::tan(angle);
            }
        }
        d
    }

    fn fd4_derivative_matrix(&self, ai: usize) -> Vec<f64> {
        let n = self.n;
        let h = self.spacing(ai);
        let mut d = vec![0.0; n * n];
        for j in 0..n {
            d[j * n + (j + 1) % n] = 8.0 / (12.0 * h);
            d[j * n + (j + n - 1) % n] = -8.0 / (12.0 * h);
            d[j * n + (j + 2) % n] = -1.0 / (12.0 * h);
            d[j * n + (j + n - 2) % n] = 1.0 / (12.0 * h);
        }
        d
    }
}

/// Differentiation scheme for lattice derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiffScheme {
    Spectral,
    Fd4,
}

/// Interpolation rule for off-lattice evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InterpMethod {
    /// Trigonometric interpolation; exact at sites and for band-limited data.
    Fourier,
    /// Periodic Catmull-Rom, cheaper and local.
    Cubic,
}

/// A lattice of degree-p coefficient vectors, site-major with the
/// lexicographic multi-index layout within each site.
#[derive(Clone, Debug)]
pub struct FormField {
    pub spec: LatticeSpec,
    degree: u8,
    data: Vec<f64>,
}

impl FormField {
    pub fn zeros(spec: &LatticeSpec, degree: usize) -> Self {
        assert!(degree <= DIM);
        let len = spec.sites() * COUNTS[degree];
        Self {
            spec: spec.clone(),
            degree: degree as u8,
            data: vec![0.0; len],
        }
    }

    pub fn constant(spec: &LatticeSpec, value: &PForm) -> Self {
        let mut f = Self::zeros(spec, value.degree());
        for site in 0..spec.sites() {
            f.set_form(site, value);
        }
        f
    }

    pub fn from_fn(
        spec: &LatticeSpec,
        degree: usize,
        mut f: impl FnMut(&[f64; 7]) -> PForm,
    ) -> Self {
        let mut out = Self::zeros(spec, degree);
        for site in 0..spec.sites() {
            let x = spec.point(site);
            let v = f(&x);
            assert_eq!(v.degree(), degree);
            out.set_form(site, &v);
        }
        out
    }

    pub fn degree(&self) -> usize {
        self.degree as usize
    }

    pub fn comps(&self) -> usize {
        COUNTS[self.degree()]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn form(&self, site: usize) -> PForm {
        let c = self.comps();
        PForm::from_coeffs(self.degree(), &self.data[site * c..(site + 1) * c])
    }

    pub fn set_form(&mut self, site: usize, value: &PForm) {
        let c = self.comps();
        self.data[site * c..(site + 1) * c].copy_from_slice(value.coeffs());
    }

    pub fn map(&self, mut f: impl FnMut(usize, &PForm) -> PForm) -> Self {
        let mut first = true;
        let mut out: Option<Self> = None;
        for site in 0..self.spec.sites() {
            let v = f(site, &self.form(site));
            if first {
                out = Some(Self::zeros(&self.spec, v.degree()));
                first = false;
            }
            out.as_mut().unwrap().set_form(site, &v);
        }
        out.unwrap_or_else(|| Self::zeros(&self.spec, self.degree()))
    }

    pub fn zip_map(
        &self,
        other: &Self,
        mut f: impl FnMut(&PForm, &PForm) -> PForm,
    ) -> Result<Self, G2Error> {
        if self.spec != other.spec {
            return Err(G2Error::LatticeMismatch);
        }
        let mut out: Option<Self> = None;
        for site in 0..self.spec.sites() {
            let v = f(&self.form(site), &other.form(site));
            if out.is_none() {
                out = Some(Self::zeros(&self.spec, v.degree()));
            }
            out.as_mut().unwrap().set_form(site, &v);
        }
        Ok(out.unwrap_or_else(|| Self::zeros(&self.spec, self.degree())))
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= s;
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.spec, other.spec);
        assert_eq!(self.degree, other.degree);
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.spec, other.spec);
        assert_eq!(self.degree, other.degree);
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= *b;
        }
        out
    }

    pub fn axpy(&mut self, s: f64, other: &Self) {
        assert_eq!(self.spec, other.spec);
        assert_eq!(self.degree, other.degree);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * *b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Mean coefficient vector over sites: the zero Fourier mode, whose
    /// entries are the cohomology periods when the field is closed.
    pub fn zero_mode(&self) -> PForm {
        let mut mean = PForm::zero(self.degree());
        let sites = self.spec.sites() as f64;
        for site in 0..self.spec.sites() {
            mean.axpy(1.0 / sites, &self.form(site));
        }
        mean
    }

    /// Derivative of every component along active axis `ai`.
    fn axis_derivative(&self, ai: usize, scheme: DiffScheme) -> Self {
        let d = match scheme {
            DiffScheme::Spectral => self.spec.spectral_derivative_matrix(ai),
            DiffScheme::Fd4 => self.spec.fd4_derivative_matrix(ai),
        };
        let mut out = Self::zeros(&self.spec, self.degree());
        apply_line_operator(&self.spec, &self.data, self.comps(), ai, &d, &mut out.data);
        out
    }

    /// Exterior derivative with the chosen differentiation scheme.
    pub fn exterior_derivative_with(&self, scheme: DiffScheme) -> Result<Self, G2Error> {
        let p = self.degree();
        if p == DIM {
            return Err(G2Error::TopDegreeDerivative);
        }
        let mut out = Self::zeros(&self.spec, p + 1);
        let out_comps = COUNTS[p + 1];
        for ai in 0..self.spec.rank() {
            let axis_bit = 1u8 << (self.spec.active_axes[ai] - 1);
            let da = self.axis_derivative(ai, scheme);
            for slot in 0..COUNTS[p] {
                let mask = MASKS[p][slot];
                if mask & axis_bit != 0 {
                    continue;
                }
                let sign = basis::wedge_sign(axis_bit, mask);
                let target = INDEX_OF[p + 1][(mask | axis_bit) as usize] as usize;
                for site in 0..self.spec.sites() {
                    out.data[site * out_comps + target] += sign * da.data[site * COUNTS[p] + slot];
                }
            }
        }
        Ok(out)
    }

    pub fn exterior_derivative(&self) -> Result<Self, G2Error> {
        self.exterior_derivative_with(DiffScheme::Spectral)
    }

    /// Interpolated value at an arbitrary point (periodic wrap).
    pub fn interpolate(&self, point: &[f64; 7], method: InterpMethod) -> PForm {
        let rank = self.spec.rank();
        if rank == 0 {
            return self.form(0);
        }
        let n = self.spec.n;
        // Per-axis weights.
        let mut weights: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for ai in 0..rank {
            let axis = (self.spec.active_axes[ai] - 1) as usize;
            let frac = point[axis] / self.spec.periods[ai];
            weights[ai] = match method {
                InterpMethod::Fourier => fourier_weights(n, frac),
                InterpMethod::Cubic => cubic_weights(n, frac),
            };
        }
        let comps = self.comps();
        let mut acc = vec![0.0; comps];
        // Tensor contraction over all sites; the cubic kernel is sparse and
        // skipped through the zero-weight test.
        for site in 0..self.spec.sites() {
            let idx = self.spec.indices(site);
            let mut w = 1.0;
            for ai in 0..rank {
                w *= weights[ai][idx[ai]];
            }
            if w == 0.0 {
                continue;
            }
            let base = site * comps;
            for (c, a) in acc.iter_mut().enumerate() {
                *a += w * self.data[base + c];
            }
        }
        PForm::from_coeffs(self.degree(), &acc)
    }

    /// Plain trapezoidal (= exact periodic) quadrature of a 7-form or of a
    /// scalar density against the coordinate volume.
    pub fn integrate(&self) -> f64 {
        assert!(
            self.degree() == 0 || self.degree() == DIM,
            "integrate expects a 0- or 7-form field"
        );
        let mut mean = 0.0;
        let sites = self.spec.sites() as f64;
        for site in 0..self.spec.sites() {
            mean += self.data[site * self.comps()];
        }
        mean / sites * self.spec.covolume()
    }
}

/// Spectral derivative of a packed multi-component array along active axis
/// `ai`; the layout is site-major with `comps` values per site, matching
/// `FormField` but usable for metric and displacement blocks too.
pub fn derive_packed(spec: &LatticeSpec, data: &[f64], comps: usize, ai: usize) -> Vec<f64> {
    let d = spec.spectral_derivative_matrix(ai);
    let mut out = vec![0.0; data.len()];
    apply_line_operator(spec, data, comps, ai, &d, &mut out);
    out
}

/// Apply a dense n x n line operator along active axis `ai` to every
/// component of a site-major block.
fn apply_line_operator(
    spec: &LatticeSpec,
    data: &[f64],
    comps: usize,
    ai: usize,
    d: &[f64],
    out: &mut [f64],
) {
    let n = spec.resolution();
    let rank = spec.rank();
    // Stride between consecutive grid indices along axis ai.
    let mut stride = 1usize;
    for _ in ai + 1..rank {
        stride *= n;
    }
    let lines = spec.sites() / n;
    let mut gathered = vec![0.0; n];
    for line in 0..lines {
        // Base site of this line: the axis index re-inserted at position ai.
        let outer = line / stride;
        let inner = line % stride;
        let base = outer * stride * n + inner;
        for comp in 0..comps {
            for j in 0..n {
                gathered[j] = data[(base + j * stride) * comps + comp];
            }
            for j in 0..n {
                let row = &d[j * n..(j + 1) * n];
                let mut acc = 0.0;
                for l in 0..n {
                    acc += row[l] * gathered[l];
                }
                out[(base + j * stride) * comps + comp] = acc;
            }
        }
    }
}

/// Periodic trigonometric interpolation weights for fraction `frac` in [0,1).
fn fourier_weights(n: usize, frac: f64) -> Vec<f64> {
    let mut w = vec![0.0; n];
    for (j, wj) in w.iter_mut().enumerate() {
        let theta = TAU * (frac - j as f64 / n as f64);
        // Wrap to (-pi, pi].
        let wrapped = theta - TAU * libm::round(theta / TAU);
        *wj = if libm::fabs(wrapped) < 1e-12 {
            1.0
        } else {
            libm::sin(n as f64 * wrapped / 2.0) / (n as f64 * libm::tan(wrapped / 2.0))
        };
    }
    w
}

/// Periodic Catmull-Rom weights.
fn cubic_weights(n: usize, frac: f64) -> Vec<f64> {
    let mut w = vec![0.0; n];
    let pos = (frac - libm::floor(frac)) * n as f64;
    let i0 = libm::floor(pos) as isize;
    let t = pos - i0 as f64;
    let coeffs = [
        -0.5 * t * (1.0 - t) * (1.0 - t),
        1.0 + t * t * (1.5 * t - 2.5),
        t * (0.5 + t * (2.0 - 1.5 * t)),
        0.5 * t * t * (t - 1.0),
    ];
    for (off, c) in coeffs.iter().enumerate() {
        let j = (i0 - 1 + off as isize).rem_euclid(n as isize) as usize;
        w[j] += c;
    }
    w
}

/// Per-site structure frames of a definite 3-form field.
pub struct FrameField {
    pub spec: LatticeSpec,
    pub frames: Vec<G2Frame>,
}

impl FrameField {
    pub fn new(sigma: &FormField) -> Result<Self, G2Error> {
        assert_eq!(sigma.degree(), 3);
        let mut frames = Vec::with_capacity(sigma.spec.sites());
        for site in 0..sigma.spec.sites() {
            match G2Frame::new(&sigma.form(site)) {
                Ok(f) => frames.push(f),
                Err(G2Error::NotDefinite { det, min_eig }) => {
                    return Err(G2Error::NotDefiniteAt { site, det, min_eig })
                }
                Err(e) => return Err(e),
            }
        }
        Ok(Self {
            spec: sigma.spec.clone(),
            frames,
        })
    }

    pub fn metric(&self, site: usize) -> &Metric {
        &self.frames[site].metric
    }

    pub fn min_metric_eigenvalue(&self) -> f64 {
        self.frames
            .iter()
            .fold(f64::INFINITY, |m, f| m.min(f.metric.min_eigenvalue()))
    }

    pub fn max_inverse_metric_eigenvalue(&self) -> f64 {
        self.frames.iter().fold(0.0f64, |m, f| {
            let (vals, _) = crate::linalg::sym_eigen(&crate::linalg::mat7_to_dmat(&f.metric.g_inv));
            m.max(vals[vals.len() - 1])
        })
    }

    /// Star every site of a field.
    pub fn star_field(&self, f: &FormField) -> Result<FormField, G2Error> {
        if f.spec != self.spec {
            return Err(G2Error::LatticeMismatch);
        }
        let mut out = FormField::zeros(&self.spec, DIM - f.degree());
        for site in 0..self.spec.sites() {
            out.set_form(site, &self.frames[site].metric.star(&f.form(site)));
        }
        Ok(out)
    }

    /// Codifferential: `(-1)^p star d star` on p-forms, the formal adjoint
    /// of the exterior derivative for this metric field.
    pub fn codifferential(&self, f: &FormField) -> Result<FormField, G2Error> {
        let p = f.degree();
        if p == 0 {
            return Err(G2Error::CodifferentialOfScalar);
        }
        let starred = self.star_field(f)?;
        let dstar = starred.exterior_derivative()?;
        let back = self.star_field(&dstar)?;
        let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
        Ok(back.scaled(sign))
    }

    /// L2 inner product of equal-degree fields under the metric volume.
    pub fn l2_inner(&self, a: &FormField, b: &FormField) -> Result<f64, G2Error> {
        if a.spec != self.spec || b.spec != self.spec {
            return Err(G2Error::LatticeMismatch);
        }
        let mut mean = 0.0;
        for site in 0..self.spec.sites() {
            let m = &self.frames[site].metric;
            mean += m.inner(&a.form(site), &b.form(site))? * m.vol_coeff;
        }
        Ok(mean / self.spec.sites() as f64 * self.spec.covolume())
    }

    pub fn l2_norm(&self, a: &FormField) -> Result<f64, G2Error> {
        Ok(libm::sqrt(self.l2_inner(a, a)?.max(0.0)))
    }
}

/// Metric field shortcut when only metrics are needed.
pub fn metric_field(sigma: &FormField) -> Result<Vec<Metric>, G2Error> {
    let mut out = Vec::with_capacity(sigma.spec.sites());
    for site in 0..sigma.spec.sites() {
        match metric_from_sigma(&sigma.form(site)) {
            Ok(m) => out.push(m),
            Err(G2Error::NotDefinite { det, min_eig }) => {
                return Err(G2Error::NotDefiniteAt { site, det, min_eig })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Random band-limited 2-form potential; each component is a short sum of
/// random Fourier modes with wavenumbers bounded by `max_mode`.
pub fn random_band_limited(
    spec: &LatticeSpec,
    degree: usize,
    max_mode: i32,
    seed: u64,
) -> FormField {
    let mut rng = SplitMix64::new(seed);
    let rank = spec.rank();
    let comps = COUNTS[degree];
    // Draw the mode table first so the field is deterministic regardless of
    // lattice resolution: (component, modes, amplitude, phase).
    struct Term {
        comp: usize,
        mode: [i32; 3],
        amp: f64,
        phase: f64,
    }
    let mut terms = Vec::new();
    for comp in 0..comps {
        for _ in 0..3 {
            let mut mode = [0i32; 3];
            let mut nonzero = false;
            for m in mode.iter_mut().take(rank) {
                *m = rng.below((2 * max_mode + 1) as usize) as i32 - max_mode;
                nonzero |= *m != 0;
            }
            let amp = rng.uniform(-1.0, 1.0);
            let phase = rng.uniform(0.0, TAU);
            if nonzero {
                terms.push(Term {
                    comp,
                    mode,
                    amp,
                    phase,
                });
            }
        }
    }
    let mut field = FormField::zeros(spec, degree);
    for site in 0..spec.sites() {
        let idx = spec.indices(site);
        let base = site * comps;
        for t in &terms {
            let mut angle = t.phase;
            for ai in 0..rank {
                angle += TAU * t.mode[ai] as f64 * idx[ai] as f64 / spec.n as f64;
            }
            field.data[base + t.comp] += t.amp * libm::cos(angle);
        }
    }
    field
}

/// Exact (hence closed, zero-mean) random 3-form: the exterior derivative of
/// a random band-limited 2-form, rescaled to sup-norm `epsilon`.
pub fn random_exact_3form(
    spec: &LatticeSpec,
    epsilon: f64,
    max_mode: i32,
    seed: u64,
) -> Result<FormField, G2Error> {
    assert!(epsilon >= 0.0);
    if epsilon == 0.0 || spec.rank() == 0 {
        return Ok(FormField::zeros(spec, 3));
    }
    let beta = random_band_limited(spec, 2, max_mode, seed);
    let theta = beta.exterior_derivative()?;
    let sup = theta.max_abs();
    if sup == 0.0 {
        return Ok(theta);
    }
    Ok(theta.scaled(epsilon / sup))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pform::standard_phi;

    fn spec2() -> LatticeSpec {
        LatticeSpec::unit(&[1, 2], 16).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(LatticeSpec::unit(&[1, 2, 3, 4], 16).is_err());
        assert!(LatticeSpec::unit(&[2, 1], 16).is_err());
        assert!(LatticeSpec::unit(&[0], 16).is_err());
        assert!(LatticeSpec::unit(&[1], 7).is_err());
        assert!(LatticeSpec::unit(&[1], 6).is_err());
        assert!(LatticeSpec::new(&[1], 16, &[0.0]).is_err());
        assert!(LatticeSpec::unit(&[], 1).is_ok());
        let s = spec2();
        assert_eq!(s.sites(), 256);
        assert_eq!(s.rank(), 2);
    }

    #[test]
    fn site_indexing_round_trips() {
        let s = LatticeSpec::unit(&[1, 3, 6], 8).unwrap();
        for site in 0..s.sites() {
            let idx = s.indices(site);
            assert_eq!(s.site_of(&idx[..3]), site);
        }
        let x = s.point(s.site_of(&[1, 2, 3]));
        let h = TAU / 8.0;
        assert!((x[0] - h).abs() < 1e-15);
        assert!((x[2] - 2.0 * h).abs() < 1e-15);
        assert!((x[5] - 3.0 * h).abs() < 1e-15);
        assert_eq!(x[1], 0.0);
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let s = spec2();
        let f = FormField::constant(&s, &standard_phi());
        let d = f.exterior_derivative().unwrap();
        assert_eq!(d.degree(), 4);
        assert!(d.max_abs() < 1e-14);
    }

    #[test]
    fn single_mode_derivative_is_exact() {
        // f = sin(x1) e^2 -> df = cos(x1) e^{12}.
        let s = spec2();
        let f = FormField::from_fn(&s, 1, |x| {
            let mut a = PForm::zero(1);
            a.coeffs_mut()[1] = libm::sin(x[0]);
            a
        });
        let d = f.exterior_derivative().unwrap();
        for site in 0..s.sites() {
            let x = s.point(site);
            let got = d.form(site).coeff(&[1, 2]);
            assert!((got - libm::cos(x[0])).abs() < 1e-12);
        }
        // The same with 4th-order differences is only approximately right.
        let d4 = f.exterior_derivative_with(DiffScheme::Fd4).unwrap();
        let mut err4 = 0.0f64;
        for site in 0..s.sites() {
            let x = s.point(site);
            err4 = err4.max((d4.form(site).coeff(&[1, 2]) - libm::cos(x[0])).abs());
        }
        assert!(err4 > 1e-9 && err4 < 1e-3, "fd4 error {err4}");
    }

    #[test]
    fn d_squared_vanishes_on_random_fields() {
        let s = spec2();
        let beta = random_band_limited(&s, 2, 3, 99);
        let d1 = beta.exterior_derivative().unwrap();
        let d2 = d1.exterior_derivative().unwrap();
        let scale = d1.max_abs().max(1.0);
        assert!(
            d2.max_abs() / scale < 1e-10,
            "d^2 residual {}",
            d2.max_abs() / scale
        );
    }

    #[test]
    fn stokes_on_the_torus() {
        let s = spec2();
        let six = random_band_limited(&s, 6, 2, 7);
        let d = six.exterior_derivative().unwrap();
        let total = d.integrate();
        assert!(total.abs() < 1e-12 * s.covolume());
    }

    #[test]
    fn integrate_examples() {
        let s = spec2();
        // Volume form of the standard structure on the unit torus.
        let vol = FormField::from_fn(&s, 7, |_| {
            let mut v = PForm::zero(7);
            v.coeffs_mut()[0] = 1.0;
            v
        });
        let want = libm::pow(TAU, 7.0);
        assert!((vol.integrate() - want).abs() < 1e-6, "{}", vol.integrate());
        // sin(x1) integrates to zero by periodicity.
        let sf = FormField::from_fn(&s, 0, |x| PForm::scalar(libm::sin(x[0])));
        assert!(sf.integrate().abs() < 1e-10);
        // Band-limited scalar: integral equals the analytic zero-mode value.
        let f = FormField::from_fn(&s, 0, |x| {
            PForm::scalar(0.75 + libm::cos(x[0]) * libm::sin(2.0 * x[1]))
        });
        assert!((f.integrate() - 0.75 * s.covolume()).abs() < 1e-12 * s.covolume());
    }

    #[test]
    fn exact_forms_have_zero_mean_and_are_closed() {
        let s = spec2();
        let theta = random_exact_3form(&s, 1e-2, 2, 5).unwrap();
        assert!((theta.max_abs() - 1e-2).abs() < 1e-15);
        let d = theta.exterior_derivative().unwrap();
        assert!(d.max_abs() < 1e-12);
        assert!(theta.zero_mode().max_abs() < 1e-15);
        // Reproducible per seed, different across seeds.
        let again = random_exact_3form(&s, 1e-2, 2, 5).unwrap();
        assert_eq!(theta.data(), again.data());
        let other = random_exact_3form(&s, 1e-2, 2, 6).unwrap();
        assert!(other.sub(&theta).max_abs() > 1e-6);
        // Zero amplitude short-circuits.
        assert_eq!(random_exact_3form(&s, 0.0, 2, 5).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn interpolation_reproduces_band_limited_data() {
        let s = spec2();
        let f = FormField::from_fn(&s, 0, |x| {
            PForm::scalar(libm::sin(x[0]) + 0.3 * libm::cos(2.0 * x[1] - 1.0))
        });
        // Exact at lattice sites.
        for site in [0usize, 5, 100, 255] {
            let x = s.point(site);
            let v = f.interpolate(&x, InterpMethod::Fourier);
            assert!((v.coeffs()[0] - f.form(site).coeffs()[0]).abs() < 1e-12);
        }
        // Analytic value off-lattice.
        let x = [0.37, 1.91, 0.0, 0.0, 0.0, 0.0, 0.0];
        let want = libm::sin(0.37) + 0.3 * libm::cos(2.0 * 1.91 - 1.0);
        let got = f.interpolate(&x, InterpMethod::Fourier).coeffs()[0];
        assert!(
            (got - want).abs() < 1e-10,
            "fourier err {}",
            (got - want).abs()
        );
        let got_cubic = f.interpolate(&x, InterpMethod::Cubic).coeffs()[0];
        assert!(
            (got_cubic - want).abs() < 2e-2,
            "cubic err {}",
            (got_cubic - want).abs()
        );
        // Periodic wrap: shifting by a period changes nothing.
        let y = [0.37 + TAU, 1.91 - TAU, 0.0, 0.0, 0.0, 0.0, 0.0];
        let wrapped = f.interpolate(&y, InterpMethod::Fourier).coeffs()[0];
        assert!((wrapped - got).abs() < 1e-10);
        // Constant fields interpolate to the constant anywhere.
        let c = FormField::constant(&s, &standard_phi());
        let v = c.interpolate(
            &[0.123, 4.56, 0.0, 0.0, 0.0, 0.0, 0.0],
            InterpMethod::Fourier,
        );
        assert!(v.sub(&standard_phi()).max_abs() < 1e-12);
    }

    #[test]
    fn adjointness_of_codifferential() {
        // <d f, h> = <f, delta h> with the metric field of a non-flat
        // definite structure.
        let s = spec2();
        let theta = random_exact_3form(&s, 5e-3, 2, 11).unwrap();
        let sigma = FormField::constant(&s, &standard_phi()).add(&theta);
        let frames = FrameField::new(&sigma).unwrap();
        let f = random_band_limited(&s, 1, 2, 21);
        let h = random_band_limited(&s, 2, 2, 22);
        let df = f.exterior_derivative().unwrap();
        let dh = frames.codifferential(&h).unwrap();
        let lhs = frames.l2_inner(&df, &h).unwrap();
        let rhs = frames.l2_inner(&f, &dh).unwrap();
        let scale = lhs.abs().max(rhs.abs()).max(1e-300);
        assert!(
            (lhs - rhs).abs() / scale < 1e-8,
            "adjointness residual {}",
            (lhs - rhs).abs() / scale
        );
    }

    #[test]
    fn flat_codifferential_single_mode() {
        // delta(cos(x1) e^1) = sin(x1) with the flat metric: the adjoint
        // convention fixes the sign as minus the coefficient divergence.
        let s = spec2();
        let f = FormField::from_fn(&s, 1, |x| {
            let mut a = PForm::zero(1);
            a.coeffs_mut()[0] = libm::cos(x[0]);
            a
        });
        let sigma = FormField::constant(&s, &standard_phi());
        let frames = FrameField::new(&sigma).unwrap();
        let del = frames.codifferential(&f).unwrap();
        assert_eq!(del.degree(), 0);
        for site in 0..s.sites() {
            let x = s.point(site);
            assert!((del.form(site).coeffs()[0] - libm::sin(x[0])).abs() < 1e-11);
        }
        assert!(matches!(
            frames.codifferential(&FormField::zeros(&s, 0)),
            Err(G2Error::CodifferentialOfScalar)
        ));
    }

    #[test]
    fn constant_fields_commute_with_pointwise_algebra() {
        let s = LatticeSpec::unit(&[1], 8).unwrap();
        let phi = standard_phi();
        let f = FormField::constant(&s, &phi);
        let frames = FrameField::new(&f).unwrap();
        let starred = frames.star_field(&f).unwrap();
        let pointwise = crate::metric::metric_from_sigma(&phi).unwrap().star(&phi);
        for site in 0..s.sites() {
            assert!(starred.form(site).sub(&pointwise).max_abs() < 1e-15);
        }
    }

    #[test]
    fn three_axis_lattice_calculus() {
        let s = LatticeSpec::unit(&[1, 4, 7], 8).unwrap();
        assert_eq!(s.sites(), 512);
        // Mixed partials across all three axes.
        let f = FormField::from_fn(&s, 0, |x| {
            PForm::scalar(libm::sin(x[0]) * libm::cos(x[3]) + libm::sin(2.0 * x[6]))
        });
        let df = f.exterior_derivative().unwrap();
        for site in [0usize, 19, 255, 511] {
            let x = s.point(site);
            let v = df.form(site);
            assert!((v.coeffs()[0] - libm::cos(x[0]) * libm::cos(x[3])).abs() < 1e-11);
            assert!((v.coeffs()[3] + libm::sin(x[0]) * libm::sin(x[3])).abs() < 1e-11);
            assert!((v.coeffs()[6] - 2.0 * libm::cos(2.0 * x[6])).abs() < 1e-11);
        }
        let ddf = df.exterior_derivative().unwrap();
        assert!(ddf.max_abs() < 1e-11);
        // Quadrature picks out the constant mode only.
        let g = FormField::from_fn(&s, 0, |x| {
            PForm::scalar(0.5 + libm::sin(x[0]) * libm::cos(x[3]) * libm::sin(x[6]))
        });
        assert!((g.integrate() - 0.5 * s.covolume()).abs() < 1e-10 * s.covolume());
    }

    #[test]
    fn stretched_periods_scale_the_calculus() {
        // Period 4 pi on the first axis, 2 pi on the second.
        let s = LatticeSpec::new(&[1, 2], 16, &[2.0 * TAU, TAU]).unwrap();
        let f = FormField::from_fn(&s, 0, |x| {
            PForm::scalar(libm::sin(x[0] / 2.0) + libm::cos(x[1]))
        });
        let df = f.exterior_derivative().unwrap();
        for site in [3usize, 77, 200] {
            let x = s.point(site);
            let v = df.form(site);
            assert!((v.coeffs()[0] - 0.5 * libm::cos(x[0] / 2.0)).abs() < 1e-11);
            assert!((v.coeffs()[1] + libm::sin(x[1])).abs() < 1e-11);
        }
        // Interpolation respects the stretched wrap.
        let probe = [5.03, 1.3, 0.0, 0.0, 0.0, 0.0, 0.0];
        let want = libm::sin(probe[0] / 2.0) + libm::cos(probe[1]);
        let got = f.interpolate(&probe, InterpMethod::Fourier).coeffs()[0];
        assert!((got - want).abs() < 1e-10);
        let wrapped = [
            probe[0] + 2.0 * TAU,
            probe[1] - TAU,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
        ];
        let got_w = f.interpolate(&wrapped, InterpMethod::Fourier).coeffs()[0];
        assert!((got_w - got).abs() < 1e-10);
        // Covolume carries the stretched factor.
        assert!((s.covolume() - 2.0 * libm::pow(TAU, 7.0)).abs() < 1e-3);
    }

    #[test]
    fn rank_zero_lattice_is_a_single_point() {
        let s = LatticeSpec::unit(&[], 1).unwrap();
        assert_eq!(s.sites(), 1);
        let f = FormField::constant(&s, &standard_phi());
        let d = f.exterior_derivative().unwrap();
        assert_eq!(d.max_abs(), 0.0);
        let v = FormField::from_fn(&s, 7, |_| {
            let mut v = PForm::zero(7);
            v.coeffs_mut()[0] = 2.0;
            v
        });
        assert!((v.integrate() - 2.0 * libm::pow(TAU, 7.0)).abs() < 1e-4);
    }
}
