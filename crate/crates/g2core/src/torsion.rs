//! Torsion decomposition of a structure field, the first-order operators
//! between irreducible bundles, and calibration of the divergence constant.
//!
//! The component solve never transcribes convention-sensitive constants:
//! each site inverts the wedge embeddings numerically, so the components are
//! exactly the ones making the two reconstruction identities hold.

use alloc::vec::Vec;

use crate::error::G2Error;
use crate::jmap::{j_map_unchecked, Sym2};
use crate::lattice::{derive_packed, random_band_limited, FormField, FrameField, LatticeSpec};
use crate::linalg::{lstsq, DMat};
use crate::pform::PForm;
use crate::rng::SplitMix64;

/// The four component forms of the structure torsion, as lattice fields.
pub struct TorsionComponents {
    pub tau0: FormField,
    pub tau1: FormField,
    pub tau2: FormField,
    pub tau3: FormField,
    /// Relative residual of `d sigma = tau0 star(sigma) + 3 tau1 ^ sigma + star(tau3)`.
    pub residual_dsigma: f64,
    /// Relative residual of `d star(sigma) = 4 tau1 ^ star(sigma) + tau2 ^ sigma`.
    pub residual_dstar: f64,
    /// Worst conditioning of the pointwise embedding solves over the field:
    /// right-hand-side perturbations move the components by at most this
    /// factor (up to the usual least-squares geometry).
    pub max_solve_condition: f64,
}

const SOLVE_TOL: f64 = 1e-8;

/// Matrix of `alpha -> alpha ^ w` from degree-p forms into degree-(p+q) forms.
fn wedge_matrix(w: &PForm, p: usize) -> DMat {
    let rows = crate::basis::COUNTS[p + w.degree()];
    let cols = crate::basis::COUNTS[p];
    let mut m = DMat::zeros(rows, cols);
    for c in 0..cols {
        let mut e = PForm::zero(p);
        e.coeffs_mut()[c] = 1.0;
        let img = e.wedge(w).expect("degree checked");
        for r in 0..rows {
            m.set(r, c, img.coeffs()[r]);
        }
    }
    m
}

/// Unique torsion components of a definite field, by projecting the two
/// derivative fields onto irreducible pieces and inverting the pointwise
/// wedge embeddings. Errors if the overdetermined system is inconsistent
/// beyond tolerance, which flags a discretization failure.
pub fn torsion_components(sigma: &FormField) -> Result<TorsionComponents, G2Error> {
    assert_eq!(sigma.degree(), 3);
    let frames = FrameField::new(sigma)?;
    let spec = sigma.spec.clone();
    let dsigma = sigma.exterior_derivative()?;
    let star_sigma = frames.star_field(sigma)?;
    let dstar = star_sigma.exterior_derivative()?;

    let mut tau0 = FormField::zeros(&spec, 0);
    let mut tau1 = FormField::zeros(&spec, 1);
    let mut tau2 = FormField::zeros(&spec, 2);
    let mut tau3 = FormField::zeros(&spec, 3);
    let mut max_condition = 0.0f64;

    for site in 0..spec.sites() {
        let frame = &frames.frames[site];
        let ds = dsigma.form(site);
        let dss = dstar.form(site);

        let (d1, d7, d27) = frame.project_4(&ds);
        // tau0: coefficient along star(sigma).
        let denom = frame
            .metric
            .inner(&frame.star_sigma, &frame.star_sigma)
            .unwrap();
        let t0 = frame.metric.inner(&d1, &frame.star_sigma).unwrap() / denom;
        tau0.set_form(site, &PForm::scalar(t0));

        // tau1 from the 7-part of d sigma: 3 tau1 ^ sigma.
        let w1 = wedge_matrix(&frame.sigma, 1);
        max_condition = max_condition.max(normal_condition(&w1));
        let sol = lstsq(&w1, d7.coeffs()).ok_or(G2Error::InconsistentSolve {
            what: "tau1 embedding",
            residual: f64::INFINITY,
        })?;
        let mut t1 = PForm::zero(1);
        t1.coeffs_mut().copy_from_slice(&sol);
        let t1 = t1.scaled(1.0 / 3.0);
        tau1.set_form(site, &t1);

        // tau3 = star of the 27-part.
        tau3.set_form(site, &frame.star(&d27));

        // tau2 from the 14-part of d star(sigma): tau2 ^ sigma.
        let (_, d514) = frame.project_5(&dss);
        let w2 = wedge_matrix(&frame.sigma, 2);
        max_condition = max_condition.max(normal_condition(&w2));
        let sol2 = lstsq(&w2, d514.coeffs()).ok_or(G2Error::InconsistentSolve {
            what: "tau2 embedding",
            residual: f64::INFINITY,
        })?;
        let mut t2 = PForm::zero(2);
        t2.coeffs_mut().copy_from_slice(&sol2);
        tau2.set_form(site, &t2);
    }

    // Reconstruction residuals over the whole field, relative to the
    // derivative magnitudes (or absolute when the derivative vanishes).
    let mut recon_ds = FormField::zeros(&spec, 4);
    let mut recon_dss = FormField::zeros(&spec, 5);
    for site in 0..spec.sites() {
        let frame = &frames.frames[site];
        let t0 = tau0.form(site).coeffs()[0];
        let t1 = tau1.form(site);
        let t2 = tau2.form(site);
        let t3 = tau3.form(site);
        let mut ds = frame.star_sigma.scaled(t0);
        ds.axpy(3.0, &t1.wedge(&frame.sigma).unwrap());
        ds.axpy(1.0, &frame.star(&t3));
        recon_ds.set_form(site, &ds);
        let mut dss = t1.wedge(&frame.star_sigma).unwrap().scaled(4.0);
        dss.axpy(1.0, &t2.wedge(&frame.sigma).unwrap());
        recon_dss.set_form(site, &dss);
    }
    // Both equations share the torsion, so the natural residual scale is the
    // combined derivative magnitude. The floor covers torsion-free inputs,
    // where both sides are pure differentiation roundoff (~1e-15 relative to
    // the field) and a raw ratio would be noise over noise.
    let scale =
        (frames.l2_norm(&dsigma)? + frames.l2_norm(&dstar)?).max(1e-6 * frames.l2_norm(sigma)?);
    let residual_dsigma = frames.l2_norm(&recon_ds.sub(&dsigma))? / scale;
    let residual_dstar = frames.l2_norm(&recon_dss.sub(&dstar))? / scale;
    if residual_dsigma > SOLVE_TOL || residual_dstar > SOLVE_TOL {
        return Err(G2Error::InconsistentSolve {
            what: "torsion reconstruction",
            residual: residual_dsigma.max(residual_dstar),
        });
    }
    Ok(TorsionComponents {
        tau0,
        tau1,
        tau2,
        tau3,
        residual_dsigma,
        residual_dstar,
        max_solve_condition: max_condition,
    })
}

/// Spectral condition number of a tall embedding matrix through its normal
/// equations.
fn normal_condition(w: &DMat) -> f64 {
    let normal = w.transpose().matmul(w);
    let (vals, _) = crate::linalg::sym_eigen(&normal);
    let lo = vals[0].max(1e-300);
    libm::sqrt(vals[vals.len() - 1] / lo)
}

/// The first-order operators between irreducible bundles. Labels follow the
/// irreducible dimensions: 1 = scalars, 7 = 1-forms, 14 and 27 the matching
/// pieces of 2- and 3-forms. Operators into lower degree are the formal
/// adjoints of the printed ones, realized through the codifferential.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DOp {
    D1to7,
    D7to7,
    D7to14,
    D7to27,
    D14to27,
    D27to27,
    D7to1,
    D14to7,
    D27to7,
    D27to14,
}

impl DOp {
    pub fn source_degree(&self) -> usize {
        match self {
            DOp::D1to7 => 0,
            DOp::D7to7 | DOp::D7to14 | DOp::D7to27 | DOp::D7to1 => 1,
            DOp::D14to27 | DOp::D14to7 => 2,
            DOp::D27to27 | DOp::D27to7 | DOp::D27to14 => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DOp::D1to7 => "d^1_7",
            DOp::D7to7 => "d^7_7",
            DOp::D7to14 => "d^7_14",
            DOp::D7to27 => "d^7_27",
            DOp::D14to27 => "d^14_27",
            DOp::D27to27 => "d^27_27",
            DOp::D7to1 => "d^7_1",
            DOp::D14to7 => "d^14_7",
            DOp::D27to7 => "d^27_7",
            DOp::D27to14 => "d^27_14",
        }
    }
}

const MEMBERSHIP_TOL: f64 = 1e-9;

fn check_membership(frames: &FrameField, f: &FormField, op: DOp) -> Result<(), G2Error> {
    let needs_14 = matches!(op, DOp::D14to27 | DOp::D14to7);
    let needs_27 = matches!(op, DOp::D27to27 | DOp::D27to7 | DOp::D27to14);
    if !needs_14 && !needs_27 {
        return Ok(());
    }
    let mut worst = 0.0f64;
    for site in 0..f.spec.sites() {
        let v = f.form(site);
        if v.coeff_norm() == 0.0 {
            continue;
        }
        let r = if needs_14 {
            frames.frames[site].residual_14(&v)
        } else {
            frames.frames[site].residual_27(&v)
        };
        worst = worst.max(r);
    }
    if worst > MEMBERSHIP_TOL {
        return Err(G2Error::OutsideSubspace {
            expected: if needs_14 {
                "Lambda^2_14"
            } else {
                "Lambda^3_27"
            },
            residual: worst,
        });
    }
    Ok(())
}

/// Apply one of the irreducible first-order operators over the lattice.
pub fn apply_dop(frames: &FrameField, op: DOp, f: &FormField) -> Result<FormField, G2Error> {
    if f.degree() != op.source_degree() {
        return Err(G2Error::DegreeMismatch {
            left: f.degree(),
            right: op.source_degree(),
        });
    }
    if f.spec != frames.spec {
        return Err(G2Error::LatticeMismatch);
    }
    check_membership(frames, f, op)?;
    match op {
        DOp::D1to7 => f.exterior_derivative(),
        DOp::D7to7 => {
            // star d (alpha ^ star(sigma))
            let mut w = FormField::zeros(&f.spec, 5);
            for site in 0..f.spec.sites() {
                let fr = &frames.frames[site];
                w.set_form(site, &f.form(site).wedge(&fr.star_sigma).unwrap());
            }
            frames.star_field(&w.exterior_derivative()?)
        }
        DOp::D7to14 => {
            let d = f.exterior_derivative()?;
            Ok(d.map(|site, v| frames.frames[site].project_2(v).1))
        }
        DOp::D7to27 => {
            // pi_27 d star(alpha ^ star(sigma)); the inner star of the wedge
            // is the contraction embedding of 1-forms into 2-forms.
            let mut w = FormField::zeros(&f.spec, 5);
            for site in 0..f.spec.sites() {
                let fr = &frames.frames[site];
                w.set_form(site, &f.form(site).wedge(&fr.star_sigma).unwrap());
            }
            let inner = frames.star_field(&w)?;
            let d = inner.exterior_derivative()?;
            Ok(d.map(|site, v| frames.frames[site].project_3(v).2))
        }
        DOp::D14to27 => {
            let d = f.exterior_derivative()?;
            Ok(d.map(|site, v| frames.frames[site].project_3(v).2))
        }
        DOp::D27to27 => {
            let d = f.exterior_derivative()?;
            Ok(d.map(|site, v| {
                let fr = &frames.frames[site];
                fr.star(&fr.project_4(v).2)
            }))
        }
        DOp::D7to1 => frames.codifferential(f),
        DOp::D14to7 => frames.codifferential(f),
        DOp::D27to7 => {
            // star(star(sigma) ^ delta gamma): the formal adjoint of D7to27.
            let delta = frames.codifferential(f)?;
            let mut out = FormField::zeros(&f.spec, 1);
            for site in 0..f.spec.sites() {
                let fr = &frames.frames[site];
                let w = fr.star_sigma.wedge(&delta.form(site)).unwrap();
                out.set_form(site, &fr.star(&w));
            }
            Ok(out)
        }
        DOp::D27to14 => {
            let delta = frames.codifferential(f)?;
            Ok(delta.map(|site, v| frames.frames[site].project_2(v).1))
        }
    }
}

/// Divergence of a symmetric-tensor field with flat coordinate derivatives:
/// `div(h) = g^{jl} g^{ik} h_{ij,k} e_l`, returned as 1-form components
/// (indices lowered with the flat metric, as used on a flat background).
pub fn flat_divergence(spec: &LatticeSpec, h: &[Sym2]) -> FormField {
    assert_eq!(h.len(), spec.sites());
    // Pack the 28 upper components into a scratch field, differentiate along
    // every active axis, and contract.
    let sites = spec.sites();
    let mut packed = Vec::with_capacity(sites * 49);
    for s in h {
        for i in 0..7 {
            for j in 0..7 {
                packed.push(s.h[i][j]);
            }
        }
    }
    let mut out = FormField::zeros(spec, 1);
    for ai in 0..spec.rank() {
        let axis = (spec.active_axes()[ai] - 1) as usize;
        let d = derive_packed(spec, &packed, 49, ai);
        for site in 0..sites {
            let base = site * 49;
            let f = out.form(site);
            let mut v = f;
            for l in 0..7 {
                let cur = v.coeffs()[l];
                v.coeffs_mut()[l] = cur + d[base + axis * 7 + l];
            }
            out.set_form(site, &v);
        }
    }
    out
}

/// Calibration of the universal constant `A` in
/// `(d^27_7 gamma)^sharp = A div(j(gamma))` at the flat torsion-free
/// background, by a least-squares fit over random band-limited fields.
#[derive(Clone, Copy, Debug)]
pub struct CalibrationReport {
    pub a: f64,
    pub samples: usize,
    pub relative_spread: f64,
}

const CALIBRATION_TOL: f64 = 1e-6;

pub fn calibrate_divergence_constant(
    spec: &LatticeSpec,
    seed: u64,
    samples: usize,
) -> Result<CalibrationReport, G2Error> {
    let phi = crate::pform::standard_phi();
    let sigma = FormField::constant(spec, &phi);
    let frames = FrameField::new(&sigma)?;
    let mut rng = SplitMix64::new(seed);
    let mut fits = Vec::new();
    for _ in 0..samples {
        let sub_seed = rng.next_u64();
        let raw = random_band_limited(spec, 3, 2, sub_seed);
        // Pointwise 27-projection keeps the field band-limited because the
        // projector is constant over a constant background.
        let gamma = raw.map(|site, v| frames.frames[site].project_3(v).2);
        if gamma.max_abs() < 1e-14 {
            continue;
        }
        let lhs = apply_dop(&frames, DOp::D27to7, &gamma)?;
        let h: Vec<Sym2> = (0..spec.sites())
            .map(|site| j_map_unchecked(&frames.frames[site], &gamma.form(site)))
            .collect();
        let rhs = flat_divergence(spec, &h);
        let mut num = 0.0;
        let mut den = 0.0;
        for site in 0..spec.sites() {
            let l = lhs.form(site);
            let r = rhs.form(site);
            for c in 0..7 {
                num += l.coeffs()[c] * r.coeffs()[c];
                den += r.coeffs()[c] * r.coeffs()[c];
            }
        }
        if den < 1e-28 {
            continue;
        }
        fits.push(num / den);
    }
    if fits.is_empty() {
        return Err(G2Error::InconsistentSolve {
            what: "calibration",
            residual: f64::INFINITY,
        });
    }
    let mean = fits.iter().sum::<f64>() / fits.len() as f64;
    let spread =
        fits.iter().fold(0.0f64, |m, a| m.max(libm::fabs(a - mean))) / libm::fabs(mean).max(1e-300);
    if spread > CALIBRATION_TOL {
        return Err(G2Error::CalibrationSpread { spread });
    }
    Ok(CalibrationReport {
        a: mean,
        samples: fits.len(),
        relative_spread: spread,
    })
}

/// Residuals of the three leading-order identities a closed variation
/// satisfies at a torsion-free background, relative to the magnitude of the
/// individual terms.
#[derive(Clone, Copy, Debug)]
pub struct ClosedIdentityReport {
    /// `(4/7) d^7_1 f1 = 0`
    pub scalar_part: f64,
    /// `d^1_7 f0 + (1/6) d^7_7 f1 + (1/12) d^27_7 f3 = 0`
    pub vector_part: f64,
    /// `d^7_27 f1 + d^27_27 f3 = 0`
    pub tensor_part: f64,
}

fn torsion_free_check(frames: &FrameField, sigma: &FormField) -> Result<(), G2Error> {
    let ds = sigma.exterior_derivative()?;
    let star_sigma = frames.star_field(sigma)?;
    let dss = star_sigma.exterior_derivative()?;
    let scale = frames.l2_norm(sigma)?.max(1e-300);
    let res = (frames.l2_norm(&ds)? + frames.l2_norm(&dss)?) / scale;
    if res > 1e-8 {
        return Err(G2Error::NotTorsionFree { residual: res });
    }
    Ok(())
}

/// Decompose a closed variation pointwise and evaluate the three identities.
pub fn closed_structure_identities(
    sigma: &FormField,
    psi: &FormField,
) -> Result<ClosedIdentityReport, G2Error> {
    assert_eq!(psi.degree(), 3);
    let frames = FrameField::new(sigma)?;
    torsion_free_check(&frames, sigma)?;
    let dpsi = psi.exterior_derivative()?;
    let closed_res = frames.l2_norm(&dpsi)? / frames.l2_norm(psi)?.max(1e-300);
    if closed_res > 1e-8 {
        return Err(G2Error::InconsistentSolve {
            what: "closed variation",
            residual: closed_res,
        });
    }

    let spec = psi.spec.clone();
    let mut f0 = FormField::zeros(&spec, 0);
    let mut f1 = FormField::zeros(&spec, 1);
    let mut f3 = FormField::zeros(&spec, 3);
    for site in 0..spec.sites() {
        let t = crate::variation::decompose_variation(&frames.frames[site], &psi.form(site));
        f0.set_form(site, &PForm::scalar(t.f0));
        f1.set_form(site, &t.f1);
        f3.set_form(site, &t.f3);
    }

    // Degenerate denominators (all terms identically zero) fall back to the
    // variation magnitude so constants report zero instead of noise ratios.
    let psi_floor = 1e-3 * frames.l2_norm(psi)?;
    let rel = move |num: f64, den: f64| num / den.max(psi_floor).max(1e-300);

    // (4/7) d^7_1 f1 + l.o.t. = 0; the scale is the derivative size of f1.
    let d71 = apply_dop(&frames, DOp::D7to1, &f1)?;
    let df1 = f1.exterior_derivative()?;
    let scalar_part = rel(
        frames.l2_norm(&d71)? * 4.0 / 7.0,
        frames.l2_norm(&df1)? + frames.l2_norm(&d71)?,
    );

    // d^1_7 f0 + (1/6) d^7_7 f1 + (1/12) d^27_7 f3 = 0.
    let t1 = apply_dop(&frames, DOp::D1to7, &f0)?;
    let t2 = apply_dop(&frames, DOp::D7to7, &f1)?.scaled(1.0 / 6.0);
    let t3 = apply_dop(&frames, DOp::D27to7, &f3)?.scaled(1.0 / 12.0);
    let sum = t1.add(&t2).add(&t3);
    let vector_part = rel(
        frames.l2_norm(&sum)?,
        frames.l2_norm(&t1)? + frames.l2_norm(&t2)? + frames.l2_norm(&t3)?,
    );

    // d^7_27 f1 + d^27_27 f3 = 0.
    let u1 = apply_dop(&frames, DOp::D7to27, &f1)?;
    let u2 = apply_dop(&frames, DOp::D27to27, &f3)?;
    let tensor_part = rel(
        frames.l2_norm(&u1.add(&u2))?,
        frames.l2_norm(&u1)? + frames.l2_norm(&u2)?,
    );

    Ok(ClosedIdentityReport {
        scalar_part,
        vector_part,
        tensor_part,
    })
}

/// Relative residual of `d f1 = (1/3) star(d^7_7 f1 ^ star(sigma)) + d^7_14 f1`
/// on an arbitrary 1-form field at a torsion-free background.
pub fn seven_derivative_identity_residual(
    frames: &FrameField,
    f1: &FormField,
) -> Result<f64, G2Error> {
    let lhs = f1.exterior_derivative()?;
    let d77 = apply_dop(frames, DOp::D7to7, f1)?;
    let mut seven = FormField::zeros(&f1.spec, 2);
    for site in 0..f1.spec.sites() {
        let fr = &frames.frames[site];
        let w = d77.form(site).wedge(&fr.star_sigma).unwrap();
        seven.set_form(site, &fr.star(&w).scaled(1.0 / 3.0));
    }
    let d714 = apply_dop(frames, DOp::D7to14, f1)?;
    let rhs = seven.add(&d714);
    Ok(frames.l2_norm(&lhs.sub(&rhs))? / frames.l2_norm(&lhs)?.max(1e-300))
}

/// Companion identity `d(f1 ^ sigma) = (2/3) d^7_7 f1 ^ star(sigma) - star(d^7_14 f1)`.
pub fn wedge_derivative_identity_residual(
    frames: &FrameField,
    f1: &FormField,
) -> Result<f64, G2Error> {
    let mut ws = FormField::zeros(&f1.spec, 4);
    for site in 0..f1.spec.sites() {
        let fr = &frames.frames[site];
        ws.set_form(site, &f1.form(site).wedge(&fr.sigma).unwrap());
    }
    let lhs = ws.exterior_derivative()?;
    let d77 = apply_dop(frames, DOp::D7to7, f1)?;
    let d714 = apply_dop(frames, DOp::D7to14, f1)?;
    let mut rhs = FormField::zeros(&f1.spec, 5);
    for site in 0..f1.spec.sites() {
        let fr = &frames.frames[site];
        let mut v = d77
            .form(site)
            .wedge(&fr.star_sigma)
            .unwrap()
            .scaled(2.0 / 3.0);
        v.axpy(-1.0, &fr.star(&d714.form(site)));
        rhs.set_form(site, &v);
    }
    Ok(frames.l2_norm(&lhs.sub(&rhs))? / frames.l2_norm(&lhs)?.max(1e-300))
}

/// Residuals of the structurally-zero operators, realized through the
/// concrete first-order compositions that would carry them.
#[derive(Clone, Copy, Debug)]
pub struct ZeroOperatorReport {
    /// 1-part of `d beta` for beta in the 14-part (adjoint slot of d^1_14).
    pub d14_1: f64,
    /// 1-part of `d gamma` for gamma in the 27-part (adjoint slot of d^1_27).
    pub d27_1: f64,
    /// 1-part of `d(f sigma)`: pointwise, `df ^ sigma` has no 1-component.
    pub d1_1: f64,
    /// 14-part of `star(df ^ star sigma)`: pointwise, contractions lie in
    /// the 7-part.
    pub d1_14: f64,
}

pub fn zero_operator_residuals(
    frames: &FrameField,
    seed: u64,
) -> Result<ZeroOperatorReport, G2Error> {
    let spec = frames.spec.clone();
    let beta =
        random_band_limited(&spec, 2, 2, seed).map(|site, v| frames.frames[site].project_2(v).1);
    let gamma = random_band_limited(&spec, 3, 2, seed ^ 0xabcd)
        .map(|site, v| frames.frames[site].project_3(v).2);
    let f = random_band_limited(&spec, 0, 2, seed ^ 0x1234);

    let dbeta = beta.exterior_derivative()?;
    let d14_1 = {
        let ones = dbeta.map(|site, v| frames.frames[site].project_3(v).0);
        frames.l2_norm(&ones)? / frames.l2_norm(&dbeta)?.max(1e-300)
    };
    let dgamma = gamma.exterior_derivative()?;
    let d27_1 = {
        let ones = dgamma.map(|site, v| frames.frames[site].project_4(v).0);
        frames.l2_norm(&ones)? / frames.l2_norm(&dgamma)?.max(1e-300)
    };
    let df = f.exterior_derivative()?;
    let d1_1 = {
        let mut w = FormField::zeros(&spec, 4);
        for site in 0..spec.sites() {
            let fr = &frames.frames[site];
            w.set_form(site, &df.form(site).wedge(&fr.sigma).unwrap());
        }
        let ones = w.map(|site, v| frames.frames[site].project_4(v).0);
        frames.l2_norm(&ones)? / frames.l2_norm(&w)?.max(1e-300)
    };
    let d1_14 = {
        let mut emb = FormField::zeros(&spec, 2);
        for site in 0..spec.sites() {
            let fr = &frames.frames[site];
            let w = df.form(site).wedge(&fr.star_sigma).unwrap();
            emb.set_form(site, &fr.star(&w));
        }
        let parts = emb.map(|site, v| frames.frames[site].project_2(v).1);
        frames.l2_norm(&parts)? / frames.l2_norm(&emb)?.max(1e-300)
    };
    Ok(ZeroOperatorReport {
        d14_1,
        d27_1,
        d1_1,
        d1_14,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::random_exact_3form;
    use crate::pform::standard_phi;

    fn phi_field(spec: &LatticeSpec) -> FormField {
        FormField::constant(spec, &standard_phi())
    }

    fn spec1() -> LatticeSpec {
        LatticeSpec::unit(&[2], 16).unwrap()
    }

    fn spec2() -> LatticeSpec {
        LatticeSpec::unit(&[1, 2], 16).unwrap()
    }

    #[test]
    fn constant_structure_has_no_torsion() {
        let s = spec2();
        let t = torsion_components(&phi_field(&s)).unwrap();
        assert!(t.tau0.max_abs() < 1e-12);
        assert!(t.tau1.max_abs() < 1e-12);
        assert!(t.tau2.max_abs() < 1e-12);
        assert!(t.tau3.max_abs() < 1e-12);
    }

    #[test]
    fn closed_structure_has_only_tau2() {
        let s = spec2();
        let theta = random_exact_3form(&s, 5e-3, 2, 31).unwrap();
        let sigma = phi_field(&s).add(&theta);
        let t = torsion_components(&sigma).unwrap();
        let scale = t.tau2.max_abs().max(1e-300);
        assert!(
            t.tau0.max_abs() <= 1e-7 * scale + 1e-10,
            "tau0 {}",
            t.tau0.max_abs()
        );
        assert!(t.tau1.max_abs() <= 1e-7 * scale + 1e-10);
        assert!(t.tau3.max_abs() <= 1e-7 * scale + 1e-10);
        assert!(t.residual_dsigma < 1e-8);
        assert!(t.residual_dstar < 1e-8);
        // tau2 lies in the 14-part and tau3 in the 27-part, sitewise.
        let frames = FrameField::new(&sigma).unwrap();
        for site in (0..s.sites()).step_by(17) {
            let b = t.tau2.form(site);
            if b.coeff_norm() > 1e-12 {
                assert!(frames.frames[site].residual_14(&b) < 1e-9);
            }
        }
    }

    #[test]
    fn generic_structure_reconstructs() {
        // A definite but non-closed field: both identities still solve. The
        // perturbation stays at one Fourier mode so the nonlinear spectrum of
        // the dual form dies out well below the lattice Nyquist limit.
        let s = spec1();
        let mut sigma = phi_field(&s);
        let bump = random_band_limited(&s, 3, 1, 77);
        sigma.axpy(2e-3 / bump.max_abs(), &bump);
        let t = torsion_components(&sigma).unwrap();
        assert!(t.residual_dsigma < 1e-8, "{}", t.residual_dsigma);
        assert!(t.residual_dstar < 1e-8, "{}", t.residual_dstar);
        // Here the other components are genuinely nonzero.
        assert!(t.tau1.max_abs() > 1e-6 || t.tau0.max_abs() > 1e-6 || t.tau3.max_abs() > 1e-6);
        // The pointwise solves stay well conditioned on definite fields.
        assert!(
            t.max_solve_condition < 10.0,
            "condition {}",
            t.max_solve_condition
        );
    }

    #[test]
    fn dop_degree_and_membership_guards() {
        let s = spec1();
        let sigma = phi_field(&s);
        let frames = FrameField::new(&sigma).unwrap();
        let f = random_band_limited(&s, 1, 2, 3);
        assert!(matches!(
            apply_dop(&frames, DOp::D14to27, &f),
            Err(G2Error::DegreeMismatch { .. })
        ));
        // A 2-form with a 7-part is rejected by the 14-source operators.
        let b = random_band_limited(&s, 2, 2, 4);
        assert!(matches!(
            apply_dop(&frames, DOp::D14to27, &b),
            Err(G2Error::OutsideSubspace { .. })
        ));
    }

    #[test]
    fn d77_matches_direct_composition() {
        let s = spec1();
        let sigma = phi_field(&s);
        let frames = FrameField::new(&sigma).unwrap();
        // alpha = cos(x2) e^2: compare against star d (alpha ^ star phi)
        // assembled from the primitives independently.
        let alpha = FormField::from_fn(&s, 1, |x| {
            let mut a = PForm::zero(1);
            a.coeffs_mut()[1] = libm::cos(x[1]);
            a
        });
        let got = apply_dop(&frames, DOp::D7to7, &alpha).unwrap();
        let mut w = FormField::zeros(&s, 5);
        for site in 0..s.sites() {
            w.set_form(
                site,
                &alpha
                    .form(site)
                    .wedge(&frames.frames[site].star_sigma)
                    .unwrap(),
            );
        }
        let want = frames
            .star_field(&w.exterior_derivative().unwrap())
            .unwrap();
        assert!(got.sub(&want).max_abs() < 1e-12);
        // d^1_7 of a constant scalar vanishes.
        let c = FormField::constant(&s, &PForm::scalar(2.0));
        assert!(apply_dop(&frames, DOp::D1to7, &c).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn adjoint_pairs_by_quadrature() {
        let s = spec1();
        let sigma = phi_field(&s);
        let frames = FrameField::new(&sigma).unwrap();
        let f0 = random_band_limited(&s, 0, 2, 11);
        let a = random_band_limited(&s, 1, 2, 12);
        let b = random_band_limited(&s, 2, 2, 13).map(|site, v| frames.frames[site].project_2(v).1);
        let g = random_band_limited(&s, 3, 2, 14).map(|site, v| frames.frames[site].project_3(v).2);

        let pairs: [(f64, f64); 4] = [
            (
                frames
                    .l2_inner(&apply_dop(&frames, DOp::D1to7, &f0).unwrap(), &a)
                    .unwrap(),
                frames
                    .l2_inner(&f0, &apply_dop(&frames, DOp::D7to1, &a).unwrap())
                    .unwrap(),
            ),
            (
                frames
                    .l2_inner(&apply_dop(&frames, DOp::D7to14, &a).unwrap(), &b)
                    .unwrap(),
                frames
                    .l2_inner(&a, &apply_dop(&frames, DOp::D14to7, &b).unwrap())
                    .unwrap(),
            ),
            (
                frames
                    .l2_inner(&apply_dop(&frames, DOp::D7to27, &a).unwrap(), &g)
                    .unwrap(),
                frames
                    .l2_inner(&a, &apply_dop(&frames, DOp::D27to7, &g).unwrap())
                    .unwrap(),
            ),
            (
                frames
                    .l2_inner(&apply_dop(&frames, DOp::D14to27, &b).unwrap(), &g)
                    .unwrap(),
                frames
                    .l2_inner(&b, &apply_dop(&frames, DOp::D27to14, &g).unwrap())
                    .unwrap(),
            ),
        ];
        for (i, (lhs, rhs)) in pairs.iter().enumerate() {
            let scale = lhs.abs().max(rhs.abs()).max(1e-300);
            assert!((lhs - rhs).abs() / scale < 1e-8, "pair {i}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn adjoint_pairs_hold_at_non_flat_backgrounds() {
        // The operators into lower degree are built as compositions that are
        // formal adjoints for any definite structure, not only the flat one.
        let s = spec1();
        let theta = random_exact_3form(&s, 5e-3, 2, 19).unwrap();
        let sigma = phi_field(&s).add(&theta);
        let frames = FrameField::new(&sigma).unwrap();
        let a = random_band_limited(&s, 1, 2, 23);
        let g = random_band_limited(&s, 3, 2, 24).map(|site, v| frames.frames[site].project_3(v).2);
        let lhs = frames
            .l2_inner(&apply_dop(&frames, DOp::D7to27, &a).unwrap(), &g)
            .unwrap();
        let rhs = frames
            .l2_inner(&a, &apply_dop(&frames, DOp::D27to7, &g).unwrap())
            .unwrap();
        let scale = lhs.abs().max(rhs.abs()).max(1e-300);
        assert!((lhs - rhs).abs() / scale < 1e-7, "{lhs} vs {rhs}");
        let b = random_band_limited(&s, 2, 2, 25).map(|site, v| frames.frames[site].project_2(v).1);
        let lhs = frames
            .l2_inner(&apply_dop(&frames, DOp::D14to27, &b).unwrap(), &g)
            .unwrap();
        let rhs = frames
            .l2_inner(&b, &apply_dop(&frames, DOp::D27to14, &g).unwrap())
            .unwrap();
        let scale = lhs.abs().max(rhs.abs()).max(1e-300);
        assert!((lhs - rhs).abs() / scale < 1e-7, "{lhs} vs {rhs}");
    }

    #[test]
    fn hand_derived_divergence_example() {
        // gamma = sin(x2) (e^{123} - e^{145}). Working the composition
        // star(star(phi) ^ delta gamma) through by hand gives exactly
        // -cos(x2) e^2, while div(j(gamma)) = 2 cos(x2) e^2, so the fitted
        // constant must be -1/2.
        let s = spec1();
        let sigma = phi_field(&s);
        let frames = FrameField::new(&sigma).unwrap();
        let gamma0 = PForm::basis(&[1, 2, 3]).sub(&PForm::basis(&[1, 4, 5]));
        let gamma = FormField::from_fn(&s, 3, |x| gamma0.scaled(libm::sin(x[1])));
        let lhs = apply_dop(&frames, DOp::D27to7, &gamma).unwrap();
        for site in 0..s.sites() {
            let x = s.point(site);
            let v = lhs.form(site);
            for c in 0..7 {
                let want = if c == 1 { -libm::cos(x[1]) } else { 0.0 };
                assert!((v.coeffs()[c] - want).abs() < 1e-10, "site {site} comp {c}");
            }
        }
        let h: Vec<Sym2> = (0..s.sites())
            .map(|site| j_map_unchecked(&frames.frames[site], &gamma.form(site)))
            .collect();
        let rhs = flat_divergence(&s, &h);
        for site in 0..s.sites() {
            let x = s.point(site);
            let v = rhs.form(site);
            for c in 0..7 {
                let want = if c == 1 { 2.0 * libm::cos(x[1]) } else { 0.0 };
                assert!((v.coeffs()[c] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn calibration_is_universal() {
        let s = spec1();
        let rep = calibrate_divergence_constant(&s, 1, 6).unwrap();
        assert!(rep.relative_spread <= 1e-6);
        assert!(rep.samples >= 5);
        // Hand-derived value for these conventions.
        assert!((rep.a + 0.5).abs() < 1e-9, "A = {}", rep.a);
        // Universal across seeds.
        let rep2 = calibrate_divergence_constant(&s, 2, 6).unwrap();
        assert!((rep.a - rep2.a).abs() / rep.a.abs() < 1e-6);
        // Across resolution.
        let s32 = LatticeSpec::unit(&[2], 32).unwrap();
        let rep3 = calibrate_divergence_constant(&s32, 1, 4).unwrap();
        assert!((rep.a - rep3.a).abs() / rep.a.abs() < 1e-8);
        // Across the active-axis choice, including a two-axis lattice.
        let s2 = LatticeSpec::unit(&[3, 5], 16).unwrap();
        let rep4 = calibrate_divergence_constant(&s2, 1, 4).unwrap();
        assert!((rep.a - rep4.a).abs() / rep.a.abs() < 1e-6);
    }

    #[test]
    fn closed_identities_hold_for_exact_variations() {
        let s = spec2();
        let sigma = phi_field(&s);
        let psi = random_exact_3form(&s, 1.0, 2, 8).unwrap();
        let rep = closed_structure_identities(&sigma, &psi).unwrap();
        assert!(rep.scalar_part < 1e-7, "scalar {}", rep.scalar_part);
        assert!(rep.vector_part < 1e-7, "vector {}", rep.vector_part);
        assert!(rep.tensor_part < 1e-7, "tensor {}", rep.tensor_part);
    }

    #[test]
    fn closed_identities_trivial_for_constants() {
        let s = spec1();
        let sigma = phi_field(&s);
        let psi = FormField::constant(&s, &standard_phi().scaled(0.1));
        let rep = closed_structure_identities(&sigma, &psi).unwrap();
        assert!(rep.scalar_part < 1e-11);
        assert!(rep.vector_part < 1e-11);
        assert!(rep.tensor_part < 1e-11);
    }

    #[test]
    fn closed_identities_reject_torsionful_background() {
        let s = spec1();
        let theta = random_exact_3form(&s, 1e-2, 2, 5).unwrap();
        let sigma = phi_field(&s).add(&theta);
        let psi = random_exact_3form(&s, 1.0, 2, 8).unwrap();
        assert!(matches!(
            closed_structure_identities(&sigma, &psi),
            Err(G2Error::NotTorsionFree { .. })
        ));
    }

    #[test]
    fn seven_part_derivative_identities() {
        let s = spec2();
        let sigma = phi_field(&s);
        let frames = FrameField::new(&sigma).unwrap();
        let f1 = random_band_limited(&s, 1, 2, 41);
        let r = seven_derivative_identity_residual(&frames, &f1).unwrap();
        assert!(r < 1e-8, "df1 split residual {r}");
        let r2 = wedge_derivative_identity_residual(&frames, &f1).unwrap();
        assert!(r2 < 1e-8, "d(f1 ^ sigma) split residual {r2}");
    }

    #[test]
    fn declared_zero_operators_vanish() {
        let s = spec1();
        let sigma = phi_field(&s);
        let frames = FrameField::new(&sigma).unwrap();
        let rep = zero_operator_residuals(&frames, 9).unwrap();
        assert!(rep.d14_1 < 1e-8, "d14_1 {}", rep.d14_1);
        assert!(rep.d27_1 < 1e-8, "d27_1 {}", rep.d27_1);
        assert!(rep.d1_1 < 1e-8, "d1_1 {}", rep.d1_1);
        assert!(rep.d1_14 < 1e-8, "d1_14 {}", rep.d1_14);
    }
}
