//! Time integration of the volume-gradient flow of closed structure fields,
//! in the plain and gauge-fixed variants, with trajectory diagnostics,
//! diffeomorphism pullback, and the uniqueness gauge flow.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::G2Error;
use crate::lattice::{derive_packed, FormField, FrameField, InterpMethod};
use crate::linalg::{mat7_to_dmat, sym_eigen, Mat7};
use crate::pform::PForm;

/// Gauge choice for the flow right-hand side.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FlowGauge {
    /// `d sigma/dt = -d star d star sigma`: diffeomorphism invariant and only
    /// weakly parabolic, so runs are guarded and expected to be short.
    Plain,
    /// Adds the Lie-derivative term `d(V -| sigma)` with the gauge vector
    /// field; [`PARABOLIC_LAMBDA`], [`PARABOLIC_MU`] is the strictly
    /// parabolic weight pair.
    DeTurck { lambda: f64, mu: f64 },
}

/// Gauge weights making the gauge-fixed flow strictly parabolic along
/// closed directions: the linearized algebra of the right-hand side singles
/// out exactly one pair (see the symbol lab's weight-plane scan).
pub const PARABOLIC_LAMBDA: f64 = 7.0;
pub const PARABOLIC_MU: f64 = 0.0;

impl FlowGauge {
    pub fn default_deturck() -> Self {
        FlowGauge::DeTurck {
            lambda: PARABOLIC_LAMBDA,
            mu: PARABOLIC_MU,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FlowConfig {
    pub sigma0: FormField,
    pub dt_safety: f64,
    pub t_end: f64,
    pub gauge: FlowGauge,
    /// Calibrated divergence constant (the fitted `A`). Required nonzero for
    /// the gauge-fixed flow.
    pub a_constant: f64,
    pub snapshot_every: usize,
    /// Record per-stage fields needed by the pullback and uniqueness flows.
    pub record_stages: bool,
}

impl FlowConfig {
    pub fn new(sigma0: FormField, t_end: f64, a_constant: f64) -> Self {
        Self {
            sigma0,
            dt_safety: 0.1,
            t_end,
            gauge: FlowGauge::default_deturck(),
            a_constant,
            snapshot_every: 1,
            record_stages: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FlowDiagnostics {
    pub t: f64,
    pub hitchin_v: f64,
    pub tau2_l2: f64,
    pub dsigma_l2: f64,
    pub cohomology_periods: [f64; 35],
    pub dt_used: f64,
    pub min_metric_eig: f64,
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub sigma: FormField,
}

/// Per-step stage data: the four stage states and (gauge runs) the four
/// gauge vector fields, as consumed by the pullback integrators.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub sigma_stages: Vec<FormField>,
    pub v_stages: Vec<FormField>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FlowOutcome {
    ReachedEnd,
    /// Definiteness was lost (or values went non-finite) and halving the
    /// step no longer helps: short-time existence has run out.
    Breakdown {
        t: f64,
        dt: f64,
    },
}

#[derive(Debug)]
pub struct Trajectory {
    pub gauge: FlowGauge,
    pub a_constant: f64,
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Vec<FlowDiagnostics>,
    pub steps: Vec<StepRecord>,
    pub outcome: FlowOutcome,
}

/// Christoffel symbols of the induced metric field relative to the flat
/// torus connection, `Gamma[site][i][j][k]` symmetric in (j, k).
pub fn christoffel(sigma: &FormField) -> Result<Vec<[[[f64; 7]; 7]; 7]>, G2Error> {
    let frames = FrameField::new(sigma)?;
    christoffel_with(&frames)
}

pub fn christoffel_with(frames: &FrameField) -> Result<Vec<[[[f64; 7]; 7]; 7]>, G2Error> {
    let spec = &frames.spec;
    let sites = spec.sites();
    // Pack g, then differentiate along each active axis.
    let mut packed = vec![0.0; sites * 49];
    for site in 0..sites {
        let g = &frames.metric(site).g;
        for i in 0..7 {
            for j in 0..7 {
                packed[site * 49 + i * 7 + j] = g[i][j];
            }
        }
    }
    // dg[axis][site*49 + ...] for the 7 coordinate axes (inactive axes zero).
    let mut dg: Vec<Vec<f64>> = vec![Vec::new(); 7];
    for ai in 0..spec.rank() {
        let axis = (spec.active_axes()[ai] - 1) as usize;
        dg[axis] = derive_packed(spec, &packed, 49, ai);
    }
    let mut out = Vec::with_capacity(sites);
    for site in 0..sites {
        let mut dg_site = [[[0.0f64; 7]; 7]; 7];
        for (axis, block) in dg.iter().enumerate() {
            if block.is_empty() {
                continue;
            }
            for i in 0..7 {
                for j in 0..7 {
                    dg_site[axis][i][j] = block[site * 49 + i * 7 + j];
                }
            }
        }
        out.push(christoffel_site(&frames.metric(site).g_inv, &dg_site));
    }
    Ok(out)
}

/// Levi-Civita symbols from the inverse metric and the metric derivatives
/// `dg[axis][i][j] = d g_{ij} / d x_axis` at one point.
pub fn christoffel_site(g_inv: &Mat7, dg: &[[[f64; 7]; 7]; 7]) -> [[[f64; 7]; 7]; 7] {
    let mut gamma = [[[0.0; 7]; 7]; 7];
    for j in 0..7 {
        for k in j..7 {
            // lower-index bracket: (1/2)(g_{lk,j} + g_{lj,k} - g_{jk,l})
            let mut bracket = [0.0; 7];
            for (l, b) in bracket.iter_mut().enumerate() {
                *b = 0.5 * (dg[j][l][k] + dg[k][l][j] - dg[l][j][k]);
            }
            for i in 0..7 {
                let mut v = 0.0;
                for (l, b) in bracket.iter().enumerate() {
                    v += g_inv[i][l] * b;
                }
                gamma[i][j][k] = v;
                gamma[i][k][j] = v;
            }
        }
    }
    gamma
}

/// The pointwise gauge vector from the connection difference at one site.
/// See [`deturck_vector`] for the constant conventions.
pub fn deturck_site(
    g_inv: &Mat7,
    t: &[[[f64; 7]; 7]; 7],
    lambda: f64,
    mu: f64,
    a_constant: f64,
) -> [f64; 7] {
    let two_over_a = 2.0 * a_constant; // 2 / (1/A): reciprocal reading
    let mut v1 = [0.0; 7];
    for i in 0..7 {
        for p in 0..7 {
            for q in 0..7 {
                v1[i] += g_inv[p][q] * t[i][p][q] / 7.0;
            }
        }
    }
    let mut w = [0.0; 7];
    for j in 0..7 {
        for k in 0..7 {
            for i in 0..7 {
                w[j] += g_inv[k][j] * t[i][i][k];
            }
        }
    }
    let mut v = [0.0; 7];
    for i in 0..7 {
        let v2 = two_over_a * (w[i] + 5.0 * v1[i]);
        v[i] = lambda * v1[i] + mu * v2;
    }
    v
}

/// The gauge vector field `V = lambda V1 + mu V2` assembled from the
/// connection difference `T = Gamma`. `V1` is the normalized trace part;
/// `V2` pairs the cross contraction with `5 V1` and divides by the
/// divergence constant. The calibration fits `(d^27_7 g)^# = A div(j g)`,
/// while the linearized flow needs the constant of the reversed reading
/// `div(j g) = A' (d^27_7 g)^#`; hence the reciprocal below.
pub fn deturck_vector(
    sigma: &FormField,
    lambda: f64,
    mu: f64,
    a_constant: f64,
) -> Result<FormField, G2Error> {
    let frames = FrameField::new(sigma)?;
    let gamma = christoffel_with(&frames)?;
    deturck_vector_with(&frames, &gamma, lambda, mu, a_constant)
}

pub fn deturck_vector_with(
    frames: &FrameField,
    gamma: &[[[[f64; 7]; 7]; 7]],
    lambda: f64,
    mu: f64,
    a_constant: f64,
) -> Result<FormField, G2Error> {
    if a_constant == 0.0 {
        return Err(G2Error::ZeroConstant("divergence constant"));
    }
    let spec = &frames.spec;
    let mut out = FormField::zeros(spec, 1);
    for site in 0..spec.sites() {
        let arr = deturck_site(
            &frames.metric(site).g_inv,
            &gamma[site],
            lambda,
            mu,
            a_constant,
        );
        let mut v = PForm::zero(1);
        v.coeffs_mut().copy_from_slice(&arr);
        out.set_form(site, &v);
    }
    Ok(out)
}

/// Interior product of a vector field into a form field, sitewise.
pub fn contract_field(v: &FormField, f: &FormField) -> Result<FormField, G2Error> {
    if v.spec != f.spec {
        return Err(G2Error::LatticeMismatch);
    }
    assert_eq!(
        v.degree(),
        1,
        "vector components are stored as degree-1 data"
    );
    let mut out = FormField::zeros(&f.spec, f.degree() - 1);
    for site in 0..f.spec.sites() {
        let vv = v.form(site);
        let mut arr = [0.0; 7];
        arr.copy_from_slice(vv.coeffs());
        out.set_form(site, &f.form(site).interior(&arr)?);
    }
    Ok(out)
}

const CLOSEDNESS_TOL: f64 = 1e-8;

fn closedness_residual(frames: &FrameField, sigma: &FormField) -> Result<f64, G2Error> {
    let d = sigma.exterior_derivative()?;
    Ok(frames.l2_norm(&d)? / frames.l2_norm(sigma)?.max(1e-300))
}

/// Right-hand side of the flow on closed fields, optionally with the gauge
/// term. The result is exact (the derivative of a 2-form field), so its zero
/// mode vanishes and cohomology periods are conserved by any Runge-Kutta
/// combination of evaluations.
pub fn flow_rhs(
    sigma: &FormField,
    gauge: FlowGauge,
    a_constant: f64,
) -> Result<FormField, G2Error> {
    let frames = FrameField::new(sigma)?;
    let res = closedness_residual(&frames, sigma)?;
    if res > CLOSEDNESS_TOL {
        return Err(G2Error::InconsistentSolve {
            what: "closedness",
            residual: res,
        });
    }
    flow_rhs_with(&frames, sigma, gauge, a_constant).map(|(rhs, _)| rhs)
}

/// Same as [`flow_rhs`] but reusing frames and returning the gauge field.
fn flow_rhs_with(
    frames: &FrameField,
    sigma: &FormField,
    gauge: FlowGauge,
    a_constant: f64,
) -> Result<(FormField, FormField), G2Error> {
    // -d star d star sigma
    let star_sigma = frames.star_field(sigma)?;
    let dstar = star_sigma.exterior_derivative()?;
    let star_dstar = frames.star_field(&dstar)?;
    let mut rhs = star_dstar.exterior_derivative()?.scaled(-1.0);
    let v = match gauge {
        FlowGauge::Plain => FormField::zeros(&sigma.spec, 1),
        FlowGauge::DeTurck { lambda, mu } => {
            let gamma = christoffel_with(frames)?;
            let v = deturck_vector_with(frames, &gamma, lambda, mu, a_constant)?;
            let contracted = contract_field(&v, sigma)?;
            rhs.axpy(1.0, &contracted.exterior_derivative()?);
            v
        }
    };
    Ok((rhs, v))
}

/// Total volume functional `integral of sigma ^ star sigma`.
pub fn hitchin_volume(sigma: &FormField) -> Result<f64, G2Error> {
    let frames = FrameField::new(sigma)?;
    hitchin_volume_with(&frames, sigma)
}

fn hitchin_volume_with(frames: &FrameField, sigma: &FormField) -> Result<f64, G2Error> {
    let mut top = FormField::zeros(&sigma.spec, 7);
    for site in 0..sigma.spec.sites() {
        let s = sigma.form(site);
        let w = s.wedge(&frames.frames[site].star_sigma).unwrap();
        top.set_form(site, &w);
    }
    Ok(top.integrate())
}

/// Norm of the 14-part of `d star sigma`, which equals the norm of the only
/// torsion component of a closed structure (the 14-embedding by the
/// structure form is an isometry).
fn tau2_norm(frames: &FrameField, sigma: &FormField) -> Result<f64, G2Error> {
    let star_sigma = frames.star_field(sigma)?;
    let dstar = star_sigma.exterior_derivative()?;
    let part = dstar.map(|site, v| frames.frames[site].project_5(v).1);
    frames.l2_norm(&part)
}

fn diagnostics_for(
    frames: &FrameField,
    sigma: &FormField,
    t: f64,
    dt_used: f64,
) -> Result<FlowDiagnostics, G2Error> {
    let d = sigma.exterior_derivative()?;
    let mode = sigma.zero_mode();
    let mut periods = [0.0; 35];
    periods.copy_from_slice(mode.coeffs());
    Ok(FlowDiagnostics {
        t,
        hitchin_v: hitchin_volume_with(frames, sigma)?,
        tau2_l2: tau2_norm(frames, sigma)?,
        dsigma_l2: frames.l2_norm(&d)?,
        cohomology_periods: periods,
        dt_used,
        min_metric_eig: frames.min_metric_eigenvalue(),
    })
}

fn stiffness_estimate(frames: &FrameField) -> f64 {
    let mut worst = 0.0f64;
    for f in &frames.frames {
        let (vals, _) = sym_eigen(&mat7_to_dmat(&f.metric.g_inv));
        worst = worst.max(vals[vals.len() - 1]);
    }
    worst.max(1e-12)
}

const DT_FLOOR: f64 = 1e-12;

/// Integrate the flow. Configuration errors return `Err`; a definiteness
/// breakdown ends the run cleanly with `FlowOutcome::Breakdown` and the
/// diagnostics collected so far.
pub fn run_flow(cfg: &FlowConfig) -> Result<Trajectory, G2Error> {
    if cfg.sigma0.degree() != 3 {
        return Err(G2Error::BadConfig("initial field must be a 3-form"));
    }
    if !(cfg.t_end > 0.0) {
        return Err(G2Error::BadConfig("t_end must be positive"));
    }
    if !(cfg.dt_safety > 0.0) {
        return Err(G2Error::BadConfig("dt_safety must be positive"));
    }
    if cfg.snapshot_every == 0 {
        return Err(G2Error::BadConfig("snapshot_every must be at least 1"));
    }
    if matches!(cfg.gauge, FlowGauge::DeTurck { .. }) && cfg.a_constant == 0.0 {
        return Err(G2Error::BadConfig(
            "gauge flow needs a nonzero divergence constant",
        ));
    }
    let frames0 = FrameField::new(&cfg.sigma0)?;
    let closed0 = closedness_residual(&frames0, &cfg.sigma0)?;
    if closed0 > 1e-10 {
        return Err(G2Error::BadConfig("initial field is not closed"));
    }

    let h = cfg.sigma0.spec.min_spacing();
    let mut sigma = cfg.sigma0.clone();
    let mut frames = frames0;
    let mut t = 0.0;
    let mut snapshots = vec![Snapshot {
        t,
        sigma: sigma.clone(),
    }];
    let mut diagnostics = vec![diagnostics_for(&frames, &sigma, t, 0.0)?];
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut dt_cap = f64::INFINITY;
    let mut step_index = 0usize;

    while t < cfg.t_end - 1e-14 {
        let dt_est = cfg.dt_safety * h * h / stiffness_estimate(&frames);
        let mut dt = dt_est.min(dt_cap).min(cfg.t_end - t);
        // Attempt the step; halve on failure. Failures inside stage
        // evaluations (definiteness loss, non-finite values) are retried at
        // the smaller step until the floor, at which point the run ends in
        // breakdown with diagnostics flushed.
        loop {
            if dt < DT_FLOOR {
                diagnostics.push(diagnostics_for(&frames, &sigma, t, dt)?);
                return Ok(Trajectory {
                    gauge: cfg.gauge,
                    a_constant: cfg.a_constant,
                    snapshots,
                    diagnostics,
                    steps,
                    outcome: FlowOutcome::Breakdown { t, dt },
                });
            }
            match try_rk4_step(&frames, &sigma, dt, cfg) {
                Ok((next, mut record)) => match FrameField::new(&next) {
                    Ok(next_frames) if next.is_finite() => {
                        sigma = next;
                        frames = next_frames;
                        record.t = t;
                        t += dt;
                        if cfg.record_stages {
                            steps.push(record);
                        }
                        step_index += 1;
                        if step_index % cfg.snapshot_every == 0 || t >= cfg.t_end - 1e-14 {
                            snapshots.push(Snapshot {
                                t,
                                sigma: sigma.clone(),
                            });
                            diagnostics.push(diagnostics_for(&frames, &sigma, t, dt)?);
                        }
                        break;
                    }
                    _ => {
                        dt *= 0.5;
                        dt_cap = dt;
                    }
                },
                Err(G2Error::NotDefiniteAt { .. }) | Err(G2Error::NotDefinite { .. }) => {
                    dt *= 0.5;
                    dt_cap = dt;
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(Trajectory {
        gauge: cfg.gauge,
        a_constant: cfg.a_constant,
        snapshots,
        diagnostics,
        steps,
        outcome: FlowOutcome::ReachedEnd,
    })
}

/// One classical RK4 step of the flow at a fixed step size.
pub fn step(
    sigma: &FormField,
    dt: f64,
    gauge: FlowGauge,
    a_constant: f64,
) -> Result<FormField, G2Error> {
    let frames = FrameField::new(sigma)?;
    let cfg = FlowConfig {
        sigma0: sigma.clone(),
        dt_safety: 1.0,
        t_end: dt,
        gauge,
        a_constant,
        snapshot_every: 1,
        record_stages: false,
    };
    try_rk4_step(&frames, sigma, dt, &cfg).map(|(next, _)| next)
}

fn try_rk4_step(
    frames: &FrameField,
    sigma: &FormField,
    dt: f64,
    cfg: &FlowConfig,
) -> Result<(FormField, StepRecord), G2Error> {
    let s1 = sigma.clone();
    let (k1, v1) = flow_rhs_with(frames, &s1, cfg.gauge, cfg.a_constant)?;
    let mut s2 = sigma.clone();
    s2.axpy(0.5 * dt, &k1);
    let f2 = FrameField::new(&s2)?;
    let (k2, v2) = flow_rhs_with(&f2, &s2, cfg.gauge, cfg.a_constant)?;
    let mut s3 = sigma.clone();
    s3.axpy(0.5 * dt, &k2);
    let f3 = FrameField::new(&s3)?;
    let (k3, v3) = flow_rhs_with(&f3, &s3, cfg.gauge, cfg.a_constant)?;
    let mut s4 = sigma.clone();
    s4.axpy(dt, &k3);
    let f4 = FrameField::new(&s4)?;
    let (k4, v4) = flow_rhs_with(&f4, &s4, cfg.gauge, cfg.a_constant)?;
    let mut next = sigma.clone();
    next.axpy(dt / 6.0, &k1);
    next.axpy(dt / 3.0, &k2);
    next.axpy(dt / 3.0, &k3);
    next.axpy(dt / 6.0, &k4);
    let record = StepRecord {
        t: 0.0, // caller fills the time
        dt,
        sigma_stages: vec![s1, s2, s3, s4],
        v_stages: vec![v1, v2, v3, v4],
    };
    Ok((next, record))
}

/// Wrap a displacement to the symmetric interval around zero.
fn wrap_displacement(u: f64, period: f64) -> f64 {
    u - period * libm::round(u / period)
}

/// Integrate the particle system `dy/dt = -V(t)|_y` through the recorded
/// gauge stages and pull the gauge trajectory back along the resulting maps.
/// The output trajectory solves the plain flow up to discretization error
/// and starts exactly at the gauge run's initial field.
pub fn diffeo_pullback(traj: &Trajectory) -> Result<Vec<Snapshot>, G2Error> {
    if !matches!(traj.gauge, FlowGauge::DeTurck { .. }) {
        return Err(G2Error::BadConfig(
            "pullback needs a gauge-fixed trajectory",
        ));
    }
    if traj.steps.is_empty() {
        // No steps recorded: either a zero-length run or stages not kept.
        if traj.snapshots.len() > 1 {
            return Err(G2Error::BadConfig("trajectory has no recorded stages"));
        }
        return Ok(traj.snapshots.clone());
    }
    let spec = traj.snapshots[0].sigma.spec.clone();
    let sites = spec.sites();
    let rank = spec.rank();
    // Displacement field u with y = x + u, stored per site as 7 components.
    let mut disp = vec![[0.0f64; 7]; sites];
    let mut out = vec![traj.snapshots[0].clone()];
    let mut t = traj.snapshots[0].t;
    let mut snap_idx = 1usize;

    let eval = |field: &FormField, site: usize, u: &[[f64; 7]]| -> [f64; 7] {
        let mut x = spec.point(site);
        for c in 0..7 {
            x[c] += u[site][c];
        }
        let v = field.interpolate(&x, InterpMethod::Fourier);
        let mut arr = [0.0; 7];
        arr.copy_from_slice(v.coeffs());
        arr
    };

    for step in &traj.steps {
        let dt = step.dt;
        // Classical RK4 for every site particle, driven by the stage fields.
        let mut k1 = vec![[0.0f64; 7]; sites];
        for site in 0..sites {
            let v = eval(&step.v_stages[0], site, &disp);
            for c in 0..7 {
                k1[site][c] = -v[c];
            }
        }
        let advance = |base: &Vec<[f64; 7]>, k: &Vec<[f64; 7]>, s: f64| -> Vec<[f64; 7]> {
            let mut out = base.clone();
            for site in 0..sites {
                for c in 0..7 {
                    out[site][c] += s * k[site][c];
                }
            }
            out
        };
        let u2 = advance(&disp, &k1, 0.5 * dt);
        let mut k2 = vec![[0.0f64; 7]; sites];
        for site in 0..sites {
            let v = eval(&step.v_stages[1], site, &u2);
            for c in 0..7 {
                k2[site][c] = -v[c];
            }
        }
        let u3 = advance(&disp, &k2, 0.5 * dt);
        let mut k3 = vec![[0.0f64; 7]; sites];
        for site in 0..sites {
            let v = eval(&step.v_stages[2], site, &u3);
            for c in 0..7 {
                k3[site][c] = -v[c];
            }
        }
        let u4 = advance(&disp, &k3, dt);
        let mut k4 = vec![[0.0f64; 7]; sites];
        for site in 0..sites {
            let v = eval(&step.v_stages[3], site, &u4);
            for c in 0..7 {
                k4[site][c] = -v[c];
            }
        }
        for site in 0..sites {
            for c in 0..7 {
                disp[site][c] +=
                    dt / 6.0 * (k1[site][c] + 2.0 * k2[site][c] + 2.0 * k3[site][c] + k4[site][c]);
            }
        }
        t += dt;

        // Guard: displacements beyond half a period make the periodic
        // interpolation untrustworthy.
        for u in &disp {
            for ai in 0..rank {
                let axis = (spec.active_axes()[ai] - 1) as usize;
                let limit = spec.periods()[ai] / 2.0;
                if libm::fabs(wrap_displacement(u[axis], spec.periods()[ai])) > limit * 0.999 {
                    return Err(G2Error::DisplacementTooLarge {
                        max: libm::fabs(u[axis]),
                        limit,
                    });
                }
            }
        }

        // Pull back at matching snapshot times.
        if snap_idx < traj.snapshots.len() && libm::fabs(traj.snapshots[snap_idx].t - t) < 1e-12 {
            let sigma_bar = &traj.snapshots[snap_idx].sigma;
            out.push(Snapshot {
                t,
                sigma: pullback_field(sigma_bar, &disp)?,
            });
            snap_idx += 1;
        }
    }
    Ok(out)
}

/// Pull a 3-form field back along `x -> x + u(x)`: evaluate at the displaced
/// point and twist by the Jacobian `I + Du` (spectral derivatives of the
/// displacement along active axes).
pub fn pullback_field(field: &FormField, disp: &[[f64; 7]]) -> Result<FormField, G2Error> {
    let spec = field.spec.clone();
    let sites = spec.sites();
    assert_eq!(disp.len(), sites);
    let mut packed = vec![0.0; sites * 7];
    for (site, u) in disp.iter().enumerate() {
        packed[site * 7..site * 7 + 7].copy_from_slice(u);
    }
    // du[axis][site*7 + c] = d u_c / d x_axis
    let mut du: Vec<Vec<f64>> = vec![Vec::new(); 7];
    for ai in 0..spec.rank() {
        let axis = (spec.active_axes()[ai] - 1) as usize;
        du[axis] = derive_packed(&spec, &packed, 7, ai);
    }
    let mut out = FormField::zeros(&spec, field.degree());
    for site in 0..sites {
        let mut x = spec.point(site);
        for c in 0..7 {
            x[c] += disp[site][c];
        }
        let value = field.interpolate(&x, InterpMethod::Fourier);
        let mut jac: Mat7 = [[0.0; 7]; 7];
        for (i, row) in jac.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for (axis, col) in du.iter().enumerate() {
            if col.is_empty() {
                continue;
            }
            for i in 0..7 {
                jac[i][axis] += col[site * 7 + i];
            }
        }
        out.set_form(site, &value.pullback(&jac));
    }
    Ok(out)
}

/// Result of the uniqueness gauge flow: the inverse-map displacements and
/// the re-gauged trajectory they produce.
pub struct GaugeFlowResult {
    pub times: Vec<f64>,
    pub sigma_bar: Vec<FormField>,
}

/// Drive the diffeomorphism flow `d phi/dt = -V((phi^{-1})^* sigma)` along a
/// recorded plain-flow trajectory, integrating the inverse map directly:
/// with `psi = phi^{-1}`, `d psi/dt (y) = D psi(y) V(psi^* sigma)(y)`.
/// Returns `psi^* sigma` at the recorded snapshot times; for two plain
/// solutions from the same initial field these re-gauged trajectories agree.
pub fn uniqueness_gauge_flow(
    traj: &Trajectory,
    lambda: f64,
    mu: f64,
    a_constant: f64,
) -> Result<GaugeFlowResult, G2Error> {
    if traj.gauge != FlowGauge::Plain {
        return Err(G2Error::BadConfig(
            "uniqueness flow consumes a plain trajectory",
        ));
    }
    if traj.steps.is_empty() && traj.snapshots.len() > 1 {
        return Err(G2Error::BadConfig("trajectory has no recorded stages"));
    }
    let spec = traj.snapshots[0].sigma.spec.clone();
    let sites = spec.sites();
    let mut disp = vec![[0.0f64; 7]; sites];
    let mut times = vec![traj.snapshots[0].t];
    let mut sigma_bar = vec![traj.snapshots[0].sigma.clone()];
    let mut t = traj.snapshots[0].t;
    let mut snap_idx = 1usize;

    // Stage derivative: k(y) = (I + D u)(y) * V(pullback sigma)(y).
    let stage_rate =
        |sigma_stage: &FormField, u: &Vec<[f64; 7]>| -> Result<Vec<[f64; 7]>, G2Error> {
            let pulled = pullback_field(sigma_stage, u)?;
            let v = deturck_vector(&pulled, lambda, mu, a_constant)?;
            // Jacobian of psi = I + Du.
            let mut packed = vec![0.0; sites * 7];
            for (site, uu) in u.iter().enumerate() {
                packed[site * 7..site * 7 + 7].copy_from_slice(uu);
            }
            let mut du: Vec<Vec<f64>> = vec![Vec::new(); 7];
            for ai in 0..spec.rank() {
                let axis = (spec.active_axes()[ai] - 1) as usize;
                du[axis] = derive_packed(&spec, &packed, 7, ai);
            }
            let mut out = vec![[0.0f64; 7]; sites];
            for site in 0..sites {
                let vv = v.form(site);
                let mut jac: Mat7 = [[0.0; 7]; 7];
                for (i, row) in jac.iter_mut().enumerate() {
                    row[i] = 1.0;
                }
                for (axis, col) in du.iter().enumerate() {
                    if col.is_empty() {
                        continue;
                    }
                    for i in 0..7 {
                        jac[i][axis] += col[site * 7 + i];
                    }
                }
                for i in 0..7 {
                    let mut acc = 0.0;
                    for j in 0..7 {
                        acc += jac[i][j] * vv.coeffs()[j];
                    }
                    out[site][i] = acc;
                }
            }
            Ok(out)
        };

    for step in &traj.steps {
        let dt = step.dt;
        let k1 = stage_rate(&step.sigma_stages[0], &disp)?;
        let advance = |base: &Vec<[f64; 7]>, k: &Vec<[f64; 7]>, s: f64| -> Vec<[f64; 7]> {
            let mut out = base.clone();
            for site in 0..sites {
                for c in 0..7 {
                    out[site][c] += s * k[site][c];
                }
            }
            out
        };
        let k2 = stage_rate(&step.sigma_stages[1], &advance(&disp, &k1, 0.5 * dt))?;
        let k3 = stage_rate(&step.sigma_stages[2], &advance(&disp, &k2, 0.5 * dt))?;
        let k4 = stage_rate(&step.sigma_stages[3], &advance(&disp, &k3, dt))?;
        for site in 0..sites {
            for c in 0..7 {
                disp[site][c] +=
                    dt / 6.0 * (k1[site][c] + 2.0 * k2[site][c] + 2.0 * k3[site][c] + k4[site][c]);
            }
        }
        t += dt;
        if snap_idx < traj.snapshots.len() && libm::fabs(traj.snapshots[snap_idx].t - t) < 1e-12 {
            times.push(t);
            sigma_bar.push(pullback_field(&traj.snapshots[snap_idx].sigma, &disp)?);
            snap_idx += 1;
        }
    }
    Ok(GaugeFlowResult { times, sigma_bar })
}
