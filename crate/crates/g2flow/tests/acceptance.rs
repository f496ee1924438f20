//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//! Run with `cargo test -p g2flow --test acceptance -- --nocapture`.

use g2core::flow::{
    diffeo_pullback, hitchin_volume, run_flow, uniqueness_gauge_flow, FlowConfig, FlowGauge,
    FlowOutcome, PARABOLIC_LAMBDA, PARABOLIC_MU,
};
use g2core::jmap::{j_inverse, j_map, j_singular_range};
use g2core::lattice::{random_exact_3form, FormField, FrameField, LatticeSpec};
use g2core::linalg::DMat;
use g2core::linlab::parabolicity_certificate;
use g2core::metric::metric_from_sigma;
use g2core::pform::{standard_phi, PForm};
use g2core::proj::G2Frame;
use g2core::rng::SplitMix64;
use g2core::torsion::{calibrate_divergence_constant, torsion_components};
use g2flow::commands::{plain_flow_residual, run_variation_suite};

/// The divergence constant is re-derived by calibration, never assumed.
fn calibrated_a() -> f64 {
    let spec = LatticeSpec::unit(&[1], 16).unwrap();
    calibrate_divergence_constant(&spec, 1, 4).unwrap().a
}

fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "acceptance {criterion}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{criterion} failed: {detail}");
}

#[test]
fn criterion_1_algebraic_reproduction() {
    // The dual of the standard form, coefficient for coefficient, and the
    // identity metric.
    let phi = standard_phi();
    let metric = metric_from_sigma(&phi).unwrap();
    let mut worst_metric = 0.0f64;
    for i in 0..7 {
        for j in 0..7 {
            let want = if i == j { 1.0 } else { 0.0 };
            worst_metric = worst_metric.max((metric.g[i][j] - want).abs());
        }
    }
    let star_phi = metric.star(&phi);
    let expected: [(&[usize], f64); 7] = [
        (&[4, 5, 6, 7], 1.0),
        (&[2, 3, 6, 7], 1.0),
        (&[2, 3, 4, 5], 1.0),
        (&[1, 3, 5, 7], 1.0),
        (&[1, 3, 4, 6], -1.0),
        (&[1, 2, 5, 6], -1.0),
        (&[1, 2, 4, 7], -1.0),
    ];
    let mut exact = true;
    let mut norm2 = 0.0;
    for (axes, want) in expected {
        exact &= star_phi.coeff(axes) == want;
        norm2 += want * want;
    }
    // No stray coefficients beyond the seven integers.
    let total_sq: f64 = star_phi.coeffs().iter().map(|v| v * v).sum();
    let clean = total_sq == norm2;
    report(
        "criterion 1 (dual form and metric)",
        exact && clean && worst_metric <= 1e-12,
        &format!("star coefficients exact: {exact}, |g - id| = {worst_metric:.2e}"),
    );
}

#[test]
fn criterion_2_representation_dimensions() {
    let frame = G2Frame::new(&standard_phi()).unwrap();
    let matrix_of = |degree: usize, f: &dyn Fn(&PForm) -> PForm| {
        let n = g2core::basis::COUNTS[degree];
        let mut m = DMat::zeros(n, n);
        for j in 0..n {
            let mut e = PForm::zero(degree);
            e.coeffs_mut()[j] = 1.0;
            let out = f(&e);
            for i in 0..n {
                m.set(i, j, out.coeffs()[i]);
            }
        }
        m
    };
    let t7 = matrix_of(2, &|b| frame.project_2(b).0).trace();
    let t14 = matrix_of(2, &|b| frame.project_2(b).1).trace();
    let t1 = matrix_of(3, &|g| frame.project_3(g).0).trace();
    let t3_7 = matrix_of(3, &|g| frame.project_3(g).1).trace();
    let t27 = matrix_of(3, &|g| frame.project_3(g).2).trace();
    let traces_ok = (t7 - 7.0).abs() <= 1e-9
        && (t14 - 14.0).abs() <= 1e-9
        && (t1 - 1.0).abs() <= 1e-9
        && (t3_7 - 7.0).abs() <= 1e-9
        && (t27 - 27.0).abs() <= 1e-9;

    // Bijectivity of the 27-part isomorphism: positive smallest singular
    // value and round trips within 1e-9.
    let (smin, _) = j_singular_range(&frame);
    let mut rng = SplitMix64::new(2024);
    let mut worst_rt = 0.0f64;
    for _ in 0..5 {
        let mut raw = PForm::zero(3);
        for v in raw.coeffs_mut() {
            *v = rng.uniform(-1.0, 1.0);
        }
        let gamma = frame.project_3(&raw).2;
        let h = j_map(&frame, &gamma).unwrap();
        let back = j_inverse(&frame, &h).unwrap();
        worst_rt = worst_rt.max(back.sub(&gamma).max_abs() / gamma.max_abs().max(1e-300));
    }
    report(
        "criterion 2 (projector traces and 27-part bijection)",
        traces_ok && smin > 0.1 && worst_rt <= 1e-9,
        &format!(
            "traces ({t7:.2e},{t14:.2e})/({t1:.2e},{t3_7:.2e},{t27:.2e}), smin {smin:.3}, round trip {worst_rt:.2e}"
        ),
    );
}

#[test]
fn criterion_3_torsion_structure() {
    let spec = LatticeSpec::unit(&[1, 2], 16).unwrap();
    let phi_field = FormField::constant(&spec, &standard_phi());
    let mut worst_leak = 0.0f64;
    let mut worst_recon = 0.0f64;
    for seed in 0..20u64 {
        // Amplitude within the allowed range, small enough that the
        // nonlinear spectral tail stays under the reconstruction gate.
        let theta = random_exact_3form(&spec, 4e-3, 2, 1000 + seed).unwrap();
        let sigma = phi_field.add(&theta);
        let t = torsion_components(&sigma).unwrap();
        let tau2 = t.tau2.max_abs();
        let leak = t.tau0.max_abs().max(t.tau1.max_abs()).max(t.tau3.max_abs());
        let allowance = 1e-7 * tau2 + 1e-10;
        worst_leak = worst_leak.max(leak / allowance);
        worst_recon = worst_recon.max(t.residual_dsigma.max(t.residual_dstar));
    }
    report(
        "criterion 3 (closed torsion structure, 20 fields)",
        worst_leak <= 1.0 && worst_recon <= 1e-8,
        &format!("leak/allowance {worst_leak:.3}, reconstruction {worst_recon:.2e}"),
    );
}

#[test]
fn criterion_4_universal_constant() {
    let mut values = Vec::new();
    for (axes, n) in [(vec![1u8, 2], 16usize), (vec![1, 2], 32), (vec![3, 6], 16)] {
        for seed in [11u64, 12] {
            let spec = LatticeSpec::unit(&axes, n).unwrap();
            let rep = calibrate_divergence_constant(&spec, seed, 4).unwrap();
            assert!(
                rep.relative_spread <= 1e-6,
                "per-run spread {}",
                rep.relative_spread
            );
            values.push(rep.a);
        }
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let spread = values.iter().fold(0.0f64, |m, v| m.max((v - mean).abs())) / mean.abs();
    report(
        "criterion 4 (divergence constant universality)",
        spread <= 1e-6,
        &format!(
            "A = {mean}, cross-run spread {spread:.2e} over {} runs",
            values.len()
        ),
    );
}

#[test]
fn criterion_5_variation_formulas() {
    let outcomes = run_variation_suite(501).unwrap();
    let mut pass = true;
    let mut detail = String::new();
    for oc in &outcomes {
        pass &= oc.pass;
        // Quadratic convergence: at least one consecutive sweep ratio in
        // the quadratic window before the truncation floor.
        let ratios: Vec<f64> = oc.details["convergence_ratios"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        let quadratic = ratios.iter().any(|r| (3.4..4.6).contains(r));
        pass &= quadratic;
        detail.push_str(&format!("{}={:.2e} ", oc.name, oc.max_rel_err));
    }
    report(
        "criterion 5 (variation formulas with quadratic sweeps)",
        pass,
        detail.trim(),
    );
}

#[test]
fn criterion_6_parabolicity_certificate() {
    let cert =
        parabolicity_certificate(PARABOLIC_LAMBDA, PARABOLIC_MU, calibrated_a(), 10, 606).unwrap();
    let gauge_ok = cert.max_deviation <= 1e-6;
    let plain_ok = cert.plain_max_eigenvalue > -1e-6 && cert.plain_min_eigenvalue < -0.5;
    let diffeo_ok = cert.gauge_flow_deviation <= 1e-6;
    let chosen = cert
        .grid
        .iter()
        .find(|g| (g.lambda - PARABOLIC_LAMBDA).abs() < 1e-9 && (g.mu - PARABOLIC_MU).abs() < 1e-9)
        .unwrap();
    let printed = cert
        .grid
        .iter()
        .find(|g| (g.lambda + 5.0).abs() < 1e-9 && (g.mu + 1.0).abs() < 1e-9)
        .unwrap();
    // The corrected weight pair sits strictly inside the elliptic region;
    // the printed pair of the source text is degenerate (kernel directions),
    // which the certificate records rather than hides.
    report(
        "criterion 6 (parabolicity certificate, 10 directions)",
        gauge_ok && plain_ok && diffeo_ok && chosen.elliptic && !printed.elliptic,
        &format!(
            "gauge-fixed dev {:.2e}, ungauged max eig {:.2e}, diffeo dev {:.2e}, weights ({},{}) elliptic, printed (-5,-1) max eig {:.2e}",
            cert.max_deviation,
            cert.plain_max_eigenvalue,
            cert.gauge_flow_deviation,
            PARABOLIC_LAMBDA,
            PARABOLIC_MU,
            printed.max_symmetric_eigenvalue
        ),
    );
}

fn flow_config(spec: &LatticeSpec, dt_safety: f64, record: bool) -> FlowConfig {
    let sigma0 = FormField::constant(spec, &standard_phi())
        .add(&random_exact_3form(spec, 1e-2, 2, 777).unwrap());
    FlowConfig {
        sigma0,
        dt_safety,
        t_end: 0.1,
        gauge: FlowGauge::DeTurck {
            lambda: PARABOLIC_LAMBDA,
            mu: PARABOLIC_MU,
        },
        a_constant: calibrated_a(),
        snapshot_every: 1,
        record_stages: record,
    }
}

#[test]
fn criterion_7_flow_properties() {
    let spec = LatticeSpec::unit(&[1, 2], 16).unwrap();
    let traj = run_flow(&flow_config(&spec, 0.1, false)).unwrap();
    assert_eq!(traj.outcome, FlowOutcome::ReachedEnd);

    // (a) volume nondecreasing stepwise (relative tolerance per step).
    let mut monotone = true;
    for w in traj.diagnostics.windows(2) {
        monotone &= w[1].hitchin_v >= w[0].hitchin_v * (1.0 - 1e-10);
    }
    // (b) cohomology periods constant.
    let p0 = traj.diagnostics[0].cohomology_periods;
    let mut period_drift = 0.0f64;
    for d in &traj.diagnostics {
        for (p, q) in d.cohomology_periods.iter().zip(&p0) {
            period_drift = period_drift.max((p - q).abs());
        }
    }
    // (c) closedness throughout.
    let mut worst_dsigma = 0.0f64;
    for d in &traj.diagnostics {
        worst_dsigma = worst_dsigma.max(d.dsigma_l2);
    }

    // (d) step-halving order: endpoint errors against a fine reference.
    let reference = run_flow(&flow_config(&spec, 0.0125, false)).unwrap();
    let coarse = run_flow(&flow_config(&spec, 0.05, false)).unwrap();
    let fine = run_flow(&flow_config(&spec, 0.025, false)).unwrap();
    let frames = FrameField::new(&reference.snapshots.last().unwrap().sigma).unwrap();
    let err = |t: &g2core::flow::Trajectory| {
        frames
            .l2_norm(
                &t.snapshots
                    .last()
                    .unwrap()
                    .sigma
                    .sub(&reference.snapshots.last().unwrap().sigma),
            )
            .unwrap()
    };
    let e_coarse = err(&coarse);
    let e_fine = err(&fine);
    let order = (e_coarse / e_fine).log2();

    report(
        "criterion 7 (gauge flow to t_end = 0.1)",
        monotone && period_drift <= 1e-12 && worst_dsigma <= 1e-8 && (order - 4.0).abs() <= 0.3,
        &format!(
            "monotone {monotone}, period drift {period_drift:.2e}, |d sigma| {worst_dsigma:.2e}, order {order:.2}"
        ),
    );
}

#[test]
fn criterion_8_gauge_round_trip() {
    let spec = LatticeSpec::unit(&[1, 2], 16).unwrap();
    // Pullback of the gauge run solves the ungauged flow.
    let gauge_traj = run_flow(&flow_config(&spec, 0.1, true)).unwrap();
    assert_eq!(gauge_traj.outcome, FlowOutcome::ReachedEnd);
    let pulled = diffeo_pullback(&gauge_traj).unwrap();
    assert!(
        pulled[0]
            .sigma
            .sub(&gauge_traj.snapshots[0].sigma)
            .max_abs()
            == 0.0
    );
    let residual = plain_flow_residual(&pulled).unwrap();

    // The pulled trajectory still has nondecreasing volume (the functional
    // is invariant under the reparametrization).
    let mut volumes = Vec::new();
    for snap in &pulled {
        volumes.push(hitchin_volume(&snap.sigma).unwrap());
    }
    let pulled_monotone = volumes.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-10));

    // Uniqueness: two ungauged runs at different steps, re-gauged through
    // the diffeomorphism flow, agree.
    let mut plain_cfg_a = flow_config(&spec, 0.1, true);
    plain_cfg_a.gauge = FlowGauge::Plain;
    let mut plain_cfg_b = flow_config(&spec, 0.05, true);
    plain_cfg_b.gauge = FlowGauge::Plain;
    let plain_a = run_flow(&plain_cfg_a).unwrap();
    let plain_b = run_flow(&plain_cfg_b).unwrap();
    let gauged_a =
        uniqueness_gauge_flow(&plain_a, PARABOLIC_LAMBDA, PARABOLIC_MU, calibrated_a()).unwrap();
    let gauged_b =
        uniqueness_gauge_flow(&plain_b, PARABOLIC_LAMBDA, PARABOLIC_MU, calibrated_a()).unwrap();
    let fa = gauged_a.sigma_bar.last().unwrap();
    let fb = gauged_b.sigma_bar.last().unwrap();
    assert!((gauged_a.times.last().unwrap() - gauged_b.times.last().unwrap()).abs() < 1e-12);
    let frames = FrameField::new(fa).unwrap();
    let agreement = frames.l2_norm(&fa.sub(fb)).unwrap() / frames.l2_norm(fa).unwrap();

    report(
        "criterion 8 (gauge round trip and uniqueness)",
        residual <= 1e-4 && pulled_monotone && agreement <= 1e-3,
        &format!(
            "plain-flow residual {residual:.2e}, pulled volume monotone {pulled_monotone}, re-gauged agreement {agreement:.2e}"
        ),
    );
}
