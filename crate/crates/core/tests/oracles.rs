//! Independent numerical oracles: closed-form identities, finite-difference
//! gradients, and covariance-invariance properties that the core linear
//! algebra must reproduce to tight tolerances.

use efftox_design::{
    design_info, efficiency, efficiency_lower_bound, minimal_d_design, optimize, phi_p, verify,
    BivariateModel, CovarianceSpec, CriterionSpec, Design, DesignProblem, DoseRange, ModelFamily,
    ModelSpec, PsoConfig,
};
use efftox_design::activecontrol::{
    admissible_transfer_check, block_info, ActiveControlDesign, ControlSpec,
};
use efftox_design::criteria::phi_p_of_info;
use efftox_design::infomat::design_info_factorized;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(family: ModelFamily, params: &[f64]) -> ModelSpec {
    ModelSpec::new(family, params.to_vec()).unwrap()
}

fn bivariate(eff: ModelSpec, tox: ModelSpec, se: f64, st: f64, rho: f64) -> BivariateModel {
    BivariateModel::new(eff, tox, CovarianceSpec::new(se, st, rho).unwrap()).unwrap()
}

/// For linear efficacy and Michaelis-Menten toxicity, the determinant of
/// the information matrix of a two-point design with equal weights has the
/// closed form
///   t1^2 d1^2 d2^2 (d1-d2)^4
///   / (16 (rho^2-1)^2 se^4 st^4 (t2+d1)^4 (t2+d2)^4),
/// where (t1, t2) are the Michaelis-Menten parameters. The determinant must
/// also be free of the linear model's parameters.
#[test]
fn two_point_linear_mm_determinant_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_501);
    let range = DoseRange::new(0.0, 160.0).unwrap();
    for _ in 0..1000 {
        let d1: f64 = rng.gen_range(0.5..75.0);
        let d2: f64 = d1 + rng.gen_range(1.0..75.0);
        let t1: f64 = rng.gen_range(1.0..100.0);
        let t2: f64 = rng.gen_range(1.0..100.0);
        let rho: f64 = rng.gen_range(-0.9..0.9);
        let se: f64 = rng.gen_range(0.5..10.0);
        let st: f64 = rng.gen_range(0.5..10.0);
        let bm = bivariate(
            model(
                ModelFamily::Linear,
                &[rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
            ),
            model(ModelFamily::MichaelisMenten, &[t1, t2]),
            se,
            st,
            rho,
        );
        let xi = Design::new(vec![d1, d2], vec![0.5, 0.5], &range).unwrap();
        let det = design_info(&xi, &bm).determinant();
        let closed = t1.powi(2) * d1.powi(2) * d2.powi(2) * (d1 - d2).powi(4)
            / (16.0
                * (rho * rho - 1.0).powi(2)
                * se.powi(4)
                * st.powi(4)
                * (t2 + d1).powi(4)
                * (t2 + d2).powi(4));
        let rel = ((det - closed) / closed).abs();
        assert!(
            rel <= 1e-10,
            "determinant mismatch: computed {det:e}, closed form {closed:e}, rel {rel:e} \
             (d=({d1},{d2}), t=({t1},{t2}), rho={rho}, sigma=({se},{st}))"
        );
    }
}

fn random_spec(family: ModelFamily, rng: &mut ChaCha8Rng) -> ModelSpec {
    let params = match family {
        ModelFamily::Linear => vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
        ModelFamily::Quadratic => vec![
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
        ],
        ModelFamily::MichaelisMenten => {
            vec![rng.gen_range(0.5..300.0), rng.gen_range(0.1..300.0)]
        }
        ModelFamily::Emax => vec![
            rng.gen_range(-3.0..3.0),
            rng.gen_range(0.5..300.0),
            rng.gen_range(0.1..300.0),
        ],
    };
    ModelSpec::new(family, params).unwrap()
}

fn half_max_index(family: ModelFamily) -> Option<usize> {
    match family {
        ModelFamily::MichaelisMenten => Some(1),
        ModelFamily::Emax => Some(2),
        _ => None,
    }
}

#[test]
fn gradients_match_central_finite_differences() {
    let families = [
        ModelFamily::Linear,
        ModelFamily::Quadratic,
        ModelFamily::MichaelisMenten,
        ModelFamily::Emax,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(7_654_321);
    for i in 0..1000 {
        let family = families[i % families.len()];
        let spec = random_spec(family, &mut rng);
        let d: f64 = rng.gen_range(0.0..200.0);
        let g = spec.gradient(d);
        for j in 0..spec.params.len() {
            // the mean is linear in every parameter except the half-max one,
            // so a generous step is free of truncation error there; for the
            // half-max parameter the curvature scale is (theta + d)
            let h = if half_max_index(family) == Some(j) {
                1e-4 * (spec.params[j] + d)
            } else {
                1e-3 * spec.params[j].abs().max(1.0)
            };
            let mut plus = spec.clone();
            plus.params[j] += h;
            let mut minus = spec.clone();
            minus.params[j] -= h;
            let fd = (plus.mean(d) - minus.mean(d)) / (2.0 * h);
            let err = (g[j] - fd).abs();
            assert!(
                err <= 1e-6 * g[j].abs().max(1.0),
                "gradient mismatch for {family:?} param {j} at d={d}: analytic {}, fd {fd}",
                g[j]
            );
        }
    }
}

/// Equal-parameter-count model pairs: the D-optimal design has uniform
/// weights and does not depend on the covariance at all. The closed-form
/// minimal design (built without reference to any covariance) must verify
/// as globally D-optimal under two very different covariances.
#[test]
fn d_optimal_designs_are_covariance_free_for_equal_count_pairs() {
    let cases: Vec<(ModelSpec, ModelSpec, DoseRange)> = vec![
        (
            model(ModelFamily::Linear, &[0.3, 1.1]),
            model(ModelFamily::Linear, &[-0.2, 0.8]),
            DoseRange::new(0.0, 10.0).unwrap(),
        ),
        (
            model(ModelFamily::Quadratic, &[0.5, 0.01, 0.1]),
            model(ModelFamily::Quadratic, &[0.24, -11.632, 25.11]),
            DoseRange::new(0.0, 7.0).unwrap(),
        ),
        (
            model(ModelFamily::MichaelisMenten, &[300.0, 50.0]),
            model(ModelFamily::MichaelisMenten, &[200.0, 80.0]),
            DoseRange::new(0.0, 150.0).unwrap(),
        ),
        (
            model(ModelFamily::Emax, &[2.588, 15.64, 0.26]),
            model(ModelFamily::Emax, &[0.8, 5.0, 0.9]),
            DoseRange::new(0.0, 1.0).unwrap(),
        ),
    ];
    let crit = CriterionSpec::d_optimal();
    for (eff, tox, range) in cases {
        let bm_a = bivariate(eff.clone(), tox.clone(), 1.0, 1.0, 0.0);
        let bm_b = bivariate(eff.clone(), tox.clone(), 7.272, 8.311, 0.387);
        let xi = minimal_d_design(&bm_a, &range).unwrap();
        // identical under the other covariance (the construction never
        // looks at it)
        assert_eq!(xi.points(), minimal_d_design(&bm_b, &range).unwrap().points());
        // uniform weights
        let k = xi.len() as f64;
        for (_, w) in xi.iter() {
            assert!((w - 1.0 / k).abs() < 1e-14);
        }
        // globally optimal under both covariances
        for bm in [&bm_a, &bm_b] {
            let report = verify(&xi, bm, &crit, &range, 2001, 1e-6).unwrap();
            assert!(
                report.optimal,
                "{:?}/{:?} minimal design not optimal under sigma=({},{}), rho={}: max sens {}",
                eff.family, tox.family, bm.cov.sigma_e, bm.cov.sigma_t, bm.cov.rho,
                report.max_sensitivity
            );
        }
        // D-efficiencies between minimally supported designs are
        // covariance-free too (the determinant factors over a single
        // minor); an unbalanced competitor on the same number of points
        // must score identically under both covariances. Competitors with
        // MORE than minimal support genuinely depend on the correlation,
        // so the point count matters here.
        let k_pts = xi.len();
        let points: Vec<f64> = (0..k_pts)
            .map(|i| {
                range.l + range.span() * (0.2 + 0.6 * i as f64 / (k_pts - 1).max(1) as f64)
            })
            .collect();
        let raw: Vec<f64> = (1..=k_pts).map(|i| i as f64).collect();
        let total: f64 = raw.iter().sum();
        let competitor = Design::new(
            points,
            raw.iter().map(|w| w / total).collect(),
            &range,
        )
        .unwrap();
        let eff_a = efficiency(&competitor, &xi, &bm_a, &crit).unwrap();
        let eff_b = efficiency(&competitor, &xi, &bm_b, &crit).unwrap();
        assert!(
            (eff_a - eff_b).abs() <= 1e-9 * eff_a.abs().max(1e-30),
            "D-efficiency changed with the covariance: {eff_a} vs {eff_b}"
        );
    }
}

#[test]
fn factorized_information_assembly_matches_direct() {
    let families = [
        ModelFamily::Linear,
        ModelFamily::Quadratic,
        ModelFamily::MichaelisMenten,
        ModelFamily::Emax,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(42_000);
    let range = DoseRange::new(0.0, 50.0).unwrap();
    for _ in 0..200 {
        let eff = random_spec(families[rng.gen_range(0..4)], &mut rng);
        let tox = random_spec(families[rng.gen_range(0..4)], &mut rng);
        let bm = bivariate(
            eff,
            tox,
            rng.gen_range(0.3..8.0),
            rng.gen_range(0.3..8.0),
            rng.gen_range(-0.9..0.9),
        );
        let n = rng.gen_range(1..=6);
        let points: Vec<f64> = (0..n)
            .map(|i| range.l + range.span() * (i as f64 + rng.gen_range(0.05..0.95)) / n as f64)
            .collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let xi = Design::new(points, weights, &range).unwrap();
        let direct = design_info(&xi, &bm);
        let factorized = design_info_factorized(&xi, &bm).unwrap();
        let scale = direct.norm().max(1e-300);
        assert!(
            (&direct - &factorized).norm() <= 1e-12 * scale,
            "assembly routes disagree: {:e}",
            (&direct - &factorized).norm() / scale
        );
    }
}

/// The grid/golden efficiency lower bound must actually lie below the true
/// efficiency relative to a verified optimum.
#[test]
fn efficiency_lower_bound_is_a_lower_bound() {
    let bm = bivariate(
        model(ModelFamily::Emax, &[2.588, 15.64, 0.26]),
        model(ModelFamily::Quadratic, &[0.24, -11.632, 25.11]),
        7.272,
        8.311,
        0.387,
    );
    let range = DoseRange::new(0.0, 1.0).unwrap();
    let crit = CriterionSpec::d_optimal();
    let problem = DesignProblem::new(bm.clone(), range, crit.clone()).unwrap();
    let cfg = PsoConfig {
        seed: 17,
        ..PsoConfig::default()
    };
    let (opt, diag) = optimize(&problem, &cfg).unwrap();
    assert!(diag.converged);

    let minimal = minimal_d_design(&bm, &range).unwrap();
    let uniform =
        Design::uniform(vec![0.0, 0.05, 0.2, 0.4, 0.6, 0.8, 1.0], &range).unwrap();
    for xi in [&minimal, &uniform, &opt] {
        let eff = efficiency(xi, &opt, &bm, &crit).unwrap();
        let bound = efficiency_lower_bound(xi, &bm, &crit, &range, 1001).unwrap();
        assert!(
            bound <= eff + 1e-6,
            "bound {bound} exceeds true efficiency {eff}"
        );
        assert!(bound > 0.0 && eff <= 1.0 + 1e-9);
    }
}

/// phi_0 values of nonsingular designs respond to a global scaling of the
/// covariance exactly as the theory dictates (sigma -> c*sigma divides
/// every eigenvalue by c^2), while D-efficiencies stay put.
#[test]
fn determinant_criterion_scales_exactly_with_covariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(555);
    let range = DoseRange::new(0.0, 150.0).unwrap();
    let crit = CriterionSpec::d_optimal();
    for _ in 0..50 {
        let se = rng.gen_range(0.3..5.0);
        let st = rng.gen_range(0.3..5.0);
        let rho = rng.gen_range(-0.8..0.8);
        let c: f64 = rng.gen_range(0.5..4.0);
        let eff = model(ModelFamily::Emax, &[0.0, 0.466, 25.0]);
        let tox = model(ModelFamily::MichaelisMenten, &[300.0, 50.0]);
        let bm1 = bivariate(eff.clone(), tox.clone(), se, st, rho);
        let bm2 = bivariate(eff, tox, c * se, c * st, rho);
        let points = vec![
            rng.gen_range(1.0..40.0),
            rng.gen_range(41.0..100.0),
            rng.gen_range(101.0..150.0),
        ];
        let xi = Design::uniform(points, &range).unwrap();
        let phi1 = phi_p(&xi, &bm1, &crit);
        let phi2 = phi_p(&xi, &bm2, &crit);
        // tolerance allows for eigensolver noise on badly scaled matrices
        // (relative eigenvalue error grows with the condition number)
        assert!(
            (phi2 - phi1 / (c * c)).abs() <= 1e-7 * phi2.abs(),
            "phi_0 scaling violated: {phi1} vs {phi2} at c={c}"
        );
    }
}

/// The numeric optimizer, restricted to the minimal support size, must
/// land on the closed-form minimally supported D-optimal design for every
/// covered model pair: same support (to optimizer precision) and uniform
/// weights.
#[test]
fn pso_reproduces_every_closed_form_minimal_design() {
    let cases: Vec<(ModelSpec, ModelSpec, DoseRange)> = vec![
        (
            model(ModelFamily::Linear, &[0.3, 1.1]),
            model(ModelFamily::Linear, &[-0.2, 0.8]),
            DoseRange::new(0.0, 10.0).unwrap(),
        ),
        (
            model(ModelFamily::Linear, &[0.5, 0.7]),
            model(ModelFamily::MichaelisMenten, &[300.0, 50.0]),
            DoseRange::new(0.0, 150.0).unwrap(),
        ),
        (
            model(ModelFamily::MichaelisMenten, &[200.0, 80.0]),
            model(ModelFamily::Linear, &[0.1, 0.02]),
            DoseRange::new(0.0, 150.0).unwrap(),
        ),
        (
            model(ModelFamily::Quadratic, &[0.5, 0.01, 0.1]),
            model(ModelFamily::Quadratic, &[0.24, -11.632, 25.11]),
            DoseRange::new(0.0, 7.0).unwrap(),
        ),
        (
            model(ModelFamily::Quadratic, &[0.5, 0.01, 0.1]),
            model(ModelFamily::Emax, &[0.1, 2.4, 1.2]),
            DoseRange::new(0.0, 7.0).unwrap(),
        ),
        (
            model(ModelFamily::Emax, &[2.588, 15.64, 0.26]),
            model(ModelFamily::Quadratic, &[0.24, -11.632, 25.11]),
            DoseRange::new(0.0, 1.0).unwrap(),
        ),
        (
            model(ModelFamily::MichaelisMenten, &[300.0, 50.0]),
            model(ModelFamily::MichaelisMenten, &[200.0, 80.0]),
            DoseRange::new(0.0, 150.0).unwrap(),
        ),
        (
            model(ModelFamily::Emax, &[2.588, 15.64, 0.26]),
            model(ModelFamily::Emax, &[0.8, 5.0, 0.9]),
            DoseRange::new(0.0, 1.0).unwrap(),
        ),
    ];
    for (eff, tox, range) in cases {
        let label = format!("{:?}/{:?}", eff.family, tox.family);
        let bm = bivariate(eff, tox, 1.3, 0.7, 0.25);
        let closed = minimal_d_design(&bm, &range).unwrap();
        let problem =
            DesignProblem::new(bm.clone(), range, CriterionSpec::d_optimal()).unwrap();
        let cfg = PsoConfig {
            seed: 4242,
            k_max: Some(closed.len()),
            ..PsoConfig::default()
        };
        let (found, _) = optimize(&problem, &cfg).unwrap();
        assert_eq!(found.len(), closed.len(), "{label}: support size");
        for (f, c) in found.points().iter().zip(closed.points()) {
            assert!(
                (f - c).abs() <= 1e-4 * range.span(),
                "{label}: support point {f} vs closed form {c}"
            );
        }
        let k = closed.len() as f64;
        for w in found.weights() {
            assert!(
                (w - 1.0 / k).abs() <= 1e-4,
                "{label}: weight {w} not uniform 1/{k}"
            );
        }
    }
}

/// Probe suite for the admissibility-transfer falsifier: whenever the check
/// reports strict Loewner domination of one extended design's block matrix
/// by another's (returns `false`), every concave criterion value must be
/// ordered the same way — phi_p is Loewner-monotone for all p <= 1. Jensen
/// pairs (a symmetric widening of a two-point design around its center, on
/// a linear pair) guarantee the dominating branch is actually exercised.
#[test]
fn admissibility_check_implies_criterion_domination() {
    let range = DoseRange::new(0.0, 10.0).unwrap();
    let bm = bivariate(
        model(ModelFamily::Linear, &[0.3, 1.1]),
        model(ModelFamily::Linear, &[-0.2, 0.8]),
        1.0,
        1.4,
        0.3,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(31_337);
    let ps = [0.0, -1.0, f64::NEG_INFINITY];
    let mut dominations = 0usize;
    for trial in 0..200 {
        let ctrl = ControlSpec {
            cov: CovarianceSpec::new(
                rng.gen_range(0.5..3.0),
                rng.gen_range(0.5..3.0),
                rng.gen_range(-0.6..0.6),
            )
            .unwrap(),
            dose: 0.0,
        };
        let w: f64 = rng.gen_range(0.05..0.95);
        let (xi, eta) = if trial % 2 == 0 {
            // Jensen pair: same center, eta spreads wider, so the
            // second-moment coordinate strictly grows and all others match
            let center: f64 = rng.gen_range(3.0..7.0);
            let narrow: f64 = rng.gen_range(0.2..1.5);
            let wide: f64 = narrow + rng.gen_range(0.5..1.5);
            (
                Design::uniform(vec![center - narrow, center + narrow], &range).unwrap(),
                Design::uniform(vec![center - wide, center + wide], &range).unwrap(),
            )
        } else {
            // unrelated random designs; domination is possible but not forced
            let mut draw = || {
                let k = rng.gen_range(2..=4usize);
                let points: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..10.0)).collect();
                let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
                let total: f64 = raw.iter().sum();
                let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
                Design::new(points, weights, &range).unwrap()
            };
            (draw(), draw())
        };
        let admissible_kept =
            admissible_transfer_check(&xi, &eta, &bm, &ctrl, w, 1e-10).unwrap();
        if admissible_kept {
            continue;
        }
        dominations += 1;
        let bx = block_info(
            &ActiveControlDesign::new(xi.clone(), w, ctrl.dose).unwrap(),
            &bm,
            &ctrl,
        )
        .unwrap();
        let be = block_info(
            &ActiveControlDesign::new(eta.clone(), w, ctrl.dose).unwrap(),
            &bm,
            &ctrl,
        )
        .unwrap();
        for p in ps {
            let crit = CriterionSpec::new(p, None).unwrap();
            let phi_x = phi_p_of_info(&bx, &crit);
            let phi_e = phi_p_of_info(&be, &crit);
            assert!(
                phi_e >= phi_x - 1e-9 * phi_x.abs().max(1.0),
                "trial {trial}, p={p}: domination reported but phi dropped \
                 ({phi_e} < {phi_x})"
            );
        }
    }
    // the Jensen pairs must all have been detected
    assert!(dominations >= 100, "only {dominations} dominations detected");
}
