use nalgebra::DMatrix;
use plmcmc_core::flow::{FlowArch, FlowModel, PriorKind};
use plmcmc_core::oracles::{gaussian_conditional, reference_log_prob, AffineFlowSpec};
use plmcmc_core::rng::stream;
use proptest::prelude::*;

fn arch(layers: usize, prior: PriorKind) -> FlowArch {
    FlowArch {
        coupling_layers: layers,
        hidden_layers: 2,
        hidden_width: 12,
        prior,
    }
}

fn random_model(dim: usize, layers: usize, seed: u64) -> FlowModel {
    let mut m = FlowModel::new(dim, &arch(layers, PriorKind::Normal), seed).unwrap();
    // default init has zero log-scales; give them some spread
    let mut rng = stream(seed, 99, 0, 0);
    for s in m.log_scale_mut() {
        *s = rand::Rng::random_range(&mut rng, -0.7..0.7);
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inverse_undoes_forward(
        half in 1usize..4,
        layers in 1usize..6,
        seed in any::<u64>(),
        xs in prop::collection::vec(-4.0f64..4.0, 8),
    ) {
        let dim = 2 * half;
        let m = random_model(dim, layers, seed);
        let xi = &xs[..dim];
        let (x, fwd) = m.forward(xi).unwrap();
        let (back, inv) = m.inverse(&x).unwrap();
        for (a, b) in xi.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
        prop_assert!((fwd + inv).abs() < 1e-12);
    }

    #[test]
    fn log_prob_is_finite(seed in any::<u64>(), xs in prop::collection::vec(-6.0f64..6.0, 4)) {
        let m = random_model(4, 3, seed);
        let lp = m.log_prob(&xs).unwrap();
        prop_assert!(lp.is_finite());
        prop_assert!(lp.exp() >= 0.0);
    }
}

/// log|det J| of forward by central differences.
fn numeric_logdet(m: &FlowModel, xi: &[f64]) -> f64 {
    let d = xi.len();
    let h = 1e-5;
    let mut jac = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut p = xi.to_vec();
        let mut q = xi.to_vec();
        p[j] += h;
        q[j] -= h;
        let (fp, _) = m.forward(&p).unwrap();
        let (fq, _) = m.forward(&q).unwrap();
        for i in 0..d {
            jac[(i, j)] = (fp[i] - fq[i]) / (2.0 * h);
        }
    }
    jac.determinant().abs().ln()
}

#[test]
fn logdet_matches_numeric_jacobian() {
    let mut checked = 0;
    for case in 0..50u64 {
        let dim = [2, 4, 6][case as usize % 3];
        let m = random_model(dim, 4, case);
        let xi = m.sample_prior(1.0, &mut stream(case, 3, 0, 0)).unwrap();
        let (_, logdet) = m.forward(&xi).unwrap();
        let numeric = numeric_logdet(&m, &xi);
        assert!((logdet - numeric).abs() < 1e-4, "case {case}: {logdet} vs {numeric}");
        checked += 1;
    }
    assert_eq!(checked, 50);
}

#[test]
fn density_integrates_to_one_in_two_dims() {
    for (seed, prior) in [(1, PriorKind::Normal), (2, PriorKind::Logistic), (3, PriorKind::Normal)] {
        let mut m = FlowModel::new(2, &arch(4, prior), seed).unwrap();
        m.log_scale_mut().copy_from_slice(&[0.3, -0.2]);
        let w = 12.0 * prior.std_dev();
        let n = 601;
        let h = 2.0 * w / (n - 1) as f64;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = [-w + i as f64 * h, -w + j as f64 * h];
                total += m.log_prob(&x).unwrap().exp();
            }
        }
        total *= h * h;
        assert!((total - 1.0).abs() < 1e-2, "{prior:?}: {total}");
    }
}

#[test]
fn log_prob_matches_naive_evaluation() {
    for seed in 0..20u64 {
        let m = random_model(6, 5, seed);
        let x = m.sample_prior(1.5, &mut stream(seed, 4, 0, 0)).unwrap();
        let a = m.log_prob(&x).unwrap();
        let b = reference_log_prob(&m, &x).unwrap();
        assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
    }
}

#[test]
fn affine_flow_density_is_gaussian() {
    for seed in 0..10u64 {
        let dim = [2, 4, 6][seed as usize % 3];
        let spec = AffineFlowSpec::random(dim, 4, 1.0, &mut stream(seed, 5, 0, 0)).unwrap();
        let flow = spec.to_flow().unwrap();
        let (a, b) = spec.affine_map();
        let cov = &a * a.transpose();
        let chol = cov.clone().cholesky().unwrap();
        let log_det_cov: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let x: Vec<f64> = (0..dim).map(|i| 0.3 * i as f64 - 0.5).collect();
        let r = nalgebra::DVector::from_column_slice(&x) - &b;
        let maha = r.dot(&chol.solve(&r));
        let expected = -0.5 * (maha + log_det_cov + dim as f64 * (2.0 * std::f64::consts::PI).ln());
        let lp = flow.log_prob(&x).unwrap();
        assert!((lp - expected).abs() < 1e-9, "seed {seed}: {lp} vs {expected}");

        // the conditional oracle with nothing observed is the full Gaussian
        let full = gaussian_conditional(&a, b.as_slice(), &[]).unwrap();
        assert!((full.cov - &cov).abs().max() < 1e-12);
    }
}

#[test]
fn prior_samples_have_the_prior_moments() {
    let n = 20_000;
    for prior in [PriorKind::Normal, PriorKind::Logistic] {
        let m = FlowModel::zeros(2, &arch(2, prior), 0).unwrap();
        let mut rng = stream(11, 6, 0, 0);
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let z = m.sample_prior(1.0, &mut rng).unwrap();
            sum += z[0] + z[1];
            sq += z[0] * z[0] + z[1] * z[1];
        }
        let count = 2.0 * n as f64;
        let mean = sum / count;
        let var = sq / count - mean * mean;
        let target = prior.std_dev().powi(2);
        // mean within 4 standard errors, variance within 5%
        assert!(mean.abs() < 4.0 * (target / count).sqrt(), "{prior:?} mean {mean}");
        assert!((var / target - 1.0).abs() < 0.05, "{prior:?} var {var}");
    }
}

#[test]
fn scaled_prior_samples_shrink() {
    let m = FlowModel::zeros(4, &arch(2, PriorKind::Normal), 0).unwrap();
    let a = m.sample_prior(1.0, &mut stream(1, 6, 0, 0)).unwrap();
    let b = m.sample_prior(0.5, &mut stream(1, 6, 0, 0)).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(0.5 * x, *y);
    }
}

#[test]
fn params_round_trip() {
    let m = random_model(4, 3, 8);
    let p = m.params();
    assert_eq!(p.len(), m.param_count());
    let mut other = FlowModel::zeros(4, &arch(3, PriorKind::Normal), 8).unwrap();
    other.set_params(&p).unwrap();
    assert_eq!(other.params(), p);
    let x = [0.1, -0.4, 1.2, 0.0];
    assert_eq!(other.log_prob(&x).unwrap(), m.log_prob(&x).unwrap());
    assert!(other.set_params(&p[1..]).is_err());
}
