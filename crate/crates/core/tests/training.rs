use plmcmc_core::data::correlated_gaussian;
use plmcmc_core::exec::Sequential;
use plmcmc_core::flow::{FlowArch, FlowModel, PriorKind};
use plmcmc_core::grad::{mean_nll, nll_and_grad, ParamGradients};
use plmcmc_core::optim::{OptimizerKind, OptimizerState};
use plmcmc_core::rng::stream;
use plmcmc_core::train::{train, TrainConfig};
use rand::Rng;

fn arch(layers: usize, width: usize) -> FlowArch {
    FlowArch {
        coupling_layers: layers,
        hidden_layers: 2,
        hidden_width: width,
        prior: PriorKind::Normal,
    }
}

fn perturbed(dim: usize, prior: PriorKind, seed: u64) -> FlowModel {
    let a = FlowArch { prior, ..arch(3, 6) };
    let mut m = FlowModel::new(dim, &a, seed).unwrap();
    let mut rng = stream(seed, 50, 0, 0);
    let p: Vec<f64> = m.params().iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
    m.set_params(&p).unwrap();
    m
}

#[test]
fn gradients_match_central_differences() {
    let h = 1e-5;
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for (case, dim) in [2usize, 4, 6, 2, 4, 6].into_iter().enumerate() {
        let prior = if case < 3 { PriorKind::Normal } else { PriorKind::Logistic };
        let model = perturbed(dim, prior, case as u64);
        let mut rng = stream(case as u64, 51, 0, 0);
        let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let batch: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let (_, grads) = nll_and_grad(&model, &batch).unwrap();
        let base = model.params();
        let n = base.len();
        let picks: Vec<usize> = (0..40).map(|k| if k < 5 { n - 1 - k % dim } else { rng.random_range(0..n) }).collect();
        for i in picks {
            let mut p = base.clone();
            let mut m = model.clone();
            p[i] = base[i] + h;
            m.set_params(&p).unwrap();
            let up = mean_nll(&m, &batch, &Sequential).unwrap();
            p[i] = base[i] - h;
            m.set_params(&p).unwrap();
            let down = mean_nll(&m, &batch, &Sequential).unwrap();
            let numeric = (up - down) / (2.0 * h);
            let exact = grads.values[i];
            let err = (numeric - exact).abs();
            let scale = numeric.abs().max(exact.abs());
            assert!(err <= 1e-4 * scale + 1e-8, "case {case} param {i}: {exact} vs {numeric}");
            if scale > 1e-3 {
                worst = worst.max(err / scale);
            }
            checked += 1;
        }
    }
    assert!(checked >= 200);
    assert!(worst < 1e-4);
}

#[test]
fn gradient_is_independent_of_chunking() {
    let model = perturbed(4, PriorKind::Normal, 9);
    let mut rng = stream(9, 52, 0, 0);
    let rows: Vec<Vec<f64>> = (0..100).map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let batch: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let (a, ga) = nll_and_grad(&model, &batch).unwrap();
    let (b, gb) = nll_and_grad(&model, &batch).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
    assert_eq!(ga, gb);
}

fn gradient_sequence(n_params: usize, steps: usize) -> Vec<Vec<f64>> {
    let mut rng = stream(3, 53, 0, 0);
    (0..steps)
        .map(|_| (0..n_params).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

#[test]
fn adamax_follows_the_scalar_recurrence() {
    let (lr, b1, b2, eps) = (0.002, 0.9, 0.999, 1e-8);
    let mut model = perturbed(2, PriorKind::Normal, 1);
    let mut opt = OptimizerState::new(OptimizerKind::Adamax { lr, beta1: b1, beta2: b2, eps }, &model).unwrap();
    let start = model.params();
    let seq = gradient_sequence(start.len(), 25);
    for g in &seq {
        opt.step(&mut model, &ParamGradients { values: g.clone() }).unwrap();
    }
    for (i, &p0) in start.iter().enumerate() {
        let (mut p, mut m, mut u) = (p0, 0.0f64, 0.0f64);
        for (t, g) in seq.iter().enumerate() {
            m = b1 * m + (1.0 - b1) * g[i];
            u = (b2 * u).max(g[i].abs() + eps);
            p -= lr / (1.0 - b1.powi(t as i32 + 1)) * m / u;
        }
        assert!((model.params()[i] - p).abs() < 1e-14, "param {i}");
    }
    assert_eq!(opt.steps(), 25);
}

#[test]
fn rmsprop_follows_the_scalar_recurrence() {
    let (lr, mom, alpha, eps) = (1e-3, 0.9, 0.99, 1e-8);
    let mut model = perturbed(2, PriorKind::Normal, 2);
    let mut opt = OptimizerState::new(OptimizerKind::RmsProp { lr, momentum: mom, alpha, eps }, &model).unwrap();
    let start = model.params();
    let seq = gradient_sequence(start.len(), 25);
    for g in &seq {
        opt.step(&mut model, &ParamGradients { values: g.clone() }).unwrap();
    }
    for (i, &p0) in start.iter().enumerate() {
        let (mut p, mut v, mut buf) = (p0, 0.0f64, 0.0f64);
        for g in &seq {
            v = alpha * v + (1.0 - alpha) * g[i] * g[i];
            buf = mom * buf + g[i] / (v.sqrt() + eps);
            p -= lr * buf;
        }
        assert!((model.params()[i] - p).abs() < 1e-14, "param {i}");
    }
}

/// Exact NLL of the equicorrelated bivariate normal.
fn gaussian_nll(x: &[f64], rho: f64) -> f64 {
    let det = 1.0 - rho * rho;
    let q = (x[0] * x[0] - 2.0 * rho * x[0] * x[1] + x[1] * x[1]) / det;
    0.5 * q + (2.0 * std::f64::consts::PI).ln() + 0.5 * det.ln()
}

#[test]
fn training_recovers_a_correlated_gaussian() {
    let rho = 0.9;
    let data = correlated_gaussian(3000, 2, rho, 21).unwrap();
    let rows = data.row_refs();
    let (train_rows, held_out) = rows.split_at(2000);
    let mut model = FlowModel::new(2, &arch(4, 16), 4).unwrap();
    let mut opt = OptimizerState::new(
        OptimizerKind::Adamax {
            lr: 0.005,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        },
        &model,
    )
    .unwrap();
    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 100,
        clip_norm: None,
    };
    let history = train(&mut model, train_rows, &cfg, &mut opt, &mut stream(4, 2, 0, 0), &Sequential).unwrap();
    let first: f64 = history[..10].iter().sum::<f64>() / 10.0;
    let last: f64 = history[history.len() - 10..].iter().sum::<f64>() / 10.0;
    assert!(last <= first);
    let fitted = mean_nll(&model, held_out, &Sequential).unwrap();
    let exact = held_out.iter().map(|x| gaussian_nll(x, rho)).sum::<f64>() / held_out.len() as f64;
    assert!((fitted - exact).abs() < 0.1, "fitted {fitted}, exact {exact}");
}

#[test]
fn training_replays_bit_for_bit() {
    let data = correlated_gaussian(300, 4, 0.5, 2).unwrap();
    let rows = data.row_refs();
    let run = || {
        let mut model = FlowModel::new(4, &arch(2, 8), 1).unwrap();
        let mut opt = OptimizerState::new(OptimizerKind::adamax_default(), &model).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 64,
            clip_norm: Some(10.0),
        };
        let h = train(&mut model, &rows, &cfg, &mut opt, &mut stream(1, 2, 0, 0), &Sequential).unwrap();
        (model.params(), h)
    };
    let (pa, ha) = run();
    let (pb, hb) = run();
    assert!(pa.iter().zip(&pb).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(ha.iter().zip(&hb).all(|(a, b)| a.to_bits() == b.to_bits()));
}
