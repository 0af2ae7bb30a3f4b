use plmcmc_core::data::{apply_mask, correlated_gaussian, whiten, Dataset, MaskMechanism, MaskSpec};
use plmcmc_core::exec::Sequential;
use plmcmc_core::flow::{FlowArch, FlowModel, PriorKind};
use plmcmc_core::mcem::{impute_dataset, mcem_train, multi_chain_impute, ImputedDataset, McemConfig, Scoring};
use plmcmc_core::metrics::{column_std, mean_fill, nmse};
use plmcmc_core::oracles::{gaussian_conditional, AffineFlowSpec};
use plmcmc_core::optim::OptimizerKind;
use plmcmc_core::rng::stream;
use plmcmc_core::sampler::{AuxiliaryDensity, SamplerConfig};

fn small_arch() -> FlowArch {
    FlowArch {
        coupling_layers: 4,
        hidden_layers: 2,
        hidden_width: 16,
        prior: PriorKind::Normal,
    }
}

#[test]
fn affine_imputations_follow_the_gaussian_conditional() {
    let spec = AffineFlowSpec::random(4, 4, 1.0, &mut stream(3, 80, 0, 0)).unwrap();
    let flow = spec.to_flow().unwrap();
    let (a, b) = spec.affine_map();
    let observed = [(0, 0.5), (2, -0.4)];
    let oracle = gaussian_conditional(&a, b.as_slice(), &observed).unwrap();
    let rows = 2000;
    let mut values = Vec::new();
    let mut missing = Vec::new();
    for _ in 0..rows {
        values.extend_from_slice(&[0.5, 0.0, -0.4, 0.0]);
        missing.extend_from_slice(&[false, true, false, true]);
    }
    // one complete row so every column has an observed range
    values.extend_from_slice(&[0.0; 4]);
    missing.extend_from_slice(&[false; 4]);
    let mut data = ImputedDataset::new(Dataset::new(4, values, missing).unwrap()).unwrap();
    let cfg = SamplerConfig {
        perturb_scale: 0.2,
        resample_scale: 1.0,
        aux: AuxiliaryDensity::normal(1.0),
        proposals: 2000,
        ..Default::default()
    };
    let failed = impute_dataset(&flow, &mut data, &cfg, false, 5, 0, &Sequential).unwrap();
    assert_eq!(failed, 0);
    for (k, &j) in oracle.missing.iter().enumerate() {
        let col: Vec<f64> = (0..rows).map(|i| data.data.row(i)[j]).collect();
        let mean = col.iter().sum::<f64>() / rows as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (rows - 1) as f64;
        let ov = oracle.variance()[k];
        assert!((mean - oracle.mean[k]).abs() < 4.0 * (ov / rows as f64).sqrt(), "mean {mean} vs {}", oracle.mean[k]);
        assert!((var / ov - 1.0).abs() < 0.12, "var {var} vs {ov}");
    }
}

#[test]
fn clamping_keeps_imputations_in_the_observed_range() {
    let spec = AffineFlowSpec::random(2, 2, 1.0, &mut stream(4, 80, 0, 0)).unwrap();
    let flow = spec.to_flow().unwrap();
    let values = vec![0.1, 0.0, -0.1, 0.2, 0.05, 0.0];
    let missing = vec![false, true, false, false, false, false];
    let mut data = ImputedDataset::new(Dataset::new(2, values, missing).unwrap()).unwrap();
    impute_dataset(&flow, &mut data, &SamplerConfig::default(), true, 1, 0, &Sequential).unwrap();
    let v = data.data.row(0)[1];
    assert!((0.0..=0.2).contains(&v), "{v}");
}

fn synthetic(rows: usize) -> (Dataset, Dataset) {
    let truth = correlated_gaussian(rows, 4, 0.9, 31).unwrap();
    let (truth, _) = whiten(&truth).unwrap();
    let masked = apply_mask(
        &truth,
        &MaskSpec {
            mechanism: MaskMechanism::Independent { rate: 0.5 },
            seed: 9,
        },
    )
    .unwrap();
    (truth, masked)
}

#[test]
fn mcem_beats_mean_imputation() {
    let (truth, masked) = synthetic(400);
    let cfg = McemConfig {
        total_epochs: 300,
        resample_interval: 50,
        warmup_epochs: 50,
        optimizer: OptimizerKind::Adamax {
            lr: 0.005,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        },
        sampler: SamplerConfig {
            perturb_scale: 0.01,
            resample_scale: 1.0,
            proposals: 500,
            ..Default::default()
        },
        ..Default::default()
    };
    let sigmas = column_std(truth.values(), 4).unwrap();
    let scoring = Scoring {
        truth: truth.values().to_vec(),
        sigmas: sigmas.clone(),
    };
    let model = FlowModel::new(4, &small_arch(), 2).unwrap();
    let out = mcem_train(model, &masked, &cfg, 17, Some(&scoring), &Sequential, &mut ()).unwrap();
    assert!(out.aborted.is_none());
    assert_eq!(out.history.len(), 300);

    // observed entries are never touched
    for ((a, b), &m) in out.imputed.data.values().iter().zip(masked.values()).zip(masked.missing()) {
        if !m {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    let scores: Vec<f64> = out.history.iter().filter_map(|r| r.nmse).collect();
    assert_eq!(scores.len(), 5);
    let filled = mean_fill(masked.values(), masked.missing(), 4).unwrap();
    let baseline = nmse(&filled, truth.values(), masked.missing(), 4, &sigmas).unwrap();
    let last = *scores.last().unwrap();
    assert!(last < baseline, "mc-em {last} vs mean imputation {baseline}");
}

#[test]
fn mcem_replays_bit_for_bit() {
    let (_, masked) = synthetic(60);
    let cfg = McemConfig {
        total_epochs: 12,
        resample_interval: 4,
        warmup_epochs: 4,
        batch_size: 20,
        sampler: SamplerConfig {
            proposals: 50,
            ..Default::default()
        },
        ..Default::default()
    };
    let run = || {
        let model = FlowModel::new(4, &small_arch(), 2).unwrap();
        mcem_train(model, &masked, &cfg, 3, None, &Sequential, &mut ()).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.model, b.model);
    assert_eq!(a.imputed, b.imputed);
    assert_eq!(a.history, b.history);
}

#[test]
fn chain_zero_matches_single_chain_imputation() {
    let (_, masked) = synthetic(30);
    let model = FlowModel::new(4, &small_arch(), 5).unwrap();
    let cfg = SamplerConfig {
        proposals: 40,
        ..Default::default()
    };
    let multi = multi_chain_impute(&model, &masked, &cfg, 3, None, 8, 2, &Sequential).unwrap();
    let mut single = ImputedDataset::new(masked.clone()).unwrap();
    impute_dataset(&model, &mut single, &cfg, false, 8, 2, &Sequential).unwrap();
    assert_eq!(multi.individual, single.data);
    assert_ne!(multi.average, multi.individual);

    let one = multi_chain_impute(&model, &masked, &cfg, 1, None, 8, 2, &Sequential).unwrap();
    assert_eq!(one.average, one.individual);
    assert!(multi_chain_impute(&model, &masked, &cfg, 0, None, 8, 2, &Sequential).is_err());
}
