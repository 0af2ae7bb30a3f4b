use plmcmc_core::data::{
    apply_mask, correlated_gaussian, double_attributes, duplicate_dataset, observed_square_side, unwhiten, whiten,
    Dataset, MaskMechanism, MaskSpec, WhiteningStats,
};
use plmcmc_core::metrics::{column_std, nmse, reconstruction_rmse};
use proptest::prelude::*;

fn table(rows: usize, cols: usize) -> Dataset {
    Dataset::complete(cols, (0..rows * cols).map(|v| (v as f64 * 0.37).sin() * 3.0 + 1.0).collect()).unwrap()
}

#[test]
fn independent_mask_rate_is_binomial() {
    let t = table(400, 10);
    for rate in [0.1, 0.5, 0.9] {
        let m = apply_mask(&t, &MaskSpec { mechanism: MaskMechanism::Independent { rate }, seed: 4 }).unwrap();
        let n = 4000.0;
        let sd = (n * rate * (1.0 - rate)).sqrt();
        assert!((m.missing_count() as f64 - n * rate).abs() < 4.0 * sd, "rate {rate}: {}", m.missing_count());
        for (v, &miss) in m.values().iter().zip(m.missing()) {
            if miss {
                assert_eq!(*v, 0.0);
            }
        }
    }
}

#[test]
fn masks_depend_only_on_the_row() {
    let spec = MaskSpec {
        mechanism: MaskMechanism::Independent { rate: 0.4 },
        seed: 12,
    };
    let full = apply_mask(&table(50, 6), &spec).unwrap();
    let prefix = apply_mask(&table(20, 6), &spec).unwrap();
    assert_eq!(&full.missing()[..120], prefix.missing());
    let zero = apply_mask(&table(20, 6), &MaskSpec { mechanism: MaskMechanism::Independent { rate: 0.0 }, seed: 12 }).unwrap();
    assert_eq!(zero, table(20, 6));
}

#[test]
fn image_masks_have_the_requested_area() {
    let img = table(100, 784).with_grid(28, 28).unwrap();
    let square = apply_mask(&img, &MaskSpec { mechanism: MaskMechanism::SquareObservation { rate: 0.8 }, seed: 1 }).unwrap();
    let side = observed_square_side(0.8, 28, 28);
    assert_eq!(side, 13);
    for i in 0..100 {
        let observed = square.row_missing(i).iter().filter(|&&m| !m).count();
        assert_eq!(observed, side * side);
    }
    let patch = apply_mask(&img, &MaskSpec { mechanism: MaskMechanism::Patch { rate: 0.3 }, seed: 1 }).unwrap();
    let mean_missing = patch.missing_count() as f64 / 100.0;
    assert!((mean_missing / 784.0 - 0.3).abs() < 0.1, "{mean_missing}");
    assert!(apply_mask(&table(3, 4), &MaskSpec { mechanism: MaskMechanism::Patch { rate: 0.3 }, seed: 1 }).is_err());
}

#[test]
fn whitening_ignores_missing_payloads() {
    let base = correlated_gaussian(50, 3, 0.2, 1).unwrap();
    let spec = MaskSpec {
        mechanism: MaskMechanism::Independent { rate: 0.3 },
        seed: 2,
    };
    let clean = apply_mask(&base, &spec).unwrap();
    let poisoned_values: Vec<f64> = clean
        .values()
        .iter()
        .zip(clean.missing())
        .enumerate()
        .map(|(k, (v, &m))| if !m { *v } else if k % 2 == 0 { f64::NAN } else { 1e300 })
        .collect();
    let poisoned = Dataset::new(3, poisoned_values, clean.missing().to_vec()).unwrap();
    let a = WhiteningStats::from_observed(&clean).unwrap();
    let b = WhiteningStats::from_observed(&poisoned).unwrap();
    assert_eq!(a, b);
    let (wa, _) = whiten(&clean).unwrap();
    let (wb, _) = whiten(&poisoned).unwrap();
    assert_eq!(wa, wb);
}

#[test]
fn constant_columns_are_rejected() {
    let d = Dataset::complete(2, vec![1.0, 2.0, 1.0, 3.0]).unwrap();
    assert!(WhiteningStats::from_observed(&d).is_err());
}

proptest! {
    #[test]
    fn whitening_round_trips(values in prop::collection::vec(-50.0f64..50.0, 12..60), rate in 0.0f64..0.5, seed in any::<u64>()) {
        let rows = values.len() / 3;
        let d = Dataset::complete(3, values[..rows * 3].to_vec()).unwrap();
        let d = apply_mask(&d, &MaskSpec { mechanism: MaskMechanism::Independent { rate }, seed }).unwrap();
        let Ok((w, stats)) = whiten(&d) else { return Ok(()) };
        for j in 0..3 {
            let col: Vec<f64> = w.observed_column(j).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            prop_assert!(mean.abs() < 1e-9);
        }
        let back = unwhiten(&w, &stats).unwrap();
        for ((a, b), &m) in back.values().iter().zip(d.values()).zip(d.missing()) {
            if !m {
                prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn row_order_does_not_matter(values in prop::collection::vec(-5.0f64..5.0, 20..40), shift in 1usize..10) {
        let rows = values.len() / 2;
        let v = &values[..rows * 2];
        let rotated: Vec<f64> = v[2 * (shift % rows)..].iter().chain(&v[..2 * (shift % rows)]).copied().collect();
        let a = Dataset::complete(2, v.to_vec()).unwrap();
        let b = Dataset::complete(2, rotated.clone()).unwrap();
        if let (Ok(sa), Ok(sb)) = (WhiteningStats::from_observed(&a), WhiteningStats::from_observed(&b)) {
            for j in 0..2 {
                prop_assert!((sa.mean[j] - sb.mean[j]).abs() < 1e-12);
                prop_assert!((sa.std[j] - sb.std[j]).abs() < 1e-12);
            }
        }
        let truth: Vec<f64> = v.iter().map(|x| x + 0.5).collect();
        let truth_rot: Vec<f64> = rotated.iter().map(|x| x + 0.5).collect();
        let mask = vec![true; v.len()];
        let r1 = reconstruction_rmse(v, &truth, &mask, 2).unwrap();
        let r2 = reconstruction_rmse(&rotated, &truth_rot, &mask, 2).unwrap();
        prop_assert!((r1 - r2).abs() < 1e-12);
    }
}

#[test]
fn mean_imputation_scores_about_one() {
    let truth = correlated_gaussian(4000, 4, 0.5, 7).unwrap();
    let masked = apply_mask(&truth, &MaskSpec { mechanism: MaskMechanism::Independent { rate: 0.5 }, seed: 3 }).unwrap();
    let sigmas = column_std(truth.values(), 4).unwrap();
    let means: Vec<f64> = (0..4).map(|j| masked.observed_column(j).sum::<f64>() / masked.observed_column(j).count() as f64).collect();
    let imputed: Vec<f64> = masked
        .values()
        .iter()
        .zip(masked.missing())
        .enumerate()
        .map(|(k, (v, &m))| if m { means[k % 4] } else { *v })
        .collect();
    let score = nmse(&imputed, truth.values(), masked.missing(), 4, &sigmas).unwrap();
    assert!((score - 1.0).abs() < 0.05, "{score}");
}

#[test]
fn doubling_and_duplication_preserve_rows() {
    let d = apply_mask(&table(5, 3), &MaskSpec { mechanism: MaskMechanism::Independent { rate: 0.3 }, seed: 5 }).unwrap();
    let doubled = double_attributes(&d);
    assert_eq!(doubled.cols(), 6);
    for i in 0..5 {
        assert_eq!(&doubled.row(i)[..3], d.row(i));
        assert_eq!(&doubled.row(i)[3..], d.row(i));
        assert_eq!(&doubled.row_missing(i)[3..], d.row_missing(i));
    }
    let dup = duplicate_dataset(&d, 3).unwrap();
    assert_eq!(dup.rows(), 15);
    assert_eq!(dup.row(7), d.row(2));
    assert!(duplicate_dataset(&d, 0).is_err());
}
