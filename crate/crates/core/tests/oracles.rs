//! Values frozen from an independent high-precision evaluation (mpmath
//! golden-section search and brute-force enumeration in Python).

use lincore::consistency::{restricted_pair_infimum, transformation_t, MarginLoss};
use lincore::inference::{crf_nll_and_gradient, forward_backward, loss_augmented_viterbi, viterbi};
use lincore::multiclass::{ce_loss, gce_loss, ScoreTable};
use lincore::scalar::{BaseLoss, LinearCoreSpec};
use lincore::structured::ChainModel;

#[test]
fn transformation_values() {
    let cases = [
        (LinearCoreSpec::symmetric(BaseLoss::Logistic), 0.3, 0.39140108305062570241),
        (LinearCoreSpec::symmetric(BaseLoss::Logistic), 0.7, 1.2408761855079088758),
        (LinearCoreSpec::one_sided(BaseLoss::Logistic), 0.3, 0.44385141767748033693),
        (LinearCoreSpec::one_sided(BaseLoss::Logistic), 0.7, 1.3710093253566257985),
        (LinearCoreSpec::symmetric(BaseLoss::Exponential), 0.3, 0.34606079858305435085),
        (LinearCoreSpec::symmetric(BaseLoss::Exponential), 0.7, 0.9858571571457150002),
        (LinearCoreSpec::one_sided(BaseLoss::Exponential), 0.3, 0.38333627705782179917),
        (LinearCoreSpec::one_sided(BaseLoss::Exponential), 0.7, 1.1398098416917840417),
    ];
    for (spec, t, expected) in cases {
        let got = transformation_t(&MarginLoss::LinearCore(spec), t).unwrap();
        assert!((got - expected).abs() < 1e-9, "{} at {t}: {got} vs {expected}", spec.name());
    }
}

#[test]
fn restricted_pair_closed_form() {
    let (v, u) = restricted_pair_infimum(BaseLoss::Logistic, 0.3, 0.7).unwrap();
    assert!((v - (2.0 * std::f64::consts::LN_2 + 0.6)).abs() < 1e-14);
    assert_eq!(u, 1.0);
    let (v, u) = restricted_pair_infimum(BaseLoss::Exponential, 0.5, 0.5).unwrap();
    assert!((v - 2.0).abs() < 1e-14);
    assert_eq!(u, 1.0);
}

fn chain() -> (ChainModel, Vec<Vec<f64>>, Vec<usize>) {
    let w = vec![0.5, -0.3, 0.2, -0.1, 0.4, 0.0];
    let model = ChainModel::from_weights(2, 1, w).unwrap();
    (model, vec![vec![1.0], vec![-2.0], vec![0.5]], vec![0, 1, 1])
}

#[test]
fn chain_inference_values() {
    let (model, x, y) = chain();
    let (path, score) = viterbi(&model, &x).unwrap();
    assert_eq!(path, vec![0, 1, 0]);
    assert!((score - 1.65).abs() < 1e-12);
    let (path, aug) = loss_augmented_viterbi(&model, &x, &y).unwrap();
    assert_eq!(path, vec![0, 1, 0]);
    assert!((aug - 1.9833333333333334).abs() < 1e-12);
    let m = forward_backward(&model, &x).unwrap();
    assert!((m.log_partition - 2.6381440237683824).abs() < 1e-12);
    let (nll, _) = crf_nll_and_gradient(&model, &x, &y).unwrap();
    assert!((nll - 1.7881440237683826).abs() < 1e-12);
}

#[test]
fn multiclass_loss_values() {
    let s = ScoreTable::new(vec![0.2, -1.0, 1.5]).unwrap();
    assert!((ce_loss(&s, 0).unwrap() - 1.6035186037486422).abs() < 1e-12);
    assert!((gce_loss(&s, 0, 0.7).unwrap() - 0.9636040728856128).abs() < 1e-12);
}
