//! The invariant suite behind `lincore selftest` and the acceptance tests.
//!
//! Every check compares library output against an oracle built from
//! different machinery: brute-force enumeration, closed forms, central finite
//! differences or a second run of the same driver.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::consistency::{
    linspace, restricted_pair_infimum, restricted_pair_infimum_numeric, transformation_t, MarginLoss,
    BOUND_GRID_POINTS,
};
use crate::error::{Error, Result};
use crate::experiments::{
    run_noise, run_rates, run_scaling, run_stability, run_train_seq, NoiseConfig, OutputFile, RatesConfig,
    ScalingConfig, StabilityConfig, TrainSeqConfig,
};
use crate::inference::{crf_nll_and_gradient, forward_backward, loss_augmented_viterbi, viterbi};
use crate::multiclass::{
    ce_gradient, ce_loss, gce_gradient, gce_loss, mc_conditional_regrets, mc_sum_loss, mc_sum_loss_gradient,
    CategoricalDistribution, ScoreTable,
};
use crate::scalar::{BaseLoss, LinearCoreSpec, Side, SideLimit};
use crate::structured::{
    enumerate_sequences, feature_len, feature_radius_of, hamming_loss, sequence_score,
    structured_conditional_regrets, structured_sum_loss_exact, structured_sum_loss_gradient_exact, ChainModel,
    ExactSumLoss, LossMatrix,
};
use crate::trainers::{
    empirical_gradient_variance, lc_pair_expectation, GradientEstimator, InnerProposal, KSampleEstimator,
    Objective, PairEstimator, PairProposal,
};

/// Result of one acceptance criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] {:>2} {} ({:.1}s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

pub const CRITERIA: [(u8, &str); 15] = [
    (1, "rate slopes"),
    (2, "transformation lower bounds"),
    (3, "core-width stability"),
    (4, "smoothness and convexity"),
    (5, "restricted pair minimum"),
    (6, "multi-class pointwise consistency"),
    (7, "structured pointwise consistency"),
    (8, "exact inference against enumeration"),
    (9, "gradient checks"),
    (10, "pair estimator unbiasedness"),
    (11, "k-sample variance bound"),
    (12, "runtime scaling"),
    (13, "sequence training"),
    (14, "label-noise robustness"),
    (15, "determinism"),
];

/// Runs criterion `id`. Library errors count as failures.
pub fn run_check(id: u8) -> CheckOutcome {
    let name = CRITERIA
        .iter()
        .find(|(i, _)| *i == id)
        .map_or("unknown criterion", |(_, n)| *n);
    let start = Instant::now();
    let result = match id {
        1 => rate_slopes(),
        2 => transformation_bounds(),
        3 => core_width_stability(),
        4 => smoothness(),
        5 => restricted_pair(),
        6 => multiclass_consistency(),
        7 => structured_consistency(),
        8 => exact_inference(),
        9 => gradient_checks(),
        10 => pair_unbiasedness(),
        11 => variance_bound(),
        12 => runtime_scaling(),
        13 => sequence_training(),
        14 => noise_robustness(),
        15 => determinism(),
        _ => Err(Error::Domain(format!("no criterion {id}"))),
    };
    let seconds = start.elapsed().as_secs_f64();
    let (mut passed, mut detail) = match result {
        Ok((passed, detail)) => (passed, detail),
        Err(e) => (false, format!("error: {e}")),
    };
    if let Some(limit) = time_limit(id) {
        if seconds >= limit {
            passed = false;
            detail.push_str(&format!("; took {seconds:.1}s, limit {limit}s"));
        }
    }
    CheckOutcome {
        id,
        name,
        passed,
        detail,
        seconds,
    }
}

fn time_limit(id: u8) -> Option<f64> {
    match id {
        1 => Some(10.0),
        6 => Some(60.0),
        12 => Some(900.0),
        _ => None,
    }
}

type Check = Result<(bool, String)>;

fn in_range(v: f64, lo: f64, hi: f64) -> bool {
    v >= lo && v <= hi
}

fn all_specs() -> Vec<LinearCoreSpec> {
    let mut out = Vec::new();
    for base in [BaseLoss::Logistic, BaseLoss::Exponential, BaseLoss::QUARTIC] {
        out.push(LinearCoreSpec::symmetric(base));
        out.push(LinearCoreSpec::one_sided(base));
    }
    out
}

fn rate_slopes() -> Check {
    let report = run_rates(&RatesConfig::default())?;
    let mut ok = report.rows.len() == 100;
    let mut parts = Vec::new();
    for (name, slope) in &report.slopes {
        let band = if name.starts_with("lc") { (0.95, 1.05) } else { (0.45, 0.55) };
        ok &= in_range(*slope, band.0, band.1);
        parts.push(format!("{name} {slope:.4}"));
    }
    ok &= report.slopes.len() == 4;
    Ok((ok, parts.join(", ")))
}

fn transformation_bounds() -> Check {
    let grid = linspace(0.0, 1.0, BOUND_GRID_POINTS);
    let mut ok = true;
    let mut worst_linear = f64::INFINITY;
    let mut worst_zero: f64 = 0.0;
    for spec in all_specs() {
        let loss = MarginLoss::LinearCore(spec);
        for &t in &grid {
            worst_linear = worst_linear.min(transformation_t(&loss, t)? - t);
        }
        worst_zero = worst_zero.max(transformation_t(&loss, 0.0)?);
    }
    ok &= worst_linear >= -1e-8 && worst_zero <= 1e-9;

    let mut failing = Vec::new();
    let mut worst_scaled = f64::INFINITY;
    for base in [BaseLoss::Logistic, BaseLoss::Exponential] {
        for tau in [0.1, 0.5, 1.0, 2.0, 5.0] {
            let loss = MarginLoss::LinearCore(LinearCoreSpec::new(base, Side::Symmetric, tau)?);
            let mut gap = f64::INFINITY;
            for &t in &grid {
                gap = gap.min(transformation_t(&loss, t)? - t / tau);
            }
            worst_scaled = worst_scaled.min(gap);
            if gap < -1e-8 {
                failing.push(format!("{}@tau={tau}: {gap:.3e}", base.name()));
            }
        }
    }
    ok &= failing.is_empty();

    let exp = MarginLoss::LinearCore(LinearCoreSpec::symmetric(BaseLoss::Exponential));
    let mut oracle_err: f64 = 0.0;
    for &t in &grid {
        let closed = 1.0 + t - (1.0 - t * t).sqrt();
        oracle_err = oracle_err.max((transformation_t(&exp, t)? - closed).abs());
    }
    ok &= oracle_err < 1e-8;
    Ok((
        ok,
        format!(
            "min T(t)-t {worst_linear:.2e}, max T(0) {worst_zero:.2e}, min T_tau(t)-t/tau {worst_scaled:.3e} \
             (violations: {}), exponential closed-form error {oracle_err:.2e}",
            if failing.is_empty() { "none".to_string() } else { failing.join("; ") }
        ),
    ))
}

fn core_width_stability() -> Check {
    let config = StabilityConfig::default();
    let report = run_stability(&config)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for &tau in &config.taus {
        let s = report.slope(tau).ok_or_else(|| Error::Numeric(format!("no slope for {tau}")))?;
        ok &= in_range(s, 0.95, 1.05);
        parts.push(format!("tau={tau}: {s:.4}"));
    }
    let small = report.slope(1e-5).ok_or_else(|| Error::Numeric("no slope for 1e-5".into()))?;
    ok &= in_range(small, 0.45, 0.6);
    parts.push(format!("tau=1e-5: {small:.4}"));
    Ok((ok, parts.join(", ")))
}

fn smoothness() -> Check {
    let mut ok = true;
    let mut worst_fd: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for spec in all_specs() {
        let tau = spec.tau();
        let mut points = linspace(-6.0, 6.0, 996);
        points.extend([-tau, tau, 0.0, tau + 1e-7]);
        for u in points {
            let h = 1e-6;
            let fd = (spec.value(u + h)? - spec.value(u - h)?) / (2.0 * h);
            worst_fd = worst_fd.max((fd - spec.derivative(u)?).abs());
        }
    }
    ok &= worst_fd <= 1e-4;

    // Curvature jumps at the knots, against `Phi''(0) / Phi'(0)` for each base.
    let jumps = [
        (BaseLoss::Logistic, 0.5),
        (BaseLoss::Exponential, 1.0),
        (BaseLoss::QUARTIC, 0.0),
    ];
    let mut worst_jump: f64 = 0.0;
    for (base, expected) in jumps {
        for side in [Side::Symmetric, Side::OneSided] {
            let spec = LinearCoreSpec::new(base, side, 1.0)?;
            let mut knots = vec![1.0];
            if side == Side::Symmetric {
                knots.push(-1.0);
            }
            for k in knots {
                let jump = (spec.branch_second_derivative(k, SideLimit::Right)?
                    - spec.branch_second_derivative(k, SideLimit::Left)?)
                .abs();
                if expected == 0.0 {
                    ok &= jump == 0.0;
                }
                worst_jump = worst_jump.max((jump - expected).abs());
            }
        }
    }
    ok &= worst_jump <= 1e-8;

    let mut convexity_violations = 0usize;
    for _ in 0..100_000 {
        let spec = all_specs()[rng.random_range(0..6)];
        let a = rng.random_range(-20.0..20.0);
        let b = rng.random_range(-20.0..20.0);
        let lam: f64 = rng.random();
        let mid = spec.value(lam * a + (1.0 - lam) * b)?;
        let chord = lam * spec.value(a)? + (1.0 - lam) * spec.value(b)?;
        if mid > chord + 1e-12 * (1.0 + chord.abs()) {
            convexity_violations += 1;
        }
    }
    ok &= convexity_violations == 0;
    Ok((
        ok,
        format!(
            "max |fd - derivative| {worst_fd:.2e}, max knot-curvature error {worst_jump:.2e}, \
             convexity violations {convexity_violations}/100000"
        ),
    ))
}

fn restricted_pair() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for base in [BaseLoss::Logistic, BaseLoss::Exponential] {
        let spec = LinearCoreSpec::symmetric(base);
        for _ in 0..1000 {
            let a: f64 = rng.random_range(0.0..1.0);
            let b: f64 = rng.random_range(0.0..1.0);
            let (closed, _) = restricted_pair_infimum(base, a, b)?;
            let numeric = restricted_pair_infimum_numeric(&spec, a, b)?;
            worst = worst.max((closed - numeric.value).abs());
        }
    }
    Ok((worst <= 1e-9, format!("max |closed form - numeric| {worst:.2e} over 2000 pairs")))
}

fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> Result<CategoricalDistribution> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0f64).powi(2)).collect();
    CategoricalDistribution::from_weights(&w)
}

fn random_scores(rng: &mut ChaCha8Rng, n: usize) -> Result<ScoreTable> {
    ScoreTable::new((0..n).map(|_| rng.random_range(-3.0..3.0)).collect())
}

fn multiclass_consistency() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = f64::NEG_INFINITY;
    let mut draws = 0usize;
    for side in [Side::Symmetric, Side::OneSided] {
        let spec = LinearCoreSpec::new(BaseLoss::Logistic, side, 1.0)?;
        for n in 2..=5 {
            for _ in 0..2500 {
                let p = random_distribution(&mut rng, n)?;
                let s = random_scores(&mut rng, n)?;
                let r = mc_conditional_regrets(&spec, &p, &s)?;
                worst = worst.max(r.target - r.surrogate);
                draws += 1;
            }
        }
    }
    Ok((
        worst <= 1e-8,
        format!("max(regret_01 - regret_surrogate) {worst:.3e} over {draws} draws"),
    ))
}

fn structured_consistency() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let spec = LinearCoreSpec::one_sided(BaseLoss::Logistic);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..10_000 {
        let n = 3 + i % 4;
        let ell: Vec<f64> = (0..n * n)
            .map(|k| if k / n == k % n { 0.0 } else { rng.random_range(0.0..1.0) })
            .collect();
        let loss = LossMatrix::new(n, ell)?;
        let p = random_distribution(&mut rng, n)?;
        let s = random_scores(&mut rng, n)?;
        let r = structured_conditional_regrets(&spec, &p, &s, &loss)?;
        worst = worst.max(r.target - r.surrogate);
    }
    Ok((
        worst <= 1e-8,
        format!("max(regret_target - regret_surrogate) {worst:.3e} over 10000 draws"),
    ))
}

fn random_instance(rng: &mut ChaCha8Rng, labels: usize, dim: usize, len: usize, coarse: bool) -> Result<(ChainModel, Vec<Vec<f64>>, Vec<usize>)> {
    let draw = |rng: &mut ChaCha8Rng| -> f64 {
        if coarse {
            rng.random_range(-1..=1) as f64
        } else {
            rng.random_range(-1.5..1.5)
        }
    };
    let w: Vec<f64> = (0..feature_len(labels, dim)).map(|_| draw(rng)).collect();
    let x: Vec<Vec<f64>> = (0..len).map(|_| (0..dim).map(|_| draw(rng)).collect()).collect();
    let y: Vec<usize> = (0..len).map(|_| rng.random_range(0..labels)).collect();
    Ok((ChainModel::from_weights(labels, dim, w)?, x, y))
}

/// First index attaining the maximum, treating values within `1e-9`
/// (relative) of it as tied.
fn first_maximizer(values: &[f64]) -> usize {
    let best = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .position(|v| *v >= best - 1e-9 * (1.0 + best.abs()))
        .unwrap_or(0)
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn exact_inference() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_score: f64 = 0.0;
    let mut worst_partition: f64 = 0.0;
    let mut worst_marginal: f64 = 0.0;
    let mut path_mismatches = 0usize;
    for i in 0..500 {
        let labels = rng.random_range(2..=6usize);
        let max_len = (4096f64.ln() / (labels as f64).ln()).floor() as usize;
        let len = rng.random_range(1..=max_len.min(7));
        let dim = rng.random_range(1..=3);
        let (model, x, y) = random_instance(&mut rng, labels, dim, len, i % 4 == 0)?;
        let seqs = enumerate_sequences(labels, len)?;
        let scores: Vec<f64> = seqs.iter().map(|s| sequence_score(&model, &x, s)).collect::<Result<_>>()?;

        let aug_scores: Vec<f64> = seqs
            .iter()
            .zip(&scores)
            .map(|(s, v)| Ok(v + hamming_loss(s, &y)?))
            .collect::<Result<_>>()?;
        let (best, best_aug) = (first_maximizer(&scores), first_maximizer(&aug_scores));
        let (path, score) = viterbi(&model, &x)?;
        let (aug_path, aug) = loss_augmented_viterbi(&model, &x, &y)?;
        path_mismatches += usize::from(path != seqs[best]) + usize::from(aug_path != seqs[best_aug]);
        worst_score = worst_score
            .max((score - scores[best]).abs())
            .max((aug - aug_scores[best_aug]).abs());

        let marginals = forward_backward(&model, &x)?;
        let log_z = log_sum_exp(&scores);
        worst_partition = worst_partition.max((marginals.log_partition - log_z).abs());
        let mut unary = vec![0.0; len * labels];
        for (k, s) in seqs.iter().enumerate() {
            let p = (scores[k] - log_z).exp();
            for (j, &l) in s.iter().enumerate() {
                unary[j * labels + l] += p;
            }
        }
        for j in 0..len {
            for (a, b) in marginals.unary_row(j).iter().zip(&unary[j * labels..(j + 1) * labels]) {
                worst_marginal = worst_marginal.max((a - b).abs());
            }
        }
    }
    let ok = path_mismatches == 0 && worst_score <= 1e-8 && worst_partition <= 1e-8 && worst_marginal <= 1e-8;
    Ok((
        ok,
        format!(
            "path mismatches {path_mismatches}, score error {worst_score:.2e}, log-partition error \
             {worst_partition:.2e}, marginal error {worst_marginal:.2e} over 500 instances"
        ),
    ))
}

/// Largest deviation between `analytic` and central differences of `f`,
/// relative to `max(1, |analytic|)`.
fn fd_error<F: FnMut(&[f64]) -> Result<f64>>(point: &[f64], analytic: &[f64], mut f: F) -> Result<f64> {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut p = point.to_vec();
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let up = f(&p)?;
        p[i] = orig - h;
        let down = f(&p)?;
        p[i] = orig;
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - analytic[i]).abs() / analytic[i].abs().max(1.0));
    }
    Ok(worst)
}

fn gradient_checks() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = [0.0f64; 5];
    let table = |v: &[f64]| ScoreTable::new(v.to_vec());
    for i in 0..100 {
        let n = rng.random_range(2..=6);
        let y = rng.random_range(0..n);
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
        let spec = if i % 2 == 0 {
            LinearCoreSpec::symmetric(BaseLoss::Logistic)
        } else {
            LinearCoreSpec::one_sided(BaseLoss::Exponential)
        };
        let g = mc_sum_loss_gradient(&spec, &table(&s)?, y)?;
        worst[0] = worst[0].max(fd_error(&s, &g, |v| mc_sum_loss(&spec, &table(v)?, y))?);
        let g = ce_gradient(&table(&s)?, y)?;
        worst[1] = worst[1].max(fd_error(&s, &g, |v| ce_loss(&table(v)?, y))?);
        let q = rng.random_range(0.05..=1.0);
        let g = gce_gradient(&table(&s)?, y, q)?;
        worst[2] = worst[2].max(fd_error(&s, &g, |v| gce_loss(&table(v)?, y, q))?);

        let labels = rng.random_range(2..=3);
        let len = rng.random_range(1..=4);
        let (model, x, yy) = random_instance(&mut rng, labels, 2, len, false)?;
        let (_, g) = crf_nll_and_gradient(&model, &x, &yy)?;
        worst[3] = worst[3].max(fd_error(model.weights(), &g, |w| {
            let m = ChainModel::from_weights(labels, 2, w.to_vec())?;
            Ok(crf_nll_and_gradient(&m, &x, &yy)?.0)
        })?);
        let opts = ExactSumLoss::new(spec);
        let g = structured_sum_loss_gradient_exact(&opts, &model, &x, &yy)?;
        worst[4] = worst[4].max(fd_error(model.weights(), &g, |w| {
            let m = ChainModel::from_weights(labels, 2, w.to_vec())?;
            structured_sum_loss_exact(&opts, &m, &x, &yy)
        })?);
    }
    let ok = worst.iter().all(|w| *w <= 1e-5);
    Ok((
        ok,
        format!(
            "max relative fd error: sum loss {:.1e}, ce {:.1e}, gce {:.1e}, crf {:.1e}, structured sum loss {:.1e}",
            worst[0], worst[1], worst[2], worst[3], worst[4]
        ),
    ))
}

fn pair_unbiasedness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let spec = LinearCoreSpec::one_sided(BaseLoss::Logistic);
    let shapes = [
        (2, 1),
        (2, 2),
        (2, 3),
        (2, 4),
        (2, 5),
        (2, 6),
        (3, 1),
        (3, 2),
        (3, 3),
        (4, 2),
        (4, 3),
        (5, 2),
        (8, 2),
    ];
    let mut worst: f64 = 0.0;
    for (i, &(labels, len)) in shapes.iter().enumerate() {
        let rate = [0.3, 0.5, 0.7][i % 3];
        let proposal = PairProposal::new(rate, InnerProposal::UniformFull)?;
        let (model, x, y) = random_instance(&mut rng, labels, 2, len, false)?;
        let mean = lc_pair_expectation(&model, &x, &y, &spec, &proposal)?;
        let exact = PairEstimator { spec, proposal }
            .expectation(&model, &x, &y)?
            .ok_or_else(|| Error::Unsupported("instance too large to enumerate".into()))?;
        for (a, b) in mean.iter().zip(&exact) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok((
        worst <= 1e-10,
        format!("max |E[estimate] - gradient| {worst:.2e} over {} instances", shapes.len()),
    ))
}

fn variance_bound() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let spec = LinearCoreSpec::one_sided(BaseLoss::Logistic);
    let (model, x, y) = random_instance(&mut rng, 3, 3, 4, false)?;
    let r = feature_radius_of(&x);
    let mut ok = true;
    let mut variances = Vec::new();
    let mut parts = Vec::new();
    for k in [1, 4, 16, 64] {
        let v = empirical_gradient_variance(&KSampleEstimator { spec, k }, &model, &x, &y, 10_000, &mut rng)?;
        let bound = 4.0 * r * r / k as f64;
        ok &= v <= bound;
        parts.push(format!("K={k}: {v:.4} <= {bound:.2}"));
        variances.push(v);
    }
    let ratio = variances[1] / (variances[0] / 4.0);
    ok &= in_range(ratio, 0.8, 1.2);
    parts.push(format!("var(4)/(var(1)/4) = {ratio:.3}"));
    Ok((ok, parts.join(", ")))
}

fn runtime_scaling() -> Check {
    let report = run_scaling(&ScalingConfig::default())?;
    let t = |m, y| {
        report
            .seconds(m, y)
            .ok_or_else(|| Error::Numeric(format!("missing timing for {} at {y}", m.name())))
    };
    let ssvm_ratio = t(Objective::Ssvm, 400)? / t(Objective::Ssvm, 100)?;
    let lc_ratio = t(Objective::Lincore, 400)? / t(Objective::Lincore, 100)?;
    let speedup = t(Objective::Ssvm, 400)? / t(Objective::Lincore, 400)?;
    let flagged = report.rows.iter().filter(|r| r.cv_flag).count();
    let ok = ssvm_ratio >= 4.0 && lc_ratio <= 2.0 && speedup >= 5.0;
    Ok((
        ok,
        format!(
            "ssvm 400/100 {ssvm_ratio:.2}, lincore 400/100 {lc_ratio:.2}, speedup at 400 {speedup:.1}x, \
             {flagged} jittery rows"
        ),
    ))
}

fn sequence_training() -> Check {
    let base = TrainSeqConfig::default();
    let lincore = run_train_seq(&TrainSeqConfig {
        objective: Objective::Lincore,
        ..base.clone()
    })?;
    let ssvm = run_train_seq(&TrainSeqConfig {
        objective: Objective::Ssvm,
        ..base.clone()
    })?;
    let ksample = run_train_seq(&TrainSeqConfig {
        objective: Objective::LincoreKsample,
        ..base
    })?;
    let (lc_err, ssvm_err) = (lincore.final_test_error(), ssvm.final_test_error());
    let (lc_sd, ssvm_sd) = (lincore.terminal_objective_std(0.1), ssvm.terminal_objective_std(0.1));
    let ok = lc_err <= 0.05 && ssvm_err <= 0.05 && ssvm_sd > lc_sd;
    Ok((
        ok,
        format!(
            "test error lincore {lc_err:.3}, ssvm {ssvm_err:.3}; terminal objective sd ssvm {ssvm_sd:.2e} vs \
             lincore {lc_sd:.2e} (k-sample variant: error {:.3}, sd {:.2e})",
            ksample.final_test_error(),
            ksample.terminal_objective_std(0.1)
        ),
    ))
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    sorted[((sorted.len() - 1) as f64 * q).round() as usize]
}

fn noise_robustness() -> Check {
    let rates = [0.3, 0.4];
    let mut wins = [0usize; 2];
    let mut lc_noisy = Vec::new();
    let mut ce_noisy = Vec::new();
    let seeds = 5;
    let mut lc_name = String::new();
    for seed in 0..seeds {
        let config = NoiseConfig {
            noise_rates: rates.to_vec(),
            histogram_noise_rate: 0.4,
            seed,
            ..NoiseConfig::default()
        };
        lc_name = LinearCoreSpec::new(config.base, config.side, config.tau)?.name();
        let report = run_noise(&config)?;
        for (i, &rate) in rates.iter().enumerate() {
            let lc = report.accuracy(&lc_name, rate).unwrap_or(f64::NAN);
            let ce = report.accuracy("ce", rate).unwrap_or(f64::NAN);
            wins[i] += usize::from(lc >= ce);
        }
        lc_noisy.extend(report.gradients.lc_noisy);
        ce_noisy.extend(report.gradients.ce_noisy);
    }
    if lc_noisy.is_empty() || ce_noisy.is_empty() {
        return Err(Error::Numeric("no flipped training labels".into()));
    }
    let saturated = lc_noisy.iter().filter(|m| (**m - 1.0).abs() <= 1e-9).count() as f64 / lc_noisy.len() as f64;
    ce_noisy.sort_by(f64::total_cmp);
    let spread = quantile(&ce_noisy, 0.95) - quantile(&ce_noisy, 0.05);
    let majority = seeds as usize / 2 + 1;
    let ok = wins.iter().all(|w| *w >= majority) && saturated >= 0.9 && spread >= 0.2;
    Ok((
        ok,
        format!(
            "{lc_name} >= ce on {}/{seeds} seeds at rho=0.3 and {}/{seeds} at rho=0.4; noisy-group saturated \
             fraction {saturated:.3}; ce noisy 5-95% spread {spread:.3}",
            wins[0], wins[1]
        ),
    ))
}

/// CSV text of `path` with the named columns removed.
fn deterministic_part(path: &Path, skip: &[String]) -> Result<Vec<Vec<String>>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let keep: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !skip.iter().any(|s| s == h))
        .map(|(i, _)| i)
        .collect();
    let mut rows = vec![keep.iter().map(|&i| headers[i].to_string()).collect()];
    for record in reader.records() {
        let record = record?;
        rows.push(keep.iter().map(|&i| record[i].to_string()).collect());
    }
    Ok(rows)
}

fn scratch_dir(tag: &str) -> Result<PathBuf> {
    let dir = std::env::temp_dir().join(format!("lincore-{tag}-{}", std::process::id()));
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_all_outputs(dir: &Path) -> Result<Vec<OutputFile>> {
    let mut outputs = run_rates(&RatesConfig::default())?.write(dir)?;
    outputs.extend(run_stability(&StabilityConfig::default())?.write(dir)?);
    outputs.extend(
        run_scaling(&ScalingConfig {
            labels: vec![10, 20],
            warmup_batches: 5,
            timed_batches: 20,
            ..ScalingConfig::default()
        })?
        .write(dir)?,
    );
    outputs.extend(
        run_noise(&NoiseConfig {
            epochs: 5,
            ..NoiseConfig::default()
        })?
        .write(dir)?,
    );
    for objective in [Objective::Ssvm, Objective::Crf, Objective::Lincore, Objective::LincoreKsample] {
        let sub = dir.join(objective.name());
        std::fs::create_dir_all(&sub)?;
        let files = run_train_seq(&TrainSeqConfig {
            objective,
            iterations: 2000,
            ..TrainSeqConfig::default()
        })?
        .write(&sub)?;
        outputs.extend(files.into_iter().map(|f| OutputFile {
            name: format!("{}/{}", objective.name(), f.name),
            ..f
        }));
    }
    Ok(outputs)
}

fn determinism() -> Check {
    let a = scratch_dir("determinism-a")?;
    let b = scratch_dir("determinism-b")?;
    let outputs = write_all_outputs(&a)?;
    write_all_outputs(&b)?;
    let mut compared = 0;
    let mut differing = Vec::new();
    for out in outputs.iter().filter(|o| o.name.ends_with(".csv")) {
        let skip = &out.nondeterministic_columns;
        if deterministic_part(&a.join(&out.name), skip)? != deterministic_part(&b.join(&out.name), skip)? {
            differing.push(out.name.clone());
        }
        compared += 1;
    }
    for out in outputs.iter().filter(|o| !o.name.ends_with(".csv")) {
        if std::fs::read(a.join(&out.name))? != std::fs::read(b.join(&out.name))? {
            differing.push(out.name.clone());
        }
    }
    std::fs::remove_dir_all(&a)?;
    std::fs::remove_dir_all(&b)?;
    Ok((
        differing.is_empty(),
        format!(
            "{compared} CSV files compared, differing: {}",
            if differing.is_empty() { "none".to_string() } else { differing.join(", ") }
        ),
    ))
}
