//! Error-probability estimation, the true-hyperplane oracle, convergence and
//! margin studies, hyperplane-distance Monte Carlo and the noise report.
//!
//! Every stochastic routine draws from block-indexed substreams, so results
//! are identical under [`Exec::Sequential`] and [`Exec::Parallel`].

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Result, SimError};
use crate::exec::Exec;
use crate::gaussian_optics::{
    build_network_covariance, db_below_sql, separable_network_covariance, HomodyneSampler,
    SensorCovariance, SqueezedSourceSpec, VqcSetting, VACUUM_VARIANCE,
};
use crate::rng::{SeedStreams, SimRng, Stream};
use crate::stats::{sign_test_p_value, RunningStats};
use crate::trainer::{classify, train, ClassifierMode, Hyperplane, SpsaConfig, TrainingTrajectory};
use crate::transduction::{generate_dataset, TaskSpec};

pub use crate::stats::ErrorEstimate;

/// Default test-set layout: five repetitions of 1000 points.
pub const DEFAULT_REPS: usize = 5;
pub const DEFAULT_N_TEST: usize = 1000;
pub const DEFAULT_MARGINS: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];
pub const MIN_ORACLE_SAMPLES: usize = 100_000;

const ORACLE_BLOCK: usize = 1 << 16;

fn rep_rngs(streams: &SeedStreams, rep: usize) -> (SimRng, SimRng) {
    let r = rep as u64;
    (
        streams.block(Stream::Test, 2 * r),
        streams.block(Stream::Test, 2 * r + 1),
    )
}

/// Covariance the mode measures with when running hyperplane `h`.
pub fn mode_covariance(mode: &ClassifierMode, h: &Hyperplane) -> Result<SensorCovariance> {
    mode.noise_covariance(&mode.circuit_for(h)?)
}

fn mismatch_fraction(
    h: &Hyperplane,
    cov: &SensorCovariance,
    task: &TaskSpec,
    n: usize,
    data_rng: &mut SimRng,
    noise_rng: &mut SimRng,
) -> Result<f64> {
    let data = generate_dataset(task, n, data_rng)?;
    let mut sampler = HomodyneSampler::new(cov)?;
    let mut meas = vec![0.0; task.dim()];
    let mut wrong = 0usize;
    for d in &data {
        sampler.sample_into(&d.alpha, &mut meas, noise_rng);
        if classify(h, &meas) != d.label {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / n as f64)
}

/// Fraction of fresh test points misclassified by `h` under the mode's noise,
/// averaged over `reps` independent test sets.
///
/// Reported as the mismatch fraction, i.e. half of `sum |y~ - y| / N` for
/// `+/-1` labels.
pub fn estimate_error_probability(
    h: &Hyperplane,
    mode: &ClassifierMode,
    task: &TaskSpec,
    n_test: usize,
    reps: usize,
    streams: &SeedStreams,
    exec: Exec,
) -> Result<ErrorEstimate> {
    if n_test == 0 || reps == 0 {
        return Err(SimError::config(
            "evaluation",
            "n_test and reps must be at least 1",
        ));
    }
    if h.dim() != task.dim() {
        return Err(SimError::Dimension {
            context: "hyperplane vs task",
            expected: task.dim(),
            got: h.dim(),
        });
    }
    let cov = mode_covariance(mode, h)?;
    let fractions = exec.try_map_indexed(reps, |r| {
        let (mut data_rng, mut noise_rng) = rep_rngs(streams, r);
        mismatch_fraction(h, &cov, task, n_test, &mut data_rng, &mut noise_rng)
    })?;
    Ok(ErrorEstimate::from_fractions(&fractions, n_test))
}

/// Misclassification probability of the true hyperplane under `cov`, by
/// Monte Carlo over `n_mc` points. This is the floor a trained classifier
/// converges to.
pub fn expected_error_oracle(
    task: &TaskSpec,
    cov: &SensorCovariance,
    n_mc: usize,
    streams: &SeedStreams,
    exec: Exec,
) -> Result<f64> {
    if n_mc < MIN_ORACLE_SAMPLES {
        return Err(SimError::config(
            "oracle.n_mc",
            format!("{n_mc} < {MIN_ORACLE_SAMPLES}"),
        ));
    }
    if cov.dim() != task.dim() {
        return Err(SimError::Dimension {
            context: "oracle covariance",
            expected: task.dim(),
            got: cov.dim(),
        });
    }
    let truth = Hyperplane::new(task.w_t().to_vec(), task.b_t())?;
    let blocks = n_mc.div_ceil(ORACLE_BLOCK);
    let wrong = exec.try_map_indexed(blocks, |blk| {
        let n = ORACLE_BLOCK.min(n_mc - blk * ORACLE_BLOCK);
        let mut data_rng = streams.block(Stream::Oracle, 2 * blk as u64);
        let mut noise_rng = streams.block(Stream::Oracle, 2 * blk as u64 + 1);
        mismatch_fraction(&truth, cov, task, n, &mut data_rng, &mut noise_rng).map(|f| f * n as f64)
    })?;
    Ok(wrong.iter().sum::<f64>() / n_mc as f64)
}

/// Binomial standard error of an oracle value.
pub fn oracle_standard_error(p: f64, n_mc: usize) -> f64 {
    (p * (1.0 - p) / n_mc as f64).sqrt()
}

/// Oracle covariance for a mode: the circuit realized for the true hyperplane.
pub fn oracle_covariance(mode: &ClassifierMode, task: &TaskSpec) -> Result<SensorCovariance> {
    mode_covariance(mode, &Hyperplane::new(task.w_t().to_vec(), task.b_t())?)
}

/// Checkpoint steps `0, stride, 2 stride, ...`, always ending at `n_steps`.
pub fn checkpoint_steps(n_steps: usize, stride: usize) -> Vec<usize> {
    let mut steps: Vec<usize> = (0..=n_steps).step_by(stride.max(1)).collect();
    if steps.last() != Some(&n_steps) {
        steps.push(n_steps);
    }
    steps
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub n_test: usize,
    pub reps: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            n_test: DEFAULT_N_TEST,
            reps: DEFAULT_REPS,
        }
    }
}

/// Trains once and estimates the error probability at every checkpoint with
/// the hyperplane and circuit as they were at that step.
#[allow(clippy::too_many_arguments)]
pub fn convergence_study(
    mode: &ClassifierMode,
    task: &TaskSpec,
    init: &Hyperplane,
    cfg: &SpsaConfig,
    checkpoint_stride: usize,
    eval: EvalSettings,
    streams: &SeedStreams,
    exec: Exec,
) -> Result<TrainingTrajectory> {
    if checkpoint_stride == 0 {
        return Err(SimError::config("checkpoint_stride", "must be at least 1"));
    }
    let mut traj = train(mode, task, init, cfg, streams)?;
    let steps = checkpoint_steps(cfg.n_steps, checkpoint_stride);
    let estimates = exec.try_map_indexed(steps.len(), |i| {
        let h = &traj.records[steps[i]].hyperplane;
        // inner loop stays sequential; checkpoints already fill the pool
        estimate_error_probability(
            h,
            mode,
            task,
            eval.n_test,
            eval.reps,
            streams,
            Exec::Sequential,
        )
    })?;
    traj.checkpoints = steps.into_iter().zip(estimates).collect();
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub mode: &'static str,
    pub margin: f64,
    pub estimate: ErrorEstimate,
}

/// Error estimates on test sets of each margin with the optimized
/// hyperplanes (and their circuits) held fixed.
pub fn margin_sweep(
    trained: &[(ClassifierMode, Hyperplane)],
    task: &TaskSpec,
    margins: &[f64],
    eval: EvalSettings,
    streams: &SeedStreams,
    exec: Exec,
) -> Result<Vec<SweepRow>> {
    let cells: Vec<(usize, usize)> = (0..trained.len())
        .flat_map(|m| (0..margins.len()).map(move |e| (m, e)))
        .collect();
    exec.try_map_indexed(cells.len(), |i| {
        let (mi, ei) = cells[i];
        let (mode, h) = &trained[mi];
        let t = task.with_margin(margins[ei])?;
        let estimate = estimate_error_probability(
            h,
            mode,
            &t,
            eval.n_test,
            eval.reps,
            streams,
            Exec::Sequential,
        )?;
        Ok(SweepRow {
            mode: mode.name(),
            margin: margins[ei],
            estimate,
        })
    })
}

/// Initial-hyperplane distribution for the distance study.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSampler {
    /// `w` uniform on the unit sphere, folded into the orthant of the true
    /// weights' signs; `b` uniform in `[b_lo, b_hi]`.
    OrthantSphere {
        b_lo: f64,
        b_hi: f64,
    },
    Fixed {
        w: Vec<f64>,
        b: f64,
    },
}

impl Default for InitSampler {
    fn default() -> Self {
        InitSampler::OrthantSphere {
            b_lo: -1.0,
            b_hi: 1.0,
        }
    }
}

impl InitSampler {
    pub fn sample<R: Rng + ?Sized>(&self, task: &TaskSpec, rng: &mut R) -> Result<Hyperplane> {
        match self {
            InitSampler::OrthantSphere { b_lo, b_hi } => {
                if !(b_lo <= b_hi) {
                    return Err(SimError::config(
                        "init_sampler.b_lo",
                        "b_lo must not exceed b_hi",
                    ));
                }
                let g: Vec<f64> = (0..task.dim())
                    .map(|_| rng.sample(StandardNormal))
                    .collect();
                let norm = g.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
                let w = g
                    .iter()
                    .zip(task.w_t())
                    .map(|(x, t)| x.abs() / norm * if *t < 0.0 { -1.0 } else { 1.0 })
                    .collect();
                let b = if b_lo == b_hi {
                    *b_lo
                } else {
                    rng.random_range(*b_lo..*b_hi)
                };
                Hyperplane::new(w, b)
            }
            InitSampler::Fixed { w, b } => Hyperplane::new(w.clone(), *b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceCurve {
    pub mode: &'static str,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub trials: usize,
}

impl DistanceCurve {
    pub fn final_mean(&self) -> f64 {
        *self
            .mean
            .last()
            .expect("curve has at least the initial step")
    }

    pub fn final_std(&self) -> f64 {
        *self
            .std
            .last()
            .expect("curve has at least the initial step")
    }
}

/// Per-step distance of trained hyperplanes to the true one, averaged over
/// trials. Distances are taken after rescaling each hyperplane to unit `|w|`,
/// since the raw scale does not change the classifier. Trial `i` uses the streams of seed `master ^ i` for its initial
/// hyperplane, data, noise and perturbations, so two modes run with the same
/// `streams` are paired.
pub fn mc_distance_study(
    mode: &ClassifierMode,
    task: &TaskSpec,
    n_trials: usize,
    cfg: &SpsaConfig,
    sampler: &InitSampler,
    streams: &SeedStreams,
    exec: Exec,
) -> Result<DistanceCurve> {
    if n_trials < 2 {
        return Err(SimError::config("mc.n_trials", "need at least 2 trials"));
    }
    let per_trial = exec.try_map_indexed(n_trials, |i| {
        let ts = streams.trial(i as u64);
        let init = sampler.sample(task, &mut ts.rng(Stream::Init))?;
        let traj = train(mode, task, &init, cfg, &ts)?;
        traj.records
            .iter()
            .map(|r| {
                Ok(r.hyperplane
                    .normalized()?
                    .distance_to(task.w_t(), task.b_t()))
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let steps = cfg.n_steps + 1;
    let stats = per_trial
        .iter()
        .fold(vec![RunningStats::new(); steps], |mut acc, d| {
            for (s, x) in acc.iter_mut().zip(d) {
                s.push(*x);
            }
            acc
        });
    Ok(DistanceCurve {
        mode: mode.name(),
        mean: stats.iter().map(|s| s.mean()).collect(),
        std: stats
            .iter()
            .map(|s| s.population_variance().sqrt())
            .collect(),
        trials: n_trials,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseReport {
    pub n_s_total: f64,
    pub eta: f64,
    pub sensors: usize,
    pub sql: f64,
    pub entangled_variance: f64,
    pub separable_variance: f64,
    pub entangled_db_below_sql: f64,
    pub separable_db_below_sql: f64,
    pub separable_over_entangled: f64,
}

/// Matched-weight noise of the entangled network against separable squeezing
/// with the same total photon number split evenly over `m` sensors.
/// The ideal gap at the reported operating point is about 9.9%; the measured
/// gap on hardware was 11.7%.
pub fn noise_comparison_report(n_s_total: f64, eta: f64, m: usize) -> Result<NoiseReport> {
    if m == 0 {
        return Err(SimError::Dimension {
            context: "sensor count",
            expected: 1,
            got: 0,
        });
    }
    let source = SqueezedSourceSpec::new(n_s_total)?;
    let vqc = VqcSetting::uniform(m);
    let w: Vec<f64> = vqc.v().iter().map(|v| v.sqrt()).collect();
    let entangled = build_network_covariance(source, &vqc, eta)?.weighted_sum_variance(&w)?;
    let separable =
        separable_network_covariance(n_s_total / m as f64, eta, m)?.weighted_sum_variance(&w)?;
    Ok(NoiseReport {
        n_s_total,
        eta,
        sensors: m,
        sql: VACUUM_VARIANCE,
        entangled_variance: entangled,
        separable_variance: separable,
        entangled_db_below_sql: db_below_sql(entangled),
        separable_db_below_sql: db_below_sql(separable),
        separable_over_entangled: separable / entangled,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignTest {
    pub wins: u64,
    pub trials: u64,
    pub p_value: f64,
}

/// One-sided sign test that `lower[i] < higher[i]`; ties are dropped.
pub fn paired_sign_test(lower: &[f64], higher: &[f64]) -> SignTest {
    let (mut wins, mut trials) = (0u64, 0u64);
    for (a, b) in lower.iter().zip(higher) {
        if a != b {
            trials += 1;
            if a < b {
                wins += 1;
            }
        }
    }
    SignTest {
        wins,
        trials,
        p_value: sign_test_p_value(wins, trials),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn slaen() -> ClassifierMode {
        ClassifierMode::slaen(3.3, 0.53).unwrap()
    }

    #[test]
    fn checkpoint_grids() {
        assert_eq!(
            checkpoint_steps(200, 20),
            (0..=200).step_by(20).collect::<Vec<_>>()
        );
        let s = checkpoint_steps(390, 30);
        assert_eq!(s.len(), 14);
        assert_eq!(*s.last().unwrap(), 390);
        assert_eq!(checkpoint_steps(10, 4), vec![0, 4, 8, 10]);
    }

    #[test]
    fn noiseless_true_hyperplane_never_errs() {
        let task = TaskSpec::rf_direction_2d(0.1).unwrap();
        let cov = SensorCovariance::zeros(2);
        let p = expected_error_oracle(
            &task,
            &cov,
            MIN_ORACLE_SAMPLES,
            &SeedStreams::new(1),
            Exec::default(),
        )
        .unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn huge_noise_approaches_chance_level() {
        let task = TaskSpec::rf_direction_2d(0.6).unwrap();
        let n = 1_000_000;
        // exact value by quadrature over the triangular density of a1 - a2
        for (var, exact) in [
            (1e3, 0.471_212_906_356_487_27),
            (1e4, 0.490_883_208_047_493_75),
        ] {
            let cov = SensorCovariance::new(nalgebra::DMatrix::identity(2, 2) * var).unwrap();
            let p = expected_error_oracle(&task, &cov, n, &SeedStreams::new(2), Exec::default())
                .unwrap();
            assert!(
                (p - exact).abs() < 4.0 * oracle_standard_error(exact, n),
                "{var}: {p}"
            );
        }
        let cov = SensorCovariance::new(nalgebra::DMatrix::identity(2, 2) * 1e4).unwrap();
        let p =
            expected_error_oracle(&task, &cov, n, &SeedStreams::new(3), Exec::default()).unwrap();
        assert!((p - 0.5).abs() < 0.02);
    }

    #[test]
    fn oracle_rejects_small_budgets() {
        let task = TaskSpec::rf_direction_2d(0.6).unwrap();
        let cov = SensorCovariance::shot_noise(2);
        assert!(
            expected_error_oracle(&task, &cov, 1000, &SeedStreams::new(2), Exec::default())
                .is_err()
        );
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let task = TaskSpec::mean_amplitude_3d(0.6).unwrap();
        let cov = SensorCovariance::shot_noise(3);
        let s = SeedStreams::new(5);
        let a = expected_error_oracle(&task, &cov, 200_000, &s, Exec::Sequential).unwrap();
        let b = expected_error_oracle(&task, &cov, 200_000, &s, Exec::Parallel).unwrap();
        assert_eq!(a, b);

        let cfg = SpsaConfig::default().with_steps(40);
        let sampler = InitSampler::default();
        let c1 =
            mc_distance_study(&slaen(), &task, 6, &cfg, &sampler, &s, Exec::Sequential).unwrap();
        let c2 = mc_distance_study(&slaen(), &task, 6, &cfg, &sampler, &s, Exec::Parallel).unwrap();
        assert_eq!(c1, c2);
    }

    #[test]
    fn zero_noise_true_hyperplane_makes_no_errors() {
        let task = TaskSpec::rf_direction_2d(0.6).unwrap();
        let truth = Hyperplane::new(task.w_t().to_vec(), 0.0).unwrap();
        let cov = SensorCovariance::zeros(2);
        let (mut d, mut n) = rep_rngs(&SeedStreams::new(3), 0);
        assert_eq!(
            mismatch_fraction(&truth, &cov, &task, 1000, &mut d, &mut n).unwrap(),
            0.0
        );
    }

    #[test]
    fn classical_estimate_at_true_hyperplane() {
        let task = TaskSpec::rf_direction_2d(0.6).unwrap();
        let truth = Hyperplane::new(task.w_t().to_vec(), 0.0).unwrap();
        let mode = ClassifierMode::ClassicalCoherent { eta: 0.53 };
        let est = estimate_error_probability(
            &truth,
            &mode,
            &task,
            1000,
            5,
            &SeedStreams::new(3),
            Exec::default(),
        )
        .unwrap();
        assert_eq!((est.reps, est.n_per_rep), (5, 1000));
        assert!(est.mean > 0.0 && est.mean < 0.05, "{est:?}");
        assert!(estimate_error_probability(
            &truth,
            &mode,
            &task,
            0,
            5,
            &SeedStreams::new(3),
            Exec::default()
        )
        .is_err());
    }

    #[test]
    fn noise_report_figures() {
        let r = noise_comparison_report(3.3, 0.53, 3).unwrap();
        assert_abs_diff_eq!(
            r.entangled_variance,
            0.126_255_165_302_619_77,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            r.separable_variance,
            0.138_734_869_930_377_42,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            r.entangled_db_below_sql,
            2.966_908_538_295_623,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            r.separable_db_below_sql,
            2.557_543_773_388_585,
            epsilon = 1e-9
        );
        let lossless_erased = noise_comparison_report(3.3, 0.0, 3).unwrap();
        assert_abs_diff_eq!(lossless_erased.entangled_variance, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(lossless_erased.separable_variance, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(
            lossless_erased.separable_over_entangled,
            1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn orthant_sampler_matches_true_signs() {
        let task = TaskSpec::rf_direction_2d(0.6).unwrap();
        let mut rng = SeedStreams::new(8).rng(Stream::Init);
        for _ in 0..200 {
            let h = InitSampler::default().sample(&task, &mut rng).unwrap();
            assert!(h.w[0] >= 0.0 && h.w[1] <= 0.0);
            assert_abs_diff_eq!(h.w.iter().map(|x| x * x).sum::<f64>(), 1.0, epsilon = 1e-12);
            assert!((-1.0..1.0).contains(&h.b));
        }
    }

    #[test]
    fn distance_mean_is_permutation_invariant() {
        let task = TaskSpec::mean_amplitude_3d(0.6).unwrap();
        let cfg = SpsaConfig::default().with_steps(30);
        let s = SeedStreams::new(21);
        let per_trial: Vec<Vec<f64>> = (0..8u64)
            .map(|i| {
                let ts = s.trial(i);
                let init = InitSampler::default()
                    .sample(&task, &mut ts.rng(Stream::Init))
                    .unwrap();
                train(&slaen(), &task, &init, &cfg, &ts)
                    .unwrap()
                    .records
                    .iter()
                    .map(|r| {
                        r.hyperplane
                            .normalized()
                            .unwrap()
                            .distance_to(task.w_t(), 0.0)
                    })
                    .collect()
            })
            .collect();
        let mean_at = |order: &[usize], step: usize| {
            order
                .iter()
                .map(|&i| per_trial[i][step])
                .collect::<RunningStats>()
                .mean()
        };
        let fwd: Vec<usize> = (0..8).collect();
        let rev: Vec<usize> = (0..8).rev().collect();
        for step in [0, 15, 30] {
            assert_abs_diff_eq!(mean_at(&fwd, step), mean_at(&rev, step), epsilon = 1e-12);
        }
        let curve = mc_distance_study(
            &slaen(),
            &task,
            8,
            &cfg,
            &InitSampler::default(),
            &s,
            Exec::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(curve.mean[30], mean_at(&fwd, 30), epsilon = 1e-12);
    }

    #[test]
    fn sign_test_counts_ties_out() {
        let t = paired_sign_test(&[0.1, 0.2, 0.3, 0.4], &[0.2, 0.2, 0.4, 0.5]);
        assert_eq!((t.wins, t.trials), (3, 3));
        assert_abs_diff_eq!(t.p_value, 0.125, epsilon = 1e-15);
    }
}
