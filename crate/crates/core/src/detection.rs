//! Detectability of the latent reliability state from learning dynamics.
//!
//! Scores are the raw monitor statistics themselves (no trained classifier):
//! the full-window instability statistic for trajectory-level detection, the
//! one-step squared increment for local detection. Detection quality is the
//! probability that a score drawn from an unreliable segment outranks one
//! from a reliable segment (ROC AUC in its rank-statistic form, ties counted
//! one half). Scores are collected only from steady-state portions of each
//! segment, skipping the first `2 * W` steps after every regime switch.

use crate::config::ExperimentConfig;
use crate::error::{MtrError, Result};
use crate::learners::{run_learner, LearnerConfig, LearnerKind};
use crate::record::RunRecord;
use crate::rng::{streams, RngStream};
use crate::schedule::{Regime, RegimeSchedule};
use crate::stats;

/// Feature scores split by the latent regime they were observed under.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScores {
    pos: Vec<f64>,
    neg: Vec<f64>,
}

impl LabeledScores {
    /// `pos` holds scores from unreliable segments, `neg` from reliable ones.
    pub fn new(pos: Vec<f64>, neg: Vec<f64>) -> Result<LabeledScores> {
        if pos.is_empty() || neg.is_empty() {
            return Err(MtrError::invalid(
                "both score classes must be nonempty for ranking",
            ));
        }
        if !stats::all_finite(&pos) || !stats::all_finite(&neg) {
            return Err(MtrError::invalid("scores must be finite"));
        }
        Ok(LabeledScores { pos, neg })
    }

    pub fn pos(&self) -> &[f64] {
        &self.pos
    }

    pub fn neg(&self) -> &[f64] {
        &self.neg
    }

    pub fn pair_count(&self) -> usize {
        self.pos.len() * self.neg.len()
    }
}

/// Probability that a random positive score outranks a random negative one,
/// ties counted 0.5. Uses exhaustive pair enumeration for small inputs and
/// the rank-based form otherwise; the two agree wherever both apply.
///
/// ```
/// use mtr_core::detection::{roc_auc, LabeledScores};
///
/// // pairs: 3>2, 3>0, 1>0 win and 1<2 loses, so 3 of 4
/// let scores = LabeledScores::new(vec![3.0, 1.0], vec![2.0, 0.0]).unwrap();
/// assert_eq!(roc_auc(&scores).unwrap(), 0.75);
/// ```
pub fn roc_auc(scores: &LabeledScores) -> Result<f64> {
    if scores.pair_count() <= 1_000_000 {
        roc_auc_exact(scores)
    } else {
        roc_auc_ranked(scores)
    }
}

/// Direct enumeration of all positive/negative pairs.
pub fn roc_auc_exact(scores: &LabeledScores) -> Result<f64> {
    let mut wins = 0.0;
    for &p in &scores.pos {
        for &n in &scores.neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Ok(wins / scores.pair_count() as f64)
}

/// Rank-statistic form: midranks over the pooled sample, then the rank-sum
/// statistic of the positive class scaled to [0, 1].
pub fn roc_auc_ranked(scores: &LabeledScores) -> Result<f64> {
    let n_pos = scores.pos.len();
    let n_neg = scores.neg.len();
    let mut pooled: Vec<(f64, bool)> = scores
        .pos
        .iter()
        .map(|&v| (v, true))
        .chain(scores.neg.iter().map(|&v| (v, false)))
        .collect();
    pooled.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).expect("non-finite score"));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i + 1;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        // midrank of the tie run [i, j); ranks are 1-based
        let midrank = (i + 1 + j) as f64 / 2.0;
        for entry in &pooled[i..j] {
            if entry.1 {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Scores gathered from one run: local (window of one), a five-step local
/// window kept for context, and the full-window trajectory statistic.
#[derive(Debug, Clone, Default)]
pub struct ScoreSet {
    pub local_pos: Vec<f64>,
    pub local_neg: Vec<f64>,
    pub local5_pos: Vec<f64>,
    pub local5_neg: Vec<f64>,
    pub traj_pos: Vec<f64>,
    pub traj_neg: Vec<f64>,
}

impl ScoreSet {
    pub fn extend(&mut self, other: &ScoreSet) {
        self.local_pos.extend_from_slice(&other.local_pos);
        self.local_neg.extend_from_slice(&other.local_neg);
        self.local5_pos.extend_from_slice(&other.local5_pos);
        self.local5_neg.extend_from_slice(&other.local5_neg);
        self.traj_pos.extend_from_slice(&other.traj_pos);
        self.traj_neg.extend_from_slice(&other.traj_neg);
    }

    pub fn local(&self) -> Result<LabeledScores> {
        LabeledScores::new(self.local_pos.clone(), self.local_neg.clone())
    }

    pub fn local5(&self) -> Result<LabeledScores> {
        LabeledScores::new(self.local5_pos.clone(), self.local5_neg.clone())
    }

    pub fn trajectory(&self) -> Result<LabeledScores> {
        LabeledScores::new(self.traj_pos.clone(), self.traj_neg.clone())
    }
}

/// Collect detection scores from a run record, conditioning on the latent
/// regime and trimming the first `2 * window` steps after every switch.
///
/// The local score is the gradient norm: for a constant-rate run the squared
/// one-step increment is `(eta * grad_norm)^2`, a strictly increasing
/// transform, so the ranking (and hence the AUC) is identical. The five-step
/// variant averages squared gradient norms for the same reason.
pub fn collect_scores(
    record: &RunRecord,
    schedule: &RegimeSchedule,
    window: usize,
) -> Result<ScoreSet> {
    let trim = 2 * window;
    let mut set = ScoreSet::default();
    let mut recent_sq: Vec<f64> = Vec::with_capacity(5);
    for step in 0..record.len() {
        let seg = schedule.segment_of(step)?;
        let gn = record.grad_norm[step];
        recent_sq.push(gn * gn);
        if recent_sq.len() > 5 {
            recent_sq.remove(0);
        }
        if step < seg.start + trim {
            continue;
        }
        let pos = seg.regime == Regime::Unreliable;
        if pos {
            set.local_pos.push(gn);
        } else {
            set.local_neg.push(gn);
        }
        if recent_sq.len() == 5 {
            let m = stats::mean(&recent_sq);
            if pos {
                set.local5_pos.push(m);
            } else {
                set.local5_neg.push(m);
            }
        }
        if let Some(s) = record.instability[step] {
            if pos {
                set.traj_pos.push(s);
            } else {
                set.traj_neg.push(s);
            }
        }
    }
    Ok(set)
}

/// Per-seed AUC values for one detection run configuration.
#[derive(Debug, Clone, Copy)]
pub struct SeedAucs {
    pub seed: u64,
    pub auc_local: f64,
    pub auc_local5: f64,
    pub auc_trajectory: f64,
}

/// Run the identifiability experiment at one drift strength: an unmodulated
/// learner on the alternating schedule, scored per seed.
pub fn identifiability_aucs(
    config: &ExperimentConfig,
    drift: f64,
    seeds: &[u64],
) -> Result<Vec<SeedAucs>> {
    let mut env = match &config.env {
        crate::env::EnvSpec::Regression(env) => env.clone(),
        other => {
            return Err(MtrError::validation(format!(
                "identifiability experiments need a regression environment, got {}",
                other.name()
            )))
        }
    };
    env.drift_strength = drift;
    let schedule = config.schedule.build()?;
    let learner = config
        .learners
        .first()
        .cloned()
        .unwrap_or_else(|| LearnerConfig::gd(LearnerKind::BaselineGd, 0.02, 50));
    let mut out = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let record = run_learner(
            &crate::env::EnvSpec::Regression(env.clone()),
            &learner,
            &schedule,
            None,
            seed,
        )?;
        let scores = collect_scores(&record, &schedule, learner.window)?;
        out.push(SeedAucs {
            seed,
            auc_local: roc_auc(&scores.local()?)?,
            auc_local5: roc_auc(&scores.local5()?)?,
            auc_trajectory: roc_auc(&scores.trajectory()?)?,
        });
    }
    Ok(out)
}

/// One point of the drift-strength sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub drift: f64,
    pub auc_local: f64,
    pub auc_trajectory: f64,
    pub per_seed: Vec<SeedAucs>,
}

/// Detectability against drift strength: per strength, run the
/// identifiability experiment and average per-seed AUCs.
pub fn detectability_sweep(
    config: &ExperimentConfig,
    drifts: &[f64],
    seeds: &[u64],
) -> Result<Vec<SweepPoint>> {
    if drifts.is_empty() {
        return Err(MtrError::invalid("sweep needs at least one drift strength"));
    }
    if drifts.windows(2).any(|w| w[0] > w[1]) {
        return Err(MtrError::invalid(
            "drift strengths must be sorted ascending",
        ));
    }
    if drifts.iter().any(|&d| d < 0.0) {
        return Err(MtrError::invalid("drift strengths must be >= 0"));
    }
    let mut points = Vec::with_capacity(drifts.len());
    for &drift in drifts {
        let per_seed = identifiability_aucs(config, drift, seeds)?;
        let auc_local = stats::mean(&per_seed.iter().map(|s| s.auc_local).collect::<Vec<_>>());
        let auc_trajectory = stats::mean(
            &per_seed
                .iter()
                .map(|s| s.auc_trajectory)
                .collect::<Vec<_>>(),
        );
        points.push(SweepPoint {
            drift,
            auc_local,
            auc_trajectory,
            per_seed,
        });
    }
    Ok(points)
}

/// Running least-squares estimation with an intercept, fed one sample at a
/// time. The generative truth has zero intercept, so a persistent label shift
/// is absorbed into the intercept estimate and the estimator drifts away from
/// the truth as biased samples accumulate.
#[derive(Debug, Clone)]
pub struct RunningLeastSquares {
    dim: usize, // including intercept
    xtx: Vec<Vec<f64>>,
    xty: Vec<f64>,
    n: usize,
}

impl RunningLeastSquares {
    pub fn new(feature_dim: usize) -> RunningLeastSquares {
        let dim = feature_dim + 1;
        RunningLeastSquares {
            dim,
            xtx: vec![vec![0.0; dim]; dim],
            xty: vec![0.0; dim],
            n: 0,
        }
    }

    pub fn push(&mut self, x: &[f64], y: f64) {
        debug_assert_eq!(x.len() + 1, self.dim);
        let mut row = Vec::with_capacity(self.dim);
        row.push(1.0);
        row.extend_from_slice(x);
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.xtx[i][j] += row[i] * row[j];
            }
            self.xty[i] += row[i] * y;
        }
        self.n += 1;
    }

    pub fn count(&self) -> usize {
        self.n
    }

    /// Solve the normal equations; `None` until enough samples have arrived
    /// for the system to be comfortably determined.
    pub fn solve(&self) -> Option<Vec<f64>> {
        if self.n < 2 * self.dim {
            return None;
        }
        solve_linear(&self.xtx, &self.xty)
    }
}

/// Gaussian elimination with partial pivoting; dimensions here are tiny.
#[allow(clippy::needless_range_loop)]
fn solve_linear(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            m[i][col]
                .abs()
                .partial_cmp(&m[j][col].abs())
                .expect("non-finite matrix entry")
        })?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in (col + 1)..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in (row + 1)..n {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}

/// One seed's estimation trace plus the checkpoint curve.
#[derive(Debug, Clone)]
pub struct EstimationRun {
    pub seed: u64,
    pub record: RunRecord,
    /// (sample count, estimation error) at each checkpoint.
    pub checkpoints: Vec<(usize, f64)>,
}

/// Aggregate error-versus-data-volume curve.
#[derive(Debug, Clone)]
pub struct ErrorCurve {
    /// (n, mean error, standard error of the mean) per checkpoint.
    pub points: Vec<(usize, f64, f64)>,
    pub runs: Vec<EstimationRun>,
}

/// Estimation error against sample count under a mid-run drift onset.
/// The estimator is the running least-squares fit above; its error is the
/// distance between the fitted weights (intercept included) and the
/// generative weights (intercept zero).
pub fn error_vs_data_curve(
    env: &crate::env::RegressionEnv,
    schedule: &RegimeSchedule,
    checkpoints: &[usize],
    seeds: &[u64],
) -> Result<ErrorCurve> {
    if checkpoints.is_empty() || checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MtrError::invalid(
            "checkpoints must be nonempty and strictly ascending",
        ));
    }
    let total = schedule.total_steps();
    if *checkpoints.last().unwrap() > total {
        return Err(MtrError::invalid(format!(
            "last checkpoint {} exceeds the schedule ({total} samples)",
            checkpoints.last().unwrap()
        )));
    }
    let mut truth = vec![0.0]; // intercept of the generative process
    truth.extend_from_slice(&env.true_weights);
    let init_error = stats::norm(&truth);

    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut rng = RngStream::new(seed, streams::ENV);
        let mut ols = RunningLeastSquares::new(env.dim);
        let mut record = RunRecord::with_capacity(total);
        let mut checkpoint_vals = Vec::with_capacity(checkpoints.len());
        let mut prev_est: Option<Vec<f64>> = None;
        let mut buffer = crate::buffer::TrajectoryBuffer::new(50)?;
        for step in 0..total {
            let (regime, phase) = schedule.phase_of(step)?;
            let (x, target) = env.sample(regime, &mut rng);
            let y = target.value();
            ols.push(&x, y);
            let est = ols.solve();
            let error = est
                .as_ref()
                .map(|w| {
                    let diff: Vec<f64> = w.iter().zip(&truth).map(|(a, b)| a - b).collect();
                    stats::norm(&diff)
                })
                .unwrap_or(init_error);
            // residual diagnostics under the current estimate
            let (loss, grad_norm) = match &est {
                Some(w) => {
                    let pred = w[0] + stats::dot(&w[1..], &x);
                    let r = pred - y;
                    (0.5 * r * r, r.abs() * (1.0 + stats::norm_sq(&x)).sqrt())
                }
                None => (0.5 * y * y, y.abs() * (1.0 + stats::norm_sq(&x)).sqrt()),
            };
            let inc_sq = match (&prev_est, &est) {
                (Some(a), Some(b)) => {
                    let d: Vec<f64> = a.iter().zip(b).map(|(p, q)| q - p).collect();
                    stats::norm_sq(&d)
                }
                _ => 0.0,
            };
            buffer.push_step(inc_sq, loss, grad_norm, &[])?;
            let s_t = crate::monitor::full_window_instability(&buffer);
            record.push_row(
                error,
                loss,
                grad_norm,
                s_t,
                1.0,
                regime.as_u8(),
                phase,
                -error,
            )?;
            prev_est = est;
            if checkpoints.contains(&(step + 1)) {
                checkpoint_vals.push((step + 1, error));
            }
        }
        record.final_params = prev_est.unwrap_or_default();
        runs.push(EstimationRun {
            seed,
            record,
            checkpoints: checkpoint_vals,
        });
    }

    let mut points = Vec::with_capacity(checkpoints.len());
    for (idx, &n) in checkpoints.iter().enumerate() {
        let errs: Vec<f64> = runs.iter().map(|r| r.checkpoints[idx].1).collect();
        points.push((n, stats::mean(&errs), stats::standard_error(&errs)));
    }
    Ok(ErrorCurve { points, runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scores(pos: &[f64], neg: &[f64]) -> LabeledScores {
        LabeledScores::new(pos.to_vec(), neg.to_vec()).unwrap()
    }

    #[test]
    fn all_ties_give_half() {
        let s = scores(&[1.0, 1.0, 1.0], &[1.0, 1.0]);
        assert_eq!(roc_auc(&s).unwrap(), 0.5);
        assert_eq!(roc_auc_ranked(&s).unwrap(), 0.5);
    }

    #[test]
    fn perfect_separation_gives_one() {
        let s = scores(&[0.9, 0.8], &[0.1, 0.2]);
        assert_eq!(roc_auc(&s).unwrap(), 1.0);
    }

    #[test]
    fn hand_enumerated_pairs() {
        // pairs: 3>2, 3>0, 1>0 win; 1<2 loses -> 3/4
        let s = scores(&[3.0, 1.0], &[2.0, 0.0]);
        assert_eq!(roc_auc_exact(&s).unwrap(), 0.75);
        assert_eq!(roc_auc_ranked(&s).unwrap(), 0.75);
    }

    #[test]
    fn empty_class_rejected() {
        assert!(LabeledScores::new(vec![], vec![1.0]).is_err());
        assert!(LabeledScores::new(vec![1.0], vec![]).is_err());
    }

    #[test]
    fn solve_linear_recovers_known_solution() {
        let a = vec![
            vec![4.0, 1.0, 0.0],
            vec![1.0, 3.0, 1.0],
            vec![0.0, 1.0, 2.0],
        ];
        let x_true = [1.0, -2.0, 0.5];
        let b: Vec<f64> = a
            .iter()
            .map(|row| row.iter().zip(&x_true).map(|(r, x)| r * x).sum())
            .collect();
        let x = solve_linear(&a, &b).unwrap();
        for (got, want) in x.iter().zip(&x_true) {
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn sweep_rejects_unsorted_drifts() {
        let config =
            crate::config::ExperimentConfig::default_for(crate::config::ExperimentKind::Sweep);
        assert!(detectability_sweep(&config, &[0.5, 0.1], &[0]).is_err());
        assert!(detectability_sweep(&config, &[], &[0]).is_err());
    }

    #[test]
    fn error_curve_rejects_bad_checkpoints() {
        let env = crate::env::RegressionEnv::label_shift(3, 1.0, 0.5).unwrap();
        let schedule = crate::schedule::RegimeSchedule::onset(1000, 200).unwrap();
        assert!(error_vs_data_curve(&env, &schedule, &[500, 100], &[0]).is_err());
        assert!(error_vs_data_curve(&env, &schedule, &[500, 2000], &[0]).is_err());
    }

    #[test]
    fn running_ols_recovers_clean_weights() {
        let env = crate::env::RegressionEnv::label_shift(3, 0.1, 0.0).unwrap();
        let mut rng = RngStream::new(17, 0);
        let mut ols = RunningLeastSquares::new(3);
        for _ in 0..2000 {
            let (x, y) = env.sample(Regime::Reliable, &mut rng);
            ols.push(&x, y.value());
        }
        let w = ols.solve().unwrap();
        assert!(w[0].abs() < 0.02, "intercept {}", w[0]);
        for (got, want) in w[1..].iter().zip(&env.true_weights) {
            assert!((got - want).abs() < 0.02);
        }
    }

    proptest! {
        // AUC of a score set against itself is one half.
        #[test]
        fn self_auc_is_half(xs in proptest::collection::vec(-50.0f64..50.0, 1..40)) {
            let s = LabeledScores::new(xs.clone(), xs).unwrap();
            let auc = roc_auc(&s).unwrap();
            prop_assert!((auc - 0.5).abs() < 1e-12);
        }

        // Swapping the classes complements the AUC exactly.
        #[test]
        fn class_swap_complements(
            pos in proptest::collection::vec(-50.0f64..50.0, 1..30),
            neg in proptest::collection::vec(-50.0f64..50.0, 1..30),
        ) {
            let fwd = roc_auc(&LabeledScores::new(pos.clone(), neg.clone()).unwrap()).unwrap();
            let rev = roc_auc(&LabeledScores::new(neg, pos).unwrap()).unwrap();
            prop_assert!((fwd + rev - 1.0).abs() < 1e-12);
        }

        // AUC is invariant under strictly increasing transforms.
        #[test]
        fn monotone_transform_invariance(
            pos in proptest::collection::vec(-20.0f64..20.0, 1..25),
            neg in proptest::collection::vec(-20.0f64..20.0, 1..25),
            scale in 0.1f64..5.0,
            shift in -10.0f64..10.0,
        ) {
            let base = roc_auc(&LabeledScores::new(pos.clone(), neg.clone()).unwrap()).unwrap();
            let f = |v: f64| (scale * v + shift).exp() + v;
            let mapped = roc_auc(&LabeledScores::new(
                pos.iter().map(|&v| f(v)).collect(),
                neg.iter().map(|&v| f(v)).collect(),
            ).unwrap()).unwrap();
            prop_assert!((base - mapped).abs() < 1e-12);
        }

        // The two AUC routes agree, including on tie-heavy integer scores.
        #[test]
        fn exact_and_ranked_agree(
            pos in proptest::collection::vec(0i32..8, 1..50),
            neg in proptest::collection::vec(0i32..8, 1..50),
        ) {
            let s = LabeledScores::new(
                pos.iter().map(|&v| v as f64).collect(),
                neg.iter().map(|&v| v as f64).collect(),
            ).unwrap();
            let a = roc_auc_exact(&s).unwrap();
            let b = roc_auc_ranked(&s).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
