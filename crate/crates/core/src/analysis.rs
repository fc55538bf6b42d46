//! Statistics and neural-signature analyses: firing proxies, flicker traces,
//! trial-progress trends, splitter decoding, ANOVA.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::domain::{argmax, Action, StateId};
use crate::error::{BsrError, Result};
use crate::sr::SuccessorMap;

/// Mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSem {
    pub mean: f64,
    pub sem: f64,
    pub n: usize,
}

impl MeanSem {
    pub fn of(xs: &[f64]) -> Self {
        MeanSem {
            mean: mean(xs),
            sem: sem(xs),
            n: xs.len(),
        }
    }

    /// Whether the ±sem intervals of the two summaries are disjoint.
    pub fn separated_from(&self, other: &MeanSem) -> bool {
        self.mean - self.sem > other.mean + other.sem || other.mean - other.sem > self.mean + self.sem
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn sem(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    std_dev(xs) / (xs.len() as f64).sqrt()
}

/// Pearson correlation; `None` when either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(BsrError::Dimension { expected: x.len(), got: y.len() });
    }
    if x.len() < 2 {
        return Err(BsrError::Numerical("spearman needs at least two pairs".into()));
    }
    pearson(&ranks(x), &ranks(y)).ok_or_else(|| BsrError::Numerical("spearman undefined for constant input".into()))
}

/// One-way ANOVA F statistic; `+∞` when all groups are internally constant
/// but differ between groups.
pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<f64> {
    if groups.len() < 2 || groups.iter().any(|g| g.len() < 2) {
        return Err(BsrError::Numerical("anova needs two groups of two samples".into()));
    }
    let n: usize = groups.iter().map(|g| g.len()).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let ssb: f64 = groups.iter().map(|g| g.len() as f64 * (mean(g) - grand).powi(2)).sum();
    let ssw: f64 = groups
        .iter()
        .map(|g| {
            let m = mean(g);
            g.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        })
        .sum();
    let df_b = (groups.len() - 1) as f64;
    let df_w = (n - groups.len()) as f64;
    let scale = groups.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max).max(1.0);
    if ssb <= 1e-24 * scale * scale {
        return Ok(0.0);
    }
    if ssw <= 1e-24 * scale * scale {
        return Ok(f64::INFINITY);
    }
    Ok((ssb / df_b) / (ssw / df_w))
}

/// Moving average over windows of `w` values (valid part only).
pub fn moving_average(xs: &[f64], w: usize) -> Vec<f64> {
    if w == 0 || xs.len() < w {
        return Vec::new();
    }
    xs.windows(w).map(mean).collect()
}

/// Population vector of one map at a state-action pair.
pub fn firing_rates(map: &SuccessorMap, s: StateId, a: Action) -> Vec<f64> {
    map.row(s, a).to_vec()
}

/// One recorded step of a session: the emitted firing vector and the
/// matching rows of the pre- and post-probe templates.
#[derive(Clone, Debug, PartialEq)]
pub struct FlickerSample {
    pub trial: usize,
    pub firing: Vec<f64>,
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlickerStep {
    pub trial: usize,
    pub step: usize,
    pub z_diff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlickerTrace {
    pub steps: Vec<FlickerStep>,
    /// Mean z-difference per trial index (NaN for trials without samples).
    pub per_trial: Vec<f64>,
    /// Steps dropped because a correlation was undefined.
    pub skipped: usize,
    /// A correlation series had zero variance, so its z-scores are all 0.
    pub degenerate: bool,
}

fn z_scores(xs: &[f64]) -> (Vec<f64>, bool) {
    let m = mean(xs);
    let sd = std_dev(xs);
    if !(sd > 1e-12) {
        return (vec![0.0; xs.len()], true);
    }
    (xs.iter().map(|x| (x - m) / sd).collect(), false)
}

/// Correlate each firing vector with both templates, z-score each series
/// over the session and report `z_post − z_pre` per step and per trial.
pub fn flicker_trace(samples: &[FlickerSample], n_trials: usize) -> FlickerTrace {
    let mut kept = Vec::new();
    let mut c_pre = Vec::new();
    let mut c_post = Vec::new();
    let mut skipped = 0;
    for (i, s) in samples.iter().enumerate() {
        match (pearson(&s.firing, &s.pre), pearson(&s.firing, &s.post)) {
            (Some(a), Some(b)) => {
                kept.push(i);
                c_pre.push(a);
                c_post.push(b);
            }
            _ => skipped += 1,
        }
    }
    if skipped > 0 {
        log::debug!("flicker trace skipped {skipped} steps with undefined correlation");
    }
    let (z_pre, d1) = z_scores(&c_pre);
    let (z_post, d2) = z_scores(&c_post);
    let steps: Vec<FlickerStep> = kept
        .iter()
        .zip(z_pre.iter().zip(&z_post))
        .map(|(&i, (a, b))| FlickerStep {
            trial: samples[i].trial,
            step: i,
            z_diff: b - a,
        })
        .collect();
    let mut sums = vec![0.0; n_trials];
    let mut counts = vec![0usize; n_trials];
    for s in &steps {
        if s.trial < n_trials {
            sums[s.trial] += s.z_diff;
            counts[s.trial] += 1;
        }
    }
    let per_trial = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c == 0 { f64::NAN } else { s / c as f64 })
        .collect();
    FlickerTrace {
        steps,
        per_trial,
        skipped,
        degenerate: d1 || d2,
    }
}

/// Spearman correlation between trial index and per-trial z-difference
/// over the first `n_trials` trials, summarised over sessions. Sessions
/// where the correlation is undefined are left out.
pub fn trial_progress_stat(per_trial: &[Vec<f64>], n_trials: usize) -> MeanSem {
    let rhos: Vec<f64> = per_trial
        .iter()
        .filter_map(|t| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = t
                .iter()
                .take(n_trials)
                .enumerate()
                .filter(|(_, v)| v.is_finite())
                .map(|(i, v)| (i as f64, *v))
                .unzip();
            spearman(&xs, &ys).ok()
        })
        .collect();
    MeanSem::of(&rhos)
}

/// Leave-one-out template decoding of trial type from start-box vectors.
/// Returns the row-normalised `n_types × n_types` confusion matrix (actual
/// × decoded); rows without decodable trials are left uniform.
pub fn splitter_decode(trials: &[(usize, Vec<f64>)], n_types: usize) -> Result<Vec<Vec<f64>>> {
    let dim = trials.first().map(|t| t.1.len()).unwrap_or(0);
    for (ty, v) in trials {
        if *ty >= n_types {
            return Err(BsrError::Config(format!("trial type {ty} out of range")));
        }
        if v.len() != dim {
            return Err(BsrError::Dimension { expected: dim, got: v.len() });
        }
    }
    let mut sums = vec![vec![0.0; dim]; n_types];
    let mut counts = vec![0usize; n_types];
    for (ty, v) in trials {
        counts[*ty] += 1;
        for (s, x) in sums[*ty].iter_mut().zip(v) {
            *s += x;
        }
    }
    let mut m = vec![vec![0.0; n_types]; n_types];
    let mut excluded = 0;
    for (ty, v) in trials {
        let scores: Vec<f64> = (0..n_types)
            .map(|t| {
                let (n, template): (usize, Vec<f64>) = if t == *ty {
                    (counts[t] - 1, sums[t].iter().zip(v).map(|(s, x)| s - x).collect())
                } else {
                    (counts[t], sums[t].clone())
                };
                if n == 0 {
                    return f64::NEG_INFINITY;
                }
                let template: Vec<f64> = template.iter().map(|s| s / n as f64).collect();
                pearson(v, &template).unwrap_or(f64::NEG_INFINITY)
            })
            .collect();
        if scores.iter().all(|s| *s == f64::NEG_INFINITY) {
            excluded += 1;
            continue;
        }
        m[*ty][argmax(&scores)] += 1.0;
    }
    if excluded > 0 {
        warn!("splitter decoding excluded {excluded} trials with degenerate vectors");
    }
    for row in &mut m {
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|x| *x /= total);
        } else {
            row.iter_mut().for_each(|x| *x = 1.0 / n_types as f64);
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, RngRole};
    use approx::assert_relative_eq;
    use rand::seq::SliceRandom;
    use rand::Rng;

    #[test]
    fn spearman_examples() {
        assert_relative_eq!(spearman(&[1., 2., 3.], &[10., 20., 30.]).unwrap(), 1.0);
        assert_relative_eq!(spearman(&[1., 2., 3.], &[3., 2., 1.]).unwrap(), -1.0);
        // d = [0, 1, 1, 0], ρ = 1 − 6·2 / (4·15) = 0.8
        assert_relative_eq!(spearman(&[1., 2., 3., 4.], &[1., 3., 2., 4.]).unwrap(), 0.8, epsilon = 1e-12);
        assert!(spearman(&[1., 1., 1.], &[1., 2., 3.]).is_err());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn anova_examples() {
        // grand mean 3.5, SSB = 3·1.5² ·2 = 13.5, SSW = 4, F = 13.5 / (4/4)
        assert_relative_eq!(one_way_anova(&[vec![1., 2., 3.], vec![4., 5., 6.]]).unwrap(), 13.5, epsilon = 1e-12);
        assert_eq!(one_way_anova(&[vec![1., 2.], vec![1., 2.]]).unwrap(), 0.0);
        assert_eq!(one_way_anova(&[vec![1., 1.], vec![2., 2.]]).unwrap(), f64::INFINITY);
        let a = one_way_anova(&[vec![1., 2., 4.], vec![4., 5., 9.], vec![0., 3., 3.]]).unwrap();
        let b = one_way_anova(&[vec![101., 102., 104.], vec![104., 105., 109.], vec![100., 103., 103.]]).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-9);
        assert!(one_way_anova(&[vec![1., 2.]]).is_err());
    }

    #[test]
    fn mean_sem_by_hand() {
        let s = MeanSem::of(&[2.0, 4.0, 9.0]);
        assert_relative_eq!(s.mean, 5.0);
        // sd = sqrt((9 + 1 + 16) / 2) = sqrt(13)
        assert_relative_eq!(s.sem, (13.0f64).sqrt() / 3f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn fresh_map_fires_nothing() {
        let m = SuccessorMap::zeros(4, 4);
        assert!(firing_rates(&m, 2, Action::Up).iter().all(|x| *x == 0.0));
    }

    fn morph_session(n_trials: usize, per_trial: usize) -> Vec<FlickerSample> {
        let mut rng = stream(3, RngRole::Probe);
        let pre: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..1.0)).collect();
        let post: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..1.0)).collect();
        let total = (n_trials * per_trial) as f64;
        (0..n_trials * per_trial)
            .map(|i| {
                let t = i as f64 / total;
                FlickerSample {
                    trial: i / per_trial,
                    firing: pre.iter().zip(&post).map(|(a, b)| (1.0 - t) * a + t * b).collect(),
                    pre: pre.clone(),
                    post: post.clone(),
                }
            })
            .collect()
    }

    #[test]
    fn morphing_session_gives_increasing_trace() {
        let tr = flicker_trace(&morph_session(10, 5), 10);
        assert!(!tr.degenerate);
        for w in tr.per_trial.windows(2) {
            assert!(w[1] > w[0], "{:?}", tr.per_trial);
        }
    }

    #[test]
    fn swapping_templates_negates_trace() {
        let s = morph_session(6, 4);
        let swapped: Vec<FlickerSample> = s
            .iter()
            .map(|x| FlickerSample {
                pre: x.post.clone(),
                post: x.pre.clone(),
                ..x.clone()
            })
            .collect();
        let a = flicker_trace(&s, 6);
        let b = flicker_trace(&swapped, 6);
        for (x, y) in a.per_trial.iter().zip(&b.per_trial) {
            assert_relative_eq!(*x, -y, epsilon = 1e-12);
        }
    }

    #[test]
    fn flicker_scale_invariant() {
        let s = morph_session(5, 3);
        let scaled: Vec<FlickerSample> = s
            .iter()
            .map(|x| FlickerSample {
                firing: x.firing.iter().map(|v| v * 7.5).collect(),
                ..x.clone()
            })
            .collect();
        let a = flicker_trace(&s, 5);
        let b = flicker_trace(&scaled, 5);
        for (x, y) in a.per_trial.iter().zip(&b.per_trial) {
            assert_relative_eq!(*x, *y, epsilon = 1e-9);
        }
    }

    #[test]
    fn identical_to_pre_is_flagged_not_fatal() {
        let pre: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let post: Vec<f64> = (0..10).map(|i| ((i * 7) % 10) as f64).collect();
        let s: Vec<FlickerSample> = (0..12)
            .map(|i| FlickerSample {
                trial: i / 4,
                firing: pre.clone(),
                pre: pre.clone(),
                post: post.clone(),
            })
            .collect();
        let tr = flicker_trace(&s, 3);
        assert!(tr.degenerate);
        assert!(tr.per_trial.iter().all(|x| x.is_finite()));
        let zero = vec![FlickerSample {
            trial: 0,
            firing: vec![0.0; 10],
            pre,
            post,
        }];
        assert_eq!(flicker_trace(&zero, 1).skipped, 1);
    }

    #[test]
    fn progress_of_linear_traces_is_one() {
        let traces: Vec<Vec<f64>> = (0..5).map(|k| (0..30).map(|t| t as f64 * (k + 1) as f64).collect()).collect();
        let s = trial_progress_stat(&traces, 16);
        assert_relative_eq!(s.mean, 1.0);
        assert_eq!(s.sem, 0.0);
    }

    #[test]
    fn progress_of_shuffled_traces_is_near_zero() {
        let mut rng = stream(11, RngRole::Probe);
        let base: Vec<f64> = (0..16).map(|t| t as f64).collect();
        let traces: Vec<Vec<f64>> = (0..100)
            .map(|_| {
                let mut t = base.clone();
                t.shuffle(&mut rng);
                t
            })
            .collect();
        let s = trial_progress_stat(&traces, 16);
        // sd of ρ under the null is 1/sqrt(15) per session
        assert!(s.mean.abs() < 3.0 / (15.0f64).sqrt() / 10.0, "{s:?}");
    }

    #[test]
    fn separable_clusters_decode_perfectly() {
        let mut rng = stream(5, RngRole::Probe);
        let mut trials = Vec::new();
        for ty in 0..4 {
            for _ in 0..6 {
                let v: Vec<f64> = (0..16)
                    .map(|i| if i / 4 == ty { 1.0 } else { 0.0 } + rng.random_range(-0.05..0.05))
                    .collect();
                trials.push((ty, v));
            }
        }
        let m = splitter_decode(&trials, 4).unwrap();
        for (i, row) in m.iter().enumerate() {
            assert_relative_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            assert_relative_eq!(row[i], 1.0);
        }
    }

    #[test]
    fn indistinguishable_types_decode_at_chance() {
        let mut rng = stream(6, RngRole::Probe);
        let base: Vec<f64> = (0..16).map(|i| (i as f64).sin()).collect();
        let mut acc = vec![vec![0.0; 4]; 4];
        let reps = 200;
        for _ in 0..reps {
            let trials: Vec<(usize, Vec<f64>)> = (0..40)
                .map(|i| (i % 4, base.iter().map(|b| b + rng.random_range(-0.3..0.3)).collect()))
                .collect();
            let m = splitter_decode(&trials, 4).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    acc[i][j] += m[i][j] / reps as f64;
                }
            }
        }
        for row in &acc {
            for x in row {
                assert!((x - 0.25).abs() < 0.06, "{acc:?}");
            }
        }
    }

    #[test]
    fn moving_average_valid_part() {
        assert_eq!(moving_average(&[1., 2., 3., 4.], 3), vec![2., 3.]);
        assert!(moving_average(&[1.], 3).is_empty());
    }
}
