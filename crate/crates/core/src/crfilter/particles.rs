use std::collections::VecDeque;

use rand::Rng;

use crate::config::Resampling;

/// Eq.-7 style prior masses for existing tables and for a new table:
/// `m_k / (n + α)` and `α / (n + α)` where `n = Σ m_k`.
pub fn crp_prior(counts: &[usize], alpha: f64) -> (Vec<f64>, f64) {
    let n: usize = counts.iter().sum();
    let denom = n as f64 + alpha;
    (
        counts.iter().map(|&m| m as f64 / denom).collect(),
        alpha / denom,
    )
}

/// Proposal probabilities over `counts.len()` bounded context slots.
///
/// The new-table mass is shared uniformly among slots with zero count; when
/// every slot is occupied it is redistributed in proportion to the counts.
pub fn crp_probabilities(counts: &[usize], alpha: f64) -> Vec<f64> {
    let (mut p, new_mass) = crp_prior(counts, alpha);
    let empty = counts.iter().filter(|&&m| m == 0).count();
    if empty > 0 {
        let share = new_mass / empty as f64;
        for (pi, &m) in p.iter_mut().zip(counts) {
            if m == 0 {
                *pi = share;
            }
        }
    } else {
        let total: f64 = p.iter().sum();
        for pi in p.iter_mut() {
            *pi /= total;
        }
    }
    p
}

/// Draw a context from [`crp_probabilities`].
pub fn crp_propose<R: Rng + ?Sized>(counts: &[usize], alpha: f64, rng: &mut R) -> usize {
    sample_discrete(&crp_probabilities(counts, alpha), rng)
}

pub(crate) fn sample_discrete<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let total: f64 = p.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, pi) in p.iter().enumerate() {
        if u < *pi {
            return i;
        }
        u -= pi;
    }
    // Rounding left a sliver of mass; take the last positive entry.
    p.iter().rposition(|x| *x > 0.0).unwrap_or(0)
}

/// Context with the largest summed normalised weight; ties go to the lowest id.
pub fn winner_take_all(proposals: &[usize], weights: &[f64], k: usize) -> usize {
    crate::domain::argmax(&context_mass(proposals, weights, k))
}

fn context_mass(proposals: &[usize], weights: &[f64], k: usize) -> Vec<f64> {
    let mut mass = vec![0.0; k];
    for (&c, &w) in proposals.iter().zip(weights) {
        mass[c] += w;
    }
    mass
}

/// Normalise log weights; `None` when every weight is zero or invalid.
fn normalize_log_weights(log_w: &[f64]) -> Option<Vec<f64>> {
    let max = log_w
        .iter()
        .copied()
        .filter(|x| !x.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let mut w: Vec<f64> = log_w
        .iter()
        .map(|x| if x.is_nan() { 0.0 } else { (x - max).exp() })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    Some(w)
}

/// Outcome of one filtering step, reported before resampling.
#[derive(Clone, Debug)]
pub struct FilterStep {
    pub proposals: Vec<usize>,
    /// Normalised importance weights per particle.
    pub weights: Vec<f64>,
    pub winner: usize,
    /// Particle row each resampled row descends from.
    pub ancestors: Vec<usize>,
    /// All likelihoods vanished and uniform weights were used.
    pub degenerate: bool,
}

/// Outcome of the joint end-of-episode filtering pass.
#[derive(Clone, Debug)]
pub struct FlushStep {
    /// `proposals[p][j]` is particle `p`'s context for trailing step `j`.
    pub proposals: Vec<Vec<usize>>,
    pub weights: Vec<f64>,
    /// Winner-take-all context per trailing step.
    pub winners: Vec<usize>,
    pub ancestors: Vec<usize>,
    pub degenerate: bool,
}

/// Particles over recent context assignments with CRP proposals.
#[derive(Clone, Debug)]
pub struct ParticleFilter {
    k: usize,
    window: usize,
    alpha_dp: f64,
    resampling: Resampling,
    rows: Vec<VecDeque<usize>>,
    omega: Vec<f64>,
}

impl ParticleFilter {
    /// Rows are initialised with contexts drawn uniformly over `k` and the
    /// belief weights start uniform.
    pub fn new<R: Rng + ?Sized>(
        n_particles: usize,
        window: usize,
        k: usize,
        alpha_dp: f64,
        resampling: Resampling,
        rng: &mut R,
    ) -> Self {
        let rows = (0..n_particles)
            .map(|_| (0..window).map(|_| rng.random_range(0..k)).collect())
            .collect();
        ParticleFilter {
            k,
            window,
            alpha_dp,
            resampling,
            rows,
            omega: vec![1.0 / k as f64; k],
        }
    }

    pub fn n_particles(&self) -> usize {
        self.rows.len()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn row(&self, p: usize) -> impl Iterator<Item = usize> + '_ {
        self.rows[p].iter().copied()
    }

    /// Assignment counts within particle `p`'s window.
    pub fn counts(&self, p: usize) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for &x in &self.rows[p] {
            c[x] += 1;
        }
        c
    }

    pub fn propose<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        (0..self.rows.len())
            .map(|p| crp_propose(&self.counts(p), self.alpha_dp, rng))
            .collect()
    }

    fn weigh(log_w: &[f64]) -> (Vec<f64>, bool) {
        match normalize_log_weights(log_w) {
            Some(w) => (w, false),
            None => {
                log::warn!("all particle likelihoods vanished; using uniform weights");
                (vec![1.0 / log_w.len() as f64; log_w.len()], true)
            }
        }
    }

    fn resample<R: Rng + ?Sized>(&self, weights: &[f64], rng: &mut R) -> Vec<usize> {
        let n = weights.len();
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for w in weights {
            acc += w;
            cdf.push(acc);
        }
        let pick = |u: f64| cdf.partition_point(|&c| c <= u * acc).min(n - 1);
        match self.resampling {
            Resampling::Multinomial => (0..n).map(|_| pick(rng.random::<f64>())).collect(),
            Resampling::Systematic => {
                let u0 = rng.random::<f64>() / n as f64;
                (0..n).map(|i| pick(u0 + i as f64 / n as f64)).collect()
            }
        }
    }

    fn commit(&mut self, ancestors: &[usize], appended: &[Vec<usize>]) {
        let rows: Vec<VecDeque<usize>> = ancestors
            .iter()
            .map(|&a| {
                let mut row = self.rows[a].clone();
                for &c in &appended[a] {
                    row.push_back(c);
                    row.pop_front();
                }
                row
            })
            .collect();
        self.rows = rows;
    }

    /// Propose, weigh by `log_lik(particle, context)`, pick the winner,
    /// resample, shift the window and recompute the belief weights from the
    /// pre-resampling weights.
    pub fn step<R1, R2>(
        &mut self,
        mut log_lik: impl FnMut(usize, usize) -> f64,
        proposal_rng: &mut R1,
        resample_rng: &mut R2,
    ) -> FilterStep
    where
        R1: Rng + ?Sized,
        R2: Rng + ?Sized,
    {
        let proposals = self.propose(proposal_rng);
        let log_w: Vec<f64> = proposals
            .iter()
            .enumerate()
            .map(|(p, &c)| log_lik(p, c))
            .collect();
        let (weights, degenerate) = Self::weigh(&log_w);
        let mass = context_mass(&proposals, &weights, self.k);
        let winner = crate::domain::argmax(&mass);
        let ancestors = self.resample(&weights, resample_rng);
        let appended: Vec<Vec<usize>> = proposals.iter().map(|&c| vec![c]).collect();
        self.commit(&ancestors, &appended);
        self.omega = mass;
        FilterStep {
            proposals,
            weights,
            winner,
            ancestors,
            degenerate,
        }
    }

    /// Filter `n_steps` trailing observations together: each particle draws a
    /// sequence of contexts, its weight is the product of the per-step
    /// likelihoods `log_lik(particle, step, context)`, and a single
    /// resampling pass follows.
    pub fn flush<R1, R2>(
        &mut self,
        n_steps: usize,
        mut log_lik: impl FnMut(usize, usize, usize) -> f64,
        proposal_rng: &mut R1,
        resample_rng: &mut R2,
    ) -> Option<FlushStep>
    where
        R1: Rng + ?Sized,
        R2: Rng + ?Sized,
    {
        if n_steps == 0 {
            return None;
        }
        let n = self.rows.len();
        let mut proposals = Vec::with_capacity(n);
        for p in 0..n {
            let mut row = self.rows[p].clone();
            let mut seq = Vec::with_capacity(n_steps);
            for _ in 0..n_steps {
                let mut counts = vec![0; self.k];
                for &c in &row {
                    counts[c] += 1;
                }
                let c = crp_propose(&counts, self.alpha_dp, proposal_rng);
                row.push_back(c);
                row.pop_front();
                seq.push(c);
            }
            proposals.push(seq);
        }
        let log_w: Vec<f64> = proposals
            .iter()
            .enumerate()
            .map(|(p, seq)| {
                seq.iter()
                    .enumerate()
                    .map(|(j, &c)| log_lik(p, j, c))
                    .sum()
            })
            .collect();
        let (weights, degenerate) = Self::weigh(&log_w);
        let winners = (0..n_steps)
            .map(|j| {
                let col: Vec<usize> = proposals.iter().map(|s| s[j]).collect();
                winner_take_all(&col, &weights, self.k)
            })
            .collect();
        let last: Vec<usize> = proposals.iter().map(|s| s[n_steps - 1]).collect();
        let mass = context_mass(&last, &weights, self.k);
        let ancestors = self.resample(&weights, resample_rng);
        self.commit(&ancestors, &proposals);
        self.omega = mass;
        Some(FlushStep {
            proposals,
            weights,
            winners,
            ancestors,
            degenerate,
        })
    }
}
