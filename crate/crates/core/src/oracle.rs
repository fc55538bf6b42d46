//! Independent numerical oracles: analytic successor maps against TD
//! learning, conjugate posteriors against their batch closed form and
//! Monte-Carlo sampling.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::crfilter::GaussianPosterior;
use crate::domain::{one_hot, Action, StateId};
use crate::envs::{GridLayout, GridWorld};
use crate::error::Result;
use crate::rng::{stream, RngRole};
use crate::sr::{analytic_state_action_sr, SuccessorMap};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleCheck {
    fn new(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        OracleCheck {
            name: name.into(),
            value,
            tolerance,
            pass: value.is_finite() && value < tolerance,
        }
    }
}

/// Largest absolute gap between a map learned by sweeping TD backups under
/// a frozen deterministic policy and the analytic map of that policy.
pub fn td_vs_analytic(layout: &GridLayout, gamma: f64, alpha: f64, sweeps: usize, seed: u64) -> Result<f64> {
    let world = GridWorld::new(layout.clone());
    let n = world.n_states();
    let mut rng = stream(seed, RngRole::Init);
    let policy: Vec<Action> = (0..n).map(|_| Action::ALL[rng.random_range(0..4)]).collect();
    let next = |s: StateId, a: Action| world.next_state(s, a);
    let mut p = DMatrix::zeros(n, n);
    for s in 0..n {
        p[(s, next(s, policy[s]))] = 1.0;
    }
    let expected = analytic_state_action_sr(n, next, &p, gamma)?;
    let mut m = SuccessorMap::zeros(n, n);
    let phis: Vec<Vec<f64>> = (0..n).map(|s| one_hot(s, n)).collect::<Result<_>>()?;
    for _ in 0..sweeps {
        for s in 0..n {
            for a in Action::ALL {
                let sn = next(s, a);
                m.backup(s, a, sn, policy[sn], &phis[sn], gamma, alpha);
            }
        }
    }
    Ok(m.as_slice()
        .iter()
        .zip(expected.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

/// Batch Bayesian linear regression posterior, in information form.
pub fn batch_posterior(
    m0: &DVector<f64>,
    s0: &DMatrix<f64>,
    phis: &[Vec<f64>],
    vs: &[f64],
    sigma: f64,
) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let p0 = s0.clone().try_inverse()?;
    let mut prec = p0.clone();
    let mut lin = &p0 * m0;
    for (phi, v) in phis.iter().zip(vs) {
        let f = DVector::from_column_slice(phi);
        prec += &f * f.transpose() / (sigma * sigma);
        lin += &f * (*v / (sigma * sigma));
    }
    let cov = prec.try_inverse()?;
    Some((&cov * lin, cov))
}

/// Largest gap between sequential conjugate updates and the batch posterior.
pub fn gsr_batch_gap(dim: usize, n_obs: usize, seed: u64) -> Result<f64> {
    let mut rng = stream(seed, RngRole::Init);
    let m0 = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-0.5..0.5));
    let s0 = &a * a.transpose() + DMatrix::identity(dim, dim);
    let sigma = 0.8;
    let mut post = GaussianPosterior::new(m0.clone(), s0.clone())?;
    let mut phis = Vec::new();
    let mut vs = Vec::new();
    for _ in 0..n_obs {
        let phi: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v = rng.random_range(-3.0..3.0);
        post.update(&phi, v, sigma)?;
        phis.push(phi);
        vs.push(v);
    }
    let Some((m, c)) = batch_posterior(&m0, &s0, &phis, &vs, sigma) else {
        return Ok(f64::INFINITY);
    };
    let dm = (post.mean() - m).amax();
    let dc = (post.covariance() - c).amax();
    Ok(dm.max(dc))
}

/// Relative errors of the predictive mean (in predictive sd units) and
/// variance against `samples` draws of weights and noise.
pub fn gsr_predictive_mc(samples: usize, seed: u64) -> Result<(f64, f64)> {
    let mut post = GaussianPosterior::isotropic(2, 0.0, 1.0);
    post.update(&[1.0, 0.5], 2.0, 0.7)?;
    let phi = [0.4, 1.0];
    let sigma = 0.7;
    let (mean, var) = post.predictive(&phi, sigma);
    let l = post
        .covariance()
        .cholesky()
        .ok_or_else(|| crate::error::BsrError::Numerical("posterior covariance not positive definite".into()))?
        .l();
    let mut rng = stream(seed, RngRole::Init);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let f = DVector::from_column_slice(&phi);
    let xs: Vec<f64> = (0..samples)
        .map(|_| {
            let z = DVector::from_fn(2, |_, _| std.sample(&mut rng));
            let w = post.mean() + &l * z;
            f.dot(&w) + sigma * std.sample(&mut rng)
        })
        .collect();
    let m = crate::analysis::mean(&xs);
    let s = crate::analysis::std_dev(&xs).powi(2);
    Ok(((m - mean).abs() / var.sqrt(), (s / var - 1.0).abs()))
}

/// All oracle checks with their tolerances.
pub fn run_all() -> Result<Vec<OracleCheck>> {
    let mut out = Vec::new();
    let mazes = [
        ("open 3x3", GridLayout::open(3, 3)),
        ("walled 4x4", GridLayout::parse(".#..\n.#..\n....\n..#.\n")?),
    ];
    for (name, layout) in &mazes {
        let err = td_vs_analytic(layout, 0.9, 0.5, 400, 7)?;
        out.push(OracleCheck::new(format!("td vs analytic SR, {name}"), err, 1e-3));
    }
    out.push(OracleCheck::new("conjugate posterior vs batch", gsr_batch_gap(4, 25, 5)?, 1e-10));
    let (dm, dv) = gsr_predictive_mc(100_000, 0)?;
    out.push(OracleCheck::new("predictive mean vs Monte Carlo", dm, 0.01));
    out.push(OracleCheck::new("predictive variance vs Monte Carlo", dv, 0.01));
    Ok(out)
}
