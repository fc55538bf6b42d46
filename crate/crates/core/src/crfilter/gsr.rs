//! Conjugate Gaussian CR maps, one posterior per (particle, context).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::log_likelihood;
use crate::error::{BsrError, Result};

#[derive(Clone, Debug, PartialEq)]
enum Covariance {
    /// Kept while every observation has had at most one non-zero feature.
    Diagonal(DVector<f64>),
    Dense(DMatrix<f64>),
}

/// Gaussian posterior over CR map weights.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPosterior {
    mean: DVector<f64>,
    cov: Covariance,
}

impl GaussianPosterior {
    /// Isotropic prior `N(mean0·1, var0·I)`.
    pub fn isotropic(dim: usize, mean0: f64, var0: f64) -> Self {
        GaussianPosterior {
            mean: DVector::from_element(dim, mean0),
            cov: Covariance::Diagonal(DVector::from_element(dim, var0)),
        }
    }

    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(BsrError::Dimension { expected: mean.len(), got: cov.nrows() });
        }
        if cov.clone().cholesky().is_none() {
            return Err(BsrError::Numerical("prior covariance is not positive definite".into()));
        }
        Ok(GaussianPosterior { mean, cov: Covariance::Dense(cov) })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        match &self.cov {
            Covariance::Diagonal(d) => DMatrix::from_diagonal(d),
            Covariance::Dense(m) => m.clone(),
        }
    }

    fn single_support(phi: &[f64]) -> Option<usize> {
        let mut idx = None;
        for (i, x) in phi.iter().enumerate() {
            if *x != 0.0 {
                if idx.is_some() {
                    return None;
                }
                idx = Some(i);
            }
        }
        idx.or(Some(0))
    }

    /// Posterior predictive `(φᵀM, φᵀΣφ + σ²)`.
    pub fn predictive(&self, phi: &[f64], sigma: f64) -> (f64, f64) {
        let s2 = sigma * sigma;
        match &self.cov {
            Covariance::Diagonal(d) => {
                let mut mean = 0.0;
                let mut var = s2;
                for (i, p) in phi.iter().enumerate() {
                    if *p != 0.0 {
                        mean += p * self.mean[i];
                        var += p * p * d[i];
                    }
                }
                (mean, var)
            }
            Covariance::Dense(c) => {
                let f = DVector::from_column_slice(phi);
                (f.dot(&self.mean), (c * &f).dot(&f) + s2)
            }
        }
    }

    pub fn log_predictive(&self, v: f64, phi: &[f64], sigma: f64) -> f64 {
        let (m, var) = self.predictive(phi, sigma);
        log_likelihood(v, m, var.sqrt())
    }

    /// Condition on one observation `v ~ N(φᵀw, σ²)`.
    pub fn update(&mut self, phi: &[f64], v: f64, sigma: f64) -> Result<()> {
        if phi.len() != self.dim() {
            return Err(BsrError::Dimension { expected: self.dim(), got: phi.len() });
        }
        if !sigma.is_finite() {
            return Ok(());
        }
        let s2 = sigma * sigma;
        if let (Covariance::Diagonal(d), Some(j)) = (&mut self.cov, Self::single_support(phi)) {
            let p = phi[j];
            if p == 0.0 {
                return Ok(());
            }
            let precision = 1.0 / d[j] + p * p / s2;
            let var = 1.0 / precision;
            self.mean[j] = var * (self.mean[j] / d[j] + p * v / s2);
            d[j] = var;
            return Ok(());
        }
        if let Covariance::Diagonal(d) = &self.cov {
            self.cov = Covariance::Dense(DMatrix::from_diagonal(d));
        }
        let Covariance::Dense(c) = &mut self.cov else { unreachable!() };
        let f = DVector::from_column_slice(phi);
        let cf = &*c * &f;
        let s = cf.dot(&f) + s2;
        let gain = &cf / s;
        let resid = v - f.dot(&self.mean);
        self.mean += &gain * resid;
        *c -= &gain * cf.transpose();
        let sym = (&*c + c.transpose()) * 0.5;
        *c = sym;
        if (0..c.nrows()).any(|i| !(c[(i, i)] > 0.0)) {
            return Err(BsrError::Numerical(
                "posterior covariance lost positive definiteness".into(),
            ));
        }
        Ok(())
    }

    /// Full positive-definiteness check (Cholesky).
    pub fn is_spd(&self) -> bool {
        match &self.cov {
            Covariance::Diagonal(d) => d.iter().all(|x| *x > 0.0),
            Covariance::Dense(c) => c.clone().cholesky().is_some(),
        }
    }
}

/// Per-particle posteriors for every context, shared copy-on-write across
/// particles that descend from the same ancestor.
#[derive(Clone, Debug)]
pub struct GsrBank {
    posteriors: Vec<Vec<Arc<GaussianPosterior>>>,
    sigma: f64,
}

impl GsrBank {
    pub fn new(n_particles: usize, k: usize, prior: GaussianPosterior, sigma: f64) -> Self {
        let prior = Arc::new(prior);
        GsrBank {
            posteriors: vec![vec![prior; k]; n_particles],
            sigma,
        }
    }

    pub fn posterior(&self, particle: usize, context: usize) -> &GaussianPosterior {
        &self.posteriors[particle][context]
    }

    pub fn log_predictive(&self, particle: usize, context: usize, phi: &[f64], v: f64) -> f64 {
        self.posteriors[particle][context].log_predictive(v, phi, self.sigma)
    }

    /// Condition each particle's proposed context on the observation.
    pub fn assimilate(&mut self, proposals: &[usize], phi: &[f64], v: f64) -> Result<()> {
        for (row, &c) in self.posteriors.iter_mut().zip(proposals) {
            Arc::make_mut(&mut row[c]).update(phi, v, self.sigma)?;
        }
        Ok(())
    }

    /// Replace particles by their resampled ancestors.
    pub fn reindex(&mut self, ancestors: &[usize]) {
        self.posteriors = ancestors.iter().map(|&a| self.posteriors[a].clone()).collect();
    }

    /// Particle-averaged posterior mean of one context.
    pub fn mean_map(&self, context: usize) -> Vec<f64> {
        let n = self.posteriors.len() as f64;
        let dim = self.posteriors[0][context].dim();
        let mut out = vec![0.0; dim];
        for row in &self.posteriors {
            for (o, m) in out.iter_mut().zip(row[context].mean().iter()) {
                *o += m / n;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    /// Closed-form batch posterior in information form, with explicit
    /// inverses: Σ = (Σ0⁻¹ + ΦᵀΦ/σ²)⁻¹, M = Σ(Σ0⁻¹M0 + Φᵀv/σ²).
    fn batch_posterior(
        m0: &DVector<f64>,
        s0: &DMatrix<f64>,
        phis: &[Vec<f64>],
        vs: &[f64],
        sigma: f64,
    ) -> (DVector<f64>, DMatrix<f64>) {
        let d = m0.len();
        let p0 = s0.clone().try_inverse().unwrap();
        let mut prec = p0.clone();
        let mut lin = &p0 * m0;
        for (phi, v) in phis.iter().zip(vs) {
            let f = DVector::from_column_slice(phi);
            prec += &f * f.transpose() / (sigma * sigma);
            lin += &f * (*v / (sigma * sigma));
        }
        let cov = prec.try_inverse().unwrap();
        assert_eq!(cov.nrows(), d);
        (&cov * lin, cov)
    }

    #[test]
    fn one_hot_update_from_unit_prior() {
        let mut post = GaussianPosterior::isotropic(3, 0.0, 1.0);
        post.update(&[0.0, 1.0, 0.0], 4.0, 1.0).unwrap();
        let c = post.covariance();
        assert_relative_eq!(c[(1, 1)], 0.5);
        assert_relative_eq!(post.mean()[1], 2.0);
        assert_eq!(c[(0, 0)], 1.0);
        assert_eq!(post.mean()[0], 0.0);
    }

    #[test]
    fn infinite_noise_leaves_posterior_unchanged() {
        let mut post = GaussianPosterior::isotropic(2, 0.0, 1.0);
        let before = post.clone();
        post.update(&[0.3, 0.7], 5.0, f64::INFINITY).unwrap();
        assert_eq!(post, before);
        let mut post = GaussianPosterior::isotropic(2, 0.0, 1.0);
        post.update(&[0.3, 0.7], 5.0, 1e12).unwrap();
        assert_relative_eq!(post.covariance(), before.covariance(), epsilon = 1e-12);
    }

    #[test]
    fn repeated_observation_equals_halved_noise() {
        let phi = [0.2, -0.5, 0.9];
        let mut twice = GaussianPosterior::isotropic(3, 0.0, 1.0);
        twice.update(&phi, 1.5, 1.2).unwrap();
        twice.update(&phi, 1.5, 1.2).unwrap();
        let mut once = GaussianPosterior::isotropic(3, 0.0, 1.0);
        once.update(&phi, 1.5, 1.2 / 2f64.sqrt()).unwrap();
        assert_relative_eq!(twice.mean().clone(), once.mean().clone(), epsilon = 1e-12);
        assert_relative_eq!(twice.covariance(), once.covariance(), epsilon = 1e-12);
    }

    #[test]
    fn sequential_updates_match_batch_closed_form() {
        let mut rng = crate::rng::stream(5, crate::rng::RngRole::Init);
        let d = 4;
        let m0 = DVector::from_vec(vec![0.5, -0.2, 0.0, 1.0]);
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-0.5..0.5));
        let s0 = &a * a.transpose() + DMatrix::identity(d, d);
        let mut post = GaussianPosterior::new(m0.clone(), s0.clone()).unwrap();
        let mut phis = Vec::new();
        let mut vs = Vec::new();
        for _ in 0..25 {
            let phi: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v = rng.random_range(-3.0..3.0);
            post.update(&phi, v, 0.8).unwrap();
            phis.push(phi);
            vs.push(v);
        }
        let (m, c) = batch_posterior(&m0, &s0, &phis, &vs, 0.8);
        assert_relative_eq!(post.mean().clone(), m, epsilon = 1e-10);
        assert_relative_eq!(post.covariance(), c, epsilon = 1e-10);
        assert!(post.is_spd());
    }

    #[test]
    fn predictive_examples() {
        let post = GaussianPosterior::isotropic(3, 0.0, 1.0);
        assert_eq!(post.predictive(&[1.0, 0.0, 0.0], 1.0), (0.0, 2.0));
        let certain = GaussianPosterior::isotropic(2, 1.0, 0.0);
        assert_eq!(certain.predictive(&[1.0, 0.0], 1.5), (1.0, 2.25));
    }

    #[test]
    fn predictive_matches_sampling() {
        let mut post = GaussianPosterior::isotropic(2, 0.0, 1.0);
        post.update(&[1.0, 0.5], 2.0, 0.7).unwrap();
        let phi = [0.4, 1.0];
        let sigma = 0.7;
        let (mean, var) = post.predictive(&phi, sigma);
        let chol = post.covariance().cholesky().unwrap();
        let l = chol.l();
        let mut rng = crate::rng::stream(8, crate::rng::RngRole::Init);
        let std = Normal::new(0.0, 1.0).unwrap();
        let n = 100_000;
        let mut xs = Vec::with_capacity(n);
        for _ in 0..n {
            let z = DVector::from_fn(2, |_, _| std.sample(&mut rng));
            let w = post.mean() + &l * z;
            let v = DVector::from_column_slice(&phi).dot(&w) + sigma * std.sample(&mut rng);
            xs.push(v);
        }
        let m = xs.iter().sum::<f64>() / n as f64;
        let s = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((m - mean).abs() < 0.01 * var.sqrt(), "{m} vs {mean}");
        assert!((s / var - 1.0).abs() < 0.01 * 2.0, "{s} vs {var}");
    }

    #[test]
    fn covariance_eigenvalues_do_not_grow() {
        let mut post = GaussianPosterior::isotropic(3, 0.0, 2.0);
        let mut prev = post.covariance().symmetric_eigenvalues();
        let mut rng = crate::rng::stream(9, crate::rng::RngRole::Init);
        for _ in 0..20 {
            let phi: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            post.update(&phi, 1.0, 1.0).unwrap();
            let mut cur = post.covariance().symmetric_eigenvalues();
            let mut p = prev.clone();
            cur.as_mut_slice().sort_by(|a, b| a.partial_cmp(b).unwrap());
            p.as_mut_slice().sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (c, q) in cur.iter().zip(p.iter()) {
                assert!(*c <= q + 1e-12);
            }
            prev = post.covariance().symmetric_eigenvalues();
        }
    }

    #[test]
    fn bank_copy_on_write() {
        let mut bank = GsrBank::new(3, 2, GaussianPosterior::isotropic(2, 0.0, 1.0), 1.0);
        bank.assimilate(&[0, 1, 0], &[1.0, 0.0], 3.0).unwrap();
        assert_relative_eq!(bank.posterior(0, 0).mean()[0], 1.5);
        assert_eq!(bank.posterior(1, 0).mean()[0], 0.0);
        bank.reindex(&[0, 0, 1]);
        assert_relative_eq!(bank.posterior(1, 0).mean()[0], 1.5);
        assert_eq!(bank.posterior(2, 0).mean()[0], 0.0);
        let m = bank.mean_map(0);
        assert_relative_eq!(m[0], 1.0);
    }
}
