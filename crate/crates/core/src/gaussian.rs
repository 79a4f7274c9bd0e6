//! Multivariate normal log-densities through a Cholesky factor.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::model::{GaussianEmission, SampleSequence};

/// Added to every covariance diagonal before factorization.
pub const COV_JITTER: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct GaussianDensity {
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    /// `−½ (s ln 2π + ln det Σ)`.
    log_norm: f64,
}

impl GaussianDensity {
    pub fn new(mean: &DVector<f64>, cov: &DMatrix<f64>, state: usize) -> Result<Self> {
        let s = mean.len();
        if cov.shape() != (s, s) {
            return Err(Error::DimensionMismatch(format!(
                "covariance of state {state} is {}x{}, mean has length {s}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let jittered = cov + DMatrix::identity(s, s) * COV_JITTER;
        let chol = Cholesky::new(jittered).ok_or(Error::SingularCovariance { state })?;
        let log_det: f64 = 2.0
            * chol
                .l_dirty()
                .diagonal()
                .iter()
                .map(|v| v.ln())
                .sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::SingularCovariance { state });
        }
        Ok(Self {
            mean: mean.clone(),
            chol,
            log_norm: -0.5 * (s as f64 * (2.0 * PI).ln() + log_det),
        })
    }

    pub fn log_density(&self, o: &DVector<f64>) -> f64 {
        let z = o - &self.mean;
        let w = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&z)
            .expect("Cholesky factor has a positive diagonal");
        self.log_norm - 0.5 * w.norm_squared()
    }
}

pub fn densities(em: &GaussianEmission) -> Result<Vec<GaussianDensity>> {
    em.means
        .iter()
        .zip(&em.covs)
        .enumerate()
        .map(|(x, (m, c))| GaussianDensity::new(m, c, x))
        .collect()
}

/// `table[t][(x, m)] = ln p(o_t^{(m)} | x)`.
pub fn log_likelihood_table(
    em: &GaussianEmission,
    obs: &SampleSequence,
) -> Result<Vec<DMatrix<f64>>> {
    if obs.dim() != em.dim() {
        return Err(Error::DimensionMismatch(format!(
            "observations have dimension {}, emission has {}",
            obs.dim(),
            em.dim()
        )));
    }
    let dens = densities(em)?;
    Ok(obs
        .samples
        .iter()
        .map(|step| DMatrix::from_fn(dens.len(), step.len(), |x, m| dens[x].log_density(&step[m])))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_at_zero() {
        let g = GaussianDensity::new(&DVector::zeros(1), &DMatrix::identity(1, 1), 0).unwrap();
        let want = -0.5 * (2.0 * PI).ln();
        assert!((g.log_density(&DVector::zeros(1)) - want).abs() < 1e-9);
    }

    #[test]
    fn correlated_density_matches_explicit_inverse() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let mean = DVector::from_vec(vec![1.0, -1.0]);
        let o = DVector::from_vec(vec![0.3, 0.4]);
        let g = GaussianDensity::new(&mean, &cov, 0).unwrap();
        let det: f64 = 2.0 - 0.36;
        let inv = cov.clone().try_inverse().unwrap();
        let z = &o - &mean;
        let want = -0.5 * ((z.transpose() * inv * &z)[0] + det.ln() + 2.0 * (2.0 * PI).ln());
        assert!((g.log_density(&o) - want).abs() < 1e-8);
    }

    #[test]
    fn indefinite_covariance_is_reported() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = GaussianDensity::new(&DVector::zeros(2), &cov, 3).unwrap_err();
        assert!(matches!(err, Error::SingularCovariance { state: 3 }));
    }
}
