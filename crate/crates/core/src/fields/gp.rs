//! Gaussian random processes sampled through an eigendecomposition of the
//! correlation matrix: `C = QΛQᵀ`, `d = Q√Λ x` with `x ~ N(0, I)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{uniform, DrivingField, FieldGenerator, FieldGrid, FieldMeta};
use crate::{Error, Result};

/// Eigenvalues below this are treated as zero.
pub const EIGENVALUE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpParams {
    /// Correlation amplitude (the process variance).
    pub c0: f64,
    /// Correlation time.
    pub sigma: f64,
    pub dt: f64,
    pub horizon: f64,
}

impl GpParams {
    pub fn n_points(&self) -> usize {
        (self.horizon / self.dt).round() as usize + 1
    }

    pub fn grid(&self) -> FieldGrid {
        FieldGrid { t_start: 0.0, dt: self.dt, n_points: self.n_points() }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.c0 >= 0.0
            && self.c0.is_finite()
            && self.sigma > 0.0
            && self.sigma.is_finite()
            && self.dt > 0.0
            && self.horizon > 0.0
            && self.n_points() >= 2;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid GP parameters {self:?}")))
        }
    }
}

/// `C_nm = c0 · exp(−(n−m)² dt² / (2σ²))`.
pub fn gp_correlation_matrix(p: &GpParams) -> Result<DMatrix<f64>> {
    p.validate()?;
    let n = p.n_points();
    let scale = p.dt * p.dt / (2.0 * p.sigma * p.sigma);
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let lag = i as f64 - j as f64;
        p.c0 * (-lag * lag * scale).exp()
    }))
}

/// Precomputed `Q√Λ` for repeated draws at fixed parameters.
#[derive(Clone, Debug)]
pub struct GpSampler {
    params: GpParams,
    transform: DMatrix<f64>,
}

impl GpSampler {
    pub fn new(params: GpParams) -> Result<Self> {
        let c = gp_correlation_matrix(&params)?;
        let n = c.nrows();
        let eig = SymmetricEigen::try_new(c, 1e-14, 10_000)
            .ok_or_else(|| Error::Eigen("correlation matrix did not converge".into()))?;
        let mut transform = eig.eigenvectors;
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            if !lambda.is_finite() {
                return Err(Error::Eigen(format!("eigenvalue {k} is not finite")));
            }
            let root = if lambda < EIGENVALUE_FLOOR { 0.0 } else { lambda.sqrt() };
            transform.column_mut(k).scale_mut(root);
        }
        debug_assert_eq!(transform.nrows(), n);
        Ok(Self { params, transform })
    }

    pub fn params(&self) -> &GpParams {
        &self.params
    }

    pub fn n_points(&self) -> usize {
        self.transform.nrows()
    }

    /// `d = Q√Λ x` for an injected standard-normal vector `x`.
    pub fn field_from_normals(&self, x: &[f64]) -> Result<DrivingField> {
        if x.len() != self.n_points() {
            return Err(Error::Shape(format!("expected {} normals, got {}", self.n_points(), x.len())));
        }
        let d = &self.transform * DVector::from_column_slice(x);
        DrivingField::new(
            &self.params.grid(),
            d.as_slice().to_vec(),
            FieldMeta {
                generator: FieldGenerator::GaussianProcess { c0: self.params.c0, sigma: self.params.sigma },
                seed: None,
            },
        )
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DrivingField> {
        let x: Vec<f64> = (0..self.n_points()).map(|_| rng.sample(StandardNormal)).collect();
        self.field_from_normals(&x)
    }
}

pub fn sample_gp<R: Rng + ?Sized>(p: &GpParams, rng: &mut R) -> Result<DrivingField> {
    GpSampler::new(*p)?.sample(rng)
}

/// Mixture of Gaussian processes: `c0` and `σ` are drawn uniformly per
/// trajectory before sampling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpMixture {
    pub c0_range: (f64, f64),
    pub sigma_range: (f64, f64),
    pub dt: f64,
    pub horizon: f64,
}

impl Default for GpMixture {
    fn default() -> Self {
        Self { c0_range: (0.0, 4.0), sigma_range: (1.0, 9.0), dt: 0.1, horizon: 15.0 }
    }
}

pub fn sample_gp_mixture<R: Rng + ?Sized>(mix: &GpMixture, rng: &mut R) -> Result<DrivingField> {
    let c0 = uniform(rng, mix.c0_range);
    let sigma = uniform(rng, mix.sigma_range);
    sample_gp(&GpParams { c0, sigma, dt: mix.dt, horizon: mix.horizon }, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    #[test]
    fn diagonal_equals_amplitude() {
        for sigma in [1.0, 3.0, 9.0] {
            let c = gp_correlation_matrix(&GpParams { c0: 4.0, sigma, dt: 0.1, horizon: 5.0 }).unwrap();
            assert!(c.diagonal().iter().all(|&d| d == 4.0));
            assert_eq!(c, c.transpose());
        }
    }

    #[test]
    fn long_correlation_time_saturates() {
        let c = gp_correlation_matrix(&GpParams { c0: 2.5, sigma: 1e6, dt: 0.1, horizon: 15.0 }).unwrap();
        assert!(c.iter().all(|&v| (v - 2.5).abs() < 1e-9));
    }

    #[test]
    fn entry_at_lag_ten() {
        let c = gp_correlation_matrix(&GpParams { c0: 1.0, sigma: 1.0, dt: 0.1, horizon: 2.0 }).unwrap();
        // exp(-(10·0.1)²/2)
        assert!((c[(0, 10)] - (-0.5f64).exp()).abs() < 1e-15);
        assert!((c[(0, 10)] - 0.6065306597126334).abs() < 1e-15);
    }

    #[test]
    fn degenerate_inputs_give_zero_fields() {
        let p = GpParams { c0: 2.0, sigma: 3.0, dt: 0.1, horizon: 5.0 };
        let s = GpSampler::new(p).unwrap();
        let f = s.field_from_normals(&vec![0.0; s.n_points()]).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.0));

        let mut rng = rng_from_seed(1);
        let f = sample_gp(&GpParams { c0: 0.0, ..p }, &mut rng).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn transform_reproduces_correlation() {
        let p = GpParams { c0: 2.0, sigma: 3.0, dt: 0.1, horizon: 5.0 };
        let s = GpSampler::new(p).unwrap();
        let rebuilt = &s.transform * s.transform.transpose();
        let c = gp_correlation_matrix(&p).unwrap();
        assert!((rebuilt - c).abs().max() < 1e-9);
    }

    #[test]
    fn seeded_sampling_is_deterministic() {
        let mix = GpMixture::default();
        let a = sample_gp_mixture(&mix, &mut rng_from_seed(42)).unwrap();
        let b = sample_gp_mixture(&mix, &mut rng_from_seed(42)).unwrap();
        assert_eq!(a, b);
        let FieldGenerator::GaussianProcess { c0, sigma } = a.meta().generator else { panic!() };
        assert!((0.0..=4.0).contains(&c0) && (1.0..=9.0).contains(&sigma));
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(gp_correlation_matrix(&GpParams { c0: -1.0, sigma: 1.0, dt: 0.1, horizon: 1.0 }).is_err());
        assert!(gp_correlation_matrix(&GpParams { c0: 1.0, sigma: 0.0, dt: 0.1, horizon: 1.0 }).is_err());
        assert!(gp_correlation_matrix(&GpParams { c0: 1.0, sigma: 1.0, dt: 0.1, horizon: 0.01 }).is_err());
    }
}
