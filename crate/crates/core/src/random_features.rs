//! Random Fourier features for the Gaussian kernel.
//!
//! `phi(x) = sqrt(1/D) [sin(Wx); cos(Wx)]` with `W_ij ~ N(0, 1/sigma^2)`, so that
//! `phi(x) . phi(y)` is an unbiased estimate of `exp(-|x - y|^2 / (2 sigma^2))`
//! and, after the norm prefactors, of `exp(x . y / sigma^2)`.

use rand_distr::{Distribution, Normal};

use crate::error::{check_len, Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureMapSpec {
    pub input_dim: usize,
    pub num_features: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl FeatureMapSpec {
    pub fn new(input_dim: usize, num_features: usize, sigma: f64, seed: u64) -> Self {
        Self {
            input_dim,
            num_features,
            sigma,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidSpec("input_dim must be >= 1".into()));
        }
        if self.num_features == 0 {
            return Err(Error::InvalidSpec("num_features must be >= 1".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "sigma must be positive and finite, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Length of `phi(x)`.
    pub fn output_dim(&self) -> usize {
        2 * self.num_features
    }
}

/// A sampled projection `W` (`num_features x input_dim`, row-major). Immutable
/// once built.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    spec: FeatureMapSpec,
    weights: Vec<f64>,
}

pub fn sample_feature_map(spec: FeatureMapSpec) -> Result<FeatureMap> {
    spec.validate()?;
    let normal = Normal::new(0.0, 1.0 / spec.sigma).expect("validated sigma");
    let mut rng = seed::rng(spec.seed);
    let weights = (0..spec.num_features * spec.input_dim)
        .map(|_| normal.sample(&mut rng))
        .collect();
    Ok(FeatureMap { spec, weights })
}

impl FeatureMap {
    /// Builds a map from an explicit projection matrix. Used for analytic tests.
    pub fn from_weights(spec: FeatureMapSpec, weights: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        check_len(
            "feature map weights",
            spec.num_features * spec.input_dim,
            weights.len(),
        )?;
        Ok(Self { spec, weights })
    }

    pub fn spec(&self) -> &FeatureMapSpec {
        &self.spec
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    pub fn phi(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("phi input", self.spec.input_dim, x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("phi input"));
        }
        let mut out = vec![0.0; self.output_dim()];
        self.phi_into(x, &mut out);
        Ok(out)
    }

    /// Unchecked variant writing into `out` (length `2D`). Hot path of decoding.
    pub fn phi_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.spec.num_features;
        let k = self.spec.input_dim;
        let scale = (1.0 / d as f64).sqrt();
        let (sin_half, cos_half) = out.split_at_mut(d);
        for (r, row) in self.weights.chunks_exact(k).enumerate() {
            let proj: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
            let (s, c) = proj.sin_cos();
            sin_half[r] = scale * s;
            cos_half[r] = scale * c;
        }
    }

    pub fn kernel_estimate(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let px = self.phi(x)?;
        let py = self.phi(y)?;
        Ok(dot(&px, &py))
    }

    /// Estimate of `exp(x . y / sigma^2)`.
    pub fn exp_dot_estimate(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let k = self.kernel_estimate(x, y)?;
        let s2 = self.spec.sigma * self.spec.sigma;
        Ok(((dot(x, x) + dot(y, y)) / (2.0 * s2)).exp() * k)
    }

    /// Heap bytes held by the projection.
    pub fn byte_size(&self) -> usize {
        self.weights.len() * std::mem::size_of::<f64>()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(seed: u64) -> FeatureMapSpec {
        FeatureMapSpec::new(4, 8, 1.0, seed)
    }

    #[test]
    fn sampling_is_deterministic_in_seed() {
        let a = sample_feature_map(spec(7)).unwrap();
        let b = sample_feature_map(spec(7)).unwrap();
        let c = sample_feature_map(spec(8)).unwrap();
        assert_eq!(a.weights(), b.weights());
        assert_ne!(a.weights(), c.weights());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        for s in [
            FeatureMapSpec::new(0, 8, 1.0, 0),
            FeatureMapSpec::new(4, 0, 1.0, 0),
            FeatureMapSpec::new(4, 8, 0.0, 0),
            FeatureMapSpec::new(4, 8, -1.0, 0),
        ] {
            assert!(matches!(sample_feature_map(s), Err(Error::InvalidSpec(_))));
        }
    }

    #[test]
    fn weight_moments_match_gaussian() {
        let m = sample_feature_map(FeatureMapSpec::new(4, 100_000, 1.0, 11)).unwrap();
        let n = m.weights().len() as f64;
        let mean = m.weights().iter().sum::<f64>() / n;
        let var = m.weights().iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 3.0 / n.sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");

        let m = sample_feature_map(FeatureMapSpec::new(4, 100_000, 0.5, 11)).unwrap();
        let var = m.weights().iter().map(|w| w * w).sum::<f64>() / n;
        assert!((var - 4.0).abs() < 0.08, "var {var}");
    }

    #[test]
    fn phi_of_zero_is_cosine_half() {
        let m = sample_feature_map(spec(1)).unwrap();
        let p = m.phi(&[0.0; 4]).unwrap();
        let c = (1.0f64 / 8.0).sqrt();
        assert!(p[..8].iter().all(|&v| v == 0.0));
        assert!(p[8..].iter().all(|&v| (v - c).abs() < 1e-15));
        assert!((dot(&p, &p) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn phi_with_forced_projection() {
        let m = FeatureMap::from_weights(FeatureMapSpec::new(2, 1, 1.0, 0), vec![1.0, 0.0])
            .unwrap();
        let p = m.phi(&[std::f64::consts::FRAC_PI_2, 0.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12);
        assert!(p[1].abs() < 1e-12);
    }

    #[test]
    fn phi_rejects_bad_input() {
        let m = sample_feature_map(spec(1)).unwrap();
        assert!(matches!(
            m.phi(&[0.0; 3]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            m.phi(&[0.0, f64::NAN, 0.0, 0.0]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn self_kernel_is_one() {
        let m = sample_feature_map(spec(3)).unwrap();
        let x = [0.3, -1.2, 2.0, 0.7];
        assert!((m.kernel_estimate(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert!((m.exp_dot_estimate(&[0.0; 4], &[0.0; 4]).unwrap() - 1.0).abs() < 1e-12);
        let u = [0.5, 0.5, 0.5, 0.5];
        let e = m.exp_dot_estimate(&u, &u).unwrap();
        assert!((e - std::f64::consts::E).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn phi_has_unit_norm(xs in proptest::collection::vec(-50.0f64..50.0, 4), seed in any::<u64>()) {
            let m = sample_feature_map(spec(seed)).unwrap();
            let p = m.phi(&xs).unwrap();
            prop_assert!((dot(&p, &p).sqrt() - 1.0).abs() < 1e-6);
        }
    }
}
