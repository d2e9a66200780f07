//! Self-augmentation of history latents under the flow-matching schedule.
//!
//! With `z_t = (1 - t) z_0 + t ε` and a model predicting the velocity
//! `ε - z_0`, one denoising step `z_t - t v` recovers `z_0` exactly when the
//! velocity is exact. Training randomly replaces clean history latents with
//! such one-step reconstructions so the generator sees inference-like
//! degradation. Here the "model" is any [`VelocityField`]; the analytic field
//! [`ExactVelocity`] and its biased variant stand in for a network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch([usize; 4], [usize; 4]),
    #[error("t = {0} outside [0, 1]")]
    TimeOutOfRange(f64),
    #[error("invalid augmentation policy: {0}")]
    InvalidPolicy(String),
    #[error("latent values must be finite")]
    NonFinite,
}

/// Latent tensor of shape `(frames, channels, h, w)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBlock {
    shape: [usize; 4],
    values: Vec<f64>,
}

impl LatentBlock {
    pub fn new(shape: [usize; 4], values: Vec<f64>) -> Result<Self, FlowError> {
        if values.len() != shape.iter().product::<usize>() {
            return Err(FlowError::ShapeMismatch(shape, [values.len(), 1, 1, 1]));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::NonFinite);
        }
        Ok(LatentBlock { shape, values })
    }

    pub fn filled(shape: [usize; 4], value: f64) -> Self {
        LatentBlock { shape, values: vec![value; shape.iter().product()] }
    }

    pub fn standard_normal<R: Rng + ?Sized>(shape: [usize; 4], rng: &mut R) -> Self {
        let values = (0..shape.iter().product()).map(|_| rng.sample(StandardNormal)).collect();
        LatentBlock { shape, values }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn check(&self, other: &LatentBlock) -> Result<(), FlowError> {
        if self.shape != other.shape {
            return Err(FlowError::ShapeMismatch(self.shape, other.shape));
        }
        Ok(())
    }

    fn zip_map(&self, other: &LatentBlock, f: impl Fn(f64, f64) -> f64) -> Result<LatentBlock, FlowError> {
        self.check(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect();
        Ok(LatentBlock { shape: self.shape, values })
    }

    /// `max |a - b| / max(max |b|, tiny)`.
    pub fn max_relative_error(&self, reference: &LatentBlock) -> Result<f64, FlowError> {
        self.check(reference)?;
        let diff = self.values.iter().zip(&reference.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = reference.values.iter().map(|v| v.abs()).fold(f64::MIN_POSITIVE, f64::max);
        Ok(diff / scale)
    }
}

/// `(1 - t) z0 + t ε`.
pub fn corrupt(z0: &LatentBlock, eps: &LatentBlock, t: f64) -> Result<LatentBlock, FlowError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(FlowError::TimeOutOfRange(t));
    }
    z0.zip_map(eps, |a, e| (1.0 - t) * a + t * e)
}

/// `z_t - t v`.
pub fn one_step_denoise(zt: &LatentBlock, t: f64, velocity: &LatentBlock) -> Result<LatentBlock, FlowError> {
    zt.zip_map(velocity, |z, v| z - t * v)
}

/// Velocity predictor `(z_t, t) -> v`.
pub trait VelocityField {
    fn velocity(&self, zt: &LatentBlock, t: f64) -> LatentBlock;
}

impl<F: Fn(&LatentBlock, f64) -> LatentBlock> VelocityField for F {
    fn velocity(&self, zt: &LatentBlock, t: f64) -> LatentBlock {
        self(zt, t)
    }
}

/// Analytic velocity for a known clean latent: `(z_t - z_0) / t`, which equals
/// `ε - z_0` on the corruption path. Returns zero at `t = 0`.
#[derive(Debug, Clone)]
pub struct ExactVelocity {
    pub z0: LatentBlock,
}

impl VelocityField for ExactVelocity {
    fn velocity(&self, zt: &LatentBlock, t: f64) -> LatentBlock {
        let values = if t == 0.0 {
            vec![0.0; zt.values.len()]
        } else {
            zt.values.iter().zip(&self.z0.values).map(|(z, a)| (z - a) / t).collect()
        };
        LatentBlock { shape: zt.shape, values }
    }
}

/// [`ExactVelocity`] plus a constant offset on every element.
#[derive(Debug, Clone)]
pub struct BiasedVelocity {
    pub exact: ExactVelocity,
    pub bias: f64,
}

impl VelocityField for BiasedVelocity {
    fn velocity(&self, zt: &LatentBlock, t: f64) -> LatentBlock {
        let mut v = self.exact.velocity(zt, t);
        v.values.iter_mut().for_each(|x| *x += self.bias);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    pub p_aug: f64,
    /// Corruption times are drawn from `[0, t_max)`.
    pub t_max: f64,
    pub seed: u64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy { p_aug: 0.7, t_max: 0.5, seed: 0 }
    }
}

impl AugmentPolicy {
    pub fn validate(&self) -> Result<(), FlowError> {
        if !(0.0..=1.0).contains(&self.p_aug) {
            return Err(FlowError::InvalidPolicy(format!("p_aug = {} outside [0, 1]", self.p_aug)));
        }
        if !(self.t_max > 0.0 && self.t_max <= 1.0) {
            return Err(FlowError::InvalidPolicy(format!("t_max = {} outside (0, 1]", self.t_max)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOutcome {
    pub latent: LatentBlock,
    pub applied: bool,
    pub t_used: Option<f64>,
    /// Noise drawn for the corruption, when applied.
    pub eps: Option<LatentBlock>,
}

/// Seeded stream of augmentation decisions.
#[derive(Debug, Clone)]
pub struct SelfAugmenter {
    policy: AugmentPolicy,
    rng: ChaCha8Rng,
}

impl SelfAugmenter {
    pub fn new(policy: AugmentPolicy) -> Result<Self, FlowError> {
        policy.validate()?;
        Ok(SelfAugmenter { policy, rng: ChaCha8Rng::seed_from_u64(policy.seed) })
    }

    pub fn apply(&mut self, z0: &LatentBlock, velocity: &impl VelocityField) -> Result<AugmentOutcome, FlowError> {
        // the coin is always drawn first so streams stay aligned across policies
        let coin: f64 = self.rng.random();
        if coin >= self.policy.p_aug {
            return Ok(AugmentOutcome { latent: z0.clone(), applied: false, t_used: None, eps: None });
        }
        let t = self.rng.random_range(0.0..self.policy.t_max);
        let eps = LatentBlock::standard_normal(z0.shape, &mut self.rng);
        let zt = corrupt(z0, &eps, t)?;
        let v = velocity.velocity(&zt, t);
        let latent = one_step_denoise(&zt, t, &v)?;
        Ok(AugmentOutcome { latent, applied: true, t_used: Some(t), eps: Some(eps) })
    }
}

/// Single augmentation draw seeded from `policy.seed`.
pub fn self_augment(z0: &LatentBlock, policy: &AugmentPolicy, velocity: &impl VelocityField) -> Result<AugmentOutcome, FlowError> {
    SelfAugmenter::new(*policy)?.apply(z0, velocity)
}

/// Monte Carlo summary over repeated augmentation of random latents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowCheckSummary {
    pub trials: usize,
    pub p_aug: f64,
    pub t_max: f64,
    pub seed: u64,
    pub applied: usize,
    pub applied_rate: f64,
    pub t_min_used: Option<f64>,
    pub t_max_used: Option<f64>,
    /// Worst reconstruction error with the exact velocity field.
    pub max_relative_error: f64,
}

/// Runs `trials` augmentations of fresh Gaussian latents with the exact velocity field.
pub fn flow_check(trials: usize, policy: &AugmentPolicy, shape: [usize; 4]) -> Result<FlowCheckSummary, FlowError> {
    let mut aug = SelfAugmenter::new(*policy)?;
    let mut data_rng = ChaCha8Rng::seed_from_u64(policy.seed ^ 0x9e37_79b9_7f4a_7c15);
    let (mut applied, mut max_err) = (0usize, 0.0f64);
    let (mut t_lo, mut t_hi): (Option<f64>, Option<f64>) = (None, None);
    for _ in 0..trials {
        let z0 = LatentBlock::standard_normal(shape, &mut data_rng);
        let out = aug.apply(&z0, &ExactVelocity { z0: z0.clone() })?;
        if let Some(t) = out.t_used {
            applied += 1;
            t_lo = Some(t_lo.map_or(t, |x| x.min(t)));
            t_hi = Some(t_hi.map_or(t, |x| x.max(t)));
        }
        max_err = max_err.max(out.latent.max_relative_error(&z0)?);
    }
    Ok(FlowCheckSummary {
        trials,
        p_aug: policy.p_aug,
        t_max: policy.t_max,
        seed: policy.seed,
        applied,
        applied_rate: if trials == 0 { 0.0 } else { applied as f64 / trials as f64 },
        t_min_used: t_lo,
        t_max_used: t_hi,
        max_relative_error: max_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHAPE: [usize; 4] = [2, 3, 4, 5];

    fn gaussian(seed: u64) -> LatentBlock {
        LatentBlock::standard_normal(SHAPE, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn corrupt_endpoints() {
        let (z0, eps) = (gaussian(1), gaussian(2));
        assert_eq!(corrupt(&z0, &eps, 0.0).unwrap(), z0);
        assert_eq!(corrupt(&z0, &eps, 1.0).unwrap(), eps);
        let half = corrupt(&LatentBlock::filled(SHAPE, 0.0), &LatentBlock::filled(SHAPE, 2.0), 0.5).unwrap();
        assert!(half.values().iter().all(|v| *v == 1.0));
        assert_eq!(corrupt(&z0, &eps, 1.5), Err(FlowError::TimeOutOfRange(1.5)));
        let other = LatentBlock::filled([1, 1, 1, 1], 0.0);
        assert!(matches!(corrupt(&z0, &other, 0.3), Err(FlowError::ShapeMismatch(..))));
    }

    #[test]
    fn denoise_with_true_velocity_recovers_clean() {
        let (z0, eps) = (gaussian(3), gaussian(4));
        for t in [0.05, 0.3, 0.49, 1.0] {
            let zt = corrupt(&z0, &eps, t).unwrap();
            let v = eps.zip_map(&z0, |e, a| e - a).unwrap();
            let rec = one_step_denoise(&zt, t, &v).unwrap();
            assert!(rec.max_relative_error(&z0).unwrap() < 1e-12);
        }
        let zt = gaussian(5);
        assert_eq!(one_step_denoise(&zt, 0.0, &gaussian(6)).unwrap(), zt);
    }

    #[test]
    fn error_is_linear_in_velocity_error() {
        let (z0, eps) = (gaussian(7), gaussian(8));
        let t = 0.37;
        let zt = corrupt(&z0, &eps, t).unwrap();
        let bias = BiasedVelocity { exact: ExactVelocity { z0: z0.clone() }, bias: 0.25 };
        let rec = one_step_denoise(&zt, t, &bias.velocity(&zt, t)).unwrap();
        for (r, a) in rec.values().iter().zip(z0.values()) {
            assert!(((a - r) - t * 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn p_zero_is_identity() {
        let z0 = gaussian(9);
        let policy = AugmentPolicy { p_aug: 0.0, ..Default::default() };
        let biased = BiasedVelocity { exact: ExactVelocity { z0: z0.clone() }, bias: 3.0 };
        let mut aug = SelfAugmenter::new(policy).unwrap();
        for _ in 0..100 {
            let out = aug.apply(&z0, &biased).unwrap();
            assert!(!out.applied);
            assert_eq!(out.latent, z0);
        }
    }

    #[test]
    fn exact_oracle_identity_either_way() {
        let z0 = gaussian(10);
        let mut aug = SelfAugmenter::new(AugmentPolicy { seed: 5, ..Default::default() }).unwrap();
        let mut fired = 0;
        for _ in 0..200 {
            let out = aug.apply(&z0, &ExactVelocity { z0: z0.clone() }).unwrap();
            fired += usize::from(out.applied);
            assert!(out.latent.max_relative_error(&z0).unwrap() <= 1e-6);
        }
        assert!(fired > 0 && fired < 200);
    }

    #[test]
    fn same_seed_same_stream() {
        let z0 = gaussian(11);
        let run = || {
            let mut aug = SelfAugmenter::new(AugmentPolicy { seed: 77, ..Default::default() }).unwrap();
            (0..50).map(|_| aug.apply(&z0, &ExactVelocity { z0: z0.clone() }).unwrap()).collect::<Vec<_>>()
        };
        let (a, b) = (run(), run());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!((x.applied, x.t_used, &x.eps), (y.applied, y.t_used, &y.eps));
        }
    }

    #[test]
    fn velocity_shape_mismatch_is_error() {
        let z0 = gaussian(12);
        let wrong = |_: &LatentBlock, _: f64| LatentBlock::filled([1, 1, 1, 1], 0.0);
        let out = self_augment(&z0, &AugmentPolicy { p_aug: 1.0, ..Default::default() }, &wrong);
        assert!(matches!(out, Err(FlowError::ShapeMismatch(..))));
    }

    #[test]
    fn policy_validation() {
        assert!(AugmentPolicy { p_aug: 1.2, ..Default::default() }.validate().is_err());
        assert!(AugmentPolicy { t_max: 0.0, ..Default::default() }.validate().is_err());
        let d = AugmentPolicy::default();
        assert_eq!((d.p_aug, d.t_max), (0.7, 0.5));
    }

    #[test]
    fn latent_construction() {
        assert!(LatentBlock::new([1, 1, 1, 2], vec![1.0]).is_err());
        assert_eq!(LatentBlock::new([1, 1, 1, 1], vec![f64::NAN]), Err(FlowError::NonFinite));
    }
}
