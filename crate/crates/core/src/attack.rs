//! Omniscient Byzantine adversaries. Every attack reads the honest gradients
//! of the current round and crafts the uploads of the remaining workers.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::vector::{mean_in_order, GradVector};

pub const RANDOM_NOISE_MU: f64 = 300.0;
pub const SIGN_FLIP_MU: f64 = -10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackKind {
    NoAttack,
    /// Draws from `N(honest_mean, mu * I)`; `mu` is a per-coordinate variance.
    RandomNoise {
        #[serde(default = "default_noise_mu")]
        mu: f64,
    },
    /// Uploads `mu * honest_mean`.
    SignFlip {
        #[serde(default = "default_flip_mu")]
        mu: f64,
    },
    /// Uploads that cancel the plain mean of all uploads.
    ZeroGradient,
}

fn default_noise_mu() -> f64 {
    RANDOM_NOISE_MU
}

fn default_flip_mu() -> f64 {
    SIGN_FLIP_MU
}

impl AttackKind {
    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::NoAttack => "no_attack",
            AttackKind::RandomNoise { .. } => "random_noise",
            AttackKind::SignFlip { .. } => "sign_flip",
            AttackKind::ZeroGradient => "zero_gradient",
        }
    }

    pub fn is_attack(&self) -> bool {
        !matches!(self, AttackKind::NoAttack)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            AttackKind::RandomNoise { mu } if !(mu >= 0.0) || !mu.is_finite() => {
                Err(Error::invalid(format!("random-noise variance must be >= 0, got {mu}")))
            }
            AttackKind::SignFlip { mu } if !mu.is_finite() => {
                Err(Error::invalid(format!("sign-flip strength must be finite, got {mu}")))
            }
            _ => Ok(()),
        }
    }
}

/// `(1/H) sum_h g_h`, summed in worker order.
pub fn honest_mean(honest: &[GradVector]) -> Result<GradVector> {
    mean_in_order(honest)
}

pub fn craft_random_noise(
    honest: &[GradVector],
    mu: f64,
    count: usize,
    rng: &mut RngStream,
) -> Result<Vec<GradVector>> {
    AttackKind::RandomNoise { mu }.validate()?;
    let mean = honest_mean(honest)?;
    let noise = Normal::new(0.0, mu.sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
    Ok((0..count)
        .map(|_| GradVector(mean.iter().map(|m| m + noise.sample(rng)).collect()))
        .collect())
}

pub fn craft_sign_flip(honest: &[GradVector], mu: f64, count: usize) -> Result<Vec<GradVector>> {
    let mean = honest_mean(honest)?;
    let crafted = GradVector(mean.iter().map(|m| mu * m).collect());
    Ok(vec![crafted; count])
}

/// Each adversary uploads `-(1/count) sum_h g_h`.
pub fn craft_zero_gradient(honest: &[GradVector], count: usize) -> Result<Vec<GradVector>> {
    if count == 0 {
        return Err(Error::invalid("zero-gradient attack needs at least one adversary"));
    }
    let dim = crate::vector::common_dim(honest)?;
    let mut sum = vec![0.0; dim];
    for g in honest {
        for (s, v) in sum.iter_mut().zip(g.iter()) {
            *s += v;
        }
    }
    let crafted = GradVector(sum.iter().map(|s| -s / count as f64).collect());
    Ok(vec![crafted; count])
}

/// Full upload list: the honest gradients first, then `byz_count` crafted
/// vectors. `NoAttack` appends nothing.
pub fn apply_attack(
    kind: &AttackKind,
    honest: &[GradVector],
    byz_count: usize,
    rng: &mut RngStream,
) -> Result<Vec<GradVector>> {
    let crafted = match *kind {
        AttackKind::NoAttack => Vec::new(),
        _ if byz_count == 0 => Vec::new(),
        AttackKind::RandomNoise { mu } => craft_random_noise(honest, mu, byz_count, rng)?,
        AttackKind::SignFlip { mu } => craft_sign_flip(honest, mu, byz_count)?,
        AttackKind::ZeroGradient => craft_zero_gradient(honest, byz_count)?,
    };
    let mut uploads = Vec::with_capacity(honest.len() + crafted.len());
    uploads.extend_from_slice(honest);
    uploads.extend(crafted);
    Ok(uploads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::agg_mean;
    use crate::rng::from_seed;
    use rand::Rng;

    fn gv(v: &[f64]) -> GradVector {
        GradVector(v.to_vec())
    }

    fn random(rng: &mut RngStream, n: usize, d: usize) -> Vec<GradVector> {
        (0..n).map(|_| GradVector((0..d).map(|_| rng.random_range(-3.0..3.0)).collect())).collect()
    }

    #[test]
    fn honest_mean_examples() {
        let v = gv(&[1.5, -2.0]);
        assert_eq!(honest_mean(&[v.clone()]).unwrap(), v);
        assert_eq!(honest_mean(&[gv(&[2.0, 0.0]), gv(&[0.0, 2.0])]).unwrap(), gv(&[1.0, 1.0]));
        let g = random(&mut from_seed(1), 6, 3);
        let m = honest_mean(&g).unwrap();
        for j in 0..3 {
            let s: f64 = g.iter().map(|v| v[j]).sum();
            assert!((m[j] - s / 6.0).abs() < 1e-14);
        }
        assert!(honest_mean(&[]).is_err());
    }

    #[test]
    fn random_noise_degenerate_and_replayable() {
        let g = random(&mut from_seed(2), 4, 5);
        let mean = honest_mean(&g).unwrap();
        for v in craft_random_noise(&g, 0.0, 3, &mut from_seed(0)).unwrap() {
            assert_eq!(v, mean);
        }
        let a = craft_random_noise(&g, 300.0, 2, &mut from_seed(9)).unwrap();
        let b = craft_random_noise(&g, 300.0, 2, &mut from_seed(9)).unwrap();
        assert_eq!(a, b);
        assert!(craft_random_noise(&g, -1.0, 1, &mut from_seed(0)).is_err());
    }

    #[test]
    fn sign_flip_scales_the_mean() {
        let g = random(&mut from_seed(3), 5, 4);
        let m = honest_mean(&g).unwrap();
        let out = craft_sign_flip(&g, -10.0, 3).unwrap();
        assert_eq!(out.len(), 3);
        for v in &out {
            for (a, b) in v.iter().zip(m.iter()) {
                assert_eq!(*a, -10.0 * b);
            }
        }
        assert_eq!(craft_sign_flip(&g, 1.0, 1).unwrap()[0], m);
        assert!(craft_sign_flip(&g, 0.0, 1).unwrap()[0].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_gradient_cancels_mean() {
        let g = vec![gv(&[1.0, 2.0]); 4];
        let out = craft_zero_gradient(&g, 1).unwrap();
        assert_eq!(out[0], gv(&[-4.0, -8.0]));
        let uploads = apply_attack(&AttackKind::ZeroGradient, &g, 1, &mut from_seed(0)).unwrap();
        assert!(agg_mean(&uploads).unwrap().norm() <= 1e-12);

        let g = vec![gv(&[1.0, 0.0]), gv(&[3.0, 0.0])];
        let uploads = apply_attack(&AttackKind::ZeroGradient, &g, 2, &mut from_seed(0)).unwrap();
        assert_eq!(&uploads[2..], &[gv(&[-2.0, 0.0]), gv(&[-2.0, 0.0])]);
        assert!(craft_zero_gradient(&g, 0).is_err());

        let g = random(&mut from_seed(4), 80, 50);
        let uploads = apply_attack(&AttackKind::ZeroGradient, &g, 20, &mut from_seed(0)).unwrap();
        assert!(agg_mean(&uploads).unwrap().norm() <= 1e-10);
    }

    #[test]
    fn upload_layout() {
        let g = random(&mut from_seed(5), 3, 2);
        let none = apply_attack(&AttackKind::NoAttack, &g, 0, &mut from_seed(0)).unwrap();
        assert_eq!(none, g);
        let flip = apply_attack(&AttackKind::SignFlip { mu: -10.0 }, &g, 4, &mut from_seed(0)).unwrap();
        assert_eq!(flip.len(), 7);
        assert_eq!(&flip[..3], &g[..]);
        assert!(flip[3..].windows(2).all(|w| w[0] == w[1]));
    }
}
