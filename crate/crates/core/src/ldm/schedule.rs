use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    Linear,
    Cosine,
}

/// Variance-preserving noise levels: `z_t = alpha_t z + sigma_t eps` with
/// `alpha_t^2 + sigma_t^2 = 1`. Index `t` runs over `1..=steps`; `t = 0`
/// is the clean sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub steps: usize,
    pub kind: ScheduleKind,
    alpha: Vec<f64>,
    sigma: Vec<f64>,
}

pub const DEFAULT_STEPS: usize = 1000;

pub fn make_schedule(steps: usize, kind: ScheduleKind) -> Result<NoiseSchedule> {
    if steps < 1 {
        return Err(Error::InvalidArgument("schedule needs at least one step".into()));
    }
    let alpha_bar: Vec<f64> = match kind {
        ScheduleKind::Cosine => {
            let s = 0.008;
            let f = |t: f64| ((t / steps as f64 + s) / (1.0 + s) * std::f64::consts::FRAC_PI_2).cos().powi(2);
            let f0 = f(0.0);
            let mut prev = 1.0;
            (1..=steps)
                .map(|t| {
                    let raw = f(t as f64) / f0;
                    // cap per-step beta at 0.999 so the last level keeps some signal
                    let ab = raw.max(prev * (1.0 - 0.999));
                    prev = ab;
                    ab
                })
                .collect()
        }
        ScheduleKind::Linear => {
            let scale = 1000.0 / steps as f64;
            let (b0, b1) = ((1e-4 * scale).min(0.999), (0.02 * scale).min(0.999));
            let mut ab = 1.0;
            (1..=steps)
                .map(|t| {
                    let frac = if steps == 1 { 0.0 } else { (t - 1) as f64 / (steps - 1) as f64 };
                    ab *= 1.0 - (b0 + (b1 - b0) * frac);
                    ab
                })
                .collect()
        }
    };
    let alpha: Vec<f64> = alpha_bar.iter().map(|ab| ab.sqrt()).collect();
    let sigma = alpha_bar.iter().map(|ab| (1.0 - ab).sqrt()).collect();
    Ok(NoiseSchedule { steps, kind, alpha, sigma })
}

impl NoiseSchedule {
    pub fn alpha(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha[t - 1]
        }
    }

    pub fn sigma(&self, t: usize) -> f64 {
        if t == 0 {
            0.0
        } else {
            self.sigma[t - 1]
        }
    }

    pub fn check_t(&self, t: usize) -> Result<()> {
        if t > self.steps {
            return Err(Error::InvalidArgument(format!("timestep {t} beyond schedule of {}", self.steps)));
        }
        Ok(())
    }
}

/// `alpha_t z + sigma_t eps`, elementwise.
pub fn forward_diffuse(z: &Tensor, t: usize, noise: &Tensor, schedule: &NoiseSchedule) -> Result<Tensor> {
    if z.shape() != noise.shape() {
        return Err(Error::Shape(format!("latent {:?} vs noise {:?}", z.shape(), noise.shape())));
    }
    schedule.check_t(t)?;
    let (a, s) = (schedule.alpha(t), schedule.sigma(t));
    let data = z.data.iter().zip(&noise.data).map(|(&zv, &ev)| a * zv + s * ev).collect();
    Ok(Tensor { c: z.c, h: z.h, w: z.w, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn variance_preserving_and_monotone() {
        for kind in [ScheduleKind::Cosine, ScheduleKind::Linear] {
            for steps in [1, 10, 100, 250, 1000] {
                let s = make_schedule(steps, kind).unwrap();
                for t in 0..=steps {
                    let v = s.alpha(t).powi(2) + s.sigma(t).powi(2);
                    assert!((v - 1.0).abs() < 1e-6, "{kind:?} T={steps} t={t}: {v}");
                    if t > 0 {
                        assert!(s.alpha(t) <= s.alpha(t - 1));
                    }
                }
            }
        }
        assert!(make_schedule(0, ScheduleKind::Cosine).is_err());
    }

    #[test]
    fn clean_limit() {
        let s = make_schedule(1000, ScheduleKind::Cosine).unwrap();
        assert!((s.alpha(1) - 1.0).abs() < 1e-3);
        assert!(s.sigma(1) < 0.05);
        assert!(s.alpha(1000) < 0.05);
    }

    #[test]
    fn diffuse_identities() {
        let s = make_schedule(100, ScheduleKind::Cosine).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let z = Tensor::randn(2, 3, 3, &mut rng);
        let e = Tensor::randn(2, 3, 3, &mut rng);
        assert_eq!(forward_diffuse(&z, 0, &e, &s).unwrap(), z);
        let zero = Tensor::zeros(2, 3, 3);
        let zt = forward_diffuse(&zero, 40, &e, &s).unwrap();
        for (a, b) in zt.data.iter().zip(&e.data) {
            assert_eq!(*a, s.sigma(40) * b);
        }
        assert!(forward_diffuse(&z, 1, &Tensor::zeros(1, 3, 3), &s).is_err());
    }

    // Monte-Carlo oracle: E|z_t|^2 = alpha^2 |z|^2 + sigma^2 dim.
    #[test]
    fn second_moment_matches_monte_carlo() {
        let s = make_schedule(1000, ScheduleKind::Cosine).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z = Tensor::randn(3, 4, 4, &mut rng);
        let dim = z.len() as f64;
        let zz: f64 = z.data.iter().map(|v| v * v).sum();
        for t in [50, 500, 900] {
            let draws = 10_000;
            let mut acc = 0.0;
            for _ in 0..draws {
                let e = Tensor::randn(3, 4, 4, &mut rng);
                let zt = forward_diffuse(&z, t, &e, &s).unwrap();
                acc += zt.data.iter().map(|v| v * v).sum::<f64>();
            }
            let mc = acc / draws as f64;
            let want = s.alpha(t).powi(2) * zz + s.sigma(t).powi(2) * dim;
            assert!((mc - want).abs() / want < 0.02, "t={t}: {mc} vs {want}");
        }
    }
}
