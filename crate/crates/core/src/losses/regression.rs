use crate::error::{Error, Result};
use crate::ldm::Tensor;

fn check(eps: &Tensor, eps_hat: &Tensor) -> Result<()> {
    if eps.shape() != eps_hat.shape() {
        return Err(Error::Shape(format!("noise {:?} vs prediction {:?}", eps.shape(), eps_hat.shape())));
    }
    if !eps.is_finite() || !eps_hat.is_finite() {
        return Err(Error::NonFinite("regression loss input".into()));
    }
    Ok(())
}

fn check_mask(eps: &Tensor, mask: &[f64]) -> Result<()> {
    if mask.len() != eps.hw() {
        return Err(Error::Shape(format!("mask of {} for {}x{} latent", mask.len(), eps.h, eps.w)));
    }
    if mask.iter().any(|&m| m != 0.0 && m != 1.0) {
        return Err(Error::InvalidArgument("mask values must be 0 or 1".into()));
    }
    Ok(())
}

/// Mean squared error over every element.
pub fn dm_loss(eps: &Tensor, eps_hat: &Tensor) -> Result<f64> {
    check(eps, eps_hat)?;
    let sum: f64 = eps.data.iter().zip(&eps_hat.data).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / eps.len() as f64)
}

/// d(dm_loss)/d(eps_hat).
pub fn dm_loss_grad(eps: &Tensor, eps_hat: &Tensor) -> Result<Tensor> {
    check(eps, eps_hat)?;
    let n = eps.len() as f64;
    let data = eps.data.iter().zip(&eps_hat.data).map(|(a, b)| 2.0 * (b - a) / n).collect();
    Ok(Tensor::from_vec(eps.c, eps.h, eps.w, data))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskedLoss {
    pub value: f64,
    /// Set when the mask had no support and the loss defaulted to zero.
    pub empty_mask: bool,
}

/// Squared residual restricted to a spatial {0,1} mask (broadcast over
/// channels), averaged over the kept elements only.
pub fn masked_dm_loss(eps: &Tensor, eps_hat: &Tensor, mask: &[f64]) -> Result<MaskedLoss> {
    check(eps, eps_hat)?;
    check_mask(eps, mask)?;
    let kept: f64 = mask.iter().sum::<f64>() * eps.c as f64;
    if kept == 0.0 {
        log::warn!("masked regression loss with an empty mask");
        return Ok(MaskedLoss { value: 0.0, empty_mask: true });
    }
    let n = eps.hw();
    let sum: f64 = eps
        .data
        .iter()
        .zip(&eps_hat.data)
        .enumerate()
        .map(|(i, (a, b))| mask[i % n] * (a - b) * (a - b))
        .sum();
    Ok(MaskedLoss { value: sum / kept, empty_mask: false })
}

pub fn masked_dm_loss_grad(eps: &Tensor, eps_hat: &Tensor, mask: &[f64]) -> Result<Tensor> {
    check(eps, eps_hat)?;
    check_mask(eps, mask)?;
    let kept: f64 = mask.iter().sum::<f64>() * eps.c as f64;
    let n = eps.hw();
    let data = eps
        .data
        .iter()
        .zip(&eps_hat.data)
        .enumerate()
        .map(|(i, (a, b))| if kept == 0.0 { 0.0 } else { 2.0 * mask[i % n] * (b - a) / kept })
        .collect();
    Ok(Tensor::from_vec(eps.c, eps.h, eps.w, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pair(seed: u64) -> (Tensor, Tensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (Tensor::randn(3, 4, 4, &mut rng), Tensor::randn(3, 4, 4, &mut rng))
    }

    #[test]
    fn basic_cases() {
        let (a, b) = pair(1);
        assert_eq!(dm_loss(&a, &a).unwrap(), 0.0);
        let zero = Tensor::zeros(3, 4, 4);
        let ms = a.data.iter().map(|v| v * v).sum::<f64>() / a.len() as f64;
        assert!((dm_loss(&a, &zero).unwrap() - ms).abs() < 1e-15);
        let ones = vec![1.0; 16];
        assert_eq!(masked_dm_loss(&a, &b, &ones).unwrap().value, dm_loss(&a, &b).unwrap());
        let z = masked_dm_loss(&a, &b, &[0.0; 16]).unwrap();
        assert_eq!(z.value, 0.0);
        assert!(z.empty_mask);
        assert!(dm_loss(&a, &Tensor::zeros(3, 4, 2)).is_err());
        assert!(masked_dm_loss(&a, &b, &[0.5; 16]).is_err());
    }

    #[test]
    fn gradients_match_differences() {
        let (a, b) = pair(2);
        let mask: Vec<f64> = (0..16).map(|i| (i % 3 == 0) as u8 as f64).collect();
        let g = dm_loss_grad(&a, &b).unwrap();
        let gm = masked_dm_loss_grad(&a, &b, &mask).unwrap();
        let h = 1e-6;
        for k in [0, 7, 20, 47] {
            let mut p = b.clone();
            p.data[k] += h;
            let mut m = b.clone();
            m.data[k] -= h;
            let fd = (dm_loss(&a, &p).unwrap() - dm_loss(&a, &m).unwrap()) / (2.0 * h);
            assert!((fd - g.data[k]).abs() < 1e-8);
            let fd = (masked_dm_loss(&a, &p, &mask).unwrap().value - masked_dm_loss(&a, &m, &mask).unwrap().value) / (2.0 * h);
            assert!((fd - gm.data[k]).abs() < 1e-8);
        }
    }
}
