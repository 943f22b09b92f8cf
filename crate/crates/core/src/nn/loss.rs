//! Masked cross-entropy over per-pixel class logits.
//!
//! Pixels whose supervision flag is 0 (buildings of unknown function) are
//! dropped from both the sum and the normalizer, so the loss is the mean
//! negative log-likelihood over supervised pixels only.

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub loss: f64,
    pub supervised_pixel_count: usize,
}

fn check_shapes(logits: &Tensor, labels: &[u8]) -> Result<(usize, usize)> {
    let [n, c, h, w] = logits.shape;
    if labels.len() != n * h * w {
        return Err(Error::Shape(format!(
            "{} labels for logits {:?}",
            labels.len(),
            logits.shape
        )));
    }
    Ok((c, h * w))
}

/// Log-sum-exp of the class logits at one pixel, with max subtraction.
#[inline]
fn pixel_lse(logits: &[f32], base: usize, classes: usize, plane: usize) -> (f64, f64) {
    let mut m = f32::NEG_INFINITY;
    for k in 0..classes {
        m = m.max(logits[base + k * plane]);
    }
    let m = m as f64;
    let s: f64 = (0..classes).map(|k| (logits[base + k * plane] as f64 - m).exp()).sum();
    (m, s.ln())
}

/// Returns the loss and its gradient with respect to `logits`.
pub fn masked_ce_loss(logits: &Tensor, labels: &[u8], supervision: &[u8]) -> Result<(LossValue, Vec<f32>)> {
    let (classes, plane) = check_shapes(logits, labels)?;
    if supervision.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} supervision flags for {} labels",
            supervision.len(),
            labels.len()
        )));
    }
    let count = supervision.iter().filter(|&&g| g == 1).count();
    if count == 0 {
        return Err(Error::NoSupervisedPixels);
    }
    let inv = 1.0 / count as f64;
    let mut grad = vec![0.0f32; logits.len()];
    let mut total = 0.0f64;
    for (i, (&y, &g)) in labels.iter().zip(supervision).enumerate() {
        if g != 1 {
            continue;
        }
        let y = y as usize;
        if y >= classes {
            return Err(Error::Shape(format!("supervised pixel {i} has label {y}")));
        }
        let base = (i / plane) * classes * plane + i % plane;
        let (m, lse) = pixel_lse(&logits.data, base, classes, plane);
        total += lse - (logits.data[base + y * plane] as f64 - m);
        for k in 0..classes {
            let p = (logits.data[base + k * plane] as f64 - m - lse).exp();
            let onehot = if k == y { 1.0 } else { 0.0 };
            grad[base + k * plane] = ((p - onehot) * inv) as f32;
        }
    }
    Ok((
        LossValue {
            loss: total * inv,
            supervised_pixel_count: count,
        },
        grad,
    ))
}

/// Plain mean cross-entropy over every pixel, without masking.
pub fn cross_entropy_loss(logits: &Tensor, labels: &[u8]) -> Result<(f64, Vec<f32>)> {
    let probs = softmax(logits);
    let (classes, plane) = check_shapes(logits, labels)?;
    let npix = labels.len() as f64;
    let mut grad = probs.data.clone();
    let mut total = 0.0f64;
    for (i, &y) in labels.iter().enumerate() {
        let y = y as usize;
        if y >= classes {
            return Err(Error::Shape(format!("pixel {i} has label {y}")));
        }
        let base = (i / plane) * classes * plane + i % plane;
        total -= (probs.data[base + y * plane] as f64).ln();
        grad[base + y * plane] -= 1.0;
        for k in 0..classes {
            grad[base + k * plane] /= npix as f32;
        }
    }
    Ok((total / npix, grad))
}

/// Per-pixel softmax over the channel axis.
pub fn softmax(logits: &Tensor) -> Tensor {
    let [n, c, h, w] = logits.shape;
    let plane = h * w;
    let mut out = vec![0.0f32; logits.len()];
    for i in 0..n * plane {
        let base = (i / plane) * c * plane + i % plane;
        let (m, lse) = pixel_lse(&logits.data, base, c, plane);
        for k in 0..c {
            out[base + k * plane] = (logits.data[base + k * plane] as f64 - m - lse).exp() as f32;
        }
    }
    Tensor {
        shape: logits.shape,
        data: out,
        grad: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_pixel(logits: [f32; 8]) -> Tensor {
        Tensor::new([1, 8, 1, 1], logits.to_vec()).unwrap()
    }

    #[test]
    fn uniform_prediction_costs_ln8() {
        for y in 0..8 {
            let (l, _) = masked_ce_loss(&single_pixel([0.3; 8]), &[y], &[1]).unwrap();
            assert!((l.loss - 8f64.ln()).abs() < 1e-12);
            assert_eq!(l.supervised_pixel_count, 1);
        }
    }

    #[test]
    fn confident_correct_prediction_costs_nothing() {
        let mut z = [-200.0f32; 8];
        z[3] = 200.0;
        let (l, g) = masked_ce_loss(&single_pixel(z), &[3], &[1]).unwrap();
        assert_eq!(l.loss, 0.0);
        assert!(g.iter().all(|v| v.abs() < 1e-30));
    }

    #[test]
    fn no_supervision_is_an_error() {
        let err = masked_ce_loss(&single_pixel([0.0; 8]), &[255], &[0]).unwrap_err();
        assert!(err.to_string().contains("no supervised pixels"));
    }

    #[test]
    fn shift_invariance() {
        let z = [0.1, -1.0, 2.0, 0.5, 0.0, 0.3, -0.2, 1.1];
        let shifted = z.map(|v| v + 7.0);
        let (a, _) = masked_ce_loss(&single_pixel(z), &[2], &[1]).unwrap();
        let (b, _) = masked_ce_loss(&single_pixel(shifted), &[2], &[1]).unwrap();
        assert!((a.loss - b.loss).abs() < 1e-6);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let data: Vec<f32> = (0..2 * 8 * 3 * 2).map(|i| ((i * 37 % 23) as f32 - 11.0) * 0.7).collect();
        let p = softmax(&Tensor::new([2, 8, 3, 2], data).unwrap());
        for n in 0..2 {
            for px in 0..6 {
                let s: f64 = (0..8).map(|k| p.data[n * 48 + k * 6 + px] as f64).sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
        }
    }
}
