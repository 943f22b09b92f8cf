//! Bilinear resizing by a factor of 2 or 1/2, half-pixel centers
//! (align_corners = false), edge-clamped.

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Half,
    Double,
}

impl Scale {
    pub fn from_factor(f: f32) -> Result<Self> {
        match f {
            0.5 => Ok(Scale::Half),
            2.0 => Ok(Scale::Double),
            _ => Err(Error::Shape(format!("resize factor {f} unsupported (0.5 or 2.0)"))),
        }
    }

    fn out_len(self, n: usize) -> usize {
        match self {
            Scale::Half => n / 2,
            Scale::Double => n * 2,
        }
    }

    fn factor(self) -> f64 {
        match self {
            Scale::Half => 0.5,
            Scale::Double => 2.0,
        }
    }
}

/// `(lo, hi, weight_of_hi)` per output index along one axis.
fn taps(n_in: usize, scale: Scale) -> Vec<(usize, usize, f32)> {
    (0..scale.out_len(n_in))
        .map(|i| {
            let src = ((i as f64 + 0.5) / scale.factor() - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(n_in - 1);
            let hi = (lo + 1).min(n_in - 1);
            (lo, hi, (src - lo as f64) as f32)
        })
        .collect()
}

fn check(x_shape: [usize; 4], scale: Scale) -> Result<()> {
    if scale == Scale::Half && (!x_shape[2].is_multiple_of(2) || !x_shape[3].is_multiple_of(2)) {
        return Err(Error::Shape(format!(
            "cannot halve odd spatial dims {}x{}",
            x_shape[2], x_shape[3]
        )));
    }
    Ok(())
}

pub fn bilinear_resize(x: &Tensor, scale: Scale) -> Result<Tensor> {
    check(x.shape, scale)?;
    let [n, c, h, w] = x.shape;
    let (ty, tx) = (taps(h, scale), taps(w, scale));
    let (ho, wo) = (ty.len(), tx.len());
    let mut out = Vec::with_capacity(n * c * ho * wo);
    for plane in x.data.chunks_exact(h * w) {
        for &(y0, y1, fy) in &ty {
            let (r0, r1) = (&plane[y0 * w..(y0 + 1) * w], &plane[y1 * w..(y1 + 1) * w]);
            for &(x0, x1, fx) in &tx {
                let top = r0[x0] * (1.0 - fx) + r0[x1] * fx;
                let bottom = r1[x0] * (1.0 - fx) + r1[x1] * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Tensor::new([n, c, ho, wo], out)
}

/// Scatters `dy` back through the same interpolation weights.
pub fn bilinear_resize_backward(x_shape: [usize; 4], scale: Scale, dy: &[f32]) -> Result<Vec<f32>> {
    check(x_shape, scale)?;
    let [n, c, h, w] = x_shape;
    let (ty, tx) = (taps(h, scale), taps(w, scale));
    let (ho, wo) = (ty.len(), tx.len());
    if dy.len() != n * c * ho * wo {
        return Err(Error::Shape(format!("resize upstream gradient has {} values", dy.len())));
    }
    let mut dx = vec![0.0f32; n * c * h * w];
    for (plane, gplane) in dx.chunks_exact_mut(h * w).zip(dy.chunks_exact(ho * wo)) {
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let g = gplane[oy * wo + ox];
                plane[y0 * w + x0] += g * (1.0 - fy) * (1.0 - fx);
                plane[y0 * w + x1] += g * (1.0 - fy) * fx;
                plane[y1 * w + x0] += g * fy * (1.0 - fx);
                plane[y1 * w + x1] += g * fy * fx;
            }
        }
    }
    Ok(dx)
}
