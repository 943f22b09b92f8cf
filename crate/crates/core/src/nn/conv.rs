//! 2-D cross-correlation with "same" zero padding, lowered to GEMM via
//! im2col.

use rayon::prelude::*;

use super::Tensor;
use crate::error::{Error, Result};

/// `c = a·b + beta·c` with `a` logically `m×k` and `b` logically `k×n`,
/// either optionally stored transposed. All buffers are row-major.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    a_trans: bool,
    b: &[f32],
    b_trans: bool,
    beta: f32,
    c: &mut [f32],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every index the strides can reach.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn new(x: &Tensor, weight: &Tensor, stride: usize) -> Result<Self> {
        let [cout, cin, kh, kw] = weight.shape;
        if kh != kw || !(kh == 1 || kh == 3) {
            return Err(Error::Shape(format!("kernel {kh}x{kw} unsupported (1x1 or 3x3)")));
        }
        if x.c() != cin {
            return Err(Error::Shape(format!(
                "conv input has {} channels, weight expects {cin} (weight {:?})",
                x.c(),
                weight.shape
            )));
        }
        if !(stride == 1 || stride == 2) {
            return Err(Error::Shape(format!("stride {stride} unsupported")));
        }
        let _ = cout;
        Ok(Self {
            cin,
            h: x.h(),
            w: x.w(),
            k: kh,
            stride,
            pad: kh / 2,
            ho: x.h().div_ceil(stride),
            wo: x.w().div_ceil(stride),
        })
    }

    fn rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1
    }

    fn input_index(&self, o: usize, kk: usize, len: usize) -> Option<usize> {
        let i = (o * self.stride + kk) as isize - self.pad as isize;
        (i >= 0 && (i as usize) < len).then_some(i as usize)
    }

    fn im2col(&self, x: &[f32], cols: &mut [f32]) {
        let (k, p) = (self.k, self.cols());
        for ci in 0..self.cin {
            let plane = &x[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((ci * k + ky) * k + kx) * p..][..p];
                    for oy in 0..self.ho {
                        let out = &mut row[oy * self.wo..(oy + 1) * self.wo];
                        match self.input_index(oy, ky, self.h) {
                            None => out.fill(0.0),
                            Some(iy) => {
                                let line = &plane[iy * self.w..(iy + 1) * self.w];
                                for (ox, o) in out.iter_mut().enumerate() {
                                    *o = self.input_index(ox, kx, self.w).map_or(0.0, |ix| line[ix]);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f32], dx: &mut [f32]) {
        let (k, p) = (self.k, self.cols());
        for ci in 0..self.cin {
            let plane = &mut dx[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols[((ci * k + ky) * k + kx) * p..][..p];
                    for oy in 0..self.ho {
                        let Some(iy) = self.input_index(oy, ky, self.h) else {
                            continue;
                        };
                        let line = &mut plane[iy * self.w..(iy + 1) * self.w];
                        for (ox, g) in row[oy * self.wo..(oy + 1) * self.wo].iter().enumerate() {
                            if let Some(ix) = self.input_index(ox, kx, self.w) {
                                line[ix] += g;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Forward pass. `weight` is `[Cout, Cin, k, k]` with `k ∈ {1, 3}`; output
/// spatial dims are `ceil(H / stride)`.
pub fn conv2d(x: &Tensor, weight: &Tensor, bias: &[f32], stride: usize) -> Result<Tensor> {
    let g = Geometry::new(x, weight, stride)?;
    let cout = weight.shape[0];
    if bias.len() != cout {
        return Err(Error::Shape(format!("bias has {} entries for {cout} filters", bias.len())));
    }
    let p = g.cols();
    let outputs: Vec<Vec<f32>> = (0..x.n())
        .into_par_iter()
        .map(|n| {
            let mut out = vec![0.0f32; cout * p];
            for (co, b) in bias.iter().enumerate() {
                out[co * p..(co + 1) * p].fill(*b);
            }
            if g.is_pointwise() {
                gemm(cout, g.rows(), p, &weight.data, false, x.sample(n), false, 1.0, &mut out);
            } else {
                let mut cols = vec![0.0f32; g.rows() * p];
                g.im2col(x.sample(n), &mut cols);
                gemm(cout, g.rows(), p, &weight.data, false, &cols, false, 1.0, &mut out);
            }
            out
        })
        .collect();
    Tensor::new([x.n(), cout, g.ho, g.wo], outputs.concat())
}

/// Gradients of a conv layer.
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub dx: Vec<f32>,
    pub dweight: Vec<f32>,
    pub dbias: Vec<f32>,
}

/// Backward pass given the layer input `x` and upstream gradient `dy`
/// (shaped like the forward output).
pub fn conv2d_backward(x: &Tensor, weight: &Tensor, stride: usize, dy: &[f32]) -> Result<ConvGrads> {
    let g = Geometry::new(x, weight, stride)?;
    let cout = weight.shape[0];
    let p = g.cols();
    if dy.len() != x.n() * cout * p {
        return Err(Error::Shape(format!("conv upstream gradient has {} values", dy.len())));
    }
    let kdim = g.rows();
    let per_sample: Vec<(Vec<f32>, Vec<f32>, Vec<f32>)> = (0..x.n())
        .into_par_iter()
        .map(|n| {
            let dy_n = &dy[n * cout * p..(n + 1) * cout * p];
            let db: Vec<f32> = dy_n.chunks_exact(p).map(|c| c.iter().sum()).collect();
            let mut dw = vec![0.0f32; cout * kdim];
            let mut dx = vec![0.0f32; g.cin * g.h * g.w];
            if g.is_pointwise() {
                gemm(cout, p, kdim, dy_n, false, x.sample(n), true, 0.0, &mut dw);
                gemm(kdim, cout, p, &weight.data, true, dy_n, false, 0.0, &mut dx);
            } else {
                let mut cols = vec![0.0f32; kdim * p];
                g.im2col(x.sample(n), &mut cols);
                gemm(cout, p, kdim, dy_n, false, &cols, true, 0.0, &mut dw);
                gemm(kdim, cout, p, &weight.data, true, dy_n, false, 0.0, &mut cols);
                g.col2im(&cols, &mut dx);
            }
            (dx, dw, db)
        })
        .collect();
    let mut dweight = vec![0.0f32; cout * kdim];
    let mut dbias = vec![0.0f32; cout];
    let mut dx = Vec::with_capacity(x.len());
    for (dxn, dwn, dbn) in per_sample {
        dx.extend_from_slice(&dxn);
        dweight.iter_mut().zip(&dwn).for_each(|(a, b)| *a += b);
        dbias.iter_mut().zip(&dbn).for_each(|(a, b)| *a += b);
    }
    Ok(ConvGrads { dx, dweight, dbias })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct six-loop reference.
    fn naive(x: &Tensor, w: &Tensor, b: &[f32], s: usize) -> Vec<f32> {
        let [cout, cin, k, _] = w.shape;
        let p = k as isize / 2;
        let (h, wd) = (x.h(), x.w());
        let (ho, wo) = (h.div_ceil(s), wd.div_ceil(s));
        let mut out = vec![0.0f32; x.n() * cout * ho * wo];
        for n in 0..x.n() {
            for co in 0..cout {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = b[co] as f64;
                        for ci in 0..cin {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * s + ky) as isize - p;
                                    let ix = (ox * s + kx) as isize - p;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                        acc += (w.data[((co * cin + ci) * k + ky) * k + kx]
                                            * x.data[((n * cin + ci) * h + iy as usize) * wd + ix as usize])
                                            as f64;
                                    }
                                }
                            }
                        }
                        out[((n * cout + co) * ho + oy) * wo + ox] = acc as f32;
                    }
                }
            }
        }
        out
    }

    fn pseudo(len: usize, seed: u32) -> Vec<f32> {
        (0..len)
            .map(|i| (((i as u32).wrapping_mul(2654435761).wrapping_add(seed) >> 8) % 1000) as f32 / 500.0 - 1.0)
            .collect()
    }

    #[test]
    fn identity_pointwise_kernel() {
        let x = Tensor::new([2, 3, 4, 5], pseudo(120, 1)).unwrap();
        let mut w = Tensor::zeros([3, 3, 1, 1]);
        for c in 0..3 {
            w.data[c * 3 + c] = 1.0;
        }
        let y = conv2d(&x, &w, &[0.0; 3], 1).unwrap();
        assert_eq!(y.data, x.data);
    }

    #[test]
    fn ones_kernel_sums_neighbourhood() {
        let x = Tensor::new([1, 1, 5, 5], vec![1.0; 25]).unwrap();
        let w = Tensor::new([1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let y = conv2d(&x, &w, &[0.0], 1).unwrap();
        assert_eq!(y.data[2 * 5 + 2], 9.0);
        assert_eq!(y.data[0], 4.0);
        assert_eq!(y.data[2], 6.0);
    }

    #[test]
    fn matches_naive_reference() {
        for (h, wd, s, k) in [(7, 6, 1, 3), (7, 6, 2, 3), (8, 8, 2, 3), (5, 4, 1, 1), (6, 6, 2, 1)] {
            let x = Tensor::new([2, 3, h, wd], pseudo(2 * 3 * h * wd, 3)).unwrap();
            let w = Tensor::new([4, 3, k, k], pseudo(4 * 3 * k * k, 5)).unwrap();
            let b = pseudo(4, 9);
            let y = conv2d(&x, &w, &b, s).unwrap();
            assert_eq!(y.shape, [2, 4, h.div_ceil(s), wd.div_ceil(s)]);
            for (a, r) in y.data.iter().zip(naive(&x, &w, &b, s)) {
                assert!((a - r).abs() < 1e-5, "{a} vs {r}");
            }
        }
    }

    #[test]
    fn backward_is_the_adjoint() {
        // with zero bias, <conv(x, w), dy> = <dx, x> = <dw, w>
        let (h, wd) = (6, 5);
        for s in [1, 2] {
            let x = Tensor::new([2, 2, h, wd], pseudo(2 * 2 * h * wd, 1)).unwrap();
            let w = Tensor::new([3, 2, 3, 3], pseudo(54, 2)).unwrap();
            let y = conv2d(&x, &w, &[0.0; 3], s).unwrap();
            let dy = pseudo(y.len(), 7);
            let gr = conv2d_backward(&x, &w, s, &dy).unwrap();
            let lhs: f64 = y.data.iter().zip(&dy).map(|(a, b)| (a * b) as f64).sum();
            let via_dx: f64 = gr.dx.iter().zip(&x.data).map(|(a, b)| (a * b) as f64).sum();
            let via_dw: f64 = gr.dweight.iter().zip(&w.data).map(|(a, b)| (a * b) as f64).sum();
            assert!((lhs - via_dx).abs() < 1e-4 && (lhs - via_dw).abs() < 1e-4);
        }
    }

    #[test]
    fn shape_errors() {
        let x = Tensor::zeros([1, 3, 4, 4]);
        assert!(conv2d(&x, &Tensor::zeros([2, 4, 3, 3]), &[0.0; 2], 1).is_err());
        assert!(conv2d(&x, &Tensor::zeros([2, 3, 5, 5]), &[0.0; 2], 1).is_err());
        assert!(conv2d(&x, &Tensor::zeros([2, 3, 3, 3]), &[0.0; 1], 1).is_err());
        assert!(conv2d(&x, &Tensor::zeros([2, 3, 3, 3]), &[0.0; 2], 3).is_err());
    }
}
