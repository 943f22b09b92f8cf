use crate::error::{Error, Result};

/// Dense `[N, C, H, W]` float tensor with an optional gradient slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: [usize; 4],
    pub data: Vec<f32>,
    pub grad: Option<Vec<f32>>,
}

impl Tensor {
    pub fn new(shape: [usize; 4], data: Vec<f32>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Shape(format!("{:?} needs {} values, got {}", shape, shape.iter().product::<usize>(), data.len())));
        }
        Ok(Self { shape, data, grad: None })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
            grad: None,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn n(&self) -> usize {
        self.shape[0]
    }
    pub fn c(&self) -> usize {
        self.shape[1]
    }
    pub fn h(&self) -> usize {
        self.shape[2]
    }
    pub fn w(&self) -> usize {
        self.shape[3]
    }

    /// Values of sample `n` as a `[C, H, W]` slice.
    pub fn sample(&self, n: usize) -> &[f32] {
        let per = self.shape[1] * self.shape[2] * self.shape[3];
        &self.data[n * per..(n + 1) * per]
    }

    pub fn zero_grad(&mut self) {
        self.grad = Some(vec![0.0; self.data.len()]);
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    Tensor {
        shape: x.shape,
        data: x.data.iter().map(|&v| v.max(0.0)).collect(),
        grad: None,
    }
}

/// Gradient through a ReLU given its output.
pub fn relu_backward(y: &Tensor, dy: &[f32]) -> Vec<f32> {
    y.data
        .iter()
        .zip(dy)
        .map(|(&o, &g)| if o > 0.0 { g } else { 0.0 })
        .collect()
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape != b.shape {
        return Err(Error::Shape(format!("add {:?} + {:?}", a.shape, b.shape)));
    }
    Ok(Tensor {
        shape: a.shape,
        data: a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect(),
        grad: None,
    })
}

/// Channel concatenation of two tensors with equal N, H, W.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.n() != b.n() || a.h() != b.h() || a.w() != b.w() {
        return Err(Error::Shape(format!("concat {:?} with {:?}", a.shape, b.shape)));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    for n in 0..a.n() {
        data.extend_from_slice(a.sample(n));
        data.extend_from_slice(b.sample(n));
    }
    Ok(Tensor {
        shape: [a.n(), a.c() + b.c(), a.h(), a.w()],
        data,
        grad: None,
    })
}

/// Splits a concatenation gradient back into its two parts.
pub fn split_channels(dy: &[f32], shape: [usize; 4], first: usize) -> (Vec<f32>, Vec<f32>) {
    let [n, c, h, w] = shape;
    let plane = h * w;
    let mut a = Vec::with_capacity(n * first * plane);
    let mut b = Vec::with_capacity(n * (c - first) * plane);
    for s in 0..n {
        let base = s * c * plane;
        a.extend_from_slice(&dy[base..base + first * plane]);
        b.extend_from_slice(&dy[base + first * plane..base + c * plane]);
    }
    (a, b)
}
