//! Dense N-dimensional tensor of `f64` in row-major order.
//!
//! All numeric code in this crate runs on this one type: signal processing,
//! the NN layers, and the synthetic generator. There is no broadcasting and
//! no stride tricks — shapes must match exactly and row-major is the only
//! layout, so a flat index means the same thing everywhere.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Dense row-major tensor. Immutable from the caller's perspective:
/// every operation returns a new tensor and never mutates its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Zero-filled tensor. Panics on a zero extent — extents are positive
    /// by invariant.
    pub fn zeros(shape: &[usize]) -> Self {
        let n = checked_size(shape);
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = checked_size(shape);
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// Build from flat row-major data.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n = checked_size(shape);
        if n != data.len() {
            return Err(TensorError::ShapeMismatch(format!(
                "shape {:?} needs {} elements, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Build by evaluating `f` at every flat index.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n = checked_size(shape);
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(|i| f(i)).collect(),
        }
    }

    /// Identity matrix of extent `n`.
    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Total element count; equals `data().len()` by invariant.
    pub fn size(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Value at flat (row-major) index.
    #[inline]
    pub fn flat(&self, i: usize) -> f64 {
        self.data[i]
    }

    /// Row-major flat offset of a multi-index. Panics when the index rank
    /// or any coordinate is out of range; bounds-checked entry points that
    /// must report errors (e.g. `CsiInstance::complex_at`) validate first.
    #[inline]
    pub fn offset(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.shape.len(), "index rank mismatch");
        let mut off = 0;
        for (d, (&i, &ext)) in idx.iter().zip(&self.shape).enumerate() {
            assert!(
                i < ext,
                "index {} out of range in dim {} (extent {})",
                i,
                d,
                ext
            );
            off = off * ext + i;
        }
        off
    }

    /// Value at a multi-index. `at(idx) == flat(offset(idx))` for all valid
    /// indices — the single addressing scheme.
    #[inline]
    pub fn at(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: &[usize], value: f64) {
        let off = self.offset(idx);
        self.data[off] = value;
    }

    /// Same flat data under a new shape. Errors when element counts differ.
    pub fn reshape(&self, new_shape: &[usize]) -> Result<Tensor> {
        let n = checked_size(new_shape);
        if n != self.data.len() {
            return Err(TensorError::ShapeMismatch(format!(
                "cannot reshape {:?} ({} elements) to {:?} ({} elements)",
                self.shape,
                self.data.len(),
                new_shape,
                n
            )));
        }
        Ok(Tensor {
            shape: new_shape.to_vec(),
            data: self.data.clone(),
        })
    }

    fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch(format!(
                "elementwise op on {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a * b)
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&a| f(a)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|a| a * s)
    }

    pub fn relu(&self) -> Tensor {
        self.map(|a| a.max(0.0))
    }

    pub fn exp(&self) -> Tensor {
        self.map(f64::exp)
    }

    pub fn ln(&self) -> Tensor {
        self.map(f64::ln)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Matrix product of two rank-2 tensors, `[p,q] x [q,r] -> [p,r]`,
    /// accumulated in f64. ikj loop order keeps the inner loop contiguous.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || other.rank() != 2 {
            return Err(TensorError::ShapeMismatch(format!(
                "matmul needs rank-2 operands, got {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        let (p, q) = (self.shape[0], self.shape[1]);
        let (q2, r) = (other.shape[0], other.shape[1]);
        if q != q2 {
            return Err(TensorError::ShapeMismatch(format!(
                "matmul inner dims differ: {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![0.0; p * r];
        for i in 0..p {
            let row = &self.data[i * q..(i + 1) * q];
            let out_row = &mut out[i * r..(i + 1) * r];
            for (k, &a_ik) in row.iter().enumerate() {
                if a_ik == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * r..(k + 1) * r];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a_ik * b;
                }
            }
        }
        Ok(Tensor {
            shape: vec![p, r],
            data: out,
        })
    }
}

fn checked_size(shape: &[usize]) -> usize {
    assert!(
        shape.iter().all(|&e| e > 0),
        "tensor extents must be positive, got {:?}",
        shape
    );
    shape.iter().product()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reshape_keeps_flat_data() {
        let t = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let r = t.reshape(&[3, 2]).unwrap();
        assert_eq!(r.shape(), &[3, 2]);
        assert_eq!(r.data(), t.data());
        let r2 = t.reshape(&[1, 6]).unwrap();
        assert_eq!(r2.data(), t.data());
    }

    #[test]
    fn reshape_size_mismatch() {
        let t = Tensor::zeros(&[2, 3]);
        assert!(matches!(
            t.reshape(&[4, 2]),
            Err(TensorError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn at_and_flat_agree() {
        let t = Tensor::from_fn(&[3, 4, 5], |i| i as f64);
        let mut flat = 0;
        for i in 0..3 {
            for j in 0..4 {
                for k in 0..5 {
                    assert_eq!(t.at(&[i, j, k]), t.flat(flat));
                    flat += 1;
                }
            }
        }
    }

    #[test]
    fn elementwise_ops() {
        let a = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap();
        assert_eq!(a.add(&b).unwrap().data(), &[4.0, 6.0]);
        assert_eq!(b.sub(&a).unwrap().data(), &[2.0, 2.0]);
        assert_eq!(a.mul(&b).unwrap().data(), &[3.0, 8.0]);
        assert_eq!(a.scale(2.0).data(), &[2.0, 4.0]);
        let r = Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(r.relu().data(), &[0.0, 0.0, 2.0]);
        let e = Tensor::from_vec(&[2], vec![0.0, 1.0]).unwrap();
        assert_eq!(e.exp().data(), &[1.0, std::f64::consts::E]);
        for (x, y) in e.exp().ln().data().iter().zip(e.data()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn elementwise_shape_mismatch() {
        let a = Tensor::zeros(&[2]);
        let b = Tensor::zeros(&[3]);
        assert!(a.mul(&b).is_err());
    }

    #[test]
    fn matmul_hand_examples() {
        let i2 = Tensor::identity(2);
        let v = Tensor::from_vec(&[2, 1], vec![1.0, 2.0]).unwrap();
        assert_eq!(i2.matmul(&v).unwrap(), v);

        let a = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::from_vec(&[2, 1], vec![5.0, 6.0]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        assert!(matches!(a.matmul(&b), Err(TensorError::ShapeMismatch(_))));
    }
}
