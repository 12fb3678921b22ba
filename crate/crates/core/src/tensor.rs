use crate::graph::TensorShape;

/// Dense height × width × channels tensor, row-major with channels fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: TensorShape,
    pub data: Vec<T>,
}

impl<T: Copy> Tensor<T> {
    pub fn new(shape: TensorShape, data: Vec<T>) -> Self {
        assert_eq!(shape.elements(), data.len(), "tensor data does not match shape {shape}");
        Tensor { shape, data }
    }

    pub fn filled(shape: TensorShape, value: T) -> Self {
        Tensor { shape, data: vec![value; shape.elements()] }
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.shape.width + x) * self.shape.channels + c
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> T {
        self.data[self.index(y, x, c)]
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Tensor<U> {
        Tensor { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }
}

impl Tensor<f32> {
    pub fn min_max(&self) -> (f32, f32) {
        self.data.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}
