use super::NumericsError;

/// Dense row-major array of rank 0 to 3.
///
/// Rank-0 tensors (empty shape) hold a single scalar. Convolution features
/// are `[channels, length]`; dense-layer inputs are flat `[len]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

pub const MAX_RANK: usize = 3;

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NumericsError> {
        if shape.len() > MAX_RANK {
            return Err(NumericsError::Rank { rank: shape.len() });
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NumericsError::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        assert!(shape.len() <= MAX_RANK, "tensor rank {} > 3", shape.len());
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    /// Rank-1 tensor owning `data`.
    pub fn from_vec(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, NumericsError> {
        if shape.len() > MAX_RANK {
            return Err(NumericsError::Rank { rank: shape.len() });
        }
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(NumericsError::DataLength {
                shape: shape.to_vec(),
                len: self.data.len(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// `self += scale * other`, shapes must match.
    pub(crate) fn add_scaled(&mut self, other: &Tensor, scale: f64) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.data.iter().enumerate() {
            if *v > self.data[best] {
                best = i;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn rejects_rank_four() {
        assert!(matches!(
            Tensor::new(vec![1, 1, 1, 1], vec![0.0]),
            Err(NumericsError::Rank { rank: 4 })
        ));
    }

    #[test]
    fn scalar_has_one_element() {
        let s = Tensor::scalar(2.5);
        assert_eq!(s.rank(), 0);
        assert_eq!(s.item(), Some(2.5));
    }

    #[test]
    fn finite_check_catches_nan() {
        let t = Tensor::from_vec(vec![1.0, f64::NAN]);
        assert!(!t.is_finite());
    }

    #[test]
    fn argmax_prefers_first_on_ties() {
        assert_eq!(Tensor::from_vec(vec![1.0, 3.0, 3.0]).argmax(), 1);
    }
}
