use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A non-empty collection of equally shaped samples, stored row-major as an
/// `[n, ...sample_shape]` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    data: Tensor,
    pub domain: String,
}

impl SampleSet {
    pub fn new(data: Tensor, domain: impl Into<String>) -> Result<Self> {
        if data.shape().len() < 2 {
            return Err(Error::Contract(format!(
                "sample set needs a leading sample axis, got shape {:?}",
                data.shape()
            )));
        }
        Ok(Self {
            data,
            domain: domain.into(),
        })
    }

    /// Stacks flat samples that all share `sample_shape`.
    pub fn from_samples<R: AsRef<[f32]>>(
        samples: &[R],
        sample_shape: &[usize],
        domain: impl Into<String>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Contract("sample set must be non-empty".into()));
        }
        let width: usize = sample_shape.iter().product();
        let mut data = Vec::with_capacity(samples.len() * width);
        for s in samples {
            let s = s.as_ref();
            if s.len() != width {
                return Err(Error::shape("sample set", sample_shape, &[s.len()]));
            }
            data.extend_from_slice(s);
        }
        let mut shape = vec![samples.len()];
        shape.extend_from_slice(sample_shape);
        Self::new(Tensor::new(shape, data)?, domain)
    }

    pub fn len(&self) -> usize {
        self.data.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.data.shape()[1..]
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        self.data.row(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f32]> {
        self.data.data().chunks_exact(self.dim())
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    /// The samples as a `[n, dim]` matrix.
    pub fn matrix(&self) -> Tensor {
        Tensor::new(vec![self.len(), self.dim()], self.data.data().to_vec()).expect("same element count")
    }

    pub fn select(&self, indices: &[usize]) -> Result<SampleSet> {
        let rows: Vec<&[f32]> = indices.iter().map(|&i| self.sample(i)).collect();
        SampleSet::from_samples(&rows, self.sample_shape(), self.domain.clone())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> SampleSet {
        SampleSet {
            data: self.data.map(f),
            domain: self.domain.clone(),
        }
    }

    /// Reinterprets a `[n, dim]` matrix as samples of this set's shape.
    pub fn with_data(&self, matrix: Tensor) -> Result<SampleSet> {
        let mut shape = vec![matrix.rows()];
        shape.extend_from_slice(self.sample_shape());
        SampleSet::new(matrix.reshape(shape)?, self.domain.clone())
    }

    pub fn same_shape(&self, other: &SampleSet) -> Result<()> {
        if self.sample_shape() != other.sample_shape() {
            return Err(Error::shape("sample sets", self.sample_shape(), other.sample_shape()));
        }
        Ok(())
    }
}
