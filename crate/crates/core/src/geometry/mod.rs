//! Point clouds, deterministic seeds, Euclidean distance matrices and the
//! synthetic 2-D shapes used by the topology experiments.

mod io;
mod synthetic;

pub use io::{format_f64, load_csv, read_csv, save_csv, write_csv};
pub use synthetic::{generate_synthetic, Shape, SyntheticSpec};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("empty cloud")]
    EmptyCloud,
    #[error("ambient dimension must be at least 1")]
    ZeroDimension,
    #[error("coordinate buffer of length {len} is not a multiple of dimension {dim}")]
    RaggedBuffer { len: usize, dim: usize },
    #[error("non-finite coordinate at point {point}, axis {axis}")]
    NonFinite { point: usize, axis: usize },
    #[error("expected {expected} labels, got {got}")]
    LabelCount { expected: usize, got: usize },
    #[error("unknown shape `{0}`")]
    UnknownShape(String),
    #[error("invalid shape parameter: {0}")]
    InvalidParameter(String),
    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("row {row}, column {column}: `{value}` is not a number")]
    NonNumeric { row: usize, column: usize, value: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Seed of a deterministic random stream.
///
/// `master` identifies the run, `stream` the trial. The generator is ChaCha8,
/// whose output depends only on `(master, stream)`, never on the platform or
/// the thread that consumes it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed {
    pub master: u64,
    pub stream: u64,
}

impl Seed {
    pub const fn new(master: u64, stream: u64) -> Self {
        Self { master, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream);
        rng
    }

    /// Independent seed for a named sub-task of the same trial.
    pub fn derive(&self, salt: u64) -> Seed {
        Seed {
            master: splitmix64(self.master ^ splitmix64(salt.wrapping_add(0x5eed))),
            stream: self.stream,
        }
    }

    pub fn with_stream(&self, stream: u64) -> Seed {
        Seed {
            master: self.master,
            stream,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Draws a vector from N(0, (radius² / dim) I), so that E‖v‖² = radius².
pub fn gaussian_vector<R: rand::Rng + ?Sized>(rng: &mut R, dim: usize, radius: f64) -> Vec<f64> {
    let scale = radius / (dim as f64).sqrt();
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        })
        .collect()
}

/// A finite set of points in R^N, optionally labelled.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
    labels: Option<Vec<usize>>,
    name: String,
}

impl PointCloud {
    /// Builds a cloud from a row-major coordinate buffer.
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self, GeometryError> {
        if dim == 0 {
            return Err(GeometryError::ZeroDimension);
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(GeometryError::RaggedBuffer { len: coords.len(), dim });
        }
        if coords.is_empty() {
            return Err(GeometryError::EmptyCloud);
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite {
                point: pos / dim,
                axis: pos % dim,
            });
        }
        Ok(Self {
            dim,
            coords,
            labels: None,
            name: String::new(),
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, GeometryError> {
        let dim = rows.first().ok_or(GeometryError::EmptyCloud)?.as_ref().len();
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for (row, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(GeometryError::RaggedRow {
                    row,
                    expected: dim,
                    found: r.len(),
                });
            }
            coords.extend_from_slice(r);
        }
        Self::new(dim, coords)
    }

    /// Rows of `m` become points.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self, GeometryError> {
        let mut coords = Vec::with_capacity(m.len());
        for row in m.row_iter() {
            coords.extend(row.iter().copied());
        }
        Self::new(m.ncols(), coords)
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self, GeometryError> {
        if labels.len() != self.len() {
            return Err(GeometryError::LabelCount {
                expected: self.len(),
                got: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// n × N matrix, one point per row.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.coords)
    }

    /// Distinct labels in ascending order (empty when unlabelled).
    pub fn classes(&self) -> Vec<usize> {
        let mut classes = self.labels.clone().unwrap_or_default();
        classes.sort_unstable();
        classes.dedup();
        classes
    }

    /// Same labels and name, new coordinates of identical shape.
    pub(crate) fn with_coords(&self, coords: Vec<f64>) -> Result<Self, GeometryError> {
        let mut out = Self::new(self.dim, coords)?;
        if out.len() != self.len() {
            return Err(GeometryError::LabelCount {
                expected: self.len(),
                got: out.len(),
            });
        }
        out.labels = self.labels.clone();
        out.name = self.name.clone();
        Ok(out)
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Dense symmetric matrix of pairwise Euclidean distances.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Largest pairwise distance.
    pub fn diameter(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }

    /// Builds a distance matrix from explicit entries; the upper triangle wins.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = f(i, j);
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        Self { n, data }
    }
}

pub fn pairwise_distances(cloud: &PointCloud) -> DistanceMatrix {
    DistanceMatrix::from_fn(cloud.len(), |i, j| euclidean(cloud.point(i), cloud.point(j)))
}
