//! Grid domains and the sample containers every stage shares.

use serde::{Deserialize, Serialize};

use crate::diff::Tensor;

/// Uniform grids on the unit domains the solvers use. Interval grids are
/// periodic with nodes j/n; the square is node-centered inclusive, i/(n-1);
/// space-time grids pair a periodic interval with output times (j+1)/nt.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Interval { n: usize },
    SpaceTime { nx: usize, nt: usize },
    Square { n: usize },
}

impl Domain {
    pub fn value_shape(&self) -> Vec<usize> {
        match *self {
            Domain::Interval { n } => vec![n],
            Domain::SpaceTime { nx, nt } => vec![nx, nt],
            Domain::Square { n } => vec![n, n],
        }
    }

    pub fn numel(&self) -> usize {
        self.value_shape().iter().product()
    }

    /// Coordinates of every node, flattened row-major to match value layout;
    /// one row per node, one column per coordinate.
    pub fn coord_matrix(&self) -> Tensor {
        match *self {
            Domain::Interval { n } => {
                Tensor::from_fn(&[n, 1], |i| i as f64 / n as f64)
            }
            Domain::SpaceTime { nx, nt } => {
                let mut data = Vec::with_capacity(nx * nt * 2);
                for i in 0..nx {
                    for j in 0..nt {
                        data.push(i as f64 / nx as f64);
                        data.push((j + 1) as f64 / nt as f64);
                    }
                }
                Tensor::new(vec![nx * nt, 2], data)
            }
            Domain::Square { n } => {
                let h = 1.0 / (n - 1) as f64;
                let mut data = Vec::with_capacity(n * n * 2);
                for i in 0..n {
                    for j in 0..n {
                        data.push(i as f64 * h);
                        data.push(j as f64 * h);
                    }
                }
                Tensor::new(vec![n * n, 2], data)
            }
        }
    }
}

/// A field sampled on one of the grids.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub domain: Domain,
    pub values: Tensor,
}

impl GridFunction {
    pub fn new(domain: Domain, values: Tensor) -> Self {
        assert_eq!(
            values.shape(),
            domain.value_shape().as_slice(),
            "values shaped {:?} do not fit {:?}",
            values.shape(),
            domain
        );
        GridFunction { domain, values }
    }

    pub fn from_vec(domain: Domain, values: Vec<f64>) -> Self {
        let shape = domain.value_shape();
        GridFunction::new(domain, Tensor::new(shape, values))
    }
}

/// One (input field, solution field) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePair {
    pub k: GridFunction,
    pub u: GridFunction,
}

/// A split of generated pairs, tagged with where they came from.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub pairs: Vec<SamplePair>,
    pub family: String,
    pub domain_id: String,
    pub split: String,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// All inputs flattened, one row per sample.
    pub fn stack_k(&self) -> Tensor {
        stack(self.pairs.iter().map(|p| &p.k))
    }

    /// All solutions flattened, one row per sample.
    pub fn stack_u(&self) -> Tensor {
        stack(self.pairs.iter().map(|p| &p.u))
    }

    pub fn k_domain(&self) -> Domain {
        self.pairs[0].k.domain
    }

    pub fn u_domain(&self) -> Domain {
        self.pairs[0].u.domain
    }
}

fn stack<'a>(fields: impl Iterator<Item = &'a GridFunction>) -> Tensor {
    let mut rows = 0usize;
    let mut width = None;
    let mut data = Vec::new();
    for f in fields {
        let w = f.values.numel();
        match width {
            None => width = Some(w),
            Some(prev) => assert_eq!(prev, w, "inconsistent field sizes in dataset"),
        }
        data.extend_from_slice(f.values.data());
        rows += 1;
    }
    let width = width.expect("stack of empty dataset");
    Tensor::new(vec![rows, width], data)
}
