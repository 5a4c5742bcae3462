//! Metric stress embedding: minimize `sum (d_high - d_low)^2` over a set of
//! point pairs by plain gradient descent.
//!
//! This is the objective sometimes presented under the UMAP name; it is not
//! UMAP's fuzzy-simplicial-set cross-entropy. `neighbor_k` restricts the pair
//! set to symmetrized k-nearest-neighbour edges for a local-structure flavour.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::rng::ToolkitRng;
use crate::scalar::Scalar;

/// Standard deviation of the seeded Gaussian initialization.
pub const INIT_STD: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct StressConfig {
    pub out_dims: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub neighbor_k: Option<usize>,
    pub seed: u64,
}

impl Default for StressConfig {
    fn default() -> Self {
        Self {
            out_dims: 2,
            iterations: 2000,
            learning_rate: 1e-2,
            neighbor_k: None,
            seed: 42,
        }
    }
}

impl StressConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(2..=3).contains(&self.out_dims) {
            return Err(Error::Config(format!("out_dims must be 2 or 3, got {}", self.out_dims)));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if let Some(k) = self.neighbor_k {
            if k < 1 || k + 1 > n {
                return Err(Error::Config(format!("neighbor_k {k} outside [1, {}]", n.saturating_sub(1))));
            }
        }
        Ok(())
    }
}

/// High-dimensional distances for a set of unordered pairs `(i, j)`, `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDistances<T = f64> {
    pub n_points: usize,
    pub pairs: Vec<(usize, usize, T)>,
}

fn euclidean<T: Scalar>(data: &ArrayView2<T>, i: usize, j: usize) -> T {
    let mut s = T::zero();
    for (a, b) in data.row(i).iter().zip(data.row(j)) {
        let d = *a - *b;
        s += d * d;
    }
    s.sqrt()
}

impl<T: Scalar> PairDistances<T> {
    pub fn all_pairs(data: ArrayView2<T>) -> Self {
        let n = data.nrows();
        let pairs = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, euclidean(&data, i, j)))
            .collect();
        Self { n_points: n, pairs }
    }

    /// Union of each point's `k` nearest neighbours (ties by lower index).
    pub fn knn_pairs(data: ArrayView2<T>, k: usize) -> Result<Self> {
        let n = data.nrows();
        if k < 1 || k + 1 > n {
            return Err(Error::Config(format!("neighbor_k {k} outside [1, {}]", n.saturating_sub(1))));
        }
        let mut keep = vec![false; n * n];
        for i in 0..n {
            let mut others: Vec<(T, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (euclidean(&data, i, j), j))
                .collect();
            others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            for &(_, j) in others.iter().take(k) {
                keep[i.min(j) * n + i.max(j)] = true;
            }
        }
        let pairs = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| keep[i * n + j])
            .map(|(i, j)| (i, j, euclidean(&data, i, j)))
            .collect();
        Ok(Self { n_points: n, pairs })
    }
}

/// `sum over pairs (d_high - ||t_i - t_j||)^2`
pub fn stress<T: Scalar>(high: &PairDistances<T>, low_coords: ArrayView2<T>) -> T {
    high.pairs
        .iter()
        .map(|&(i, j, dh)| {
            let r = dh - euclidean(&low_coords, i, j);
            r * r
        })
        .fold(T::zero(), |a, b| a + b)
}

/// `d/dt_i = sum_j 2 (d_low - d_high) (t_i - t_j) / d_low`; pairs with
/// `d_low = 0` contribute nothing.
pub fn stress_gradient<T: Scalar>(high: &PairDistances<T>, low_coords: ArrayView2<T>) -> Array2<T> {
    let (n, d) = low_coords.dim();
    // Adjacency so each row can be accumulated independently and in a fixed order.
    let mut adjacency: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
    for &(i, j, dh) in &high.pairs {
        adjacency[i].push((j, dh));
        adjacency[j].push((i, dh));
    }
    let two = T::of(2.0);
    let mut grad = Array2::zeros((n, d));
    grad.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(adjacency.par_iter())
        .enumerate()
        .for_each(|(i, (mut g, edges))| {
            for &(j, dh) in edges {
                let dl = euclidean(&low_coords, i, j);
                if dl == T::zero() {
                    continue;
                }
                let coef = two * (dl - dh) / dl;
                for k in 0..d {
                    g[k] += coef * (low_coords[[i, k]] - low_coords[[j, k]]);
                }
            }
        });
    grad
}

pub fn run_stress<T: Scalar>(data: ArrayView2<T>, cfg: &StressConfig) -> Result<Embedding<T>> {
    let n = data.nrows();
    if n < 3 {
        return Err(Error::Shape(format!("stress embedding needs at least 3 points, got {n}")));
    }
    cfg.validate(n)?;
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("input contains non-finite values".into()));
    }
    let high = match cfg.neighbor_k {
        Some(k) => PairDistances::knn_pairs(data, k)?,
        None => PairDistances::all_pairs(data),
    };
    let mut rng = ToolkitRng::new(cfg.seed);
    let init = Array2::from_shape_simple_fn((n, cfg.out_dims), || T::of(INIT_STD * rng.gaussian()));
    descend(&high, init, cfg)
}

/// Gradient descent from explicit starting coordinates. The trace holds the
/// stress after every iteration.
pub fn descend<T: Scalar>(
    high: &PairDistances<T>,
    init: Array2<T>,
    cfg: &StressConfig,
) -> Result<Embedding<T>> {
    if high.pairs.is_empty() {
        return Err(Error::Shape("pair set is empty".into()));
    }
    if init.nrows() != high.n_points {
        return Err(Error::Shape(format!(
            "{} starting points for {} data points",
            init.nrows(),
            high.n_points
        )));
    }
    let lr = T::of(cfg.learning_rate);
    let mut coords = init;
    let mut trace = Vec::with_capacity(cfg.iterations);
    for iter in 0..cfg.iterations {
        let grad = stress_gradient(high, coords.view());
        coords.zip_mut_with(&grad, |c, &g| *c -= lr * g);
        let s = stress(high, coords.view());
        if !s.is_finite() {
            return Err(Error::Optimization {
                iteration: iter,
                message: "stress became non-finite".into(),
            });
        }
        trace.push(s);
    }
    let final_objective = stress(high, coords.view());
    Ok(Embedding {
        coords,
        final_objective,
        trace,
    })
}
