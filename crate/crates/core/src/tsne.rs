//! Exact t-SNE.
//!
//! Gaussian neighbour probabilities with a per-point bandwidth calibrated to a
//! target perplexity, symmetrized into joint probabilities; Student-t
//! similarities in the embedding; KL(P || Q) minimized by momentum gradient
//! descent with early exaggeration. Affinities are dense `n x n`, so memory is
//! `O(n^2)`.
//!
//! Row-level work is spread over the rayon pool. Every row is written by one
//! task and every cross-row sum is taken in row order, so results do not depend
//! on the thread count.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::embedding::{squared_distances, Embedding};
use crate::error::{Error, Result};
use crate::rng::ToolkitRng;
use crate::scalar::Scalar;

/// Tolerance on `|2^H - perplexity|` for each calibrated row.
pub const PERPLEXITY_TOLERANCE: f64 = 1e-4;
/// Cap on bandwidth evaluations per row, bracket expansion included.
pub const MAX_BANDWIDTH_STEPS: usize = 100;
/// Iteration at which momentum switches from the early to the late value.
pub const MOMENTUM_SWITCH_ITER: usize = 250;
/// Lower bound applied to q inside the KL logarithm.
pub const Q_FLOOR: f64 = 1e-12;
pub const INIT_STD: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub out_dims: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub momentum_early: f64,
    pub momentum_late: f64,
    pub exaggeration_factor: f64,
    pub exaggeration_iters: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            out_dims: 2,
            iterations: 1000,
            learning_rate: 200.0,
            momentum_early: 0.5,
            momentum_late: 0.8,
            exaggeration_factor: 12.0,
            exaggeration_iters: 250,
            seed: 42,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.perplexity > 1.0) {
            return Err(Error::Config(format!("perplexity {} must exceed 1", self.perplexity)));
        }
        if self.perplexity >= n as f64 {
            return Err(Error::Config(format!(
                "perplexity {} must be below the number of points {n}",
                self.perplexity
            )));
        }
        if !(2..=3).contains(&self.out_dims) {
            return Err(Error::Config(format!("out_dims must be 2 or 3, got {}", self.out_dims)));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(self.exaggeration_factor >= 1.0) {
            return Err(Error::Config("exaggeration factor must be at least 1".into()));
        }
        if self.iterations == 0 || self.exaggeration_iters >= self.iterations {
            return Err(Error::Config(format!(
                "exaggeration_iters ({}) must be below iterations ({})",
                self.exaggeration_iters, self.iterations
            )));
        }
        for m in [self.momentum_early, self.momentum_late] {
            if !(0.0..1.0).contains(&m) {
                return Err(Error::Config(format!("momentum {m} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Symmetric joint probabilities with zero diagonal summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Affinities<T = f64> {
    pub p: Array2<T>,
}

impl<T: Scalar> Affinities<T> {
    pub fn n(&self) -> usize {
        self.p.nrows()
    }
}

/// `(probabilities, perplexity)` of one row at precision `beta = 1 / (2 sigma^2)`.
/// `shifted` are squared distances minus their minimum, which cancels in the
/// normalization and keeps the exponentials in range.
fn row_at(shifted: &[f64], beta: f64) -> (Vec<f64>, f64) {
    let mut w: Vec<f64> = shifted.iter().map(|&s| (-beta * s).exp()).collect();
    let total: f64 = w.iter().sum();
    let weighted: f64 = shifted.iter().zip(&w).map(|(s, w)| s * w).sum();
    let entropy = total.ln() + beta * weighted / total;
    w.iter_mut().for_each(|v| *v /= total);
    (w, entropy.exp())
}

/// Bracket expansion by doubling/halving, then bisection.
fn calibrate_row(others: &[f64], target: f64) -> (Vec<f64>, f64) {
    let min = others.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = others.iter().map(|&d| d - min).collect();
    let spread: f64 = shifted.iter().sum();
    // Scale-aware start: doubling every distance halves beta exactly and leaves
    // the whole search path, hence the probabilities, bit-identical.
    let mut beta = if spread > 0.0 {
        shifted.len() as f64 / spread
    } else {
        1.0
    };
    let (mut lo, mut hi): (Option<f64>, Option<f64>) = (None, None);
    let mut row = row_at(&shifted, beta);
    for _ in 1..MAX_BANDWIDTH_STEPS {
        let perp = row.1;
        if (perp - target).abs() <= PERPLEXITY_TOLERANCE {
            break;
        }
        if perp > target {
            lo = Some(beta);
            beta = hi.map_or(beta * 2.0, |h| 0.5 * (beta + h));
        } else {
            hi = Some(beta);
            beta = lo.map_or(beta * 0.5, |l| 0.5 * (l + beta));
        }
        row = row_at(&shifted, beta);
    }
    (row.0, beta)
}

/// Per-row Gaussian conditionals `p_{j|i}` calibrated to `perplexity`, and the
/// bandwidths `sigma_i` that achieve it.
pub fn conditional_probs<T: Scalar>(
    sq_dists: ArrayView2<T>,
    perplexity: f64,
) -> Result<(Array2<T>, Vec<T>)> {
    let (n, m) = sq_dists.dim();
    if n != m || n < 2 {
        return Err(Error::Shape(format!("squared distances must be square with n >= 2, got {n}x{m}")));
    }
    if !(perplexity > 1.0) || perplexity >= n as f64 {
        return Err(Error::Config(format!(
            "perplexity {perplexity} must lie in (1, {n})"
        )));
    }
    for i in 0..n {
        if sq_dists[[i, i]] != T::zero() {
            return Err(Error::Shape(format!("diagonal entry {i} is nonzero")));
        }
        for j in 0..n {
            let v = sq_dists[[i, j]].f64();
            if i != j && !v.is_finite() {
                return Err(Error::Degenerate(format!("distance ({i},{j}) is not finite")));
            }
            if v < 0.0 {
                return Err(Error::Data(format!("distance ({i},{j}) is negative")));
            }
            if v != sq_dists[[j, i]].f64() {
                return Err(Error::Shape(format!("distances ({i},{j}) and ({j},{i}) differ")));
            }
        }
    }

    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let others: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| sq_dists[[i, j]].f64()).collect();
            calibrate_row(&others, perplexity)
        })
        .collect();

    let mut cond = Array2::zeros((n, n));
    let mut sigmas = Vec::with_capacity(n);
    for (i, (probs, beta)) in rows.into_iter().enumerate() {
        let mut it = probs.into_iter();
        for j in (0..n).filter(|&j| j != i) {
            cond[[i, j]] = T::of(it.next().expect("n - 1 probabilities"));
        }
        sigmas.push(T::of((0.5 / beta).sqrt()));
    }
    Ok((cond, sigmas))
}

/// `2^H` of a probability row (zeros ignored).
pub fn perplexity_of<T: Scalar>(row: &[T]) -> f64 {
    let h: f64 = row
        .iter()
        .map(|p| p.f64())
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum();
    h.exp2()
}

/// `P = (p_{j|i} + p_{i|j}) / 2n`
pub fn joint_probs<T: Scalar>(cond: ArrayView2<T>) -> Result<Affinities<T>> {
    let (n, m) = cond.dim();
    if n != m || n < 2 {
        return Err(Error::Shape(format!("conditionals must be square with n >= 2, got {n}x{m}")));
    }
    let tol = (100.0 * T::epsilon().f64() * n as f64).max(1e-9);
    for (i, row) in cond.axis_iter(Axis(0)).enumerate() {
        if row[i] != T::zero() {
            return Err(Error::Data(format!("conditional row {i} has a nonzero diagonal")));
        }
        if row.iter().any(|&v| v < T::zero() || !v.is_finite()) {
            return Err(Error::Data(format!("conditional row {i} has invalid entries")));
        }
        let s: f64 = row.iter().map(|v| v.f64()).sum();
        if (s - 1.0).abs() > tol {
            return Err(Error::Data(format!("conditional row {i} sums to {s}")));
        }
    }
    let scale = T::one() / T::of_usize(2 * n);
    let p = Array2::from_shape_fn((n, n), |(i, j)| (cond[[i, j]] + cond[[j, i]]) * scale);
    Ok(Affinities { p })
}

/// Unnormalized Student-t kernel `(1 + ||t_i - t_j||^2)^-1` with zero diagonal,
/// and its total.
fn student_kernel<T: Scalar>(coords: ArrayView2<T>) -> (Array2<T>, T) {
    let (n, d) = coords.dim();
    let mut num = Array2::zeros((n, n));
    num.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            for j in 0..n {
                if j != i {
                    let mut sq = T::zero();
                    for k in 0..d {
                        let diff = coords[[i, k]] - coords[[j, k]];
                        sq += diff * diff;
                    }
                    row[j] = T::one() / (T::one() + sq);
                }
            }
        });
    let total = num.axis_iter(Axis(0)).map(|r| r.sum()).fold(T::zero(), |a, b| a + b);
    (num, total)
}

/// `q_ij = (1 + ||t_i - t_j||^2)^-1 / sum_{k != l} (1 + ||t_k - t_l||^2)^-1`
pub fn low_dim_affinities<T: Scalar>(coords: ArrayView2<T>) -> Result<Array2<T>> {
    if coords.nrows() < 2 {
        return Err(Error::Shape("need at least 2 points".into()));
    }
    let (num, total) = student_kernel(coords);
    Ok(num.mapv(|v| v / total))
}

/// `sum_{i != j} p_ij log(p_ij / q_ij)`; zero-probability terms contribute 0.
pub fn kl_divergence<T: Scalar>(p: &Affinities<T>, q: ArrayView2<T>) -> Result<T> {
    if p.p.dim() != q.dim() {
        return Err(Error::Shape(format!("P is {:?} but Q is {:?}", p.p.dim(), q.dim())));
    }
    let floor = T::of(Q_FLOOR);
    let mut total = T::zero();
    for ((i, j), &pij) in p.p.indexed_iter() {
        if i == j || pij <= T::zero() {
            continue;
        }
        let qij = q[[i, j]];
        if !(qij > T::zero()) {
            return Err(Error::Data(format!("q({i},{j}) is zero where p is positive")));
        }
        total += pij * (pij / qij.max(floor)).ln();
    }
    Ok(total.max(T::zero()))
}

/// `dC/dt_i = 4 sum_j (p_ij - q_ij)(t_i - t_j)(1 + ||t_i - t_j||^2)^-1`
pub fn kl_gradient<T: Scalar>(p: ArrayView2<T>, coords: ArrayView2<T>) -> Array2<T> {
    let (num, total) = student_kernel(coords);
    gradient_from_kernel(p, coords, num.view(), total, T::one())
}

fn gradient_from_kernel<T: Scalar>(
    p: ArrayView2<T>,
    coords: ArrayView2<T>,
    num: ArrayView2<T>,
    total: T,
    exaggeration: T,
) -> Array2<T> {
    let (n, d) = coords.dim();
    let four = T::of(4.0);
    let mut grad = Array2::zeros((n, d));
    grad.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut g)| {
            for j in 0..n {
                if j == i {
                    continue;
                }
                let w = num[[i, j]];
                let coef = (exaggeration * p[[i, j]] - w / total) * w;
                for k in 0..d {
                    g[k] += coef * (coords[[i, k]] - coords[[j, k]]);
                }
            }
            g.mapv_inplace(|v| v * four);
        });
    grad
}

fn center<T: Scalar>(coords: &mut Array2<T>) {
    let n = T::of_usize(coords.nrows());
    for mut col in coords.axis_iter_mut(Axis(1)) {
        let mean = col.iter().fold(T::zero(), |a, &b| a + b) / n;
        col.mapv_inplace(|v| v - mean);
    }
}

/// Runs t-SNE on the rows of `data`. The returned trace holds the KL divergence
/// against the unexaggerated P after every iteration.
pub fn run_tsne<T: Scalar>(data: ArrayView2<T>, cfg: &TsneConfig) -> Result<Embedding<T>> {
    let n = data.nrows();
    if n < 4 {
        return Err(Error::Shape(format!("t-SNE needs at least 4 points, got {n}")));
    }
    cfg.validate(n)?;
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("input contains non-finite values".into()));
    }
    let sq = squared_distances(data);
    let (cond, _) = conditional_probs(sq.view(), cfg.perplexity)?;
    let p = joint_probs(cond.view())?;
    optimize(&p, cfg)
}

/// The descent loop on precomputed affinities.
pub fn optimize<T: Scalar>(p: &Affinities<T>, cfg: &TsneConfig) -> Result<Embedding<T>> {
    let n = p.n();
    let d = cfg.out_dims;
    let mut rng = ToolkitRng::new(cfg.seed);
    let mut coords: Array2<T> = Array2::from_shape_simple_fn((n, d), || T::of(INIT_STD * rng.gaussian()));
    center(&mut coords);
    let mut velocity: Array2<T> = Array2::zeros((n, d));
    let lr = T::of(cfg.learning_rate);
    let mut trace = Vec::with_capacity(cfg.iterations);

    let kl_of = |num: &Array2<T>, total: T| -> Result<T> {
        kl_divergence(p, num.mapv(|v| v / total).view())
    };

    for iter in 0..cfg.iterations {
        let (num, total) = student_kernel(coords.view());
        if iter > 0 {
            trace.push(kl_of(&num, total)?);
        }
        let exaggeration = if iter < cfg.exaggeration_iters {
            T::of(cfg.exaggeration_factor)
        } else {
            T::one()
        };
        let momentum = T::of(if iter < MOMENTUM_SWITCH_ITER {
            cfg.momentum_early
        } else {
            cfg.momentum_late
        });
        let grad = gradient_from_kernel(p.p.view(), coords.view(), num.view(), total, exaggeration);
        velocity.zip_mut_with(&grad, |v, &g| *v = momentum * *v - lr * g);
        coords += &velocity;
        center(&mut coords);
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::Optimization {
                iteration: iter,
                message: "coordinates became non-finite".into(),
            });
        }
    }
    let (num, total) = student_kernel(coords.view());
    let final_objective = kl_of(&num, total)?;
    trace.push(final_objective);
    Ok(Embedding {
        coords,
        final_objective,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn equidistant_rows_are_uniform() {
        let sq = Array2::from_shape_fn((4, 4), |(i, j)| if i == j { 0.0f64 } else { 2.0 });
        let (cond, _) = conditional_probs(sq.view(), 2.0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 0.0 } else { 1.0 / 3.0 };
                assert!((cond[[i, j]] - expected).abs() < 1e-15);
            }
            assert!((perplexity_of(cond.row(i).as_slice().unwrap()) - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn perplexity_bounds() {
        let sq = Array2::from_shape_fn((4, 4), |(i, j)| (i as f64 - j as f64).powi(2));
        assert!(matches!(conditional_probs(sq.view(), 4.0), Err(Error::Config(_))));
        assert!(matches!(conditional_probs(sq.view(), 1.0), Err(Error::Config(_))));
        let mut inf = sq.clone();
        for j in 1..4 {
            inf[[0, j]] = f64::INFINITY;
            inf[[j, 0]] = f64::INFINITY;
        }
        assert!(matches!(conditional_probs(inf.view(), 2.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn joint_of_symmetric_is_scaled() {
        let c = array![[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]];
        let p = joint_probs(c.view()).unwrap();
        assert_eq!(p.p, c.mapv(|v| v / 3.0));
        assert!(joint_probs(array![[0.0, 0.5], [1.0, 0.0]].view()).is_err());
    }

    #[test]
    fn joint_hand_values() {
        let c = array![[0.0f64, 0.75, 0.25], [0.5, 0.0, 0.5], [0.1, 0.9, 0.0]];
        let p = joint_probs(c.view()).unwrap();
        let expect = array![
            [0.0, 1.25 / 6.0, 0.35 / 6.0],
            [1.25 / 6.0, 0.0, 1.4 / 6.0],
            [0.35 / 6.0, 1.4 / 6.0, 0.0]
        ];
        for (a, b) in p.p.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((p.p.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn q_small_cases() {
        let q = low_dim_affinities(array![[0.0, 0.0], [100.0, -3.0]].view()).unwrap();
        assert_eq!(q, array![[0.0, 0.5], [0.5, 0.0]]);
        let h = 3f64.sqrt() / 2.0;
        let q = low_dim_affinities(array![[0.0, 0.0], [1.0, 0.0], [0.5, h]].view()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!((q[[i, j]] - 1.0 / 6.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn kl_cases() {
        let p = Affinities {
            p: array![[0.0, 0.25, 0.25], [0.25, 0.0, 0.0], [0.25, 0.0, 0.0]],
        };
        assert_eq!(kl_divergence(&p, p.p.view()).unwrap(), 0.0);
        let uniform = Array2::from_shape_fn((3, 3), |(i, j)| if i == j { 0.0 } else { 1.0 / 6.0 });
        let pu = Affinities { p: uniform.clone() };
        assert_eq!(kl_divergence(&pu, uniform.view()).unwrap(), 0.0);
        // four terms of 0.25 * ln(0.25 / (1/6)) = ln(1.5)
        let kl = kl_divergence(&p, uniform.view()).unwrap();
        assert!((kl - 1.5f64.ln()).abs() < 1e-15);

        let mut zero_q = uniform.clone();
        zero_q[[0, 1]] = 0.0;
        assert!(matches!(kl_divergence(&p, zero_q.view()), Err(Error::Data(_))));
    }

    #[test]
    fn config_validation() {
        let cfg = TsneConfig::default();
        assert!(cfg.validate(100).is_ok());
        assert!(matches!(cfg.validate(30), Err(Error::Config(_))));
        let bad = TsneConfig { exaggeration_iters: 1000, ..cfg.clone() };
        assert!(bad.validate(100).is_err());
        let bad = TsneConfig { out_dims: 4, ..cfg };
        assert!(bad.validate(100).is_err());
    }
}
