//! Ward agglomerative clustering of a dissimilarity matrix and dendrogram leaf
//! ordering, used to reorder correlation heatmaps.
//!
//! The Lance–Williams Ward update is applied to squared dissimilarities and the
//! reported height is the square root, so for Euclidean inputs heights equal
//! `sqrt(2 |A||B| / (|A| + |B|)) * ||centroid(A) - centroid(B)||`.

use std::io::Write;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stats::CorrMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge<T = f64> {
    pub left: usize,
    pub right: usize,
    pub height: T,
    pub size: usize,
}

/// Leaves are `0..n`; merge `k` creates node `n + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram<T = f64> {
    pub n_leaves: usize,
    pub merges: Vec<Merge<T>>,
}

impl<T: Scalar> Dendrogram<T> {
    /// Size bookkeeping, child uniqueness and height monotonicity.
    pub fn check(&self) -> Result<()> {
        let n = self.n_leaves;
        if n < 1 || self.merges.len() + 1 != n {
            return Err(Error::Shape(format!(
                "{} merges for {n} leaves",
                self.merges.len()
            )));
        }
        let mut sizes: Vec<usize> = vec![1; n];
        let mut used = vec![false; 2 * n - 1];
        let mut last = T::neg_infinity();
        for (k, m) in self.merges.iter().enumerate() {
            let node = n + k;
            for child in [m.left, m.right] {
                if child >= node {
                    return Err(Error::Data(format!("merge {k} references future node {child}")));
                }
                if std::mem::replace(&mut used[child], true) {
                    return Err(Error::Data(format!("node {child} merged twice")));
                }
            }
            if m.size != sizes[m.left] + sizes[m.right] {
                return Err(Error::Data(format!("merge {k} has wrong size {}", m.size)));
            }
            if !(m.height >= T::zero()) || m.height < last {
                return Err(Error::Data(format!("merge {k} breaks height monotonicity")));
            }
            last = m.height;
            sizes.push(m.size);
        }
        Ok(())
    }

    /// One `left,right,height,size` row per merge, with that header.
    pub fn write_csv(&self, mut sink: impl Write) -> Result<()> {
        let mut text = String::from("left,right,height,size\n");
        for m in &self.merges {
            text.push_str(&format!("{},{},{},{}\n", m.left, m.right, m.height, m.size));
        }
        sink.write_all(text.as_bytes()).map_err(Error::io)
    }
}

fn validate_dissimilarity<T: Scalar>(d: &ArrayView2<T>) -> Result<usize> {
    let (n, m) = d.dim();
    if n != m {
        return Err(Error::Shape(format!("dissimilarity must be square, got {n}x{m}")));
    }
    if n < 2 {
        return Err(Error::Shape(format!("need at least 2 items, got {n}")));
    }
    for i in 0..n {
        if d[[i, i]] != T::zero() {
            return Err(Error::Shape(format!("diagonal entry {i} is nonzero")));
        }
        for j in 0..n {
            let v = d[[i, j]].f64();
            if !v.is_finite() {
                return Err(Error::Data(format!("entry ({i},{j}) is not finite")));
            }
            if v < 0.0 {
                return Err(Error::Data(format!("entry ({i},{j}) = {v} is negative")));
            }
            let w = d[[j, i]].f64();
            if (v - w).abs() > 1e-12 * v.abs().max(1.0) {
                return Err(Error::Shape(format!("entries ({i},{j}) and ({j},{i}) differ")));
            }
        }
    }
    Ok(n)
}

/// Ward linkage with deterministic tie-breaking on the smallest
/// `(left, right)` node-id pair, `left < right`.
pub fn ward_linkage<T: Scalar>(dissimilarity: ArrayView2<T>) -> Result<Dendrogram<T>> {
    let n = validate_dissimilarity(&dissimilarity)?;

    // Active clusters sit in slots 0..n; a slot holds the node id living there.
    let mut sq: Array2<f64> = dissimilarity.mapv(|v| v.f64() * v.f64());
    let mut node_of: Vec<usize> = (0..n).collect();
    let mut size: Vec<usize> = vec![1; n];
    let mut active: Vec<bool> = vec![true; n];
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for a in 0..n {
            if !active[a] {
                continue;
            }
            for b in a + 1..n {
                if !active[b] {
                    continue;
                }
                let (lo, hi) = if node_of[a] < node_of[b] {
                    (node_of[a], node_of[b])
                } else {
                    (node_of[b], node_of[a])
                };
                let cost = sq[[a, b]];
                let better = match best {
                    None => true,
                    Some((c, l, r, _, _)) => cost < c || (cost == c && (lo, hi) < (l, r)),
                };
                if better {
                    best = Some((cost, lo, hi, a, b));
                }
            }
        }
        let (cost, left, right, a, b) = best.expect("at least two active clusters");

        let (na, nb) = (size[a] as f64, size[b] as f64);
        for k in 0..n {
            if !active[k] || k == a || k == b {
                continue;
            }
            let nk = size[k] as f64;
            let updated = ((na + nk) * sq[[k, a]] + (nb + nk) * sq[[k, b]] - nk * cost)
                / (na + nb + nk);
            sq[[k, a]] = updated;
            sq[[a, k]] = updated;
        }
        active[b] = false;
        size[a] += size[b];
        node_of[a] = n + step;
        merges.push(Merge {
            left,
            right,
            height: T::of(cost.max(0.0).sqrt()),
            size: size[a],
        });
    }
    Ok(Dendrogram {
        n_leaves: n,
        merges,
    })
}

/// Leaves in left-to-right order of the merge tree, left child first.
pub fn leaf_order<T: Scalar>(d: &Dendrogram<T>) -> Result<Vec<usize>> {
    d.check()?;
    let n = d.n_leaves;
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![2 * n - 2];
    while let Some(node) = stack.pop() {
        if node < n {
            order.push(node);
        } else {
            let m = &d.merges[node - n];
            stack.push(m.right);
            stack.push(m.left);
        }
    }
    Ok(order)
}

/// Dissimilarity `1 - r` used to cluster correlation matrices.
pub fn correlation_dissimilarity<T: Scalar>(m: &CorrMatrix<T>) -> Array2<T> {
    let mut d = m.values.mapv(|r| (T::one() - r).max(T::zero()));
    for i in 0..m.size() {
        d[[i, i]] = T::zero();
    }
    d
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::Shape(format!("permutation of length {} for size {n}", perm.len())));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::Shape(format!("{perm:?} is not a permutation of 0..{n}")));
        }
    }
    Ok(())
}

/// Row/column `i` of the output is row/column `perm[i]` of the input.
pub fn reorder<T: Scalar>(m: &CorrMatrix<T>, perm: &[usize]) -> Result<CorrMatrix<T>> {
    check_permutation(perm, m.size())?;
    let values = Array2::from_shape_fn((perm.len(), perm.len()), |(i, j)| {
        m.values[[perm[i], perm[j]]]
    });
    Ok(CorrMatrix {
        names: perm.iter().map(|&p| m.names[p].clone()).collect(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_leaves() {
        let d = ward_linkage(array![[0.0, 3.0], [3.0, 0.0]].view()).unwrap();
        assert_eq!(
            d.merges,
            vec![Merge {
                left: 0,
                right: 1,
                height: 3.0,
                size: 2
            }]
        );
        assert_eq!(leaf_order(&d).unwrap(), vec![0, 1]);
    }

    #[test]
    fn unique_minimum_merges_first() {
        let m = array![[0.0, 1.0, 10.0], [1.0, 0.0, 10.0], [10.0, 10.0, 0.0]];
        let d = ward_linkage(m.view()).unwrap();
        assert_eq!((d.merges[0].left, d.merges[0].right), (0, 1));
        assert_eq!(d.merges[0].height, 1.0);
        assert_eq!((d.merges[1].left, d.merges[1].right), (2, 3));
        // sqrt((2*100 + 2*100 - 1) / 3)
        assert!((d.merges[1].height - (399.0f64 / 3.0).sqrt()).abs() < 1e-12);
        d.check().unwrap();
    }

    #[test]
    fn ties_break_on_smallest_pair() {
        let m = Array2::from_shape_fn((4, 4), |(i, j)| if i == j { 0.0 } else { 1.0 });
        let d = ward_linkage(m.view()).unwrap();
        assert_eq!((d.merges[0].left, d.merges[0].right), (0, 1));
        assert_eq!((d.merges[1].left, d.merges[1].right), (2, 3));
        assert_eq!((d.merges[2].left, d.merges[2].right), (4, 5));
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(
            ward_linkage(array![[0.0, 1.0], [2.0, 0.0]].view()),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            ward_linkage(array![[0.0, -1.0], [-1.0, 0.0]].view()),
            Err(Error::Data(_))
        ));
        assert!(matches!(ward_linkage(array![[0.0]].view()), Err(Error::Shape(_))));
    }

    #[test]
    fn leaf_order_three() {
        let d = Dendrogram {
            n_leaves: 3,
            merges: vec![
                Merge { left: 0, right: 1, height: 1.0, size: 2 },
                Merge { left: 3, right: 2, height: 2.0, size: 3 },
            ],
        };
        assert_eq!(leaf_order(&d).unwrap(), vec![0, 1, 2]);
        let flipped = Dendrogram {
            n_leaves: 3,
            merges: vec![
                Merge { left: 1, right: 2, height: 1.0, size: 2 },
                Merge { left: 0, right: 3, height: 2.0, size: 3 },
            ],
        };
        assert_eq!(leaf_order(&flipped).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn check_rejects_bad_dendrograms() {
        let reused = Dendrogram {
            n_leaves: 3,
            merges: vec![
                Merge { left: 0, right: 1, height: 1.0, size: 2 },
                Merge { left: 0, right: 2, height: 2.0, size: 2 },
            ],
        };
        assert!(reused.check().is_err());
        let non_monotone = Dendrogram {
            n_leaves: 3,
            merges: vec![
                Merge { left: 0, right: 1, height: 2.0, size: 2 },
                Merge { left: 3, right: 2, height: 1.0, size: 3 },
            ],
        };
        assert!(non_monotone.check().is_err());
    }

    fn corr2() -> CorrMatrix {
        CorrMatrix {
            names: vec!["a".into(), "b".into()],
            values: array![[1.0, 0.3], [0.3, 1.0]],
        }
    }

    #[test]
    fn reorder_cases() {
        let m = corr2();
        assert_eq!(reorder(&m, &[0, 1]).unwrap(), m);
        let s = reorder(&m, &[1, 0]).unwrap();
        assert_eq!(s.names, vec!["b", "a"]);
        assert_eq!(s.values[[0, 1]], 0.3);
        assert_eq!(reorder(&s, &[1, 0]).unwrap(), m);
        assert!(matches!(reorder(&m, &[0, 0]), Err(Error::Shape(_))));
        assert!(matches!(reorder(&m, &[0]), Err(Error::Shape(_))));
    }

    #[test]
    fn dendrogram_csv() {
        let d = ward_linkage(array![[0.0, 3.0], [3.0, 0.0]].view()).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "left,right,height,size\n0,1,3,2\n");
    }

    #[test]
    fn one_minus_r() {
        let d = correlation_dissimilarity(&corr2());
        assert_eq!(d, array![[0.0, 0.7], [0.7, 0.0]]);
    }
}
