//! Pearson correlation machinery: predictive power, split-half reliability,
//! attribute correlation matrices and silhouette scores.
//!
//! Sums are accumulated in `f64` whatever the storage scalar.

use std::io::Write;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::rng::ToolkitRng;
use crate::scalar::Scalar;
use crate::tensor_io::RatingsTable;

/// Square correlation matrix with one name per row/column.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix<T = f64> {
    pub names: Vec<String>,
    pub values: Array2<T>,
}

impl<T: Scalar> CorrMatrix<T> {
    pub fn size(&self) -> usize {
        self.names.len()
    }

    /// Symmetric, unit diagonal within `1e-12`, entries within `[-1, 1]`.
    pub fn check(&self) -> Result<()> {
        let m = self.size();
        if self.values.dim() != (m, m) {
            return Err(Error::Shape(format!(
                "{m} names for a {:?} matrix",
                self.values.dim()
            )));
        }
        for i in 0..m {
            if (self.values[[i, i]].f64() - 1.0).abs() > 1e-12 {
                return Err(Error::Data(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..m {
                let v = self.values[[i, j]];
                if v != self.values[[j, i]] {
                    return Err(Error::Data(format!("entries ({i},{j}) and ({j},{i}) differ")));
                }
                if !(v.f64() >= -1.0 && v.f64() <= 1.0) {
                    return Err(Error::Data(format!("entry ({i},{j}) = {v} outside [-1, 1]")));
                }
            }
        }
        Ok(())
    }
}

/// Per-attribute Pearson correlation between predictions and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTable<T = f64> {
    pub attribute_names: Vec<String>,
    pub coefficients: Vec<T>,
}

impl<T: Scalar> PowerTable<T> {
    /// `attribute,pearson_r` header, one row per attribute, six decimals.
    pub fn write_csv(&self, mut sink: impl Write) -> Result<()> {
        let mut text = String::from("attribute,pearson_r\n");
        for (name, r) in self.attribute_names.iter().zip(&self.coefficients) {
            text.push_str(&format!("{name},{:.6}\n", r.f64()));
        }
        sink.write_all(text.as_bytes()).map_err(Error::io)
    }
}

/// Mean via the first element as a shift: exact whenever all entries are equal.
fn shifted_mean(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let mut it = xs.clone();
    let Some(first) = it.next() else { return 0.0 };
    let n = xs.clone().count() as f64;
    first + xs.map(|x| x - first).sum::<f64>() / n
}

fn pearson_f64(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "pearson needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Shape(format!(
            "pearson needs at least 2 observations, got {}",
            x.len()
        )));
    }
    let mx = shifted_mean(x.iter().copied());
    let my = shifted_mean(y.iter().copied());
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation coefficient of two equally long samples.
pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    let x: Vec<f64> = x.iter().map(|v| v.f64()).collect();
    let y: Vec<f64> = y.iter().map(|v| v.f64()).collect();
    pearson_f64(&x, &y).map(T::of)
}

pub fn predictive_power<T: Scalar>(
    pred: &RatingsTable<T>,
    truth: &RatingsTable<T>,
) -> Result<PowerTable<T>> {
    if pred.attribute_names() != truth.attribute_names() {
        let n = pred.n_attributes().max(truth.n_attributes());
        let k = (0..n)
            .find(|&k| pred.attribute_names().get(k) != truth.attribute_names().get(k))
            .unwrap_or(0);
        return Err(Error::Alignment(format!(
            "attribute {k}: predictions have {:?}, truth has {:?}",
            pred.attribute_names().get(k),
            truth.attribute_names().get(k)
        )));
    }
    if pred.image_ids() != truth.image_ids() {
        let n = pred.n_images().max(truth.n_images());
        let k = (0..n)
            .find(|&k| pred.image_ids().get(k) != truth.image_ids().get(k))
            .unwrap_or(0);
        return Err(Error::Alignment(format!(
            "image row {}: predictions have {:?}, truth has {:?}",
            k + 1,
            pred.image_ids().get(k),
            truth.image_ids().get(k)
        )));
    }
    let coefficients = (0..pred.n_attributes())
        .map(|j| {
            pearson(&pred.column(j), &truth.column(j)).map_err(|e| match e {
                Error::Degenerate(msg) => {
                    Error::Degenerate(format!("attribute {:?}: {msg}", pred.attribute_names()[j]))
                }
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PowerTable {
        attribute_names: pred.attribute_names().to_vec(),
        coefficients,
    })
}

/// Human consistency: mean Pearson correlation between the item means of two
/// random rater halves, over `repeats` seeded splits. Uncorrected (no
/// Spearman–Brown step). With an odd rater count the first half gets the extra
/// rater. Splits whose half-means have zero variance are skipped.
pub fn split_half_reliability<T: Scalar>(
    rater_scores: ArrayView2<T>,
    repeats: usize,
    seed: u64,
) -> Result<T> {
    let (raters, items) = rater_scores.dim();
    if raters < 2 || items < 2 {
        return Err(Error::Shape(format!(
            "split-half needs at least 2 raters and 2 items, got {raters}x{items}"
        )));
    }
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    let first_len = raters.div_ceil(2);
    let mut rng = ToolkitRng::new(seed);
    let mut order: Vec<usize> = (0..raters).collect();
    let mut coefficients = Vec::with_capacity(repeats);

    let half_means = |members: &[usize]| -> Vec<f64> {
        (0..items)
            .map(|item| {
                shifted_mean(members.iter().map(|&r| rater_scores[[r, item]].f64()))
            })
            .collect()
    };

    for _ in 0..repeats {
        order.iter_mut().enumerate().for_each(|(i, v)| *v = i);
        rng.shuffle(&mut order);
        let (a, b) = order.split_at(first_len);
        match pearson_f64(&half_means(a), &half_means(b)) {
            Ok(r) => coefficients.push(r),
            Err(Error::Degenerate(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if coefficients.is_empty() {
        return Err(Error::Degenerate(
            "every split produced zero-variance half means".into(),
        ));
    }
    Ok(T::of(shifted_mean(coefficients.iter().copied())))
}

pub fn correlation_matrix<T: Scalar>(table: &RatingsTable<T>) -> Result<CorrMatrix<T>> {
    let m = table.n_attributes();
    if table.n_images() < 2 {
        return Err(Error::Shape(format!(
            "correlation needs at least 2 images, got {}",
            table.n_images()
        )));
    }
    let columns: Vec<Vec<f64>> = (0..m)
        .map(|j| table.column(j).into_iter().map(|v| v.f64()).collect())
        .collect();
    for (j, col) in columns.iter().enumerate() {
        if col.iter().all(|&v| v == col[0]) {
            return Err(Error::Degenerate(format!(
                "attribute {:?} is constant",
                table.attribute_names()[j]
            )));
        }
    }
    let mut values = Array2::from_elem((m, m), T::one());
    for i in 0..m {
        for j in i + 1..m {
            let r = T::of(pearson_f64(&columns[i], &columns[j])?);
            values[[i, j]] = r;
            values[[j, i]] = r;
        }
    }
    Ok(CorrMatrix {
        names: table.attribute_names().to_vec(),
        values,
    })
}

/// Mean silhouette coefficient of a labelled point set (Euclidean distance).
/// Points in singleton clusters score 0; `a = b = 0` also scores 0.
pub fn silhouette<T: Scalar>(points: ArrayView2<T>, labels: &[usize]) -> Result<T> {
    let n = points.nrows();
    if labels.len() != n {
        return Err(Error::Shape(format!("{n} points but {} labels", labels.len())));
    }
    if n < 3 {
        return Err(Error::Shape(format!("silhouette needs at least 3 points, got {n}")));
    }
    let mut cluster_ids: Vec<usize> = labels.to_vec();
    cluster_ids.sort_unstable();
    cluster_ids.dedup();
    if cluster_ids.len() < 2 {
        return Err(Error::Degenerate("silhouette needs at least 2 clusters".into()));
    }
    let slot = |label: usize| cluster_ids.binary_search(&label).unwrap();
    let mut sizes = vec![0usize; cluster_ids.len()];
    for &l in labels {
        sizes[slot(l)] += 1;
    }

    let mut total = 0.0f64;
    let mut sums = vec![0.0f64; cluster_ids.len()];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                let d: f64 = points
                    .row(i)
                    .iter()
                    .zip(points.row(j))
                    .map(|(a, b)| (a.f64() - b.f64()).powi(2))
                    .sum::<f64>()
                    .sqrt();
                sums[slot(labels[j])] += d;
            }
        }
        let own = slot(labels[i]);
        if sizes[own] == 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..cluster_ids.len())
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(T::of(total / n as f64))
}
