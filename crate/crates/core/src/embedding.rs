use std::io::Write;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Low-dimensional coordinates from t-SNE or stress embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T = f64> {
    /// `n x d`, `d` in {2, 3}.
    pub coords: Array2<T>,
    /// KL divergence (t-SNE) or stress (stress embedding) at the final coordinates.
    pub final_objective: T,
    /// Objective after each iteration, same quantity as `final_objective`.
    pub trace: Vec<T>,
}

impl<T: Scalar> Embedding<T> {
    pub fn n_points(&self) -> usize {
        self.coords.nrows()
    }

    pub fn dims(&self) -> usize {
        self.coords.ncols()
    }
}

/// `image_id,x,y[,z],label_value` rows.
pub fn write_embedding_csv<T: Scalar>(
    coords: ArrayView2<T>,
    image_ids: &[String],
    label_values: &[T],
    mut sink: impl Write,
) -> Result<()> {
    let (n, d) = coords.dim();
    if image_ids.len() != n || label_values.len() != n {
        return Err(Error::Shape(format!(
            "{n} points, {} ids, {} labels",
            image_ids.len(),
            label_values.len()
        )));
    }
    if !(2..=3).contains(&d) {
        return Err(Error::Shape(format!("embeddings are 2D or 3D, got {d}D")));
    }
    let mut text = String::from(if d == 2 {
        "image_id,x,y,label_value\n"
    } else {
        "image_id,x,y,z,label_value\n"
    });
    for i in 0..n {
        text.push_str(&image_ids[i]);
        for v in coords.row(i) {
            text.push(',');
            text.push_str(&v.to_string());
        }
        text.push(',');
        text.push_str(&label_values[i].to_string());
        text.push('\n');
    }
    sink.write_all(text.as_bytes()).map_err(Error::io)
}

/// Parses the CSV written by [`write_embedding_csv`] into ids, coordinates and labels.
pub fn read_embedding_csv(text: &str) -> Result<(Vec<String>, Array2<f64>, Vec<f64>)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty embedding CSV".into()))?;
    let d = match header {
        "image_id,x,y,label_value" => 2,
        "image_id,x,y,z,label_value" => 3,
        other => return Err(Error::Format(format!("unexpected embedding header {other:?}"))),
    };
    let (mut ids, mut flat, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for (k, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 2 {
            return Err(Error::Format(format!("row {} has {} fields", k + 1, fields.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Format(format!("row {}: {s:?} is not a number", k + 1)))
        };
        ids.push(fields[0].to_string());
        for f in &fields[1..=d] {
            flat.push(num(f)?);
        }
        labels.push(num(fields[d + 1])?);
    }
    let coords = Array2::from_shape_vec((ids.len(), d), flat).map_err(|e| Error::Shape(e.to_string()))?;
    Ok((ids, coords, labels))
}

/// Row-wise squared Euclidean distances.
pub fn squared_distances<T: Scalar>(data: ArrayView2<T>) -> Array2<T> {
    let n = data.nrows();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let d: f64 = data
                .row(i)
                .iter()
                .zip(data.row(j))
                .map(|(a, b)| (a.f64() - b.f64()).powi(2))
                .sum();
            out[[i, j]] = T::of(d);
            out[[j, i]] = T::of(d);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn csv_round_trip_2d_and_3d() {
        let ids = vec!["a".to_string(), "b".to_string()];
        for coords in [array![[0.5, -1.0], [2.0, 3.25]], array![[0.5, -1.0, 1.0], [2.0, 3.25, 0.0]]] {
            let mut buf = Vec::new();
            write_embedding_csv(coords.view(), &ids, &[1.0, 9.0], &mut buf).unwrap();
            let (rid, rc, rl) = read_embedding_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
            assert_eq!(rid, ids);
            assert_eq!(rc, coords);
            assert_eq!(rl, vec![1.0, 9.0]);
        }
    }

    #[test]
    fn csv_header_2d() {
        let mut buf = Vec::new();
        write_embedding_csv(array![[1.0, 2.0]].view(), &["p".to_string()], &[3.0], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "image_id,x,y,label_value\np,1,2,3\n");
    }

    #[test]
    fn squared_distance_matrix() {
        let d = squared_distances(array![[0.0, 0.0], [3.0, 4.0]].view());
        assert_eq!(d, array![[0.0, 25.0], [25.0, 0.0]]);
    }
}
