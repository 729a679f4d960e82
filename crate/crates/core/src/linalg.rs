//! Small dense helpers on top of ndarray.

use ndarray::{Array2, ArrayView2};

/// Lower-triangular L with L·Lᵀ = `a`, or `None` if a pivot falls below
/// `1e-12 · trace(a) / n` (treated as "not positive definite").
pub fn cholesky(a: ArrayView2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return None;
    }
    let trace: f64 = a.diag().sum();
    if !(trace > 0.0 && trace.is_finite()) {
        return None;
    }
    let tol = 1e-12 * trace / n as f64;
    // Row-major storage: row j of L holds L[j][..=j], so every update is a
    // dot product of two contiguous prefixes.
    let mut l = vec![0.0f64; n * n];
    for j in 0..n {
        let (head, tail) = l.split_at_mut(j * n);
        let row_j = &mut tail[..n];
        for i in 0..j {
            let row_i = &head[i * n..i * n + i];
            let s = a[[j, i]] - dot(row_i, &row_j[..i]);
            row_j[i] = s / head[i * n + i];
        }
        let diag = a[[j, j]] - dot(&row_j[..j], &row_j[..j]);
        if !(diag > tol) {
            return None;
        }
        row_j[j] = diag.sqrt();
    }
    let l = Array2::from_shape_vec((n, n), l).expect("n*n entries");
    Some(l)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest |a_ij - a_ji|.
pub fn asymmetry(a: ArrayView2<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    worst
}

/// Frobenius norm.
pub fn frobenius(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn factors_spd() {
        let a = array![[4.0, 2.0, 0.4], [2.0, 5.0, 1.0], [0.4, 1.0, 3.0]];
        let l = cholesky(a.view()).unwrap();
        let back = l.dot(&l.t());
        assert!(frobenius((&back - &a).view()) < 1e-14);
        assert_eq!(l[[0, 1]], 0.0);
    }

    #[test]
    fn rejects_indefinite_and_singular() {
        assert!(cholesky(array![[1.0, 0.0], [0.0, -1.0]].view()).is_none());
        assert!(cholesky(array![[1.0, 1.0], [1.0, 1.0]].view()).is_none());
        assert!(cholesky(array![[f64::NAN]].view()).is_none());
    }

    #[test]
    fn asymmetry_measure() {
        assert_eq!(asymmetry(array![[1.0, 2.0], [2.5, 1.0]].view()), 0.5);
    }
}
