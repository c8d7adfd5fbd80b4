//! Moment helpers. All sums run in index order so results are reproducible.

use crate::linalg::Matrix;
use crate::scalar::Scalar;

pub fn mean<T: Scalar>(xs: &[T]) -> T {
    let sum = xs.iter().fold(T::zero(), |acc, &x| acc + x);
    sum / T::from_count(xs.len())
}

/// Unbiased (1/(T−1)) variance.
pub fn sample_variance<T: Scalar>(xs: &[T]) -> T {
    let m = mean(xs);
    let ss = xs.iter().fold(T::zero(), |acc, &x| acc + (x - m) * (x - m));
    ss / T::from_count(xs.len() - 1)
}

/// Population (1/T) central moment of the given order.
pub fn central_moment<T: Scalar>(xs: &[T], order: i32) -> T {
    let m = mean(xs);
    let s = xs
        .iter()
        .fold(T::zero(), |acc, &x| acc + (x - m).powi(order));
    s / T::from_count(xs.len())
}

pub fn population_stdev<T: Scalar>(xs: &[T]) -> T {
    central_moment(xs, 2).sqrt()
}

/// True when the spread of `xs` is indistinguishable from rounding noise.
pub(crate) fn is_degenerate_spread<T: Scalar>(xs: &[T], spread: T) -> bool {
    let magnitude = xs.iter().fold(T::zero(), |acc, x| acc.max(x.abs()));
    spread <= T::lit(16.0) * T::epsilon() * magnitude
}

/// Column means of a T×N matrix.
pub fn column_means<T: Scalar>(data: &Matrix<T>) -> Vec<T> {
    let n = data.cols();
    let mut sums = vec![T::zero(); n];
    for t in 0..data.rows() {
        for (s, &v) in sums.iter_mut().zip(data.row(t)) {
            *s += v;
        }
    }
    let count = T::from_count(data.rows());
    sums.into_iter().map(|s| s / count).collect()
}

/// Sample covariance (1/(T−1)) of the columns of a T×N matrix.
pub fn covariance_matrix<T: Scalar>(data: &Matrix<T>) -> Matrix<T> {
    let n = data.cols();
    let means = column_means(data);
    let mut cov = Matrix::zeros(n, n);
    for t in 0..data.rows() {
        let row = data.row(t);
        for i in 0..n {
            let di = row[i] - means[i];
            for j in i..n {
                cov[(i, j)] += di * (row[j] - means[j]);
            }
        }
    }
    let denom = T::from_count(data.rows() - 1);
    for i in 0..n {
        for j in i..n {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    cov
}
