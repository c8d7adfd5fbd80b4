//! Pairwise dependence estimators that define the edge weights of the market network.

use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::stats;

/// Default tail level for the empirical lower-tail estimator.
pub const DEFAULT_TAIL_Q: f64 = 0.05;

/// Minimum sample length accepted by [`lower_tail_matrix`].
pub const MIN_TAIL_OBSERVATIONS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DependenceKind {
    Pearson,
    Kendall,
    LowerTail,
}

impl DependenceKind {
    pub const ALL: [DependenceKind; 3] = [Self::Pearson, Self::Kendall, Self::LowerTail];

    /// Closed interval the measure lives in.
    pub fn value_range<T: Scalar>(self) -> (T, T) {
        match self {
            Self::Pearson | Self::Kendall => (-T::one(), T::one()),
            Self::LowerTail => (T::zero(), T::one()),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pearson => "pearson",
            Self::Kendall => "kendall",
            Self::LowerTail => "lower_tail",
        }
    }
}

impl std::str::FromStr for DependenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pearson" => Ok(Self::Pearson),
            "kendall" => Ok(Self::Kendall),
            "lower_tail" | "lower-tail" | "tail" => Ok(Self::LowerTail),
            other => Err(Error::param(
                "kind",
                format!("unknown dependence kind {other:?}"),
            )),
        }
    }
}

/// Symmetric N×N edge-weight matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DependenceMatrix<T> {
    kind: DependenceKind,
    weights: Matrix<T>,
}

impl<T: Scalar> DependenceMatrix<T> {
    /// Validates symmetry, the zero diagonal and the value range.
    pub fn new(kind: DependenceKind, weights: Matrix<T>) -> Result<Self> {
        if !weights.is_square() {
            return Err(Error::param("weights", "matrix must be square"));
        }
        let asym = weights.max_asymmetry();
        if asym > T::zero() {
            return Err(Error::NotSymmetric {
                max_asymmetry: asym.as_f64(),
            });
        }
        let (lo, hi) = kind.value_range::<T>();
        let n = weights.rows();
        for i in 0..n {
            if weights[(i, i)] != T::zero() {
                return Err(Error::param("weights", "diagonal must be zero"));
            }
            for j in 0..n {
                let w = weights[(i, j)];
                if i != j && !(w >= lo && w <= hi) {
                    return Err(Error::param(
                        "weights",
                        format!("entry ({i},{j}) = {w} outside [{lo}, {hi}]"),
                    ));
                }
            }
        }
        Ok(Self { kind, weights })
    }

    pub fn kind(&self) -> DependenceKind {
        self.kind
    }

    pub fn weights(&self) -> &Matrix<T> {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> T {
        self.weights[(i, j)]
    }

    pub fn n(&self) -> usize {
        self.weights.rows()
    }

    pub fn value_range(&self) -> (T, T) {
        self.kind.value_range()
    }

    /// True when at least one off-diagonal weight is below the range maximum.
    pub fn has_weight_below_max(&self) -> bool {
        let (_, hi) = self.value_range();
        let n = self.n();
        (0..n).any(|i| (0..n).any(|j| i != j && self.weight(i, j) < hi))
    }

    /// Writes the matrix as delimited text with a header row of asset ids.
    pub fn write_csv<W: Write>(&self, assets: &[String], writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec![String::new()];
        header.extend(assets.iter().cloned());
        wtr.write_record(&header)?;
        for (i, name) in assets.iter().enumerate() {
            let mut rec = vec![name.clone()];
            rec.extend(self.weights.row(i).iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush()
            .map_err(|e| Error::io("<dependence writer>", e))?;
        Ok(())
    }
}

/// Fills the upper triangle in parallel; each entry depends only on its own pair.
fn pairwise<T: Scalar>(n: usize, f: impl Fn(usize, usize) -> T + Sync) -> Matrix<T> {
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let values: Vec<T> = pairs.par_iter().map(|&(i, j)| f(i, j)).collect();
    let mut m = Matrix::zeros(n, n);
    for (&(i, j), v) in pairs.iter().zip(values) {
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    m
}

fn clamp<T: Scalar>(v: T, lo: T, hi: T) -> T {
    v.max(lo).min(hi)
}

/// Sample Pearson correlations of the columns of a T×N return matrix.
pub fn pearson_matrix<T: Scalar>(returns: &Matrix<T>) -> Result<DependenceMatrix<T>> {
    if returns.rows() < 2 {
        return Err(Error::param("returns", "need at least 2 observations"));
    }
    let cov = stats::covariance_matrix(returns);
    for j in 0..cov.rows() {
        if cov[(j, j)].is_nan() || cov[(j, j)] <= T::zero() {
            return Err(Error::ZeroVariance {
                asset: format!("column {j}"),
            });
        }
    }
    let w = pairwise(returns.cols(), |i, j| {
        let r = cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt();
        clamp(r, -T::one(), T::one())
    });
    DependenceMatrix::new(DependenceKind::Pearson, w)
}

fn sort_key_cmp<T: Scalar>(a: T, b: T) -> Ordering {
    a.partial_cmp(&b).expect("finite returns")
}

fn tied_pairs(run_lengths: impl Iterator<Item = usize>) -> i64 {
    run_lengths
        .map(|t| (t * t.saturating_sub(1) / 2) as i64)
        .sum()
}

fn run_lengths<K: PartialEq>(keys: &[K]) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=keys.len() {
        if i == keys.len() || keys[i] != keys[start] {
            runs.push(i - start);
            start = i;
        }
    }
    runs
}

/// Sorts `v` ascending and returns the number of strict inversions removed.
fn merge_sort_inversions<T: Scalar>(v: &mut [T], buf: &mut Vec<T>) -> i64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps =
        merge_sort_inversions(&mut v[..mid], buf) + merge_sort_inversions(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as i64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Σ_{h<k} sgn(x_h−x_k)·sgn(y_h−y_k), i.e. concordant minus discordant pairs,
/// with tied pairs contributing zero. O(T log T).
pub fn concordance_score<T: Scalar>(x: &[T], y: &[T]) -> i64 {
    let n = x.len();
    assert_eq!(n, y.len());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sort_key_cmp(x[a], x[b]).then(sort_key_cmp(y[a], y[b])));
    let xs: Vec<T> = order.iter().map(|&i| x[i]).collect();
    let xys: Vec<(T, T)> = order.iter().map(|&i| (x[i], y[i])).collect();
    let mut ys: Vec<T> = order.iter().map(|&i| y[i]).collect();

    let total = (n * n.saturating_sub(1) / 2) as i64;
    let tied_x = tied_pairs(run_lengths(&xs).into_iter());
    let tied_xy = tied_pairs(run_lengths(&xys).into_iter());
    let mut buf = Vec::with_capacity(n);
    let discordant = merge_sort_inversions(&mut ys, &mut buf);
    let tied_y = tied_pairs(run_lengths(&ys).into_iter());
    total - tied_x - tied_y + tied_xy - 2 * discordant
}

/// Kendall's tau-a over ordered pairs: Σ_h Σ_{k≠h} sgn·sgn / (T(T−1)).
pub fn kendall_tau<T: Scalar>(x: &[T], y: &[T]) -> T {
    let n = x.len();
    let score = 2 * concordance_score(x, y);
    let denom = (n * (n - 1)) as i64;
    T::from_i64(score).expect("score fits") / T::from_i64(denom).expect("count fits")
}

pub fn kendall_matrix<T: Scalar>(returns: &Matrix<T>) -> Result<DependenceMatrix<T>> {
    if returns.rows() < 2 {
        return Err(Error::param("returns", "need at least 2 observations"));
    }
    let columns: Vec<Vec<T>> = (0..returns.cols()).map(|j| returns.column(j)).collect();
    let w = pairwise(returns.cols(), |i, j| kendall_tau(&columns[i], &columns[j]));
    DependenceMatrix::new(DependenceKind::Kendall, w)
}

/// Rows whose ascending rank (ties broken by time index) is at most `k`.
fn lower_tail_mask<T: Scalar>(column: &[T], k: usize) -> Vec<bool> {
    let mut order: Vec<usize> = (0..column.len()).collect();
    order.sort_by(|&a, &b| sort_key_cmp(column[a], column[b]).then(a.cmp(&b)));
    let mut mask = vec![false; column.len()];
    for &t in &order[..k] {
        mask[t] = true;
    }
    mask
}

/// Number of tail observations `⌈qT⌉` used at level `q`.
pub fn tail_count(q: f64, t: usize) -> usize {
    (q * t as f64).ceil() as usize
}

/// Empirical lower-tail dependence at fixed level `q`:
/// λ̂ = |{t : rank_i(t) ≤ k and rank_j(t) ≤ k}| / k with k = ⌈qT⌉.
pub fn lower_tail_matrix<T: Scalar>(returns: &Matrix<T>, q: f64) -> Result<DependenceMatrix<T>> {
    if !(q > 0.0 && q < 0.5) {
        return Err(Error::param(
            "tail_q",
            format!("must lie in (0, 0.5), got {q}"),
        ));
    }
    let t = returns.rows();
    if t < MIN_TAIL_OBSERVATIONS {
        return Err(Error::param(
            "returns",
            format!(
                "lower-tail estimator needs at least {MIN_TAIL_OBSERVATIONS} observations, got {t}"
            ),
        ));
    }
    let k = tail_count(q, t);
    let masks: Vec<Vec<bool>> = (0..returns.cols())
        .map(|j| lower_tail_mask(&returns.column(j), k))
        .collect();
    let kk = T::from_count(k);
    let w = pairwise(returns.cols(), |i, j| {
        let joint = masks[i]
            .iter()
            .zip(&masks[j])
            .filter(|(a, b)| **a && **b)
            .count();
        clamp(T::from_count(joint) / kk, T::zero(), T::one())
    });
    DependenceMatrix::new(DependenceKind::LowerTail, w)
}

/// Dispatches to the estimator for `kind`; `q` is only used for the tail measure.
pub fn dependence_matrix<T: Scalar>(
    returns: &Matrix<T>,
    kind: DependenceKind,
    q: f64,
) -> Result<DependenceMatrix<T>> {
    match kind {
        DependenceKind::Pearson => pearson_matrix(returns),
        DependenceKind::Kendall => kendall_matrix(returns),
        DependenceKind::LowerTail => lower_tail_matrix(returns, q),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_columns(x: &[f64], y: &[f64]) -> Matrix<f64> {
        Matrix::from_fn(x.len(), 2, |t, j| if j == 0 { x[t] } else { y[t] })
    }

    /// Ordered-pair double loop, literally.
    fn brute_tau(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let sgn = |v: f64| {
            if v > 0.0 {
                1i64
            } else if v < 0.0 {
                -1
            } else {
                0
            }
        };
        let mut s = 0i64;
        for h in 0..n {
            for k in 0..n {
                if k != h {
                    s += sgn(x[h] - x[k]) * sgn(y[h] - y[k]);
                }
            }
        }
        s as f64 / (n * (n - 1)) as f64
    }

    #[test]
    fn pearson_examples() {
        let x = [0.1, -0.2, 0.3, 0.05, -0.01];
        let same = pearson_matrix(&two_columns(&x, &x)).unwrap();
        assert_eq!(same.weight(0, 1), 1.0);
        assert_eq!(same.weight(0, 0), 0.0);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(
            pearson_matrix(&two_columns(&x, &neg)).unwrap().weight(0, 1),
            -1.0
        );
        let w = pearson_matrix(&two_columns(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 4.0, 3.0])).unwrap();
        assert!((w.weight(0, 1) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn pearson_zero_variance_names_column() {
        let err = pearson_matrix(&two_columns(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0])).unwrap_err();
        assert!(matches!(err, Error::ZeroVariance { ref asset } if asset == "column 1"));
    }

    #[test]
    fn kendall_examples() {
        let k = |x: &[f64], y: &[f64]| kendall_matrix(&two_columns(x, y)).unwrap().weight(0, 1);
        assert_eq!(k(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 1.0);
        assert_eq!(k(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
        assert_eq!(k(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]), 1.0 / 3.0);
        // ties contribute zero, no correction
        assert_eq!(
            k(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]),
            brute_tau(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0])
        );
    }

    #[test]
    fn lower_tail_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..200).map(|_| rng.random::<f64>() - 0.5).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        for q in [0.05, 0.2, 0.45] {
            assert_eq!(
                lower_tail_matrix(&two_columns(&x, &x), q)
                    .unwrap()
                    .weight(0, 1),
                1.0
            );
            assert_eq!(
                lower_tail_matrix(&two_columns(&x, &neg), q)
                    .unwrap()
                    .weight(0, 1),
                0.0
            );
        }
    }

    #[test]
    fn lower_tail_ties_broken_by_time() {
        // all tied: ranks follow time, so both columns pick the same first k rows
        let x = vec![0.0; 40];
        let y = vec![1.0; 40];
        assert_eq!(
            lower_tail_matrix(&two_columns(&x, &y), 0.1)
                .unwrap()
                .weight(0, 1),
            1.0
        );
    }

    #[test]
    fn lower_tail_preconditions() {
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        let m = two_columns(&x, &x);
        assert!(lower_tail_matrix(&m, 0.5).is_err());
        assert!(lower_tail_matrix(&m, 0.0).is_err());
        let short = two_columns(&x[..10], &x[..10]);
        assert!(lower_tail_matrix(&short, 0.1).is_err());
    }

    #[test]
    fn invalid_matrix_rejected() {
        let m = Matrix::from_rows(&[vec![0.0, 0.5], vec![0.4, 0.0]]);
        assert!(DependenceMatrix::new(DependenceKind::Pearson, m).is_err());
        let m = Matrix::from_rows(&[vec![0.0, -0.5], vec![-0.5, 0.0]]);
        assert!(DependenceMatrix::new(DependenceKind::LowerTail, m).is_err());
        let m = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 0.0]]);
        assert!(DependenceMatrix::new(DependenceKind::Kendall, m).is_err());
    }

    #[test]
    fn csv_export_has_header() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let dep = pearson_matrix(&two_columns(&x, &[1.0, 2.0, 4.0, 3.0])).unwrap();
        let mut out = Vec::new();
        dep.write_csv(&["a".into(), "b".into()], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().next().unwrap(), ",a,b");
        let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[..2], ["a", "0"]);
        assert!((row[2].parse::<f64>().unwrap() - 0.8).abs() < 1e-12);
    }

    fn matrix_strategy(max_t: usize, max_n: usize) -> impl Strategy<Value = Matrix<f64>> {
        (2..=max_t, 2..=max_n).prop_flat_map(|(t, n)| {
            // small integer grid forces plenty of ties
            proptest::collection::vec(-4i32..=4, t * n).prop_map(move |v| {
                Matrix::from_row_major(t, n, v.into_iter().map(f64::from).collect())
            })
        })
    }

    proptest! {
        #[test]
        fn kendall_equals_brute_force(m in matrix_strategy(50, 4)) {
            let dep = kendall_matrix(&m).unwrap();
            for i in 0..m.cols() {
                for j in 0..m.cols() {
                    if i != j {
                        prop_assert_eq!(dep.weight(i, j), brute_tau(&m.column(i), &m.column(j)));
                    }
                }
            }
        }

        #[test]
        fn lower_tail_bounded(m in matrix_strategy(60, 4), q in 0.01f64..0.49) {
            prop_assume!(m.rows() >= MIN_TAIL_OBSERVATIONS);
            let dep = lower_tail_matrix(&m, q).unwrap();
            for &w in dep.weights().as_slice() {
                prop_assert!((0.0..=1.0).contains(&w));
            }
        }

        #[test]
        fn rank_and_affine_invariance(seed in 0u64..500, a in 0.1f64..10.0, b in -5.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = Matrix::from_fn(30, 3, |_, _| rng.random::<f64>());
            let moved = Matrix::from_fn(30, 3, |t, j| if j == 1 { a * m[(t, j)] + b } else { m[(t, j)] });
            let k0 = kendall_matrix(&m).unwrap();
            let k1 = kendall_matrix(&moved).unwrap();
            prop_assert_eq!(k0.weights(), k1.weights());
            let p0 = pearson_matrix(&m).unwrap();
            let p1 = pearson_matrix(&moved).unwrap();
            for (u, v) in p0.weights().as_slice().iter().zip(p1.weights().as_slice()) {
                prop_assert!((u - v).abs() < 1e-12);
            }
        }

        #[test]
        fn permutation_equivariance(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = Matrix::from_fn(40, 4, |_, _| rng.random::<f64>() - 0.5);
            let perm = [2usize, 0, 3, 1];
            let pm = m.select_columns(&perm);
            for kind in DependenceKind::ALL {
                let d = dependence_matrix(&m, kind, 0.1).unwrap();
                let dp = dependence_matrix(&pm, kind, 0.1).unwrap();
                for i in 0..4 {
                    for j in 0..4 {
                        let expected = d.weight(perm[i], perm[j]);
                        prop_assert!((dp.weight(i, j) - expected).abs() < 1e-14);
                    }
                }
            }
        }
    }
}
