//! Network quantities derived from a dependence matrix: threshold graphs,
//! local and threshold-integrated clustering, and the interconnectedness
//! matrices that enter the allocation problem.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::dependence::DependenceMatrix;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::stats;

pub const DEFAULT_GRID_SIZE: usize = 201;

/// Binary undirected graph keeping the edges with weight at or above `threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdAdjacency<T> {
    threshold: T,
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl<T: Scalar> ThresholdAdjacency<T> {
    fn empty(n: usize, threshold: T) -> Self {
        let words = n.div_ceil(64).max(1);
        Self {
            threshold,
            n,
            words,
            bits: vec![0; n * words],
        }
    }

    fn add_edge(&mut self, i: usize, j: usize) {
        self.bits[i * self.words + j / 64] |= 1 << (j % 64);
        self.bits[j * self.words + i / 64] |= 1 << (i % 64);
    }

    /// Graph on `n` nodes with the given undirected edges. Self-loops are ignored.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj = Self::empty(n, T::zero());
        for &(i, j) in edges {
            assert!(i < n && j < n, "edge endpoint out of range");
            if i != j {
                adj.add_edge(i, j);
            }
        }
        adj
    }

    pub fn threshold(&self) -> T {
        self.threshold
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.row(i)[j / 64] >> (j % 64) & 1 == 1
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row(i).iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Dense 0/1 adjacency matrix.
    pub fn to_matrix(&self) -> Matrix<T> {
        Matrix::from_fn(self.n, self.n, |i, j| {
            if self.has_edge(i, j) {
                T::one()
            } else {
                T::zero()
            }
        })
    }

    fn neighbours(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.has_edge(i, j))
    }

    fn common_neighbours(&self, i: usize, j: usize) -> usize {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }
}

fn adjacency_at<T: Scalar>(dep: &DependenceMatrix<T>, s: T) -> ThresholdAdjacency<T> {
    let n = dep.n();
    let mut adj = ThresholdAdjacency::empty(n, s);
    for i in 0..n {
        for j in (i + 1)..n {
            if dep.weight(i, j) >= s {
                adj.add_edge(i, j);
            }
        }
    }
    adj
}

/// a_ij = 1 iff w_ij ≥ s (i ≠ j).
pub fn threshold_adjacency<T: Scalar>(
    dep: &DependenceMatrix<T>,
    s: T,
) -> Result<ThresholdAdjacency<T>> {
    let (lo, hi) = dep.value_range();
    if !(s >= lo && s <= hi) {
        return Err(Error::ThresholdOutOfRange {
            threshold: s.as_f64(),
            lo: lo.as_f64(),
            hi: hi.as_f64(),
        });
    }
    Ok(adjacency_at(dep, s))
}

/// Watts–Strogatz local clustering; nodes with degree below 2 get 0.
pub fn local_clustering<T: Scalar>(adj: &ThresholdAdjacency<T>) -> Vec<T> {
    (0..adj.n())
        .map(|i| {
            let k = adj.degree(i);
            if k < 2 {
                return T::zero();
            }
            // each triangle through i is seen from both of its other corners
            let twice_triangles: usize =
                adj.neighbours(i).map(|j| adj.common_neighbours(i, j)).sum();
            T::from_count(twice_triangles) / T::from_count(k * (k - 1))
        })
        .collect()
}

/// Per-asset clustering averaged over the threshold range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusteringProfile<T> {
    pub per_asset: Vec<T>,
    pub grid: Vec<T>,
    /// Row g holds C_i(A_s) at `grid[g]`.
    pub per_threshold: Matrix<T>,
}

impl<T: Scalar> ClusteringProfile<T> {
    /// Profile carrying only per-asset values, for callers that already know them.
    pub fn from_values(per_asset: Vec<T>) -> Self {
        Self {
            per_threshold: Matrix::zeros(0, per_asset.len()),
            per_asset,
            grid: Vec::new(),
        }
    }

    pub fn average(&self) -> T {
        stats::mean(&self.per_asset)
    }
}

/// Uniform grid of `grid_size` points spanning `[lo, hi]`, endpoints exact.
pub fn threshold_grid<T: Scalar>(lo: T, hi: T, grid_size: usize) -> Vec<T> {
    let last = T::from_count(grid_size - 1);
    (0..grid_size)
        .map(|g| {
            if g + 1 == grid_size {
                hi
            } else {
                lo + (hi - lo) * T::from_count(g) / last
            }
        })
        .collect()
}

/// Average of C_i(A_s) over the measure's value range, composite trapezoid
/// rule on a uniform grid, clamped to [0, 1].
pub fn integrated_clustering<T: Scalar>(
    dep: &DependenceMatrix<T>,
    grid_size: usize,
) -> Result<ClusteringProfile<T>> {
    if grid_size < 2 {
        return Err(Error::param(
            "grid_size",
            format!("must be at least 2, got {grid_size}"),
        ));
    }
    let (lo, hi) = dep.value_range();
    let grid = threshold_grid(lo, hi, grid_size);
    let rows: Vec<Vec<T>> = grid
        .par_iter()
        .map(|&s| local_clustering(&adjacency_at(dep, s)))
        .collect();

    let n = dep.n();
    let half = T::lit(0.5);
    let mut sums = vec![T::zero(); n];
    for (g, row) in rows.iter().enumerate() {
        let weight = if g == 0 || g + 1 == grid_size {
            half
        } else {
            T::one()
        };
        for (acc, &c) in sums.iter_mut().zip(row) {
            *acc += weight * c;
        }
    }
    let intervals = T::from_count(grid_size - 1);
    let per_asset = sums
        .into_iter()
        .map(|s| (s / intervals).max(T::zero()).min(T::one()))
        .collect();
    let per_threshold = Matrix::from_fn(grid_size, n, |g, i| rows[g][i]);
    Ok(ClusteringProfile {
        per_asset,
        grid,
        per_threshold,
    })
}

/// c_ij = C_i·C_j off the diagonal, 1 on it.
pub fn interconnectedness_matrix<T: Scalar>(clustering: &[T]) -> Matrix<T> {
    let n = clustering.len();
    Matrix::from_fn(n, n, |i, j| {
        if i == j {
            T::one()
        } else {
            clustering[i] * clustering[j]
        }
    })
}

/// Σ together with its normalizations Ω, Δ and the network matrices C, H.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterconnMatrices<T> {
    pub sigma: Matrix<T>,
    /// σ_i
    pub stdevs: Vec<T>,
    /// Π
    pub correlation: Matrix<T>,
    /// diagonal of Δ: s_i = σ_i / √(Σ_j σ_j²)
    pub delta: Vec<T>,
    /// Ω = Σ / Σ_j σ_j²
    pub omega: Matrix<T>,
    pub clustering: Vec<T>,
    pub c_matrix: Matrix<T>,
    /// H = Δ C Δ
    pub h_matrix: Matrix<T>,
}

/// Ω = Σ / trace(Σ). Fails on a zero-variance asset.
pub fn normalized_covariance<T: Scalar>(sigma: &Matrix<T>) -> Result<Matrix<T>> {
    check_variances(sigma)?;
    let total = sigma.trace();
    Ok(sigma.map(|v| v / total))
}

fn check_variances<T: Scalar>(sigma: &Matrix<T>) -> Result<()> {
    for (j, v) in sigma.diag().into_iter().enumerate() {
        if v.is_nan() || v <= T::zero() {
            return Err(Error::ZeroVariance {
                asset: format!("column {j}"),
            });
        }
    }
    Ok(())
}

impl<T: Scalar> InterconnMatrices<T> {
    pub fn from_covariance(sigma: Matrix<T>, clustering: &[T]) -> Result<Self> {
        if sigma.rows() != clustering.len() {
            return Err(Error::LengthMismatch {
                left: sigma.rows(),
                right: clustering.len(),
            });
        }
        check_variances(&sigma)?;
        let n = sigma.rows();
        let stdevs: Vec<T> = sigma.diag().into_iter().map(|v| v.sqrt()).collect();
        let total = sigma.trace();
        let root_total = total.sqrt();
        let delta: Vec<T> = stdevs.iter().map(|&s| s / root_total).collect();
        let omega = sigma.map(|v| v / total);
        let correlation = Matrix::from_fn(n, n, |i, j| {
            if i == j {
                T::one()
            } else {
                sigma[(i, j)] / (stdevs[i] * stdevs[j])
            }
        });
        let c_matrix = interconnectedness_matrix(clustering);
        let mut h_matrix = Matrix::from_fn(n, n, |i, j| delta[i] * c_matrix[(i, j)] * delta[j]);
        h_matrix.symmetrize();
        Ok(Self {
            sigma,
            stdevs,
            correlation,
            delta,
            omega,
            clustering: clustering.to_vec(),
            c_matrix,
            h_matrix,
        })
    }

    /// Δ Π Δ, which reproduces Ω up to rounding.
    pub fn omega_from_factors(&self) -> Matrix<T> {
        let d = &self.delta;
        Matrix::from_fn(d.len(), d.len(), |i, j| {
            d[i] * self.correlation[(i, j)] * d[j]
        })
    }
}

pub fn build_matrices<T: Scalar>(
    returns: &Matrix<T>,
    profile: &ClusteringProfile<T>,
) -> Result<InterconnMatrices<T>> {
    if returns.rows() < 2 {
        return Err(Error::param("returns", "need at least 2 observations"));
    }
    InterconnMatrices::from_covariance(stats::covariance_matrix(returns), &profile.per_asset)
}

/// Node table: asset id, σ_i, C_i and one weight column per labelled portfolio.
pub fn write_node_table<T: Scalar, W: Write>(
    writer: W,
    assets: &[String],
    stdevs: &[T],
    clustering: &[T],
    weights: &[(String, Vec<T>)],
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["asset".to_string(), "sigma".into(), "clustering".into()];
    header.extend(weights.iter().map(|(label, _)| format!("weight_{label}")));
    wtr.write_record(&header)?;
    for (i, asset) in assets.iter().enumerate() {
        let mut rec = vec![
            asset.clone(),
            stdevs[i].to_string(),
            clustering[i].to_string(),
        ];
        rec.extend(weights.iter().map(|(_, w)| w[i].to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<node writer>", e))?;
    Ok(())
}

/// Edge table of the complete weighted graph: one row per unordered pair.
pub fn write_edge_table<T: Scalar, W: Write>(
    writer: W,
    assets: &[String],
    dep: &DependenceMatrix<T>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["source", "target", "weight"])?;
    for i in 0..dep.n() {
        for j in (i + 1)..dep.n() {
            wtr.write_record([
                assets[i].as_str(),
                assets[j].as_str(),
                &dep.weight(i, j).to_string(),
            ])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<edge writer>", e))?;
    Ok(())
}
