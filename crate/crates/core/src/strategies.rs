//! The five allocation rules: GMV, the three network portfolios, and 1/N.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dependence::{self, DependenceKind, DEFAULT_TAIL_Q};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::netstructure::{self, ClusteringProfile, InterconnMatrices, DEFAULT_GRID_SIZE};
use crate::qp::{self, QpProblem};
use crate::scalar::Scalar;
use crate::stats;

pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 0.01;
const BUDGET_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Gmv,
    Pna,
    Kna,
    Tna,
    Ew,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [Self::Gmv, Self::Pna, Self::Kna, Self::Tna, Self::Ew];

    /// Dependence measure behind a network strategy.
    pub fn dependence_kind(self) -> Option<DependenceKind> {
        match self {
            Self::Pna => Some(DependenceKind::Pearson),
            Self::Kna => Some(DependenceKind::Kendall),
            Self::Tna => Some(DependenceKind::LowerTail),
            Self::Gmv | Self::Ew => None,
        }
    }

    pub fn for_kind(kind: DependenceKind) -> Self {
        match kind {
            DependenceKind::Pearson => Self::Pna,
            DependenceKind::Kendall => Self::Kna,
            DependenceKind::LowerTail => Self::Tna,
        }
    }

    pub fn is_network(self) -> bool {
        self.dependence_kind().is_some()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Gmv => "gmv",
            Self::Pna => "pna",
            Self::Kna => "kna",
            Self::Tna => "tna",
            Self::Ew => "ew",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Gmv => "GMV",
            Self::Pna => "PNA",
            Self::Kna => "KNA",
            Self::Tna => "TNA",
            Self::Ew => "EW",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::param("strategies", format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub tail_q: f64,
    pub grid_size: usize,
    /// Weights above this count towards `support_size`.
    pub support_threshold: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            tail_q: DEFAULT_TAIL_Q,
            grid_size: DEFAULT_GRID_SIZE,
            support_threshold: DEFAULT_SUPPORT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Portfolio<T> {
    pub strategy: Strategy,
    pub window_id: usize,
    pub weights: Vec<T>,
    pub support_size: usize,
}

impl<T: Scalar> Portfolio<T> {
    /// Checks the long-only budget invariants.
    pub fn new(
        strategy: Strategy,
        window_id: usize,
        weights: Vec<T>,
        support_threshold: f64,
    ) -> Result<Self> {
        let total = weights.iter().fold(T::zero(), |a, &b| a + b);
        if (total - T::one()).abs() > T::tol(BUDGET_TOL) {
            return Err(Error::param("weights", format!("sum to {total}, not 1")));
        }
        if let Some(w) = weights
            .iter()
            .find(|w| !(**w >= T::zero() && **w <= T::one()))
        {
            return Err(Error::param(
                "weights",
                format!("weight {w} outside [0, 1]"),
            ));
        }
        let cutoff = T::lit(support_threshold);
        let support_size = weights.iter().filter(|&&w| w > cutoff).count();
        Ok(Self {
            strategy,
            window_id,
            weights,
            support_size,
        })
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }
}

/// A portfolio plus the network diagnostics it was derived from, if any.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Allocation<T> {
    pub portfolio: Portfolio<T>,
    pub profile: Option<ClusteringProfile<T>>,
}

/// Long-only minimum of xᵀΩx with Ω = Σ / Σ_j σ_j².
pub fn gmv_portfolio<T: Scalar>(
    returns: &Matrix<T>,
    window_id: usize,
    config: &StrategyConfig,
) -> Result<Portfolio<T>> {
    if returns.cols() < 2 {
        return Err(Error::TooFewAssets {
            remaining: returns.cols(),
        });
    }
    let omega = netstructure::normalized_covariance(&stats::covariance_matrix(returns))?;
    let sol = qp::solve(&QpProblem::long_only(omega)?)?;
    Portfolio::new(
        Strategy::Gmv,
        window_id,
        sol.weights,
        config.support_threshold,
    )
}

/// Network pipeline output for one window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkAllocation<T> {
    pub portfolio: Portfolio<T>,
    pub dependence: dependence::DependenceMatrix<T>,
    pub profile: ClusteringProfile<T>,
    pub matrices: InterconnMatrices<T>,
}

/// dependence matrix → integrated clustering → H → long-only solve.
pub fn network_portfolio<T: Scalar>(
    returns: &Matrix<T>,
    kind: DependenceKind,
    window_id: usize,
    config: &StrategyConfig,
) -> Result<NetworkAllocation<T>> {
    if returns.cols() < 2 {
        return Err(Error::TooFewAssets {
            remaining: returns.cols(),
        });
    }
    let sigma = stats::covariance_matrix(returns);
    netstructure::normalized_covariance(&sigma)?;
    let dep = dependence::dependence_matrix(returns, kind, config.tail_q)?;
    let profile = netstructure::integrated_clustering(&dep, config.grid_size)?;
    let matrices = InterconnMatrices::from_covariance(sigma, &profile.per_asset)?;
    let sol = qp::solve(&QpProblem::long_only(matrices.h_matrix.clone())?)?;
    let portfolio = Portfolio::new(
        Strategy::for_kind(kind),
        window_id,
        sol.weights,
        config.support_threshold,
    )?;
    Ok(NetworkAllocation {
        portfolio,
        dependence: dep,
        profile,
        matrices,
    })
}

pub fn ew_portfolio<T: Scalar>(
    n: usize,
    window_id: usize,
    config: &StrategyConfig,
) -> Result<Portfolio<T>> {
    if n == 0 {
        return Err(Error::param(
            "n",
            "equal weighting needs at least one asset",
        ));
    }
    let w = T::one() / T::from_count(n);
    Portfolio::new(
        Strategy::Ew,
        window_id,
        vec![w; n],
        config.support_threshold,
    )
}

/// Runs `strategy` on one in-sample window.
pub fn allocate<T: Scalar>(
    strategy: Strategy,
    returns: &Matrix<T>,
    window_id: usize,
    config: &StrategyConfig,
) -> Result<Allocation<T>> {
    match strategy.dependence_kind() {
        Some(kind) => {
            let net = network_portfolio(returns, kind, window_id, config)?;
            Ok(Allocation {
                portfolio: net.portfolio,
                profile: Some(net.profile),
            })
        }
        None => {
            let portfolio = match strategy {
                Strategy::Gmv => gmv_portfolio(returns, window_id, config)?,
                _ => ew_portfolio(returns.cols(), window_id, config)?,
            };
            Ok(Allocation {
                portfolio,
                profile: None,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::QpProblem;
    use crate::synthetic::{generate, SyntheticSpec};

    fn cfg() -> StrategyConfig {
        StrategyConfig::default()
    }

    fn cols(columns: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_fn(columns[0].len(), columns.len(), |t, j| columns[j][t])
    }

    #[test]
    fn parse_and_label() {
        assert_eq!("TNA".parse::<Strategy>().unwrap(), Strategy::Tna);
        assert!("mvp".parse::<Strategy>().is_err());
        assert_eq!(
            Strategy::Kna.dependence_kind(),
            Some(DependenceKind::Kendall)
        );
        assert_eq!(Strategy::Pna.to_string(), "PNA");
    }

    #[test]
    fn gmv_uncorrelated_assets() {
        let x = [1.0, -1.0, 1.0, -1.0];
        let eq = [1.0, 1.0, -1.0, -1.0];
        let p = gmv_portfolio(&cols(&[&x, &eq]), 0, &cfg()).unwrap();
        assert!((p.weights[0] - 0.5).abs() < 1e-12);
        let y = [2.0, 2.0, -2.0, -2.0];
        let p = gmv_portfolio(&cols(&[&x, &y]), 0, &cfg()).unwrap();
        assert!((p.weights[0] - 0.8).abs() < 1e-12 && (p.weights[1] - 0.2).abs() < 1e-12);
        assert_eq!(p.support_size, 2);
    }

    #[test]
    fn gmv_on_omega_equals_gmv_on_sigma() {
        let panel = generate::<f64>(&SyntheticSpec::block(3, 0.5, 2, 300, 11)).unwrap();
        let r = panel.returns();
        let sigma = stats::covariance_matrix(r);
        let on_sigma = qp::solve(&QpProblem::long_only(sigma).unwrap()).unwrap();
        let on_omega = gmv_portfolio(r, 0, &cfg()).unwrap();
        for (a, b) in on_sigma.weights.iter().zip(&on_omega.weights) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn two_equal_vol_assets_split_evenly() {
        let x = [0.01, -0.02, 0.015, 0.0, -0.01, 0.02];
        let y = [0.02, 0.01, -0.015, 0.0, -0.01, -0.02];
        let r = cols(&[&x, &y]);
        for kind in [DependenceKind::Pearson, DependenceKind::Kendall] {
            let net = network_portfolio(&r, kind, 0, &cfg()).unwrap();
            assert_eq!(net.profile.per_asset, vec![0.0, 0.0]);
            assert!((net.portfolio.weights[0] - 0.5).abs() < 1e-12);
        }
        assert!((gmv_portfolio(&r, 0, &cfg()).unwrap().weights[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn zero_clustering_is_inverse_variance() {
        let x = [0.01, -0.02, 0.015, 0.0, -0.01, 0.02];
        let y: Vec<f64> = [0.02, 0.01, -0.015, 0.0, -0.01, -0.02]
            .iter()
            .map(|v| 3.0 * v)
            .collect();
        let net = network_portfolio(&cols(&[&x, &y]), DependenceKind::Pearson, 0, &cfg()).unwrap();
        let v0 = stats::sample_variance(&x);
        let v1 = stats::sample_variance(&y);
        let expected = (1.0 / v0) / (1.0 / v0 + 1.0 / v1);
        assert!((net.portfolio.weights[0] - expected).abs() < 1e-10);
    }

    #[test]
    fn ew_weights() {
        let p = ew_portfolio::<f64>(4, 0, &cfg()).unwrap();
        assert_eq!(p.weights, vec![0.25; 4]);
        assert_eq!(
            ew_portfolio::<f64>(1, 0, &cfg()).unwrap().weights,
            vec![1.0]
        );
        assert!(ew_portfolio::<f64>(0, 0, &cfg()).is_err());
    }

    #[test]
    fn peripheral_assets_preferred() {
        let panel = generate::<f64>(&SyntheticSpec::block(5, 0.9, 5, 1000, 42)).unwrap();
        let net = network_portfolio(panel.returns(), DependenceKind::Pearson, 0, &cfg()).unwrap();
        let periphery: f64 = net.portfolio.weights[5..].iter().sum();
        assert!(periphery > 0.5, "periphery weight {periphery}");
    }

    #[test]
    fn permutation_equivariance() {
        let panel = generate::<f64>(&SyntheticSpec::block(3, 0.6, 3, 250, 5)).unwrap();
        let perm = [4usize, 1, 5, 0, 3, 2];
        let r = panel.returns();
        let rp = r.select_columns(&perm);
        for s in Strategy::ALL {
            let a = allocate(s, r, 0, &cfg()).unwrap().portfolio.weights;
            let b = allocate(s, &rp, 0, &cfg()).unwrap().portfolio.weights;
            for (i, &old) in perm.iter().enumerate() {
                assert!((b[i] - a[old]).abs() < 1e-9, "{s}: {} vs {}", b[i], a[old]);
            }
        }
    }
}
