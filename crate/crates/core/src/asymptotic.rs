//! Deterministic equivalent of the MMSE-receiver sum-rate: the value the
//! random log-det rate converges to as the number of reference-cell
//! antennas grows, plus its collocated closed form and large-array limit.

use nalgebra::DVector;

use crate::channel::{CorrelationModel, CorrelationSet};
use crate::error::{Error, Result};
use crate::estimation::Covariances;
use crate::linalg::{cholesky, trace_of_product, CMatrix, C64};
use crate::scenario::LargeScaleMap;

/// `xi = Tr(Q^{-1} RL_i Sigma^{-1} RL_l)` where `RL_x = R_x Lambda_x`.
///
/// The value is real whenever `i == l` or the factors commute (identity or
/// common correlation); in general `xi_{i,l} = conj(xi_{l,i})`.
pub fn xi_coeff(
    q: &CMatrix,
    weighted_i: &CMatrix,
    weighted_l: &CMatrix,
    sigma: &CMatrix,
) -> Result<C64> {
    let q_chol = cholesky(q, "pilot covariance Q")?;
    let sigma_chol = cholesky(sigma, "interference-plus-noise covariance")?;
    Ok(trace_of_product(
        &q_chol.solve(weighted_i),
        &sigma_chol.solve(weighted_l),
    ))
}

/// Every `xi_{i,l,k}` for one large-scale state.
#[derive(Debug, Clone)]
pub struct XiTable {
    cells: usize,
    users: usize,
    values: Vec<C64>,
}

impl XiTable {
    pub fn compute(cov: &Covariances) -> Self {
        let (cells, users) = (cov.cells(), cov.users());
        let mut values = vec![C64::new(0.0, 0.0); cells * cells * users];
        for k in 0..users {
            let left: Vec<CMatrix> = (0..cells)
                .map(|i| cov.q_cholesky(k).solve(cov.weighted(i, k)))
                .collect();
            let right: Vec<CMatrix> = (0..cells)
                .map(|l| cov.sigma_cholesky().solve(cov.weighted(l, k)))
                .collect();
            for (i, a) in left.iter().enumerate() {
                for (l, b) in right.iter().enumerate() {
                    values[(i * cells + l) * users + k] = trace_of_product(a, b);
                }
            }
        }
        XiTable {
            cells,
            users,
            values,
        }
    }

    pub fn from_fn(
        cells: usize,
        users: usize,
        mut f: impl FnMut(usize, usize, usize) -> C64,
    ) -> Self {
        let mut values = Vec::with_capacity(cells * cells * users);
        for i in 0..cells {
            for l in 0..cells {
                for k in 0..users {
                    values.push(f(i, l, k));
                }
            }
        }
        XiTable {
            cells,
            users,
            values,
        }
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn get(&self, i: usize, l: usize, k: usize) -> C64 {
        self.values[(i * self.cells + l) * self.users + k]
    }

    /// `Xi'_k`: entries `xi_{i,l,k}` for `i, l` over the interfering cells.
    pub fn interference_block(&self, k: usize) -> CMatrix {
        let n = self.cells - 1;
        CMatrix::from_fn(n, n, |i, l| self.get(i + 1, l + 1, k))
    }

    /// `xi_{1,2:L,k}`.
    pub fn row_from_reference(&self, k: usize) -> DVector<C64> {
        DVector::from_fn(self.cells - 1, |l, _| self.get(0, l + 1, k))
    }

    /// `xi_{2:L,1,k}`.
    pub fn column_to_reference(&self, k: usize) -> DVector<C64> {
        DVector::from_fn(self.cells - 1, |i, _| self.get(i + 1, 0, k))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticRate {
    pub c_inf: f64,
    /// Per-user log arguments `1 + SINR_k`.
    pub per_user_terms: Vec<f64>,
}

/// `sum_k log2[1 + xi_{1,1,k} - xi_{1,2:L,k}^T (Xi'_k + I)^{-1} xi_{2:L,1,k}]`.
pub fn c_inf(table: &XiTable) -> Result<AsymptoticRate> {
    let mut terms = Vec::with_capacity(table.users());
    for k in 0..table.users() {
        let mut arg = C64::new(1.0, 0.0) + table.get(0, 0, k);
        if table.cells() > 1 {
            let n = table.cells() - 1;
            let system = table.interference_block(k) + CMatrix::identity(n, n);
            let solved =
                system
                    .lu()
                    .solve(&table.column_to_reference(k))
                    .ok_or(Error::Singular {
                        what: "interference coupling matrix (Xi' + I)",
                    })?;
            arg -= table.row_from_reference(k).dot(&solved);
        }
        if !arg.re.is_finite() {
            return Err(Error::Singular {
                what: "interference coupling matrix (Xi' + I)",
            });
        }
        // Hermitian symmetry of xi makes the argument real up to rounding.
        if arg.im.abs() > 1e-8 * arg.re.abs().max(1.0) {
            log::warn!(
                "user {k}: deterministic-equivalent argument has imaginary part {:e}",
                arg.im
            );
        }
        terms.push(arg.re);
    }
    Ok(AsymptoticRate {
        c_inf: terms.iter().map(|t| t.log2()).sum(),
        per_user_terms: terms,
    })
}

/// Deterministic-equivalent sum-rate for one large-scale state.
pub fn asymptotic_sumrate(
    map: &LargeScaleMap,
    corr: &CorrelationSet,
    gamma_p: f64,
    gamma_ul: f64,
) -> Result<AsymptoticRate> {
    let cov = Covariances::new(map, corr, gamma_p, gamma_ul)?;
    c_inf(&XiTable::compute(&cov))
}

fn require_collocated(map: &LargeScaleMap) -> Result<()> {
    if map.rrus() != 1 {
        return Err(Error::Precondition(format!(
            "closed form needs one RRU per cell (N = 1), got N = {}",
            map.rrus()
        )));
    }
    Ok(())
}

/// Closed form of the deterministic equivalent for collocated arrays
/// (`N = 1`) without receive correlation, `M` antennas.
pub fn c_inf_special(
    map: &LargeScaleMap,
    antennas: usize,
    correlation: CorrelationModel,
    gamma_p: f64,
    gamma_ul: f64,
) -> Result<f64> {
    require_collocated(map)?;
    if !correlation.is_identity() {
        return Err(Error::Precondition(
            "closed form needs uncorrelated antennas (R = I)".into(),
        ));
    }
    if antennas == 0 {
        return Err(Error::Precondition("M must be at least 1".into()));
    }
    let (cells, users) = (map.cells(), map.users());
    let lam = |l: usize, k: usize| map.get(l, 0, k);
    let pilot_power = |k: usize| (0..cells).map(|l| lam(l, k)).sum::<f64>() + gamma_p;
    let epsilon: f64 = (0..users)
        .map(|k| {
            let sum: f64 = (0..cells).map(|l| lam(l, k)).sum();
            let sum_sq: f64 = (0..cells).map(|l| lam(l, k).powi(2)).sum();
            sum - sum_sq / pilot_power(k)
        })
        .sum();
    let m = antennas as f64;
    Ok((0..users)
        .map(|k| {
            let contamination: f64 = (1..cells).map(|l| lam(l, k).powi(2)).sum();
            let residual = (epsilon + gamma_ul) / m * pilot_power(k);
            (1.0 + lam(0, k).powi(2) / (contamination + residual)).log2()
        })
        .sum())
}

/// Large-array limit, identical to the MRC sum-rate under pilot
/// contamination: `sum_k log2(1 + lambda_{1,k}^2 / sum_{l>=2} lambda_{l,k}^2)`.
pub fn c_limit(map: &LargeScaleMap) -> Result<f64> {
    require_collocated(map)?;
    let mut total = 0.0;
    for k in 0..map.users() {
        let contamination: f64 = (1..map.cells()).map(|l| map.get(l, 0, k).powi(2)).sum();
        if contamination <= 0.0 {
            return Err(Error::UnboundedLimit { user: k });
        }
        total += (1.0 + map.get(0, 0, k).powi(2) / contamination).log2();
    }
    Ok(total)
}
