//! Linear-Gaussian predict/update recursion.
//!
//! The filter is generic in state dimension; the backtest deploys it as a
//! scalar local-level model (`F = H = 1`, no control input) over closes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest eigenvalue a covariance may have before it is treated as
/// having lost positive semidefiniteness.
pub const PSD_TOLERANCE: f64 = -1e-9;

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    m.clone().symmetric_eigenvalues().min()
}

fn check_psd(m: &DMatrix<f64>) -> Result<()> {
    let min = min_eigenvalue(m);
    if min.is_nan() || min < PSD_TOLERANCE {
        return Err(Error::NotPositiveSemidefinite(min));
    }
    Ok(())
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= 1e-12 * scale
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterModel {
    f: DMatrix<f64>,
    h: DMatrix<f64>,
    b: Option<DMatrix<f64>>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl FilterModel {
    pub fn new(
        f: DMatrix<f64>,
        h: DMatrix<f64>,
        b: Option<DMatrix<f64>>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
    ) -> Result<Self> {
        let n = f.nrows();
        let m = h.nrows();
        if n == 0 || m == 0 {
            return Err(Error::Dimension("empty state or measurement".into()));
        }
        if f.ncols() != n {
            return Err(Error::Dimension(format!("F is {}x{}", n, f.ncols())));
        }
        if h.ncols() != n {
            return Err(Error::Dimension(format!("H has {} columns, expected {n}", h.ncols())));
        }
        if q.shape() != (n, n) {
            return Err(Error::Dimension(format!("Q is {:?}, expected ({n}, {n})", q.shape())));
        }
        if r.shape() != (m, m) {
            return Err(Error::Dimension(format!("R is {:?}, expected ({m}, {m})", r.shape())));
        }
        if let Some(b) = &b {
            if b.nrows() != n || b.ncols() == 0 {
                return Err(Error::Dimension(format!("B is {:?}, expected ({n}, p)", b.shape())));
            }
        }
        let finite = |x: &DMatrix<f64>| x.iter().all(|v| v.is_finite());
        if !(finite(&f) && finite(&h) && finite(&q) && finite(&r) && b.as_ref().is_none_or(finite)) {
            return Err(Error::InvalidModel("non-finite entry".into()));
        }
        if !is_symmetric(&q) || min_eigenvalue(&q) < PSD_TOLERANCE {
            return Err(Error::InvalidModel("Q must be symmetric positive semidefinite".into()));
        }
        if !is_symmetric(&r) || min_eigenvalue(&r) <= 0.0 {
            return Err(Error::InvalidModel("R must be symmetric positive definite".into()));
        }
        Ok(FilterModel { f, h, b, q, r })
    }

    /// Scalar random-walk state observed with noise: `F = H = 1`,
    /// `Q = q`, `R = r`.
    pub fn local_level(q: f64, r: f64) -> Result<Self> {
        let one = DMatrix::from_element(1, 1, 1.0);
        FilterModel::new(
            one.clone(),
            one,
            None,
            DMatrix::from_element(1, 1, q),
            DMatrix::from_element(1, 1, r),
        )
    }

    pub fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn measurement_dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn measurement(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn control(&self) -> Option<&DMatrix<f64>> {
        self.b.as_ref()
    }

    pub fn process_noise(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn measurement_noise(&self) -> &DMatrix<f64> {
        &self.r
    }
}

/// Posterior mean `x_{k|k}` and covariance `P_{k|k}` after `k` updates.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
    pub k: u64,
}

impl FilterState {
    pub fn new(x: DVector<f64>, p: DMatrix<f64>) -> Result<Self> {
        if p.shape() != (x.len(), x.len()) {
            return Err(Error::Dimension(format!(
                "P is {:?} for a state of length {}",
                p.shape(),
                x.len()
            )));
        }
        let p = symmetrize(&p);
        check_psd(&p)?;
        Ok(FilterState { x, p, k: 0 })
    }

    pub fn scalar(x: f64, p: f64) -> Result<Self> {
        Self::new(DVector::from_element(1, x), DMatrix::from_element(1, 1, p))
    }
}

/// Everything produced by one predict/update cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub x_prior: DVector<f64>,
    pub p_prior: DMatrix<f64>,
    /// Pre-fit residual `z - H x_prior`.
    pub innovation: DVector<f64>,
    pub innovation_cov: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub x_post: DVector<f64>,
    pub p_post: DMatrix<f64>,
    /// Post-fit residual `z - H x_post`.
    pub post_fit_residual: DVector<f64>,
}

/// `x_prior = F x + B u`, `P_prior = F P F^T + Q` (symmetrized).
pub fn predict(
    state: &FilterState,
    model: &FilterModel,
    u: Option<&DVector<f64>>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = model.state_dim();
    if state.x.len() != n || state.p.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "state has length {}, model expects {n}",
            state.x.len()
        )));
    }
    let mut x_prior = &model.f * &state.x;
    match (&model.b, u) {
        (Some(b), Some(u)) => {
            if u.len() != b.ncols() {
                return Err(Error::Dimension(format!(
                    "control has length {}, B expects {}",
                    u.len(),
                    b.ncols()
                )));
            }
            x_prior += b * u;
        }
        (None, None) => {}
        (Some(_), None) => return Err(Error::Dimension("model has B but no control given".into())),
        (None, Some(_)) => return Err(Error::Dimension("control given but model has no B".into())),
    }
    let p_prior = symmetrize(&(&model.f * &state.p * model.f.transpose() + &model.q));
    Ok((x_prior, p_prior))
}

/// Measurement update with the optimal gain `K = P H^T S^-1` and the
/// simple covariance form `P_post = (I - K H) P_prior` (symmetrized).
pub fn update(
    x_prior: &DVector<f64>,
    p_prior: &DMatrix<f64>,
    z: &DVector<f64>,
    model: &FilterModel,
) -> Result<StepRecord> {
    let n = model.state_dim();
    let m = model.measurement_dim();
    if x_prior.len() != n || p_prior.shape() != (n, n) {
        return Err(Error::Dimension("prior does not match model".into()));
    }
    if z.len() != m {
        return Err(Error::Dimension(format!("measurement has length {}, expected {m}", z.len())));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteMeasurement);
    }

    let h = &model.h;
    let innovation = z - h * x_prior;
    let innovation_cov = symmetrize(&(h * p_prior * h.transpose() + &model.r));
    let chol = innovation_cov
        .clone()
        .cholesky()
        .ok_or(Error::SingularInnovation)?;
    if chol.l().diagonal().iter().any(|d| !d.is_finite() || *d <= f64::EPSILON * innovation_cov.amax().sqrt()) {
        return Err(Error::SingularInnovation);
    }
    // S^-1 H P = (P H^T S^-1)^T because P and S are symmetric.
    let gain = chol.solve(&(h * p_prior)).transpose();

    let x_post = x_prior + &gain * &innovation;
    let identity = DMatrix::<f64>::identity(n, n);
    let p_post = symmetrize(&((identity - &gain * h) * p_prior));
    check_psd(&p_post)?;
    let post_fit_residual = z - h * &x_post;

    Ok(StepRecord {
        x_prior: x_prior.clone(),
        p_prior: p_prior.clone(),
        innovation,
        innovation_cov,
        gain,
        x_post,
        p_post,
        post_fit_residual,
    })
}

/// One predict followed by one update.
pub fn step(
    state: &FilterState,
    z: &DVector<f64>,
    model: &FilterModel,
    u: Option<&DVector<f64>>,
) -> Result<(FilterState, StepRecord)> {
    let (x_prior, p_prior) = predict(state, model, u)?;
    let record = update(&x_prior, &p_prior, z, model)?;
    let next = FilterState {
        x: record.x_post.clone(),
        p: record.p_post.clone(),
        k: state.k + 1,
    };
    Ok((next, record))
}

/// Parameters of the scalar local-level filter run over closes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarFilterConfig {
    /// Process-noise variance.
    pub q: f64,
    /// Measurement-noise variance.
    pub r: f64,
    /// Prior variance around the first observed close.
    pub p0: f64,
}

impl Default for ScalarFilterConfig {
    fn default() -> Self {
        ScalarFilterConfig {
            q: 1.0,
            r: 1.0,
            p0: 1e4,
        }
    }
}

/// Scalar view of a [`StepRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarStep {
    pub x_prior: f64,
    pub p_prior: f64,
    pub innovation: f64,
    pub innovation_var: f64,
    pub gain: f64,
    pub x_post: f64,
    pub p_post: f64,
    pub post_fit_residual: f64,
}

impl From<&StepRecord> for ScalarStep {
    fn from(r: &StepRecord) -> Self {
        ScalarStep {
            x_prior: r.x_prior[0],
            p_prior: r.p_prior[(0, 0)],
            innovation: r.innovation[0],
            innovation_var: r.innovation_cov[(0, 0)],
            gain: r.gain[(0, 0)],
            x_post: r.x_post[0],
            p_post: r.p_post[(0, 0)],
            post_fit_residual: r.post_fit_residual[0],
        }
    }
}

/// Runs the local-level filter over `prices`, one record per price.
///
/// The state starts at the first price with variance `p0`.
pub fn filter_series(prices: &[f64], config: &ScalarFilterConfig) -> Result<Vec<ScalarStep>> {
    let first = *prices.first().ok_or(Error::EmptyInput("price series"))?;
    if let Some(bad) = prices.iter().find(|p| !p.is_finite() || **p <= 0.0) {
        return Err(Error::NonPositivePrice {
            close: *bad,
            c_kalman: f64::NAN,
        });
    }
    let model = FilterModel::local_level(config.q, config.r)?;
    let mut state = FilterState::scalar(first, config.p0)?;
    let mut out = Vec::with_capacity(prices.len());
    let mut z = DVector::from_element(1, 0.0);
    for &price in prices {
        z[0] = price;
        let (next, record) = step(&state, &z, &model, None)?;
        out.push(ScalarStep::from(&record));
        state = next;
    }
    Ok(out)
}

/// Limit of the scalar gain `K = (P + q) / (P + q + r)` under the Riccati
/// recursion `P <- (1 - K)(P + q)`.
///
/// The prior variance `M = P + q` settles at the positive root of
/// `M^2 - q M - q r = 0`.
pub fn steady_state_gain(q: f64, r: f64) -> Result<f64> {
    if !(q >= 0.0 && q.is_finite()) || !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidModel(format!("need q >= 0 and r > 0, got q={q}, r={r}")));
    }
    let prior = 0.5 * (q + (q * q + 4.0 * q * r).sqrt());
    Ok(prior / (prior + r))
}
