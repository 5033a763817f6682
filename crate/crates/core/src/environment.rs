//! Heterogeneous population model, sampled instances, noisy rewards and the
//! collaborative-to-personal switch threshold.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::design::{dot, ActionSet};
use crate::error::EnvError;

const PSD_TOL: f64 = 1e-10;

/// Distribution family of `theta_i - mu`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[default]
    Gaussian,
    /// Uniform on `[-sqrt 3, sqrt 3]^d` mapped through the covariance factor,
    /// so the covariance matches `C` and the law is sub-Gaussian.
    SubgaussianUniform,
}

#[derive(Debug, Clone)]
pub struct PopulationModel {
    mu: DVector<f64>,
    cov: DMatrix<f64>,
    factor: DMatrix<f64>,
    sigma0: f64,
    family: Family,
}

impl PopulationModel {
    pub fn new(
        mu: DVector<f64>,
        cov: DMatrix<f64>,
        sigma0: f64,
        family: Family,
    ) -> Result<Self, EnvError> {
        let d = mu.len();
        if d == 0 {
            return Err(EnvError::Dimension("mu must be non-empty".into()));
        }
        if cov.shape() != (d, d) {
            return Err(EnvError::Dimension(format!(
                "covariance is {}x{}, mu has length {d}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if !(sigma0 > 0.0) || !sigma0.is_finite() {
            return Err(EnvError::InvalidParameter(format!(
                "sigma0 must be positive, got {sigma0}"
            )));
        }
        if mu.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(EnvError::InvalidParameter("non-finite mu or covariance".into()));
        }
        let factor = psd_sqrt(&cov)?;
        Ok(Self {
            mu,
            cov,
            factor,
            sigma0,
            family,
        })
    }

    /// `C = sigma^2 I`.
    pub fn isotropic(mu: Vec<f64>, sigma: f64, sigma0: f64) -> Result<Self, EnvError> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(EnvError::InvalidParameter(format!(
                "sigma must be >= 0, got {sigma}"
            )));
        }
        let d = mu.len();
        Self::new(
            DVector::from_vec(mu),
            DMatrix::identity(d, d) * (sigma * sigma),
            sigma0,
            Family::Gaussian,
        )
    }

    pub fn with_family(mut self, family: Family) -> Self {
        self.family = family;
        self
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    pub fn family(&self) -> Family {
        self.family
    }
}

/// Symmetric square root of a PSD matrix.
fn psd_sqrt(c: &DMatrix<f64>) -> Result<DMatrix<f64>, EnvError> {
    let asym = (c - c.transpose()).abs().max();
    if asym > PSD_TOL {
        return Err(EnvError::NotPsd(format!("asymmetry {asym:e}")));
    }
    let d = c.nrows();
    if c.iter().all(|&v| v == 0.0) {
        return Ok(DMatrix::zeros(d, d));
    }
    let eig = ((c + c.transpose()) * 0.5).symmetric_eigen();
    let mut root = DMatrix::zeros(d, d);
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l < -PSD_TOL {
            return Err(EnvError::NotPsd(format!("eigenvalue {l:e}")));
        }
        if l > 0.0 {
            let q = eig.eigenvectors.column(k);
            root += (q * q.transpose()) * l.sqrt();
        }
    }
    Ok(root)
}

/// One realization of the agents' parameters with their optimal actions.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    thetas: Vec<Vec<f64>>,
    optimal_values: Vec<f64>,
    optimal_ids: Vec<usize>,
}

impl Instance {
    /// Computes every agent's optimum by enumeration over `actions`.
    pub fn from_thetas(thetas: Vec<Vec<f64>>, actions: &ActionSet) -> Result<Self, EnvError> {
        if thetas.is_empty() {
            return Err(EnvError::InvalidParameter("instance needs at least one agent".into()));
        }
        let mut optimal_values = Vec::with_capacity(thetas.len());
        let mut optimal_ids = Vec::with_capacity(thetas.len());
        for (i, theta) in thetas.iter().enumerate() {
            if theta.len() != actions.dim() {
                return Err(EnvError::Dimension(format!(
                    "theta {i} has length {}, actions have dimension {}",
                    theta.len(),
                    actions.dim()
                )));
            }
            let (pos, value) = actions.argmax(theta);
            optimal_values.push(value);
            optimal_ids.push(actions.id(pos));
        }
        Ok(Self {
            thetas,
            optimal_values,
            optimal_ids,
        })
    }

    pub fn m(&self) -> usize {
        self.thetas.len()
    }

    pub fn dim(&self) -> usize {
        self.thetas[0].len()
    }

    pub fn thetas(&self) -> &[Vec<f64>] {
        &self.thetas
    }

    pub fn theta(&self, agent: usize) -> &[f64] {
        &self.thetas[agent]
    }

    pub fn optimal_value(&self, agent: usize) -> f64 {
        self.optimal_values[agent]
    }

    pub fn optimal_values(&self) -> &[f64] {
        &self.optimal_values
    }

    pub fn optimal_id(&self, agent: usize) -> usize {
        self.optimal_ids[agent]
    }

    pub fn optimal_ids(&self) -> &[usize] {
        &self.optimal_ids
    }

    /// `<x_i*, theta_i> - <x, theta_i>`; exactly non-negative for actions of the instance's set.
    #[inline]
    pub fn gap(&self, agent: usize, action: &[f64]) -> f64 {
        self.optimal_values[agent] - dot(action, &self.thetas[agent])
    }

    /// Single-agent view used when agents are run separately.
    pub fn agent(&self, agent: usize) -> Instance {
        Instance {
            thetas: vec![self.thetas[agent].clone()],
            optimal_values: vec![self.optimal_values[agent]],
            optimal_ids: vec![self.optimal_ids[agent]],
        }
    }
}

/// Draws `theta_i = mu + L z_i` for `m` agents.
pub fn sample_instance<R: Rng + ?Sized>(
    model: &PopulationModel,
    m: usize,
    actions: &ActionSet,
    rng: &mut R,
) -> Result<Instance, EnvError> {
    if m == 0 {
        return Err(EnvError::InvalidParameter("m must be at least 1".into()));
    }
    let d = model.dim();
    if actions.dim() != d {
        return Err(EnvError::Dimension(format!(
            "actions have dimension {}, population has {d}",
            actions.dim()
        )));
    }
    let root3 = 3f64.sqrt();
    let uniform = Uniform::new_inclusive(-root3, root3).expect("valid bounds");
    let mut thetas = Vec::with_capacity(m);
    for _ in 0..m {
        let z: DVector<f64> = match model.family {
            Family::Gaussian => DVector::from_fn(d, |_, _| StandardNormal.sample(rng)),
            Family::SubgaussianUniform => DVector::from_fn(d, |_, _| uniform.sample(rng)),
        };
        let theta = &model.mu + &model.factor * z;
        thetas.push(theta.iter().copied().collect());
    }
    Instance::from_thetas(thetas, actions)
}

/// `<action, theta> + N(0, sigma0^2)`.
#[inline]
pub fn reward<R: Rng + ?Sized>(theta: &[f64], action: &[f64], sigma0: f64, rng: &mut R) -> f64 {
    let noise: f64 = StandardNormal.sample(rng);
    dot(action, theta) + sigma0 * noise
}

/// Stage-switch threshold
/// `h = sqrt(2 s log(4k/delta)) + sqrt((2/m) s log(4k/delta))` with `s = max_x x^T C x`.
pub fn h_threshold(
    actions: &ActionSet,
    cov: &DMatrix<f64>,
    m: usize,
    k: usize,
    delta: f64,
) -> Result<f64, EnvError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(EnvError::InvalidParameter(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if m == 0 || k == 0 {
        return Err(EnvError::InvalidParameter("m and k must be positive".into()));
    }
    let d = actions.dim();
    if cov.shape() != (d, d) {
        return Err(EnvError::Dimension(format!(
            "covariance is {}x{}, actions have dimension {d}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    let spread = actions
        .iter()
        .map(|(_, x)| {
            let v = DVector::from_column_slice(x);
            (v.transpose() * cov * &v)[(0, 0)]
        })
        .fold(0.0, f64::max);
    let base = 2.0 * spread * (4.0 * k as f64 / delta).ln();
    Ok(base.sqrt() + (base / m as f64).sqrt())
}
