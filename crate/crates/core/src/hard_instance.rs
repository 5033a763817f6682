//! Rotated-hypercube hard instances used by the minimax lower-bound construction.
//!
//! A base vector `theta0 ~ N(0, sigma^2 I)` is drawn conditioned on its norm
//! falling in `[sigma sqrt(d/2), sigma sqrt(3d/2)]`. The `2^(d-1)` vertices sit
//! on the cone of half-angle `eta` around `theta0`, aligned with a random
//! orthonormal basis of the hyperplane orthogonal to `theta0`. Only the
//! vertices after the rotation that sends `theta0` to the first axis are
//! exposed.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::design::dot;
use crate::error::EnvError;

pub const REJECTION_CAP: usize = 10_000;
const MAX_DIM: usize = 24;

/// Scaling regime of the heterogeneity level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HardRegime {
    /// `sigma = c1 sqrt(d) n^(-1/2 + alpha)`, `alpha` in `[0, 1]`.
    DataRich { alpha: f64 },
    /// `sigma = c1 sqrt(d) m^(-gamma) n^(-1/2)`, `gamma` in `[0, 1/2]`.
    Middle { gamma: f64, m: usize },
}

impl HardRegime {
    /// The exponent parameter (`alpha` or `gamma`).
    pub fn exponent(&self) -> f64 {
        match *self {
            HardRegime::DataRich { alpha } => alpha,
            HardRegime::Middle { gamma, .. } => gamma,
        }
    }

    /// Factor multiplying `c1 sqrt(d)` in sigma, and `c_3 d` in the norm of theta0.
    fn norm_scale(&self, n: f64) -> f64 {
        match *self {
            HardRegime::DataRich { alpha } => n.powf(-0.5 + alpha),
            HardRegime::Middle { gamma, m } => (m as f64).powf(-gamma) / n.sqrt(),
        }
    }

    /// Factor multiplying `c4 sqrt(d)` in the off-axis vertex coordinates.
    fn edge_scale(&self, n: f64) -> f64 {
        match *self {
            HardRegime::DataRich { alpha } => n.powf(-0.5 + alpha / 2.0),
            HardRegime::Middle { gamma, m } => (m as f64).powf(-gamma) / n.sqrt(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HardInstance {
    d: usize,
    n: u64,
    regime: HardRegime,
    theta0: Vec<f64>,
    theta0_norm: f64,
    eta: f64,
    sigma: f64,
    c1: f64,
    c3: f64,
    c4: f64,
    offset: f64,
    vertices: Vec<Vec<f64>>,
    #[cfg_attr(not(test), allow(dead_code))]
    unrotated: Vec<Vec<f64>>,
}

impl HardInstance {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn regime(&self) -> HardRegime {
        self.regime
    }

    pub fn theta0(&self) -> &[f64] {
        &self.theta0
    }

    pub fn theta0_norm(&self) -> f64 {
        self.theta0_norm
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c3(&self) -> f64 {
        self.c3
    }

    pub fn c4(&self) -> f64 {
        self.c4
    }

    pub fn alpha_or_gamma(&self) -> f64 {
        self.regime.exponent()
    }

    /// Rotated vertices, indexed so that bit `l` of the index is set iff `z_(l+2) = -1`.
    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    /// Sign pattern `z in {+1, -1}^(d-1)` of vertex `index`.
    pub fn signs(&self, index: usize) -> Vec<i8> {
        (0..self.d - 1)
            .map(|l| if index >> l & 1 == 1 { -1 } else { 1 })
            .collect()
    }

    pub fn vertex(&self, z: &[i8]) -> Option<&[f64]> {
        if z.len() != self.d - 1 {
            return None;
        }
        let mut index = 0;
        for (l, &s) in z.iter().enumerate() {
            match s {
                1 => {}
                -1 => index |= 1 << l,
                _ => return None,
            }
        }
        Some(&self.vertices[index])
    }

    /// Magnitude `c4 sqrt(d) * edge_scale` of every off-axis vertex coordinate.
    pub fn coordinate_offset(&self) -> f64 {
        self.offset
    }

    /// Distance between vertices whose sign patterns differ in one coordinate.
    pub fn neighbor_distance(&self) -> f64 {
        2.0 * self.offset
    }
}

/// Data-rich construction with `sigma = c1 sqrt(d) n^(-1/2 + alpha)`.
pub fn hard_instance_hypercube<R: Rng + ?Sized>(
    d: usize,
    n: u64,
    alpha: f64,
    c1: f64,
    rng: &mut R,
) -> Result<HardInstance, EnvError> {
    hard_instance(d, n, HardRegime::DataRich { alpha }, c1, rng)
}

pub fn hard_instance<R: Rng + ?Sized>(
    d: usize,
    n: u64,
    regime: HardRegime,
    c1: f64,
    rng: &mut R,
) -> Result<HardInstance, EnvError> {
    if !(2..=MAX_DIM).contains(&d) {
        return Err(EnvError::InvalidParameter(format!(
            "d must lie in 2..={MAX_DIM}, got {d}"
        )));
    }
    if n == 0 {
        return Err(EnvError::InvalidParameter("n must be positive".into()));
    }
    if !(c1 > 0.0) || !c1.is_finite() {
        return Err(EnvError::InvalidParameter(format!("c1 must be positive, got {c1}")));
    }
    match regime {
        HardRegime::DataRich { alpha } if !(0.0..=1.0).contains(&alpha) => {
            return Err(EnvError::InvalidParameter(format!(
                "alpha must lie in [0, 1], got {alpha}"
            )));
        }
        HardRegime::Middle { gamma, m } if !(0.0..=0.5).contains(&gamma) || m == 0 => {
            return Err(EnvError::InvalidParameter(format!(
                "gamma must lie in [0, 1/2] and m >= 1, got gamma={gamma}, m={m}"
            )));
        }
        _ => {}
    }

    let nf = n as f64;
    let df = d as f64;
    let norm_scale = regime.norm_scale(nf);
    let sigma = c1 * df.sqrt() * norm_scale;
    let lo = c1 * 2f64.sqrt() / 2.0 * df * norm_scale;
    let hi = c1 * 6f64.sqrt() / 2.0 * df * norm_scale;

    let mut theta0 = None;
    for _ in 0..REJECTION_CAP {
        let draw: Vec<f64> = (0..d)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut *rng);
                sigma * z
            })
            .collect();
        let norm = dot(&draw, &draw).sqrt();
        if (lo..=hi).contains(&norm) {
            theta0 = Some((draw, norm));
            break;
        }
    }
    let (theta0, theta0_norm) = theta0.ok_or(EnvError::RejectionCap(REJECTION_CAP))?;

    let c3 = theta0_norm / (df * norm_scale);
    let c4 = (c1 * 2f64.sqrt() / 2.0).min((c1 / (6.0 * 2f64.sqrt())).sqrt());
    let edge = regime.edge_scale(nf);
    let sin_eta = c4 * (df * (df - 1.0)).sqrt() * edge / theta0_norm;
    if !(sin_eta > 0.0 && sin_eta < 1.0) {
        return Err(EnvError::InvalidParameter(format!(
            "cone angle undefined: sin(eta) = {sin_eta}"
        )));
    }
    let eta = sin_eta.asin();

    // W has rows u0 = theta0/|theta0| and a Haar-random orthonormal basis of u0's complement
    let u0: Vec<f64> = theta0.iter().map(|v| v / theta0_norm).collect();
    let mut frame = vec![u0];
    while frame.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut *rng)).collect();
        for q in &frame {
            let p = dot(&v, q);
            v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= p * qi);
        }
        let norm = dot(&v, &v).sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|vi| *vi /= norm);
        frame.push(v);
    }

    let axial = theta0_norm * eta.cos();
    let radial = theta0_norm * sin_eta / (df - 1.0).sqrt();
    let count = 1usize << (d - 1);
    let mut unrotated = Vec::with_capacity(count);
    let mut vertices = Vec::with_capacity(count);
    for index in 0..count {
        let mut v: Vec<f64> = frame[0].iter().map(|u| axial * u).collect();
        for l in 0..d - 1 {
            let z = if index >> l & 1 == 1 { -1.0 } else { 1.0 };
            v.iter_mut()
                .zip(&frame[l + 1])
                .for_each(|(vi, bi)| *vi += z * radial * bi);
        }
        let rotated: Vec<f64> = frame.iter().map(|row| dot(row, &v)).collect();
        unrotated.push(v);
        vertices.push(rotated);
    }

    Ok(HardInstance {
        d,
        n,
        regime,
        theta0,
        theta0_norm,
        eta,
        sigma,
        c1,
        c3,
        c4,
        offset: c4 * df.sqrt() * edge,
        vertices,
        unrotated,
    })
}
