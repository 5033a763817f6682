use std::collections::BTreeMap;

use super::config::Algorithm;
use crate::design::ActionSet;
use crate::environment::Instance;
use crate::error::HarnessError;

/// Cumulative joint pseudo-regret of one algorithm on one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub algorithm: Algorithm,
    pub rep: usize,
    pub cumulative: Vec<f64>,
}

impl RegretTrace {
    /// Checks that the trace is non-empty, finite, starts non-negative and never decreases.
    pub fn new(algorithm: Algorithm, rep: usize, cumulative: Vec<f64>) -> Result<Self, HarnessError> {
        if cumulative.is_empty() {
            return Err(HarnessError::Validation(format!("{algorithm} rep {rep}: empty trace")));
        }
        if cumulative.iter().any(|v| !v.is_finite()) || cumulative[0] < 0.0 {
            return Err(HarnessError::Validation(format!(
                "{algorithm} rep {rep}: trace must be finite and start >= 0"
            )));
        }
        if let Some(t) = cumulative.windows(2).position(|w| w[1] < w[0]) {
            return Err(HarnessError::Validation(format!(
                "{algorithm} rep {rep}: trace decreases at round {}",
                t + 2
            )));
        }
        Ok(Self {
            algorithm,
            rep,
            cumulative,
        })
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    pub fn last(&self) -> f64 {
        *self.cumulative.last().expect("non-empty")
    }
}

/// `sum_i (<x_i*, theta_i> - <x_(i,t), theta_i>)` for one synchronized round
/// given as `(agent, action id)` pairs.
pub fn joint_pseudo_regret_increment(
    instance: &Instance,
    actions: &ActionSet,
    pulls: &[(usize, usize)],
) -> Result<f64, HarnessError> {
    let m = instance.m();
    let mut seen = vec![false; m];
    let mut total = 0.0;
    for &(agent, id) in pulls {
        if agent >= m || std::mem::replace(&mut seen[agent], true) {
            return Err(HarnessError::Accounting(format!(
                "agent {agent} is unknown or appears twice in the round"
            )));
        }
        let x = actions
            .get(id)
            .ok_or_else(|| HarnessError::Accounting(format!("unknown action id {id}")))?;
        total += instance.gap(agent, x);
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(HarnessError::Accounting(format!("agent {missing} did not play this round")));
    }
    Ok(total)
}

/// Pointwise mean and population standard deviation of one algorithm's traces.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryStats {
    pub m: usize,
    /// Whether `mean` and `std` were divided by `m`.
    pub normalized: bool,
    pub series: BTreeMap<Algorithm, Series>,
}

impl SummaryStats {
    pub fn get(&self, algorithm: Algorithm) -> Option<&Series> {
        self.series.get(&algorithm)
    }
}

/// Groups traces by algorithm and reduces them in replication order, so the
/// result does not depend on the order of `traces`.
pub fn aggregate(traces: &[RegretTrace], m: usize, normalize: bool) -> Result<SummaryStats, HarnessError> {
    if m == 0 {
        return Err(HarnessError::Validation("m must be at least 1".into()));
    }
    let mut groups: BTreeMap<Algorithm, Vec<&RegretTrace>> = BTreeMap::new();
    for t in traces {
        groups.entry(t.algorithm).or_default().push(t);
    }
    let scale = if normalize { 1.0 / m as f64 } else { 1.0 };
    let mut series = BTreeMap::new();
    for (alg, mut group) in groups {
        group.sort_by_key(|t| t.rep);
        let len = group[0].len();
        if let Some(bad) = group.iter().find(|t| t.len() != len) {
            return Err(HarnessError::Validation(format!(
                "{alg}: rep {} has {} rounds, rep {} has {len}",
                bad.rep,
                bad.len(),
                group[0].rep
            )));
        }
        let r = group.len() as f64;
        let mut mean = vec![0.0; len];
        let mut std = vec![0.0; len];
        for t in 0..len {
            let mu = group.iter().map(|g| g.cumulative[t]).sum::<f64>() / r;
            let var = group
                .iter()
                .map(|g| (g.cumulative[t] - mu).powi(2))
                .sum::<f64>()
                / r;
            mean[t] = mu * scale;
            std[t] = var.sqrt() * scale;
        }
        series.insert(
            alg,
            Series {
                mean,
                std,
                reps: group.len(),
            },
        );
    }
    Ok(SummaryStats {
        m,
        normalized: normalize,
        series,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination; 1 when the data are fitted exactly.
    pub r2: f64,
}

/// Ordinary least-squares line through `(xs, ys)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit, HarnessError> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(HarnessError::Validation(format!(
            "linear fit needs two or more paired points, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(HarnessError::Validation("linear fit needs distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(LinearFit { slope, intercept, r2 })
}

/// Fit of `mean` against the round index over its last `window_fraction` of rounds.
pub fn final_fit(mean: &[f64], window_fraction: f64) -> Result<LinearFit, HarnessError> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(HarnessError::Validation(format!(
            "window fraction must lie in (0, 1], got {window_fraction}"
        )));
    }
    let len = mean.len();
    let w = ((len as f64 * window_fraction).ceil() as usize).clamp(2.min(len), len);
    let start = len - w;
    let xs: Vec<f64> = (start + 1..=len).map(|t| t as f64).collect();
    linear_fit(&xs, &mean[start..])
}

/// Least-squares slope of `mean` over its last `window_fraction` of rounds.
pub fn final_slope(mean: &[f64], window_fraction: f64) -> Result<f64, HarnessError> {
    final_fit(mean, window_fraction).map(|f| f.slope)
}
