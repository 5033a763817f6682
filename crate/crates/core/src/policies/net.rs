use std::collections::HashSet;
use std::f64::consts::TAU;

use crate::design::ActionSet;
use crate::error::PolicyError;

/// Largest net the constructor will build.
pub const NET_SIZE_CAP: usize = 1 << 22;

/// Finite subset of the closed unit ball in R^d such that every point of the
/// ball lies within `eps` of some member.
///
/// d = 1 uses a grid of spacing `eps`; d = 2 uses concentric shells with the
/// outer one holding `ceil(2 pi / eps)` equally spaced points; d >= 3 projects
/// a cubic grid of spacing `2 eps / sqrt(d)` onto the ball.
pub fn epsilon_net(d: usize, eps: f64) -> Result<ActionSet, PolicyError> {
    if d == 0 {
        return Err(PolicyError::NetParameter("d must be at least 1".into()));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(PolicyError::NetParameter(format!("eps must lie in (0, 1], got {eps}")));
    }
    let log_size = d as f64 * (1.0 + 2.0 / eps).ln();
    if log_size > (NET_SIZE_CAP as f64).ln() {
        return Err(PolicyError::NetTooLarge {
            log_size,
            cap: NET_SIZE_CAP,
        });
    }
    let rows = match d {
        1 => line(eps),
        2 => disc(eps),
        _ => projected_grid(d, eps),
    };
    Ok(ActionSet::from_rows(rows).expect("net points are finite and distinct"))
}

fn line(eps: f64) -> Vec<Vec<f64>> {
    let j = (1.0 / eps).floor() as i64;
    let mut pts: Vec<f64> = (-j..=j).map(|i| i as f64 * eps).collect();
    if pts[0] > -1.0 {
        pts.insert(0, -1.0);
        pts.push(1.0);
    }
    pts.into_iter().map(|x| vec![x]).collect()
}

fn disc(eps: f64) -> Vec<Vec<f64>> {
    // Shells at radii 1, 1 - eps, 1 - 2 eps, ... plus the origin. A shell of
    // radius r covers radii within eps/2 of it; its angular spacing keeps the
    // tangential error below eps/2 for those radii.
    let mut rows = Vec::new();
    let mut j = 0;
    loop {
        let r = 1.0 - j as f64 * eps;
        if r <= 1e-12 {
            break;
        }
        let count = (TAU * (r + eps / 2.0).min(1.0) / eps).ceil().max(1.0) as usize;
        for i in 0..count {
            let a = TAU * i as f64 / count as f64;
            rows.push(vec![r * a.cos(), r * a.sin()]);
        }
        j += 1;
    }
    rows.push(vec![0.0, 0.0]);
    rows
}

fn projected_grid(d: usize, eps: f64) -> Vec<Vec<f64>> {
    let s = 2.0 * eps / (d as f64).sqrt();
    let reach = 1.0 + eps;
    let r = (reach / s).floor() as i64;
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    let mut idx = vec![0i64; d];

    fn walk(
        level: usize,
        partial: f64,
        idx: &mut Vec<i64>,
        s: f64,
        r: i64,
        reach: f64,
        rows: &mut Vec<Vec<f64>>,
        seen: &mut HashSet<Vec<u64>>,
    ) {
        if level == idx.len() {
            let norm = partial.sqrt();
            let scale = if norm > 1.0 { s / norm } else { s };
            let p: Vec<f64> = idx.iter().map(|&i| i as f64 * scale + 0.0).collect();
            if seen.insert(p.iter().map(|c| c.to_bits()).collect()) {
                rows.push(p);
            }
            return;
        }
        for i in -r..=r {
            let c = i as f64 * s;
            let next = partial + c * c;
            if next <= reach * reach {
                idx[level] = i;
                walk(level + 1, next, idx, s, r, reach, rows, seen);
            }
        }
    }

    walk(0, 0.0, &mut idx, s, r, reach, &mut rows, &mut seen);
    rows
}
