//! Linear-algebra kernel: action sets, designs, information matrices,
//! pseudo-inverses, least squares and the G-optimal design solver.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};

use crate::error::DesignError;

/// Default G-optimal solver tolerance: stop once `g <= (1 + tol) * rank`.
pub const DEFAULT_DESIGN_TOL: f64 = 0.01;
pub const DEFAULT_DESIGN_MAX_ITER: usize = 100_000;

/// A feature vector in R^d.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    coords: Vec<f64>,
}

impl Action {
    pub fn new(coords: Vec<f64>) -> Self {
        Self { coords }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

impl From<Vec<f64>> for Action {
    fn from(coords: Vec<f64>) -> Self {
        Self::new(coords)
    }
}

/// A finite, ordered collection of distinct actions with stable integer ids.
///
/// Ids are strictly increasing. A set built with [`ActionSet::new`] uses ids
/// `0..k`; subsets produced by elimination keep the ids of the original set,
/// so an action can be traced across phases.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSet {
    dim: usize,
    coords: Vec<f64>,
    ids: Vec<usize>,
}

impl ActionSet {
    pub fn new(actions: Vec<Action>) -> Result<Self, DesignError> {
        let rows: Vec<Vec<f64>> = actions.into_iter().map(|a| a.coords).collect();
        Self::from_rows(rows)
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, DesignError> {
        let ids = (0..rows.len()).collect();
        Self::with_ids(rows, ids)
    }

    fn with_ids(rows: Vec<Vec<f64>>, ids: Vec<usize>) -> Result<Self, DesignError> {
        let first = rows.first().ok_or(DesignError::EmptySet)?;
        let dim = first.len();
        if dim == 0 {
            return Err(DesignError::DimensionMismatch {
                index: 0,
                expected: 1,
                got: 0,
            });
        }
        let mut coords = Vec::with_capacity(rows.len() * dim);
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::with_capacity(rows.len());
        for (index, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(DesignError::DimensionMismatch {
                    index,
                    expected: dim,
                    got: row.len(),
                });
            }
            if row.iter().any(|c| !c.is_finite()) {
                return Err(DesignError::NonFinite { index });
            }
            // +0.0 and -0.0 are the same point
            let key: Vec<u64> = row.iter().map(|&c| (c + 0.0).to_bits()).collect();
            if let Some(&prev) = seen.get(&key) {
                return Err(DesignError::Duplicate {
                    first: prev,
                    second: index,
                });
            }
            seen.insert(key, index);
            coords.extend_from_slice(row);
        }
        Ok(Self { dim, coords, ids })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn id(&self, pos: usize) -> usize {
        self.ids[pos]
    }

    /// Coordinates of the action at position `pos`.
    pub fn row(&self, pos: usize) -> &[f64] {
        &self.coords[pos * self.dim..(pos + 1) * self.dim]
    }

    pub fn position_of(&self, id: usize) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    pub fn get(&self, id: usize) -> Option<&[f64]> {
        self.position_of(id).map(|p| self.row(p))
    }

    pub fn contains(&self, id: usize) -> bool {
        self.position_of(id).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> + '_ {
        self.ids
            .iter()
            .zip(self.coords.chunks_exact(self.dim))
            .map(|(&id, c)| (id, c))
    }

    pub fn actions(&self) -> Vec<Action> {
        self.coords
            .chunks_exact(self.dim)
            .map(|c| Action::new(c.to_vec()))
            .collect()
    }

    /// Subset made of the given positions (sorted, no repeats).
    pub fn subset(&self, positions: &[usize]) -> Self {
        debug_assert!(positions.windows(2).all(|w| w[0] < w[1]));
        let mut coords = Vec::with_capacity(positions.len() * self.dim);
        let mut ids = Vec::with_capacity(positions.len());
        for &p in positions {
            coords.extend_from_slice(self.row(p));
            ids.push(self.ids[p]);
        }
        Self {
            dim: self.dim,
            coords,
            ids,
        }
    }

    /// Position of the action maximizing `<x, theta>`; ties go to the lowest id.
    pub fn argmax(&self, theta: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (pos, x) in self.coords.chunks_exact(self.dim).enumerate() {
            let v = dot(x, theta);
            if v > best.1 {
                best = (pos, v);
            }
        }
        best
    }

    pub fn max_norm(&self) -> f64 {
        self.coords
            .chunks_exact(self.dim)
            .map(|c| dot(c, c))
            .fold(0.0, f64::max)
            .sqrt()
    }

    /// `k` actions equally spaced on the unit circle, the first at angle 0.
    pub fn unit_circle(k: usize) -> Result<Self, DesignError> {
        if k == 0 {
            return Err(DesignError::EmptySet);
        }
        let rows = (0..k)
            .map(|j| {
                let a = std::f64::consts::TAU * j as f64 / k as f64;
                vec![a.cos(), a.sin()]
            })
            .collect();
        Self::from_rows(rows)
    }

    /// Standard basis e_1..e_d.
    pub fn standard_basis(d: usize) -> Result<Self, DesignError> {
        let rows = (0..d)
            .map(|i| {
                let mut r = vec![0.0; d];
                r[i] = 1.0;
                r
            })
            .collect();
        Self::from_rows(rows)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A probability distribution over action ids. Only positive weights are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    weights: BTreeMap<usize, f64>,
}

impl Design {
    pub const SUM_TOL: f64 = 1e-9;

    pub fn new(weights: BTreeMap<usize, f64>) -> Result<Self, DesignError> {
        let mut sum = 0.0;
        for (&id, &w) in &weights {
            if !w.is_finite() || !(0.0..=1.0 + Self::SUM_TOL).contains(&w) {
                return Err(DesignError::InvalidDesign(format!(
                    "weight {w} for action {id} outside [0, 1]"
                )));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > Self::SUM_TOL {
            return Err(DesignError::InvalidDesign(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        let weights = weights.into_iter().filter(|&(_, w)| w > 0.0).collect();
        Ok(Self { weights })
    }

    pub fn uniform(set: &ActionSet) -> Self {
        let w = 1.0 / set.len() as f64;
        Self {
            weights: set.ids().iter().map(|&id| (id, w)).collect(),
        }
    }

    pub fn point_mass(id: usize) -> Self {
        Self {
            weights: BTreeMap::from([(id, 1.0)]),
        }
    }

    pub fn weight(&self, id: usize) -> f64 {
        self.weights.get(&id).copied().unwrap_or(0.0)
    }

    pub fn support_size(&self) -> usize {
        self.weights.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights.iter().map(|(&id, &w)| (id, w))
    }

    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }

    /// Builds a design from dense weights indexed by position in `set`.
    fn from_dense(set: &ActionSet, dense: &[f64]) -> Self {
        let sum: f64 = dense.iter().sum();
        let weights = dense
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(pos, &w)| (set.id(pos), w / sum))
            .collect();
        Self { weights }
    }
}

/// `V(pi) = sum_x pi(x) x x^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoMatrix(DMatrix<f64>);

impl InfoMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn rank(&self) -> usize {
        PseudoInverse::of(&self.0).rank
    }
}

pub fn information_matrix(design: &Design, set: &ActionSet) -> Result<InfoMatrix, DesignError> {
    let d = set.dim();
    let mut v = DMatrix::zeros(d, d);
    for (id, w) in design.iter() {
        let x = set.get(id).ok_or(DesignError::UnknownId(id))?;
        add_outer(&mut v, x, w);
    }
    Ok(InfoMatrix(v))
}

fn add_outer(v: &mut DMatrix<f64>, x: &[f64], w: f64) {
    let d = x.len();
    for i in 0..d {
        let wi = w * x[i];
        for j in 0..d {
            v[(i, j)] += wi * x[j];
        }
    }
}

/// `x^T P x` for a symmetric `P`.
#[inline]
fn quad_form(p: &DMatrix<f64>, x: &[f64]) -> f64 {
    let d = x.len();
    let mut s = 0.0;
    for i in 0..d {
        let mut row = 0.0;
        for j in 0..d {
            row += p[(i, j)] * x[j];
        }
        s += x[i] * row;
    }
    s
}

/// `max_x x^T V(pi)^+ x` over the whole set.
pub fn g_value(design: &Design, set: &ActionSet) -> Result<f64, DesignError> {
    let v = information_matrix(design, set)?;
    let pinv = pseudo_inverse(v.matrix());
    Ok((0..set.len())
        .map(|pos| quad_form(&pinv, set.row(pos)))
        .fold(0.0, f64::max))
}

/// Moore-Penrose inverse of a symmetric matrix together with its numerical rank.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub matrix: DMatrix<f64>,
    pub rank: usize,
}

impl PseudoInverse {
    /// Eigenvalues with `|lambda| <= d * eps_machine * |lambda_max|` count as zero.
    pub fn of(m: &DMatrix<f64>) -> Self {
        let d = m.nrows();
        assert_eq!(d, m.ncols(), "pseudo_inverse needs a square matrix");
        if d == 0 {
            return Self {
                matrix: DMatrix::zeros(0, 0),
                rank: 0,
            };
        }
        let sym = (m + m.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let lmax = eig.eigenvalues.iter().fold(0.0_f64, |a, l| a.max(l.abs()));
        let cutoff = d as f64 * f64::EPSILON * lmax;
        let mut out = DMatrix::zeros(d, d);
        let mut rank = 0;
        for (k, &l) in eig.eigenvalues.iter().enumerate() {
            if l.abs() <= cutoff || lmax == 0.0 {
                continue;
            }
            rank += 1;
            let q = eig.eigenvectors.column(k);
            out += (q * q.transpose()) / l;
        }
        Self { matrix: out, rank }
    }
}

pub fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    PseudoInverse::of(m).matrix
}

/// `(X^T X)^+ X^T y`.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>, DesignError> {
    if x.nrows() == 0 || x.nrows() != y.len() {
        return Err(DesignError::BadLeastSquares {
            rows: x.nrows(),
            targets: y.len(),
        });
    }
    let gram = x.transpose() * x;
    let xty = x.transpose() * y;
    Ok(least_squares_gram(&gram, &xty))
}

/// Least squares from accumulated sufficient statistics `X^T X` and `X^T y`.
pub fn least_squares_gram(gram: &DMatrix<f64>, xty: &DVector<f64>) -> DVector<f64> {
    pseudo_inverse(gram) * xty
}

/// Outcome of the G-optimal solver.
#[derive(Debug, Clone)]
pub struct OptimalDesign {
    pub design: Design,
    pub g_value: f64,
    pub rank: usize,
    pub iterations: usize,
}

/// G-optimal design via Frank-Wolfe on `log det V(pi)`.
pub fn solve_g_optimal(set: &ActionSet, tol: f64, max_iter: usize) -> Result<Design, DesignError> {
    solve_g_optimal_detailed(set, tol, max_iter).map(|o| o.design)
}

pub fn solve_g_optimal_detailed(
    set: &ActionSet,
    tol: f64,
    max_iter: usize,
) -> Result<OptimalDesign, DesignError> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(DesignError::InvalidTolerance(tol));
    }
    if set.is_empty() {
        return Err(DesignError::EmptySet);
    }
    let k = set.len();

    let mut weights = vec![0.0; k];
    let basis = spanning_positions(set);
    if basis.is_empty() {
        // every action is the zero vector
        weights[0] = 1.0;
        return Ok(OptimalDesign {
            design: Design::from_dense(set, &weights),
            g_value: 0.0,
            rank: 0,
            iterations: 0,
        });
    }
    for &p in &basis {
        weights[p] = 1.0 / basis.len() as f64;
    }
    let mut support: Vec<usize> = basis.clone();
    let mut v = dense_info(set, &weights, &support);
    let mut scores = vec![0.0; k];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut iterations = 0;

    let (g, rank) = loop {
        let pinv = PseudoInverse::of(&v);
        let r = pinv.rank as f64;
        let (jmax, g) = max_score(set, &pinv.matrix, &mut scores);
        if best.as_ref().is_none_or(|(bg, _)| g < *bg) {
            best = Some((g, weights.clone()));
        }
        if g <= (1.0 + tol) * r {
            break (g, pinv.rank);
        }
        if iterations >= max_iter {
            let (bg, bw) = best.expect("at least one iterate");
            return Err(DesignError::NotConverged {
                iterations,
                g_value: bg,
                target: (1.0 + tol) * r,
                best: Box::new(Design::from_dense(set, &bw)),
            });
        }
        // exact line search for log det along the vertex direction
        let gamma = ((g - r) / (r * (g - 1.0))).clamp(0.0, 1.0);
        for w in weights.iter_mut() {
            *w *= 1.0 - gamma;
        }
        if weights[jmax] == 0.0 {
            support.push(jmax);
        }
        weights[jmax] += gamma;
        iterations += 1;
        if iterations % 64 == 0 {
            renormalize(&mut weights);
            v = dense_info(set, &weights, &support);
        } else {
            v *= 1.0 - gamma;
            add_outer(&mut v, set.row(jmax), gamma);
        }
    };
    renormalize(&mut weights);

    let target = (1.0 + tol) * rank as f64;
    let (weights, g) = prune_small(set, weights, g, target);
    let (weights, g) = reduce_support(set, weights, g, target);
    Ok(OptimalDesign {
        design: Design::from_dense(set, &weights),
        g_value: g,
        rank,
        iterations,
    })
}

fn renormalize(weights: &mut [f64]) {
    let s: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= s;
    }
}

fn dense_info(set: &ActionSet, weights: &[f64], support: &[usize]) -> DMatrix<f64> {
    let d = set.dim();
    let mut v = DMatrix::zeros(d, d);
    for &p in support {
        if weights[p] > 0.0 {
            add_outer(&mut v, set.row(p), weights[p]);
        }
    }
    v
}

fn max_score(set: &ActionSet, pinv: &DMatrix<f64>, scores: &mut [f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (pos, s) in scores.iter_mut().enumerate() {
        *s = quad_form(pinv, set.row(pos));
        if *s > best.1 {
            best = (pos, *s);
        }
    }
    best
}

fn g_of_dense(set: &ActionSet, weights: &[f64]) -> f64 {
    let support: Vec<usize> = (0..weights.len()).filter(|&p| weights[p] > 0.0).collect();
    let v = dense_info(set, weights, &support);
    let pinv = pseudo_inverse(&v);
    (0..set.len())
        .map(|p| quad_form(&pinv, set.row(p)))
        .fold(0.0, f64::max)
}

/// Greedy Gram-Schmidt selection of actions spanning the set's span.
fn spanning_positions(set: &ActionSet) -> Vec<usize> {
    let d = set.dim();
    let scale = set.max_norm();
    if scale == 0.0 {
        return Vec::new();
    }
    let thresh = 1e-9 * scale;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut chosen = Vec::with_capacity(d);
    let mut residual: Vec<f64> = set.coords.clone();
    while chosen.len() < d {
        let (mut best_pos, mut best_norm) = (usize::MAX, thresh);
        for pos in 0..set.len() {
            let r = &residual[pos * d..(pos + 1) * d];
            let n = dot(r, r).sqrt();
            if n > best_norm {
                best_norm = n;
                best_pos = pos;
            }
        }
        if best_pos == usize::MAX {
            break;
        }
        let q: Vec<f64> = residual[best_pos * d..(best_pos + 1) * d]
            .iter()
            .map(|c| c / best_norm)
            .collect();
        for pos in 0..set.len() {
            let r = &mut residual[pos * d..(pos + 1) * d];
            let proj = dot(r, &q);
            for (ri, qi) in r.iter_mut().zip(&q) {
                *ri -= proj * qi;
            }
        }
        basis.push(q);
        chosen.push(best_pos);
    }
    chosen.sort_unstable();
    chosen
}

/// Drops weights below `1e-6 / k`; keeps the pruned design only if it still meets the target.
fn prune_small(set: &ActionSet, weights: Vec<f64>, g: f64, target: f64) -> (Vec<f64>, f64) {
    let cut = 1e-6 / set.len() as f64;
    if !weights.iter().any(|&w| w > 0.0 && w < cut) {
        return (weights, g);
    }
    let mut pruned: Vec<f64> = weights.iter().map(|&w| if w < cut { 0.0 } else { w }).collect();
    renormalize(&mut pruned);
    let pg = g_of_dense(set, &pruned);
    if pg <= target {
        (pruned, pg)
    } else {
        (weights, g)
    }
}

/// Caratheodory reduction on the moment vectors `vec(x x^T)`.
///
/// While the support exceeds `d(d+1)/2`, some `d(d+1)/2 + 1` support points
/// have linearly dependent moment vectors; moving along that dependency with
/// non-positive total mass keeps `V` fixed up to a factor `<= 1`, so `g` never
/// increases, and zeroes out one weight.
fn reduce_support(set: &ActionSet, mut weights: Vec<f64>, g: f64, target: f64) -> (Vec<f64>, f64) {
    let d = set.dim();
    let dm = d * (d + 1) / 2;
    let original = weights.clone();
    loop {
        let support: Vec<usize> = (0..weights.len()).filter(|&p| weights[p] > 0.0).collect();
        if support.len() <= dm {
            break;
        }
        // smallest weights first, so the dropped point tends to be a light one
        let mut cand = support.clone();
        cand.sort_by(|&a, &b| weights[a].total_cmp(&weights[b]).then(a.cmp(&b)));
        cand.truncate(dm + 1);
        let n = dm + 1;
        let mut mom = DMatrix::zeros(n, n);
        for (col, &p) in cand.iter().enumerate() {
            let x = set.row(p);
            let mut row = 0;
            for i in 0..d {
                for j in i..d {
                    mom[(row, col)] = x[i] * x[j];
                    row += 1;
                }
            }
        }
        let svd = mom.svd(false, true);
        let v_t = svd.v_t.expect("requested V^T");
        let (kmin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        let mut c: Vec<f64> = v_t.row(kmin).iter().copied().collect();
        if c.iter().sum::<f64>() > 0.0 {
            c.iter_mut().for_each(|ci| *ci = -*ci);
        }
        let mut step = f64::INFINITY;
        let mut hit = usize::MAX;
        for (i, &ci) in c.iter().enumerate() {
            if ci < 0.0 {
                let t = weights[cand[i]] / -ci;
                if t < step {
                    step = t;
                    hit = i;
                }
            }
        }
        if hit == usize::MAX {
            break;
        }
        for (i, &ci) in c.iter().enumerate() {
            let w = &mut weights[cand[i]];
            *w = (*w + step * ci).max(0.0);
        }
        weights[cand[hit]] = 0.0;
        renormalize(&mut weights);
    }
    let reduced_g = g_of_dense(set, &weights);
    if reduced_g <= target.max(g) * (1.0 + 1e-9) {
        (weights, reduced_g)
    } else {
        (original, g)
    }
}
