//! Multi-objective machinery: Pareto dominance and archive maintenance, the
//! min-norm multiple-gradient direction, surrogate objective gradients in
//! embedding space, gradient-aligned candidate selection, the two best-model
//! rules (weighted-gradient-magnitude and weighted-sum) and 2-D hypervolume.
//!
//! Everything here uses the minimization convention: for two objectives,
//! f₁ is normalized energy and f₂ the negated accuracy-like score.

use crate::error::{Error, Result};
use crate::space::ArchId;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// A model's position in minimization space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectivePoint {
    pub f: Vec<f64>,
}

impl ObjectivePoint {
    pub fn new(f: Vec<f64>) -> Self {
        Self { f }
    }
    pub fn dim(&self) -> usize {
        self.f.len()
    }
}

/// p dominates q iff p ≤ q componentwise and p < q somewhere.
pub fn dominates(p: &ObjectivePoint, q: &ObjectivePoint) -> Result<bool> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch(format!("{} vs {}", p.dim(), q.dim())));
    }
    let mut strict = false;
    for (a, b) in p.f.iter().zip(&q.f) {
        if a > b {
            return Ok(false);
        }
        if a < b {
            strict = true;
        }
    }
    Ok(strict)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Estimated,
    Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub arch_id: ArchId,
    pub point: ObjectivePoint,
    pub provenance: Provenance,
}

/// All known entries plus the current front: the maximal non-dominated
/// subset of the measured entries. The front is recomputed from scratch on
/// update, so it is independent of insertion order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParetoArchive {
    pub entries: Vec<ArchiveEntry>,
    front_ids: Vec<ArchId>,
}

impl ParetoArchive {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert measured entries and rebuild the front.
    pub fn update_front(&mut self, new_entries: Vec<ArchiveEntry>) -> Result<()> {
        for e in new_entries {
            if e.provenance != Provenance::Measured {
                return Err(Error::Data("front updates require measured provenance".into()));
            }
            self.entries.push(e);
        }
        self.rebuild_front()
    }

    pub fn push_estimated(&mut self, entry: ArchiveEntry) {
        self.entries.push(entry);
    }

    fn rebuild_front(&mut self) -> Result<()> {
        let measured: Vec<&ArchiveEntry> = self
            .entries
            .iter()
            .filter(|e| e.provenance == Provenance::Measured)
            .collect();
        let mut front = Vec::new();
        'outer: for (i, e) in measured.iter().enumerate() {
            for (j, other) in measured.iter().enumerate() {
                if i != j && dominates(&other.point, &e.point)? {
                    continue 'outer;
                }
            }
            front.push(e.arch_id);
        }
        front.sort();
        front.dedup();
        self.front_ids = front;
        Ok(())
    }

    pub fn front_ids(&self) -> &[ArchId] {
        &self.front_ids
    }

    pub fn front_entries(&self) -> Vec<&ArchiveEntry> {
        self.entries
            .iter()
            .filter(|e| e.provenance == Provenance::Measured && self.front_ids.contains(&e.arch_id))
            .collect()
    }
}

/// Search weights ws applied to the min-norm solution λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchWeights {
    pub ws: Vec<f64>,
}

impl SearchWeights {
    pub fn new(ws: Vec<f64>) -> Result<Self> {
        if ws.iter().any(|&w| w.is_nan() || w <= 0.0) {
            return Err(Error::Config("search weights must be positive".into()));
        }
        Ok(Self { ws })
    }
}

/// Model-selection weights wd, one per objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionWeights {
    pub wd: Vec<f64>,
}

impl SelectionWeights {
    pub fn new(wd: Vec<f64>) -> Result<Self> {
        if wd.iter().any(|&w| w.is_nan() || w <= 0.0) {
            return Err(Error::Config("selection weights must be positive".into()));
        }
        Ok(Self { wd })
    }
}

/// Per-objective gradients, the min-norm convex weights λ, the ws-reweighted
/// λ̃ and the combined direction d* = Σ λ̃ᵢ gᵢ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBundle {
    pub gradients: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub lambda_tilde: Vec<f64>,
    pub d_star: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn combine(gradients: &[Vec<f64>], lambda: &[f64]) -> Vec<f64> {
    let dim = gradients[0].len();
    let mut out = vec![0.0; dim];
    for (g, &l) in gradients.iter().zip(lambda) {
        for (o, &v) in out.iter_mut().zip(g) {
            *o += l * v;
        }
    }
    out
}

fn norm_sq(v: &[f64]) -> f64 {
    dot(v, v)
}

/// Closed-form min-norm solution for two gradients.
fn min_norm_two(g1: &[f64], g2: &[f64]) -> Vec<f64> {
    let diff: Vec<f64> = g1.iter().zip(g2).map(|(a, b)| a - b).collect();
    let denom = norm_sq(&diff);
    if denom == 0.0 {
        return vec![0.5, 0.5];
    }
    // λ1 = clamp(⟨g2 − g1, g2⟩ / ‖g1 − g2‖², 0, 1)
    let num: f64 = g2.iter().zip(g1).map(|(b, a)| (b - a) * b).sum();
    let lambda1 = (num / denom).clamp(0.0, 1.0);
    vec![lambda1, 1.0 - lambda1]
}

const FRANK_WOLFE_GAP: f64 = 1e-8;
const FRANK_WOLFE_MAX_ITERS: usize = 200_000;

/// Frank-Wolfe with away steps on the simplex for m > 2: minimize
/// ‖Σ λᵢ gᵢ‖² until the duality gap drops below 1e-8. Away steps give
/// linear convergence where the plain method zig-zags near a face.
fn min_norm_frank_wolfe(gradients: &[Vec<f64>]) -> Vec<f64> {
    let m = gradients.len();
    // Gram matrix of the gradients.
    let gram: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| dot(&gradients[i], &gradients[j])).collect())
        .collect();
    let mut lambda = vec![1.0 / m as f64; m];
    for _ in 0..FRANK_WOLFE_MAX_ITERS {
        // grad(λ) = 2·Gram·λ
        let grad: Vec<f64> = (0..m).map(|i| 2.0 * dot(&gram[i], &lambda)).collect();
        let j = grad
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let gap = dot(&grad, &lambda) - grad[j];
        if gap <= FRANK_WOLFE_GAP {
            break;
        }
        // Away vertex: the supported coordinate with the steepest ascent.
        let a = (0..m)
            .filter(|&i| lambda[i] > 0.0)
            .max_by(|&x, &y| grad[x].partial_cmp(&grad[y]).unwrap())
            .unwrap();
        let away_gap = grad[a] - dot(&grad, &lambda);
        // Pick the toward step e_j − λ or the away step λ − e_a, whichever
        // makes more first-order progress.
        let (dir, t_max): (Vec<f64>, f64) = if gap >= away_gap {
            (
                (0..m)
                    .map(|i| (if i == j { 1.0 } else { 0.0 }) - lambda[i])
                    .collect(),
                1.0,
            )
        } else {
            let t_max = lambda[a] / (1.0 - lambda[a]).max(f64::MIN_POSITIVE);
            (
                (0..m)
                    .map(|i| lambda[i] - if i == a { 1.0 } else { 0.0 })
                    .collect(),
                t_max,
            )
        };
        // Exact line search along dir, capped at the simplex boundary.
        let g_dir_sq: f64 = (0..m)
            .map(|i| dir[i] * (0..m).map(|k| gram[i][k] * dir[k]).sum::<f64>())
            .sum();
        if g_dir_sq <= 0.0 {
            break;
        }
        let g_lambda_dir: f64 = (0..m)
            .map(|i| lambda[i] * (0..m).map(|k| gram[i][k] * dir[k]).sum::<f64>())
            .sum();
        let t = (-g_lambda_dir / g_dir_sq).clamp(0.0, t_max);
        if t == 0.0 {
            break;
        }
        for i in 0..m {
            lambda[i] = (lambda[i] + t * dir[i]).max(0.0);
        }
        let total: f64 = lambda.iter().sum();
        for l in &mut lambda {
            *l /= total;
        }
    }
    lambda
}

/// Solve min_λ ‖Σ λᵢ gᵢ‖ on the simplex, then apply the search weights:
/// λ̃ᵢ = wsᵢ·λᵢ / Σ wsⱼ·λⱼ and d* = Σ λ̃ᵢ gᵢ.
pub fn min_norm_direction(gradients: &[Vec<f64>], ws: &SearchWeights) -> Result<GradientBundle> {
    let m = gradients.len();
    if m < 2 {
        return Err(Error::Data("need at least two objective gradients".into()));
    }
    if ws.ws.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "ws has {} weights for {} objectives",
            ws.ws.len(),
            m
        )));
    }
    let dim = gradients[0].len();
    if dim == 0 || gradients.iter().any(|g| g.len() != dim) {
        return Err(Error::DimensionMismatch("gradient vectors must share a nonzero dimension".into()));
    }
    if gradients.iter().all(|g| norm_sq(g) == 0.0) {
        return Err(Error::DegenerateGradients);
    }
    let lambda = if m == 2 {
        min_norm_two(&gradients[0], &gradients[1])
    } else {
        min_norm_frank_wolfe(gradients)
    };
    let weighted: Vec<f64> = lambda.iter().zip(&ws.ws).map(|(l, w)| l * w).collect();
    let total: f64 = weighted.iter().sum();
    let lambda_tilde: Vec<f64> = weighted.iter().map(|v| v / total).collect();
    let d_star = combine(gradients, &lambda_tilde);
    Ok(GradientBundle { gradients: gradients.to_vec(), lambda, lambda_tilde, d_star })
}

/// Per-objective gradient estimate: slope vector of a ridge-regularized
/// least-squares linear fit of the objective value against the embedding.
pub fn fit_objective_gradients(
    measured: &[(Vec<f64>, ObjectivePoint)],
    ridge: f64,
) -> Result<Vec<Vec<f64>>> {
    let n = measured.len();
    if n < 2 {
        return Err(Error::TooFewMeasured { need: 2, have: n });
    }
    let d = measured[0].0.len();
    let m = measured[0].1.dim();
    // Design matrix with trailing intercept column.
    let x = DMatrix::from_fn(n, d + 1, |r, c| {
        if c < d {
            measured[r].0[c]
        } else {
            1.0
        }
    });
    // Ridge on the slope coordinates only; the intercept stays unpenalized.
    let mut xtx = x.transpose() * &x;
    for i in 0..d {
        xtx[(i, i)] += ridge;
    }
    let lu = xtx.lu();
    let mut out = Vec::with_capacity(m);
    for obj in 0..m {
        let y = DVector::from_fn(n, |r, _| measured[r].1.f[obj]);
        let rhs = x.transpose() * y;
        let w = lu
            .solve(&rhs)
            .ok_or_else(|| Error::Data("singular normal equations in gradient fit".into()))?;
        out.push(w.as_slice()[..d].to_vec());
    }
    Ok(out)
}

/// An unmeasured candidate with its estimates, as seen by the sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub arch_id: ArchId,
    pub embedding: Vec<f64>,
    pub e_pred: f64,
}

/// Rank the pool by alignment with the descent direction −d*: candidate
/// gradient g(x) = embed(x) − mean(front embeddings), score = ⟨g(x), −d*⟩.
/// Ties break toward lower predicted energy, then lower arch id.
pub fn select_candidates(
    pool: &[Candidate],
    bundle: &GradientBundle,
    front_embeddings: &[Vec<f64>],
    count: usize,
) -> Result<Vec<ArchId>> {
    if front_embeddings.is_empty() {
        return Err(Error::EmptyFront);
    }
    if pool.is_empty() {
        return Ok(Vec::new());
    }
    let dim = bundle.d_star.len();
    let mut mean = vec![0.0; dim];
    for e in front_embeddings {
        for (m, v) in mean.iter_mut().zip(e) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= front_embeddings.len() as f64;
    }
    let descent: Vec<f64> = bundle.d_star.iter().map(|v| -v).collect();
    let mut scored: Vec<(f64, &Candidate)> = pool
        .iter()
        .map(|c| {
            let g: Vec<f64> = c.embedding.iter().zip(&mean).map(|(a, b)| a - b).collect();
            (dot(&g, &descent), c)
        })
        .collect();
    scored.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.1.e_pred.partial_cmp(&b.1.e_pred).unwrap())
            .then(a.1.arch_id.cmp(&b.1.arch_id))
    });
    Ok(scored.into_iter().take(count).map(|(_, c)| c.arch_id).collect())
}

/// A front member as seen by the selection rules: id plus its point (for
/// the GD rule, points are (E_norm, A_norm, ...) with f[0] the sort axis).
pub type FrontPoint = (ArchId, Vec<f64>);

/// Weighted-gradient-magnitude selection: sort the front by f[0], take
/// central differences at interior points (one-sided at the ends), weight
/// each component by wd and pick the point with the smallest magnitude.
pub fn best_model_gd(front: &[FrontPoint], wd: &SelectionWeights) -> Result<ArchId> {
    if front.is_empty() {
        return Err(Error::EmptyFront);
    }
    if front.len() == 1 {
        return Ok(front[0].0);
    }
    let m = front[0].1.len();
    if wd.wd.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "wd has {} weights for {} objectives",
            wd.wd.len(),
            m
        )));
    }
    let mut sorted: Vec<&FrontPoint> = front.iter().collect();
    sorted.sort_by(|a, b| a.1[0].partial_cmp(&b.1[0]).unwrap().then(a.0.cmp(&b.0)));
    let n = sorted.len();
    let mut best: Option<(f64, f64, ArchId)> = None; // (magnitude, f0, id)
    for j in 0..n {
        let (lo, hi, scale) = if j == 0 {
            (0, 1, 1.0)
        } else if j == n - 1 {
            (n - 2, n - 1, 1.0)
        } else {
            (j - 1, j + 1, 0.5)
        };
        let mag = (0..m)
            .map(|i| {
                let g = (sorted[hi].1[i] - sorted[lo].1[i]) * scale;
                let w = wd.wd[i] * g;
                w * w
            })
            .sum::<f64>()
            .sqrt();
        let key = (mag, sorted[j].1[0], sorted[j].0);
        let better = match &best {
            None => true,
            Some((bm, bf, bid)) => {
                mag < *bm
                    || (mag == *bm && (key.1 < *bf || (key.1 == *bf && key.2 < *bid)))
            }
        };
        if better {
            best = Some(key);
        }
    }
    Ok(best.unwrap().2)
}

/// Weighted-sum selection over (E_norm, A_norm) pairs: score =
/// wd_a·A + wd_e·(1 − E), highest wins; ties to lower energy then lower id.
pub fn best_model_ws(entries: &[(ArchId, f64, f64)], wd_e: f64, wd_a: f64) -> Result<ArchId> {
    if entries.is_empty() {
        return Err(Error::EmptyFront);
    }
    let mut best: Option<(f64, f64, ArchId)> = None; // (score, energy, id)
    for &(id, e, a) in entries {
        let score = wd_a * a + wd_e * (1.0 - e);
        let better = match &best {
            None => true,
            Some((bs, be, bid)) => {
                score > *bs || (score == *bs && (e < *be || (e == *be && id < *bid)))
            }
        };
        if better {
            best = Some((score, e, id));
        }
    }
    Ok(best.unwrap().2)
}

/// 2-D hypervolume (area dominated between the front and the reference
/// point) by the standard sweep. Points beyond the reference are clipped
/// out; an empty front has volume 0.
pub fn hypervolume2d(points: &[[f64; 2]], ref_point: [f64; 2]) -> f64 {
    let mut pts: Vec<[f64; 2]> = points
        .iter()
        .filter(|p| p[0] <= ref_point[0] && p[1] <= ref_point[1])
        .copied()
        .collect();
    if pts.is_empty() {
        return 0.0;
    }
    pts.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap().then(a[1].partial_cmp(&b[1]).unwrap()));
    // Reduce to the non-dominated staircase: keep strictly improving f2.
    let mut stair: Vec<[f64; 2]> = Vec::new();
    for p in pts {
        if stair.last().is_none_or(|l| p[1] < l[1]) {
            stair.push(p);
        }
    }
    let mut area = 0.0;
    for (i, p) in stair.iter().enumerate() {
        let next_x = if i + 1 < stair.len() { stair[i + 1][0] } else { ref_point[0] };
        area += (next_x - p[0]) * (ref_point[1] - p[1]);
    }
    area
}

/// O(n²) brute-force non-dominated filter; the oracle the archive is
/// checked against.
pub fn brute_force_front(points: &[ObjectivePoint]) -> Vec<usize> {
    let mut out = Vec::new();
    'outer: for (i, p) in points.iter().enumerate() {
        for (j, q) in points.iter().enumerate() {
            if i != j && dominates(q, p).unwrap() {
                continue 'outer;
            }
        }
        out.push(i);
    }
    out
}
