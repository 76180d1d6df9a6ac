use log::warn;

use crate::ingest::TermVector;
use crate::rng::rng_for;

use super::TrainError;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// Cluster of every input document.
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Total L1 distance after seeding, after every Lloyd iteration and,
    /// if single-document moves changed anything, after that refinement.
    pub objective_trace: Vec<f64>,
}

impl KMeansResult {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace starts with the seeding objective")
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Component-wise median; for an even count the lower middle value.
pub fn lower_median_centroid(rows: &[&[f64]], dim: usize) -> Vec<f64> {
    let mut buf = Vec::with_capacity(rows.len());
    (0..dim)
        .map(|j| {
            buf.clear();
            buf.extend(rows.iter().map(|r| r[j]));
            let mid = (buf.len() - 1) / 2;
            *buf.select_nth_unstable_by(mid, f64::total_cmp).1
        })
        .collect()
}

/// Sum of L1 distances of every row to the centroid of its cluster.
pub fn l1_objective(rows: &[Vec<f64>], assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    rows.iter().zip(assignments).map(|(r, &a)| l1_distance(r, &centroids[a])).sum()
}

/// K-means under the L1 distance on L1-normalized copies of `docs`, with
/// median centroids and farthest-point seeding from a random first center.
/// Lloyd iterations are followed by a bounded single-document move search.
pub fn kmeans_l1(docs: &[TermVector], dim: usize, k: usize, max_iters: usize, seed: u64) -> Result<KMeansResult, TrainError> {
    let rows = normalized_rows(docs, dim)?;
    kmeans_dense(&rows, k, max_iters, seed, Seeding::FarthestPoint)
}

/// Runs [`kmeans_l1`] `restarts` times with derived seeds and keeps the
/// lowest final objective (earliest restart on ties).
pub fn kmeans_l1_best(docs: &[TermVector], dim: usize, k: usize, max_iters: usize, restarts: usize, seed: u64) -> Result<KMeansResult, TrainError> {
    let rows = normalized_rows(docs, dim)?;
    kmeans_dense_best(&rows, k, max_iters, restarts, seed)
}

pub(crate) fn normalized_rows(docs: &[TermVector], dim: usize) -> Result<Vec<Vec<f64>>, TrainError> {
    if docs.is_empty() {
        return Err(TrainError::Config("k-means needs at least one document".into()));
    }
    docs.iter()
        .map(|d| match d.max_index() {
            Some(m) if m >= dim => Err(TrainError::Config(format!("word index {m} outside dimension {dim}"))),
            None => Err(TrainError::Config("k-means input contains an empty document".into())),
            _ => Ok(d.l1_normalized_dense(dim)),
        })
        .collect()
}

pub(crate) fn kmeans_dense_best(rows: &[Vec<f64>], k: usize, max_iters: usize, restarts: usize, seed: u64) -> Result<KMeansResult, TrainError> {
    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts.max(1) {
        let seeding = if r == 0 { Seeding::FarthestPoint } else { Seeding::RandomCenters };
        let run = kmeans_dense(rows, k, max_iters, crate::rng::derive_seed(seed, &[r as u64]), seeding)?;
        if best.as_ref().is_none_or(|b| run.objective() < b.objective()) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// How initial centers are picked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Seeding {
    /// A random first center, then repeatedly the row farthest from all
    /// centers so far.
    FarthestPoint,
    /// `k` distinct rows drawn at random.
    RandomCenters,
}

pub(crate) fn kmeans_dense(rows: &[Vec<f64>], k: usize, max_iters: usize, seed: u64, seeding: Seeding) -> Result<KMeansResult, TrainError> {
    if k == 0 {
        return Err(TrainError::Config("k-means needs k >= 1".into()));
    }
    if rows.is_empty() {
        return Err(TrainError::Config("k-means needs at least one document".into()));
    }
    let k = if k > rows.len() {
        warn!("k-means: k = {k} exceeds {} documents, using k = {}", rows.len(), rows.len());
        rows.len()
    } else {
        k
    };
    let dim = rows[0].len();

    let mut rng = rng_for(seed, &[0x4b4d]);
    let centroids = match seeding {
        Seeding::FarthestPoint => farthest_point_centers(rows, k, &mut rng),
        Seeding::RandomCenters => rand::seq::index::sample(&mut rng, rows.len(), k).into_iter().map(|i| rows[i].clone()).collect(),
    };
    let mut centroids: Vec<Vec<f64>> = centroids;

    let mut assignments: Vec<usize> = rows.iter().map(|r| nearest_centroid(r, &centroids).0).collect();
    let mut objective = l1_objective(rows, &assignments, &centroids);
    let mut trace = vec![objective];

    for _ in 0..max_iters {
        let mut members: Vec<Vec<&[f64]>> = vec![Vec::new(); k];
        for (r, &a) in rows.iter().zip(&assignments) {
            members[a].push(r);
        }
        let updated: Vec<Vec<f64>> = members
            .iter()
            .zip(&centroids)
            .map(|(m, old)| if m.is_empty() { old.clone() } else { lower_median_centroid(m, dim) })
            .collect();
        // Only a strict improvement counts as progress, so equal-objective
        // centroid flips cannot keep the loop alive.
        let mut centroids_moved = false;
        if updated != centroids {
            let candidate = l1_objective(rows, &assignments, &updated);
            if candidate <= objective {
                centroids_moved = candidate < objective;
                centroids = updated;
            }
        }

        let mut moved = false;
        for (r, a) in rows.iter().zip(assignments.iter_mut()) {
            let current = l1_distance(r, &centroids[*a]);
            let (best, d) = nearest_centroid(r, &centroids);
            if d < current {
                *a = best;
                moved = true;
            }
        }
        objective = l1_objective(rows, &assignments, &centroids);
        trace.push(objective);
        if !moved && !centroids_moved {
            break;
        }
    }

    if refine_single_moves(rows, k, &mut assignments, max_iters) {
        let mut members: Vec<Vec<&[f64]>> = vec![Vec::new(); k];
        for (r, &a) in rows.iter().zip(&assignments) {
            members[a].push(r);
        }
        for (c, m) in members.iter().enumerate() {
            if !m.is_empty() {
                centroids[c] = lower_median_centroid(m, dim);
            }
        }
        let refined = l1_objective(rows, &assignments, &centroids);
        debug_assert!(refined <= objective);
        trace.push(refined);
    }
    Ok(KMeansResult {
        assignments,
        centroids,
        objective_trace: trace,
    })
}

/// Upper bound on per-coordinate cost evaluations spent in
/// [`refine_single_moves`].
const REFINE_BUDGET: u64 = 200_000;

/// Smallest objective decrease a move must achieve.
const MOVE_TOL: f64 = 1e-10;

/// One cluster's coordinates, each column sorted with prefix sums, so the
/// L1 cost around the lower median of the cluster with one member removed
/// and/or one row added takes `O(log m)` per coordinate.
struct SortedCluster {
    cols: Vec<Vec<f64>>,
    prefix: Vec<Vec<f64>>,
}

impl SortedCluster {
    fn new(rows: &[Vec<f64>], members: &[usize], dim: usize) -> Self {
        let mut cols = Vec::with_capacity(dim);
        let mut prefix = Vec::with_capacity(dim);
        for j in 0..dim {
            let mut col: Vec<f64> = members.iter().map(|&m| rows[m][j]).collect();
            col.sort_by(f64::total_cmp);
            let mut p = Vec::with_capacity(col.len() + 1);
            p.push(0.0);
            for v in &col {
                p.push(p.last().unwrap() + v);
            }
            cols.push(col);
            prefix.push(p);
        }
        Self { cols, prefix }
    }

    /// Cost after removing `remove` (a member row) and adding `add`.
    fn cost(&self, remove: Option<&[f64]>, add: Option<&[f64]>) -> f64 {
        let mut total = 0.0;
        for (j, (s, p)) in self.cols.iter().zip(&self.prefix).enumerate() {
            // Base multiset: the column minus the removed value.
            let r = remove.map(|row| s.partition_point(|v| v.total_cmp(&row[j]).is_lt()));
            let base_len = s.len() - usize::from(r.is_some());
            let base_at = |q: usize| match r {
                Some(r) if q >= r => s[q + 1],
                _ => s[q],
            };
            let base_sum = |q: usize| match r {
                Some(r) if q > r => p[q + 1] - s[r],
                _ => p[q],
            };
            // Inserted value and its rank in the base multiset.
            let ins = add.map(|row| {
                let x = row[j];
                let below = s.partition_point(|v| v.total_cmp(&x).is_lt());
                match r {
                    Some(r) if r < below => (below - 1, x),
                    _ => (below, x),
                }
            });
            let len = base_len + usize::from(ins.is_some());
            let at = |q: usize| match ins {
                Some((i, x)) if q == i => x,
                Some((i, _)) if q > i => base_at(q - 1),
                _ => base_at(q),
            };
            let sum = |q: usize| match ins {
                Some((i, x)) if q > i => base_sum(q - 1) + x,
                _ => base_sum(q),
            };
            if len < 2 {
                continue;
            }
            let t = (len - 1) / 2;
            let median = at(t);
            let low = sum(t + 1);
            let all = sum(len);
            total += median * (t + 1) as f64 - low + (all - low) - median * (len - t - 1) as f64;
        }
        total
    }
}

/// Local search after Lloyd iterations. A pass first moves single
/// documents to the cluster that lowers the exact objective most (medians
/// recomputed); when no single move helps it looks for one improving swap
/// of two documents between clusters. Stops when neither helps, after
/// `max_passes` passes or when the work budget is spent. Returns whether
/// any document changed cluster.
fn refine_single_moves(rows: &[Vec<f64>], k: usize, assignments: &mut [usize], max_passes: usize) -> bool {
    let n = rows.len();
    let dim = rows.first().map_or(0, Vec::len);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &a) in assignments.iter().enumerate() {
        members[a].push(i);
    }
    let mut clusters: Vec<SortedCluster> = members.iter().map(|m| SortedCluster::new(rows, m, dim)).collect();
    let mut costs: Vec<f64> = clusters.iter().map(|c| c.cost(None, None)).collect();
    let mut budget = REFINE_BUDGET;
    let mut spend = |evals: usize| -> bool {
        let work = (evals * dim) as u64;
        let ok = budget >= work;
        budget = budget.saturating_sub(work);
        ok
    };
    let mut any = false;
    for _ in 0..max_passes {
        let mut moved = false;
        for i in 0..n {
            let a = assignments[i];
            if members[a].len() == 1 {
                continue;
            }
            if !spend(k) {
                return any;
            }
            let without = clusters[a].cost(Some(&rows[i]), None);
            let leave = without - costs[a];
            let mut best: Option<(usize, f64, f64)> = None;
            for b in (0..k).filter(|&b| b != a) {
                let with = clusters[b].cost(None, Some(&rows[i]));
                let delta = leave + with - costs[b];
                if delta < -MOVE_TOL && best.is_none_or(|(_, d, _)| delta < d) {
                    best = Some((b, delta, with));
                }
            }
            if let Some((b, _, _)) = best {
                members[a].retain(|&m| m != i);
                members[b].push(i);
                assignments[i] = b;
                for c in [a, b] {
                    clusters[c] = SortedCluster::new(rows, &members[c], dim);
                    costs[c] = clusters[c].cost(None, None);
                }
                moved = true;
            }
        }
        if !moved {
            'swap: for i in 0..n {
                for j in i + 1..n {
                    let (a, b) = (assignments[i], assignments[j]);
                    if a == b {
                        continue;
                    }
                    if !spend(2) {
                        return any;
                    }
                    let new_a = clusters[a].cost(Some(&rows[i]), Some(&rows[j]));
                    let new_b = clusters[b].cost(Some(&rows[j]), Some(&rows[i]));
                    if new_a + new_b - costs[a] - costs[b] < -MOVE_TOL {
                        for m in members[a].iter_mut().filter(|m| **m == i) {
                            *m = j;
                        }
                        for m in members[b].iter_mut().filter(|m| **m == j) {
                            *m = i;
                        }
                        assignments.swap(i, j);
                        for c in [a, b] {
                            clusters[c] = SortedCluster::new(rows, &members[c], dim);
                            costs[c] = clusters[c].cost(None, None);
                        }
                        moved = true;
                        break 'swap;
                    }
                }
            }
        }
        if !moved {
            break;
        }
        any = true;
    }
    any
}

fn farthest_point_centers(rows: &[Vec<f64>], k: usize, rng: &mut impl rand::Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![rows[rng.random_range(0..rows.len())].clone()];
    let mut nearest: Vec<f64> = rows.iter().map(|r| l1_distance(r, &centroids[0])).collect();
    while centroids.len() < k {
        let (far, _) = nearest
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bd), (i, &d)| if d > bd { (i, d) } else { (bi, bd) });
        let c = rows[far].clone();
        for (n, r) in nearest.iter_mut().zip(rows) {
            *n = n.min(l1_distance(r, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn nearest_centroid(row: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = l1_distance(row, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}
