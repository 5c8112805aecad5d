//! K-medoids clustering under cosine distance: PAM-style build plus
//! steepest-descent swap refinement, run from a seeded set of restarts.
//! The returned medoid set is swap-locally optimal: no single
//! medoid/non-medoid exchange lowers the total distance.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::FilterError;

const RESTARTS: usize = 4;
const MAX_SWAP_ITERS: usize = 100;
const MIN_IMPROVEMENT: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct KMedoidsResult {
    /// Indices into the input point set, sorted ascending.
    pub medoid_indices: Vec<usize>,
    /// For each point, the position (0..k) of its nearest medoid.
    pub assignments: Vec<usize>,
    pub total_cost: f64,
}

/// L2-normalizes a vector; zero vectors are returned unchanged.
pub fn normalize(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / norm).collect()
    }
}

/// Cosine distance (1 - cosine similarity) between two vectors that are
/// already L2-normalized.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    1.0 - dot
}

fn distance_matrix(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let normalized: Vec<Vec<f64>> = points.iter().map(|p| normalize(p)).collect();
    let n = normalized.len();
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = cosine_distance(&normalized[i], &normalized[j]);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    dist
}

/// Total distance of every point to its nearest medoid.
pub fn clustering_cost(dist: &[Vec<f64>], medoids: &[usize]) -> f64 {
    dist.iter()
        .map(|row| {
            medoids
                .iter()
                .map(|&m| row[m])
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// Greedy build: first medoid minimizes total distance to all points,
/// each further medoid is the point whose addition reduces cost most.
/// Ties break toward the lower index.
fn greedy_build(dist: &[Vec<f64>], k: usize) -> Vec<usize> {
    let n = dist.len();
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    let mut nearest = vec![f64::INFINITY; n];
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for candidate in 0..n {
            if medoids.contains(&candidate) {
                continue;
            }
            let cost: f64 = dist.iter().zip(&nearest).map(|(row, near)| near.min(row[candidate])).sum();
            if best.is_none_or(|(_, c)| cost < c) {
                best = Some((candidate, cost));
            }
        }
        let (chosen, _) = best.expect("k <= n");
        for p in 0..n {
            nearest[p] = nearest[p].min(dist[p][chosen]);
        }
        medoids.push(chosen);
    }
    medoids.sort_unstable();
    medoids
}

/// Steepest-descent swaps until no single exchange improves the cost.
fn swap_refine(dist: &[Vec<f64>], medoids: &mut [usize]) -> f64 {
    let n = dist.len();
    let mut cost = clustering_cost(dist, medoids);
    for _ in 0..MAX_SWAP_ITERS {
        let mut best: Option<(usize, usize, f64)> = None;
        for slot in 0..medoids.len() {
            for candidate in 0..n {
                if medoids.contains(&candidate) {
                    continue;
                }
                let previous = std::mem::replace(&mut medoids[slot], candidate);
                let new_cost = clustering_cost(dist, medoids);
                medoids[slot] = previous;
                if new_cost + MIN_IMPROVEMENT < cost
                    && best.is_none_or(|(_, _, c)| new_cost < c)
                {
                    best = Some((slot, candidate, new_cost));
                }
            }
        }
        match best {
            Some((slot, candidate, new_cost)) => {
                medoids[slot] = candidate;
                cost = new_cost;
            }
            None => break,
        }
    }
    medoids.sort_unstable();
    cost
}

/// Clusters `points` into `k` groups and returns the medoids. Runs one
/// deterministic greedy build plus seeded random restarts, refines each
/// with swaps, and keeps the cheapest result (ties break toward the
/// lexicographically smaller medoid set).
pub fn k_medoids(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
) -> Result<KMedoidsResult, FilterError> {
    let n = points.len();
    if k == 0 || n < k {
        return Err(FilterError::CorpusTooSmall { have: n, need: k });
    }
    let dist = distance_matrix(points);

    let mut candidates: Vec<Vec<usize>> = vec![greedy_build(&dist, k)];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..n).collect();
    for _ in 1..RESTARTS {
        indices.shuffle(&mut rng);
        let mut start: Vec<usize> = indices[..k].to_vec();
        start.sort_unstable();
        candidates.push(start);
    }

    let mut best: Option<(Vec<usize>, f64)> = None;
    for mut medoids in candidates {
        let cost = swap_refine(&dist, &mut medoids);
        let better = match &best {
            None => true,
            Some((current, current_cost)) => {
                cost + MIN_IMPROVEMENT < *current_cost
                    || ((cost - current_cost).abs() <= MIN_IMPROVEMENT && medoids < *current)
            }
        };
        if better {
            best = Some((medoids, cost));
        }
    }
    let (medoid_indices, total_cost) = best.expect("at least one restart");

    let assignments = (0..n)
        .map(|p| {
            let mut best_slot = 0;
            let mut best_dist = f64::INFINITY;
            for (slot, &m) in medoid_indices.iter().enumerate() {
                // Lower medoid index wins distance ties.
                if dist[p][m] < best_dist {
                    best_dist = dist[p][m];
                    best_slot = slot;
                }
            }
            best_slot
        })
        .collect();

    Ok(KMedoidsResult {
        medoid_indices,
        assignments,
        total_cost,
    })
}

/// True when no single medoid/non-medoid swap lowers the total cost.
pub fn is_swap_optimal(points: &[Vec<f64>], medoids: &[usize]) -> bool {
    let dist = distance_matrix(points);
    let cost = clustering_cost(&dist, medoids);
    let mut working = medoids.to_vec();
    for slot in 0..working.len() {
        for candidate in 0..points.len() {
            if working.contains(&candidate) {
                continue;
            }
            let previous = std::mem::replace(&mut working[slot], candidate);
            let new_cost = clustering_cost(&dist, &working);
            working[slot] = previous;
            if new_cost + MIN_IMPROVEMENT < cost {
                return false;
            }
        }
    }
    true
}
