//! Spherical k-means over unit vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

pub const MAX_ITERATIONS: usize = 100;

const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ClusterError {
    #[error("k must be in 1..={n}, got {k}")]
    InvalidK { k: usize, n: usize },
    #[error("vector {index} has dimension {found}, expected {expected}")]
    Dimension {
        index: usize,
        found: usize,
        expected: usize,
    },
    #[error("vector {index} is not unit length (norm {norm})")]
    NotUnit { index: usize, norm: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Clustering {
    pub k: usize,
    /// Cluster id of each input item, in input order.
    pub assignments: Vec<usize>,
    /// Unit-length centroids, one per cluster.
    pub centroids: Vec<Vec<f64>>,
    pub seed: u64,
    /// Number of centroid updates performed.
    pub iterations: usize,
    /// Within-cluster cost, `sum(1 - cos(item, centroid))`, after the
    /// initial assignment and after every update.
    pub cost_history: Vec<f64>,
}

impl Clustering {
    pub fn cost(&self) -> f64 {
        *self.cost_history.last().expect("history is never empty")
    }

    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignments
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == cluster)
            .map(|(i, _)| i)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Scales `v` to unit length; `None` for a zero vector.
pub fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let n = norm(v);
    (n > 0.0 && n.is_finite()).then(|| v.iter().map(|x| x / n).collect())
}

fn nearest(item: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_sim = f64::NEG_INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let sim = dot(item, centroid);
        // strict: ties stay with the lower cluster id
        if sim > best_sim {
            best = c;
            best_sim = sim;
        }
    }
    best
}

fn cost(items: &[Vec<f64>], assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    items
        .iter()
        .zip(assignments)
        .map(|(x, &c)| 1.0 - dot(x, &centroids[c]))
        .sum()
}

/// Seeded farthest-point seeding: a seeded draw picks the first centroid,
/// then each next centroid is the item farthest (in `1 - cos`) from all
/// chosen so far, ties to the lowest index.
fn farthest_point_init(items: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![rng.random_range(0..items.len())];
    let mut min_dist: Vec<f64> = items
        .iter()
        .map(|x| 1.0 - dot(x, &items[chosen[0]]))
        .collect();
    while chosen.len() < k {
        let mut pick = None;
        let mut pick_dist = f64::NEG_INFINITY;
        for (i, &d) in min_dist.iter().enumerate() {
            if !chosen.contains(&i) && d > pick_dist {
                pick = Some(i);
                pick_dist = d;
            }
        }
        let pick = pick.expect("k <= n leaves an unchosen item");
        chosen.push(pick);
        for (i, x) in items.iter().enumerate() {
            min_dist[i] = min_dist[i].min(1.0 - dot(x, &items[pick]));
        }
    }
    chosen
}

/// Moves items into empty clusters. Each empty cluster takes the item
/// farthest from its own centroid among clusters that can spare one, and
/// is re-centred on it.
fn repair_empty(items: &[Vec<f64>], assignments: &mut [usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &c in assignments.iter() {
            sizes[c] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut donor = None;
        let mut worst = f64::INFINITY;
        for (i, x) in items.iter().enumerate() {
            let c = assignments[i];
            let sim = dot(x, &centroids[c]);
            if sizes[c] > 1 && sim < worst {
                donor = Some(i);
                worst = sim;
            }
        }
        let i = donor.expect("n >= k leaves a cluster with a spare item");
        assignments[i] = empty;
        centroids[empty] = items[i].clone();
    }
}

fn assign(items: &[Vec<f64>], centroids: &mut [Vec<f64>]) -> Vec<usize> {
    let mut assignments: Vec<usize> = items.iter().map(|x| nearest(x, centroids)).collect();
    repair_empty(items, &mut assignments, centroids);
    assignments
}

fn update(items: &[Vec<f64>], assignments: &[usize], centroids: &mut [Vec<f64>]) {
    let dim = items[0].len();
    let mut sums = vec![vec![0.0; dim]; centroids.len()];
    for (x, &c) in items.iter().zip(assignments) {
        for (s, v) in sums[c].iter_mut().zip(x) {
            *s += v;
        }
    }
    for (centroid, sum) in centroids.iter_mut().zip(sums) {
        // members that cancel out exactly leave the old centroid in place
        if let Some(unit) = normalized(&sum) {
            *centroid = unit;
        }
    }
}

/// Clusters unit vectors by cosine similarity.
///
/// Alternates nearest-centroid assignment and normalized-mean updates until
/// the assignment stops changing or [`MAX_ITERATIONS`] updates have run.
/// Deterministic for a given `(items, k, seed)`.
pub fn kmeans_cosine(items: &[Vec<f64>], k: usize, seed: u64) -> Result<Clustering, ClusterError> {
    let n = items.len();
    if k < 1 || k > n {
        return Err(ClusterError::InvalidK { k, n });
    }
    let dim = items[0].len();
    for (index, x) in items.iter().enumerate() {
        if x.len() != dim {
            return Err(ClusterError::Dimension {
                index,
                found: x.len(),
                expected: dim,
            });
        }
        let nrm = norm(x);
        if (nrm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(ClusterError::NotUnit { index, norm: nrm });
        }
    }

    let mut centroids: Vec<Vec<f64>> = farthest_point_init(items, k, seed)
        .into_iter()
        .map(|i| items[i].clone())
        .collect();
    let mut assignments = assign(items, &mut centroids);
    let mut cost_history = vec![cost(items, &assignments, &centroids)];
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        update(items, &assignments, &mut centroids);
        iterations += 1;
        cost_history.push(cost(items, &assignments, &centroids));
        let next = assign(items, &mut centroids);
        if next == assignments {
            break;
        }
        assignments = next;
    }
    // an assignment change on the final allowed pass leaves stale centroids
    if cost(items, &assignments, &centroids) < *cost_history.last().unwrap() {
        cost_history.push(cost(items, &assignments, &centroids));
    }

    Ok(Clustering {
        k,
        assignments,
        centroids,
        seed,
        iterations,
        cost_history,
    })
}
