//! Federated Lloyd iterations with nearest-slot centroid merging.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::protocol::{CentroidReport, ClientMessage, GlobalCentroids, MomentReport};
use crate::error::{Error, Result};
use crate::seed::{self, stream};
use crate::stats::{MomentSums, Standardizer};

/// One factory's clustering data. The points stay here.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterClient {
    pub factory_id: u32,
    pub points: Vec<Vec<f64>>,
}

impl ClusterClient {
    pub fn moment_report(&self, dim: usize) -> ClientMessage {
        let mut moments = MomentSums::new(dim);
        for p in &self.points {
            moments.push(p);
        }
        ClientMessage::Moments(MomentReport {
            factory_id: self.factory_id,
            moments,
        })
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lower index.
pub fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Global z-score from client moment sums; each client then scales locally.
pub fn federated_normalize(
    clients: &[ClusterClient],
) -> Result<(Standardizer, Vec<ClusterClient>)> {
    let dim = clients
        .iter()
        .flat_map(|c| c.points.first())
        .map(Vec::len)
        .next()
        .ok_or_else(|| Error::Data("no client holds any record to cluster".into()))?;
    if clients
        .iter()
        .flat_map(|c| &c.points)
        .any(|p| p.len() != dim)
    {
        return Err(Error::Size(format!(
            "index vectors must all have {dim} dimensions"
        )));
    }
    let mut total = MomentSums::new(dim);
    for c in clients {
        match c.moment_report(dim) {
            ClientMessage::Moments(r) => total.merge(&r.moments),
            ClientMessage::Centroids(_) => unreachable!(),
        }
    }
    let std = Standardizer::from_moments(&total);
    let scaled = clients
        .iter()
        .map(|c| ClusterClient {
            factory_id: c.factory_id,
            points: c.points.iter().map(|p| std.apply(p)).collect(),
        })
        .collect();
    Ok((std, scaled))
}

/// `iters` Lloyd iterations seeded from `global`. Counts come from the last
/// assignment; a slot left empty keeps its starting centroid with count 0.
pub fn local_kmeans_step(
    client: &ClusterClient,
    global: &[Vec<f64>],
    iters: usize,
) -> CentroidReport {
    let k = global.len();
    let mut centroids = global.to_vec();
    let mut counts = vec![0u64; k];
    if client.points.is_empty() {
        return CentroidReport {
            factory_id: client.factory_id,
            centroids,
            counts,
            padded: true,
        };
    }
    let dim = global.first().map_or(0, Vec::len);
    for _ in 0..iters.max(1) {
        let mut sums = vec![vec![0.0; dim]; k];
        counts.iter_mut().for_each(|c| *c = 0);
        for p in &client.points {
            let j = nearest(p, &centroids);
            counts[j] += 1;
            for (s, v) in sums[j].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                let n = counts[j] as f64;
                centroids[j] = sums[j].iter().map(|s| s / n).collect();
            } else {
                centroids[j] = global[j].clone();
            }
        }
    }
    let padded = counts.contains(&0);
    CentroidReport {
        factory_id: client.factory_id,
        centroids,
        counts,
        padded,
    }
}

/// Count-weighted mean of client centroids per nearest previous slot.
/// Reports are folded in factory order so the result ignores arrival order.
pub fn server_merge(reports: &[CentroidReport], prev: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let mut order: Vec<&CentroidReport> = reports.iter().filter(|r| !r.is_empty()).collect();
    if order.is_empty() {
        return Err(Error::Protocol(
            "every client centroid report is empty".into(),
        ));
    }
    order.sort_by_key(|r| r.factory_id);
    let dim = prev.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; dim]; prev.len()];
    let mut weight = vec![0u64; prev.len()];
    for r in order {
        if r.centroids.len() != r.counts.len() || r.centroids.iter().any(|c| c.len() != dim) {
            return Err(Error::Protocol(format!(
                "malformed centroid report from factory {}",
                r.factory_id
            )));
        }
        for (c, &n) in r.centroids.iter().zip(&r.counts) {
            if n == 0 {
                continue;
            }
            let slot = nearest(c, prev);
            weight[slot] += n;
            for (s, v) in sums[slot].iter_mut().zip(c) {
                *s += v * n as f64;
            }
        }
    }
    Ok(prev
        .iter()
        .zip(sums)
        .zip(weight)
        .map(|((p, s), w)| {
            if w == 0 {
                p.clone()
            } else {
                s.iter().map(|v| v / w as f64).collect()
            }
        })
        .collect())
}

/// k-means++ seeding.
pub fn kmeans_plus_plus(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if points.is_empty() {
        return Err(Error::Data(
            "cannot seed k-means from an empty client".into(),
        ));
    }
    let mut rng = seed::rng(seed, &[stream::KMEANS]);
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    Ok(centroids)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub epsilon: f64,
    pub max_rounds: usize,
    pub local_iters: usize,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 2,
            epsilon: 1e-3,
            max_rounds: 50,
            local_iters: 1,
            seed: 0,
        }
    }
}

/// Broadcast, local steps, merge; stops once no global centroid moved by
/// `epsilon` or more in a round. Clients are expected to be normalised.
pub fn run_federated_kmeans(
    clients: &[ClusterClient],
    cfg: &KMeansConfig,
) -> Result<GlobalCentroids> {
    if cfg.k < 2 {
        return Err(Error::Config(format!(
            "k must be at least 2, got {}",
            cfg.k
        )));
    }
    let first = clients
        .iter()
        .find(|c| !c.points.is_empty())
        .ok_or_else(|| Error::Data("no client holds any record to cluster".into()))?;
    let mut global = GlobalCentroids {
        centroids: kmeans_plus_plus(&first.points, cfg.k, cfg.seed)?,
        round: 0,
        converged: false,
    };
    while global.round < cfg.max_rounds {
        let reports: Vec<CentroidReport> = clients
            .iter()
            .map(|c| local_kmeans_step(c, &global.centroids, cfg.local_iters))
            .collect();
        let merged = server_merge(&reports, &global.centroids)?;
        let gap = merged
            .iter()
            .zip(&global.centroids)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        global = GlobalCentroids {
            centroids: merged,
            round: global.round + 1,
            converged: gap < cfg.epsilon,
        };
        if global.converged {
            break;
        }
    }
    Ok(global)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn client(id: u32, pts: &[f64]) -> ClusterClient {
        ClusterClient {
            factory_id: id,
            points: pts.iter().map(|&v| vec![v]).collect(),
        }
    }

    #[test]
    fn hand_lloyd_step() {
        let r = local_kmeans_step(
            &client(0, &[0.0, 0.0, 10.0, 10.0]),
            &[vec![1.0], vec![9.0]],
            1,
        );
        assert_eq!(r.centroids, vec![vec![0.0], vec![10.0]]);
        assert_eq!(r.counts, vec![2, 2]);
        assert!(!r.padded);
    }

    #[test]
    fn fixed_point_and_padding() {
        let g = vec![vec![0.0], vec![10.0]];
        let r = local_kmeans_step(&client(0, &[0.0, 10.0]), &g, 3);
        assert_eq!(r.centroids, g);
        let r = local_kmeans_step(&client(0, &[0.0, 0.0]), &g, 1);
        assert!(r.padded);
        assert_eq!(r.counts, vec![2, 0]);
        assert_eq!(r.centroids[1], g[1]);
    }

    #[test]
    fn weighted_merge() {
        let a = CentroidReport {
            factory_id: 0,
            centroids: vec![vec![0.0]],
            counts: vec![10],
            padded: false,
        };
        let b = CentroidReport {
            factory_id: 1,
            centroids: vec![vec![4.0]],
            counts: vec![30],
            padded: false,
        };
        assert_eq!(
            server_merge(&[a.clone(), b.clone()], &[vec![1.0]]).unwrap(),
            vec![vec![3.0]]
        );
        assert_eq!(
            server_merge(&[b, a], &[vec![1.0]]).unwrap(),
            vec![vec![3.0]]
        );
    }

    #[test]
    fn empty_reports_rejected() {
        let e = CentroidReport {
            factory_id: 0,
            centroids: vec![vec![0.0]],
            counts: vec![0],
            padded: true,
        };
        assert!(matches!(
            server_merge(&[e], &[vec![0.0]]),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn infinite_epsilon_stops_after_one_round() {
        let c = [client(0, &[0.0, 0.1, 5.0, 5.1]), client(1, &[0.2, 4.9])];
        let cfg = KMeansConfig {
            epsilon: f64::INFINITY,
            ..Default::default()
        };
        let g = run_federated_kmeans(&c, &cfg).unwrap();
        assert_eq!(g.round, 1);
        assert!(g.converged);
    }

    #[test]
    fn normalisation_matches_pooled() {
        let a = client(0, &[1.0, 2.0, 3.0]);
        let b = client(1, &[10.0]);
        let (s, scaled) = federated_normalize(&[a, b]).unwrap();
        let all = [1.0, 2.0, 3.0, 10.0];
        let mean = all.iter().sum::<f64>() / 4.0;
        let var = all.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
        assert!((s.mean[0] - mean).abs() < 1e-12);
        assert!((s.std[0] - var.sqrt()).abs() < 1e-12);
        assert!((scaled[1].points[0][0] - (10.0 - mean) / var.sqrt()).abs() < 1e-12);
    }
}
