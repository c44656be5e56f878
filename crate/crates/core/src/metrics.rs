//! Episode metrics: SR, SPL, NE, SER, MRMSE, MPL and LPL.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::grid::{flood_fill, Cell, Occupancy, OccupancyGrid};
use crate::mapping::SceneGraph;
use crate::tasks::{Benchmark, EpisodeResult};
use crate::world::SceneSpec;
use crate::Error;

/// SPL contribution of one episode.
pub fn spl_term(success: bool, shortest_m: f64, executed_m: f64) -> f64 {
    if !success {
        return 0.0;
    }
    let denom = executed_m.max(shortest_m);
    if denom <= 0.0 {
        1.0
    } else {
        shortest_m / denom
    }
}

/// Success rate, SPL and mean navigation error. NE is `None` when no
/// episode reports a final distance.
pub fn compute_sr_spl_ne(results: &[EpisodeResult]) -> Result<(f64, f64, Option<f64>), Error> {
    if results.is_empty() {
        return Err(Error::EmptyInput("episode results"));
    }
    let n = results.len() as f64;
    let sr = results.iter().filter(|r| r.success).count() as f64 / n;
    let spl = results
        .iter()
        .map(|r| spl_term(r.success, r.shortest_path_m, r.executed_path_m))
        .sum::<f64>()
        / n;
    let finals: Vec<f64> = results.iter().filter_map(|r| r.final_distance_m).collect();
    let ne = (!finals.is_empty()).then(|| finals.iter().sum::<f64>() / finals.len() as f64);
    Ok((sr, spl, ne))
}

/// Minimum and maximum executed primitive-action counts, each capped at
/// the episode budget.
pub fn compute_mpl_lpl(results: &[EpisodeResult]) -> Result<(u32, u32), Error> {
    let counts = results.iter().map(|r| r.executed_actions.min(r.budget));
    let mpl = counts
        .clone()
        .min()
        .ok_or(Error::EmptyInput("episode results"))?;
    let lpl = counts.max().ok_or(Error::EmptyInput("episode results"))?;
    Ok((mpl, lpl))
}

/// Minimum-cost assignment for a rectangular cost matrix.
///
/// Returns, for each row, the column assigned to it. Every row is assigned
/// when there are at least as many columns as rows; otherwise exactly
/// `cols` rows are.
pub fn optimal_assignment(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return vec![None; n];
    }
    if n > m {
        let t: Vec<Vec<f64>> = (0..m)
            .map(|j| (0..n).map(|i| cost[i][j]).collect())
            .collect();
        let cols = optimal_assignment(&t);
        let mut out = vec![None; n];
        for (j, i) in cols.into_iter().enumerate() {
            if let Some(i) = i {
                out[i] = Some(j);
            }
        }
        return out;
    }
    // Shortest augmenting paths with potentials, 1-based with a dummy column 0.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = Some(j - 1);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub node_id: String,
    pub instance_id: String,
    pub class_label: String,
    pub distance_m: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Matching {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_nodes: Vec<String>,
    pub unmatched_instances: Vec<String>,
}

/// Associates graph nodes with ground-truth instances, per class.
///
/// Among assignments, the one with the most pairs within `match_radius_m`
/// wins, and ties go to the smallest total squared center distance. Pairs
/// farther than the radius are never reported.
pub fn match_instances(graph: &SceneGraph, scene: &SceneSpec, match_radius_m: f64) -> Matching {
    let mut classes: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, n) in graph.objects.iter().enumerate() {
        classes.entry(n.class_label.as_str()).or_default().0.push(i);
    }
    for (j, o) in scene.objects.iter().enumerate() {
        classes.entry(o.class_label.as_str()).or_default().1.push(j);
    }
    let r2 = match_radius_m * match_radius_m;
    let mut out = Matching::default();
    for (class, (nodes, insts)) in classes {
        let mut node_hit = vec![false; nodes.len()];
        let mut inst_hit = vec![false; insts.len()];
        if !nodes.is_empty() && !insts.is_empty() {
            let bonus = (nodes.len().min(insts.len()) as f64 + 1.0) * r2 + 1.0;
            let d2 = |i: usize, j: usize| {
                let a = graph.objects[nodes[i]].center;
                let b = scene.objects[insts[j]].center;
                (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y)
            };
            let cost: Vec<Vec<f64>> = (0..nodes.len())
                .map(|i| {
                    (0..insts.len())
                        .map(|j| {
                            let d = d2(i, j);
                            if d <= r2 {
                                d - bonus
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect();
            for (i, j) in optimal_assignment(&cost).into_iter().enumerate() {
                let Some(j) = j else { continue };
                let d = d2(i, j);
                if d <= r2 {
                    node_hit[i] = true;
                    inst_hit[j] = true;
                    out.pairs.push(MatchedPair {
                        node_id: graph.objects[nodes[i]].id.clone(),
                        instance_id: scene.objects[insts[j]].id.clone(),
                        class_label: class.into(),
                        distance_m: libm::sqrt(d),
                    });
                }
            }
        }
        out.unmatched_nodes.extend(
            nodes
                .iter()
                .zip(&node_hit)
                .filter(|(_, h)| !**h)
                .map(|(&i, _)| graph.objects[i].id.clone()),
        );
        out.unmatched_instances.extend(
            insts
                .iter()
                .zip(&inst_hit)
                .filter(|(_, h)| !**h)
                .map(|(&j, _)| scene.objects[j].id.clone()),
        );
    }
    out
}

/// Semantic exploration rate and the RMS center error over matched pairs.
/// MRMSE is `None` when nothing matched.
pub fn compute_ser_mrmse(
    graph: &SceneGraph,
    scene: &SceneSpec,
    match_radius_m: f64,
) -> Result<(f64, Option<f64>), Error> {
    if scene.objects.is_empty() {
        return Err(Error::EmptyInput("ground-truth instances"));
    }
    let m = match_instances(graph, scene, match_radius_m);
    let ser = m.pairs.len() as f64 / scene.objects.len() as f64;
    let mrmse = (!m.pairs.is_empty()).then(|| {
        let ms = m
            .pairs
            .iter()
            .map(|p| p.distance_m * p.distance_m)
            .sum::<f64>()
            / m.pairs.len() as f64;
        libm::sqrt(ms)
    });
    Ok((ser, mrmse))
}

/// Aggregate over the episodes of one policy on one benchmark. Fields that
/// do not apply to the benchmark are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub policy: String,
    pub benchmark: Benchmark,
    pub n_episodes: usize,
    pub sr: Option<f64>,
    pub spl: Option<f64>,
    pub ne_m: Option<f64>,
    pub ser: Option<f64>,
    pub mrmse_m: Option<f64>,
    pub mpl: u32,
    pub lpl: u32,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

pub fn aggregate(
    policy: &str,
    benchmark: Benchmark,
    results: &[EpisodeResult],
) -> Result<MetricsReport, Error> {
    let (mpl, lpl) = compute_mpl_lpl(results)?;
    let (sr, spl, ne_m) = if benchmark == Benchmark::B3 {
        (None, None, None)
    } else {
        let (sr, spl, ne) = compute_sr_spl_ne(results)?;
        (Some(sr), Some(spl), ne)
    };
    let (ser, mrmse_m) = if benchmark == Benchmark::B3 {
        (
            mean(results.iter().map(|r| r.ser.unwrap_or(0.0))),
            mean(results.iter().filter_map(|r| r.mrmse_m)),
        )
    } else {
        (None, None)
    };
    Ok(MetricsReport {
        policy: policy.into(),
        benchmark,
        n_episodes: results.len(),
        sr,
        spl,
        ne_m,
        ser,
        mrmse_m,
        mpl,
        lpl,
    })
}

/// Fraction of the free cells 4-reachable from `start` in `truth` that
/// `belief` knows.
pub fn reachable_coverage(belief: &OccupancyGrid, truth: &OccupancyGrid, start: Cell) -> f64 {
    let reach = flood_fill(truth.width(), truth.height(), start, |c| {
        truth.get(c) == Occupancy::Free
    });
    let (mut total, mut known) = (0usize, 0usize);
    for (i, r) in reach.iter().enumerate() {
        if *r {
            total += 1;
            if belief.get(truth.cell_at(i)).is_known() {
                known += 1;
            }
        }
    }
    if total == 0 {
        return 0.0;
    }
    known as f64 / total as f64
}
