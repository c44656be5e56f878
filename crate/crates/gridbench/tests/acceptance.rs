//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use gridbench::config::RunConfig;
use gridbench::io::log_files;
use gridbench::suite::run_suite;
use gridbench_core::episode::{
    exploration_admin, ground_truth_admin, run_episode, EpisodeOutput, EpisodeSetup,
};
use gridbench_core::grid::{Occupancy, OccupancyGrid, Point};
use gridbench_core::interaction::{exchange_if_in_range, Administrator, Peer};
use gridbench_core::mapping::{merge, BeliefMap, Contribution, ObjectNode, SceneGraph};
use gridbench_core::metrics::{
    compute_mpl_lpl, compute_ser_mrmse, compute_sr_spl_ne, optimal_assignment, reachable_coverage,
    spl_term,
};
use gridbench_core::params::EpisodeParams;
use gridbench_core::planning::{dstar_lite_plan, DStarLite, PlanError, PlanGrid};
use gridbench_core::policies::{builtin, Policy};
use gridbench_core::sensing::Pose;
use gridbench_core::tasks::{check_success, generate_tasks, Benchmark, EpisodeResult, Goal, Task};
use gridbench_core::world::{generate_scene, ObjectInstance, SceneGenConfig, SceneSpec};
use gridbench_core::{rng_from_seed, Cell, Rng};
use rand::Rng as _;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

type Check = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn team(name: &str, n: usize) -> Vec<Box<dyn Policy>> {
    (0..n)
        .map(|_| builtin(name).expect("built-in policy"))
        .collect()
}

fn episode(
    scene: &SceneSpec,
    task: &Task,
    params: &EpisodeParams,
    seed: u64,
    policy: &str,
    agents: usize,
) -> EpisodeOutput {
    let setup = EpisodeSetup {
        scene,
        task,
        params,
        seed,
        admin: None,
    };
    run_episode(setup, &mut team(policy, agents)).expect("episode runs")
}

fn within(limit: Duration, t0: Instant) -> Check {
    let took = t0.elapsed();
    ensure!(took <= limit, "took {took:.1?}, limit {limit:?}");
    Ok(format!("{took:.1?}"))
}

// Planner equivalence

const N: i32 = 50;

/// Plain Dijkstra over the 8-neighborhood without corner cutting. Returns
/// the (straight, diagonal) move counts of a cheapest path.
fn dijkstra(grid: &PlanGrid, start: Cell, goal: Cell) -> Option<(u64, u64)> {
    #[derive(PartialEq)]
    struct Item(f64, usize);
    impl Eq for Item {}
    impl PartialOrd for Item {
        fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for Item {
        fn cmp(&self, o: &Self) -> Ordering {
            o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
        }
    }
    let ok = |c: Cell| c.x >= 0 && c.y >= 0 && c.x < N && c.y < N && grid.passable(c);
    if !ok(start) || !ok(goal) {
        return None;
    }
    let idx = |c: Cell| (c.y * N + c.x) as usize;
    let mut dist = vec![f64::INFINITY; (N * N) as usize];
    let mut moves = vec![(0u64, 0u64); (N * N) as usize];
    let mut heap = BinaryHeap::from([Item(0.0, idx(start))]);
    dist[idx(start)] = 0.0;
    while let Some(Item(d, i)) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        let c = Cell::new(i as i32 % N, i as i32 / N);
        if c == goal {
            return Some(moves[i]);
        }
        for (dx, dy) in [
            (1, 0),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ] {
            let n = Cell::new(c.x + dx, c.y + dy);
            let diagonal = dx != 0 && dy != 0;
            if !ok(n)
                || (diagonal && !(ok(Cell::new(c.x + dx, c.y)) && ok(Cell::new(c.x, c.y + dy))))
            {
                continue;
            }
            let nd = d + if diagonal {
                std::f64::consts::SQRT_2
            } else {
                1.0
            };
            if nd < dist[idx(n)] {
                dist[idx(n)] = nd;
                let (s, g) = moves[i];
                moves[idx(n)] = if diagonal { (s, g + 1) } else { (s + 1, g) };
                heap.push(Item(nd, idx(n)));
            }
        }
    }
    None
}

fn random_grid(rng: &mut Rng) -> PlanGrid {
    let density: f64 = rng.random_range(0.05..0.40);
    let cells: Vec<bool> = (0..N * N).map(|_| rng.random::<f64>() >= density).collect();
    PlanGrid::from_fn(N as u32, N as u32, 0.1, |c| cells[(c.y * N + c.x) as usize])
}

fn random_passable(rng: &mut Rng, grid: &PlanGrid) -> Cell {
    loop {
        let c = Cell::new(rng.random_range(0..N), rng.random_range(0..N));
        if grid.passable(c) {
            return c;
        }
    }
}

fn planner_equivalence() -> Check {
    let t0 = Instant::now();
    let mut rng = rng_from_seed(1);
    let mut solved = 0;
    while solved < 1000 {
        let grid = random_grid(&mut rng);
        let (s, g) = (
            random_passable(&mut rng, &grid),
            random_passable(&mut rng, &grid),
        );
        match (dijkstra(&grid, s, g), dstar_lite_plan(&grid, s, g)) {
            (Some(r), Ok(p)) => {
                ensure!(
                    (p.cost.straight, p.cost.diagonal) == r,
                    "grid {solved}: {:?} vs reference {r:?}",
                    p.cost
                );
                solved += 1;
            }
            (None, Err(PlanError::NoPath { .. })) => {}
            (r, p) => {
                return Err(format!(
                    "grid {solved}: reference {r:?}, planner {:?}",
                    p.map(|p| p.cost)
                ))
            }
        }
    }
    let mut cases = 0;
    while cases < 200 {
        let mut grid = random_grid(&mut rng);
        let (s, g) = (
            random_passable(&mut rng, &grid),
            random_passable(&mut rng, &grid),
        );
        let mut d = DStarLite::new(grid.clone(), s, g).map_err(|e| e.to_string())?;
        let Ok(first) = d.plan() else { continue };
        let here = first.cells[rng.random_range(0..first.cells.len())];
        d.move_start(here).map_err(|e| e.to_string())?;
        let mut changes = Vec::new();
        for _ in 0..rng.random_range(1..40) {
            let c = Cell::new(rng.random_range(0..N), rng.random_range(0..N));
            if c != here && c != g {
                let v = !grid.passable(c);
                grid.set_passable(c, v);
                changes.push((c, v));
            }
        }
        d.update_cells(&changes);
        match (dijkstra(&grid, here, g), d.plan()) {
            (Some(r), Ok(p)) => ensure!(
                (p.cost.straight, p.cost.diagonal) == r,
                "replan case {cases}: {:?} vs {r:?}",
                p.cost
            ),
            (None, Err(PlanError::NoPath { .. })) => {}
            (r, p) => {
                return Err(format!(
                    "replan case {cases}: reference {r:?}, planner {:?}",
                    p.map(|p| p.cost)
                ))
            }
        }
        cases += 1;
    }
    Ok(format!(
        "1000 grids and 200 replans exact, {}",
        within(Duration::from_secs(30), t0)?
    ))
}

// Oracle navigation

fn oracle_navigation() -> Check {
    let t0 = Instant::now();
    let params = EpisodeParams::default();
    let scenes: Vec<SceneSpec> = (0..10)
        .map(|s| generate_scene(&SceneGenConfig::default(), s).expect("scene"))
        .collect();
    let jobs: Vec<(&SceneSpec, Task)> = scenes
        .iter()
        .flat_map(|sc| {
            let tasks = generate_tasks(sc, Benchmark::B1, 10, sc.seed, 1, &params).expect("tasks");
            tasks.into_iter().map(move |t| (sc, t))
        })
        .collect();
    ensure!(
        jobs.len() == 100 && jobs.iter().all(|(_, t)| t.solvable),
        "expected 100 solvable tasks"
    );
    let mut no_sight = params.clone();
    no_sight.eval.require_line_of_sight = false;
    let outcomes: Vec<(EpisodeResult, bool)> = jobs
        .par_iter()
        .map(|(sc, t)| {
            let out = episode(sc, t, &params, t.seed, "oracle", 1);
            let occluded =
                out.agents[0].stopped && check_success(sc, &out.world, &out.agents, t, &no_sight);
            (out.result, occluded)
        })
        .collect();
    let results: Vec<EpisodeResult> = outcomes.iter().map(|(r, _)| r.clone()).collect();
    let (sr, spl, _) = compute_sr_spl_ne(&results).map_err(|e| e.to_string())?;
    ensure!(sr >= 0.95, "SR {sr:.3} < 0.95");
    ensure!(spl >= 0.90, "SPL {spl:.3} < 0.90");
    ensure!(
        (sr - spl).abs() <= 0.02,
        "SR {sr:.3} and SPL {spl:.3} differ by more than 0.02"
    );
    let unexplained: Vec<&str> = outcomes
        .iter()
        .filter(|(r, occluded)| !r.success && !occluded)
        .map(|(r, _)| r.task.id.as_str())
        .collect();
    ensure!(
        unexplained.is_empty(),
        "failures not caused by occlusion: {unexplained:?}"
    );
    let failed = results.iter().filter(|r| !r.success).count();
    Ok(format!(
        "SR {sr:.3}, SPL {spl:.3}, {failed} occluded failures, {}",
        within(Duration::from_secs(300), t0)?
    ))
}

// Exploration structure

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn exploration_structure() -> Check {
    let t0 = Instant::now();
    let params = EpisodeParams::default();
    ensure!(
        params.budgets.b3 == 200,
        "exploration budget is {}",
        params.budgets.b3
    );
    let seeds: Vec<u64> = (0..20).collect();
    let mut detail = Vec::new();
    for policy in ["random", "frontier"] {
        let results: Vec<EpisodeResult> = seeds
            .par_iter()
            .map(|&s| {
                let sc = generate_scene(&SceneGenConfig::default(), s).expect("scene");
                let t = generate_tasks(&sc, Benchmark::B3, 1, s, 1, &params)
                    .expect("tasks")
                    .remove(0);
                episode(&sc, &t, &params, s, policy, 1).result
            })
            .collect();
        let ser = mean(results.iter().map(|r| r.ser.unwrap_or(0.0)));
        ensure!(
            ser > 0.0 && ser < 1.0,
            "{policy} mean SER {ser:.3} outside (0, 1)"
        );
        let errors: Vec<f64> = results.iter().filter_map(|r| r.mrmse_m).collect();
        ensure!(
            !errors.is_empty() && errors.iter().all(|e| e.is_finite()),
            "{policy} MRMSE not finite"
        );
        detail.push(format!(
            "{policy} SER {ser:.3} MRMSE {:.3} m",
            mean(errors.into_iter())
        ));
    }

    let coverage: Vec<f64> = seeds
        .par_iter()
        .map(|&s| {
            let sc = generate_scene(&SceneGenConfig::single_room(), s).expect("scene");
            let t = generate_tasks(&sc, Benchmark::B3, 1, s, 1, &params)
                .expect("tasks")
                .remove(0);
            let out = episode(&sc, &t, &params, s, "frontier", 1);
            reachable_coverage(
                &out.beliefs[0].grid,
                &sc.grid,
                t.start[0].cell(sc.resolution),
            )
        })
        .collect();
    let short: Vec<(usize, f64)> = coverage
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, c)| *c < 1.0)
        .collect();
    ensure!(
        short.is_empty(),
        "frontier single-room coverage below 100% on seeds {short:?}"
    );

    let pairs: Vec<(f64, f64)> = seeds
        .par_iter()
        .map(|&s| {
            let sc = generate_scene(&SceneGenConfig::default(), s).expect("scene");
            let one = generate_tasks(&sc, Benchmark::B3, 1, s, 1, &params)
                .expect("tasks")
                .remove(0);
            let two = generate_tasks(&sc, Benchmark::B3, 1, s, 2, &params)
                .expect("tasks")
                .remove(0);
            let a = episode(&sc, &one, &params, s, "frontier", 1)
                .result
                .ser
                .unwrap_or(0.0);
            let b = episode(&sc, &two, &params, s, "frontier", 2)
                .result
                .ser
                .unwrap_or(0.0);
            (a, b)
        })
        .collect();
    let better = pairs.iter().filter(|(a, b)| b >= a).count();
    ensure!(
        better * 10 >= pairs.len() * 8,
        "two agents matched one on only {better}/{} seeds",
        pairs.len()
    );
    detail.push(format!(
        "single-room coverage 100% on 20 seeds, two agents >= one on {better}/20"
    ));
    detail.push(within(Duration::from_secs(600), t0)?);
    Ok(detail.join(", "))
}

// Social manipulation failure mode

fn admin_failure_mode() -> Check {
    let t0 = Instant::now();
    let params = EpisodeParams::default();
    ensure!(
        params.budgets.b4 == 50,
        "manipulation budget is {}",
        params.budgets.b4
    );
    let per_seed: Vec<(Vec<EpisodeResult>, Vec<EpisodeResult>, f64)> = (0..20u64)
        .into_par_iter()
        .map(|s| {
            let sc = generate_scene(&SceneGenConfig::default(), s).expect("scene");
            let explore = generate_tasks(&sc, Benchmark::B3, 1, s, 2, &params)
                .expect("tasks")
                .remove(0);
            let setup = EpisodeSetup {
                scene: &sc,
                task: &explore,
                params: &params,
                seed: s,
                admin: None,
            };
            let admin =
                exploration_admin(setup, &mut team("random", 2)).expect("exploration admin");
            let admin_ser = compute_ser_mrmse(&admin.graph, &sc, params.eval.match_radius_m)
                .expect("ser")
                .0;
            let tasks =
                generate_tasks(&sc, Benchmark::B4Hierarchical, 2, s, 2, &params).expect("tasks");
            let run = |admin: Administrator| {
                tasks
                    .iter()
                    .filter(|t| t.solvable)
                    .map(|t| {
                        let setup = EpisodeSetup {
                            scene: &sc,
                            task: t,
                            params: &params,
                            seed: t.seed,
                            admin: Some(admin.clone()),
                        };
                        run_episode(setup, &mut team("querying", 2))
                            .expect("episode")
                            .result
                    })
                    .collect::<Vec<_>>()
            };
            let ex = run(admin);
            let gt = run(ground_truth_admin(&sc, &params));
            (ex, gt, admin_ser)
        })
        .collect();
    let ex: Vec<EpisodeResult> = per_seed.iter().flat_map(|p| p.0.clone()).collect();
    let gt: Vec<EpisodeResult> = per_seed.iter().flat_map(|p| p.1.clone()).collect();
    let admin_ser = mean(per_seed.iter().map(|p| p.2));
    ensure!(gt.len() >= 20, "only {} solvable tasks", gt.len());
    let (ex_sr, _, _) = compute_sr_spl_ne(&ex).map_err(|e| e.to_string())?;
    let (_, ex_lpl) = compute_mpl_lpl(&ex).map_err(|e| e.to_string())?;
    let (gt_sr, _, _) = compute_sr_spl_ne(&gt).map_err(|e| e.to_string())?;
    ensure!(
        admin_ser < 0.5,
        "exploration administrator SER {admin_ser:.3} is not low"
    );
    ensure!(ex_sr <= 0.15, "explored administrator SR {ex_sr:.3} > 0.15");
    ensure!(ex_lpl == 50, "explored administrator LPL {ex_lpl} != 50");
    ensure!(
        gt_sr >= 0.7,
        "ground-truth administrator SR {gt_sr:.3} < 0.7"
    );
    Ok(format!(
        "explored admin (SER {admin_ser:.3}) SR {ex_sr:.3} LPL {ex_lpl}, ground-truth admin SR {gt_sr:.3} on {} tasks, {}",
        gt.len(),
        within(Duration::from_secs(600), t0)?
    ))
}

// Metric formulas

fn result(success: bool, l: f64, p: f64) -> EpisodeResult {
    EpisodeResult {
        task: Task {
            id: "t".into(),
            scene_id: "s".into(),
            benchmark: Benchmark::B1,
            instruction: String::new(),
            goal: Goal::default(),
            start: vec![Pose::new(0.0, 0.0, 0.0)],
            shortest_path_m: l,
            solvable: true,
            seed: 0,
        },
        policy: "p".into(),
        success,
        failure: None,
        shortest_path_m: l,
        executed_path_m: p,
        executed_actions: 1,
        budget: 500,
        final_distance_m: None,
        ser: None,
        mrmse_m: None,
        ticks: 1,
        agents: Vec::new(),
    }
}

fn greedy(cost: &[Vec<f64>]) -> f64 {
    let (n, m) = (cost.len(), cost[0].len());
    let (mut rows, mut cols) = (vec![false; n], vec![false; m]);
    let mut total = 0.0;
    for _ in 0..n.min(m) {
        let mut best = (f64::INFINITY, 0, 0);
        for i in (0..n).filter(|&i| !rows[i]) {
            for j in (0..m).filter(|&j| !cols[j]) {
                if cost[i][j] < best.0 {
                    best = (cost[i][j], i, j);
                }
            }
        }
        rows[best.1] = true;
        cols[best.2] = true;
        total += best.0;
    }
    total
}

fn metric_formulas() -> Check {
    let t0 = Instant::now();
    ensure!(
        spl_term(true, 10.0, 20.0) == 0.5,
        "SPL(l=10, p=20) = {}",
        spl_term(true, 10.0, 20.0)
    );

    let mut rng = rng_from_seed(2);
    for case in 0..10_000 {
        let results: Vec<EpisodeResult> = (0..rng.random_range(1..30))
            .map(|_| {
                result(
                    rng.random(),
                    rng.random_range(0.0..60.0),
                    rng.random_range(0.0..120.0),
                )
            })
            .collect();
        let (sr, spl, _) = compute_sr_spl_ne(&results).map_err(|e| e.to_string())?;
        ensure!(spl <= sr, "fuzz case {case}: SPL {spl} > SR {sr}");
    }

    let mut strictly = 0;
    for case in 0..500 {
        let (n, m) = (rng.random_range(2..=10), rng.random_range(2..=10));
        let a: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)))
            .collect();
        let b: Vec<(f64, f64)> = (0..m)
            .map(|_| (rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)))
            .collect();
        let cost: Vec<Vec<f64>> = a
            .iter()
            .map(|p| {
                b.iter()
                    .map(|q| (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2))
                    .collect()
            })
            .collect();
        let assigned = optimal_assignment(&cost);
        let mut cols: Vec<usize> = assigned.iter().flatten().copied().collect();
        ensure!(
            cols.len() == n.min(m),
            "case {case}: {} pairs for {n}x{m}",
            cols.len()
        );
        cols.sort_unstable();
        cols.dedup();
        ensure!(cols.len() == n.min(m), "case {case}: column assigned twice");
        let ours: f64 = assigned
            .iter()
            .enumerate()
            .filter_map(|(i, j)| j.map(|j| cost[i][j]))
            .sum();
        let g = greedy(&cost);
        ensure!(
            ours <= g + 1e-9,
            "case {case}: assignment {ours} worse than greedy {g}"
        );
        if ours < g - 1e-9 {
            strictly += 1;
        }
    }
    ensure!(strictly > 0, "assignment never beat greedy");

    let objects = [
        ("o1", "cup", Point::new(1.0, 1.0)),
        ("o2", "cup", Point::new(2.5, 1.0)),
        ("o3", "chair", Point::new(4.0, 4.0)),
    ];
    let scene = SceneSpec {
        id: "s".into(),
        resolution: 0.1,
        grid: OccupancyGrid::new(60, 60, 0.1, Occupancy::Free).map_err(|e| e.to_string())?,
        rooms: Vec::new(),
        objects: objects
            .iter()
            .map(|(id, class, c)| ObjectInstance {
                id: (*id).into(),
                class_label: (*class).into(),
                center: *c,
                footprint: Vec::new(),
                room_id: "room-0".into(),
                pickable: true,
            })
            .collect(),
        seed: 0,
    };
    let mut graph = SceneGraph::empty("s", "a0");
    for (id, class, c) in objects {
        graph
            .objects
            .push(node(id.into(), class, vec![contribution("a0", c, 1)]));
    }
    let (ser, mrmse) = compute_ser_mrmse(&graph, &scene, 2.0).map_err(|e| e.to_string())?;
    ensure!(
        ser == 1.0 && mrmse == Some(0.0),
        "perfect localization gave SER {ser}, MRMSE {mrmse:?}"
    );
    Ok(format!(
        "SPL hand case, 10^4 fuzzed sets, assignment below greedy on {strictly}/500, MRMSE 0, {}",
        within(Duration::from_secs(10), t0)?
    ))
}

// Merge algebra

fn contribution(agent: &str, at: Point, count: u32) -> Contribution {
    Contribution {
        agent: agent.into(),
        sum_x: at.x * count as f64,
        sum_y: at.y * count as f64,
        count,
    }
}

/// A node whose center is the mean of its contributions.
fn node(id: String, class: &str, contributions: Vec<Contribution>) -> ObjectNode {
    let n: u32 = contributions.iter().map(|c| c.count).sum();
    let (sx, sy) = contributions
        .iter()
        .fold((0.0, 0.0), |(x, y), c| (x + c.sum_x, y + c.sum_y));
    ObjectNode {
        id,
        class_label: class.into(),
        center: Point::new(sx / n as f64, sy / n as f64),
        observation_count: n,
        first_seen: 1,
        last_seen: 1,
        room_id: None,
        contributions,
    }
}

fn random_side(rng: &mut Rng, owner: &str, shared: &[(String, Point)]) -> (BeliefMap, SceneGraph) {
    let blank = OccupancyGrid::new(24, 18, 0.1, Occupancy::Unknown).expect("grid");
    let mut map = BeliefMap::empty("scene", owner, &blank);
    let known = rng.random_range(0.0..1.0);
    for i in 0..map.stamps.len() {
        if rng.random::<f64>() < known {
            let state = if rng.random::<f64>() < 0.3 {
                Occupancy::Obstacle
            } else {
                Occupancy::Free
            };
            map.grid.set(map.grid.cell_at(i), state);
            map.stamps[i] = rng.random_range(1..20);
        }
    }
    let mut graph = SceneGraph::empty("scene", owner);
    for k in 0..rng.random_range(0..6) {
        let p = Point::new(rng.random_range(0.0..2.4), rng.random_range(0.0..1.8));
        let class = ["cup", "chair", "lamp"][rng.random_range(0..3)];
        graph.objects.push(node(
            format!("{owner}-{k:03}"),
            class,
            vec![contribution(owner, p, rng.random_range(1..5))],
        ));
    }
    for (id, p) in shared {
        let mut cs = vec![
            contribution(owner, *p, rng.random_range(1..5)),
            contribution("a2", *p, 1),
        ];
        cs.sort_by(|x, y| x.agent.cmp(&y.agent));
        graph.objects.push(node(id.clone(), "cup", cs));
    }
    graph.objects.sort_by(|x, y| x.id.cmp(&y.id));
    (map, graph)
}

fn merge_algebra() -> Check {
    let t0 = Instant::now();
    const FUSION: f64 = 0.5;
    let mut rng = rng_from_seed(3);
    let same = |x: &SceneGraph, y: &SceneGraph| {
        x.objects == y.objects && x.rooms == y.rooms && x.adjacency == y.adjacency
    };
    for case in 0..500 {
        let shared: Vec<(String, Point)> = (0..rng.random_range(0..3))
            .map(|k| {
                (
                    format!("a2-{k:03}"),
                    Point::new(rng.random_range(0.0..2.4), rng.random_range(0.0..1.8)),
                )
            })
            .collect();
        let (ma, ga) = random_side(&mut rng, "a0", &shared);
        let (mb, gb) = random_side(&mut rng, "a1", &shared);
        let err = |e: gridbench_core::Error| format!("case {case}: {e}");

        let ((m, g), _) = merge((&ma, &ga), (&ma, &ga), FUSION).map_err(err)?;
        ensure!(
            m == ma && same(&g, &ga),
            "case {case}: merge is not idempotent"
        );

        let (em, eg) = (
            BeliefMap::empty("scene", "e", &ma.grid),
            SceneGraph::empty("scene", "e"),
        );
        let ((m, g), _) = merge((&ma, &ga), (&em, &eg), FUSION).map_err(err)?;
        ensure!(
            m == ma && g == ga,
            "case {case}: empty knowledge is not an identity"
        );

        let ((m, g), _) = merge((&ma, &ga), (&mb, &gb), FUSION).map_err(err)?;
        for i in 0..m.stamps.len() {
            let c = m.grid.cell_at(i);
            let knew = ma.grid.get(c).is_known() || mb.grid.get(c).is_known();
            ensure!(
                !knew || m.grid.get(c).is_known(),
                "case {case}: cell {c:?} forgotten"
            );
            ensure!(
                m.stamps[i] >= ma.stamps[i].max(mb.stamps[i]),
                "case {case}: stamp went back"
            );
        }
        ensure!(
            g.objects.len() >= ga.objects.len().max(gb.objects.len()),
            "case {case}: nodes lost"
        );

        let (mut xa, mut xga, mut xb, mut xgb) = (ma.clone(), ga.clone(), mb.clone(), gb.clone());
        let pose = Pose::new(0.5, 0.5, 0.0);
        exchange_if_in_range(
            Peer {
                pose,
                map: &mut xa,
                graph: &mut xga,
            },
            Peer {
                pose,
                map: &mut xb,
                graph: &mut xgb,
            },
            1.0,
            FUSION,
        )
        .map_err(err)?;
        ensure!(
            xa.grid == xb.grid && xa.stamps == xb.stamps && same(&xga, &xgb),
            "case {case}: exchange left the sides different"
        );
    }
    Ok(format!(
        "idempotence, identity, monotone knowledge, symmetric exchange on 500 pairs, {}",
        within(Duration::from_secs(30), t0)?
    ))
}

// Determinism

fn digests(dir: &Path) -> Vec<(String, String)> {
    let mut files = log_files(&dir.join("logs")).expect("logs");
    files.push(dir.join("metrics.csv"));
    files
        .iter()
        .map(|f| {
            let name = f
                .file_name()
                .expect("file name")
                .to_string_lossy()
                .into_owned();
            (
                name,
                hex::encode(Sha256::digest(fs::read(f).expect("artifact"))),
            )
        })
        .collect()
}

fn determinism() -> Check {
    let t0 = Instant::now();
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut compared = 0;
    for (benchmark, policy, agents) in [
        (Benchmark::B1, "frontier", 1),
        (Benchmark::B3, "random", 2),
        (Benchmark::B4Horizontal, "querying", 2),
    ] {
        let mut cfg = RunConfig {
            benchmark,
            agents,
            policies: vec![policy.into()],
            seeds: vec![0, 1],
            ..RunConfig::default()
        };
        cfg.scenes.count = 2;
        cfg.tasks.per_scene = 3;
        let mut hashes = Vec::new();
        for threads in [1, 4] {
            cfg.threads = threads;
            cfg.output_dir = root.path().join(format!("{benchmark}-{threads}"));
            run_suite(&cfg).map_err(|e| e.to_string())?;
            hashes.push(digests(&cfg.output_dir));
        }
        ensure!(
            hashes[0].len() == 13,
            "{benchmark}: {} artifacts",
            hashes[0].len()
        );
        for (a, b) in hashes[0].iter().zip(&hashes[1]) {
            ensure!(a == b, "{benchmark}: {} differs between reruns", a.0);
        }
        compared += hashes[0].len();
    }
    Ok(format!(
        "{compared} logs and CSVs byte-identical across reruns, {:.1?}",
        t0.elapsed()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("planner oracle equivalence", planner_equivalence),
        ("oracle navigation suite", oracle_navigation),
        ("exploration structure", exploration_structure),
        ("administrator failure mode", admin_failure_mode),
        ("metric formulas", metric_formulas),
        ("merge algebra", merge_algebra),
        ("determinism", determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("{}/{} criteria passed", 7 - failed, 7);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
