//! Per-agent belief maps, semantic scene graphs and their merge.
//!
//! Object nodes keep per-agent provenance: the running sum and count of the
//! measurements each agent contributed. A node's center is the mean of all
//! contributions, and merging two graphs joins provenance by keeping, for
//! each agent, the record with the larger count. That makes merge
//! idempotent and commutative while still averaging genuinely distinct
//! observations.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::grid::{Occupancy, OccupancyGrid, Point};
use crate::sensing::Observation;
use crate::world::{SceneSpec, World};
use crate::Error;

/// An agent's partial view of the occupancy grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefMap {
    pub scene_id: String,
    pub owner: String,
    pub grid: OccupancyGrid,
    /// Step at which each cell was last written; 0 for never.
    pub stamps: Vec<u32>,
}

impl BeliefMap {
    /// All-unknown map shaped like `truth`.
    pub fn empty(scene_id: &str, owner: &str, truth: &OccupancyGrid) -> Self {
        BeliefMap {
            scene_id: scene_id.into(),
            owner: owner.into(),
            grid: OccupancyGrid::new(
                truth.width(),
                truth.height(),
                truth.resolution(),
                Occupancy::Unknown,
            )
            .expect("shape copied from a valid grid"),
            stamps: vec![0; truth.len()],
        }
    }

    /// Fully known map equal to `truth`.
    pub fn known(scene_id: &str, owner: &str, truth: &OccupancyGrid) -> Self {
        BeliefMap {
            scene_id: scene_id.into(),
            owner: owner.into(),
            grid: truth.clone(),
            stamps: vec![0; truth.len()],
        }
    }

    pub fn known_count(&self) -> usize {
        self.grid.known_count()
    }
}

/// Measurements one agent contributed to a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub agent: String,
    pub sum_x: f64,
    pub sum_y: f64,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectNode {
    pub id: String,
    pub class_label: String,
    pub center: Point,
    pub observation_count: u32,
    pub first_seen: u32,
    pub last_seen: u32,
    pub room_id: Option<String>,
    /// Sorted by agent id.
    pub contributions: Vec<Contribution>,
}

impl ObjectNode {
    fn recompute(&mut self) {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0u32);
        for c in &self.contributions {
            sx += c.sum_x;
            sy += c.sum_y;
            n += c.count;
        }
        self.observation_count = n;
        if n > 0 {
            self.center = Point::new(sx / n as f64, sy / n as f64);
        }
    }

    fn add_measurement(&mut self, agent: &str, m: Point, step: u32) {
        match self
            .contributions
            .binary_search_by(|c| c.agent.as_str().cmp(agent))
        {
            Ok(i) => {
                let c = &mut self.contributions[i];
                c.sum_x += m.x;
                c.sum_y += m.y;
                c.count += 1;
            }
            Err(i) => self.contributions.insert(
                i,
                Contribution {
                    agent: agent.into(),
                    sum_x: m.x,
                    sum_y: m.y,
                    count: 1,
                },
            ),
        }
        self.first_seen = self.first_seen.min(step);
        self.last_seen = self.last_seen.max(step);
        self.recompute();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RoomNode {
    pub id: String,
    pub label: String,
}

/// Discovered rooms and object instances with containment and adjacency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub scene_id: String,
    pub owner: String,
    pub next_seq: u32,
    /// Sorted by id.
    pub objects: Vec<ObjectNode>,
    /// Sorted by id.
    pub rooms: Vec<RoomNode>,
    /// Room-adjacency pairs `(a, b)` with `a < b`, sorted.
    pub adjacency: Vec<(String, String)>,
}

impl SceneGraph {
    pub fn empty(scene_id: &str, owner: &str) -> Self {
        SceneGraph {
            scene_id: scene_id.into(),
            owner: owner.into(),
            next_seq: 0,
            objects: Vec::new(),
            rooms: Vec::new(),
            adjacency: Vec::new(),
        }
    }

    /// Privileged graph holding every instance at its true center.
    pub fn ground_truth(scene: &SceneSpec, owner: &str) -> Self {
        let world = World::new(scene.clone());
        let mut g = SceneGraph::empty(&scene.id, owner);
        g.rooms = scene
            .rooms
            .iter()
            .map(|r| RoomNode {
                id: r.id.clone(),
                label: r.label.clone(),
            })
            .collect();
        g.rooms.sort();
        g.objects = scene
            .objects
            .iter()
            .map(|o| ObjectNode {
                id: o.id.clone(),
                class_label: o.class_label.clone(),
                center: o.center,
                observation_count: 1,
                first_seen: 0,
                last_seen: 0,
                room_id: Some(o.room_id.clone()),
                contributions: vec![Contribution {
                    agent: owner.into(),
                    sum_x: o.center.x,
                    sum_y: o.center.y,
                    count: 1,
                }],
            })
            .collect();
        g.objects.sort_by(|a, b| a.id.cmp(&b.id));
        g.adjacency = world
            .room_adjacency()
            .iter()
            .map(|&(a, b)| (scene.rooms[a].id.clone(), scene.rooms[b].id.clone()))
            .map(|(a, b)| if a < b { (a, b) } else { (b, a) })
            .collect();
        g.adjacency.sort();
        g
    }

    pub fn node(&self, id: &str) -> Option<&ObjectNode> {
        self.objects.iter().find(|n| n.id == id)
    }

    pub fn room_label(&self, room_id: &str) -> Option<&str> {
        self.rooms
            .iter()
            .find(|r| r.id == room_id)
            .map(|r| r.label.as_str())
    }

    /// Containment edges `(object node, room)`.
    pub fn containment(&self) -> Vec<(String, String)> {
        self.objects
            .iter()
            .filter_map(|n| n.room_id.as_ref().map(|r| (n.id.clone(), r.clone())))
            .collect()
    }

    fn sort(&mut self) {
        self.objects.sort_by(|a, b| a.id.cmp(&b.id));
        self.rooms.sort();
        self.rooms.dedup();
        self.adjacency.sort();
        self.adjacency.dedup();
    }
}

/// Result of merging one agent's knowledge into another's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MergeReport {
    pub cells_gained: usize,
    pub nodes_added: usize,
    pub nodes_fused: usize,
}

/// Folds one observation into a belief map and scene graph.
///
/// Revealed cells overwrite the map; each visible object fuses into the
/// nearest same-class node within `fusion_radius_m`, or starts a new node.
/// Room nodes appear once any of their cells is known.
pub fn integrate(
    map: &mut BeliefMap,
    graph: &mut SceneGraph,
    obs: &Observation,
    world: &World,
    fusion_radius_m: f64,
) {
    let scene = world.scene();
    let mut rooms_seen = BTreeSet::new();
    for &(c, s) in &obs.visible_cells {
        if s == Occupancy::Unknown {
            continue;
        }
        if let Some(i) = map.grid.index(c) {
            map.grid.set(c, s);
            map.stamps[i] = map.stamps[i].max(obs.step);
            if let Some(r) = world.room_index_at(c) {
                rooms_seen.insert(r);
            }
        }
    }
    let mut rooms_changed = false;
    for r in rooms_seen {
        let room = &scene.rooms[r];
        if graph.rooms.iter().all(|n| n.id != room.id) {
            graph.rooms.push(RoomNode {
                id: room.id.clone(),
                label: room.label.clone(),
            });
            rooms_changed = true;
        }
    }
    if rooms_changed {
        graph.rooms.sort();
        let known: BTreeSet<&str> = graph.rooms.iter().map(|r| r.id.as_str()).collect();
        graph.adjacency = world
            .room_adjacency()
            .iter()
            .map(|&(a, b)| (scene.rooms[a].id.clone(), scene.rooms[b].id.clone()))
            .filter(|(a, b)| known.contains(a.as_str()) && known.contains(b.as_str()))
            .map(|(a, b)| if a < b { (a, b) } else { (b, a) })
            .collect();
        graph.adjacency.sort();
        graph.adjacency.dedup();
    }

    let owner = map.owner.clone();
    for vis in &obs.visible_objects {
        let nearest = graph
            .objects
            .iter()
            .enumerate()
            .filter(|(_, n)| n.class_label == vis.class_label)
            .map(|(i, n)| (i, n.center.dist(vis.center)))
            .filter(|&(_, d)| d <= fusion_radius_m)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let idx = match nearest {
            Some((i, _)) => {
                graph.objects[i].add_measurement(&owner, vis.center, obs.step);
                i
            }
            None => {
                let id = format!("{}-{:04}", graph.owner, graph.next_seq);
                graph.next_seq += 1;
                let mut node = ObjectNode {
                    id,
                    class_label: vis.class_label.clone(),
                    center: vis.center,
                    observation_count: 0,
                    first_seen: obs.step,
                    last_seen: obs.step,
                    room_id: None,
                    contributions: Vec::new(),
                };
                node.add_measurement(&owner, vis.center, obs.step);
                graph.objects.push(node);
                graph.objects.len() - 1
            }
        };
        let node = &mut graph.objects[idx];
        if let Some(c) = map.grid.cell_of(node.center) {
            if map.grid.get(c).is_known() {
                if let Some(r) = world.room_index_at(c) {
                    node.room_id = Some(scene.rooms[r].id.clone());
                }
            }
        }
    }
    graph.objects.sort_by(|a, b| a.id.cmp(&b.id));
}

fn join_contributions(a: &[Contribution], b: &[Contribution]) -> Vec<Contribution> {
    let mut by_agent: BTreeMap<&str, &Contribution> = BTreeMap::new();
    for c in a.iter().chain(b) {
        by_agent
            .entry(c.agent.as_str())
            .and_modify(|cur| {
                let better = c.count > cur.count
                    || (c.count == cur.count
                        && (c.sum_x, c.sum_y).partial_cmp(&(cur.sum_x, cur.sum_y))
                            == Some(core::cmp::Ordering::Less));
                if better {
                    *cur = c;
                }
            })
            .or_insert(c);
    }
    by_agent.into_values().cloned().collect()
}

fn fuse(a: &ObjectNode, b: &ObjectNode) -> ObjectNode {
    let (first, second) = if a.id <= b.id { (a, b) } else { (b, a) };
    let mut node = ObjectNode {
        id: first.id.clone(),
        class_label: first.class_label.clone(),
        center: first.center,
        observation_count: 0,
        first_seen: a.first_seen.min(b.first_seen),
        last_seen: a.last_seen.max(b.last_seen),
        room_id: first.room_id.clone().or_else(|| second.room_id.clone()),
        contributions: join_contributions(&a.contributions, &b.contributions),
    };
    node.recompute();
    node
}

/// Merges `b` into a copy of `a`.
///
/// Cells: known beats unknown; conflicting known states go to the newer
/// stamp, with ties resolved toward `Obstacle`. Nodes sharing an id are the
/// same lineage and always fuse; remaining same-class pairs within the
/// fusion radius fuse closest-first, one-to-one. The result keeps `a`'s
/// owner.
pub fn merge(
    a: (&BeliefMap, &SceneGraph),
    b: (&BeliefMap, &SceneGraph),
    fusion_radius_m: f64,
) -> Result<((BeliefMap, SceneGraph), MergeReport), Error> {
    let (ma, ga) = a;
    let (mb, gb) = b;
    for (l, r) in [
        (&ma.scene_id, &mb.scene_id),
        (&ma.scene_id, &ga.scene_id),
        (&mb.scene_id, &gb.scene_id),
    ] {
        if l != r {
            return Err(Error::SceneMismatch {
                left: l.clone(),
                right: r.clone(),
            });
        }
    }
    if ma.grid.width() != mb.grid.width() || ma.grid.height() != mb.grid.height() {
        return Err(Error::SceneMismatch {
            left: format!("{} ({}x{})", ma.scene_id, ma.grid.width(), ma.grid.height()),
            right: format!("{} ({}x{})", mb.scene_id, mb.grid.width(), mb.grid.height()),
        });
    }

    let mut map = ma.clone();
    for i in 0..map.stamps.len() {
        let c = map.grid.cell_at(i);
        let sa = ma.grid.cells()[i];
        let sb = mb.grid.cells()[i];
        let (ta, tb) = (ma.stamps[i], mb.stamps[i]);
        let s = match (sa.is_known(), sb.is_known()) {
            (false, false) => Occupancy::Unknown,
            (true, false) => sa,
            (false, true) => sb,
            (true, true) if sa == sb => sa,
            (true, true) => match ta.cmp(&tb) {
                core::cmp::Ordering::Greater => sa,
                core::cmp::Ordering::Less => sb,
                core::cmp::Ordering::Equal => Occupancy::Obstacle,
            },
        };
        map.grid.set(c, s);
        map.stamps[i] = ta.max(tb);
    }
    let cells_gained = map.known_count() - ma.known_count();

    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut used_a = vec![false; ga.objects.len()];
    let mut used_b = vec![false; gb.objects.len()];
    for (i, na) in ga.objects.iter().enumerate() {
        if let Ok(j) = gb.objects.binary_search_by(|n| n.id.cmp(&na.id)) {
            pairs.push((i, j));
            used_a[i] = true;
            used_b[j] = true;
        }
    }
    let mut candidates: Vec<(f64, &str, &str, usize, usize)> = Vec::new();
    for (i, na) in ga.objects.iter().enumerate() {
        if used_a[i] {
            continue;
        }
        for (j, nb) in gb.objects.iter().enumerate() {
            if used_b[j] || na.class_label != nb.class_label {
                continue;
            }
            let d = na.center.dist(nb.center);
            if d <= fusion_radius_m {
                let (lo, hi) = if na.id <= nb.id {
                    (na.id.as_str(), nb.id.as_str())
                } else {
                    (nb.id.as_str(), na.id.as_str())
                };
                candidates.push((d, lo, hi, i, j));
            }
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(y.1)).then(x.2.cmp(y.2)));
    let mut nodes_fused = 0;
    for (_, _, _, i, j) in candidates {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs.push((i, j));
            nodes_fused += 1;
        }
    }

    let mut objects: Vec<ObjectNode> = Vec::with_capacity(ga.objects.len() + gb.objects.len());
    for (i, n) in ga.objects.iter().enumerate() {
        if !used_a[i] {
            objects.push(n.clone());
        }
    }
    for &(i, j) in &pairs {
        objects.push(fuse(&ga.objects[i], &gb.objects[j]));
    }
    let mut nodes_added = 0;
    for (j, n) in gb.objects.iter().enumerate() {
        if !used_b[j] {
            objects.push(n.clone());
            nodes_added += 1;
        }
    }
    let mut graph = SceneGraph {
        scene_id: ga.scene_id.clone(),
        owner: ga.owner.clone(),
        next_seq: ga.next_seq,
        objects,
        rooms: ga.rooms.iter().chain(&gb.rooms).cloned().collect(),
        adjacency: ga.adjacency.iter().chain(&gb.adjacency).cloned().collect(),
    };
    graph.sort();
    Ok((
        (map, graph),
        MergeReport {
            cells_gained,
            nodes_added,
            nodes_fused,
        },
    ))
}

/// Fraction of ground-truth instances matched by `graph`.
pub fn graph_coverage(graph: &SceneGraph, scene: &SceneSpec, match_radius_m: f64) -> f64 {
    if scene.objects.is_empty() {
        return 0.0;
    }
    let m = crate::metrics::match_instances(graph, scene, match_radius_m);
    m.pairs.len() as f64 / scene.objects.len() as f64
}
