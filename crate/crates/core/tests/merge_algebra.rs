//! Algebraic properties of belief-map and scene-graph merging.

use gridbench_core::grid::{Occupancy, OccupancyGrid, Point};
use gridbench_core::interaction::{exchange_if_in_range, Peer};
use gridbench_core::mapping::{merge, BeliefMap, Contribution, ObjectNode, RoomNode, SceneGraph};
use gridbench_core::sensing::Pose;
use gridbench_core::{rng_from_seed, Rng};
use proptest::prelude::*;
use rand::Rng as _;

const W: u32 = 20;
const H: u32 = 15;
const FUSION: f64 = 0.5;
const CLASSES: [&str; 3] = ["cup", "chair", "lamp"];

fn random_map(rng: &mut Rng, owner: &str) -> BeliefMap {
    let truth = OccupancyGrid::new(W, H, 0.1, Occupancy::Unknown).unwrap();
    let mut map = BeliefMap::empty("scene", owner, &truth);
    let known = rng.random_range(0.0..1.0);
    for i in 0..map.stamps.len() {
        if rng.random::<f64>() < known {
            let c = map.grid.cell_at(i);
            let s = if rng.random::<f64>() < 0.3 {
                Occupancy::Obstacle
            } else {
                Occupancy::Free
            };
            map.grid.set(c, s);
            map.stamps[i] = rng.random_range(1..20);
        }
    }
    map
}

fn node(id: String, class: &str, contributions: Vec<Contribution>, rng: &mut Rng) -> ObjectNode {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0u32);
    for c in &contributions {
        sx += c.sum_x;
        sy += c.sum_y;
        n += c.count;
    }
    let first = rng.random_range(1..10);
    ObjectNode {
        id,
        class_label: class.into(),
        center: Point::new(sx / n as f64, sy / n as f64),
        observation_count: n,
        first_seen: first,
        last_seen: first + rng.random_range(0..10),
        room_id: Some("room-0".into()),
        contributions,
    }
}

fn contribution(agent: &str, at: Point, count: u32) -> Contribution {
    Contribution {
        agent: agent.into(),
        sum_x: at.x * count as f64,
        sum_y: at.y * count as f64,
        count,
    }
}

fn random_point(rng: &mut Rng) -> Point {
    Point::new(
        rng.random_range(0.0..W as f64 * 0.1),
        rng.random_range(0.0..H as f64 * 0.1),
    )
}

/// Two graphs with private nodes plus a few shared lineages that both
/// agents have contributed to.
fn random_graphs(rng: &mut Rng) -> (SceneGraph, SceneGraph) {
    let mut ga = SceneGraph::empty("scene", "a0");
    let mut gb = SceneGraph::empty("scene", "a1");
    for (g, owner) in [(&mut ga, "a0"), (&mut gb, "a1")] {
        for k in 0..rng.random_range(0..6) {
            let class = CLASSES[rng.random_range(0..CLASSES.len())];
            let p = random_point(rng);
            let c = vec![contribution(owner, p, rng.random_range(1..5))];
            g.objects
                .push(node(format!("{owner}-{k:03}"), class, c, rng));
        }
        g.rooms.push(RoomNode {
            id: "room-0".into(),
            label: "kitchen".into(),
        });
    }
    for k in 0..rng.random_range(0..3) {
        let class = CLASSES[rng.random_range(0..CLASSES.len())];
        let p = random_point(rng);
        let (ca, cb) = (rng.random_range(1..5), rng.random_range(1..5));
        let shared = contribution("a2", p, rng.random_range(1..3));
        let mut a = vec![contribution("a0", p, ca), shared.clone()];
        let mut b = vec![contribution("a1", p, cb), shared];
        a.sort_by(|x, y| x.agent.cmp(&y.agent));
        b.sort_by(|x, y| x.agent.cmp(&y.agent));
        let id = format!("a2-{k:03}");
        ga.objects.push(node(id.clone(), class, a, rng));
        gb.objects.push(node(id, class, b, rng));
    }
    ga.objects.sort_by(|x, y| x.id.cmp(&y.id));
    gb.objects.sort_by(|x, y| x.id.cmp(&y.id));
    (ga, gb)
}

fn pair(seed: u64) -> ((BeliefMap, SceneGraph), (BeliefMap, SceneGraph)) {
    let mut rng = rng_from_seed(seed);
    let ma = random_map(&mut rng, "a0");
    let mb = random_map(&mut rng, "a1");
    let (ga, gb) = random_graphs(&mut rng);
    ((ma, ga), (mb, gb))
}

fn same_content(x: &SceneGraph, y: &SceneGraph) -> bool {
    x.objects == y.objects && x.rooms == y.rooms && x.adjacency == y.adjacency
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn merge_is_idempotent(seed in any::<u64>()) {
        let ((m, g), _) = pair(seed);
        let ((mm, gm), report) = merge((&m, &g), (&m, &g), FUSION).unwrap();
        prop_assert_eq!(&mm, &m);
        prop_assert!(same_content(&gm, &g));
        prop_assert_eq!(report.cells_gained, 0);
        prop_assert_eq!(report.nodes_added, 0);
    }

    #[test]
    fn empty_knowledge_is_the_identity(seed in any::<u64>()) {
        let ((m, g), _) = pair(seed);
        let em = BeliefMap::empty("scene", "e", &m.grid);
        let eg = SceneGraph::empty("scene", "e");
        let ((left_m, left_g), _) = merge((&m, &g), (&em, &eg), FUSION).unwrap();
        prop_assert_eq!(&left_m, &m);
        prop_assert_eq!(&left_g, &g);
        let ((right_m, right_g), _) = merge((&em, &eg), (&m, &g), FUSION).unwrap();
        prop_assert_eq!(&right_m.grid, &m.grid);
        prop_assert_eq!(&right_m.stamps, &m.stamps);
        prop_assert!(same_content(&right_g, &g));
    }

    #[test]
    fn merging_never_forgets(seed in any::<u64>()) {
        let ((ma, ga), (mb, gb)) = pair(seed);
        let ((m, g), report) = merge((&ma, &ga), (&mb, &gb), FUSION).unwrap();
        for i in 0..m.stamps.len() {
            let c = m.grid.cell_at(i);
            if ma.grid.get(c).is_known() || mb.grid.get(c).is_known() {
                prop_assert!(m.grid.get(c).is_known());
            }
            prop_assert!(m.stamps[i] >= ma.stamps[i].max(mb.stamps[i]));
        }
        prop_assert!(m.known_count() >= ma.known_count().max(mb.known_count()));
        prop_assert_eq!(report.cells_gained, m.known_count() - ma.known_count());
        prop_assert!(g.objects.len() >= ga.objects.len().max(gb.objects.len()));
        let total = |g: &SceneGraph| g.objects.iter().map(|n| n.observation_count).sum::<u32>();
        prop_assert!(total(&g) >= total(&ga).max(total(&gb)));
    }

    #[test]
    fn exchange_leaves_both_sides_equal(seed in any::<u64>()) {
        let ((mut ma, mut ga), (mut mb, mut gb)) = pair(seed);
        let pose = Pose::new(0.5, 0.5, 0.0);
        let done = exchange_if_in_range(
            Peer { pose, map: &mut ma, graph: &mut ga },
            Peer { pose, map: &mut mb, graph: &mut gb },
            1.0,
            FUSION,
        )
        .unwrap();
        prop_assert!(done.is_some());
        prop_assert_eq!(&ma.grid, &mb.grid);
        prop_assert_eq!(&ma.stamps, &mb.stamps);
        prop_assert!(same_content(&ga, &gb));
        prop_assert_eq!(ga.owner.as_str(), "a0");
        prop_assert_eq!(gb.owner.as_str(), "a1");
    }
}

#[test]
fn out_of_range_peers_do_not_exchange() {
    let ((mut ma, mut ga), (mut mb, mut gb)) = pair(3);
    let (before_a, before_b) = (ma.clone(), mb.clone());
    let r = exchange_if_in_range(
        Peer {
            pose: Pose::new(0.0, 0.0, 0.0),
            map: &mut ma,
            graph: &mut ga,
        },
        Peer {
            pose: Pose::new(5.0, 0.0, 0.0),
            map: &mut mb,
            graph: &mut gb,
        },
        3.0,
        FUSION,
    )
    .unwrap();
    assert!(r.is_none());
    assert_eq!(ma, before_a);
    assert_eq!(mb, before_b);
}
