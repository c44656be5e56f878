//! Ground-truth scenes: rooms, object instances, procedural generation and
//! the top-down occupancy projection.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::grid::{cell_center, flood_fill, Cell, Occupancy, OccupancyGrid, Point, NEIGHBORS4};
use crate::{rng_from_seed, Error};

/// A semantic room: a label and the interior cells it owns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub id: String,
    pub label: String,
    /// Sorted row-major. Serialized as `[row, first_col, last_col]` spans.
    #[serde(with = "spans")]
    pub cells: Vec<Cell>,
}

/// One object instance in the scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: String,
    pub class_label: String,
    pub center: Point,
    pub footprint: Vec<Cell>,
    pub room_id: String,
    pub pickable: bool,
}

impl ObjectInstance {
    /// Inclusive cell bounding box of the footprint.
    pub fn bbox(&self) -> Option<(Cell, Cell)> {
        let first = *self.footprint.first()?;
        Some(self.footprint.iter().fold((first, first), |(lo, hi), c| {
            (
                Cell::new(lo.x.min(c.x), lo.y.min(c.y)),
                Cell::new(hi.x.max(c.x), hi.y.max(c.y)),
            )
        }))
    }

    /// Closest point of the footprint to `p` (the center when carried).
    pub fn nearest_point(&self, p: Point, resolution: f64) -> Point {
        match self.bbox() {
            None => self.center,
            Some((lo, hi)) => Point::new(
                p.x.clamp(lo.x as f64 * resolution, (hi.x + 1) as f64 * resolution),
                p.y.clamp(lo.y as f64 * resolution, (hi.y + 1) as f64 * resolution),
            ),
        }
    }
}

/// Ground-truth world description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SceneRepr", into = "SceneRepr")]
pub struct SceneSpec {
    pub id: String,
    pub resolution: f64,
    pub grid: OccupancyGrid,
    pub rooms: Vec<Room>,
    pub objects: Vec<ObjectInstance>,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneRepr {
    id: String,
    resolution: f64,
    width: u32,
    height: u32,
    cells: Vec<String>,
    rooms: Vec<Room>,
    objects: Vec<ObjectInstance>,
    seed: u64,
}

impl From<SceneSpec> for SceneRepr {
    fn from(s: SceneSpec) -> Self {
        SceneRepr {
            width: s.grid.width(),
            height: s.grid.height(),
            cells: s.grid.to_rows(),
            id: s.id,
            resolution: s.resolution,
            rooms: s.rooms,
            objects: s.objects,
            seed: s.seed,
        }
    }
}

impl TryFrom<SceneRepr> for SceneSpec {
    type Error = Error;

    fn try_from(r: SceneRepr) -> Result<Self, Error> {
        let grid = OccupancyGrid::from_rows(&r.cells, r.resolution)?;
        if grid.width() != r.width || grid.height() != r.height {
            return Err(Error::Invalid(format!(
                "declared size {}x{} does not match cells {}x{}",
                r.width,
                r.height,
                grid.width(),
                grid.height()
            )));
        }
        Ok(SceneSpec {
            id: r.id,
            resolution: r.resolution,
            grid,
            rooms: r.rooms,
            objects: r.objects,
            seed: r.seed,
        })
    }
}

impl SceneSpec {
    pub fn object(&self, id: &str) -> Option<&ObjectInstance> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn room(&self, id: &str) -> Option<&Room> {
        self.rooms.iter().find(|r| r.id == id)
    }

    pub fn room_label(&self, room_id: &str) -> Option<&str> {
        self.room(room_id).map(|r| r.label.as_str())
    }

    /// Checks every structural invariant of a ground-truth scene.
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::Validation(m));
        if !(self.resolution > 0.0) {
            return bad(format!(
                "resolution must be positive, got {}",
                self.resolution
            ));
        }
        if libm::fabs(self.grid.resolution() - self.resolution) > 1e-12 {
            return bad("grid resolution differs from scene resolution".into());
        }
        if self.grid.count(Occupancy::Unknown) > 0 {
            return bad("ground-truth grid contains unknown cells".into());
        }
        let n = self.grid.len();
        let mut owner: Vec<Option<usize>> = vec![None; n];
        let mut ids = BTreeSet::new();
        for (ri, room) in self.rooms.iter().enumerate() {
            if !ids.insert(room.id.as_str()) {
                return bad(format!("duplicate room id {}", room.id));
            }
            if room.cells.is_empty() {
                return bad(format!("room {} has no cells", room.id));
            }
            for &c in &room.cells {
                let Some(i) = self.grid.index(c) else {
                    return bad(format!("room {} cell {c} is outside the grid", room.id));
                };
                if let Some(other) = owner[i] {
                    return bad(format!(
                        "cell {c} belongs to rooms {} and {}",
                        self.rooms[other].id, room.id
                    ));
                }
                owner[i] = Some(ri);
            }
            let reach = flood_fill(self.grid.width(), self.grid.height(), room.cells[0], |c| {
                self.grid.index(c).is_some_and(|i| owner[i] == Some(ri))
            });
            if reach.iter().filter(|&&r| r).count() != room.cells.len() {
                return bad(format!("room {} is not 4-connected", room.id));
            }
        }
        let mut footprint_cells = vec![false; n];
        let mut obj_ids = BTreeSet::new();
        for obj in &self.objects {
            if !obj_ids.insert(obj.id.as_str()) {
                return bad(format!("duplicate object id {}", obj.id));
            }
            let Some((lo, hi)) = obj.bbox() else {
                return bad(format!("object {} has an empty footprint", obj.id));
            };
            let room_idx = self.rooms.iter().position(|r| r.id == obj.room_id);
            let Some(room_idx) = room_idx else {
                return bad(format!(
                    "object {} names unknown room {}",
                    obj.id, obj.room_id
                ));
            };
            for &c in &obj.footprint {
                let Some(i) = self.grid.index(c) else {
                    return bad(format!("object {} cell {c} is outside the grid", obj.id));
                };
                if owner[i] != Some(room_idx) {
                    return bad(format!(
                        "object {} cell {c} lies outside room {}",
                        obj.id, obj.room_id
                    ));
                }
                if self.grid.get(c) != Occupancy::Obstacle {
                    return bad(format!("object {} cell {c} is not an obstacle", obj.id));
                }
                footprint_cells[i] = true;
            }
            let r = self.resolution;
            let inside = obj.center.x >= lo.x as f64 * r
                && obj.center.x <= (hi.x + 1) as f64 * r
                && obj.center.y >= lo.y as f64 * r
                && obj.center.y <= (hi.y + 1) as f64 * r;
            if !inside {
                return bad(format!(
                    "object {} center lies outside its footprint",
                    obj.id
                ));
            }
        }
        for (i, o) in owner.iter().enumerate() {
            if o.is_some() && self.grid.cells()[i] != Occupancy::Free && !footprint_cells[i] {
                let c = self.grid.cell_at(i);
                return bad(format!(
                    "room cell {c} is neither free nor an object footprint"
                ));
            }
        }
        Ok(())
    }
}

/// Top-down projection: footprints and walls become obstacles, the rest
/// stays free. Unknown cells in the input are treated as solid.
pub fn project_occupancy(scene: &SceneSpec) -> OccupancyGrid {
    let mut grid = scene.grid.clone();
    for (c, s) in scene.grid.iter() {
        if s == Occupancy::Unknown {
            grid.set(c, Occupancy::Obstacle);
        }
    }
    for obj in &scene.objects {
        for &c in &obj.footprint {
            grid.set(c, Occupancy::Obstacle);
        }
    }
    grid
}

/// One object class of the generator vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectClassSpec {
    pub label: String,
    pub pickable: bool,
    /// Allowed footprint sizes in cells, `[width, height]`, at most 4 cells.
    pub sizes: Vec<[u32; 2]>,
    /// Placement prior per room label. Empty means every room with weight 1.
    #[serde(default)]
    pub rooms: Vec<(String, f64)>,
}

/// Procedural scene generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneGenConfig {
    pub name: String,
    pub resolution: f64,
    pub width_m: [f64; 2],
    pub height_m: [f64; 2],
    pub rooms: [u32; 2],
    pub objects: [u32; 2],
    pub min_room_side_m: f64,
    pub doorway_m: f64,
    /// Free margin kept between an object and walls or other objects.
    pub clearance_m: f64,
    pub room_labels: Vec<String>,
    pub classes: Vec<ObjectClassSpec>,
}

fn class(label: &str, pickable: bool, sizes: &[[u32; 2]], rooms: &[&str]) -> ObjectClassSpec {
    ObjectClassSpec {
        label: label.into(),
        pickable,
        sizes: sizes.to_vec(),
        rooms: rooms.iter().map(|r| (String::from(*r), 1.0)).collect(),
    }
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        const SMALL: &[[u32; 2]] = &[[1, 1]];
        const MEDIUM: &[[u32; 2]] = &[[1, 2], [2, 1], [1, 1]];
        const LARGE: &[[u32; 2]] = &[[2, 2], [1, 3], [3, 1], [1, 4], [4, 1]];
        SceneGenConfig {
            name: "scene".into(),
            resolution: 0.1,
            width_m: [10.0, 40.0],
            height_m: [10.0, 40.0],
            rooms: [2, 6],
            objects: [8, 24],
            min_room_side_m: 3.0,
            doorway_m: 0.8,
            clearance_m: 0.3,
            room_labels: [
                "kitchen",
                "bedroom",
                "living room",
                "bathroom",
                "office",
                "dining room",
            ]
            .iter()
            .map(|s| String::from(*s))
            .collect(),
            classes: vec![
                class(
                    "chair",
                    true,
                    MEDIUM,
                    &["kitchen", "dining room", "office", "living room"],
                ),
                class(
                    "table",
                    false,
                    LARGE,
                    &["kitchen", "dining room", "living room"],
                ),
                class("sofa", false, LARGE, &["living room"]),
                class("bed", false, LARGE, &["bedroom"]),
                class("cup", true, SMALL, &["kitchen", "dining room", "office"]),
                class("book", true, SMALL, &["bedroom", "living room", "office"]),
                class(
                    "bottle",
                    true,
                    SMALL,
                    &["kitchen", "bathroom", "dining room"],
                ),
                class("apple", true, SMALL, &["kitchen", "dining room"]),
                class("laptop", true, SMALL, &["office", "bedroom"]),
                class("plant", true, MEDIUM, &[]),
                class("toilet", false, MEDIUM, &["bathroom"]),
                class("sink", false, MEDIUM, &["kitchen", "bathroom"]),
                class("fridge", false, MEDIUM, &["kitchen"]),
                class("tv", false, MEDIUM, &["living room", "bedroom"]),
                class("lamp", true, SMALL, &["bedroom", "living room", "office"]),
                class("pillow", true, SMALL, &["bedroom", "living room"]),
                class("bowl", true, SMALL, &["kitchen", "dining room"]),
            ],
        }
    }
}

impl SceneGenConfig {
    /// Single-room variant of the default vocabulary.
    pub fn single_room() -> Self {
        SceneGenConfig {
            width_m: [5.0, 8.0],
            height_m: [5.0, 8.0],
            rooms: [1, 1],
            objects: [3, 8],
            ..Self::default()
        }
    }

    fn check(&self) -> Result<(), Error> {
        let err = |m: String| Err(Error::Generation(m));
        if !(self.resolution > 0.0) {
            return err(format!(
                "resolution must be positive, got {}",
                self.resolution
            ));
        }
        for (name, r) in [("width_m", self.width_m), ("height_m", self.height_m)] {
            if !(r[0] > 0.0) || r[0] > r[1] {
                return err(format!("{name} range {:?} is empty or non-positive", r));
            }
        }
        if self.rooms[0] == 0 || self.rooms[0] > self.rooms[1] {
            return err(format!(
                "rooms range {:?} must be non-empty and start at 1 or more",
                self.rooms
            ));
        }
        if self.objects[0] > self.objects[1] {
            return err(format!("objects range {:?} is empty", self.objects));
        }
        if self.room_labels.is_empty() {
            return err("room_labels is empty".into());
        }
        if self.objects[1] > 0 && self.classes.is_empty() {
            return err("objects requested but classes is empty".into());
        }
        for c in &self.classes {
            if c.sizes.is_empty()
                || c.sizes
                    .iter()
                    .any(|s| s[0] == 0 || s[1] == 0 || s[0] * s[1] > 4)
            {
                return err(format!(
                    "class {} needs footprint sizes of 1 to 4 cells",
                    c.label
                ));
            }
        }
        for l in self
            .room_labels
            .iter()
            .chain(self.classes.iter().map(|c| &c.label))
        {
            if l.is_empty()
                || l.contains(" in ")
                || l.contains(" to ")
                || l.contains(',')
                || l.contains('.')
            {
                return err(format!(
                    "label {l:?} cannot be used in instruction templates"
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
struct Rect {
    x0: i32,
    y0: i32,
    x1: i32,
    y1: i32,
}

impl Rect {
    fn w(&self) -> i32 {
        self.x1 - self.x0 + 1
    }
    fn h(&self) -> i32 {
        self.y1 - self.y0 + 1
    }
    fn area(&self) -> i64 {
        self.w() as i64 * self.h() as i64
    }
}

fn cells_for(m: f64, res: f64) -> i32 {
    libm::round(m / res) as i32
}

/// Generates a scene by recursive axis-aligned room splitting.
///
/// Identical `(config, seed)` pairs produce identical scenes. Walls are one
/// cell thick and every split wall carries a doorway, so the free space is a
/// single 4-connected component.
pub fn generate_scene(config: &SceneGenConfig, seed: u64) -> Result<SceneSpec, Error> {
    config.check()?;
    let res = config.resolution;
    let mut rng = rng_from_seed(seed);
    let width = cells_for(rng.random_range(config.width_m[0]..=config.width_m[1]), res).max(3);
    let height = cells_for(
        rng.random_range(config.height_m[0]..=config.height_m[1]),
        res,
    )
    .max(3);
    let n_rooms = rng.random_range(config.rooms[0]..=config.rooms[1]) as usize;
    let min_side = cells_for(config.min_room_side_m, res).max(1);
    let door = cells_for(config.doorway_m, res).max(1);
    let clearance = cells_for(config.clearance_m, res).max(0);

    let interior = Rect {
        x0: 1,
        y0: 1,
        x1: width - 2,
        y1: height - 2,
    };
    if interior.w() < min_side || interior.h() < min_side {
        return Err(Error::Generation(format!(
            "grid {width}x{height} cannot hold a room of side {min_side} cells"
        )));
    }
    let capacity =
        ((interior.w() + 1) / (min_side + 1)) as i64 * ((interior.h() + 1) / (min_side + 1)) as i64;
    if n_rooms as i64 > capacity {
        return Err(Error::Generation(format!(
            "{n_rooms} rooms exceed grid capacity of {capacity} rooms of side {min_side} cells"
        )));
    }
    if n_rooms > 1 && min_side < door + 2 {
        return Err(Error::Generation(format!(
            "min_room_side_m leaves no room for a {door}-cell doorway"
        )));
    }

    let mut structure = OccupancyGrid::new(width as u32, height as u32, res, Occupancy::Free)?;
    for x in 0..width {
        structure.set(Cell::new(x, 0), Occupancy::Obstacle);
        structure.set(Cell::new(x, height - 1), Occupancy::Obstacle);
    }
    for y in 0..height {
        structure.set(Cell::new(0, y), Occupancy::Obstacle);
        structure.set(Cell::new(width - 1, y), Occupancy::Obstacle);
    }

    let mut rects = vec![interior];
    let mut doors: Vec<Cell> = Vec::new();
    while rects.len() < n_rooms {
        // Largest splittable rectangle first.
        let mut order: Vec<usize> = (0..rects.len()).collect();
        order.sort_by_key(|&i| (core::cmp::Reverse(rects[i].area()), i));
        let mut split = None;
        for i in order {
            if let Some(s) = choose_split(&rects[i], min_side, door, &doors, &mut rng) {
                split = Some((i, s));
                break;
            }
        }
        let Some((i, (vertical, pos, door_at))) = split else {
            return Err(Error::Generation(format!(
                "could not partition the interior into {n_rooms} rooms of side {min_side} cells"
            )));
        };
        let r = rects[i];
        let (a, b) = if vertical {
            for y in r.y0..=r.y1 {
                structure.set(Cell::new(pos, y), Occupancy::Obstacle);
            }
            for y in door_at..door_at + door {
                structure.set(Cell::new(pos, y), Occupancy::Free);
                doors.push(Cell::new(pos, y));
            }
            (Rect { x1: pos - 1, ..r }, Rect { x0: pos + 1, ..r })
        } else {
            for x in r.x0..=r.x1 {
                structure.set(Cell::new(x, pos), Occupancy::Obstacle);
            }
            for x in door_at..door_at + door {
                structure.set(Cell::new(x, pos), Occupancy::Free);
                doors.push(Cell::new(x, pos));
            }
            (Rect { y1: pos - 1, ..r }, Rect { y0: pos + 1, ..r })
        };
        rects[i] = a;
        rects.push(b);
    }
    rects.sort_by_key(|r| (r.y0, r.x0));

    let mut labels = config.room_labels.clone();
    labels.shuffle(&mut rng);
    let rooms: Vec<Room> = rects
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut cells = Vec::with_capacity(r.area() as usize);
            for y in r.y0..=r.y1 {
                for x in r.x0..=r.x1 {
                    cells.push(Cell::new(x, y));
                }
            }
            Room {
                id: format!("room-{i}"),
                label: labels[i % labels.len()].clone(),
                cells,
            }
        })
        .collect();

    let n_objects = rng.random_range(config.objects[0]..=config.objects[1]) as usize;
    let mut objects: Vec<ObjectInstance> = Vec::new();
    let mut taken = vec![false; (width * height) as usize];
    let mut failures = 0;
    while objects.len() < n_objects && failures < 64 {
        let ri = rng.random_range(0..rects.len());
        let label = &rooms[ri].label;
        let weights: Vec<f64> = config
            .classes
            .iter()
            .map(|c| {
                if c.rooms.is_empty() {
                    1.0
                } else {
                    c.rooms
                        .iter()
                        .filter(|(l, _)| l == label)
                        .map(|(_, w)| *w)
                        .sum()
                }
            })
            .collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            failures += 1;
            continue;
        }
        let mut pick = rng.random_range(0.0..total);
        let mut ci = weights.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            if pick < *w {
                ci = i;
                break;
            }
            pick -= w;
        }
        let spec = &config.classes[ci];
        let [w, h] = spec.sizes[rng.random_range(0..spec.sizes.len())];
        let (w, h) = (w as i32, h as i32);
        let r = rects[ri];
        let xs = (r.x0 + clearance, r.x1 - clearance - w + 1);
        let ys = (r.y0 + clearance, r.y1 - clearance - h + 1);
        if xs.0 > xs.1 || ys.0 > ys.1 {
            failures += 1;
            continue;
        }
        let mut placed = false;
        for _ in 0..32 {
            let x0 = rng.random_range(xs.0..=xs.1);
            let y0 = rng.random_range(ys.0..=ys.1);
            let blocked = (y0 - clearance..y0 + h + clearance).any(|y| {
                (x0 - clearance..x0 + w + clearance).any(|x| taken[(y * width + x) as usize])
            });
            if blocked {
                continue;
            }
            let mut footprint = Vec::with_capacity((w * h) as usize);
            for y in y0..y0 + h {
                for x in x0..x0 + w {
                    taken[(y * width + x) as usize] = true;
                    footprint.push(Cell::new(x, y));
                }
            }
            objects.push(ObjectInstance {
                id: format!("obj-{:03}", objects.len()),
                class_label: spec.label.clone(),
                center: Point::new(
                    (x0 as f64 + w as f64 / 2.0) * res,
                    (y0 as f64 + h as f64 / 2.0) * res,
                ),
                footprint,
                room_id: rooms[ri].id.clone(),
                pickable: spec.pickable,
            });
            placed = true;
            break;
        }
        if !placed {
            failures += 1;
        }
    }

    let mut scene = SceneSpec {
        id: format!("{}-{seed}", config.name),
        resolution: res,
        grid: structure,
        rooms,
        objects,
        seed,
    };
    scene.grid = project_occupancy(&scene);
    if !free_space_connected(&scene.grid) {
        return Err(Error::Generation(
            "free space is not a single connected component".into(),
        ));
    }
    scene
        .validate()
        .map_err(|e| Error::Generation(e.to_string()))?;
    Ok(scene)
}

/// Picks a wall position and doorway offset for `r`, or `None` when the
/// rectangle cannot be split without crowding an existing doorway.
fn choose_split(
    r: &Rect,
    min_side: i32,
    door: i32,
    doors: &[Cell],
    rng: &mut crate::Rng,
) -> Option<(bool, i32, i32)> {
    let can_v = r.w() > 2 * min_side;
    let can_h = r.h() > 2 * min_side;
    let vertical = match (can_v, can_h) {
        (false, false) => return None,
        (true, false) => true,
        (false, true) => false,
        (true, true) => r.w() >= r.h(),
    };
    let (lo, hi) = if vertical {
        (r.x0 + min_side, r.x1 - min_side)
    } else {
        (r.y0 + min_side, r.y1 - min_side)
    };
    // A new wall must not end next to an existing doorway.
    let clear = |pos: i32| {
        let ends = if vertical {
            [Cell::new(pos, r.y0 - 1), Cell::new(pos, r.y1 + 1)]
        } else {
            [Cell::new(r.x0 - 1, pos), Cell::new(r.x1 + 1, pos)]
        };
        !doors
            .iter()
            .any(|d| ends.iter().any(|e| d.chebyshev(*e) <= 2))
    };
    let candidates: Vec<i32> = (lo..=hi).filter(|&p| clear(p)).collect();
    if candidates.is_empty() {
        return None;
    }
    let pos = candidates[rng.random_range(0..candidates.len())];
    let span = if vertical { (r.y0, r.y1) } else { (r.x0, r.x1) };
    let door_at = rng.random_range(span.0..=span.1 - door + 1);
    Some((vertical, pos, door_at))
}

/// True when every free cell is 4-reachable from every other.
pub fn free_space_connected(grid: &OccupancyGrid) -> bool {
    let Some((start, _)) = grid.iter().find(|(_, s)| *s == Occupancy::Free) else {
        return true;
    };
    let reach = flood_fill(grid.width(), grid.height(), start, |c| {
        grid.get(c) == Occupancy::Free
    });
    grid.cells()
        .iter()
        .zip(&reach)
        .all(|(s, r)| *s != Occupancy::Free || *r)
}

/// Mutable episode-time view of a scene with per-cell lookups.
///
/// Objects may be picked up and placed during an episode; the grid and the
/// object index are kept in sync by [`World::lift`] and [`World::drop_at`].
#[derive(Debug, Clone)]
pub struct World {
    scene: SceneSpec,
    object_at: Vec<Option<u32>>,
    room_at: Vec<Option<u16>>,
    adjacency: Vec<(usize, usize)>,
}

impl World {
    pub fn new(scene: SceneSpec) -> Self {
        let n = scene.grid.len();
        let mut object_at = vec![None; n];
        for (oi, obj) in scene.objects.iter().enumerate() {
            for &c in &obj.footprint {
                if let Some(i) = scene.grid.index(c) {
                    object_at[i] = Some(oi as u32);
                }
            }
        }
        let mut room_at = vec![None; n];
        for (ri, room) in scene.rooms.iter().enumerate() {
            for &c in &room.cells {
                if let Some(i) = scene.grid.index(c) {
                    room_at[i] = Some(ri as u16);
                }
            }
        }
        let mut adjacency = BTreeSet::new();
        for (ri, room) in scene.rooms.iter().enumerate() {
            for &c in &room.cells {
                for (dx, dy) in NEIGHBORS4 {
                    // Across a one-cell wall or doorway.
                    let across = c.offset(2 * dx, 2 * dy);
                    if let Some(i) = scene.grid.index(across) {
                        if let Some(rj) = room_at[i] {
                            let rj = rj as usize;
                            if rj != ri {
                                adjacency.insert((ri.min(rj), ri.max(rj)));
                            }
                        }
                    }
                }
            }
        }
        World {
            scene,
            object_at,
            room_at,
            adjacency: adjacency.into_iter().collect(),
        }
    }

    pub fn scene(&self) -> &SceneSpec {
        &self.scene
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.scene.grid
    }

    pub fn resolution(&self) -> f64 {
        self.scene.resolution
    }

    pub fn objects(&self) -> &[ObjectInstance] {
        &self.scene.objects
    }

    pub fn object_index(&self, id: &str) -> Option<usize> {
        self.scene.objects.iter().position(|o| o.id == id)
    }

    /// Index of the object whose footprint covers `c`.
    pub fn object_at(&self, c: Cell) -> Option<usize> {
        self.scene
            .grid
            .index(c)
            .and_then(|i| self.object_at[i])
            .map(|o| o as usize)
    }

    pub fn room_index_at(&self, c: Cell) -> Option<usize> {
        self.scene
            .grid
            .index(c)
            .and_then(|i| self.room_at[i])
            .map(|r| r as usize)
    }

    pub fn room_at_point(&self, p: Point) -> Option<&Room> {
        let c = self.scene.grid.cell_of(p)?;
        self.room_index_at(c).map(|r| &self.scene.rooms[r])
    }

    /// Room adjacency as index pairs `(low, high)`.
    pub fn room_adjacency(&self) -> &[(usize, usize)] {
        &self.adjacency
    }

    /// Removes an object's footprint from the grid (adhesion pick).
    pub fn lift(&mut self, obj: usize, carrier: Point) {
        let footprint = core::mem::take(&mut self.scene.objects[obj].footprint);
        for c in footprint {
            if let Some(i) = self.scene.grid.index(c) {
                self.object_at[i] = None;
                self.scene.grid.set(c, Occupancy::Free);
            }
        }
        self.scene.objects[obj].center = carrier;
    }

    /// Moves a carried object along with its carrier.
    pub fn carry_to(&mut self, obj: usize, carrier: Point) {
        self.scene.objects[obj].center = carrier;
    }

    /// Re-inserts a lifted object with the given footprint.
    pub fn drop_at(&mut self, obj: usize, footprint: Vec<Cell>) {
        let res = self.scene.resolution;
        for &c in &footprint {
            if let Some(i) = self.scene.grid.index(c) {
                self.object_at[i] = Some(obj as u32);
                self.scene.grid.set(c, Occupancy::Obstacle);
            }
        }
        let o = &mut self.scene.objects[obj];
        o.footprint = footprint;
        if let Some((lo, hi)) = o.bbox() {
            o.center = Point::new(
                (lo.x + hi.x + 1) as f64 * res / 2.0,
                (lo.y + hi.y + 1) as f64 * res / 2.0,
            );
        }
        let center_cell = self.scene.grid.cell_of(self.scene.objects[obj].center);
        if let Some(r) = center_cell.and_then(|c| self.room_index_at(c)) {
            self.scene.objects[obj].room_id = self.scene.rooms[r].id.clone();
        }
    }

    pub fn cell_center(&self, c: Cell) -> Point {
        cell_center(c, self.scene.resolution)
    }
}

mod spans {
    use super::Cell;
    use alloc::vec::Vec;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(cells: &[Cell], s: S) -> Result<S::Ok, S::Error> {
        let mut sorted: Vec<Cell> = cells.to_vec();
        sorted.sort_by_key(|c| c.row_major());
        let mut out: Vec<[i32; 3]> = Vec::new();
        for c in sorted {
            match out.last_mut() {
                Some(span) if span[0] == c.y && span[2] + 1 == c.x => span[2] = c.x,
                _ => out.push([c.y, c.x, c.x]),
            }
        }
        out.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Cell>, D::Error> {
        let spans: Vec<[i32; 3]> = Vec::deserialize(d)?;
        let mut cells = Vec::new();
        for [y, x0, x1] in spans {
            if x1 < x0 {
                return Err(serde::de::Error::custom("span end precedes span start"));
            }
            cells.extend((x0..=x1).map(|x| Cell::new(x, y)));
        }
        Ok(cells)
    }
}
