//! Hand-built fixtures shared by unit tests.

use alloc::vec;
use alloc::vec::Vec;

use crate::grid::{Cell, Occupancy, OccupancyGrid, Point};
use crate::world::{project_occupancy, ObjectInstance, Room, SceneSpec, World};

/// Open rectangular room with walls on the border and optional objects.
pub fn room_world(w: i32, h: i32, res: f64, objects: Vec<ObjectInstance>) -> World {
    let mut grid = OccupancyGrid::new(w as u32, h as u32, res, Occupancy::Free).unwrap();
    for x in 0..w {
        grid.set(Cell::new(x, 0), Occupancy::Obstacle);
        grid.set(Cell::new(x, h - 1), Occupancy::Obstacle);
    }
    for y in 0..h {
        grid.set(Cell::new(0, y), Occupancy::Obstacle);
        grid.set(Cell::new(w - 1, y), Occupancy::Obstacle);
    }
    let cells = (1..h - 1)
        .flat_map(|y| (1..w - 1).map(move |x| Cell::new(x, y)))
        .collect();
    let mut scene = SceneSpec {
        id: "room".into(),
        resolution: res,
        grid,
        rooms: vec![Room {
            id: "room-0".into(),
            label: "kitchen".into(),
            cells,
        }],
        objects,
        seed: 0,
    };
    scene.grid = project_occupancy(&scene);
    World::new(scene)
}

pub fn object(id: &str, class: &str, cells: &[(i32, i32)], res: f64) -> ObjectInstance {
    let footprint: Vec<Cell> = cells.iter().map(|&(x, y)| Cell::new(x, y)).collect();
    let (mut lx, mut ly, mut hx, mut hy) = (i32::MAX, i32::MAX, i32::MIN, i32::MIN);
    for c in &footprint {
        lx = lx.min(c.x);
        ly = ly.min(c.y);
        hx = hx.max(c.x);
        hy = hy.max(c.y);
    }
    ObjectInstance {
        id: id.into(),
        class_label: class.into(),
        center: Point::new(
            (lx + hx + 1) as f64 * res / 2.0,
            (ly + hy + 1) as f64 * res / 2.0,
        ),
        footprint,
        room_id: "room-0".into(),
        pickable: true,
    }
}
