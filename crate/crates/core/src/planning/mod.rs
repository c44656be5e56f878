//! Grid planning: D* Lite path follower, fast marching distance fields and
//! frontier selection.
//!
//! Planners never read an [`OccupancyGrid`] directly. They work on a
//! [`PlanGrid`], a boolean traversability mask derived from a belief or
//! ground-truth grid under an [`UnknownPolicy`] and an obstacle inflation
//! radius.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::ops::Add;

use serde::{Deserialize, Serialize};

use crate::grid::{Cell, Occupancy, OccupancyGrid, Point, NEIGHBORS4, NEIGHBORS8};

pub mod dstar;
pub mod fmm;
pub mod frontier;

pub use dstar::{dstar_lite_plan, DStarLite};
pub use fmm::{fmm_field, fmm_field_until, DistanceField};
pub use frontier::{frontier_clusters, select_frontier, select_frontier_where, FrontierCluster};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("no path: goal unreachable ({} cells explored)", explored.len())]
    NoPath { explored: Vec<Cell> },
    #[error("start cell {0} is not traversable")]
    StartBlocked(Cell),
    #[error("goal cell {0} is not traversable")]
    GoalBlocked(Cell),
    #[error("cell {0} is outside the grid")]
    OutOfBounds(Cell),
    #[error("grid has no traversable cell")]
    NoFreeCell,
}

/// How planners treat `Unknown` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownPolicy {
    Traversable,
    Blocked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

/// Traversability mask used by every planner.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanGrid {
    width: u32,
    height: u32,
    resolution: f64,
    connectivity: Connectivity,
    passable: Vec<bool>,
}

impl PlanGrid {
    pub fn from_fn(
        width: u32,
        height: u32,
        resolution: f64,
        passable: impl Fn(Cell) -> bool,
    ) -> Self {
        let mut cells = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height as i32 {
            for x in 0..width as i32 {
                cells.push(passable(Cell::new(x, y)));
            }
        }
        PlanGrid {
            width,
            height,
            resolution,
            connectivity: Connectivity::Eight,
            passable: cells,
        }
    }

    /// Builds the mask from an occupancy grid.
    ///
    /// Cells within `inflation` (Chebyshev) of an `Obstacle` are blocked,
    /// except the cells in `exempt`, which only need to pass the unknown
    /// policy themselves.
    pub fn from_occupancy(
        grid: &OccupancyGrid,
        unknown: UnknownPolicy,
        inflation: u32,
        exempt: &[Cell],
    ) -> Self {
        let (w, h) = (grid.width() as usize, grid.height() as usize);
        let raw: Vec<bool> = grid
            .cells()
            .iter()
            .map(|s| match s {
                Occupancy::Free => true,
                Occupancy::Obstacle => false,
                Occupancy::Unknown => unknown == UnknownPolicy::Traversable,
            })
            .collect();
        let mut passable = raw.clone();
        let r = inflation as i32;
        if r > 0 {
            // Separable dilation: rows, then columns.
            let mut near_row = vec![false; w * h];
            for y in 0..h {
                let row = &grid.cells()[y * w..(y + 1) * w];
                let mut last_obstacle: Option<usize> = None;
                let mut next = vec![usize::MAX; w];
                let mut upcoming = usize::MAX;
                for x in (0..w).rev() {
                    if row[x] == Occupancy::Obstacle {
                        upcoming = x;
                    }
                    next[x] = upcoming;
                }
                for x in 0..w {
                    if row[x] == Occupancy::Obstacle {
                        last_obstacle = Some(x);
                    }
                    let before = last_obstacle.is_some_and(|o| x - o <= r as usize);
                    let after = next[x] != usize::MAX && next[x] - x <= r as usize;
                    near_row[y * w + x] = before || after;
                }
            }
            for x in 0..w {
                for y in 0..h {
                    let y0 = y.saturating_sub(r as usize);
                    let y1 = (y + r as usize).min(h - 1);
                    if (y0..=y1).any(|yy| near_row[yy * w + x]) {
                        passable[y * w + x] = false;
                    }
                }
            }
        }
        for &c in exempt {
            if let Some(i) = grid.index(c) {
                passable[i] = raw[i];
            }
        }
        PlanGrid {
            width: grid.width(),
            height: grid.height(),
            resolution: grid.resolution(),
            connectivity: Connectivity::Eight,
            passable,
        }
    }

    pub fn with_connectivity(mut self, connectivity: Connectivity) -> Self {
        self.connectivity = connectivity;
        self
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn connectivity(&self) -> Connectivity {
        self.connectivity
    }

    pub fn len(&self) -> usize {
        self.passable.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passable.is_empty()
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as u32) < self.width && (c.y as u32) < self.height
    }

    pub fn index(&self, c: Cell) -> Option<usize> {
        self.in_bounds(c)
            .then(|| c.y as usize * self.width as usize + c.x as usize)
    }

    pub fn cell_at(&self, i: usize) -> Cell {
        let w = self.width as usize;
        Cell::new((i % w) as i32, (i / w) as i32)
    }

    pub fn passable(&self, c: Cell) -> bool {
        self.index(c).is_some_and(|i| self.passable[i])
    }

    pub fn set_passable(&mut self, c: Cell, value: bool) {
        if let Some(i) = self.index(c) {
            self.passable[i] = value;
        }
    }

    pub fn mask(&self) -> &[bool] {
        &self.passable
    }

    /// Neighbor offsets under the grid's connectivity.
    pub fn offsets(&self) -> &'static [(i32, i32)] {
        match self.connectivity {
            Connectivity::Four => &NEIGHBORS4,
            Connectivity::Eight => &NEIGHBORS8,
        }
    }

    /// Cost of the move `from -> from + (dx, dy)`, or infinity.
    ///
    /// A diagonal move needs both orthogonal cells it sweeps past to be
    /// traversable.
    pub fn edge_cost(&self, from: Cell, dx: i32, dy: i32) -> Cost {
        let to = from.offset(dx, dy);
        if !self.passable(from) || !self.passable(to) {
            return Cost::INFINITY;
        }
        if dx != 0 && dy != 0 {
            if self.connectivity == Connectivity::Four
                || !self.passable(from.offset(dx, 0))
                || !self.passable(from.offset(0, dy))
            {
                return Cost::INFINITY;
            }
            Cost::DIAGONAL
        } else {
            Cost::STRAIGHT
        }
    }

    /// Admissible and consistent distance estimate between two cells.
    pub fn heuristic(&self, a: Cell, b: Cell) -> Cost {
        let dx = (a.x - b.x).unsigned_abs() as u64;
        let dy = (a.y - b.y).unsigned_abs() as u64;
        match self.connectivity {
            Connectivity::Four => Cost::new(dx + dy, 0),
            Connectivity::Eight => Cost::new(dx.max(dy) - dx.min(dy), dx.min(dy)),
        }
    }

    pub fn center_of(&self, c: Cell) -> Point {
        crate::grid::cell_center(c, self.resolution)
    }
}

/// Exact path cost `straight + diagonal * sqrt(2)` in cell units.
///
/// Comparisons are exact integer arithmetic, so planners agree bit for bit
/// on ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Cost {
    pub straight: u64,
    pub diagonal: u64,
}

impl Cost {
    pub const ZERO: Cost = Cost::new(0, 0);
    pub const STRAIGHT: Cost = Cost::new(1, 0);
    pub const DIAGONAL: Cost = Cost::new(0, 1);
    pub const INFINITY: Cost = Cost::new(u64::MAX, u64::MAX);

    pub const fn new(straight: u64, diagonal: u64) -> Self {
        Cost { straight, diagonal }
    }

    pub fn is_infinite(self) -> bool {
        self == Cost::INFINITY
    }

    /// Value in cell units.
    pub fn value(self) -> f64 {
        if self.is_infinite() {
            f64::INFINITY
        } else {
            self.straight as f64 + self.diagonal as f64 * core::f64::consts::SQRT_2
        }
    }

    pub fn meters(self, resolution: f64) -> f64 {
        self.value() * resolution
    }
}

impl Add for Cost {
    type Output = Cost;

    fn add(self, rhs: Cost) -> Cost {
        if self.is_infinite() || rhs.is_infinite() {
            return Cost::INFINITY;
        }
        match (
            self.straight.checked_add(rhs.straight),
            self.diagonal.checked_add(rhs.diagonal),
        ) {
            (Some(s), Some(d)) if !(s == u64::MAX && d == u64::MAX) => Cost::new(s, d),
            _ => Cost::INFINITY,
        }
    }
}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> Ordering {
        if self == other {
            return Ordering::Equal;
        }
        if self.is_infinite() {
            return Ordering::Greater;
        }
        if other.is_infinite() {
            return Ordering::Less;
        }
        let p = self.straight as i128 - other.straight as i128;
        let q = self.diagonal as i128 - other.diagonal as i128;
        // Sign of p + q * sqrt(2); never zero since sqrt(2) is irrational.
        match (p >= 0, q >= 0) {
            (true, true) => Ordering::Greater,
            (false, false) => Ordering::Less,
            (true, false) => (p * p).cmp(&(2 * q * q)),
            (false, true) => (2 * q * q).cmp(&(p * p)),
        }
    }
}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Planned cell sequence with its metric length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub cells: Vec<Cell>,
    pub cost: Cost,
    pub length_m: f64,
}

impl Path {
    pub fn from_cells(cells: Vec<Cell>, resolution: f64) -> Self {
        let mut cost = Cost::ZERO;
        for w in cells.windows(2) {
            let (dx, dy) = (w[1].x - w[0].x, w[1].y - w[0].y);
            cost = cost
                + if dx != 0 && dy != 0 {
                    Cost::DIAGONAL
                } else {
                    Cost::STRAIGHT
                };
        }
        Path {
            length_m: cost.meters(resolution),
            cells,
            cost,
        }
    }

    pub fn goal(&self) -> Option<Cell> {
        self.cells.last().copied()
    }
}

/// `goal` itself when free, else the nearest free cell by Euclidean
/// distance, ties broken row-major.
pub fn nearest_free_goal(grid: &OccupancyGrid, goal: Cell) -> Result<Cell, PlanError> {
    nearest_where(grid.width(), grid.height(), goal, |c| {
        grid.get(c) == Occupancy::Free
    })
}

/// [`nearest_free_goal`] on a planning mask.
pub fn nearest_passable(grid: &PlanGrid, goal: Cell) -> Result<Cell, PlanError> {
    nearest_where(grid.width(), grid.height(), goal, |c| grid.passable(c))
}

/// Nearest cell accepted by `ok`, searched in growing square rings.
pub fn nearest_where(
    width: u32,
    height: u32,
    goal: Cell,
    ok: impl Fn(Cell) -> bool,
) -> Result<Cell, PlanError> {
    let inb = |c: Cell| c.x >= 0 && c.y >= 0 && (c.x as u32) < width && (c.y as u32) < height;
    if inb(goal) && ok(goal) {
        return Ok(goal);
    }
    let max_r = {
        let dx = goal.x.max(width as i32 - 1 - goal.x).max(0);
        let dy = goal.y.max(height as i32 - 1 - goal.y).max(0);
        let out_x = (-goal.x).max(goal.x - (width as i32 - 1)).max(0);
        let out_y = (-goal.y).max(goal.y - (height as i32 - 1)).max(0);
        dx.max(dy) + out_x.max(out_y) + 1
    };
    let mut best: Option<(i64, (i32, i32), Cell)> = None;
    for r in 1..=max_r {
        if let Some((d2, _, _)) = best {
            if (r as i64) * (r as i64) > d2 {
                break;
            }
        }
        let mut consider = |c: Cell| {
            if inb(c) && ok(c) {
                let key = (goal.dist2(c), c.row_major());
                if best.is_none_or(|(d, rm, _)| key < (d, rm)) {
                    best = Some((key.0, key.1, c));
                }
            }
        };
        for x in goal.x - r..=goal.x + r {
            consider(Cell::new(x, goal.y - r));
            consider(Cell::new(x, goal.y + r));
        }
        for y in goal.y - r + 1..=goal.y + r - 1 {
            consider(Cell::new(goal.x - r, y));
            consider(Cell::new(goal.x + r, y));
        }
    }
    best.map(|(_, _, c)| c).ok_or(PlanError::NoFreeCell)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_from(rows: &[&str]) -> OccupancyGrid {
        OccupancyGrid::from_rows(rows, 0.1).unwrap()
    }

    #[test]
    fn cost_order_is_exact() {
        let sqrt2 = Cost::DIAGONAL;
        assert!(Cost::new(1, 0) < sqrt2);
        assert!(Cost::new(2, 0) > sqrt2);
        // 7 vs 5*sqrt(2) = 7.0710...
        assert!(Cost::new(7, 0) < Cost::new(0, 5));
        // 99 vs 70*sqrt(2) = 98.9949...
        assert!(Cost::new(99, 0) > Cost::new(0, 70));
        assert!(Cost::new(3, 4) < Cost::INFINITY);
        assert_eq!(Cost::new(3, 4) + Cost::INFINITY, Cost::INFINITY);
    }

    #[test]
    fn free_goal_is_returned_unchanged() {
        let g = grid_from(&["FFF", "FFF"]);
        assert_eq!(
            nearest_free_goal(&g, Cell::new(1, 1)).unwrap(),
            Cell::new(1, 1)
        );
    }

    #[test]
    fn goal_on_footprint_moves_to_adjacent_free_cell() {
        let g = grid_from(&["OOOOO", "OOOFO", "OOOOO"]);
        assert_eq!(
            nearest_free_goal(&g, Cell::new(2, 1)).unwrap(),
            Cell::new(3, 1)
        );
    }

    #[test]
    fn equidistant_candidates_break_row_major() {
        let g = grid_from(&["OFO", "FOF", "OFO"]);
        // (1,0), (0,1), (2,1), (1,2) are all at distance 1; (1,0) is first.
        assert_eq!(
            nearest_free_goal(&g, Cell::new(1, 1)).unwrap(),
            Cell::new(1, 0)
        );
        let g = grid_from(&["OOO", "FOF", "OOO"]);
        assert_eq!(
            nearest_free_goal(&g, Cell::new(1, 1)).unwrap(),
            Cell::new(0, 1)
        );
    }

    #[test]
    fn no_free_cell_is_an_error() {
        let g = grid_from(&["OO", "OO"]);
        assert_eq!(
            nearest_free_goal(&g, Cell::new(0, 0)),
            Err(PlanError::NoFreeCell)
        );
    }

    #[test]
    fn nearest_matches_exhaustive_search() {
        let g = grid_from(&[
            "OOOOOOOO", "OFOOOOOO", "OOOOOOOO", "OOOOOOFO", "OOOOOOOO", "FOOOOOOO",
        ]);
        for y in 0..6 {
            for x in 0..8 {
                let goal = Cell::new(x, y);
                let want = g
                    .iter()
                    .filter(|(_, s)| *s == Occupancy::Free)
                    .map(|(c, _)| c)
                    .min_by_key(|c| (goal.dist2(*c), c.row_major()))
                    .unwrap();
                assert_eq!(nearest_free_goal(&g, goal).unwrap(), want, "goal {goal}");
            }
        }
    }

    #[test]
    fn inflation_blocks_a_ring_and_respects_exemptions() {
        let g = grid_from(&["FFFFF", "FFFFF", "FFOFF", "FFFFF", "FFFFF"]);
        let p = PlanGrid::from_occupancy(&g, UnknownPolicy::Blocked, 1, &[Cell::new(1, 1)]);
        for y in 0..5 {
            for x in 0..5 {
                let c = Cell::new(x, y);
                let near = c.chebyshev(Cell::new(2, 2)) <= 1 && c != Cell::new(1, 1);
                assert_eq!(p.passable(c), !near, "{c}");
            }
        }
    }

    #[test]
    fn unknown_policy_controls_traversability() {
        let g = grid_from(&["F??", "FFF"]);
        let open = PlanGrid::from_occupancy(&g, UnknownPolicy::Traversable, 0, &[]);
        let closed = PlanGrid::from_occupancy(&g, UnknownPolicy::Blocked, 0, &[]);
        assert!(open.passable(Cell::new(1, 0)));
        assert!(!closed.passable(Cell::new(1, 0)));
    }

    #[test]
    fn diagonal_needs_both_corners() {
        let g = grid_from(&["FO", "FF"]);
        let p = PlanGrid::from_occupancy(&g, UnknownPolicy::Blocked, 0, &[]);
        assert!(p.edge_cost(Cell::new(0, 0), 1, 1).is_infinite());
        let g = grid_from(&["FF", "FF"]);
        let p = PlanGrid::from_occupancy(&g, UnknownPolicy::Blocked, 0, &[]);
        assert_eq!(p.edge_cost(Cell::new(0, 0), 1, 1), Cost::DIAGONAL);
    }
}
