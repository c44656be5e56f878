//! Tri-state occupancy grids, cell coordinates and exact segment traversal.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::Error;

/// State of a single grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Occupancy {
    #[serde(rename = "F")]
    Free,
    #[serde(rename = "O")]
    Obstacle,
    #[serde(rename = "?")]
    Unknown,
}

impl Occupancy {
    pub fn symbol(self) -> char {
        match self {
            Occupancy::Free => 'F',
            Occupancy::Obstacle => 'O',
            Occupancy::Unknown => '?',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            'F' => Some(Occupancy::Free),
            'O' => Some(Occupancy::Obstacle),
            '?' => Some(Occupancy::Unknown),
            _ => None,
        }
    }

    pub fn is_known(self) -> bool {
        self != Occupancy::Unknown
    }
}

/// Integer grid coordinate. `x` is the column, `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }

    pub fn offset(self, dx: i32, dy: i32) -> Self {
        Cell::new(self.x + dx, self.y + dy)
    }

    /// Squared Euclidean distance in cells.
    pub fn dist2(self, other: Cell) -> i64 {
        let dx = (self.x - other.x) as i64;
        let dy = (self.y - other.y) as i64;
        dx * dx + dy * dy
    }

    pub fn chebyshev(self, other: Cell) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }

    /// Row-major ordering key: rows first, then columns.
    pub fn row_major(self) -> (i32, i32) {
        (self.y, self.x)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Continuous position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        libm::hypot(self.x - other.x, self.y - other.y)
    }

    pub fn bearing_to(self, other: Point) -> f64 {
        libm::atan2(other.y - self.y, other.x - self.x)
    }
}

/// Offsets of the 8-neighbourhood, orthogonal first.
pub const NEIGHBORS8: [(i32, i32); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (-1, 1),
    (1, -1),
    (-1, -1),
];

pub const NEIGHBORS4: [(i32, i32); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// Dense row-major occupancy grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct OccupancyGrid {
    width: u32,
    height: u32,
    resolution: f64,
    cells: Vec<Occupancy>,
}

impl OccupancyGrid {
    pub fn new(width: u32, height: u32, resolution: f64, fill: Occupancy) -> Result<Self, Error> {
        Self::from_cells(
            width,
            height,
            resolution,
            vec![fill; width as usize * height as usize],
        )
    }

    pub fn from_cells(
        width: u32,
        height: u32,
        resolution: f64,
        cells: Vec<Occupancy>,
    ) -> Result<Self, Error> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::Invalid(alloc::format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::Invalid("grid dimensions must be non-zero".into()));
        }
        if cells.len() != width as usize * height as usize {
            return Err(Error::Invalid(alloc::format!(
                "cell array has {} entries, expected {}x{}",
                cells.len(),
                width,
                height
            )));
        }
        Ok(OccupancyGrid {
            width,
            height,
            resolution,
            cells,
        })
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

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[Occupancy] {
        &self.cells
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as u32) < self.width && (c.y as u32) < self.height
    }

    pub fn index(&self, c: Cell) -> Option<usize> {
        self.in_bounds(c)
            .then(|| c.y as usize * self.width as usize + c.x as usize)
    }

    pub fn cell_at(&self, idx: usize) -> Cell {
        Cell::new(
            (idx % self.width as usize) as i32,
            (idx / self.width as usize) as i32,
        )
    }

    /// State of `c`; out-of-bounds cells read as `Obstacle`.
    pub fn get(&self, c: Cell) -> Occupancy {
        match self.index(c) {
            Some(i) => self.cells[i],
            None => Occupancy::Obstacle,
        }
    }

    pub fn set(&mut self, c: Cell, state: Occupancy) {
        if let Some(i) = self.index(c) {
            self.cells[i] = state;
        }
    }

    pub fn count(&self, state: Occupancy) -> usize {
        self.cells.iter().filter(|&&s| s == state).count()
    }

    pub fn known_count(&self) -> usize {
        self.cells.iter().filter(|s| s.is_known()).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Cell, Occupancy)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .map(move |(i, &s)| (self.cell_at(i), s))
    }

    /// Cell containing the metric point, if inside the grid.
    pub fn cell_of(&self, p: Point) -> Option<Cell> {
        let c = cell_of_point(p, self.resolution);
        self.in_bounds(c).then_some(c)
    }

    pub fn center_of(&self, c: Cell) -> Point {
        cell_center(c, self.resolution)
    }

    pub fn width_m(&self) -> f64 {
        self.width as f64 * self.resolution
    }

    pub fn height_m(&self) -> f64 {
        self.height as f64 * self.resolution
    }

    /// Row-major string per row, using `F`, `O` and `?`.
    pub fn to_rows(&self) -> Vec<alloc::string::String> {
        self.cells
            .chunks(self.width as usize)
            .map(|row| row.iter().map(|s| s.symbol()).collect())
            .collect()
    }

    pub fn from_rows<S: AsRef<str>>(rows: &[S], resolution: f64) -> Result<Self, Error> {
        let height = rows.len() as u32;
        let width = rows
            .first()
            .map(|r| r.as_ref().chars().count())
            .unwrap_or(0) as u32;
        let mut cells = Vec::with_capacity(width as usize * height as usize);
        for (y, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.chars().count() as u32 != width {
                return Err(Error::Invalid(alloc::format!(
                    "row {y} has {} cells, expected {width}",
                    row.chars().count()
                )));
            }
            for (x, ch) in row.chars().enumerate() {
                cells.push(Occupancy::from_symbol(ch).ok_or_else(|| {
                    Error::Invalid(alloc::format!("unknown cell symbol {ch:?} at ({x}, {y})"))
                })?);
            }
        }
        Self::from_cells(width, height, resolution, cells)
    }
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    width: u32,
    height: u32,
    resolution: f64,
    rows: Vec<alloc::string::String>,
}

impl From<OccupancyGrid> for GridRepr {
    fn from(g: OccupancyGrid) -> Self {
        GridRepr {
            width: g.width,
            height: g.height,
            resolution: g.resolution,
            rows: g.to_rows(),
        }
    }
}

impl TryFrom<GridRepr> for OccupancyGrid {
    type Error = Error;

    fn try_from(r: GridRepr) -> Result<Self, Error> {
        let g = OccupancyGrid::from_rows(&r.rows, r.resolution)?;
        if g.width != r.width || g.height != r.height {
            return Err(Error::Invalid(alloc::format!(
                "declared size {}x{} does not match rows {}x{}",
                r.width,
                r.height,
                g.width,
                g.height
            )));
        }
        Ok(g)
    }
}

pub fn cell_of_point(p: Point, resolution: f64) -> Cell {
    Cell::new(
        libm::floor(p.x / resolution) as i32,
        libm::floor(p.y / resolution) as i32,
    )
}

pub fn cell_center(c: Cell, resolution: f64) -> Point {
    Point::new(
        (c.x as f64 + 0.5) * resolution,
        (c.y as f64 + 0.5) * resolution,
    )
}

/// Walks every cell touched by the segment `from -> to`, in order.
///
/// Grid-line traversal in the style of Amanatides and Woo. When the segment
/// passes exactly through a cell corner both orthogonal cells are reported
/// before the diagonal one, so collision checks stay conservative. The
/// visitor returns `false` to stop early; the function returns `false` in
/// that case.
pub fn traverse_segment(
    from: Point,
    to: Point,
    resolution: f64,
    mut visit: impl FnMut(Cell) -> bool,
) -> bool {
    let mut cur = cell_of_point(from, resolution);
    let end = cell_of_point(to, resolution);
    if !visit(cur) {
        return false;
    }
    let dx = to.x - from.x;
    let dy = to.y - from.y;
    let step_x = if dx > 0.0 {
        1
    } else if dx < 0.0 {
        -1
    } else {
        0
    };
    let step_y = if dy > 0.0 {
        1
    } else if dy < 0.0 {
        -1
    } else {
        0
    };
    let t_delta_x = if step_x != 0 {
        resolution / libm::fabs(dx)
    } else {
        f64::INFINITY
    };
    let t_delta_y = if step_y != 0 {
        resolution / libm::fabs(dy)
    } else {
        f64::INFINITY
    };
    let mut t_max_x = match step_x {
        1 => ((cur.x + 1) as f64 * resolution - from.x) / dx,
        -1 => (cur.x as f64 * resolution - from.x) / dx,
        _ => f64::INFINITY,
    };
    let mut t_max_y = match step_y {
        1 => ((cur.y + 1) as f64 * resolution - from.y) / dy,
        -1 => (cur.y as f64 * resolution - from.y) / dy,
        _ => f64::INFINITY,
    };
    let max_iters = ((end.x - cur.x).abs() + (end.y - cur.y).abs()) as usize + 4;
    for _ in 0..max_iters {
        if cur == end {
            break;
        }
        let t_next = t_max_x.min(t_max_y);
        if t_next > 1.0 {
            break;
        }
        if libm::fabs(t_max_x - t_max_y) <= 1e-12 {
            if !visit(cur.offset(step_x, 0)) || !visit(cur.offset(0, step_y)) {
                return false;
            }
            cur = cur.offset(step_x, step_y);
            t_max_x += t_delta_x;
            t_max_y += t_delta_y;
        } else if t_max_x < t_max_y {
            cur = cur.offset(step_x, 0);
            t_max_x += t_delta_x;
        } else {
            cur = cur.offset(0, step_y);
            t_max_y += t_delta_y;
        }
        if !visit(cur) {
            return false;
        }
    }
    true
}

/// Flood fill over 4-connected cells accepted by `passable`, from `start`.
pub fn flood_fill(
    width: u32,
    height: u32,
    start: Cell,
    passable: impl Fn(Cell) -> bool,
) -> Vec<bool> {
    let w = width as usize;
    let mut seen = vec![false; w * height as usize];
    let inb = |c: Cell| c.x >= 0 && c.y >= 0 && (c.x as u32) < width && (c.y as u32) < height;
    if !inb(start) || !passable(start) {
        return seen;
    }
    let mut stack = vec![start];
    seen[start.y as usize * w + start.x as usize] = true;
    while let Some(c) = stack.pop() {
        for (dx, dy) in NEIGHBORS4 {
            let n = c.offset(dx, dy);
            if inb(n) {
                let i = n.y as usize * w + n.x as usize;
                if !seen[i] && passable(n) {
                    seen[i] = true;
                    stack.push(n);
                }
            }
        }
    }
    seen
}
