//! Frontier detection and selection for exploration.

use alloc::vec;
use alloc::vec::Vec;

use crate::grid::{Cell, Occupancy, OccupancyGrid, Point, NEIGHBORS8};
use crate::mapping::BeliefMap;
use crate::sensing::Pose;

/// An 8-connected group of frontier cells.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontierCluster {
    /// Row-major order.
    pub cells: Vec<Cell>,
    /// Cluster cell nearest the centroid, ties row-major.
    pub representative: Cell,
}

impl FrontierCluster {
    pub fn size(&self) -> usize {
        self.cells.len()
    }

    pub fn contains(&self, c: Cell) -> bool {
        self.cells
            .binary_search_by_key(&c.row_major(), |x| x.row_major())
            .is_ok()
    }
}

/// Free cell with an unknown 8-neighbor.
pub fn is_frontier(grid: &OccupancyGrid, c: Cell) -> bool {
    grid.get(c) == Occupancy::Free
        && NEIGHBORS8.iter().any(|&(dx, dy)| {
            let n = c.offset(dx, dy);
            grid.in_bounds(n) && grid.get(n) == Occupancy::Unknown
        })
}

/// Free cells with an unknown 8-neighbor, grouped by 8-connectivity;
/// clusters smaller than `min_size` are dropped.
pub fn frontier_clusters(grid: &OccupancyGrid, min_size: usize) -> Vec<FrontierCluster> {
    let n = grid.len();
    let mut mark = vec![false; n];
    for (i, m) in mark.iter_mut().enumerate() {
        *m = is_frontier(grid, grid.cell_at(i));
    }
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for i in 0..n {
        if !mark[i] || seen[i] {
            continue;
        }
        seen[i] = true;
        let mut stack = vec![grid.cell_at(i)];
        let mut cells = Vec::new();
        while let Some(c) = stack.pop() {
            cells.push(c);
            for (dx, dy) in NEIGHBORS8 {
                let nb = c.offset(dx, dy);
                if let Some(j) = grid.index(nb) {
                    if mark[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(nb);
                    }
                }
            }
        }
        if cells.len() < min_size.max(1) {
            continue;
        }
        cells.sort_by_key(|c| c.row_major());
        let k = cells.len() as f64;
        let cx = cells.iter().map(|c| c.x as f64).sum::<f64>() / k;
        let cy = cells.iter().map(|c| c.y as f64).sum::<f64>() / k;
        let representative = *cells
            .iter()
            .min_by(|a, b| {
                let d2 = |c: &Cell| {
                    let (dx, dy) = (c.x as f64 - cx, c.y as f64 - cy);
                    dx * dx + dy * dy
                };
                let (da, db) = (d2(a), d2(b));
                da.total_cmp(&db).then(a.row_major().cmp(&b.row_major()))
            })
            .expect("cluster is non-empty");
        out.push(FrontierCluster {
            cells,
            representative,
        });
    }
    out
}

/// Representative of the cluster minimizing distance / size, if any.
pub fn select_frontier(belief: &BeliefMap, pose: &Pose, min_size: usize) -> Option<Cell> {
    select_frontier_where(&belief.grid, pose.point(), min_size, |_| true).map(|c| c.representative)
}

/// [`select_frontier`] over the clusters accepted by `accept`.
pub fn select_frontier_where(
    grid: &OccupancyGrid,
    from: Point,
    min_size: usize,
    accept: impl Fn(&FrontierCluster) -> bool,
) -> Option<FrontierCluster> {
    let res = grid.resolution();
    frontier_clusters(grid, min_size)
        .into_iter()
        .filter(|c| accept(c))
        .map(|c| {
            let score =
                from.dist(crate::grid::cell_center(c.representative, res)) / c.size() as f64;
            (score, c)
        })
        .min_by(|a, b| {
            a.0.total_cmp(&b.0).then(
                a.1.representative
                    .row_major()
                    .cmp(&b.1.representative.row_major()),
            )
        })
        .map(|(_, c)| c)
}
