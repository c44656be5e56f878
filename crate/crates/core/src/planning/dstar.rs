//! D* Lite (optimized variant) over a [`PlanGrid`].
//!
//! The search runs backward from the goal, so moving the start and flipping
//! cells only repairs the part of the cost-to-goal field that changed.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use super::{Cost, Path, PlanError, PlanGrid};
use crate::grid::Cell;

type Key = (Cost, Cost);

#[derive(Debug, Clone)]
pub struct DStarLite {
    grid: PlanGrid,
    start: Cell,
    goal: Cell,
    last: Cell,
    km: Cost,
    g: Vec<Cost>,
    rhs: Vec<Cost>,
    queue: BTreeSet<(Key, usize)>,
    keys: Vec<Option<Key>>,
    expansions: usize,
}

impl DStarLite {
    pub fn new(grid: PlanGrid, start: Cell, goal: Cell) -> Result<Self, PlanError> {
        for c in [start, goal] {
            if !grid.in_bounds(c) {
                return Err(PlanError::OutOfBounds(c));
            }
        }
        if !grid.passable(goal) {
            return Err(PlanError::GoalBlocked(goal));
        }
        let n = grid.len();
        let mut d = DStarLite {
            grid,
            start,
            goal,
            last: start,
            km: Cost::ZERO,
            g: vec![Cost::INFINITY; n],
            rhs: vec![Cost::INFINITY; n],
            queue: BTreeSet::new(),
            keys: vec![None; n],
            expansions: 0,
        };
        let gi = d.idx(goal);
        d.rhs[gi] = Cost::ZERO;
        let k = d.calc_key(gi);
        d.push(gi, k);
        Ok(d)
    }

    pub fn grid(&self) -> &PlanGrid {
        &self.grid
    }

    pub fn start(&self) -> Cell {
        self.start
    }

    pub fn goal(&self) -> Cell {
        self.goal
    }

    /// Vertex expansions performed so far.
    pub fn expansions(&self) -> usize {
        self.expansions
    }

    fn idx(&self, c: Cell) -> usize {
        c.y as usize * self.grid.width() as usize + c.x as usize
    }

    fn calc_key(&self, i: usize) -> Key {
        let m = self.g[i].min(self.rhs[i]);
        let c = self.grid.cell_at(i);
        (m + self.grid.heuristic(self.start, c) + self.km, m)
    }

    fn push(&mut self, i: usize, k: Key) {
        if let Some(old) = self.keys[i].take() {
            self.queue.remove(&(old, i));
        }
        self.queue.insert((k, i));
        self.keys[i] = Some(k);
    }

    fn remove(&mut self, i: usize) {
        if let Some(old) = self.keys[i].take() {
            self.queue.remove(&(old, i));
        }
    }

    fn update_vertex(&mut self, i: usize) {
        if self.g[i] != self.rhs[i] {
            let k = self.calc_key(i);
            self.push(i, k);
        } else {
            self.remove(i);
        }
    }

    fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, Cost)> + '_ {
        let c = self.grid.cell_at(i);
        self.grid.offsets().iter().filter_map(move |&(dx, dy)| {
            let n = c.offset(dx, dy);
            self.grid
                .in_bounds(n)
                .then(|| (self.idx(n), self.grid.edge_cost(c, dx, dy)))
        })
    }

    fn best_rhs(&self, i: usize) -> Cost {
        self.neighbors(i)
            .map(|(n, c)| c + self.g[n])
            .min()
            .unwrap_or(Cost::INFINITY)
    }

    /// Repairs the cost-to-goal field until the start is locally consistent.
    pub fn compute(&mut self) {
        let si = self.idx(self.start);
        while let Some(&(k_old, u)) = self.queue.first() {
            let start_key = self.calc_key(si);
            if !(k_old < start_key || self.rhs[si] > self.g[si]) {
                break;
            }
            self.expansions += 1;
            let k_new = self.calc_key(u);
            if k_old < k_new {
                self.push(u, k_new);
            } else if self.g[u] > self.rhs[u] {
                self.g[u] = self.rhs[u];
                self.remove(u);
                let gu = self.g[u];
                let preds: Vec<(usize, Cost)> = self.neighbors(u).collect();
                for (s, c) in preds {
                    if s != self.idx(self.goal) {
                        self.rhs[s] = self.rhs[s].min(c + gu);
                    }
                    self.update_vertex(s);
                }
            } else {
                let g_old = self.g[u];
                self.g[u] = Cost::INFINITY;
                let mut affected: Vec<(usize, Cost)> = self.neighbors(u).collect();
                affected.push((u, Cost::INFINITY));
                let gi = self.idx(self.goal);
                for (s, c) in affected {
                    let via_u = if s == u { Cost::INFINITY } else { c + g_old };
                    if s != gi && (self.rhs[s] == via_u || s == u) {
                        self.rhs[s] = self.best_rhs(s);
                    }
                    self.update_vertex(s);
                }
            }
        }
    }

    /// Moves the start; the next [`DStarLite::compute`] reuses prior work.
    pub fn move_start(&mut self, start: Cell) -> Result<(), PlanError> {
        if !self.grid.in_bounds(start) {
            return Err(PlanError::OutOfBounds(start));
        }
        self.km = self.km + self.grid.heuristic(self.last, start);
        self.last = start;
        self.start = start;
        Ok(())
    }

    /// Applies cell traversability changes and queues the affected vertices.
    pub fn update_cells(&mut self, changes: &[(Cell, bool)]) {
        let mut touched = BTreeSet::new();
        for &(c, passable) in changes {
            if !self.grid.in_bounds(c) || self.grid.passable(c) == passable {
                continue;
            }
            self.grid.set_passable(c, passable);
            touched.insert(self.idx(c));
            for &(dx, dy) in &crate::grid::NEIGHBORS8 {
                let n = c.offset(dx, dy);
                if self.grid.in_bounds(n) {
                    touched.insert(self.idx(n));
                }
            }
        }
        let gi = self.idx(self.goal);
        for i in touched {
            if i != gi {
                self.rhs[i] = self.best_rhs(i);
            }
            self.update_vertex(i);
        }
    }

    /// Diffs against `grid` and applies the changes.
    pub fn update_grid(&mut self, grid: &PlanGrid) {
        let changes: Vec<(Cell, bool)> = grid
            .mask()
            .iter()
            .zip(self.grid.mask())
            .enumerate()
            .filter(|(_, (new, old))| new != old)
            .map(|(i, (new, _))| (grid.cell_at(i), *new))
            .collect();
        self.update_cells(&changes);
    }

    /// Cost from the start to the goal after [`DStarLite::compute`].
    pub fn cost(&self) -> Cost {
        let si = self.idx(self.start);
        self.g[si].min(self.rhs[si])
    }

    /// Cells whose cost-to-goal is finite.
    pub fn explored(&self) -> Vec<Cell> {
        (0..self.g.len())
            .filter(|&i| !self.g[i].is_infinite() || !self.rhs[i].is_infinite())
            .map(|i| self.grid.cell_at(i))
            .collect()
    }

    /// Follows the cheapest successor from the start to the goal.
    pub fn path(&self) -> Result<Path, PlanError> {
        if !self.grid.passable(self.start) {
            return Err(PlanError::StartBlocked(self.start));
        }
        if self.cost().is_infinite() && self.start != self.goal {
            return Err(PlanError::NoPath {
                explored: self.explored(),
            });
        }
        let mut cells = vec![self.start];
        let mut cur = self.idx(self.start);
        let gi = self.idx(self.goal);
        let mut remaining = self.g.len();
        while cur != gi {
            let next = self
                .neighbors(cur)
                .map(|(n, c)| (c + self.g[n], n))
                .min_by(|a, b| a.0.cmp(&b.0));
            match next {
                Some((c, n)) if !c.is_infinite() && remaining > 0 => {
                    cells.push(self.grid.cell_at(n));
                    cur = n;
                    remaining -= 1;
                }
                _ => {
                    return Err(PlanError::NoPath {
                        explored: self.explored(),
                    })
                }
            }
        }
        Ok(Path::from_cells(cells, self.grid.resolution()))
    }

    pub fn plan(&mut self) -> Result<Path, PlanError> {
        self.compute();
        self.path()
    }
}

/// One-shot plan from `start` to `goal`.
pub fn dstar_lite_plan(grid: &PlanGrid, start: Cell, goal: Cell) -> Result<Path, PlanError> {
    if !grid.in_bounds(start) {
        return Err(PlanError::OutOfBounds(start));
    }
    if !grid.passable(start) {
        return Err(PlanError::StartBlocked(start));
    }
    DStarLite::new(grid.clone(), start, goal)?.plan()
}
