//! First-order fast marching on a [`PlanGrid`].

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use super::PlanGrid;
use crate::grid::{Cell, NEIGHBORS4, NEIGHBORS8};

/// Arrival-time field in meters; `f64::INFINITY` where unreachable.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub width: u32,
    pub height: u32,
    pub resolution: f64,
    pub source: Cell,
    pub values: Vec<f64>,
}

impl DistanceField {
    pub fn get(&self, c: Cell) -> f64 {
        if c.x < 0 || c.y < 0 || c.x as u32 >= self.width || c.y as u32 >= self.height {
            return f64::INFINITY;
        }
        self.values[c.y as usize * self.width as usize + c.x as usize]
    }

    /// Steepest discrete descent from `from`, at most `max_steps` moves.
    ///
    /// Each move goes to the lowest-valued 8-neighbor (diagonals only past
    /// two finite orthogonal cells) and strictly decreases the value; the
    /// walk ends at the source or when no neighbor is lower.
    pub fn descend(&self, from: Cell, max_steps: usize) -> Vec<Cell> {
        let mut out = vec![from];
        let mut cur = from;
        for _ in 0..max_steps {
            let v = self.get(cur);
            if !v.is_finite() || cur == self.source {
                break;
            }
            let mut best: Option<(f64, Cell)> = None;
            for (dx, dy) in NEIGHBORS8 {
                if dx != 0
                    && dy != 0
                    && !(self.get(cur.offset(dx, 0)).is_finite()
                        && self.get(cur.offset(0, dy)).is_finite())
                {
                    continue;
                }
                let n = cur.offset(dx, dy);
                let nv = self.get(n);
                if nv < v && best.is_none_or(|(b, _)| nv < b) {
                    best = Some((nv, n));
                }
            }
            match best {
                Some((_, n)) => {
                    out.push(n);
                    cur = n;
                }
                None => break,
            }
        }
        out
    }
}

/// Full fast-marching field from `goal` over passable cells.
pub fn fmm_field(grid: &PlanGrid, goal: Cell) -> DistanceField {
    fmm_field_until(grid, goal, None)
}

/// Fast marching that stops once `stop_at` is accepted.
///
/// Cells not yet accepted at that point hold infinity; every accepted value
/// is final, so descent from `stop_at` is unaffected.
pub fn fmm_field_until(grid: &PlanGrid, goal: Cell, stop_at: Option<Cell>) -> DistanceField {
    let (w, h) = (grid.width() as usize, grid.height() as usize);
    let res = grid.resolution();
    let mut values = vec![f64::INFINITY; w * h];
    let mut accepted = vec![false; w * h];
    let mut field = DistanceField {
        width: grid.width(),
        height: grid.height(),
        resolution: res,
        source: goal,
        values: Vec::new(),
    };
    let Some(gi) = grid.index(goal).filter(|_| grid.passable(goal)) else {
        field.values = values;
        return field;
    };
    let stop = stop_at.and_then(|c| grid.index(c));
    let mut heap = BinaryHeap::new();
    values[gi] = 0.0;
    heap.push(Reverse((0.0f64.to_bits(), gi)));
    while let Some(Reverse((bits, i))) = heap.pop() {
        if accepted[i] || f64::from_bits(bits) != values[i] {
            continue;
        }
        accepted[i] = true;
        if Some(i) == stop {
            break;
        }
        let c = grid.cell_at(i);
        for (dx, dy) in NEIGHBORS4 {
            let n = c.offset(dx, dy);
            let Some(ni) = grid.index(n) else { continue };
            if accepted[ni] || !grid.passable(n) {
                continue;
            }
            let known = |m: Cell| {
                grid.index(m)
                    .filter(|&mi| accepted[mi])
                    .map_or(f64::INFINITY, |mi| values[mi])
            };
            let a = known(n.offset(1, 0)).min(known(n.offset(-1, 0)));
            let b = known(n.offset(0, 1)).min(known(n.offset(0, -1)));
            let t = solve_eikonal(a, b, res);
            if t < values[ni] {
                values[ni] = t;
                heap.push(Reverse((t.to_bits(), ni)));
            }
        }
    }
    if stop.is_some() {
        for (v, a) in values.iter_mut().zip(&accepted) {
            if !a {
                *v = f64::INFINITY;
            }
        }
    }
    field.values = values;
    field
}

/// Upwind update from the smaller neighbor along each axis.
fn solve_eikonal(a: f64, b: f64, h: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    if !hi.is_finite() || hi - lo >= h {
        return lo + h;
    }
    let d = hi - lo;
    (lo + hi + libm::sqrt(2.0 * h * h - d * d)) / 2.0
}
