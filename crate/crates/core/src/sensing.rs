//! Egocentric raycast sensor and the visibility-based success test.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::agents::StepOutcome;
use crate::grid::{traverse_segment, Cell, Occupancy, Point};
use crate::interaction::Message;
use crate::params::{DistanceTarget, EvalParams};
use crate::world::{ObjectInstance, World};
use crate::{Error, Rng};

/// Agent pose: position in meters, heading in radians in `[0, 2π)`.
///
/// Heading 0 points along +x; positive turns rotate toward +y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }

    pub fn cell(&self, resolution: f64) -> Cell {
        crate::grid::cell_of_point(self.point(), resolution)
    }

    /// Pose at the center of `c`.
    pub fn at_cell(c: Cell, resolution: f64, heading: f64) -> Self {
        let p = crate::grid::cell_center(c, resolution);
        Pose::new(p.x, p.y, heading)
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = a % TAU;
    let r = if r < 0.0 { r + TAU } else { r };
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Signed difference `a - b` wrapped into `(-π, π]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = normalize_angle(a - b);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub fov_deg: f64,
    pub range_m: f64,
    pub rays: u32,
    /// Standard deviation of Gaussian noise on measured object centers.
    pub noise_sigma_m: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            fov_deg: 90.0,
            range_m: 5.0,
            rays: 181,
            noise_sigma_m: 0.0,
        }
    }
}

impl SensorConfig {
    pub fn fov(&self) -> f64 {
        self.fov_deg.to_radians()
    }

    pub fn validate(&self) -> Result<(), Error> {
        let fov = self.fov();
        if !(fov > 0.0 && fov <= TAU + 1e-9) {
            return Err(Error::Invalid(alloc::format!(
                "sensor fov {} deg outside (0, 360]",
                self.fov_deg
            )));
        }
        if !(self.range_m > 0.0) {
            return Err(Error::Invalid("sensor range must be positive".into()));
        }
        if self.rays < 8 {
            return Err(Error::Invalid("sensor needs at least 8 rays".into()));
        }
        if !(self.noise_sigma_m >= 0.0) {
            return Err(Error::Invalid("sensor noise must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibleObject {
    pub id: String,
    pub class_label: String,
    pub center: Point,
}

/// What a single raycast sweep reveals.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SensedFrame {
    /// Sorted row-major, one entry per cell.
    pub visible_cells: Vec<(Cell, Occupancy)>,
    /// Sorted by object id.
    pub visible_objects: Vec<VisibleObject>,
}

/// Observation handed to a policy each tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub step: u32,
    pub pose: Pose,
    pub visible_cells: Vec<(Cell, Occupancy)>,
    pub visible_objects: Vec<VisibleObject>,
    pub messages_in: Vec<Message>,
    pub carried_object: Option<String>,
    /// Outcome of this agent's previous action, if any.
    pub last_outcome: Option<StepOutcome>,
}

impl Observation {
    pub fn from_frame(step: u32, pose: Pose, frame: SensedFrame) -> Self {
        Observation {
            step,
            pose,
            visible_cells: frame.visible_cells,
            visible_objects: frame.visible_objects,
            messages_in: Vec::new(),
            carried_object: None,
            last_outcome: None,
        }
    }
}

/// Casts `cfg.rays` rays across the field of view centered on the heading.
///
/// Each ray reveals free cells up to and including the first obstacle, which
/// is revealed as an obstacle; nothing behind it is revealed. The agent's own
/// cell is always revealed. An object is visible when some ray stops on one
/// of its footprint cells and its center lies within range.
pub fn raycast_sense(world: &World, pose: &Pose, cfg: &SensorConfig) -> SensedFrame {
    let grid = world.grid();
    let res = world.resolution();
    let origin = pose.point();
    let fov = cfg.fov();
    let full_circle = fov >= TAU - 1e-9;
    let n = cfg.rays.max(1);
    let mut cells: Vec<(Cell, Occupancy)> = Vec::new();
    let mut hit_objects: Vec<usize> = Vec::new();
    if let Some(own) = grid.cell_of(origin) {
        cells.push((own, grid.get(own)));
    }
    for i in 0..n {
        let angle = if full_circle {
            pose.heading + TAU * i as f64 / n as f64
        } else if n == 1 {
            pose.heading
        } else {
            pose.heading - fov / 2.0 + fov * i as f64 / (n - 1) as f64
        };
        let end = Point::new(
            origin.x + cfg.range_m * libm::cos(angle),
            origin.y + cfg.range_m * libm::sin(angle),
        );
        traverse_segment(origin, end, res, |c| {
            if !grid.in_bounds(c) {
                return false;
            }
            let s = grid.get(c);
            cells.push((c, s));
            if s == Occupancy::Obstacle {
                if let Some(o) = world.object_at(c) {
                    hit_objects.push(o);
                }
                return false;
            }
            true
        });
    }
    cells.sort_by_key(|(c, _)| c.row_major());
    cells.dedup_by_key(|(c, _)| *c);
    hit_objects.sort_unstable();
    hit_objects.dedup();
    let mut visible_objects: Vec<VisibleObject> = hit_objects
        .into_iter()
        .map(|o| &world.objects()[o])
        .filter(|o| o.center.dist(origin) <= cfg.range_m)
        .map(|o| VisibleObject {
            id: o.id.clone(),
            class_label: o.class_label.clone(),
            center: o.center,
        })
        .collect();
    visible_objects.sort_by(|a, b| a.id.cmp(&b.id));
    SensedFrame {
        visible_cells: cells,
        visible_objects,
    }
}

/// Adds zero-mean Gaussian noise to every measured object center.
pub fn apply_noise(frame: &mut SensedFrame, sigma: f64, rng: &mut Rng) {
    if !(sigma > 0.0) {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is positive and finite");
    for obj in &mut frame.visible_objects {
        obj.center.x += normal.sample(rng);
        obj.center.y += normal.sample(rng);
    }
}

/// True when no obstacle outside `target`'s footprint lies on the segment
/// from `from` to the target center.
pub fn line_of_sight(world: &World, from: Point, target: &ObjectInstance) -> bool {
    let grid = world.grid();
    traverse_segment(from, target.center, world.resolution(), |c| {
        grid.get(c) != Occupancy::Obstacle || target.footprint.contains(&c)
    })
}

/// The navigation success test: close enough, inside the horizontal view
/// cone, and not hidden behind another obstacle.
pub fn success_visibility(
    pose: &Pose,
    target: &ObjectInstance,
    world: &World,
    eval: &EvalParams,
) -> bool {
    let here = pose.point();
    let reference = match eval.distance_to {
        DistanceTarget::Center => target.center,
        DistanceTarget::Footprint => target.nearest_point(here, world.resolution()),
    };
    if !(here.dist(reference) < eval.success_distance_m) {
        return false;
    }
    let half_fov = eval.success_fov_deg.to_radians() / 2.0;
    let bearing = here.bearing_to(target.center);
    if libm::fabs(angle_diff(bearing, pose.heading)) > half_fov + 1e-9 {
        return false;
    }
    !eval.require_line_of_sight || line_of_sight(world, here, target)
}
