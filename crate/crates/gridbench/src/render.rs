//! Static trajectory images of a scene and an episode log.

use std::io::Cursor;
use std::path::Path;

use gridbench_core::episode::EpisodeLog;
use gridbench_core::grid::Point;
use gridbench_core::world::SceneSpec;
use gridbench_core::{Error, Occupancy};
use image::{ImageFormat, Rgb, RgbImage};

use crate::{io_err, Result};

const FREE: Rgb<u8> = Rgb([255, 255, 255]);
const OBSTACLE: Rgb<u8> = Rgb([45, 45, 45]);
const UNKNOWN: Rgb<u8> = Rgb([190, 190, 190]);

/// Object classes, by sorted label.
const CLASS_COLORS: [Rgb<u8>; 10] = [
    Rgb([166, 206, 227]),
    Rgb([178, 223, 138]),
    Rgb([251, 154, 153]),
    Rgb([253, 191, 111]),
    Rgb([202, 178, 214]),
    Rgb([255, 255, 153]),
    Rgb([141, 211, 199]),
    Rgb([252, 205, 229]),
    Rgb([217, 217, 217]),
    Rgb([204, 235, 197]),
];

/// Agent trajectories, by agent index.
pub const AGENT_COLORS: [Rgb<u8>; 8] = [
    Rgb([228, 26, 28]),
    Rgb([55, 126, 184]),
    Rgb([77, 175, 74]),
    Rgb([152, 78, 163]),
    Rgb([255, 127, 0]),
    Rgb([0, 170, 170]),
    Rgb([166, 86, 40]),
    Rgb([247, 80, 191]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderOptions {
    /// Pixels per grid cell.
    pub scale: u32,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { scale: 4 }
    }
}

struct Canvas {
    img: RgbImage,
    scale: u32,
    resolution: f64,
    height_cells: u32,
}

impl Canvas {
    fn fill_cell(&mut self, x: i32, y: i32, color: Rgb<u8>) {
        let s = self.scale;
        let top = (self.height_cells as i32 - 1 - y) as u32 * s;
        for dy in 0..s {
            for dx in 0..s {
                self.img.put_pixel(x as u32 * s + dx, top + dy, color);
            }
        }
    }

    fn to_px(&self, p: Point) -> (f64, f64) {
        let s = self.scale as f64;
        (
            p.x / self.resolution * s,
            (self.height_cells as f64 - p.y / self.resolution) * s,
        )
    }

    fn dot(&mut self, x: i64, y: i64, color: Rgb<u8>) {
        if x >= 0 && y >= 0 && (x as u32) < self.img.width() && (y as u32) < self.img.height() {
            self.img.put_pixel(x as u32, y as u32, color);
        }
    }

    fn line(&mut self, a: Point, b: Point, color: Rgb<u8>) {
        let ((x0, y0), (x1, y1)) = (self.to_px(a), self.to_px(b));
        let n = (x1 - x0).abs().max((y1 - y0).abs()).ceil().max(1.0) as usize;
        for k in 0..=n {
            let t = k as f64 / n as f64;
            let (x, y) = (x0 + (x1 - x0) * t, y0 + (y1 - y0) * t);
            self.dot(x.floor() as i64, y.floor() as i64, color);
        }
    }

    /// Filled square (start) or outline (end) centered on `p`.
    fn marker(&mut self, p: Point, filled: bool, color: Rgb<u8>) {
        let (cx, cy) = self.to_px(p);
        let (cx, cy) = (cx.floor() as i64, cy.floor() as i64);
        let r = self.scale as i64;
        for dy in -r..=r {
            for dx in -r..=r {
                if filled || dx.abs() == r || dy.abs() == r {
                    self.dot(cx + dx, cy + dy, color);
                }
            }
        }
    }
}

/// Scene-only image when `log` is `None` or has no ticks.
pub fn render(
    scene: &SceneSpec,
    log: Option<&EpisodeLog>,
    opts: RenderOptions,
) -> Result<RgbImage> {
    let scale = opts.scale.max(1);
    let grid = &scene.grid;
    let mut canvas = Canvas {
        img: RgbImage::new(grid.width() * scale, grid.height() * scale),
        scale,
        resolution: scene.resolution,
        height_cells: grid.height(),
    };
    for (c, state) in grid.iter() {
        let color = match state {
            Occupancy::Free => FREE,
            Occupancy::Obstacle => OBSTACLE,
            Occupancy::Unknown => UNKNOWN,
        };
        canvas.fill_cell(c.x, c.y, color);
    }
    let mut classes: Vec<&str> = scene
        .objects
        .iter()
        .map(|o| o.class_label.as_str())
        .collect();
    classes.sort_unstable();
    classes.dedup();
    for o in &scene.objects {
        let k = classes.binary_search(&o.class_label.as_str()).unwrap_or(0);
        for c in &o.footprint {
            canvas.fill_cell(c.x, c.y, CLASS_COLORS[k % CLASS_COLORS.len()]);
        }
    }
    let Some(log) = log else {
        return Ok(canvas.img);
    };
    if log.header.scene_id != scene.id {
        return Err(Error::SceneMismatch {
            left: log.header.scene_id.clone(),
            right: scene.id.clone(),
        }
        .into());
    }
    if log.ticks.is_empty() {
        return Ok(canvas.img);
    }
    for (i, track) in trajectories(log).iter().enumerate() {
        for p in track {
            if grid.cell_of(*p).is_none() {
                return Err(Error::Invalid(format!(
                    "agent {i} at ({}, {}) is outside the scene",
                    p.x, p.y
                ))
                .into());
            }
        }
        let color = AGENT_COLORS[i % AGENT_COLORS.len()];
        for w in track.windows(2) {
            canvas.line(w[0], w[1], color);
        }
        if let (Some(first), Some(last)) = (track.first(), track.last()) {
            canvas.marker(*first, true, color);
            canvas.marker(*last, false, color);
        }
    }
    Ok(canvas.img)
}

/// Positions of every agent in tick order, ending at the final pose.
pub fn trajectories(log: &EpisodeLog) -> Vec<Vec<Point>> {
    let n = log.header.task.start.len();
    let mut tracks: Vec<Vec<Point>> = log
        .header
        .task
        .start
        .iter()
        .map(|p| vec![p.point()])
        .collect();
    let mut push = |i: usize, p: Point| {
        if let Some(t) = tracks.get_mut(i) {
            if t.last() != Some(&p) {
                t.push(p);
            }
        }
    };
    for tick in &log.ticks {
        for a in &tick.agents {
            push(a.agent, a.pose.point());
        }
    }
    for (i, a) in log.footer.agents.iter().enumerate().take(n) {
        push(i, a.final_pose.point());
    }
    tracks
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn write_png(img: &RgbImage, path: &Path) -> Result<()> {
    std::fs::write(path, encode_png(img)?).map_err(io_err(path))
}
