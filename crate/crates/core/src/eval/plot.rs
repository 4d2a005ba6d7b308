//! Minimal raster plots: scatter and bar charts, no text.

use std::path::Path;

use crate::error::Result;
use crate::grid::RgbImage;
use crate::scene::write_png_rgb;

const PALETTE: [[f64; 3]; 8] = [
    [0.89, 0.10, 0.11],
    [0.22, 0.49, 0.72],
    [0.30, 0.69, 0.29],
    [0.60, 0.31, 0.64],
    [1.00, 0.50, 0.00],
    [0.65, 0.34, 0.16],
    [0.97, 0.51, 0.75],
    [0.40, 0.40, 0.40],
];

pub(crate) fn color(i: usize) -> [f64; 3] {
    PALETTE[i % PALETTE.len()]
}

pub(crate) struct Canvas {
    img: RgbImage,
}

impl Canvas {
    pub fn new(width: usize, height: usize) -> Self {
        Canvas { img: RgbImage::filled(width, height, [1.0; 3]) }
    }

    pub fn fill_rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, rgb: [f64; 3]) {
        let (w, h) = (self.img.width as i64, self.img.height as i64);
        for y in y0.max(0)..y1.min(h) {
            for x in x0.max(0)..x1.min(w) {
                self.img.set(x as usize, y as usize, rgb);
            }
        }
    }

    pub fn dot(&mut self, cx: f64, cy: f64, r: f64, rgb: [f64; 3]) {
        let ri = r.ceil() as i64;
        let (x0, y0) = (cx.round() as i64, cy.round() as i64);
        for dy in -ri..=ri {
            for dx in -ri..=ri {
                let (x, y) = (x0 + dx, y0 + dy);
                if ((dx * dx + dy * dy) as f64) <= r * r && x >= 0 && y >= 0 && (x as usize) < self.img.width && (y as usize) < self.img.height {
                    self.img.set(x as usize, y as usize, rgb);
                }
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_png_rgb(path, &self.img)
    }
}

/// Scatter of 2-D points coloured by group index.
pub(crate) fn scatter(points: &[[f64; 2]], groups: &[usize], path: &Path) -> Result<()> {
    const SIDE: usize = 400;
    const PAD: f64 = 20.0;
    let mut c = Canvas::new(SIDE, SIDE);
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let span = (0..2).map(|d| (hi[d] - lo[d]).max(1e-12)).fold(0.0, f64::max);
    let scale = (SIDE as f64 - 2.0 * PAD) / span;
    for (p, &g) in points.iter().zip(groups) {
        c.dot(PAD + (p[0] - lo[0]) * scale, PAD + (p[1] - lo[1]) * scale, 4.0, color(g));
    }
    c.save(path)
}

/// Vertical bars for values in [-1, 1]; the zero line sits mid-height.
pub(crate) fn bars(values: &[f64], path: &Path) -> Result<()> {
    const H: usize = 240;
    const BAR: usize = 36;
    let width = (values.len() * (BAR + 12) + 12).max(60);
    let mut c = Canvas::new(width, H);
    let mid = (H / 2) as i64;
    c.fill_rect(0, mid, width as i64, mid + 1, [0.0; 3]);
    for (i, &v) in values.iter().enumerate() {
        let x0 = (12 + i * (BAR + 12)) as i64;
        let len = (v.clamp(-1.0, 1.0) * (H as f64 / 2.0 - 8.0)).round() as i64;
        let (y0, y1) = if len >= 0 { (mid - len, mid) } else { (mid + 1, mid + 1 - len) };
        c.fill_rect(x0, y0, x0 + BAR as i64, y1, color(i));
    }
    c.save(path)
}
