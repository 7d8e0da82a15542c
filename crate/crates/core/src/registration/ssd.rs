use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RegistrationError;
use crate::geometry::SimilarityTransform2D;
use crate::mosaic::PatchRaster;
use crate::raster::Raster;

/// Inclusive integer shift bounds; always contains `(0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftWindow {
    pub u_min: i32,
    pub u_max: i32,
    pub v_min: i32,
    pub v_max: i32,
}

impl ShiftWindow {
    pub fn new(u_min: i32, u_max: i32, v_min: i32, v_max: i32) -> Result<Self, RegistrationError> {
        let w = Self { u_min, u_max, v_min, v_max };
        if u_min > 0 || u_max < 0 || v_min > 0 || v_max < 0 {
            return Err(RegistrationError::Window(w));
        }
        Ok(w)
    }

    /// `[-half, half]` on both axes.
    pub fn square(half: i32) -> Self {
        let h = half.abs();
        Self { u_min: -h, u_max: h, v_min: -h, v_max: h }
    }

    pub fn columns(&self) -> usize {
        (self.u_max - self.u_min + 1) as usize
    }

    pub fn rows(&self) -> usize {
        (self.v_max - self.v_min + 1) as usize
    }

    pub fn len(&self) -> usize {
        self.columns() * self.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, u: i32, v: i32) -> bool {
        (self.u_min..=self.u_max).contains(&u) && (self.v_min..=self.v_max).contains(&v)
    }

    pub fn on_boundary(&self, u: i32, v: i32) -> bool {
        u == self.u_min || u == self.u_max || v == self.v_min || v == self.v_max
    }

    /// Every bound doubled.
    pub fn grown(&self) -> Self {
        Self {
            u_min: self.u_min * 2,
            u_max: self.u_max * 2,
            v_min: self.v_min * 2,
            v_max: self.v_max * 2,
        }
    }

    /// Row-major `(u, v)` shifts, `v` outermost.
    pub fn shifts(&self) -> impl Iterator<Item = (i32, i32)> + '_ {
        (self.v_min..=self.v_max).flat_map(move |v| (self.u_min..=self.u_max).map(move |u| (u, v)))
    }

    fn index(&self, u: i32, v: i32) -> usize {
        (v - self.v_min) as usize * self.columns() + (u - self.u_min) as usize
    }
}

impl Default for ShiftWindow {
    fn default() -> Self {
        Self::square(10)
    }
}

/// SSD of one patch against the satellite map over a window of integer shifts.
///
/// Values are coverage normalized: the raw sum over the comparable pixels is
/// scaled by `|A| / count`, which leaves full-coverage shifts untouched and
/// keeps partially covered shifts comparable. Shifts below the coverage floor
/// hold `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsdSurface {
    pub label: String,
    pub window: ShiftWindow,
    pub values: Vec<Option<f64>>,
    pub valid_counts: Vec<usize>,
    pub mask_size: usize,
    pub argmin: (i32, i32),
    pub min_value: f64,
}

impl SsdSurface {
    pub fn value(&self, u: i32, v: i32) -> Option<f64> {
        if !self.window.contains(u, v) {
            return None;
        }
        self.values[self.window.index(u, v)]
    }

    pub fn valid_count(&self, u: i32, v: i32) -> usize {
        if !self.window.contains(u, v) {
            return 0;
        }
        self.valid_counts[self.window.index(u, v)]
    }

    /// Evaluated shifts with their values.
    pub fn valid_shifts(&self) -> impl Iterator<Item = ((i32, i32), f64)> + '_ {
        self.window
            .shifts()
            .zip(&self.values)
            .filter_map(|(s, v)| v.map(|v| (s, v)))
    }

    pub fn argmin_on_boundary(&self) -> bool {
        self.window.on_boundary(self.argmin.0, self.argmin.1)
    }

    /// Three-point parabolic refinement of the argmin along each axis,
    /// clamped to half a pixel. Axes without two valid neighbours or with
    /// non-positive curvature stay at zero offset.
    pub fn subpixel_offset(&self) -> (f64, f64) {
        let (u, v) = self.argmin;
        let axis = |a: Option<f64>, b: Option<f64>| -> f64 {
            match (a, b) {
                (Some(minus), Some(plus)) => {
                    let curvature = minus - 2.0 * self.min_value + plus;
                    if curvature > 0.0 {
                        (0.5 * (minus - plus) / curvature).clamp(-0.5, 0.5)
                    } else {
                        0.0
                    }
                }
                _ => 0.0,
            }
        };
        (
            axis(self.value(u - 1, v), self.value(u + 1, v)),
            axis(self.value(u, v - 1), self.value(u, v + 1)),
        )
    }
}

/// Preferred ordering between equal SSD values: smaller shift norm, then
/// lexicographic `(v, u)`.
fn tie_key(u: i32, v: i32) -> (i64, i32, i32) {
    ((u as i64).pow(2) + (v as i64).pow(2), v, u)
}

/// Patch cell projected into the satellite map: integer base plus the
/// fractional offset shared by every integer shift.
#[derive(Debug, Clone, Copy)]
struct PlacedCell {
    x0: i64,
    y0: i64,
    fx: f64,
    fy: f64,
    value: f64,
}

fn place_cells(patch: &PatchRaster, alpha: &SimilarityTransform2D) -> Vec<PlacedCell> {
    patch
        .valid_cells()
        .map(|(g, value)| {
            let y = alpha.apply(&g);
            let (xf, yf) = (y.x.floor(), y.y.floor());
            PlacedCell {
                x0: xf as i64,
                y0: yf as i64,
                fx: y.x - xf,
                fy: y.y - yf,
                value,
            }
        })
        .collect()
}

#[inline]
fn sample_shifted(sat: &[f64], w: i64, h: i64, cell: &PlacedCell, u: i64, v: i64) -> Option<f64> {
    let x = cell.x0 + u;
    let y = cell.y0 + v;
    let x1 = if cell.fx > 0.0 { x + 1 } else { x };
    let y1 = if cell.fy > 0.0 { y + 1 } else { y };
    if x < 0 || y < 0 || x1 >= w || y1 >= h {
        return None;
    }
    let at = |xx: i64, yy: i64| sat[(yy * w + xx) as usize];
    let top = at(x, y) * (1.0 - cell.fx) + at(x1, y) * cell.fx;
    if cell.fy == 0.0 {
        return Some(top);
    }
    let bottom = at(x, y1) * (1.0 - cell.fx) + at(x1, y1) * cell.fx;
    Some(top * (1.0 - cell.fy) + bottom * cell.fy)
}

/// Evaluate the SSD surface of `patch` placed by `alpha` over `window`.
///
/// Each valid cell at G position `x` is compared with the satellite,
/// bilinearly sampled at `alpha(x) + (u, v)`. A shift counts only when at
/// least `coverage_floor * |A|` cells land on the map.
pub fn compute_ssd_surface(
    patch: &PatchRaster,
    satellite: &Raster,
    alpha: &SimilarityTransform2D,
    window: ShiftWindow,
    coverage_floor: f64,
) -> Result<SsdSurface, RegistrationError> {
    if satellite.channels() != 1 {
        return Err(RegistrationError::SatelliteChannels(satellite.channels()));
    }
    let cells = place_cells(patch, alpha);
    let mask_size = cells.len();
    let required = ((coverage_floor * mask_size as f64).ceil() as usize).max(1);
    let (w, h) = (satellite.width() as i64, satellite.height() as i64);
    let sat = satellite.samples();

    let rows: Vec<Vec<(Option<f64>, usize)>> = (window.v_min..=window.v_max)
        .into_par_iter()
        .map(|v| {
            (window.u_min..=window.u_max)
                .map(|u| {
                    let mut sum = 0.0;
                    let mut count = 0usize;
                    for cell in &cells {
                        if let Some(s) = sample_shifted(sat, w, h, cell, u as i64, v as i64) {
                            let d = s - cell.value;
                            sum += d * d;
                            count += 1;
                        }
                    }
                    if count >= required {
                        (Some(sum * mask_size as f64 / count as f64), count)
                    } else {
                        (None, count)
                    }
                })
                .collect()
        })
        .collect();

    let mut values = Vec::with_capacity(window.len());
    let mut valid_counts = Vec::with_capacity(window.len());
    for (value, count) in rows.into_iter().flatten() {
        values.push(value);
        valid_counts.push(count);
    }
    let mut best: Option<((i32, i32), f64)> = None;
    for ((u, v), value) in window.shifts().zip(&values) {
        let Some(value) = *value else { continue };
        best = match best {
            Some((s, b)) if b < value || (b == value && tie_key(s.0, s.1) <= tie_key(u, v)) => Some((s, b)),
            _ => Some(((u, v), value)),
        };
    }
    let (argmin, min_value) = best.ok_or_else(|| RegistrationError::Coverage {
        label: patch.label().to_string(),
    })?;
    Ok(SsdSurface {
        label: patch.label().to_string(),
        window,
        values,
        valid_counts,
        mask_size,
        argmin,
        min_value,
    })
}
