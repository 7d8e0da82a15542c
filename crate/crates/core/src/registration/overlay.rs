use nalgebra::Vector2;

use crate::geometry::SimilarityTransform2D;
use crate::mosaic::PatchRaster;
use crate::raster::{Raster, RasterError};

/// Composite the patches onto the satellite map at `alpha`.
///
/// The map is written in gray on all three channels. Pixels covered by a
/// patch carry the patch intensity in red and the map in green and blue, so
/// misregistration shows as colour fringes.
pub fn render_overlay(
    satellite: &Raster,
    patches: &[PatchRaster],
    alpha: &SimilarityTransform2D,
) -> Result<Raster, RasterError> {
    let (w, h) = (satellite.width(), satellite.height());
    let mut rgb = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let g = satellite.get(x, y, 0);
            rgb.extend_from_slice(&[g, g, g]);
        }
    }
    for patch in patches {
        let corners = [
            (0.0, 0.0),
            (patch.width() as f64 - 1.0, 0.0),
            (0.0, patch.height() as f64 - 1.0),
            (patch.width() as f64 - 1.0, patch.height() as f64 - 1.0),
        ];
        let placed: Vec<Vector2<f64>> = corners
            .iter()
            .map(|&(i, j)| alpha.apply(&(patch.origin_g() + Vector2::new(i, j) * patch.step())))
            .collect();
        let lo = placed.iter().fold(Vector2::repeat(f64::INFINITY), |a, b| a.inf(b));
        let hi = placed.iter().fold(Vector2::repeat(f64::NEG_INFINITY), |a, b| a.sup(b));
        let x0 = lo.x.floor().max(0.0) as usize;
        let y0 = lo.y.floor().max(0.0) as usize;
        let x1 = (hi.x.ceil().max(-1.0) as i64).min(w as i64 - 1);
        let y1 = (hi.y.ceil().max(-1.0) as i64).min(h as i64 - 1);
        for y in y0 as i64..=y1 {
            for x in x0 as i64..=x1 {
                let g = alpha.apply_inverse(&Vector2::new(x as f64, y as f64));
                let cell = (g - patch.origin_g()) / patch.step();
                let (i, j) = (cell.x.round(), cell.y.round());
                if i < 0.0 || j < 0.0 || i >= patch.width() as f64 || j >= patch.height() as f64 {
                    continue;
                }
                let k = j as usize * patch.width() + i as usize;
                if patch.mask()[k] {
                    rgb[(y as usize * w + x as usize) * 3] = patch.samples()[k];
                }
            }
        }
    }
    Raster::new(w, h, 3, rgb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_paints_red_channel_inside_patch() {
        let map = Raster::filled(10, 10, 50.0).unwrap();
        let patch = PatchRaster::new("p", "i", 2, 2, vec![200.0; 4], vec![true, true, true, false], [3.0, 4.0], 1.0).unwrap();
        let out = render_overlay(&map, &[patch], &SimilarityTransform2D::identity()).unwrap();
        assert_eq!(out.get(3, 4, 0), 200.0);
        assert_eq!(out.get(3, 4, 1), 50.0);
        assert_eq!(out.get(4, 5, 0), 50.0);
        assert_eq!(out.get(0, 0, 0), 50.0);
    }
}
