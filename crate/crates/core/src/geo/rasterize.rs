use super::polygon::edge_crossing;
use super::{GridSpec, Polygon, RasterGrid};

/// Polygons skipped during rasterization, by input index.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct RasterizeReport {
    pub rejected: Vec<(usize, String)>,
}

/// Burns `(polygon, value)` pairs into a single-band raster.
///
/// A pixel takes a polygon's value iff its center is inside under the
/// even-odd rule; pixel centers on a left or bottom edge are inside. Later
/// polygons overwrite earlier ones. Invalid polygons are skipped and listed
/// in the report.
pub fn rasterize_polygons(
    polys: &[(Polygon, f32)],
    grid: &GridSpec,
    fill: f32,
) -> (RasterGrid, RasterizeReport) {
    let mut out = RasterGrid::filled(*grid, 1, fill);
    let mut report = RasterizeReport::default();
    let mut crossings: Vec<f64> = Vec::new();
    for (idx, (poly, value)) in polys.iter().enumerate() {
        if let Err(e) = poly.validate() {
            log::warn!("skipping polygon {idx}: {e}");
            report.rejected.push((idx, e.to_string()));
            continue;
        }
        let Some((r0, r1)) = row_range(poly, grid) else {
            continue;
        };
        for row in r0..r1 {
            let (_, y) = grid.transform.pixel_to_world(0.0, row as f64);
            crossings.clear();
            for ring in poly.rings() {
                for w in ring.windows(2) {
                    if let Some(xc) = edge_crossing(w[0], w[1], y) {
                        crossings.push(xc);
                    }
                }
            }
            crossings.sort_by(f64::total_cmp);
            let line = &mut out.data[row * grid.width..(row + 1) * grid.width];
            for span in crossings.chunks_exact(2) {
                let c0 = first_col_at_or_after(grid, span[0]);
                let c1 = first_col_at_or_after(grid, span[1]);
                if c0 < c1 {
                    line[c0..c1].fill(*value);
                }
            }
        }
    }
    (out, report)
}

fn col_center(grid: &GridSpec, col: usize) -> f64 {
    grid.transform.pixel_to_world(col as f64, 0.0).0
}

/// Smallest column whose center x is >= `x`, clamped to `[0, width]`.
fn first_col_at_or_after(grid: &GridSpec, x: f64) -> usize {
    let (fc, _) = grid.transform.world_to_pixel(x, 0.0);
    let mut c = fc.ceil().clamp(0.0, grid.width as f64) as usize;
    while c > 0 && col_center(grid, c - 1) >= x {
        c -= 1;
    }
    while c < grid.width && col_center(grid, c) < x {
        c += 1;
    }
    c
}

fn row_range(poly: &Polygon, grid: &GridSpec) -> Option<(usize, usize)> {
    let (_, min_y, _, max_y) = poly.bbox();
    let (_, ra) = grid.transform.world_to_pixel(0.0, min_y);
    let (_, rb) = grid.transform.world_to_pixel(0.0, max_y);
    let lo = (ra.min(rb).floor() - 1.0).max(0.0);
    let hi = (ra.max(rb).ceil() + 2.0).min(grid.height as f64);
    (lo < hi).then_some((lo as usize, hi as usize))
}
