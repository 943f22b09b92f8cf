use serde::{Deserialize, Serialize};

use super::{GridSpec, RasterGrid};
use crate::error::{Error, Result};

/// Fill value for resampled pixels outside the source when the source has none.
pub const DEFAULT_NODATA: f32 = -9999.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleMethod {
    #[default]
    Nearest,
    Bilinear,
}

/// Samples `src` at every destination pixel center.
///
/// Destination pixels whose center falls outside the source extent receive
/// nodata. Bilinear sampling clamps to the edge pixels in the outer half
/// pixel and yields nodata if any contributing source pixel is nodata.
pub fn resample_to_grid(src: &RasterGrid, dst: &GridSpec, method: ResampleMethod) -> Result<RasterGrid> {
    let (ax0, ay0, ax1, ay1) = src.spec.extent();
    let (bx0, by0, bx1, by1) = dst.extent();
    if ax0.max(bx0) >= ax1.min(bx1) || ay0.max(by0) >= ay1.min(by1) {
        return Err(Error::EmptyIntersection);
    }
    let nodata = src.nodata.unwrap_or(DEFAULT_NODATA);
    let (sw, sh) = (src.spec.width, src.spec.height);
    let mut out = RasterGrid::filled(*dst, src.bands, nodata);
    out.band_names = src.band_names.clone();
    let mut any_outside = false;

    // source coordinates are separable for north-up grids
    let cols: Vec<f64> = (0..dst.width)
        .map(|c| {
            let (x, _) = dst.pixel_center(c, 0);
            src.spec.transform.world_to_pixel(x, 0.0).0
        })
        .collect();
    let rows: Vec<f64> = (0..dst.height)
        .map(|r| {
            let (_, y) = dst.pixel_center(0, r);
            src.spec.transform.world_to_pixel(0.0, y).1
        })
        .collect();
    let inside = |v: f64, n: usize| v >= -0.5 && v < n as f64 - 0.5;

    for b in 0..src.bands {
        let sband = src.band(b);
        let n = dst.len();
        let dband = &mut out.data[b * n..(b + 1) * n];
        for (r, &sr) in rows.iter().enumerate() {
            for (c, &sc) in cols.iter().enumerate() {
                if !inside(sc, sw) || !inside(sr, sh) {
                    any_outside = true;
                    continue;
                }
                let v = match method {
                    ResampleMethod::Nearest => {
                        let ci = (sc + 0.5).floor() as usize;
                        let ri = (sr + 0.5).floor() as usize;
                        sband[ri * sw + ci]
                    }
                    ResampleMethod::Bilinear => {
                        let (c0, c1, fx) = neighbors(sc, sw);
                        let (r0, r1, fy) = neighbors(sr, sh);
                        let q = [
                            sband[r0 * sw + c0],
                            sband[r0 * sw + c1],
                            sband[r1 * sw + c0],
                            sband[r1 * sw + c1],
                        ];
                        if q.iter().any(|&v| src.is_nodata(v)) {
                            nodata
                        } else {
                            let top = q[0] as f64 * (1.0 - fx) + q[1] as f64 * fx;
                            let bottom = q[2] as f64 * (1.0 - fx) + q[3] as f64 * fx;
                            (top * (1.0 - fy) + bottom * fy) as f32
                        }
                    }
                };
                dband[r * dst.width + c] = v;
            }
        }
    }
    if any_outside || src.nodata.is_some() {
        out.nodata = Some(nodata);
    }
    Ok(out)
}

fn neighbors(v: f64, n: usize) -> (usize, usize, f64) {
    let max = (n - 1) as f64;
    let v = v.clamp(0.0, max);
    let lo = v.floor();
    let hi = (lo + 1.0).min(max);
    (lo as usize, hi as usize, v - lo)
}
