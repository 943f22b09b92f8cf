//! Seven-band input cube: co-registration of the optical, height and
//! night-light modalities, per-band z-score normalization and crop sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{resample_to_grid, GridSpec, RasterGrid, ResampleMethod};
use crate::labelgen::LabelRaster;

pub const CUBE_BANDS: usize = 7;
pub const CUBE_BAND_NAMES: [&str; CUBE_BANDS] = ["oi_r", "oi_g", "oi_b", "bh", "ntl_1", "ntl_2", "ntl_3"];

const MIN_STD: f64 = 1e-6;

/// Tiling and sampling knobs. Defaults are desk-scale; full-size runs use
/// 6000 px tiles, 312 px crops and 200 crops per tile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CubeConfig {
    pub tile_size: usize,
    pub crop_size: usize,
    pub crops_per_tile: usize,
    pub seed: u64,
    pub resample_method: ResampleMethod,
}

impl Default for CubeConfig {
    fn default() -> Self {
        Self {
            tile_size: 512,
            crop_size: 64,
            crops_per_tile: 40,
            seed: 0,
            resample_method: ResampleMethod::Nearest,
        }
    }
}

/// Per-band (mean, std) z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cube {
    pub raster: RasterGrid,
    /// Present once the payload has been z-scored.
    pub norm_stats: Option<Normalizer>,
}

/// Stacks OI (3 bands), BH (1) and NTL (3) on `target`, resampling each
/// modality that is not already on it.
pub fn assemble_cube(
    oi: &RasterGrid,
    bh: &RasterGrid,
    ntl: &RasterGrid,
    target: &GridSpec,
    method: ResampleMethod,
) -> Result<Cube> {
    for (what, r, expected) in [("optical", oi, 3), ("building height", bh, 1), ("night light", ntl, 3)] {
        if r.bands != expected {
            return Err(Error::BandCount {
                what,
                expected,
                got: r.bands,
            });
        }
    }
    let on_target = |r: &RasterGrid, m: ResampleMethod| -> Result<RasterGrid> {
        if r.spec == *target {
            Ok(r.clone())
        } else {
            resample_to_grid(r, target, m)
        }
    };
    // optical is the reference modality; only coarse layers honor `method`
    let parts = [
        on_target(oi, ResampleMethod::Nearest)?,
        on_target(bh, method)?,
        on_target(ntl, method)?,
    ];
    let nodata = parts.iter().find_map(|p| p.nodata);
    let mut data = Vec::with_capacity(target.len() * CUBE_BANDS);
    for p in &parts {
        match (p.nodata, nodata) {
            (Some(a), Some(b)) if a != b => {
                data.extend(p.data.iter().map(|&v| if v == a { b } else { v }));
            }
            _ => data.extend_from_slice(&p.data),
        }
    }
    let raster = RasterGrid::new(*target, CUBE_BANDS, data)?
        .with_nodata(nodata)
        .with_band_names(CUBE_BAND_NAMES)?;
    Ok(Cube {
        raster,
        norm_stats: None,
    })
}

/// Population mean and std per band over every valid pixel of `cubes`.
/// Near-constant bands get std 1.
pub fn fit_normalizer(cubes: &[&Cube]) -> Result<Normalizer> {
    if cubes.is_empty() {
        return Err(Error::Config("normalizer needs at least one tile".into()));
    }
    let mut mean = Vec::with_capacity(CUBE_BANDS);
    let mut std = Vec::with_capacity(CUBE_BANDS);
    for b in 0..CUBE_BANDS {
        let valid = || {
            cubes.iter().flat_map(move |c| {
                c.raster
                    .band(b)
                    .iter()
                    .filter(move |&&v| !c.raster.is_nodata(v))
                    .map(|&v| v as f64)
            })
        };
        let (sum, n) = valid().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        if n == 0 {
            return Err(Error::AllNodata(b));
        }
        let m = sum / n as f64;
        let var = valid().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
        let s = var.sqrt();
        mean.push(m);
        std.push(if s < MIN_STD { 1.0 } else { s });
    }
    Ok(Normalizer { mean, std })
}

impl Normalizer {
    /// Z-scores every band. Nodata pixels become 0, the band mean.
    pub fn normalize(&self, cube: &Cube) -> Cube {
        let mut raster = cube.raster.clone();
        for b in 0..CUBE_BANDS {
            let (m, s) = (self.mean[b], self.std[b]);
            let nodata = cube.raster.nodata;
            for v in raster.band_mut(b) {
                *v = if nodata.is_some_and(|nd| *v == nd) {
                    0.0
                } else {
                    ((*v as f64 - m) / s) as f32
                };
            }
        }
        raster.nodata = None;
        Cube {
            raster,
            norm_stats: Some(self.clone()),
        }
    }

    pub fn denormalize(&self, cube: &Cube) -> Cube {
        let mut raster = cube.raster.clone();
        for b in 0..CUBE_BANDS {
            let (m, s) = (self.mean[b], self.std[b]);
            for v in raster.band_mut(b) {
                *v = (*v as f64 * s + m) as f32;
            }
        }
        Cube {
            raster,
            norm_stats: None,
        }
    }
}

/// Training crops in `[N, 7, S, S]` layout with congruent labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CropBatch {
    pub size: usize,
    pub patches: Vec<f32>,
    pub labels: Vec<u8>,
    pub supervision: Vec<u8>,
    pub tile_ids: Vec<usize>,
    /// Top-left `(col, row)` of each crop in its tile.
    pub offsets: Vec<(usize, usize)>,
}

impl CropBatch {
    pub fn new(size: usize) -> Self {
        Self {
            size,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn supervised_count(&self) -> usize {
        self.supervision.iter().filter(|&&g| g == 1).count()
    }

    /// Appends the crop at (`col`, `row`).
    pub fn push_crop(&mut self, tile_id: usize, cube: &Cube, lr: &LabelRaster, col: usize, row: usize) {
        let s = self.size;
        let w = cube.raster.width();
        for b in 0..CUBE_BANDS {
            let band = cube.raster.band(b);
            for r in row..row + s {
                self.patches.extend_from_slice(&band[r * w + col..r * w + col + s]);
            }
        }
        for r in row..row + s {
            let range = r * w + col..r * w + col + s;
            self.labels.extend(lr.labels.data[range.clone()].iter().map(|&v| v as u8));
            self.supervision.extend(lr.supervision.data[range].iter().map(|&v| v as u8));
        }
        self.tile_ids.push(tile_id);
        self.offsets.push((col, row));
    }

    /// Crops `indices` of this batch into a new one.
    pub fn select(&self, indices: &[usize]) -> CropBatch {
        let s2 = self.size * self.size;
        let mut out = CropBatch::new(self.size);
        for &i in indices {
            out.patches
                .extend_from_slice(&self.patches[i * CUBE_BANDS * s2..(i + 1) * CUBE_BANDS * s2]);
            out.labels.extend_from_slice(&self.labels[i * s2..(i + 1) * s2]);
            out.supervision.extend_from_slice(&self.supervision[i * s2..(i + 1) * s2]);
            out.tile_ids.push(self.tile_ids[i]);
            out.offsets.push(self.offsets[i]);
        }
        out
    }
}

/// Uniformly random `(col, row)` offsets for `n` crops of `size` pixels.
pub fn crop_offsets(width: usize, height: usize, n: usize, size: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if size == 0 || size > width || size > height {
        return Err(Error::CropTooLarge { size, width, height });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let c = rng.random_range(0..=width - size);
            let r = rng.random_range(0..=height - size);
            (c, r)
        })
        .collect())
}

pub fn sample_crops(cube: &Cube, lr: &LabelRaster, n: usize, size: usize, seed: u64, tile_id: usize) -> Result<CropBatch> {
    cube.raster.ensure_congruent(&lr.labels)?;
    let offsets = crop_offsets(cube.raster.width(), cube.raster.height(), n, size, seed)?;
    let mut batch = CropBatch::new(size);
    for (c, r) in offsets {
        batch.push_crop(tile_id, cube, lr, c, r);
    }
    Ok(batch)
}
