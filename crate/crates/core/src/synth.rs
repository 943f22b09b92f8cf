//! Synthetic cities with known ground truth.
//!
//! A city is a grid of square tiles, each cut into street blocks. Every block
//! gets one function class, chosen greedily so that building area follows
//! the target proportions, and is filled with a lattice of rectangular
//! buildings. The three modalities are drawn from per-class profiles at their
//! native resolutions (optical 1 m, height and night light on a coarse grid).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{bsqf, geojson, AffineTransform, GridSpec, Polygon, RasterGrid};
use crate::labelgen::{build_label_raster, ClassMap, FunctionClass, LabelRaster, FUNCTION_TAG_KEY};
use crate::{derive_seed, fsio};

/// Margin added around a labeled building to form its AOI polygon.
const AOI_MARGIN: f64 = 1.0;
/// Free space kept between a building and its lot boundary.
const LOT_MARGIN: f64 = 1.5;
const MIN_BUILDING: i64 = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassProfile {
    pub height_mean: f64,
    pub height_std: f64,
    pub ntl_mean: f64,
    pub ntl_std: f64,
    pub color: [u8; 3],
    /// Buildings per block side.
    pub lots_per_side: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseLevels {
    /// Per-pixel optical noise (digital numbers).
    pub oi_pixel: f64,
    /// Per-building roof colour jitter.
    pub oi_building: f64,
    /// Height noise on coarse cells that hold a building (meters).
    pub bh: f64,
    /// Night-light noise per coarse cell.
    pub ntl: f64,
}

impl Default for NoiseLevels {
    fn default() -> Self {
        Self {
            oi_pixel: 12.0,
            oi_building: 18.0,
            bh: 2.0,
            ntl: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CitySpec {
    pub tile_size: usize,
    pub tiles_x: usize,
    pub tiles_y: usize,
    /// Block pitch in meters, street included.
    pub block_size: usize,
    pub road_width: usize,
    /// Cell size of the height and night-light grids (meters).
    pub coarse_pixel: f64,
    /// World coordinates of the city's north-west corner.
    pub origin: [f64; 2],
    /// Target share of building area per class name.
    pub proportions: BTreeMap<String, f64>,
    pub aoi_coverage: f64,
    pub profiles: BTreeMap<String, ClassProfile>,
    pub background_ntl: f64,
    pub noise: NoiseLevels,
    /// The last `holdout_tiles` tiles are reserved for evaluation.
    pub holdout_tiles: usize,
    pub seed: u64,
}

/// City-wide building-area shares per function class, the default
/// generator target.
pub const CITY_PROPORTIONS: [(FunctionClass, f64); 7] = [
    (FunctionClass::Residential, 0.5006),
    (FunctionClass::Commercial, 0.0482),
    (FunctionClass::PublicService, 0.0043),
    (FunctionClass::PublicHealth, 0.0176),
    (FunctionClass::SportArt, 0.0285),
    (FunctionClass::Educational, 0.0484),
    (FunctionClass::Industrial, 0.3524),
];

fn default_profiles() -> BTreeMap<String, ClassProfile> {
    use FunctionClass::*;
    let p = |h, hs, n, ns, color, lots| ClassProfile {
        height_mean: h,
        height_std: hs,
        ntl_mean: n,
        ntl_std: ns,
        color,
        lots_per_side: lots,
    };
    [
        (Residential, p(36.0, 5.0, 25.0, 4.0, [196, 118, 98], 3)),
        (Commercial, p(18.0, 4.0, 95.0, 8.0, [92, 138, 196], 2)),
        (PublicService, p(13.0, 3.0, 50.0, 6.0, [168, 168, 190], 2)),
        (PublicHealth, p(26.0, 4.0, 60.0, 6.0, [228, 226, 220], 2)),
        (SportArt, p(7.0, 2.0, 72.0, 6.0, [120, 200, 205], 2)),
        (Educational, p(18.0, 4.0, 38.0, 5.0, [204, 170, 108], 2)),
        (Industrial, p(9.0, 3.0, 12.0, 3.0, [150, 152, 164], 1)),
    ]
    .into_iter()
    .map(|(c, prof)| (c.name().to_string(), prof))
    .collect()
}

impl Default for CitySpec {
    fn default() -> Self {
        Self {
            tile_size: 512,
            tiles_x: 4,
            tiles_y: 2,
            block_size: 64,
            road_width: 10,
            coarse_pixel: 10.0,
            origin: [350_000.0, 3_460_000.0],
            proportions: CITY_PROPORTIONS
                .iter()
                .map(|(c, p)| (c.name().to_string(), *p))
                .collect(),
            aoi_coverage: 0.30,
            profiles: default_profiles(),
            background_ntl: 5.0,
            noise: NoiseLevels::default(),
            holdout_tiles: 2,
            seed: 0,
        }
    }
}

impl CitySpec {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.tiles_x == 0 || self.tiles_y == 0 {
            return err("city needs at least one tile".into());
        }
        if self.block_size < self.road_width + 2 * MIN_BUILDING as usize || self.block_size > self.tile_size {
            return err(format!(
                "block size {} does not fit road {} and tile {}",
                self.block_size, self.road_width, self.tile_size
            ));
        }
        if !(self.coarse_pixel.is_finite() && self.coarse_pixel > 0.0) {
            return err(format!("coarse pixel {} must be positive", self.coarse_pixel));
        }
        if !(0.0..=1.0).contains(&self.aoi_coverage) {
            return err(format!("aoi_coverage {} outside [0, 1]", self.aoi_coverage));
        }
        if self.holdout_tiles >= self.tiles_x * self.tiles_y {
            return err("holdout leaves no training tile".into());
        }
        for c in FunctionClass::FUNCTIONS {
            let Some(p) = self.proportions.get(c.name()) else {
                return err(format!("missing proportion for {c}"));
            };
            if !(p.is_finite() && *p >= 0.0) {
                return err(format!("proportion for {c} must be non-negative"));
            }
            let Some(prof) = self.profiles.get(c.name()) else {
                return err(format!("missing profile for {c}"));
            };
            if prof.height_std < 0.0 || prof.ntl_std < 0.0 || prof.lots_per_side == 0 {
                return err(format!("invalid profile for {c}"));
            }
        }
        for name in self.proportions.keys().chain(self.profiles.keys()) {
            if !FunctionClass::from_name(name).is_some_and(FunctionClass::is_function) {
                return err(format!("unknown function class {name:?}"));
            }
        }
        let sum: f64 = self.proportions.values().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return err(format!("proportions sum to {sum}, not 1"));
        }
        Ok(())
    }

    fn proportion(&self, c: FunctionClass) -> f64 {
        self.proportions[c.name()]
    }

    fn profile(&self, c: FunctionClass) -> &ClassProfile {
        &self.profiles[c.name()]
    }

    pub fn tile_count(&self) -> usize {
        self.tiles_x * self.tiles_y
    }

    /// Whether tile `index` (row-major) is held out from training.
    pub fn is_holdout(&self, index: usize) -> bool {
        index >= self.tile_count() - self.holdout_tiles
    }

    fn blocks_per_side(&self) -> usize {
        self.tile_size / self.block_size
    }

    fn tile_corner(&self, tx: usize, ty: usize) -> (f64, f64) {
        (
            self.origin[0] + (tx * self.tile_size) as f64,
            self.origin[1] - (ty * self.tile_size) as f64,
        )
    }

    pub fn fine_grid(&self, tx: usize, ty: usize) -> GridSpec {
        let (x, y) = self.tile_corner(tx, ty);
        GridSpec {
            width: self.tile_size,
            height: self.tile_size,
            transform: AffineTransform::from_corner(x, y, 1.0),
        }
    }

    pub fn coarse_grid(&self, tx: usize, ty: usize) -> GridSpec {
        let (x, y) = self.tile_corner(tx, ty);
        let n = (self.tile_size as f64 / self.coarse_pixel).ceil() as usize;
        GridSpec {
            width: n,
            height: n,
            transform: AffineTransform::from_corner(x, y, self.coarse_pixel),
        }
    }
}

/// A building footprint in tile-local meters (x east, y south of the tile
/// corner), half-open on the lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LocalRect {
    x0: i64,
    y0: i64,
    x1: i64,
    y1: i64,
}

#[derive(Debug, Clone)]
struct Block {
    tile: usize,
    /// Tile-local pixel offset of the block's top-left corner.
    origin: (usize, usize),
    class: FunctionClass,
    ntl: f64,
    buildings: Vec<(LocalRect, f64)>,
}

#[derive(Debug, Clone)]
pub struct SynthTile {
    pub name: String,
    pub index: usize,
    pub holdout: bool,
    pub oi: RasterGrid,
    pub bh: RasterGrid,
    pub ntl: RasterGrid,
    pub truth: LabelRaster,
    pub weak: LabelRaster,
    pub buildings: Vec<Polygon>,
    pub classes: Vec<FunctionClass>,
    pub heights: Vec<f64>,
    /// Whether each building kept its function label in `weak`.
    pub labeled: Vec<bool>,
    pub aois: Vec<Polygon>,
}

fn normal(mean: f64, std: f64) -> Normal<f64> {
    Normal::new(mean, std).expect("finite non-negative std")
}

/// Lays out buildings on a `lots × lots` lattice inside the buildable part
/// of a block.
fn place_buildings(spec: &CitySpec, lots: usize, origin: (usize, usize), rng: &mut ChaCha8Rng) -> Vec<LocalRect> {
    let half_road = spec.road_width as f64 / 2.0;
    let lo = half_road;
    let lot = (spec.block_size as f64 - spec.road_width as f64) / lots as f64;
    let axis = |i: usize, rng: &mut ChaCha8Rng| -> Option<(i64, i64)> {
        let start = (lo + i as f64 * lot + LOT_MARGIN).ceil() as i64;
        let end = (lo + (i + 1) as f64 * lot - LOT_MARGIN).floor() as i64;
        let room = end - start;
        if room < MIN_BUILDING {
            return None;
        }
        let min = MIN_BUILDING.max((0.55 * lot).floor() as i64).min(room);
        let max = ((0.85 * lot).floor() as i64).clamp(min, room);
        let size = rng.random_range(min..=max);
        let offset = rng.random_range(0..=room - size);
        Some((start + offset, start + offset + size))
    };
    let mut out = Vec::with_capacity(lots * lots);
    for j in 0..lots {
        for i in 0..lots {
            if let (Some((x0, x1)), Some((y0, y1))) = (axis(i, rng), axis(j, rng)) {
                out.push(LocalRect {
                    x0: x0 + origin.0 as i64,
                    y0: y0 + origin.1 as i64,
                    x1: x1 + origin.0 as i64,
                    y1: y1 + origin.1 as i64,
                });
            }
        }
    }
    out
}

fn rect_area(r: &LocalRect) -> f64 {
    ((r.x1 - r.x0) * (r.y1 - r.y0)) as f64
}

/// Assigns classes to every block of the city, visiting blocks in random
/// order and giving each to the class whose addition best matches the
/// target area shares.
fn layout(spec: &CitySpec) -> Vec<Block> {
    let per_side = spec.blocks_per_side();
    let blocks: Vec<(usize, (usize, usize))> = (0..spec.tile_count())
        .flat_map(|t| {
            (0..per_side * per_side).map(move |b| (t, ((b % per_side) * spec.block_size, (b / per_side) * spec.block_size)))
        })
        .collect();
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[1])));

    let buildable = (spec.block_size - spec.road_width) as f64;
    let expected = 0.49 * buildable * buildable;
    let mut areas = [0.0f64; 7];
    let mut assigned: Vec<Option<Block>> = vec![None; blocks.len()];
    for &bi in &order {
        let total: f64 = areas.iter().sum::<f64>() + expected;
        let mut best = (f64::INFINITY, 0usize);
        for k in 0..7 {
            let err: f64 = (0..7)
                .map(|j| {
                    let a = areas[j] + if j == k { expected } else { 0.0 };
                    (a / total - spec.proportion(FunctionClass::FUNCTIONS[j])).abs()
                })
                .sum();
            if err < best.0 {
                best = (err, k);
            }
        }
        let class = FunctionClass::FUNCTIONS[best.1];
        let prof = spec.profile(class);
        let (tile, origin) = blocks[bi];
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[2, bi as u64]));
        let rects = place_buildings(spec, prof.lots_per_side, origin, &mut rng);
        let heights = normal(prof.height_mean, prof.height_std);
        let buildings: Vec<(LocalRect, f64)> = rects
            .into_iter()
            .map(|r| (r, heights.sample(&mut rng).max(3.0)))
            .collect();
        areas[best.1] += buildings.iter().map(|(r, _)| rect_area(r)).sum::<f64>();
        let ntl = normal(prof.ntl_mean, prof.ntl_std).sample(&mut rng).max(0.0);
        assigned[bi] = Some(Block {
            tile,
            origin,
            class,
            ntl,
            buildings,
        });
    }
    assigned.into_iter().map(|b| b.expect("every block visited")).collect()
}

pub fn generate_city(spec: &CitySpec) -> Result<Vec<SynthTile>> {
    spec.validate()?;
    let blocks = layout(spec);
    let classmap = ClassMap::default();
    (0..spec.tile_count())
        .into_par_iter()
        .map(|t| {
            let mine: Vec<&Block> = blocks.iter().filter(|b| b.tile == t).collect();
            render_tile(spec, t, &mine, &classmap)
        })
        .collect()
}

fn render_tile(spec: &CitySpec, t: usize, blocks: &[&Block], classmap: &ClassMap) -> Result<SynthTile> {
    let (tx, ty) = (t % spec.tiles_x, t / spec.tiles_x);
    let fine = spec.fine_grid(tx, ty);
    let coarse = spec.coarse_grid(tx, ty);
    let (left, top) = spec.tile_corner(tx, ty);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[3, t as u64]));

    let mut rects = Vec::new();
    let mut classes = Vec::new();
    let mut heights = Vec::new();
    for b in blocks {
        for (r, h) in &b.buildings {
            rects.push(*r);
            classes.push(b.class);
            heights.push(*h);
        }
    }
    let name = format!("tile_{tx}_{ty}");
    let buildings: Vec<Polygon> = rects
        .iter()
        .enumerate()
        .map(|(i, r)| {
            Polygon::rect(left + r.x0 as f64, top - r.y1 as f64, left + r.x1 as f64, top - r.y0 as f64)
                .map(|p| p.with_attribute("id", format!("{name}-{i}")))
        })
        .collect::<Result<_>>()?;

    // weak labels: an exact uniformly chosen subset keeps its function
    let n_labeled = (spec.aoi_coverage * rects.len() as f64).round() as usize;
    let mut idx: Vec<usize> = (0..rects.len()).collect();
    idx.shuffle(&mut rng);
    let mut labeled = vec![false; rects.len()];
    for &i in &idx[..n_labeled] {
        labeled[i] = true;
    }
    let aois: Vec<Polygon> = (0..rects.len())
        .filter(|&i| labeled[i])
        .map(|i| {
            let tag = classmap.tags_for(classes[i]).first().copied().unwrap_or(classes[i].name());
            let (x0, y0, x1, y1) = buildings[i].bbox();
            Polygon::rect(x0 - AOI_MARGIN, y0 - AOI_MARGIN, x1 + AOI_MARGIN, y1 + AOI_MARGIN)
                .map(|p| p.with_attribute(FUNCTION_TAG_KEY, tag))
        })
        .collect::<Result<_>>()?;

    let truth_assign: Vec<(Polygon, FunctionClass)> = buildings.iter().cloned().zip(classes.iter().copied()).collect();
    let truth = build_label_raster(&truth_assign, &fine)?;
    let weak_assign: Vec<(Polygon, FunctionClass)> = truth_assign
        .iter()
        .zip(&labeled)
        .map(|((p, c), &l)| (p.clone(), if l { *c } else { FunctionClass::UnlabeledBuilding }))
        .collect();
    let weak = build_label_raster(&weak_assign, &fine)?;

    let bh = height_grid(spec, &coarse, &rects, &heights, &mut rng)?;
    let ntl = light_grid(spec, &coarse, blocks, &mut rng)?;
    let oi = optical(spec, &fine, &rects, &classes, &mut rng)?;
    Ok(SynthTile {
        name,
        index: t,
        holdout: spec.is_holdout(t),
        oi,
        bh,
        ntl,
        truth,
        weak,
        buildings,
        classes,
        heights,
        labeled,
        aois,
    })
}

/// Coarse cells take the tallest building overlapping them.
fn height_grid(
    spec: &CitySpec,
    grid: &GridSpec,
    rects: &[LocalRect],
    heights: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<RasterGrid> {
    let cp = spec.coarse_pixel;
    let mut v = vec![0f64; grid.len()];
    for (r, &h) in rects.iter().zip(heights) {
        let c0 = (r.x0 as f64 / cp).floor() as usize;
        let c1 = ((r.x1 as f64 / cp).ceil() as usize).min(grid.width);
        let r0 = (r.y0 as f64 / cp).floor() as usize;
        let r1 = ((r.y1 as f64 / cp).ceil() as usize).min(grid.height);
        for row in r0..r1 {
            for col in c0..c1 {
                let cell = &mut v[row * grid.width + col];
                *cell = cell.max(h);
            }
        }
    }
    let noise = normal(0.0, spec.noise.bh);
    let data = v
        .into_iter()
        .map(|h| if h > 0.0 { (h + noise.sample(rng)).max(1.0) as f32 } else { 0.0 })
        .collect();
    RasterGrid::new(*grid, 1, data)?.with_band_names(["bh"])
}

/// Per-block radiance, box-blurred once, plus noise; the three bands are
/// scaled copies with independent noise.
fn light_grid(spec: &CitySpec, grid: &GridSpec, blocks: &[&Block], rng: &mut ChaCha8Rng) -> Result<RasterGrid> {
    let (w, h) = (grid.width, grid.height);
    let cp = spec.coarse_pixel;
    let mut base = vec![spec.background_ntl; w * h];
    for b in blocks {
        let (bx, by) = (b.origin.0 as f64, b.origin.1 as f64);
        let bs = spec.block_size as f64;
        for row in 0..h {
            let cy = (row as f64 + 0.5) * cp;
            if cy < by || cy >= by + bs {
                continue;
            }
            for col in 0..w {
                let cx = (col as f64 + 0.5) * cp;
                if cx >= bx && cx < bx + bs {
                    base[row * w + col] = b.ntl;
                }
            }
        }
    }
    let mut blurred = vec![0f64; w * h];
    for row in 0..h {
        for col in 0..w {
            let mut s = 0.0;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let r = (row as i64 + dr).clamp(0, h as i64 - 1) as usize;
                    let c = (col as i64 + dc).clamp(0, w as i64 - 1) as usize;
                    s += base[r * w + c];
                }
            }
            blurred[row * w + col] = s / 9.0;
        }
    }
    let noise = normal(0.0, spec.noise.ntl);
    let mut data = Vec::with_capacity(3 * w * h);
    for scale in [1.0, 0.85, 0.7] {
        data.extend(blurred.iter().map(|&v| (scale * v + noise.sample(rng)).max(0.0) as f32));
    }
    RasterGrid::new(*grid, 3, data)?.with_band_names(["ntl_1", "ntl_2", "ntl_3"])
}

const ROAD_COLOR: [f64; 3] = [128.0, 128.0, 124.0];
const GROUND_COLOR: [f64; 3] = [96.0, 118.0, 84.0];

fn optical(
    spec: &CitySpec,
    grid: &GridSpec,
    rects: &[LocalRect],
    classes: &[FunctionClass],
    rng: &mut ChaCha8Rng,
) -> Result<RasterGrid> {
    let (w, h) = (grid.width, grid.height);
    let half_road = spec.road_width / 2;
    let in_block = |v: usize| {
        let off = v % spec.block_size;
        v / spec.block_size < spec.blocks_per_side() && off >= half_road && off < spec.block_size - half_road
    };
    let mut rgb: Vec<[f64; 3]> = (0..w * h)
        .map(|i| if in_block(i % w) && in_block(i / w) { GROUND_COLOR } else { ROAD_COLOR })
        .collect();
    let jitter = normal(0.0, spec.noise.oi_building);
    for (r, c) in rects.iter().zip(classes) {
        let base = spec.profile(*c).color;
        let roof: [f64; 3] = std::array::from_fn(|k| base[k] as f64 + jitter.sample(rng));
        for row in r.y0 as usize..r.y1 as usize {
            rgb[row * w + r.x0 as usize..row * w + r.x1 as usize].fill(roof);
        }
    }
    let noise = normal(0.0, spec.noise.oi_pixel);
    let mut data = vec![0f32; 3 * w * h];
    for (i, px) in rgb.iter().enumerate() {
        for k in 0..3 {
            data[k * w * h + i] = (px[k] + noise.sample(rng)).clamp(0.0, 255.0).round() as f32;
        }
    }
    RasterGrid::new(*grid, 3, data)?.with_band_names(["red", "green", "blue"])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTruth {
    pub class: String,
    pub code: u8,
    pub buildings: usize,
    pub area_m2: f64,
    pub proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthReport {
    pub building_count: usize,
    pub building_area_m2: f64,
    pub labeled_buildings: usize,
    pub classes: Vec<ClassTruth>,
}

impl TruthReport {
    /// Proportions indexed by code - 1.
    pub fn proportions(&self) -> [f64; 7] {
        std::array::from_fn(|k| self.classes[k].proportion)
    }
}

/// Exact statistics from the polygons and truth rasters of `tiles`.
pub fn truth_report(tiles: &[SynthTile]) -> TruthReport {
    let mut count = [0usize; 7];
    let mut pixels = [0f64; 7];
    let mut labeled = 0;
    let mut area = 0.0;
    for t in tiles {
        for (p, c) in t.buildings.iter().zip(&t.classes) {
            count[c.code() as usize - 1] += 1;
            area += p.area();
        }
        labeled += t.labeled.iter().filter(|&&l| l).count();
        let px = t.truth.labels.transform().pixel_area();
        for &v in &t.truth.labels.data {
            if v >= 1.0 {
                pixels[v as usize - 1] += px;
            }
        }
    }
    let total: f64 = pixels.iter().sum();
    let classes = FunctionClass::FUNCTIONS
        .iter()
        .enumerate()
        .map(|(k, c)| ClassTruth {
            class: c.name().to_string(),
            code: c.code(),
            buildings: count[k],
            area_m2: pixels[k],
            proportion: if total > 0.0 { pixels[k] / total } else { 0.0 },
        })
        .collect();
    TruthReport {
        building_count: count.iter().sum(),
        building_area_m2: area,
        labeled_buildings: labeled,
        classes,
    }
}

/// Accuracy over building pixels of assigning each pixel the class whose
/// (height, night light) profile is nearest in profile-std units, reading
/// the coarse layers by nearest-neighbor lookup.
pub fn profile_classifier_accuracy(spec: &CitySpec, tiles: &[SynthTile]) -> f64 {
    let profiles: Vec<&ClassProfile> = FunctionClass::FUNCTIONS.iter().map(|c| spec.profile(*c)).collect();
    let (mut hits, mut total) = (0usize, 0usize);
    for t in tiles {
        let lab = &t.truth.labels;
        let cw = t.bh.width();
        for row in 0..lab.height() {
            for col in 0..lab.width() {
                let v = lab.get(0, col, row);
                if v < 1.0 {
                    continue;
                }
                let (x, y) = lab.spec.pixel_center(col, row);
                let (fc, fr) = t.bh.transform().world_to_pixel(x, y);
                let (cc, cr) = ((fc + 0.5).floor() as usize, (fr + 0.5).floor() as usize);
                let bh = t.bh.data[cr * cw + cc] as f64;
                let ntl = t.ntl.data[cr * cw + cc] as f64;
                let pred = (0..7)
                    .min_by(|&a, &b| {
                        let d = |p: &ClassProfile| {
                            ((bh - p.height_mean) / p.height_std.max(1e-9)).powi(2)
                                + ((ntl - p.ntl_mean) / p.ntl_std.max(1e-9)).powi(2)
                        };
                        d(profiles[a]).total_cmp(&d(profiles[b]))
                    })
                    .expect("seven classes");
                hits += usize::from(pred + 1 == v as usize);
                total += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileEntry {
    pub name: String,
    pub holdout: bool,
    pub buildings: usize,
    pub labeled_buildings: usize,
}

/// `city.json`: the spec plus the tile list, so later stages can find the
/// split without regenerating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityManifest {
    pub spec: CitySpec,
    pub tiles: Vec<TileEntry>,
}

pub const MANIFEST_FILE: &str = "city.json";

pub fn tile_dir(root: &Path, name: &str) -> PathBuf {
    root.join(name)
}

/// Writes every tile as BSQF rasters plus GeoJSON vectors under
/// `root/<tile>/`, and the manifest at `root/city.json`.
pub fn write_city(root: &Path, spec: &CitySpec, tiles: &[SynthTile]) -> Result<CityManifest> {
    for t in tiles {
        let dir = tile_dir(root, &t.name);
        bsqf::write(&dir.join("oi"), &t.oi)?;
        bsqf::write(&dir.join("bh"), &t.bh)?;
        bsqf::write(&dir.join("ntl"), &t.ntl)?;
        bsqf::write(&dir.join("truth"), &t.truth.labels)?;
        bsqf::write(&dir.join("weak"), &t.weak.labels)?;
        geojson::write(&dir.join("buildings.geojson"), &t.buildings)?;
        geojson::write(&dir.join("aois.geojson"), &t.aois)?;
    }
    let manifest = CityManifest {
        spec: spec.clone(),
        tiles: tiles
            .iter()
            .map(|t| TileEntry {
                name: t.name.clone(),
                holdout: t.holdout,
                buildings: t.buildings.len(),
                labeled_buildings: t.labeled.iter().filter(|&&l| l).count(),
            })
            .collect(),
    };
    fsio::write_json(&root.join(MANIFEST_FILE), &manifest)?;
    fsio::write_json(&root.join("truth_report.json"), &truth_report(tiles))?;
    Ok(manifest)
}

pub fn read_manifest(root: &Path) -> Result<CityManifest> {
    fsio::read_json(&root.join(MANIFEST_FILE))
}
