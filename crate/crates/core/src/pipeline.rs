//! Training loop over cube/label tiles and sliding-window inference.

use std::collections::BTreeMap;
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube::{crop_offsets, CropBatch, Cube, CUBE_BANDS};
use crate::error::{Error, Result};
use crate::geo::{bsqf, RasterGrid};
use crate::labelgen::LabelRaster;
use crate::nn::{
    adam_step, cross_entropy_loss, hrnet_backward, hrnet_forward, hrnet_forward_cached, masked_ce_loss, AdamConfig,
    AdamState, Checkpoint, LossValue, ModelParams, Tensor, NUM_CLASSES,
};
use crate::{derive_seed, fsio};

/// Attempts at redrawing a batch that landed entirely on unsupervised pixels.
const MAX_RESAMPLE_ATTEMPTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub crops_per_tile: usize,
    pub crop_size: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: AdamConfig,
    /// Steps between intermediate checkpoints.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            crops_per_tile: 64,
            crop_size: 64,
            batch_size: 8,
            seed: 0,
            optimizer: AdamConfig {
                lr: 5e-3,
                ..AdamConfig::default()
            },
            checkpoint_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs),
            ("crops_per_tile", self.crops_per_tile),
            ("crop_size", self.crop_size),
            ("batch_size", self.batch_size),
            ("checkpoint_every", self.checkpoint_every),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !self.crop_size.is_multiple_of(2) {
            return Err(Error::Config(format!("crop_size {} must be even", self.crop_size)));
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0 && (0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2) && o.eps > 0.0) {
            return Err(Error::Config(format!("invalid optimizer settings {o:?}")));
        }
        Ok(())
    }
}

/// Which loss the loop minimizes. `Plain` ignores the supervision mask and
/// requires every label to be a class code; it exists as the reference the
/// masked objective must reduce to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Objective {
    #[default]
    Masked,
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: u64,
    pub epoch: usize,
    pub loss: f64,
    pub supervised_pixels: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<LossRecord>,
}

pub fn write_loss_history(path: &Path, history: &[LossRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in history {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    fsio::write_atomic(path, &bytes)
}

pub fn read_loss_history(path: &Path) -> Result<Vec<LossRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn train(cfg: &TrainConfig, tiles: &[(Cube, LabelRaster)], out_dir: Option<&Path>) -> Result<TrainOutcome> {
    train_with_objective(cfg, tiles, out_dir, Objective::Masked)
}

/// Runs the loop. With `out_dir`, intermediate checkpoints go to
/// `checkpoints/step_NNNNNN`, the final one to `final`, and the history to
/// `loss_history.csv`.
pub fn train_with_objective(
    cfg: &TrainConfig,
    tiles: &[(Cube, LabelRaster)],
    out_dir: Option<&Path>,
    objective: Objective,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if tiles.is_empty() {
        return Err(Error::Config("training needs at least one tile".into()));
    }
    for (cube, lr) in tiles {
        if cube.raster.bands != CUBE_BANDS {
            return Err(Error::BandCount {
                what: "training tile",
                expected: CUBE_BANDS,
                got: cube.raster.bands,
            });
        }
        cube.raster.ensure_congruent(&lr.labels)?;
    }
    if tiles.iter().all(|(_, lr)| lr.supervised_count() == 0) {
        return Err(Error::NoSupervisedPixels);
    }

    let mut params = ModelParams::init(derive_seed(cfg.seed, &[0]));
    let mut state = AdamState::new(&params);
    let mut history = Vec::new();
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let mut plan = Vec::new();
        for (t, (cube, _)) in tiles.iter().enumerate() {
            let seed = derive_seed(cfg.seed, &[1, epoch as u64, t as u64]);
            let offsets = crop_offsets(cube.raster.width(), cube.raster.height(), cfg.crops_per_tile, cfg.crop_size, seed)?;
            plan.extend(offsets.into_iter().map(|o| (t, o)));
        }
        plan.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[2, epoch as u64])));

        let mut epoch_loss = 0.0;
        let mut epoch_steps = 0;
        for chunk in plan.chunks(cfg.batch_size) {
            let batch = supervised_batch(cfg, tiles, chunk, epoch, step)?;
            let x = Tensor::new([batch.len(), CUBE_BANDS, cfg.crop_size, cfg.crop_size], batch.patches.clone())?;
            let (logits, cache) = hrnet_forward_cached(&params, &x)?;
            let (value, dlogits) = match objective {
                Objective::Masked => masked_ce_loss(&logits, &batch.labels, &batch.supervision)?,
                Objective::Plain => {
                    let (loss, grad) = cross_entropy_loss(&logits, &batch.labels)?;
                    let value = LossValue {
                        loss,
                        supervised_pixel_count: batch.labels.len(),
                    };
                    (value, grad)
                }
            };
            let grads = hrnet_backward(&params, &cache, &dlogits)?;
            adam_step(&mut params, &grads.params, &mut state, &cfg.optimizer)?;
            step += 1;
            debug!("step {step} epoch {epoch} loss {:.6}", value.loss);
            history.push(LossRecord {
                step,
                epoch,
                loss: value.loss,
                supervised_pixels: value.supervised_pixel_count,
            });
            epoch_loss += value.loss;
            epoch_steps += 1;
            if let Some(dir) = out_dir {
                if step.is_multiple_of(cfg.checkpoint_every as u64) {
                    snapshot(&params, &state, cfg, step).save(&dir.join("checkpoints").join(format!("step_{step:06}")))?;
                }
            }
        }
        info!("epoch {epoch}: mean loss {:.4} over {epoch_steps} steps", epoch_loss / epoch_steps as f64);
    }

    let checkpoint = snapshot(&params, &state, cfg, step);
    if let Some(dir) = out_dir {
        checkpoint.save(&dir.join("final"))?;
        write_loss_history(&dir.join("loss_history.csv"), &history)?;
    }
    Ok(TrainOutcome { checkpoint, history })
}

fn snapshot(params: &ModelParams, state: &AdamState, cfg: &TrainConfig, step: u64) -> Checkpoint {
    Checkpoint {
        step,
        params: params.clone(),
        optimizer: Some((cfg.optimizer, state.clone())),
    }
}

/// Builds the batch for `chunk`; if it holds no supervised pixel, redraws
/// every crop position (same tiles) until one does.
fn supervised_batch(
    cfg: &TrainConfig,
    tiles: &[(Cube, LabelRaster)],
    chunk: &[(usize, (usize, usize))],
    epoch: usize,
    step: u64,
) -> Result<CropBatch> {
    let build = |crops: &[(usize, (usize, usize))]| {
        let mut b = CropBatch::new(cfg.crop_size);
        for &(t, (c, r)) in crops {
            b.push_crop(t, &tiles[t].0, &tiles[t].1, c, r);
        }
        b
    };
    let batch = build(chunk);
    if batch.supervised_count() > 0 {
        return Ok(batch);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[3, epoch as u64, step]));
    for attempt in 0..MAX_RESAMPLE_ATTEMPTS {
        let redrawn: Vec<_> = chunk
            .iter()
            .map(|&(t, _)| {
                let r = &tiles[t].0.raster;
                let c = rng.random_range(0..=r.width() - cfg.crop_size);
                let row = rng.random_range(0..=r.height() - cfg.crop_size);
                (t, (c, row))
            })
            .collect();
        let batch = build(&redrawn);
        if batch.supervised_count() > 0 {
            debug!("step {step}: unsupervised batch redrawn after {} attempts", attempt + 1);
            return Ok(batch);
        }
    }
    Err(Error::NoSupervisedPixels)
}

/// Predicted classes (0..=7) for one tile, tagged with the checkpoint id.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMapRaster {
    pub raster: RasterGrid,
    pub checkpoint_id: String,
}

const CHECKPOINT_KEY: &str = "checkpoint_id";

impl ClassMapRaster {
    pub fn new(raster: RasterGrid, checkpoint_id: impl Into<String>) -> Result<Self> {
        if raster.bands != 1 {
            return Err(Error::BandCount {
                what: "class map",
                expected: 1,
                got: raster.bands,
            });
        }
        if let Some(v) = raster.data.iter().find(|&&v| !(v.fract() == 0.0 && (0.0..NUM_CLASSES as f32).contains(&v))) {
            return Err(Error::InvalidRaster(format!("class map value {v} outside 0..=7")));
        }
        Ok(Self {
            raster,
            checkpoint_id: checkpoint_id.into(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = BTreeMap::from([(CHECKPOINT_KEY.to_string(), self.checkpoint_id.clone())]);
        bsqf::write_with_metadata(path, &self.raster, meta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (raster, meta) = bsqf::read_with_metadata(path)?;
        Self::new(raster, meta.get(CHECKPOINT_KEY).cloned().unwrap_or_default())
    }

    /// Per-class pixel counts, indexed by code.
    pub fn histogram(&self) -> [usize; NUM_CLASSES] {
        let mut h = [0; NUM_CLASSES];
        for &v in &self.raster.data {
            h[v as usize] += 1;
        }
        h
    }
}

/// Top-left offsets of windows along one axis: stride `window - overlap`,
/// last window moved back to end at the tile edge.
pub fn window_starts(size: usize, window: usize, overlap: usize) -> Vec<usize> {
    if size <= window {
        return vec![0];
    }
    let stride = window - overlap;
    let mut starts = vec![0];
    let mut s = 0;
    while s + window < size {
        s = (s + stride).min(size - window);
        starts.push(s);
    }
    starts
}

/// Logits `[8, h, w]` for a window, padding odd sizes by edge replication
/// since the network needs even inputs.
fn window_logits(params: &ModelParams, cube: &RasterGrid, col: usize, row: usize, w: usize, h: usize) -> Result<Vec<f32>> {
    let (pw, ph) = (w + w % 2, h + h % 2);
    let mut x = Vec::with_capacity(CUBE_BANDS * pw * ph);
    for b in 0..CUBE_BANDS {
        for r in 0..ph {
            for c in 0..pw {
                x.push(cube.get(b, col + c.min(w - 1), row + r.min(h - 1)));
            }
        }
    }
    let logits = hrnet_forward(params, &Tensor::new([1, CUBE_BANDS, ph, pw], x)?)?;
    if (pw, ph) == (w, h) {
        return Ok(logits.data);
    }
    let mut out = Vec::with_capacity(NUM_CLASSES * w * h);
    for k in 0..NUM_CLASSES {
        for r in 0..h {
            let start = (k * ph + r) * pw;
            out.extend_from_slice(&logits.data[start..start + w]);
        }
    }
    Ok(out)
}

/// Index of the largest value; ties go to the lower index.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn infer_tile(ckpt: &Checkpoint, cube: &Cube, window: usize, overlap: usize) -> Result<ClassMapRaster> {
    if window == 0 || !window.is_multiple_of(2) {
        return Err(Error::Config(format!("window {window} must be positive and even")));
    }
    if overlap >= window {
        return Err(Error::Config(format!("overlap {overlap} must be smaller than window {window}")));
    }
    let r = &cube.raster;
    if r.bands != CUBE_BANDS {
        return Err(Error::BandCount {
            what: "inference cube",
            expected: CUBE_BANDS,
            got: r.bands,
        });
    }
    let (width, height) = (r.width(), r.height());
    let (ww, wh) = (window.min(width), window.min(height));
    let windows: Vec<(usize, usize)> = window_starts(height, window, overlap)
        .into_iter()
        .flat_map(|row| window_starts(width, window, overlap).into_iter().map(move |col| (col, row)))
        .collect();
    let logits: Vec<Vec<f32>> = windows
        .par_iter()
        .map(|&(col, row)| window_logits(&ckpt.params, r, col, row, ww, wh))
        .collect::<Result<_>>()?;

    // merged in window order so the sums are reproducible
    let mut sum = vec![0f32; NUM_CLASSES * width * height];
    let mut count = vec![0u32; width * height];
    for (&(col, row), l) in windows.iter().zip(&logits) {
        for k in 0..NUM_CLASSES {
            for y in 0..wh {
                let dst = (k * height + row + y) * width + col;
                let src = (k * wh + y) * ww;
                sum[dst..dst + ww].iter_mut().zip(&l[src..src + ww]).for_each(|(a, b)| *a += b);
            }
        }
        for y in 0..wh {
            count[(row + y) * width + col..(row + y) * width + col + ww]
                .iter_mut()
                .for_each(|c| *c += 1);
        }
    }
    let plane = width * height;
    let classes: Vec<f32> = (0..plane)
        .map(|i| {
            let n = count[i] as f32;
            let mean: Vec<f32> = (0..NUM_CLASSES).map(|k| sum[k * plane + i] / n).collect();
            argmax(&mean) as f32
        })
        .collect();
    let raster = RasterGrid::new(r.spec, 1, classes)?.with_band_names(["class"])?;
    ClassMapRaster::new(raster, ckpt.id())
}

/// Binary building mask: 1 where the class is a building function.
pub fn extract_footprint(cm: &ClassMapRaster) -> RasterGrid {
    let data = cm.raster.data.iter().map(|&v| if v >= 1.0 { 1.0 } else { 0.0 }).collect();
    RasterGrid::new(cm.raster.spec, 1, data)
        .and_then(|r| r.with_band_names(["footprint"]))
        .expect("same grid as the class map")
}
