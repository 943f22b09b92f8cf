//! `urbanfn` command line: one subcommand per pipeline stage.
//!
//! Directory layout shared by the stages:
//!
//! ```text
//! data/city.json                 tile list and split (from `synth`)
//! data/<tile>/{oi,bh,ntl}.bsqf    modalities
//! data/<tile>/buildings.geojson   footprints
//! data/<tile>/aois.geojson        tagged areas of interest
//! data/<tile>/labels.bsqf         weak labels (from `labelgen`)
//! data/<tile>/truth.bsqf          full ground truth (synthetic cities only)
//! cubes/<tile>.bsqf               normalized 7-band cubes (from `cubes`)
//! run/final/, run/loss_history.csv  (from `train`)
//! pred/<tile>.bsqf                class maps (from `infer`)
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

use crate::cube::{assemble_cube, fit_normalizer, Cube, CubeConfig, Normalizer};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate, sample_validation_points, statistical_comparison, summary_table, write_eval, EvalReport, GroupMapping,
    StatReport, ValidationPoint,
};
use crate::geo::{bsqf, geojson, RasterGrid};
use crate::labelgen::{assign_building_functions, build_label_raster, prepare_aois, ClassMap, LabelRaster};
use crate::nn::Checkpoint;
use crate::pipeline::{extract_footprint, infer_tile, train, ClassMapRaster, TrainConfig};
use crate::render::{render_map, Palette};
use crate::synth::{self, CitySpec};
use crate::{eval, fsio};

pub const THREADS_ENV: &str = "URBANFN_THREADS";

#[derive(Debug, Parser)]
#[command(name = "urbanfn", version, about = "Building-function mapping from multi-modal rasters and sparse labels")]
pub struct Cli {
    /// Worker threads (falls back to URBANFN_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic city with ground truth.
    Synth(SynthArgs),
    /// Turn building footprints and tagged AOIs into weak label rasters.
    Labelgen(LabelgenArgs),
    /// Fuse the modalities of every tile into normalized cubes.
    Cubes(CubesArgs),
    /// Train the segmentation network on the training tiles.
    Train(TrainArgs),
    /// Predict class maps with a trained checkpoint.
    Infer(InferArgs),
    /// Compare class maps with a reference.
    Eval(EvalArgs),
    /// Render a class or label raster as PNG.
    Render(RenderArgs),
    /// Print the summary table of an evaluation.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// City spec JSON; defaults apply to missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LabelgenArgs {
    /// City directory holding city.json and the tile folders.
    #[arg(long)]
    pub city: PathBuf,
    /// Tag → class JSON; the built-in dictionary otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Where to write labels; the city directory by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CubesArgs {
    #[arg(long)]
    pub city: PathBuf,
    /// Cube settings JSON (resampling method).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub city: PathBuf,
    #[arg(long)]
    pub cubes: PathBuf,
    /// Training settings JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Label raster name inside each tile folder.
    #[arg(long, default_value = "labels")]
    pub labels: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Checkpoint directory (with manifest.json).
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub city: PathBuf,
    #[arg(long)]
    pub cubes: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub window: usize,
    #[arg(long, default_value_t = 32)]
    pub overlap: usize,
    /// Predict every tile, not only the held-out ones.
    #[arg(long)]
    pub all: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Class map file, or a directory of `<tile>.bsqf` class maps.
    #[arg(long)]
    pub pred: PathBuf,
    /// Reference label file, or a city directory (uses `<tile>/<reference>`).
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Raster name inside tile folders when `--ref` is a city directory.
    #[arg(long, default_value = "truth")]
    pub reference_name: String,
    /// Validation points JSON: a list for a single tile, or an object keyed
    /// by tile name.
    #[arg(long, conflicts_with = "sample_points")]
    pub points: Option<PathBuf>,
    /// Draw this many stratified validation points per tile and use them.
    #[arg(long)]
    pub sample_points: Option<usize>,
    /// Group mapping JSON for the statistical comparison.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Palette JSON; built-in colors otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub legend: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory written by `eval`.
    #[arg(long)]
    pub eval: PathBuf,
    /// Also write the summary to this text file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `argv` and runs the command. Returns the process exit code:
/// 0 success, 1 usage error, 2 data error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads(cli.threads) {
        eprintln!("error: {e}");
        return 1;
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn configure_threads(flag: Option<usize>) -> Result<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("{THREADS_ENV}={v:?} is not a thread count")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::Config("thread count must be positive".into()));
        }
        // a pool may already exist when running in-process more than once
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => cmd_synth(a),
        Command::Labelgen(a) => cmd_labelgen(a),
        Command::Cubes(a) => cmd_cubes(a),
        Command::Train(a) => cmd_train(a),
        Command::Infer(a) => cmd_infer(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Render(a) => cmd_render(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn load_or_default<T: Default + serde::de::DeserializeOwned>(path: Option<&Path>) -> Result<T> {
    path.map_or_else(|| Ok(T::default()), fsio::read_json)
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let mut spec: CitySpec = load_or_default(a.config.as_deref())?;
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let tiles = synth::generate_city(&spec)?;
    let manifest = synth::write_city(&a.out, &spec, &tiles)?;
    println!("wrote {} tiles to {}", manifest.tiles.len(), a.out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct LabelgenReport {
    tiles: BTreeMap<String, TileLabelReport>,
}

#[derive(Debug, Serialize)]
struct TileLabelReport {
    buildings: usize,
    aois: usize,
    supervised_pixels: usize,
    unmapped_tags: Vec<String>,
    diagnostics: Vec<String>,
}

fn cmd_labelgen(a: LabelgenArgs) -> Result<()> {
    let classmap = match &a.config {
        Some(p) => ClassMap::load(p)?,
        None => ClassMap::default(),
    };
    let manifest = synth::read_manifest(&a.city)?;
    let out = a.out.unwrap_or_else(|| a.city.clone());
    let mut report = LabelgenReport { tiles: BTreeMap::new() };
    for t in &manifest.tiles {
        let dir = synth::tile_dir(&a.city, &t.name);
        let grid = bsqf::read(&dir.join("oi"))?.spec;
        let (buildings, mut diagnostics) = geojson::read(&dir.join("buildings.geojson"))?;
        let (aois, aoi_diag) = geojson::read(&dir.join("aois.geojson"))?;
        diagnostics.extend(aoi_diag);
        let n_aois = aois.len();
        let prepared = prepare_aois(aois, &classmap);
        diagnostics.extend(prepared.diagnostics);
        let assigned = assign_building_functions(&buildings, &prepared.aois);
        diagnostics.extend(assigned.diagnostics);
        let lr = build_label_raster(&assigned.buildings, &grid)?;
        bsqf::write(&synth::tile_dir(&out, &t.name).join("labels"), &lr.labels)?;
        report.tiles.insert(
            t.name.clone(),
            TileLabelReport {
                buildings: buildings.len(),
                aois: n_aois,
                supervised_pixels: lr.supervised_count(),
                unmapped_tags: prepared.unmapped_tags.into_iter().collect(),
                diagnostics,
            },
        );
    }
    fsio::write_json(&out.join("labelgen_report.json"), &report)?;
    println!("labeled {} tiles", report.tiles.len());
    Ok(())
}

const NORMALIZER_FILE: &str = "normalizer.json";

fn cmd_cubes(a: CubesArgs) -> Result<()> {
    let cfg: CubeConfig = load_or_default(a.config.as_deref())?;
    let manifest = synth::read_manifest(&a.city)?;
    let mut cubes = Vec::new();
    for t in &manifest.tiles {
        let dir = synth::tile_dir(&a.city, &t.name);
        let oi = bsqf::read(&dir.join("oi"))?;
        let bh = bsqf::read(&dir.join("bh"))?;
        let ntl = bsqf::read(&dir.join("ntl"))?;
        cubes.push(assemble_cube(&oi, &bh, &ntl, &oi.spec, cfg.resample_method)?);
    }
    // statistics come from training tiles only
    let train_cubes: Vec<&Cube> = cubes
        .iter()
        .zip(&manifest.tiles)
        .filter(|(_, t)| !t.holdout)
        .map(|(c, _)| c)
        .collect();
    let norm = fit_normalizer(&train_cubes)?;
    for (c, t) in cubes.iter().zip(&manifest.tiles) {
        bsqf::write(&a.out.join(&t.name), &norm.normalize(c).raster)?;
    }
    fsio::write_json(&a.out.join(NORMALIZER_FILE), &norm)?;
    println!("wrote {} cubes to {}", cubes.len(), a.out.display());
    Ok(())
}

fn read_cube(cubes: &Path, name: &str) -> Result<Cube> {
    let norm: Normalizer = fsio::read_json(&cubes.join(NORMALIZER_FILE))?;
    Ok(Cube {
        raster: bsqf::read(&cubes.join(name))?,
        norm_stats: Some(norm),
    })
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg: TrainConfig = load_or_default(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let manifest = synth::read_manifest(&a.city)?;
    let mut tiles = Vec::new();
    for t in manifest.tiles.iter().filter(|t| !t.holdout) {
        let labels = bsqf::read(&synth::tile_dir(&a.city, &t.name).join(&a.labels))?;
        tiles.push((read_cube(&a.cubes, &t.name)?, LabelRaster::from_labels(labels)?));
    }
    let out = train(&cfg, &tiles, Some(&a.out))?;
    fsio::write_json(&a.out.join("train_config.json"), &cfg)?;
    let last = out.history.last().map_or(f64::NAN, |r| r.loss);
    println!(
        "trained {} steps, final loss {last:.4}, checkpoint {}",
        out.checkpoint.step,
        out.checkpoint.id()
    );
    Ok(())
}

fn cmd_infer(a: InferArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let manifest = synth::read_manifest(&a.city)?;
    let mut n = 0;
    for t in manifest.tiles.iter().filter(|t| a.all || t.holdout) {
        let cube = read_cube(&a.cubes, &t.name)?;
        let cm = infer_tile(&ckpt, &cube, a.window, a.overlap)?;
        cm.save(&a.out.join(&t.name))?;
        bsqf::write(&a.out.join(format!("{}_footprint", t.name)), &extract_footprint(&cm))?;
        info!("predicted {}", t.name);
        n += 1;
    }
    println!("predicted {n} tiles with checkpoint {}", ckpt.id());
    Ok(())
}

/// Class maps under `dir`, i.e. every `*.json` header not ending in
/// `_footprint`, sorted by name.
fn class_map_names(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            if !stem.ends_with("_footprint") {
                names.push(stem.to_string());
            }
        }
    }
    names.sort();
    Ok(names)
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let mapping: GroupMapping = load_or_default(a.config.as_deref())?;
    let (names, preds, refs) = if a.pred.is_dir() {
        let names = class_map_names(&a.pred)?;
        if names.is_empty() {
            return Err(Error::Config(format!("no class maps in {}", a.pred.display())));
        }
        let mut preds = Vec::new();
        let mut refs = Vec::new();
        for n in &names {
            preds.push(ClassMapRaster::load(&a.pred.join(n))?);
            refs.push(bsqf::read(&synth::tile_dir(&a.reference, n).join(&a.reference_name))?);
        }
        (names, preds, refs)
    } else {
        let name = bsqf::base_path(&a.pred)
            .file_name()
            .map_or("tile".to_string(), |s| s.to_string_lossy().into_owned());
        (vec![name], vec![ClassMapRaster::load(&a.pred)?], vec![bsqf::read(&a.reference)?])
    };

    let points: Option<Vec<Vec<ValidationPoint>>> = match (&a.points, a.sample_points) {
        (Some(p), _) => Some(read_points(p, &names)?),
        (None, Some(n)) => {
            let pts: Vec<Vec<ValidationPoint>> = refs
                .iter()
                .enumerate()
                .map(|(i, r)| sample_validation_points(r, n, crate::derive_seed(a.seed, &[i as u64])))
                .collect();
            let keyed: BTreeMap<&String, &Vec<ValidationPoint>> = names.iter().zip(&pts).collect();
            fsio::write_json(&a.out.join("points.json"), &keyed)?;
            Some(pts)
        }
        (None, None) => None,
    };

    let pred_refs: Vec<&ClassMapRaster> = preds.iter().collect();
    let ref_refs: Vec<&RasterGrid> = refs.iter().collect();
    let report = evaluate(&pred_refs, &ref_refs, points.as_deref())?;
    write_eval(&a.out, &report)?;
    let reference = mapping.aggregate(&eval::class_proportions(&ref_refs)?);
    print!("{}", summary_table(&report));
    match statistical_comparison(&pred_refs, &reference, &mapping) {
        Ok(stat) => {
            fsio::write_json(&a.out.join("stat_report.json"), &stat)?;
            println!("\nGrouped L1 distance to reference: {:.4}", stat.l1_distance);
        }
        // the pixel metrics stand on their own; there is just nothing to group
        Err(Error::NoBuildingPixels) => {
            warn!("prediction has no building pixels, skipping the grouped comparison");
            let _ = std::fs::remove_file(a.out.join("stat_report.json"));
        }
        Err(e) => return Err(e),
    }
    Ok(())
}

fn read_points(path: &Path, names: &[String]) -> Result<Vec<Vec<ValidationPoint>>> {
    let value: serde_json::Value = fsio::read_json(path)?;
    let bad = |e: serde_json::Error| Error::Format(format!("{}: {e}", path.display()));
    if value.is_array() {
        if names.len() != 1 {
            return Err(Error::Config("a point list needs a single predicted tile".into()));
        }
        return Ok(vec![serde_json::from_value(value).map_err(bad)?]);
    }
    let mut keyed: BTreeMap<String, Vec<ValidationPoint>> = serde_json::from_value(value).map_err(bad)?;
    names
        .iter()
        .map(|n| {
            keyed
                .remove(n)
                .ok_or_else(|| Error::Config(format!("no validation points for tile {n}")))
        })
        .collect()
}

fn cmd_render(a: RenderArgs) -> Result<()> {
    let palette: Palette = load_or_default(a.config.as_deref())?;
    palette.validate()?;
    let raster = bsqf::read(&a.input)?;
    let png = render_map(&raster, &palette, a.legend)?.encode_png()?;
    fsio::write_atomic(&a.out, &png)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let report: EvalReport = fsio::read_json(&a.eval.join("report.json"))?;
    let mut text = summary_table(&report);
    let stat_path = a.eval.join("stat_report.json");
    if stat_path.exists() {
        let stat: StatReport = fsio::read_json(&stat_path)?;
        text.push_str(&format!("\n{:<18}{:>11}{:>11}\n", "Group", "Predicted", "Reference"));
        for ((g, p), r) in stat.groups.iter().zip(&stat.predicted).zip(&stat.reference) {
            text.push_str(&format!("{g:<18}{:>10.2}%{:>10.2}%\n", 100.0 * p, 100.0 * r));
        }
        text.push_str(&format!("L1 distance {:.4}\n", stat.l1_distance));
    }
    print!("{text}");
    if let Some(out) = a.out {
        fsio::write_atomic(&out, text.as_bytes())?;
    }
    Ok(())
}
