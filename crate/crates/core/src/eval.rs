//! Pixel and point classification metrics, footprint metrics, building
//! counts and the grouped statistical comparison.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::RasterGrid;
use crate::labelgen::FunctionClass;
use crate::pipeline::{extract_footprint, ClassMapRaster};
use crate::{derive_seed, fsio};

const K: usize = FunctionClass::NUM_CLASSES;

/// Rows are reference classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<u8>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> Self {
        Self {
            classes: (0..k as u8).collect(),
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if k == 0 || counts.iter().any(|r| r.len() != k) {
            return Err(Error::Shape("confusion matrix must be square and non-empty".into()));
        }
        Ok(Self {
            classes: (0..k as u8).collect(),
            counts,
        })
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.k()).map(|j| self.counts.iter().map(|r| r[j]).sum()).collect()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.k() != self.k() {
            return Err(Error::Shape(format!("cannot merge {}x{0} into {}x{1}", other.k(), self.k())));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("reference\\prediction");
        for c in &self.classes {
            write!(s, ",{c}").unwrap();
        }
        s.push('\n');
        for (c, row) in self.classes.iter().zip(&self.counts) {
            write!(s, "{c}").unwrap();
            for v in row {
                write!(s, ",{v}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    /// Cohen's kappa; undefined when chance agreement is 1.
    pub fn kappa(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::EmptyConfusion);
        }
        let n = total as f64;
        let (rows, cols) = (self.row_sums(), self.col_sums());
        let pe: f64 = rows.iter().zip(&cols).map(|(&r, &c)| r as f64 * c as f64).sum::<f64>() / (n * n);
        if pe >= 1.0 {
            return Err(Error::KappaUndefined);
        }
        let po = (0..self.k()).map(|i| self.counts[i][i]).sum::<u64>() as f64 / n;
        Ok((po - pe) / (1.0 - pe))
    }
}

/// A validation sample in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationPoint {
    pub x: f64,
    pub y: f64,
    /// Reference class at sampling time, for inspection only.
    pub class: u8,
}

fn pixel_of(grid: &RasterGrid, x: f64, y: f64) -> Option<usize> {
    let (c, r) = grid.transform().world_to_pixel(x, y);
    let (c, r) = ((c + 0.5).floor(), (r + 0.5).floor());
    if c < 0.0 || r < 0.0 || c >= grid.width() as f64 || r >= grid.height() as f64 {
        return None;
    }
    Some(r as usize * grid.width() + c as usize)
}

/// Tallies (reference, prediction) pairs over every pixel, or only at
/// `points`. Reference pixels of 255 are skipped.
pub fn confusion(pred: &RasterGrid, reference: &RasterGrid, points: Option<&[ValidationPoint]>) -> Result<ConfusionMatrix> {
    pred.ensure_congruent(reference)?;
    let mut cm = ConfusionMatrix::zeros(K);
    let mut add = |i: usize| -> Result<()> {
        let (r, p) = (reference.data[i], pred.data[i]);
        if r == FunctionClass::UNLABELED_CODE as f32 {
            return Ok(());
        }
        let (r, p) = (r as usize, p as usize);
        if r >= K || p >= K {
            return Err(Error::InvalidRaster(format!("class pair ({r}, {p}) outside 0..{K}")));
        }
        cm.counts[r][p] += 1;
        Ok(())
    };
    match points {
        None => (0..reference.data.len()).try_for_each(&mut add)?,
        Some(pts) => {
            for p in pts {
                let i = pixel_of(reference, p.x, p.y)
                    .ok_or_else(|| Error::Config(format!("validation point ({}, {}) outside the grid", p.x, p.y)))?;
                add(i)?;
            }
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub oa: f64,
    /// `None` when chance agreement is 1 (a single class everywhere).
    pub kappa: Option<f64>,
    pub fwiou: f64,
    /// `None` for classes absent from both reference and prediction.
    pub iou: Vec<Option<f64>>,
}

pub fn classification_metrics(cm: &ConfusionMatrix) -> Result<ClassMetrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyConfusion);
    }
    let n = total as f64;
    let (rows, cols) = (cm.row_sums(), cm.col_sums());
    let diag: Vec<u64> = (0..cm.k()).map(|i| cm.counts[i][i]).collect();
    let iou: Vec<Option<f64>> = (0..cm.k())
        .map(|k| {
            let union = rows[k] + cols[k] - diag[k];
            (union > 0).then(|| diag[k] as f64 / union as f64)
        })
        .collect();
    let fwiou = (0..cm.k())
        .filter_map(|k| iou[k].map(|v| rows[k] as f64 / n * v))
        .sum();
    let kappa = match cm.kappa() {
        Ok(v) => Some(v),
        Err(Error::KappaUndefined) => None,
        Err(e) => return Err(e),
    };
    Ok(ClassMetrics {
        oa: diag.iter().sum::<u64>() as f64 / n,
        kappa,
        fwiou,
        iou,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootprintMetrics {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    /// Neither mask has a building pixel; f1 and iou are 1 by convention.
    pub empty_union: bool,
}

impl FootprintMetrics {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        if tp + fp + fn_ == 0 {
            return Self {
                tp,
                fp,
                fn_,
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
                iou: 1.0,
                empty_union: true,
            };
        }
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = ratio(2 * tp, 2 * tp + fp + fn_);
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
            iou: ratio(tp, tp + fp + fn_),
            empty_union: false,
        }
    }
}

/// Pixel-level agreement of two binary masks (non-zero = building).
pub fn footprint_metrics(pred: &RasterGrid, reference: &RasterGrid) -> Result<FootprintMetrics> {
    pred.ensure_congruent(reference)?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&p, &r) in pred.data.iter().zip(&reference.data) {
        match (p != 0.0, r != 0.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    Ok(FootprintMetrics::from_counts(tp, fp, fn_))
}

/// Building mask of a label raster; unlabeled buildings (255) count.
pub fn label_footprint(labels: &RasterGrid) -> RasterGrid {
    RasterGrid {
        data: labels.data.iter().map(|&v| if v >= 1.0 { 1.0 } else { 0.0 }).collect(),
        band_names: vec!["footprint".into()],
        nodata: None,
        ..labels.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingCount {
    pub count: usize,
    pub area_m2: f64,
    pub component_pixels: Vec<usize>,
}

/// Connected components of non-zero pixels under 8-connectivity, in
/// raster scan order of their first pixel.
pub fn count_buildings(fp: &RasterGrid) -> BuildingCount {
    let (w, h) = (fp.width(), fp.height());
    let mut seen = vec![false; w * h];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if seen[start] || fp.data[start] == 0.0 {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            let (c, r) = ((i % w) as i64, (i / w) as i64);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (nc, nr) = (c + dc, r + dr);
                    if nc < 0 || nr < 0 || nc >= w as i64 || nr >= h as i64 {
                        continue;
                    }
                    let j = nr as usize * w + nc as usize;
                    if !seen[j] && fp.data[j] != 0.0 {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        sizes.push(size);
    }
    let pixels: usize = sizes.iter().sum();
    BuildingCount {
        count: sizes.len(),
        area_m2: pixels as f64 * fp.transform().pixel_area(),
        component_pixels: sizes,
    }
}

/// Aggregation of the seven functions into coarser report groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMapping {
    pub groups: Vec<String>,
    /// Group index for codes 1..=7, in code order.
    pub assign: [usize; 7],
}

impl Default for GroupMapping {
    fn default() -> Self {
        Self {
            groups: ["Residential", "Commercial", "Industrial", "PublicFacilities"]
                .map(String::from)
                .to_vec(),
            // Res, Com, PubServ, PubHealth, SportArt, Edu, Ind
            assign: [0, 1, 3, 3, 3, 3, 2],
        }
    }
}

impl GroupMapping {
    pub fn validate(&self) -> Result<()> {
        if let Some(g) = self.assign.iter().find(|&&g| g >= self.groups.len()) {
            return Err(Error::Config(format!("mapping refers to group {g} of {}", self.groups.len())));
        }
        Ok(())
    }

    /// Sums per-class values (codes 1..=7, in order) into groups.
    pub fn aggregate(&self, per_class: &[f64; 7]) -> Vec<f64> {
        let mut out = vec![0.0; self.groups.len()];
        for (k, v) in per_class.iter().enumerate() {
            out[self.assign[k]] += v;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub groups: Vec<String>,
    pub mapping: GroupMapping,
    pub predicted: Vec<f64>,
    pub reference: Vec<f64>,
    pub l1_distance: f64,
}

/// Per-class building area shares (codes 1..=7) of class maps.
pub fn class_proportions(maps: &[&RasterGrid]) -> Result<[f64; 7]> {
    let mut counts = [0f64; 7];
    for m in maps {
        let px = m.transform().pixel_area();
        for &v in &m.data {
            if (1.0..=7.0).contains(&v) {
                counts[v as usize - 1] += px;
            }
        }
    }
    let total: f64 = counts.iter().sum();
    if total == 0.0 {
        return Err(Error::NoBuildingPixels);
    }
    Ok(counts.map(|c| c / total))
}

pub fn statistical_comparison(maps: &[&ClassMapRaster], reference: &[f64], mapping: &GroupMapping) -> Result<StatReport> {
    mapping.validate()?;
    if reference.len() != mapping.groups.len() {
        return Err(Error::Config(format!(
            "{} reference proportions for {} groups",
            reference.len(),
            mapping.groups.len()
        )));
    }
    let sum: f64 = reference.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || reference.iter().any(|&v| v < 0.0) {
        return Err(Error::Config(format!("reference proportions sum to {sum}, not 1")));
    }
    let rasters: Vec<&RasterGrid> = maps.iter().map(|m| &m.raster).collect();
    let predicted = mapping.aggregate(&class_proportions(&rasters)?);
    let l1_distance = predicted.iter().zip(reference).map(|(a, b)| (a - b).abs()).sum();
    Ok(StatReport {
        groups: mapping.groups.clone(),
        mapping: mapping.clone(),
        predicted,
        reference: reference.to_vec(),
        l1_distance,
    })
}

/// Stratified sample: classes get points in proportion to their pixel
/// share (at least one each when present), drawn uniformly without
/// replacement within the class. 255 is not a stratum.
pub fn sample_validation_points(reference: &RasterGrid, n: usize, seed: u64) -> Vec<ValidationPoint> {
    let mut strata: Vec<Vec<usize>> = vec![Vec::new(); K];
    for (i, &v) in reference.data.iter().enumerate() {
        if (0.0..K as f32).contains(&v) {
            strata[v as usize].push(i);
        }
    }
    let total: usize = strata.iter().map(Vec::len).sum();
    if total == 0 || n == 0 {
        return Vec::new();
    }
    let w = reference.width();
    let mut out = Vec::with_capacity(n);
    for (k, pixels) in strata.iter().enumerate() {
        if pixels.is_empty() {
            continue;
        }
        let share = ((n as f64 * pixels.len() as f64 / total as f64).round() as usize).clamp(1, pixels.len());
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[k as u64]));
        let mut picks = sample(&mut rng, pixels.len(), share).into_vec();
        picks.sort_unstable();
        for p in picks {
            let i = pixels[p];
            let (x, y) = reference.spec.pixel_center(i % w, i / w);
            out.push(ValidationPoint { x, y, class: k as u8 });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class: String,
    pub code: u8,
    pub iou: Option<f64>,
    /// Share of predicted building area.
    pub proportion: f64,
    pub reference_proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub checkpoint_id: String,
    pub tiles: usize,
    pub validation: String,
    pub oa: f64,
    pub kappa: Option<f64>,
    pub fwiou: f64,
    pub per_class: Vec<ClassSummary>,
    pub footprint: FootprintMetrics,
    pub footprint_f1: f64,
    pub footprint_iou: f64,
    pub building_count: usize,
    pub building_area_m2: f64,
    pub reference_building_count: usize,
    pub confusion: ConfusionMatrix,
}

/// Evaluates predicted class maps against reference label rasters, tile by
/// tile, merging integer tallies before any ratio is formed.
pub fn evaluate(pred: &[&ClassMapRaster], reference: &[&RasterGrid], points: Option<&[Vec<ValidationPoint>]>) -> Result<EvalReport> {
    if pred.len() != reference.len() || pred.is_empty() {
        return Err(Error::Config(format!("{} predictions for {} references", pred.len(), reference.len())));
    }
    if let Some(p) = points {
        if p.len() != pred.len() {
            return Err(Error::Config(format!("{} point lists for {} tiles", p.len(), pred.len())));
        }
    }
    let mut cm = ConfusionMatrix::zeros(K);
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let (mut count, mut area, mut ref_count) = (0, 0.0, 0);
    for (i, (p, r)) in pred.iter().zip(reference).enumerate() {
        cm.merge(&confusion(&p.raster, r, points.map(|pts| pts[i].as_slice()))?)?;
        let pf = extract_footprint(p);
        let fm = footprint_metrics(&pf, &label_footprint(r))?;
        tp += fm.tp;
        fp += fm.fp;
        fn_ += fm.fn_;
        let bc = count_buildings(&pf);
        count += bc.count;
        area += bc.area_m2;
        ref_count += count_buildings(&label_footprint(r)).count;
    }
    let m = classification_metrics(&cm)?;
    let rasters: Vec<&RasterGrid> = pred.iter().map(|p| &p.raster).collect();
    let props = class_proportions(&rasters).unwrap_or([0.0; 7]);
    let ref_props = class_proportions(reference).unwrap_or([0.0; 7]);
    let per_class = (0..K)
        .map(|k| {
            let c = FunctionClass::from_code(k as u8).expect("code in range");
            ClassSummary {
                class: c.name().to_string(),
                code: k as u8,
                iou: m.iou[k],
                proportion: if k == 0 { 0.0 } else { props[k - 1] },
                reference_proportion: if k == 0 { 0.0 } else { ref_props[k - 1] },
            }
        })
        .collect();
    let footprint = FootprintMetrics::from_counts(tp, fp, fn_);
    Ok(EvalReport {
        checkpoint_id: pred[0].checkpoint_id.clone(),
        tiles: pred.len(),
        validation: if points.is_some() { "points" } else { "dense" }.into(),
        oa: m.oa,
        kappa: m.kappa,
        fwiou: m.fwiou,
        per_class,
        footprint_f1: footprint.f1,
        footprint_iou: footprint.iou,
        footprint,
        building_count: count,
        building_area_m2: area,
        reference_building_count: ref_count,
        confusion: cm,
    })
}

/// Writes `report.json` and `confusion.csv` into `dir`.
pub fn write_eval(dir: &Path, report: &EvalReport) -> Result<()> {
    fsio::write_json(&dir.join("report.json"), report)?;
    fsio::write_atomic(&dir.join("confusion.csv"), report.confusion.to_csv().as_bytes())
}

/// Plain-text summary: overall metrics, then one row per class.
pub fn summary_table(report: &EvalReport) -> String {
    let mut s = String::new();
    let kappa = report.kappa.map_or("undefined".to_string(), |k| format!("{k:.4}"));
    writeln!(s, "{:<16}{:>12}", "OA", format!("{:.4}", report.oa)).unwrap();
    writeln!(s, "{:<16}{:>12}", "Kappa", kappa).unwrap();
    writeln!(s, "{:<16}{:>12}", "FWIoU", format!("{:.4}", report.fwiou)).unwrap();
    writeln!(s, "{:<16}{:>12}", "Footprint IoU", format!("{:.4}", report.footprint_iou)).unwrap();
    writeln!(s, "{:<16}{:>12}", "Footprint F1", format!("{:.4}", report.footprint_f1)).unwrap();
    writeln!(s, "{:<16}{:>12}", "Building count", report.building_count).unwrap();
    writeln!(s, "{:<16}{:>12}", "Building area", format!("{:.2} km2", report.building_area_m2 / 1e6)).unwrap();
    writeln!(s, "\n{:<16}{:>10}{:>12}{:>12}", "Function", "IoU", "Proportion", "Reference").unwrap();
    for c in report.per_class.iter().skip(1) {
        let iou = c.iou.map_or("-".to_string(), |v| format!("{v:.4}"));
        writeln!(
            s,
            "{:<16}{:>10}{:>11.2}%{:>11.2}%",
            c.class,
            iou,
            100.0 * c.proportion,
            100.0 * c.reference_proportion
        )
        .unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{AffineTransform, GridSpec};

    fn grid(w: usize, h: usize, data: Vec<f32>) -> RasterGrid {
        RasterGrid::new(GridSpec::new(w, h, AffineTransform::from_corner(0.0, 0.0, 1.0)).unwrap(), 1, data).unwrap()
    }

    #[test]
    fn identical_maps_give_diagonal() {
        let g = grid(4, 1, vec![0.0, 1.0, 1.0, 7.0]);
        let cm = confusion(&g, &g, None).unwrap();
        assert_eq!(cm.counts[1][1], 2);
        assert_eq!(cm.total(), 4);
        let m = classification_metrics(&cm).unwrap();
        assert_eq!((m.oa, m.kappa, m.fwiou), (1.0, Some(1.0), 1.0));
    }

    #[test]
    fn single_point_confusion() {
        let reference = grid(3, 3, vec![1.0; 9]);
        let pred = grid(3, 3, vec![2.0; 9]);
        let (x, y) = reference.spec.pixel_center(1, 2);
        let cm = confusion(&pred, &reference, Some(&[ValidationPoint { x, y, class: 1 }])).unwrap();
        assert_eq!(cm.counts[1][2], 1);
        assert_eq!(cm.total(), 1);
        let outside = ValidationPoint {
            x: -5.0,
            y: 0.0,
            class: 0,
        };
        assert!(confusion(&pred, &reference, Some(&[outside])).is_err());
    }

    #[test]
    fn unlabeled_reference_pixels_are_skipped() {
        let cm = confusion(&grid(2, 1, vec![1.0, 1.0]), &grid(2, 1, vec![255.0, 1.0]), None).unwrap();
        assert_eq!(cm.total(), 1);
    }

    #[test]
    fn worked_two_class_matrix() {
        let cm = ConfusionMatrix::from_counts(vec![vec![50, 10], vec![10, 30]]).unwrap();
        let m = classification_metrics(&cm).unwrap();
        assert!((m.oa - 0.8).abs() < 1e-12);
        assert!((m.kappa.unwrap() - 0.583_333_333_333_333_4).abs() < 1e-12);
        assert!((m.fwiou - 0.668_571_428_571_428_6).abs() < 1e-12);
    }

    #[test]
    fn single_class_kappa_is_flagged() {
        let cm = ConfusionMatrix::from_counts(vec![vec![5, 0], vec![0, 0]]).unwrap();
        assert_eq!(classification_metrics(&cm).unwrap().kappa, None);
        assert!(matches!(cm.kappa(), Err(Error::KappaUndefined)));
        assert!(classification_metrics(&ConfusionMatrix::zeros(3)).is_err());
    }

    #[test]
    fn half_covered_footprint() {
        let reference = grid(4, 1, vec![1.0, 1.0, 1.0, 1.0]);
        let pred = grid(4, 1, vec![1.0, 1.0, 0.0, 0.0]);
        let m = footprint_metrics(&pred, &reference).unwrap();
        assert_eq!((m.precision, m.recall, m.iou), (1.0, 0.5, 0.5));
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
        let empty = footprint_metrics(&grid(2, 1, vec![0.0; 2]), &grid(2, 1, vec![0.0; 2])).unwrap();
        assert!(empty.empty_union && empty.f1 == 1.0 && empty.iou == 1.0);
    }

    #[test]
    fn components_use_eight_connectivity() {
        #[rustfmt::skip]
        let data = vec![
            1.0, 1.0, 0.0, 0.0, 0.0,
            1.0, 1.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 1.0, 1.0, 0.0,
            0.0, 0.0, 1.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 0.0, 1.0,
        ];
        let bc = count_buildings(&grid(5, 5, data));
        assert_eq!(bc.count, 1);
        assert_eq!(bc.area_m2, 9.0);
        let bc = count_buildings(&grid(5, 1, vec![1.0, 1.0, 0.0, 1.0, 0.0]));
        assert_eq!((bc.count, bc.component_pixels), (2, vec![2, 1]));
        assert_eq!(count_buildings(&grid(3, 3, vec![0.0; 9])).count, 0);
    }

    #[test]
    fn area_uses_pixel_size() {
        let spec = GridSpec::new(2, 2, AffineTransform::from_corner(0.0, 0.0, 10.0)).unwrap();
        let r = RasterGrid::new(spec, 1, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(count_buildings(&r).area_m2, 100.0);
    }

    fn class_map(data: Vec<f32>) -> ClassMapRaster {
        let n = data.len();
        ClassMapRaster::new(grid(n, 1, data), "t").unwrap()
    }

    #[test]
    fn stat_comparison_examples() {
        let m = GroupMapping::default();
        let all_res = class_map(vec![1.0; 10]);
        let r = statistical_comparison(&[&all_res], &[0.5, 0.2, 0.2, 0.1], &m).unwrap();
        assert!((r.l1_distance - 1.0).abs() < 1e-12);
        let mixed = class_map(vec![1.0, 1.0, 2.0, 7.0, 0.0]);
        let r = statistical_comparison(&[&mixed], &[0.5, 0.25, 0.25, 0.0], &m).unwrap();
        assert!(r.l1_distance.abs() < 1e-12);
        assert!(statistical_comparison(&[&class_map(vec![0.0; 3])], &[0.5, 0.2, 0.2, 0.1], &m).is_err());
        assert!(statistical_comparison(&[&all_res], &[0.5, 0.2, 0.2], &m).is_err());
    }

    #[test]
    fn validation_points_are_stratified() {
        let data: Vec<f32> = (0..1000).map(|i| if i < 900 { 0.0 } else if i < 990 { 1.0 } else { 255.0 }).collect();
        let r = grid(100, 10, data);
        let pts = sample_validation_points(&r, 100, 4);
        let n1 = pts.iter().filter(|p| p.class == 1).count();
        assert_eq!(pts.len() - n1, 91);
        assert_eq!(n1, 9);
        for p in &pts {
            assert_eq!(r.data[pixel_of(&r, p.x, p.y).unwrap()], p.class as f32);
        }
        assert_eq!(pts, sample_validation_points(&r, 100, 4));
    }

    #[test]
    fn confusion_csv_layout() {
        let cm = ConfusionMatrix::from_counts(vec![vec![1, 2], vec![3, 4]]).unwrap();
        assert_eq!(cm.to_csv(), "reference\\prediction,0,1\n0,1,2\n1,3,4\n");
    }
}
