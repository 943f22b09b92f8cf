//! Weak-label generation: AOI tag unification, per-building function
//! assignment and the label raster with its supervision mask.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fsio;
use crate::geo::{rasterize_polygons, GridSpec, Polygon, RasterGrid};

/// Attribute key holding the AOI function tag.
pub const FUNCTION_TAG_KEY: &str = "function";

/// Default overlap lattice spacing (meters) when exact clipping is unavailable.
pub const DEFAULT_OVERLAP_STEP: f64 = 0.25;

const DEFAULT_CLASSMAP_JSON: &str = include_str!("../data/default_classmap.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum FunctionClass {
    Background = 0,
    Residential = 1,
    Commercial = 2,
    PublicService = 3,
    PublicHealth = 4,
    SportArt = 5,
    Educational = 6,
    Industrial = 7,
    /// Building whose function is unknown; excluded from supervision.
    UnlabeledBuilding = 255,
}

impl FunctionClass {
    pub const FUNCTIONS: [FunctionClass; 7] = [
        FunctionClass::Residential,
        FunctionClass::Commercial,
        FunctionClass::PublicService,
        FunctionClass::PublicHealth,
        FunctionClass::SportArt,
        FunctionClass::Educational,
        FunctionClass::Industrial,
    ];

    /// Number of predicted classes: background plus the seven functions.
    pub const NUM_CLASSES: usize = 8;

    pub const UNLABELED_CODE: u8 = 255;

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        use FunctionClass::*;
        Some(match code {
            0 => Background,
            1 => Residential,
            2 => Commercial,
            3 => PublicService,
            4 => PublicHealth,
            5 => SportArt,
            6 => Educational,
            7 => Industrial,
            255 => UnlabeledBuilding,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        use FunctionClass::*;
        match self {
            Background => "Background",
            Residential => "Residential",
            Commercial => "Commercial",
            PublicService => "PublicService",
            PublicHealth => "PublicHealth",
            SportArt => "SportArt",
            Educational => "Educational",
            Industrial => "Industrial",
            UnlabeledBuilding => "UnlabeledBuilding",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::FUNCTIONS
            .into_iter()
            .chain([FunctionClass::Background, FunctionClass::UnlabeledBuilding])
            .find(|c| c.name() == name)
    }

    pub fn is_function(self) -> bool {
        (1..=7).contains(&self.code())
    }
}

impl fmt::Display for FunctionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// AOI tag → function class dictionary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    entries: BTreeMap<String, FunctionClass>,
}

impl ClassMap {
    pub fn new(codes: BTreeMap<String, u8>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (tag, code) in codes {
            match FunctionClass::from_code(code) {
                Some(c) if c.is_function() => {
                    entries.insert(tag, c);
                }
                _ => {
                    return Err(Error::Config(format!(
                        "class map entry {tag:?} -> {code}: codes must be in 1..=7"
                    )))
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let codes: BTreeMap<String, u8> =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("class map: {e}")))?;
        Self::new(codes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(fsio::read_json(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsio::write_json(path, &self.codes())
    }

    pub fn codes(&self) -> BTreeMap<String, u8> {
        self.entries.iter().map(|(k, v)| (k.clone(), v.code())).collect()
    }

    pub fn get(&self, tag: &str) -> Option<FunctionClass> {
        self.entries.get(tag).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Tags mapping to `class`, in sorted order.
    pub fn tags_for(&self, class: FunctionClass) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(_, &c)| c == class)
            .map(|(t, _)| t.as_str())
            .collect()
    }
}

impl Default for ClassMap {
    fn default() -> Self {
        Self::from_json(DEFAULT_CLASSMAP_JSON).expect("shipped class map is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RemapError {
    #[error("AOI has no `{FUNCTION_TAG_KEY}` attribute")]
    MissingTag,
    #[error("AOI tag {0:?} is not in the class map")]
    Unmapped(String),
}

/// Maps an AOI's function tag through the class map.
pub fn remap_aoi(tags: &BTreeMap<String, String>, cm: &ClassMap) -> Result<FunctionClass, RemapError> {
    let tag = tags.get(FUNCTION_TAG_KEY).ok_or(RemapError::MissingTag)?;
    let key = tag.trim().to_ascii_lowercase();
    cm.get(&key).ok_or_else(|| RemapError::Unmapped(tag.clone()))
}

/// AOIs that survived tag remapping plus what was dropped.
#[derive(Debug, Default, Clone)]
pub struct PreparedAois {
    pub aois: Vec<(Polygon, FunctionClass)>,
    pub unmapped_tags: BTreeSet<String>,
    pub diagnostics: Vec<String>,
}

pub fn prepare_aois(polys: Vec<Polygon>, cm: &ClassMap) -> PreparedAois {
    let mut out = PreparedAois::default();
    for (i, p) in polys.into_iter().enumerate() {
        match remap_aoi(&p.attributes, cm) {
            Ok(c) => out.aois.push((p, c)),
            Err(e) => {
                if let RemapError::Unmapped(t) = &e {
                    out.unmapped_tags.insert(t.clone());
                }
                out.diagnostics.push(format!("aoi {i}: {e}"));
            }
        }
    }
    out
}

#[derive(Debug, Default, Clone)]
pub struct Assignment {
    /// Buildings in input order with their class (a function or unlabeled).
    pub buildings: Vec<(Polygon, FunctionClass)>,
    pub diagnostics: Vec<String>,
}

/// Gives each building the class of the AOI it overlaps most. Equal overlaps
/// resolve to the lowest class code; no overlap leaves it unlabeled.
pub fn assign_building_functions(buildings: &[Polygon], aois: &[(Polygon, FunctionClass)]) -> Assignment {
    assign_building_functions_with_step(buildings, aois, DEFAULT_OVERLAP_STEP)
}

pub fn assign_building_functions_with_step(
    buildings: &[Polygon],
    aois: &[(Polygon, FunctionClass)],
    overlap_step: f64,
) -> Assignment {
    let valid_aois: Vec<_> = aois
        .iter()
        .filter(|(p, c)| c.is_function() && p.validate().is_ok())
        .map(|(p, c)| (p, *c, p.bbox()))
        .collect();
    let results: Vec<Result<(Polygon, FunctionClass), String>> = buildings
        .par_iter()
        .enumerate()
        .map(|(i, b)| {
            b.validate().map_err(|e| format!("building {i}: {e}"))?;
            let bb = b.bbox();
            let mut best: Option<(f64, FunctionClass)> = None;
            for (aoi, class, ab) in &valid_aois {
                if ab.0 >= bb.2 || ab.2 <= bb.0 || ab.1 >= bb.3 || ab.3 <= bb.1 {
                    continue;
                }
                let area = b.intersection_area(aoi, overlap_step);
                if area <= 0.0 {
                    continue;
                }
                best = match best {
                    Some((a, c)) if a > area || (a == area && c <= *class) => Some((a, c)),
                    _ => Some((area, *class)),
                };
            }
            let class = best.map_or(FunctionClass::UnlabeledBuilding, |(_, c)| c);
            Ok((b.clone(), class))
        })
        .collect();
    let mut out = Assignment::default();
    for r in results {
        match r {
            Ok(pair) => out.buildings.push(pair),
            Err(d) => out.diagnostics.push(d),
        }
    }
    out
}

/// Per-pixel labels Y' and supervision mask G.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRaster {
    pub labels: RasterGrid,
    pub supervision: RasterGrid,
}

impl LabelRaster {
    /// Derives the supervision mask from labels: 0 on unlabeled buildings,
    /// 1 everywhere else.
    pub fn from_labels(labels: RasterGrid) -> Result<Self> {
        if labels.bands != 1 {
            return Err(Error::BandCount {
                what: "labels",
                expected: 1,
                got: labels.bands,
            });
        }
        for &v in &labels.data {
            let ok = v.fract() == 0.0 && (0.0..=7.0).contains(&v) || v == 255.0;
            if !ok {
                return Err(Error::InvalidRaster(format!("label value {v} outside {{0..7, 255}}")));
            }
        }
        let supervision = RasterGrid {
            data: labels
                .data
                .iter()
                .map(|&v| if v == 255.0 { 0.0 } else { 1.0 })
                .collect(),
            band_names: vec!["supervision".into()],
            nodata: None,
            ..labels.clone()
        };
        let mut labels = labels;
        labels.band_names = vec!["labels".into()];
        labels.nodata = None;
        Ok(Self { labels, supervision })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.labels.spec
    }

    pub fn supervised_count(&self) -> usize {
        self.supervision.data.iter().filter(|&&g| g == 1.0).count()
    }

    pub fn crop(&self, col: usize, row: usize, width: usize, height: usize) -> Result<Self> {
        Ok(Self {
            labels: self.labels.crop(col, row, width, height)?,
            supervision: self.supervision.crop(col, row, width, height)?,
        })
    }
}

/// Rasterizes assigned buildings over a background of 0.
///
/// Unlabeled buildings are painted first, then labeled ones; within each
/// group smaller buildings go first.
pub fn build_label_raster(assigned: &[(Polygon, FunctionClass)], grid: &GridSpec) -> Result<LabelRaster> {
    if let Some((_, c)) = assigned
        .iter()
        .find(|(_, c)| !(c.is_function() || *c == FunctionClass::UnlabeledBuilding))
    {
        return Err(Error::Config(format!("building class {c} cannot be painted")));
    }
    let mut order: Vec<(bool, f64, usize)> = assigned
        .iter()
        .enumerate()
        .map(|(i, (p, c))| (*c != FunctionClass::UnlabeledBuilding, p.area(), i))
        .collect();
    order.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    let polys: Vec<(Polygon, f32)> = order
        .iter()
        .map(|&(_, _, i)| (assigned[i].0.clone(), assigned[i].1.code() as f32))
        .collect();
    let (labels, report) = rasterize_polygons(&polys, grid, 0.0);
    for (i, msg) in report.rejected {
        log::warn!("building {} not rasterized: {msg}", order[i].2);
    }
    LabelRaster::from_labels(labels)
}
