//! Minimal GeoJSON FeatureCollection support: planar Polygon features only,
//! properties carried through as strings.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Point, Polygon};
use crate::error::{Error, Result};
use crate::fsio;

#[derive(Serialize, Deserialize)]
struct FeatureCollection {
    #[serde(rename = "type")]
    kind: String,
    features: Vec<Feature>,
}

#[derive(Serialize, Deserialize)]
struct Feature {
    #[serde(rename = "type")]
    kind: String,
    geometry: Geometry,
    #[serde(default)]
    properties: BTreeMap<String, Value>,
}

#[derive(Serialize, Deserialize)]
struct Geometry {
    #[serde(rename = "type")]
    kind: String,
    coordinates: Vec<Vec<[f64; 2]>>,
}

fn ring_to_coords(ring: &[Point]) -> Vec<[f64; 2]> {
    ring.iter().map(|p| [p.x, p.y]).collect()
}

pub fn to_string(polys: &[Polygon]) -> Result<String> {
    let fc = FeatureCollection {
        kind: "FeatureCollection".into(),
        features: polys
            .iter()
            .map(|p| Feature {
                kind: "Feature".into(),
                geometry: Geometry {
                    kind: "Polygon".into(),
                    coordinates: p.rings().map(|r| ring_to_coords(r)).collect(),
                },
                properties: p
                    .attributes
                    .iter()
                    .map(|(k, v)| (k.clone(), Value::String(v.clone())))
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&fc).map_err(|e| Error::Format(e.to_string()))
}

/// Parses a FeatureCollection. Non-polygon or malformed features are
/// returned as diagnostics rather than failing the whole file.
pub fn from_str(text: &str) -> Result<(Vec<Polygon>, Vec<String>)> {
    let fc: FeatureCollection =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("geojson: {e}")))?;
    if fc.kind != "FeatureCollection" {
        return Err(Error::Format(format!("expected FeatureCollection, got {}", fc.kind)));
    }
    let mut polys = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, f) in fc.features.into_iter().enumerate() {
        if f.geometry.kind != "Polygon" {
            diagnostics.push(format!("feature {i}: unsupported geometry {}", f.geometry.kind));
            continue;
        }
        let mut rings = f
            .geometry
            .coordinates
            .into_iter()
            .map(|r| r.into_iter().map(|[x, y]| Point::new(x, y)).collect::<Vec<_>>());
        let Some(exterior) = rings.next() else {
            diagnostics.push(format!("feature {i}: polygon without rings"));
            continue;
        };
        match Polygon::new(exterior, rings.collect()) {
            Ok(mut p) => {
                p.attributes = f
                    .properties
                    .into_iter()
                    .map(|(k, v)| match v {
                        Value::String(s) => (k, s),
                        other => (k, other.to_string()),
                    })
                    .collect();
                polys.push(p);
            }
            Err(e) => diagnostics.push(format!("feature {i}: {e}")),
        }
    }
    Ok((polys, diagnostics))
}

pub fn write(path: &Path, polys: &[Polygon]) -> Result<()> {
    let mut s = to_string(polys)?;
    s.push('\n');
    fsio::write_atomic(path, s.as_bytes())
}

pub fn read(path: &Path) -> Result<(Vec<Polygon>, Vec<String>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_str(&text)
}
