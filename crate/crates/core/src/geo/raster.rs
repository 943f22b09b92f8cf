use serde::{Deserialize, Serialize};

use super::AffineTransform;
use crate::error::{Error, Result};

/// Geometry of a raster without its payload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub transform: AffineTransform,
}

impl GridSpec {
    pub fn new(width: usize, height: usize, transform: AffineTransform) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster(format!(
                "grid must have at least one pixel, got {width}x{height}"
            )));
        }
        transform.validate()?;
        Ok(Self {
            width,
            height,
            transform,
        })
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// World-space bounds of the pixel edges as `(min_x, min_y, max_x, max_y)`.
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        let t = &self.transform;
        let (x0, y0) = t.pixel_to_world(-0.5, -0.5);
        let (x1, y1) = t.pixel_to_world(self.width as f64 - 0.5, self.height as f64 - 0.5);
        (x0.min(x1), y0.min(y1), x0.max(x1), y0.max(y1))
    }

    pub fn pixel_center(&self, col: usize, row: usize) -> (f64, f64) {
        self.transform.pixel_to_world(col as f64, row as f64)
    }

    /// Sub-grid starting at pixel (`col`, `row`).
    pub fn window(&self, col: usize, row: usize, width: usize, height: usize) -> GridSpec {
        let (ox, oy) = self.pixel_center(col, row);
        GridSpec {
            width,
            height,
            transform: AffineTransform {
                origin_x: ox,
                origin_y: oy,
                ..self.transform
            },
        }
    }
}

/// Band-sequential float raster. Class rasters store their codes as exact
/// small integers.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    pub spec: GridSpec,
    pub bands: usize,
    pub data: Vec<f32>,
    pub nodata: Option<f32>,
    pub band_names: Vec<String>,
}

impl RasterGrid {
    pub fn new(spec: GridSpec, bands: usize, data: Vec<f32>) -> Result<Self> {
        if bands == 0 {
            return Err(Error::InvalidRaster("raster needs at least one band".into()));
        }
        if data.len() != spec.len() * bands {
            return Err(Error::InvalidRaster(format!(
                "data length {} != {}x{}x{}",
                data.len(),
                spec.width,
                spec.height,
                bands
            )));
        }
        Ok(Self {
            spec,
            bands,
            data,
            nodata: None,
            band_names: default_band_names(bands),
        })
    }

    pub fn filled(spec: GridSpec, bands: usize, value: f32) -> Self {
        Self {
            spec,
            bands,
            data: vec![value; spec.len() * bands],
            nodata: None,
            band_names: default_band_names(bands),
        }
    }

    pub fn with_nodata(mut self, nodata: Option<f32>) -> Self {
        self.nodata = nodata;
        self
    }

    pub fn with_band_names<S: Into<String>>(mut self, names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() != self.bands {
            return Err(Error::InvalidRaster(format!(
                "{} band names for {} bands",
                names.len(),
                self.bands
            )));
        }
        self.band_names = names;
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.spec.width
    }

    pub fn height(&self) -> usize {
        self.spec.height
    }

    pub fn transform(&self) -> &AffineTransform {
        &self.spec.transform
    }

    pub fn band(&self, b: usize) -> &[f32] {
        let n = self.spec.len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn band_mut(&mut self, b: usize) -> &mut [f32] {
        let n = self.spec.len();
        &mut self.data[b * n..(b + 1) * n]
    }

    pub fn get(&self, band: usize, col: usize, row: usize) -> f32 {
        self.data[band * self.spec.len() + row * self.spec.width + col]
    }

    pub fn set(&mut self, band: usize, col: usize, row: usize, value: f32) {
        let n = self.spec.len();
        self.data[band * n + row * self.spec.width + col] = value;
    }

    pub fn is_nodata(&self, v: f32) -> bool {
        match self.nodata {
            Some(nd) if nd.is_nan() => v.is_nan(),
            Some(nd) => v == nd,
            None => false,
        }
    }

    /// Copies a rectangular window of every band.
    pub fn crop(&self, col: usize, row: usize, width: usize, height: usize) -> Result<RasterGrid> {
        if col + width > self.spec.width || row + height > self.spec.height || width == 0 || height == 0 {
            return Err(Error::InvalidRaster(format!(
                "window {width}x{height}@({col},{row}) outside {}x{}",
                self.spec.width, self.spec.height
            )));
        }
        let mut data = Vec::with_capacity(width * height * self.bands);
        for b in 0..self.bands {
            let band = self.band(b);
            for r in row..row + height {
                let start = r * self.spec.width + col;
                data.extend_from_slice(&band[start..start + width]);
            }
        }
        Ok(RasterGrid {
            spec: self.spec.window(col, row, width, height),
            bands: self.bands,
            data,
            nodata: self.nodata,
            band_names: self.band_names.clone(),
        })
    }

    /// Checks that `other` sits on exactly the same pixel grid.
    pub fn ensure_congruent(&self, other: &RasterGrid) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::GridMismatch(format!(
                "{}x{} {:?} vs {}x{} {:?}",
                self.spec.width,
                self.spec.height,
                self.spec.transform,
                other.spec.width,
                other.spec.height,
                other.spec.transform
            )));
        }
        Ok(())
    }
}

fn default_band_names(bands: usize) -> Vec<String> {
    (1..=bands).map(|b| format!("band_{b}")).collect()
}
