use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// North-up affine map between pixel indices and planar world meters.
///
/// `origin_x`/`origin_y` is the world position of the *center* of pixel
/// (0, 0), so integer pixel coordinates always address pixel centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    pub origin_x: f64,
    pub origin_y: f64,
    #[serde(rename = "px")]
    pub pixel_size_x: f64,
    #[serde(rename = "py")]
    pub pixel_size_y: f64,
}

impl AffineTransform {
    pub fn new(origin_x: f64, origin_y: f64, pixel_size_x: f64, pixel_size_y: f64) -> Result<Self> {
        let t = Self {
            origin_x,
            origin_y,
            pixel_size_x,
            pixel_size_y,
        };
        t.validate()?;
        Ok(t)
    }

    /// Transform for a north-up grid whose upper-left pixel *corner* sits at
    /// (`left`, `top`).
    pub fn from_corner(left: f64, top: f64, pixel_size: f64) -> Self {
        Self {
            origin_x: left + pixel_size / 2.0,
            origin_y: top - pixel_size / 2.0,
            pixel_size_x: pixel_size,
            pixel_size_y: -pixel_size,
        }
    }

    pub fn identity() -> Self {
        Self {
            origin_x: 0.0,
            origin_y: 0.0,
            pixel_size_x: 1.0,
            pixel_size_y: -1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.origin_x, self.origin_y, self.pixel_size_x, self.pixel_size_y]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.pixel_size_x <= 0.0 || self.pixel_size_y == 0.0 {
            return Err(Error::InvalidRaster(format!(
                "bad transform: pixel sizes ({}, {})",
                self.pixel_size_x, self.pixel_size_y
            )));
        }
        Ok(())
    }

    pub fn pixel_to_world(&self, col: f64, row: f64) -> (f64, f64) {
        (
            self.origin_x + col * self.pixel_size_x,
            self.origin_y + row * self.pixel_size_y,
        )
    }

    pub fn world_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.origin_x) / self.pixel_size_x,
            (y - self.origin_y) / self.pixel_size_y,
        )
    }

    pub fn pixel_area(&self) -> f64 {
        (self.pixel_size_x * self.pixel_size_y).abs()
    }
}
