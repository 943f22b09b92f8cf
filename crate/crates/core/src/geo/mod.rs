//! Georeferenced raster and vector primitives: affine grids, polygon
//! rasterization, cross-resolution resampling and the on-disk formats.

pub mod bsqf;
pub mod geojson;
mod polygon;
mod raster;
mod rasterize;
mod resample;
mod transform;

pub use polygon::{point_in_rings, Point, Polygon};
pub use raster::{GridSpec, RasterGrid};
pub use rasterize::{rasterize_polygons, RasterizeReport};
pub use resample::{resample_to_grid, ResampleMethod};
pub use transform::AffineTransform;
