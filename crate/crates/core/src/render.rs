//! PNG rendering of class and label maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::RasterGrid;
use crate::labelgen::FunctionClass;

const LEGEND_HEIGHT: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Palette {
    /// Colors for codes 0..=7.
    pub classes: [[u8; 3]; 8],
    /// Color for unlabeled buildings (255).
    pub hatch: [u8; 3],
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            classes: [
                [245, 245, 240],
                [230, 85, 13],
                [49, 130, 189],
                [117, 107, 177],
                [222, 45, 38],
                [49, 163, 84],
                [255, 217, 47],
                [99, 99, 99],
            ],
            hatch: [255, 0, 255],
        }
    }
}

impl Palette {
    pub fn validate(&self) -> Result<()> {
        let all = self.entries();
        for (i, a) in all.iter().enumerate() {
            if all[i + 1..].iter().any(|b| b.1 == a.1) {
                return Err(Error::Config(format!("palette color for code {} is not unique", a.0)));
            }
        }
        Ok(())
    }

    /// All nine (code, color) pairs in legend order.
    pub fn entries(&self) -> Vec<(u8, [u8; 3])> {
        let mut v: Vec<(u8, [u8; 3])> = self.classes.iter().enumerate().map(|(k, c)| (k as u8, *c)).collect();
        v.push((FunctionClass::UNLABELED_CODE, self.hatch));
        v
    }

    pub fn color(&self, value: f32) -> Result<[u8; 3]> {
        if value == FunctionClass::UNLABELED_CODE as f32 {
            return Ok(self.hatch);
        }
        if value.fract() == 0.0 && (0.0..8.0).contains(&value) {
            return Ok(self.classes[value as usize]);
        }
        Err(Error::PaletteDomain(value))
    }
}

/// Decoded RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().map_err(|e| Error::Format(e.to_string()))?;
            w.write_image_data(self.pixels.as_flattened())
                .map_err(|e| Error::Format(e.to_string()))?;
        }
        Ok(out)
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let dec = png::Decoder::new(std::io::Cursor::new(bytes));
        let mut reader = dec.read_info().map_err(|e| Error::Format(e.to_string()))?;
        let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
        let info = reader.next_frame(&mut buf).map_err(|e| Error::Format(e.to_string()))?;
        if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
            return Err(Error::Format("expected 8-bit RGB".into()));
        }
        let pixels = buf[..info.buffer_size()]
            .chunks_exact(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect();
        Ok(Self {
            width: info.width as usize,
            height: info.height as usize,
            pixels,
        })
    }
}

/// One image pixel per cell of band 0. With `legend`, a strip of the nine
/// palette swatches is appended below the map.
pub fn render_map(raster: &RasterGrid, palette: &Palette, legend: bool) -> Result<RgbImage> {
    let (w, h) = (raster.width(), raster.height());
    let mut pixels = raster.band(0).iter().map(|&v| palette.color(v)).collect::<Result<Vec<_>>>()?;
    let mut height = h;
    if legend {
        let entries = palette.entries();
        for _ in 0..LEGEND_HEIGHT {
            pixels.extend((0..w).map(|c| entries[(c * entries.len() / w).min(entries.len() - 1)].1));
        }
        height += LEGEND_HEIGHT;
    }
    Ok(RgbImage {
        width: w,
        height,
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{AffineTransform, GridSpec};
    use std::collections::BTreeSet;

    fn grid(w: usize, h: usize, data: Vec<f32>) -> RasterGrid {
        RasterGrid::new(GridSpec::new(w, h, AffineTransform::identity()).unwrap(), 1, data).unwrap()
    }

    #[test]
    fn default_palette_is_a_bijection() {
        Palette::default().validate().unwrap();
        let mut p = Palette::default();
        p.hatch = p.classes[3];
        assert!(p.validate().is_err());
    }

    #[test]
    fn background_is_uniform() {
        let img = render_map(&grid(4, 3, vec![0.0; 12]), &Palette::default(), false).unwrap();
        assert!(img.pixels.iter().all(|&p| p == Palette::default().classes[0]));
    }

    #[test]
    fn nine_codes_nine_colors() {
        let data = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 255.0];
        let img = render_map(&grid(9, 1, data), &Palette::default(), false).unwrap();
        assert_eq!(img.pixels.iter().collect::<BTreeSet<_>>().len(), 9);
    }

    #[test]
    fn out_of_domain_value_is_named() {
        let err = render_map(&grid(2, 1, vec![0.0, 9.0]), &Palette::default(), false).unwrap_err();
        assert!(err.to_string().contains('9'), "{err}");
    }

    #[test]
    fn png_round_trip_and_legend() {
        let img = render_map(&grid(18, 2, vec![1.0; 36]), &Palette::default(), true).unwrap();
        assert_eq!(img.height, 2 + LEGEND_HEIGHT);
        let back = RgbImage::decode_png(&img.encode_png().unwrap()).unwrap();
        assert_eq!(back, img);
        let legend: BTreeSet<_> = back.pixels[36..].iter().collect();
        assert_eq!(legend.len(), 9);
    }
}
