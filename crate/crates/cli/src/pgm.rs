//! Grayscale PGM images (`P2` ASCII and `P5` binary) read as mass distributions:
//! dark pixels carry mass, white pixels none.

use std::path::Path;

use attrep_core::measures::DiscreteMeasure;
use attrep_core::tiling::GridDensityNd;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u32,
    /// Row-major, top row first.
    pub pixels: Vec<u32>,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Pgm(msg.into())
}

/// Splits off the next whitespace-delimited header token, skipping `#` comments.
fn next_token<'a>(data: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < data.len() && data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < data.len() && data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() && data[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(bad("unexpected end of header"));
    }
    Ok(&data[start..*pos])
}

fn parse_uint(tok: &[u8], what: &str) -> Result<u32> {
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse::<u32>().ok())
        .ok_or_else(|| bad(format!("invalid {what} {:?}", String::from_utf8_lossy(tok))))
}

impl PgmImage {
    pub fn parse(data: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let magic = next_token(data, &mut pos)?;
        let binary = match magic {
            b"P2" => false,
            b"P5" => true,
            _ => return Err(bad("expected magic P2 or P5")),
        };
        let width = parse_uint(next_token(data, &mut pos)?, "width")? as usize;
        let height = parse_uint(next_token(data, &mut pos)?, "height")? as usize;
        let maxval = parse_uint(next_token(data, &mut pos)?, "maxval")?;
        if width == 0 || height == 0 {
            return Err(bad("image has no pixels"));
        }
        if maxval == 0 || maxval > 65535 {
            return Err(bad(format!("maxval {maxval} outside 1..=65535")));
        }
        let count = width
            .checked_mul(height)
            .ok_or_else(|| bad("image dimensions overflow"))?;
        let mut pixels = Vec::with_capacity(count);
        if binary {
            // exactly one whitespace byte separates the header from the raster
            pos += 1;
            let bytes = if maxval < 256 { 1 } else { 2 };
            let raster = data.get(pos..).unwrap_or(&[]);
            if raster.len() < count * bytes {
                return Err(bad(format!("raster holds {} bytes, expected {}", raster.len(), count * bytes)));
            }
            for k in 0..count {
                let v = if bytes == 1 {
                    u32::from(raster[k])
                } else {
                    u32::from(raster[2 * k]) << 8 | u32::from(raster[2 * k + 1])
                };
                pixels.push(v);
            }
        } else {
            for _ in 0..count {
                pixels.push(parse_uint(next_token(data, &mut pos)?, "pixel")?);
            }
        }
        if let Some(v) = pixels.iter().find(|v| **v > maxval) {
            return Err(bad(format!("pixel {v} exceeds maxval {maxval}")));
        }
        Ok(Self {
            width,
            height,
            maxval,
            pixels,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let data = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&data)
    }

    /// Pixel masses `(maxval - pixel)`, normalized to sum one, in raster order.
    pub fn masses(&self) -> Result<Vec<f64>> {
        let raw: Vec<f64> = self.pixels.iter().map(|p| f64::from(self.maxval - p)).collect();
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(bad("image carries no mass (all white)"));
        }
        Ok(raw.iter().map(|m| m / total).collect())
    }

    /// Side length of a pixel when the longer image side spans `[0, 1]`.
    pub fn pixel_size(&self) -> f64 {
        1.0 / self.width.max(self.height) as f64
    }

    /// Density on `[0, W s] x [0, H s]` with axes `(x, y)` and `y` pointing up.
    pub fn to_grid(&self) -> Result<GridDensityNd> {
        let m = self.masses()?;
        let s = self.pixel_size();
        let area = s * s;
        let mut cells = vec![0.0; self.width * self.height];
        for r in 0..self.height {
            for c in 0..self.width {
                let iy = self.height - 1 - r;
                cells[c * self.height + iy] = m[r * self.width + c] / area;
            }
        }
        Ok(GridDensityNd::new(
            vec![0.0, 0.0],
            vec![self.width as f64 * s, self.height as f64 * s],
            vec![self.width, self.height],
            cells,
        )?)
    }

    /// Atoms at the centers of the pixels that carry mass.
    pub fn to_discrete(&self) -> Result<DiscreteMeasure> {
        let m = self.masses()?;
        let s = self.pixel_size();
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for r in 0..self.height {
            for c in 0..self.width {
                let w = m[r * self.width + c];
                if w > 0.0 {
                    points.push((c as f64 + 0.5) * s);
                    points.push((self.height - r) as f64 * s - 0.5 * s);
                    weights.push(w);
                }
            }
        }
        Ok(DiscreteMeasure::new(2, points, weights)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use attrep_core::measures::WeightedPoints;

    #[test]
    fn single_black_pixel() {
        let img = PgmImage::parse(b"P2\n1 1\n255\n0\n").unwrap();
        assert_eq!(img.masses().unwrap(), vec![1.0]);
        let d = img.to_discrete().unwrap();
        assert_eq!(d.point(0), &[0.5, 0.5]);
    }

    #[test]
    fn white_carries_nothing() {
        let img = PgmImage::parse(b"P2 2 1 255 0 255").unwrap();
        assert_eq!(img.masses().unwrap(), vec![1.0, 0.0]);
        assert_eq!(img.to_discrete().unwrap().len(), 1);
    }

    #[test]
    fn gray_levels_scale_linearly() {
        let img = PgmImage::parse(b"P2\n# comment\n2 1\n255\n0 128\n").unwrap();
        let m = img.masses().unwrap();
        assert!((m[0] - 255.0 / 382.0).abs() < 1e-15);
        assert!((m[1] - 127.0 / 382.0).abs() < 1e-15);
    }

    #[test]
    fn binary_raster_one_and_two_bytes() {
        let mut data = b"P5\n2 2\n255\n".to_vec();
        data.extend([0u8, 255, 255, 0]);
        let img = PgmImage::parse(&data).unwrap();
        assert_eq!(img.pixels, vec![0, 255, 255, 0]);
        let mut wide = b"P5 1 2 65535\n".to_vec();
        wide.extend([0x01, 0x00, 0xff, 0xff]);
        let img = PgmImage::parse(&wide).unwrap();
        assert_eq!(img.pixels, vec![256, 65535]);
    }

    #[test]
    fn grid_orientation_puts_the_top_row_up() {
        // dark pixel in the top-left corner
        let img = PgmImage::parse(b"P2 2 2 1 0 1 1 1").unwrap();
        let g = img.to_grid().unwrap();
        assert_eq!(g.shape, vec![2, 2]);
        // cell (x = 0, y = 1)
        assert!((g.cells[1] - 4.0).abs() < 1e-12);
        assert!((g.mass() - 1.0).abs() < 1e-12);
        let d = img.to_discrete().unwrap();
        assert_eq!(d.point(0), &[0.25, 0.75]);
    }

    #[test]
    fn malformed_headers() {
        assert!(PgmImage::parse(b"P3 1 1 255 0").is_err());
        assert!(PgmImage::parse(b"P2 1 1").is_err());
        assert!(PgmImage::parse(b"P2 1 1 70000 0").is_err());
        assert!(PgmImage::parse(b"P2 2 1 255 0").is_err());
        assert!(PgmImage::parse(b"P2 1 1 255 300").is_err());
        assert!(PgmImage::parse(b"P5 2 1 255\n\x00").is_err());
        assert!(PgmImage::parse(b"P2 1 1 255 255").unwrap().masses().is_err());
    }
}
