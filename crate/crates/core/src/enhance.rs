//! Grayscale rendering of reconstructions, histogram equalization,
//! percentile contrast stretching and binary PGM output.
//!
//! Images are stored top row first, so row 0 of an image is the highest
//! `y` row of the mesh.

use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::domain::PermittivityMap;
use crate::error::{Error, Result};
use crate::fsutil;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Real,
    Imag,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Real => "real",
            Channel::Imag => "imag",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    pub channel: Channel,
    /// Field values mapped to 0 and 255.
    pub value_range: (f64, f64),
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>, channel: Channel, value_range: (f64, f64)) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(ImageGrid {
            width,
            height,
            pixels,
            channel,
            value_range,
        })
    }

    pub fn distinct_levels(&self) -> usize {
        histogram(&self.pixels).iter().filter(|&&c| c > 0).count()
    }

    fn with_pixels(&self, pixels: Vec<u8>) -> Self {
        ImageGrid {
            pixels,
            ..self.clone()
        }
    }
}

/// `floor(x + 0.5)` clamped to the byte range.
fn round_half_up(x: f64) -> u8 {
    (x + 0.5).floor().clamp(0.0, 255.0) as u8
}

fn histogram(pixels: &[u8]) -> [usize; 256] {
    let mut h = [0; 256];
    for &p in pixels {
        h[p as usize] += 1;
    }
    h
}

/// Linear map of one component of a uniform-mesh map onto [0, 255] over its
/// own min/max. A constant field maps to 128.
pub fn to_grayscale(map: &PermittivityMap, channel: Channel) -> Result<ImageGrid> {
    to_grayscale_in(map, channel, None)
}

/// As [`to_grayscale`], but with an optional fixed `(lo, hi)` range;
/// values outside it saturate.
pub fn to_grayscale_in(map: &PermittivityMap, channel: Channel, range: Option<(f64, f64)>) -> Result<ImageGrid> {
    let grid = *map
        .mesh()
        .as_uniform()
        .ok_or_else(|| Error::Mesh("images require a uniform mesh".into()))?;
    if map.values().is_empty() {
        return Err(Error::Dimension("cannot render an empty map".into()));
    }
    let component = |i: usize| {
        let v = map.values()[i];
        match channel {
            Channel::Real => v.re,
            Channel::Imag => v.im,
        }
    };
    let (lo, hi) = match range {
        Some((lo, hi)) if lo < hi => (lo, hi),
        Some((lo, hi)) => {
            return Err(Error::Parameter(format!("image range [{lo}, {hi}] is empty")));
        }
        None => (0..map.values().len())
            .map(component)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v))),
    };
    let mut pixels = Vec::with_capacity(grid.len());
    for row in (0..grid.ny).rev() {
        for col in 0..grid.nx {
            let v = component(grid.index(col, row));
            pixels.push(if hi > lo {
                round_half_up((v - lo) / (hi - lo) * 255.0)
            } else {
                128
            });
        }
    }
    ImageGrid::new(grid.nx, grid.ny, pixels, channel, (lo, hi))
}

/// Classical histogram equalization
/// `g' = round((cdf(g) - cdf_min) / (N - cdf_min) * 255)`.
/// A single-level image maps entirely to 0.
pub fn equalize(image: &ImageGrid) -> ImageGrid {
    let n = image.pixels.len();
    let hist = histogram(&image.pixels);
    let mut cdf = [0usize; 256];
    let mut acc = 0;
    for (c, h) in cdf.iter_mut().zip(hist) {
        acc += h;
        *c = acc;
    }
    let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
    let lut: Vec<u8> = cdf
        .iter()
        .map(|&c| {
            if n == cdf_min {
                0
            } else {
                round_half_up((c.saturating_sub(cdf_min)) as f64 / (n - cdf_min) as f64 * 255.0)
            }
        })
        .collect();
    image.with_pixels(image.pixels.iter().map(|&p| lut[p as usize]).collect())
}

/// Percentile of the pixel values with linear interpolation between order
/// statistics.
pub fn percentile(pixels: &[u8], p: f64) -> f64 {
    if pixels.is_empty() {
        return 0.0;
    }
    let mut sorted = pixels.to_vec();
    sorted.sort_unstable();
    let rank = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] as f64 + frac * (sorted[hi] as f64 - sorted[lo] as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StretchStatus {
    Applied,
    /// The two percentiles coincided; the image was returned unchanged.
    Degenerate,
}

/// Saturating linear map of `[P_low, P_high]` onto [0, 255].
pub fn contrast_stretch(image: &ImageGrid, low: f64, high: f64) -> Result<(ImageGrid, StretchStatus)> {
    if !(0.0..=100.0).contains(&low) || !(0.0..=100.0).contains(&high) || !(low < high) {
        return Err(Error::Parameter(format!(
            "percentiles must satisfy 0 <= low < high <= 100, got {low} and {high}"
        )));
    }
    let p_low = percentile(&image.pixels, low);
    let p_high = percentile(&image.pixels, high);
    Ok(stretch_between(image, p_low, p_high))
}

/// Linear map of `[p_low, p_high]` onto [0, 255] with clamping outside.
pub fn stretch_between(image: &ImageGrid, p_low: f64, p_high: f64) -> (ImageGrid, StretchStatus) {
    if !(p_high > p_low) {
        warn!("contrast stretch: percentiles coincide at {p_low}, image left unchanged");
        return (image.clone(), StretchStatus::Degenerate);
    }
    let pixels = image
        .pixels
        .iter()
        .map(|&p| round_half_up((p as f64 - p_low) / (p_high - p_low) * 255.0))
        .collect();
    (image.with_pixels(pixels), StretchStatus::Applied)
}

/// Kolmogorov-Smirnov distance between the pixel distribution and the
/// discrete uniform distribution on 0..=255.
pub fn ks_uniform_distance(image: &ImageGrid) -> f64 {
    let n = image.pixels.len() as f64;
    let hist = histogram(&image.pixels);
    let mut acc = 0usize;
    let mut worst = 0.0_f64;
    for (g, h) in hist.iter().enumerate() {
        acc += h;
        let uniform = (g + 1) as f64 / 256.0;
        worst = worst.max((acc as f64 / n - uniform).abs());
    }
    worst
}

/// Binary (P5) graymap with the channel, value range and optional config
/// digest in header comments.
pub fn to_pgm_bytes(image: &ImageGrid, config_digest: Option<&str>) -> Vec<u8> {
    let mut header = String::from("P5\n");
    writeln!(
        header,
        "# channel {} value_range {:?} {:?}",
        image.channel.as_str(),
        image.value_range.0,
        image.value_range.1
    )
    .unwrap();
    if let Some(d) = config_digest {
        writeln!(header, "# config {d}").unwrap();
    }
    writeln!(header, "{} {}\n255", image.width, image.height).unwrap();
    let mut bytes = header.into_bytes();
    bytes.extend_from_slice(&image.pixels);
    bytes
}

pub fn write_image(image: &ImageGrid, path: &Path, config_digest: Option<&str>) -> Result<()> {
    fsutil::write_atomic(path, &to_pgm_bytes(image, config_digest))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnhanceMode {
    Equalize,
    Stretch,
    /// Stretch followed by equalization.
    StretchEqualize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnhanceConfig {
    pub mode: EnhanceMode,
    pub low_percentile: f64,
    pub high_percentile: f64,
    /// Pin the real-part grayscale range instead of using the map's min/max.
    #[serde(default)]
    pub real_range: Option<[f64; 2]>,
    #[serde(default)]
    pub imag_range: Option<[f64; 2]>,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        EnhanceConfig {
            mode: EnhanceMode::Equalize,
            low_percentile: 1.0,
            high_percentile: 99.0,
            real_range: None,
            imag_range: None,
        }
    }
}

impl EnhanceConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = (self.low_percentile, self.high_percentile);
        if !(0.0..=100.0).contains(&lo) || !(0.0..=100.0).contains(&hi) || !(lo < hi) {
            return Err(Error::Config {
                key: "enhance.low_percentile".into(),
                message: format!("need 0 <= low < high <= 100, got {lo} and {hi}"),
            });
        }
        for (key, r) in [("enhance.real_range", self.real_range), ("enhance.imag_range", self.imag_range)] {
            if let Some([a, b]) = r {
                if !(a < b) {
                    return Err(Error::Config {
                        key: key.into(),
                        message: format!("range [{a}, {b}] is empty"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn enhance(&self, image: &ImageGrid) -> Result<ImageGrid> {
        Ok(match self.mode {
            EnhanceMode::Equalize => equalize(image),
            EnhanceMode::Stretch => contrast_stretch(image, self.low_percentile, self.high_percentile)?.0,
            EnhanceMode::StretchEqualize => {
                equalize(&contrast_stretch(image, self.low_percentile, self.high_percentile)?.0)
            }
        })
    }
}

/// The four images of a reconstruction: raw and enhanced, real and
/// imaginary, with their file names.
pub fn render_set(map: &PermittivityMap, cfg: &EnhanceConfig) -> Result<Vec<(String, ImageGrid)>> {
    let mut out = Vec::with_capacity(4);
    for (channel, range) in [(Channel::Real, cfg.real_range), (Channel::Imag, cfg.imag_range)] {
        let raw = to_grayscale_in(map, channel, range.map(|[a, b]| (a, b)))?;
        let enhanced = cfg.enhance(&raw)?;
        out.push((format!("{}_raw.pgm", channel.as_str()), raw));
        out.push((format!("{}_enhanced.pgm", channel.as_str()), enhanced));
    }
    Ok(out)
}
