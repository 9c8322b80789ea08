//! Planar floating-point images, file I/O and colour conversion.
//!
//! Every sample lives in `[0, 1]` while inside the crate. Quantization to
//! 8 bits happens only in [`load_image`] and [`save_image`].

use std::path::Path;

use image::{DynamicImage, GrayImage as Luma8Image, ImageBuffer, RgbImage};

use crate::error::{Error, Result};

/// Border handling for windowed operations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PadMode {
    /// Out-of-range coordinates are clamped to the nearest edge pixel.
    #[default]
    Replicate,
}

impl PadMode {
    #[inline]
    pub fn index(self, i: isize, len: usize) -> usize {
        match self {
            PadMode::Replicate => i.clamp(0, len as isize - 1) as usize,
        }
    }
}

/// Read access shared by every single-channel raster in the crate.
pub trait Plane {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn samples(&self) -> &[f64];

    #[inline]
    fn at(&self, x: usize, y: usize) -> f64 {
        self.samples()[y * self.width() + x]
    }

    /// Sample with replicate padding.
    #[inline]
    fn at_padded(&self, x: isize, y: isize) -> f64 {
        let xi = PadMode::Replicate.index(x, self.width());
        let yi = PadMode::Replicate.index(y, self.height());
        self.samples()[yi * self.width() + xi]
    }
}

fn check_unit(data: &[f64]) -> Result<()> {
    match data.iter().position(|s| !(0.0..=1.0).contains(s)) {
        Some(i) => Err(Error::param(format!(
            "sample {i} = {} lies outside [0, 1]",
            data[i]
        ))),
        None => Ok(()),
    }
}

/// Multi-channel planar image with samples in `[0, 1]`.
///
/// Channel `c` occupies `data[c * w * h .. (c + 1) * w * h]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param("image dimensions must be non-zero"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::param(format!(
                "expected 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::param(format!(
                "data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        check_unit(&data)?;
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds an image from a per-pixel closure returning one value per channel.
    /// Values are clamped into `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = vec![0.0; width * height * channels];
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data[c * width * height + y * width + x] = f(x, y, c).clamp(0.0, 1.0);
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    /// Stacks three equally sized planes into an RGB image.
    pub fn from_planes(r: &GrayImage, g: &GrayImage, b: &GrayImage) -> Result<Self> {
        if r.dims() != g.dims() || r.dims() != b.dims() {
            return Err(Error::param("plane dimensions differ"));
        }
        let mut data = Vec::with_capacity(r.data.len() * 3);
        data.extend_from_slice(&r.data);
        data.extend_from_slice(&g.data);
        data.extend_from_slice(&b.data);
        Self::new(r.width, r.height, 3, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    /// Copies channel `c` out as a gray image.
    pub fn channel(&self, c: usize) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.plane(c).to_vec(),
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[c * self.width * self.height + y * self.width + x]
    }
}

impl From<GrayImage> for RasterImage {
    fn from(g: GrayImage) -> Self {
        RasterImage {
            width: g.width,
            height: g.height,
            channels: 1,
            data: g.data,
        }
    }
}

/// Single-channel image with samples in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param("image dimensions must be non-zero"));
        }
        if data.len() != width * height {
            return Err(Error::param(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        check_unit(&data)?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Values are clamped into `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self::new(width, height, data)
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Clamps every sample into `[0, 1]` and maps NaN to 0.
    pub(crate) fn from_raw_clamped(width: usize, height: usize, mut data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        for s in &mut data {
            *s = if s.is_nan() { 0.0 } else { s.clamp(0.0, 1.0) };
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Swaps rows and columns.
    pub fn transpose(&self) -> GrayImage {
        let mut data = vec![0.0; self.data.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                data[x * self.height + y] = self.data[y * self.width + x];
            }
        }
        GrayImage {
            width: self.height,
            height: self.width,
            data,
        }
    }
}

impl Plane for GrayImage {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn samples(&self) -> &[f64] {
        &self.data
    }
}

fn format_error(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(source) => Error::io(path, source),
        other => Error::Format {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    }
}

fn check_extension(path: &Path) -> Result<()> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("png" | "jpg" | "jpeg" | "bmp") => Ok(()),
        _ => Err(Error::Format {
            path: path.to_path_buf(),
            message: "expected a .png, .jpg, .jpeg or .bmp file".into(),
        }),
    }
}

/// Reads a PNG, JPEG or BMP file. Grayscale files yield one channel, anything
/// else is converted to RGB (alpha is dropped).
pub fn load_image(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    check_extension(path)?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = image::load_from_memory(&bytes).map_err(|e| format_error(path, e))?;
    let gray = matches!(
        decoded.color(),
        image::ColorType::L8
            | image::ColorType::La8
            | image::ColorType::L16
            | image::ColorType::La16
    );
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    if gray {
        let buf = decoded.to_luma8();
        let data = buf.as_raw().iter().map(|&v| f64::from(v) / 255.0).collect();
        RasterImage::new(w, h, 1, data)
    } else {
        let buf = decoded.to_rgb8();
        let mut data = vec![0.0; w * h * 3];
        for (i, px) in buf.as_raw().chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * w * h + i] = f64::from(px[c]) / 255.0;
            }
        }
        RasterImage::new(w, h, 3, data)
    }
}

#[inline]
fn quantize(s: f64) -> u8 {
    (s * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Writes the image, quantizing each sample to `round(s * 255)`. The format
/// follows the file extension.
pub fn save_image(img: &RasterImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    check_extension(path)?;
    let (w, h) = (img.width as u32, img.height as u32);
    let n = img.width * img.height;
    let dynamic = if img.channels == 1 {
        let raw: Vec<u8> = img.data.iter().map(|&s| quantize(s)).collect();
        let buf: Luma8Image = ImageBuffer::from_raw(w, h, raw).expect("buffer size matches");
        DynamicImage::ImageLuma8(buf)
    } else {
        let mut raw = Vec::with_capacity(n * 3);
        for i in 0..n {
            for c in 0..3 {
                raw.push(quantize(img.data[c * n + i]));
            }
        }
        let buf: RgbImage = ImageBuffer::from_raw(w, h, raw).expect("buffer size matches");
        DynamicImage::ImageRgb8(buf)
    };
    dynamic.save(path).map_err(|e| format_error(path, e))
}

/// Convenience wrapper for saving a single plane.
pub fn save_gray(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    save_image(&RasterImage::from(img.clone()), path)
}

/// BT.601 luma. Single-channel input passes through unchanged.
pub fn to_gray(img: &RasterImage) -> GrayImage {
    if img.channels == 1 {
        return img.channel(0);
    }
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let data = r
        .iter()
        .zip(g)
        .zip(b)
        // g + 0.299 (r - g) + 0.114 (b - g): exact on achromatic pixels
        .map(|((&r, &g), &b)| (g + 0.299 * (r - g) + 0.114 * (b - g)).clamp(0.0, 1.0))
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Hexcone RGB to HSV for one pixel; hue in `[0, 1)`.
#[inline]
pub fn rgb_to_hsv_pixel(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta <= 0.0 {
        return (0.0, s, v);
    }
    let sector = if max == r {
        (g - b) / delta
    } else if max == g {
        2.0 + (b - r) / delta
    } else {
        4.0 + (r - g) / delta
    };
    let mut h = sector / 6.0;
    if h < 0.0 {
        h += 1.0;
    }
    if h >= 1.0 {
        h -= 1.0;
    }
    (h, s, v)
}

#[inline]
pub fn hsv_to_rgb_pixel(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    if s <= 0.0 {
        return (v, v, v);
    }
    let h6 = (h - h.floor()) * 6.0;
    let sector = (h6.floor() as usize).min(5);
    let f = h6 - sector as f64;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

fn map_pixels3(
    img: &RasterImage,
    f: impl Fn(f64, f64, f64) -> (f64, f64, f64),
) -> Result<RasterImage> {
    if img.channels != 3 {
        return Err(Error::param(format!(
            "colour conversion needs 3 channels, got {}",
            img.channels
        )));
    }
    let n = img.width * img.height;
    let mut data = vec![0.0; 3 * n];
    for i in 0..n {
        let (a, b, c) = f(img.data[i], img.data[n + i], img.data[2 * n + i]);
        data[i] = a.clamp(0.0, 1.0);
        data[n + i] = b.clamp(0.0, 1.0);
        data[2 * n + i] = c.clamp(0.0, 1.0);
    }
    Ok(RasterImage {
        width: img.width,
        height: img.height,
        channels: 3,
        data,
    })
}

/// Planes of the result are H, S, V with H normalized to `[0, 1)`.
pub fn rgb_to_hsv(img: &RasterImage) -> Result<RasterImage> {
    map_pixels3(img, rgb_to_hsv_pixel)
}

pub fn hsv_to_rgb(img: &RasterImage) -> Result<RasterImage> {
    map_pixels3(img, hsv_to_rgb_pixel)
}

/// Affine stretch to `[0, 1]`; a constant input maps to all zeros.
pub fn normalize_minmax<P: Plane + ?Sized>(g: &P) -> GrayImage {
    let s = g.samples();
    let (min, max) = s
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = max - min;
    let data = if range > 0.0 && range.is_finite() {
        s.iter()
            .map(|&v| ((v - min) / range).clamp(0.0, 1.0))
            .collect()
    } else {
        vec![0.0; s.len()]
    };
    GrayImage {
        width: g.width(),
        height: g.height(),
        data,
    }
}

/// Normalized 1-D Gaussian kernel with radius `ceil(3 sigma)`.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable convolution of an unconstrained real field with replicate padding.
pub(crate) fn convolve_separable(
    data: &[f64],
    width: usize,
    height: usize,
    kernel: &[f64],
) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let pad = PadMode::Replicate;
    let mut tmp = vec![0.0; data.len()];
    for y in 0..height {
        let row = &data[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (k, &wt) in kernel.iter().enumerate() {
                acc += wt * row[pad.index(x as isize + k as isize - r, width)];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; data.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, &wt) in kernel.iter().enumerate() {
                acc += wt * tmp[pad.index(y as isize + k as isize - r, height) * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}
