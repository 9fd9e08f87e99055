use std::fmt::Write as _;
use std::path::Path;

use crate::error::{NdrError, Result};
use crate::tensor::Tensor;

pub const CHANNELS: usize = 3;

/// RGB image with values in `[0, 1]`, stored row-major as `[H, W, 3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width * CHANNELS {
            return Err(NdrError::shape(
                "image",
                format!("{height}x{width}x{CHANNELS} needs {} values, got {}", height * width * CHANNELS, data.len()),
            ));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self { height, width, data: vec![value; height * width * CHANNELS] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                for c in 0..CHANNELS {
                    data.push(f(y, x, c));
                }
            }
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * CHANNELS + c]
    }

    pub fn clamp_unit(mut self) -> Self {
        self.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        self
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[self.height, self.width, CHANNELS], self.data.clone()).expect("image dims are valid")
    }

    /// Accepts an `[H, W, 3]` tensor; values are copied as-is (no clamping).
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match *t.shape() {
            [h, w, CHANNELS] => Self::new(h, w, t.data().to_vec()),
            ref s => Err(NdrError::shape("image", format!("expected [H, W, 3], got {s:?}"))),
        }
    }

    /// Top-left `h x w` window starting at `(y0, x0)`.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Self> {
        if y0 + h > self.height || x0 + w > self.width || h == 0 || w == 0 {
            return Err(NdrError::shape("crop", format!("{h}x{w}@({y0},{x0}) outside {}x{}", self.height, self.width)));
        }
        Ok(Self::from_fn(h, w, |y, x, c| self.get(y0 + y, x0 + x, c)))
    }

    /// Pads bottom and right edges by replication up to the given size.
    pub fn pad_to(&self, h: usize, w: usize) -> Self {
        Self::from_fn(h, w, |y, x, c| self.get(y.min(self.height - 1), x.min(self.width - 1), c))
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }

    fn from_bytes(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(height, width, bytes.iter().map(|&b| f64::from(b) / 255.0).collect())
    }

    /// Writes 8-bit RGB. `.ppm` selects plain-text PPM, anything else PNG.
    pub fn save(&self, path: &Path) -> Result<()> {
        if is_ppm(path) {
            return std::fs::write(path, self.to_ppm()).map_err(|e| NdrError::io(path, e));
        }
        let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.to_bytes())
            .expect("buffer length matches dimensions");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| NdrError::Image { path: path.to_owned(), detail: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self> {
        if is_ppm(path) {
            let text = std::fs::read_to_string(path).map_err(|e| NdrError::io(path, e))?;
            return Self::from_ppm(&text).map_err(|detail| NdrError::Image { path: path.to_owned(), detail });
        }
        let img = image::open(path).map_err(|e| NdrError::Image { path: path.to_owned(), detail: e.to_string() })?;
        let rgb = img.to_rgb8();
        Self::from_bytes(rgb.height() as usize, rgb.width() as usize, rgb.as_raw())
    }

    pub fn to_ppm(&self) -> String {
        let mut out = format!("P3\n{} {}\n255\n", self.width, self.height);
        for row in self.to_bytes().chunks(self.width * CHANNELS) {
            let line: Vec<String> = row.iter().map(u8::to_string).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn from_ppm(text: &str) -> std::result::Result<Self, String> {
        let mut tokens = text.lines().map(|l| l.split('#').next().unwrap_or("")).flat_map(str::split_whitespace);
        if tokens.next() != Some("P3") {
            return Err("not a plain PPM (P3) file".into());
        }
        let mut next_num = |what: &str| -> std::result::Result<usize, String> {
            tokens
                .next()
                .ok_or_else(|| format!("missing {what}"))?
                .parse::<usize>()
                .map_err(|e| format!("bad {what}: {e}"))
        };
        let width = next_num("width")?;
        let height = next_num("height")?;
        let maxval = next_num("maxval")?;
        if maxval == 0 || maxval > 65535 {
            return Err(format!("unsupported maxval {maxval}"));
        }
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for _ in 0..width * height * CHANNELS {
            let v = next_num("sample")?;
            if v > maxval {
                return Err(format!("sample {v} exceeds maxval {maxval}"));
            }
            data.push(v as f64 / maxval as f64);
        }
        Self::new(height, width, data).map_err(|e| e.to_string())
    }
}

fn is_ppm(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ppm"))
}
