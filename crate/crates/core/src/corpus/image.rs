use ::image::imageops::FilterType;
use ::image::{ImageFormat, RgbImage};
use ndarray::Array3;

use crate::error::{Error, Result};

pub const DEFAULT_IMAGE_SIZE: usize = 300;

/// `H × W × 3` pixels in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedImage {
    pub pixels: Array3<f32>,
}

impl PreprocessedImage {
    pub fn from_rgb(img: &RgbImage) -> Self {
        let (w, h) = img.dimensions();
        let pixels = Array3::from_shape_fn((h as usize, w as usize, 3), |(y, x, c)| {
            f32::from(img.get_pixel(x as u32, y as u32)[c]) / 127.5 - 1.0
        });
        Self { pixels }
    }

    pub fn filled(size: usize, value: f32) -> Self {
        Self {
            pixels: Array3::from_elem((size, size, 3), value),
        }
    }

    pub fn height(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().1
    }

    /// Quantises back to 8-bit RGB.
    pub fn to_rgb(&self) -> RgbImage {
        let (h, w, _) = self.pixels.dim();
        RgbImage::from_fn(w as u32, h as u32, |x, y| {
            let px = |c| {
                let v = self.pixels[[y as usize, x as usize, c]];
                ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
            };
            ::image::Rgb([px(0), px(1), px(2)])
        })
    }

    pub fn to_png(&self) -> Vec<u8> {
        let mut buf = std::io::Cursor::new(Vec::new());
        self.to_rgb()
            .write_to(&mut buf, ImageFormat::Png)
            .expect("PNG encoding to memory");
        buf.into_inner()
    }
}

/// Decodes, bilinearly resizes to `size × size` and maps `[0, 255]` to `[-1, 1]`.
pub fn preprocess_image(bytes: &[u8], size: usize) -> Result<PreprocessedImage> {
    if size == 0 {
        return Err(Error::InvalidArgument("image size must be positive".into()));
    }
    let img = ::image::load_from_memory(bytes)
        .map_err(|e| Error::UndecodableImage(e.to_string()))?
        .to_rgb8();
    let side = size as u32;
    let img = if img.dimensions() == (side, side) {
        img
    } else {
        ::image::imageops::resize(&img, side, side, FilterType::Triangle)
    };
    Ok(PreprocessedImage::from_rgb(&img))
}
