//! Image preprocessing: bilinear resize, horizontal flip, random erasing and
//! per-channel standardization.

use serde::{Deserialize, Serialize};

use super::RasterImage;
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Per-channel RGB mean of the usual ImageNet-pretraining statistics.
pub const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

const ERASE_ATTEMPTS: usize = 10;

/// Bilinear resize with corner-aligned sampling: output corners coincide with
/// input corners.
pub fn resize(image: &RasterImage, height: usize, width: usize) -> Result<RasterImage> {
    if height == 0 || width == 0 {
        return Err(Error::invalid("resize target dimensions must be nonzero"));
    }
    if height == image.height() && width == image.width() {
        return Ok(image.clone());
    }
    let coord = |out: usize, n_out: usize, n_in: usize| -> (usize, usize, f64) {
        let src = if n_out == 1 {
            (n_in - 1) as f64 / 2.0
        } else {
            out as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
        };
        let lo = (src.floor() as usize).min(n_in - 1);
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, src - lo as f64)
    };
    let c = image.channels();
    let mut data = Vec::with_capacity(height * width * c);
    for y in 0..height {
        let (y0, y1, fy) = coord(y, height, image.height());
        for x in 0..width {
            let (x0, x1, fx) = coord(x, width, image.width());
            for ch in 0..c {
                let top = image.get(y0, x0, ch) * (1.0 - fx) + image.get(y0, x1, ch) * fx;
                let bottom = image.get(y1, x0, ch) * (1.0 - fx) + image.get(y1, x1, ch) * fx;
                data.push((top * (1.0 - fy) + bottom * fy).clamp(0.0, 255.0));
            }
        }
    }
    RasterImage::new(height, width, c, data)
}

/// Mirrors the image left-right with probability `p`.
pub fn random_flip(image: &RasterImage, p: f64, rng: &mut RngStream) -> Result<RasterImage> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("flip probability {p} outside [0, 1]")));
    }
    if !rng.bernoulli(p) {
        return Ok(image.clone());
    }
    let mut out = image.clone();
    let w = image.width();
    for y in 0..image.height() {
        for x in 0..w {
            for c in 0..image.channels() {
                out.set(y, x, c, image.get(y, w - 1 - x, c));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErasingParams {
    pub probability: f64,
    /// Range of the erased area as a fraction of the image area.
    pub area: (f64, f64),
    /// Range of the erased rectangle's height / width ratio.
    pub aspect: (f64, f64),
}

impl Default for ErasingParams {
    fn default() -> Self {
        Self {
            probability: 0.5,
            area: (0.02, 0.4),
            aspect: (0.3, 3.33),
        }
    }
}

impl ErasingParams {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.area;
        let (alo, ahi) = self.aspect;
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::invalid("erasing probability outside [0, 1]"));
        }
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::invalid("erasing area range must satisfy 0 < lo <= hi <= 1"));
        }
        if !(alo > 0.0 && alo <= ahi && ahi.is_finite()) {
            return Err(Error::invalid("erasing aspect range must satisfy 0 < lo <= hi"));
        }
        Ok(())
    }
}

/// With probability `params.probability`, fills one random rectangle with
/// independent uniform values in `[0, 255]`.
///
/// Rectangles whose rounded size leaves the image or the area range are
/// redrawn up to 10 times; after that the image is returned unchanged.
pub fn random_erase(image: &RasterImage, params: &ErasingParams, rng: &mut RngStream) -> Result<RasterImage> {
    params.validate()?;
    if !rng.bernoulli(params.probability) {
        return Ok(image.clone());
    }
    let (h_img, w_img) = (image.height(), image.width());
    let area = (h_img * w_img) as f64;
    for _ in 0..ERASE_ATTEMPTS {
        let target = rng.uniform_range(params.area.0, params.area.1) * area;
        let aspect = rng.uniform_range(params.aspect.0, params.aspect.1);
        let h = (target * aspect).sqrt().round() as usize;
        let w = (target / aspect).sqrt().round() as usize;
        if h == 0 || w == 0 || h >= h_img || w >= w_img {
            continue;
        }
        let frac = (h * w) as f64 / area;
        if frac < params.area.0 || frac > params.area.1 {
            continue;
        }
        let top = rng.next_index(h_img - h + 1);
        let left = rng.next_index(w_img - w + 1);
        let mut out = image.clone();
        for y in top..top + h {
            for x in left..left + w {
                for c in 0..image.channels() {
                    out.set(y, x, c, rng.uniform_range(0.0, 255.0));
                }
            }
        }
        return Ok(out);
    }
    Ok(image.clone())
}

fn check_stats(image_channels: usize, mean: &[f64], std: &[f64]) -> Result<()> {
    if mean.len() != image_channels || std.len() != image_channels {
        return Err(Error::ShapeMismatch {
            context: "normalization statistics",
            expected: image_channels,
            actual: mean.len().min(std.len()),
        });
    }
    if std.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::invalid("normalization std entries must be > 0"));
    }
    Ok(())
}

/// `(v / 255 − mean[c]) / std[c]`, flattened channel-major: index `c·H·W + y·W + x`.
pub fn normalize(image: &RasterImage, mean: &[f64], std: &[f64]) -> Result<Vec<f64>> {
    check_stats(image.channels(), mean, std)?;
    let (h, w) = (image.height(), image.width());
    let mut out = vec![0.0; h * w * image.channels()];
    for c in 0..image.channels() {
        for y in 0..h {
            for x in 0..w {
                out[c * h * w + y * w + x] = (image.get(y, x, c) / 255.0 - mean[c]) / std[c];
            }
        }
    }
    Ok(out)
}

/// Inverse of [`normalize`].
pub fn denormalize(values: &[f64], height: usize, width: usize, mean: &[f64], std: &[f64]) -> Result<RasterImage> {
    let channels = mean.len();
    check_stats(channels, mean, std)?;
    if values.len() != height * width * channels {
        return Err(Error::ShapeMismatch {
            context: "denormalize input",
            expected: height * width * channels,
            actual: values.len(),
        });
    }
    let mut data = vec![0.0; values.len()];
    for c in 0..channels {
        for y in 0..height {
            for x in 0..width {
                let v = (values[c * height * width + y * width + x] * std[c] + mean[c]) * 255.0;
                data[(y * width + x) * channels + c] = v.clamp(0.0, 255.0);
            }
        }
    }
    RasterImage::new(height, width, channels, data)
}

/// How image samples become network inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImagePipeline {
    pub height: usize,
    pub width: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub flip_probability: f64,
    pub erasing: ErasingParams,
}

impl Default for ImagePipeline {
    fn default() -> Self {
        Self {
            height: 32,
            width: 16,
            mean: IMAGENET_MEAN.to_vec(),
            std: IMAGENET_STD.to_vec(),
            flip_probability: 0.5,
            erasing: ErasingParams::default(),
        }
    }
}

impl ImagePipeline {
    pub fn input_dim(&self) -> usize {
        self.height * self.width * self.mean.len()
    }

    /// Resize, then (training only) erase and flip, then standardize.
    pub fn prepare(&self, image: &RasterImage, augment: Option<&mut RngStream>) -> Result<Vec<f64>> {
        let mut img = resize(image, self.height, self.width)?;
        if let Some(rng) = augment {
            img = random_erase(&img, &self.erasing, rng)?;
            img = random_flip(&img, self.flip_probability, rng)?;
        }
        normalize(&img, &self.mean, &self.std)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_image(rng: &mut RngStream, h: usize, w: usize, c: usize) -> RasterImage {
        let data = (0..h * w * c).map(|_| rng.uniform_range(0.0, 255.0)).collect();
        RasterImage::new(h, w, c, data).unwrap()
    }

    #[test]
    fn resize_identity_and_constant() {
        let mut rng = RngStream::new(1);
        let img = random_image(&mut rng, 5, 7, 3);
        assert_eq!(resize(&img, 5, 7).unwrap(), img);
        let flat = RasterImage::filled(4, 3, 2, 77.0).unwrap();
        let out = resize(&flat, 9, 5).unwrap();
        assert!(out.data().iter().all(|&v| (v - 77.0).abs() < 1e-12));
        assert!(resize(&img, 0, 3).is_err());
    }

    #[test]
    fn resize_two_by_two_to_four_by_four() {
        // corners a=0 (top-left), b=30 (top-right), c=60, d=90; sample points at 0, 1/3, 2/3, 1
        let img = RasterImage::new(2, 2, 1, vec![0.0, 30.0, 60.0, 90.0]).unwrap();
        let out = resize(&img, 4, 4).unwrap();
        let expected = [
            [0.0, 10.0, 20.0, 30.0],
            [20.0, 30.0, 40.0, 50.0],
            [40.0, 50.0, 60.0, 70.0],
            [60.0, 70.0, 80.0, 90.0],
        ];
        for y in 0..4 {
            for x in 0..4 {
                assert!((out.get(y, x, 0) - expected[y][x]).abs() < 1e-12, "({y},{x})");
            }
        }
    }

    #[test]
    fn flip_cases() {
        let mut rng = RngStream::new(2);
        let img = random_image(&mut rng, 4, 5, 3);
        assert_eq!(random_flip(&img, 0.0, &mut rng).unwrap(), img);
        let once = random_flip(&img, 1.0, &mut rng).unwrap();
        assert_eq!(once.get(1, 0, 2), img.get(1, 4, 2));
        assert_eq!(random_flip(&once, 1.0, &mut rng).unwrap(), img);
        assert!(random_flip(&img, 1.5, &mut rng).is_err());
    }

    #[test]
    fn flip_rate() {
        let mut rng = RngStream::new(3);
        let img = RasterImage::new(1, 2, 1, vec![0.0, 1.0]).unwrap();
        let n = 10_000;
        let flipped = (0..n)
            .filter(|_| random_flip(&img, 0.5, &mut rng).unwrap().get(0, 0, 0) == 1.0)
            .count();
        let rate = flipped as f64 / n as f64;
        assert!((0.48..=0.52).contains(&rate), "rate {rate}");
    }

    #[test]
    fn erase_cases() {
        let mut rng = RngStream::new(4);
        let img = RasterImage::filled(32, 16, 3, 300.0 / 3.0).unwrap();
        let never = ErasingParams { probability: 0.0, ..Default::default() };
        assert_eq!(random_erase(&img, &never, &mut rng).unwrap(), img);

        let always = ErasingParams { probability: 1.0, ..Default::default() };
        let mut erased_any = 0;
        for _ in 0..100 {
            let out = random_erase(&img, &always, &mut rng).unwrap();
            assert!(out.data().iter().all(|v| (0.0..=255.0).contains(v)));
            let changed = (0..32)
                .flat_map(|y| (0..16).map(move |x| (y, x)))
                .filter(|&(y, x)| (0..3).any(|c| out.get(y, x, c) != img.get(y, x, c)))
                .count();
            if changed > 0 {
                erased_any += 1;
                let frac = changed as f64 / (32.0 * 16.0);
                assert!((always.area.0..=always.area.1).contains(&frac), "fraction {frac}");
            }
        }
        assert!(erased_any > 90);
    }

    #[test]
    fn erase_degenerate_geometry_is_noop() {
        let mut rng = RngStream::new(5);
        let img = RasterImage::filled(2, 2, 1, 5.0).unwrap();
        let p = ErasingParams { probability: 1.0, area: (0.9, 1.0), aspect: (1.0, 1.0) };
        assert_eq!(random_erase(&img, &p, &mut rng).unwrap(), img);
        let bad = ErasingParams { area: (0.5, 0.1), ..Default::default() };
        assert!(random_erase(&img, &bad, &mut rng).is_err());
    }

    #[test]
    fn normalize_cases() {
        let mut rng = RngStream::new(6);
        let img = random_image(&mut rng, 3, 4, 3);
        let raw = normalize(&img, &[0.0; 3], &[1.0; 3]).unwrap();
        // channel-major layout
        assert_eq!(raw[12 + 4 + 2], img.get(1, 2, 1) / 255.0);

        let mean = [0.2, 0.4, 0.6];
        let flat = RasterImage::new(1, 1, 3, vec![0.2 * 255.0, 0.4 * 255.0, 0.6 * 255.0]).unwrap();
        let z = normalize(&flat, &mean, &[0.5; 3]).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-15));

        let values = normalize(&img, &IMAGENET_MEAN, &IMAGENET_STD).unwrap();
        let back = denormalize(&values, 3, 4, &IMAGENET_MEAN, &IMAGENET_STD).unwrap();
        for (a, b) in back.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(normalize(&img, &[0.0; 3], &[1.0, 0.0, 1.0]).is_err());
        assert!(normalize(&img, &[0.0; 2], &[1.0; 2]).is_err());
    }

    #[test]
    fn pipeline_output_length() {
        let mut rng = RngStream::new(7);
        let img = random_image(&mut rng, 64, 32, 3);
        let pipe = ImagePipeline::default();
        let train = pipe.prepare(&img, Some(&mut rng)).unwrap();
        let eval = pipe.prepare(&img, None).unwrap();
        assert_eq!(train.len(), pipe.input_dim());
        assert_eq!(eval, pipe.prepare(&img, None).unwrap());
    }
}
