use std::path::Path;

use crate::error::{Error, Result};

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

/// 8-bit grayscale image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::contract(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        GrayImage {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    /// Loads a PNG, converting color to Rec. 601 luma.
    pub fn from_png(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::input(format!("frame image {} not found", path.display())));
        }
        let img = image::open(path)
            .map_err(|e| Error::input(format!("cannot decode {}: {e}", path.display())))?
            .to_rgb8();
        let (w, h) = img.dimensions();
        let pixels = img
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0;
                (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64).round().clamp(0.0, 255.0) as u8
            })
            .collect();
        Self::new(w as usize, h as usize, pixels)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        image::save_buffer(
            path,
            &self.pixels,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::L8,
        )
        .map_err(|e| Error::input(format!("cannot write {}: {e}", path.display())))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }
}

fn gaussian_taps() -> [f64; WINDOW] {
    let mut taps = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (k, t) in taps.iter_mut().enumerate() {
        let d = k as f64 - c;
        *t = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Separable Gaussian filter keeping only windows fully inside the image.
fn filter_valid(src: &[f64], w: usize, h: usize, taps: &[f64; WINDOW]) -> Vec<f64> {
    let ow = w - WINDOW + 1;
    let oh = h - WINDOW + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..WINDOW).map(|k| taps[k] * src[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..WINDOW).map(|k| taps[k] * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity over all 11x11 Gaussian windows.
pub fn ssim(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::contract(format!(
            "ssim needs equal sizes, got {}x{} and {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    if a.width < WINDOW || a.height < WINDOW {
        return Err(Error::contract(format!(
            "ssim needs images of at least {WINDOW}x{WINDOW}, got {}x{}",
            a.width, a.height
        )));
    }
    let (w, h) = (a.width, a.height);
    let taps = gaussian_taps();
    let x: Vec<f64> = a.pixels.iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = b.pixels.iter().map(|&v| v as f64).collect();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
    let mx = filter_valid(&x, w, h, &taps);
    let my = filter_valid(&y, w, h, &taps);
    let mxx = filter_valid(&prod(&x, &x), w, h, &taps);
    let myy = filter_valid(&prod(&y, &y), w, h, &taps);
    let mxy = filter_valid(&prod(&x, &y), w, h, &taps);
    let mut total = 0.0;
    for k in 0..mx.len() {
        let (ux, uy) = (mx[k], my[k]);
        let vx = mxx[k] - ux * ux;
        let vy = myy[k] - uy * uy;
        let cxy = mxy[k] - ux * uy;
        total += ((2.0 * ux * uy + C1) * (2.0 * cxy + C2)) / ((ux * ux + uy * uy + C1) * (vx + vy + C2));
    }
    Ok(total / mx.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(rng: &mut ChaCha8Rng, w: usize, h: usize) -> GrayImage {
        GrayImage::new(w, h, (0..w * h).map(|_| rng.gen()).collect()).unwrap()
    }

    #[test]
    fn identity_and_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = noise(&mut rng, 16, 13);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let c = ssim(&GrayImage::filled(12, 12, 128), &GrayImage::filled(12, 12, 64)).unwrap();
        let closed = (2.0 * 128.0 * 64.0 + C1) / (128.0f64 * 128.0 + 64.0 * 64.0 + C1);
        assert!((c - closed).abs() < 1e-12);
        assert!((c - 0.8001).abs() < 1e-3);
    }

    #[test]
    fn symmetric_and_noise_is_dissimilar() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = noise(&mut rng, 20, 20);
        let b = noise(&mut rng, 20, 20);
        let ab = ssim(&a, &b).unwrap();
        assert!((ab - ssim(&b, &a).unwrap()).abs() < 1e-12);
        assert!(ab < 0.1, "{ab}");
    }

    #[test]
    fn rejects_bad_shapes() {
        let a = GrayImage::filled(11, 11, 0);
        assert!(ssim(&a, &GrayImage::filled(12, 11, 0)).is_err());
        let small = GrayImage::filled(10, 20, 0);
        assert!(ssim(&small, &small).is_err());
        assert!(GrayImage::new(2, 2, vec![0; 3]).is_err());
    }

    #[test]
    fn png_round_trip_and_luma() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = noise(&mut rng, 12, 11);
        let p = dir.path().join("a.png");
        a.save_png(&p).unwrap();
        assert_eq!(GrayImage::from_png(&p).unwrap(), a);

        let rgb = image::RgbImage::from_pixel(2, 1, image::Rgb([200, 100, 50]));
        let q = dir.path().join("rgb.png");
        rgb.save(&q).unwrap();
        let g = GrayImage::from_png(&q).unwrap();
        assert_eq!(g.pixels(), &[124, 124]);

        assert!(matches!(
            GrayImage::from_png(&dir.path().join("missing.png")),
            Err(Error::Input(_))
        ));
    }
}
