use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::TextureImage;
use crate::error::{CoreError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Uniform zoom factor range applied before cropping.
    pub scale_range: (f32, f32),
    pub crop: usize,
    /// Random crop position; `false` takes the centered crop.
    pub random_crop: bool,
    pub hflip_prob: f32,
    pub vflip_prob: f32,
    /// Rotation angle drawn uniformly from `±rotation_deg`.
    pub rotation_deg: f32,
    pub erase_prob: f32,
    /// Erased fraction of the image area.
    pub erase_area: (f32, f32),
    /// Erased rectangle aspect ratio (height / width), sampled log-uniformly.
    pub erase_aspect: (f32, f32),
    /// Beta(α, α) concentration for mixup; 0 disables mixing.
    pub mixup_alpha: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            scale_range: (1.0, 1.3),
            crop: 128,
            random_crop: true,
            hflip_prob: 0.5,
            vflip_prob: 0.5,
            rotation_deg: 180.0,
            erase_prob: 0.5,
            erase_area: (0.02, 0.33),
            erase_aspect: (0.3, 3.3),
            mixup_alpha: 0.2,
        }
    }
}

impl AugmentConfig {
    /// Centered crop with every random transform disabled.
    pub fn identity(crop: usize) -> Self {
        Self {
            scale_range: (1.0, 1.0),
            crop,
            random_crop: false,
            hflip_prob: 0.0,
            vflip_prob: 0.0,
            rotation_deg: 0.0,
            erase_prob: 0.0,
            mixup_alpha: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |d: &str| Err(CoreError::config("augmentation config", d));
        let (lo, hi) = self.scale_range;
        if !(lo >= 1.0 && hi >= lo && hi.is_finite()) {
            return bad("scale range must satisfy 1 <= low <= high");
        }
        if self.crop == 0 {
            return bad("crop size must be positive");
        }
        for p in [self.hflip_prob, self.vflip_prob, self.erase_prob] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        if !(self.rotation_deg >= 0.0 && self.rotation_deg <= 180.0) {
            return bad("rotation range must lie in [0, 180] degrees");
        }
        let (a0, a1) = self.erase_area;
        if !(a0 > 0.0 && a1 >= a0 && a1 < 1.0) {
            return bad("erase area range must satisfy 0 < low <= high < 1");
        }
        let (r0, r1) = self.erase_aspect;
        if !(r0 > 0.0 && r1 >= r0 && r1.is_finite()) {
            return bad("erase aspect range must be positive and ordered");
        }
        if !(self.mixup_alpha >= 0.0 && self.mixup_alpha.is_finite()) {
            return bad("mixup alpha must be non-negative");
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f32, hi: f32) -> f32 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Zoom → crop → flips → rotation (reflect-padded) → random erasing.
/// Deterministic in `seed`.
pub fn augment(img: &TextureImage, cfg: &AugmentConfig, seed: u64) -> Result<TextureImage> {
    cfg.validate()?;
    if img.width < cfg.crop || img.height < cfg.crop {
        return Err(CoreError::Dimension(format!(
            "{}x{} image is smaller than the {} crop",
            img.width, img.height, cfg.crop
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = uniform(&mut rng, cfg.scale_range.0, cfg.scale_range.1);
    let w = ((img.width as f32 * scale).round() as usize).max(cfg.crop);
    let h = ((img.height as f32 * scale).round() as usize).max(cfg.crop);
    let zoomed = img.resize(w, h);
    let (x, y) = if cfg.random_crop {
        (rng.random_range(0..=w - cfg.crop), rng.random_range(0..=h - cfg.crop))
    } else {
        ((w - cfg.crop) / 2, (h - cfg.crop) / 2)
    };
    let mut out = zoomed.crop(x, y, cfg.crop, cfg.crop)?;
    if rng.random::<f32>() < cfg.hflip_prob {
        out = flip(&out, true);
    }
    if rng.random::<f32>() < cfg.vflip_prob {
        out = flip(&out, false);
    }
    if cfg.rotation_deg > 0.0 {
        let angle = uniform(&mut rng, -cfg.rotation_deg, cfg.rotation_deg);
        out = rotate(&out, angle.to_radians());
    }
    if rng.random::<f32>() < cfg.erase_prob {
        erase(&mut out, cfg, &mut rng);
    }
    Ok(out)
}

fn flip(img: &TextureImage, horizontal: bool) -> TextureImage {
    let (w, h) = (img.width, img.height);
    let mut data = Vec::with_capacity(img.data.len());
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = if horizontal { (w - 1 - x, y) } else { (x, h - 1 - y) };
            data.extend_from_slice(&img.pixel(sx, sy));
        }
    }
    TextureImage::new(w, h, data).expect("same dimensions")
}

/// Mirrors a coordinate into `[0, n - 1]` (whole-sample symmetric).
fn reflect(mut v: f32, n: usize) -> f32 {
    let max = (n - 1) as f32;
    if max == 0.0 {
        return 0.0;
    }
    let period = 2.0 * max;
    v = v.rem_euclid(period);
    if v > max {
        period - v
    } else {
        v
    }
}

/// Rotation about the image center with bilinear sampling.
fn rotate(img: &TextureImage, angle: f32) -> TextureImage {
    let (w, h) = (img.width, img.height);
    let (cx, cy) = ((w as f32 - 1.0) / 2.0, (h as f32 - 1.0) / 2.0);
    let (sin, cos) = angle.sin_cos();
    let mut data = Vec::with_capacity(img.data.len());
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f32 - cx, y as f32 - cy);
            let sx = reflect(cx + cos * dx + sin * dy, w);
            let sy = reflect(cy - sin * dx + cos * dy, h);
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (tx, ty) = (sx - x0 as f32, sy - y0 as f32);
            let (a, b, c, d) = (img.pixel(x0, y0), img.pixel(x1, y0), img.pixel(x0, y1), img.pixel(x1, y1));
            for ch in 0..3 {
                let top = a[ch] * (1.0 - tx) + b[ch] * tx;
                let bottom = c[ch] * (1.0 - tx) + d[ch] * tx;
                data.push((top * (1.0 - ty) + bottom * ty).clamp(0.0, 1.0));
            }
        }
    }
    TextureImage::new(w, h, data).expect("same dimensions")
}

/// Replaces a random rectangle with uniform noise; gives up after ten
/// rectangles that do not fit.
fn erase(img: &mut TextureImage, cfg: &AugmentConfig, rng: &mut ChaCha8Rng) {
    let area = (img.width * img.height) as f32;
    for _ in 0..10 {
        let target = area * uniform(rng, cfg.erase_area.0, cfg.erase_area.1);
        let log_aspect = uniform(rng, cfg.erase_aspect.0.ln(), cfg.erase_aspect.1.ln());
        let aspect = log_aspect.exp();
        let eh = (target * aspect).sqrt().round() as usize;
        let ew = (target / aspect).sqrt().round() as usize;
        if eh == 0 || ew == 0 || eh >= img.height || ew >= img.width {
            continue;
        }
        let x0 = rng.random_range(0..=img.width - ew);
        let y0 = rng.random_range(0..=img.height - eh);
        for y in y0..y0 + eh {
            for x in x0..x0 + ew {
                let i = (y * img.width + x) * 3;
                for v in &mut img.data[i..i + 3] {
                    *v = rng.random::<f32>();
                }
            }
        }
        return;
    }
}

/// Convex combination `λ·a + (1 − λ)·b` of two images and their label
/// distributions.
///
/// The heavier side is always taken as the primary operand, so
/// `mixup(a, b, λ)` and `mixup(b, a, 1 − λ)` evaluate the same expression
/// and agree bit for bit.
pub fn mixup(
    a: (&TextureImage, &[f32]),
    b: (&TextureImage, &[f32]),
    lambda: f64,
) -> Result<(TextureImage, Vec<f32>)> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(CoreError::Range(format!("mixup weight {lambda} outside [0, 1]")));
    }
    if (a.0.width, a.0.height) != (b.0.width, b.0.height) || a.1.len() != b.1.len() {
        return Err(CoreError::Dimension("mixup operands differ in shape".into()));
    }
    let (p, q, w) = if lambda >= 0.5 { (a, b, lambda) } else { (b, a, 1.0 - lambda) };
    let mix = |x: &[f32], y: &[f32]| -> Vec<f32> {
        x.iter()
            .zip(y)
            .map(|(&u, &v)| (w * u as f64 + (1.0 - w) * v as f64) as f32)
            .collect()
    };
    let img = TextureImage::new(p.0.width, p.0.height, mix(&p.0.data, &q.0.data))?;
    Ok((img, mix(p.1, q.1)))
}
