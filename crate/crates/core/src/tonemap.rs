//! Global and local tone-mapping operators used to render training pairs.
//!
//! Three operators are provided: Reinhard's global photographic curve,
//! Ward's visibility-matching scale factor and Durand's bilateral
//! base/detail compression. All of them gamma-encode with 2.2 and quantize
//! with `round(255 v)`.

use serde::{Deserialize, Serialize};

use crate::image::{HdrImage, LdrImage, Plane, DISPLAY_GAMMA};
use crate::{Error, Result};

/// Floor added to luminance before taking logarithms.
pub const LUM_FLOOR: f64 = 1e-6;

/// Maximum display luminance for Ward's operator, cd/m².
const WARD_DISPLAY_MAX: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operator {
    Reinhard,
    Ward,
    Durand,
}

impl Operator {
    pub const ALL: [Operator; 3] = [Operator::Reinhard, Operator::Ward, Operator::Durand];

    pub fn name(self) -> &'static str {
        match self {
            Operator::Reinhard => "reinhard",
            Operator::Ward => "ward",
            Operator::Durand => "durand",
        }
    }
}

impl std::str::FromStr for Operator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Operator::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown tone-mapping operator '{s}'")))
    }
}

impl std::fmt::Display for Operator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// White point for the Reinhard curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WhitePoint {
    /// Use the largest scaled luminance in the image.
    Auto,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TmoParams {
    pub operator: Operator,
    /// Reinhard key value.
    pub key: f64,
    pub l_white: WhitePoint,
    /// Durand target base contrast (linear ratio).
    pub base_contrast: f64,
    /// Bilateral spatial sigma in pixels; `None` means 2% of the smaller
    /// image dimension.
    pub sigma_spatial: Option<f64>,
    /// Bilateral range sigma in log10 units.
    pub sigma_range: f64,
    pub gamma: f64,
}

impl Default for TmoParams {
    fn default() -> Self {
        Self {
            operator: Operator::Reinhard,
            key: 0.18,
            l_white: WhitePoint::Auto,
            base_contrast: 50.0,
            sigma_spatial: None,
            sigma_range: 0.4,
            gamma: DISPLAY_GAMMA,
        }
    }
}

impl TmoParams {
    pub fn for_operator(operator: Operator) -> Self {
        Self {
            operator,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("tonemap.{name} must be positive, got {v}")))
            }
        };
        positive("key", self.key)?;
        if let WhitePoint::Fixed(w) = self.l_white {
            positive("l_white", w)?;
        }
        if !(self.base_contrast > 1.0 && self.base_contrast.is_finite()) {
            return Err(Error::Config(format!(
                "tonemap.base_contrast must exceed 1, got {}",
                self.base_contrast
            )));
        }
        if let Some(s) = self.sigma_spatial {
            positive("sigma_spatial", s)?;
        }
        positive("sigma_range", self.sigma_range)?;
        positive("gamma", self.gamma)
    }
}

/// Runs the operator selected in `p`.
pub fn tonemap(img: &HdrImage, p: &TmoParams) -> Result<LdrImage> {
    p.validate()?;
    match p.operator {
        Operator::Reinhard => reinhard_global(img, p),
        Operator::Ward => ward_scale(img, p),
        Operator::Durand => durand_bilateral(img, p),
    }
}

/// exp(mean(ln(Y + floor))), rejecting images without any light.
fn log_average(lum: &Plane) -> Result<f64> {
    if !lum.data().iter().any(|&y| y > 0.0) {
        return Err(Error::DegenerateLuminance);
    }
    let n = lum.data().len() as f64;
    Ok((lum.data().iter().map(|y| (y + LUM_FLOOR).ln()).sum::<f64>() / n).exp())
}

#[inline]
fn encode_channel(v: f64, gamma: f64) -> u8 {
    let v = v.clamp(0.0, 1.0).powf(1.0 / gamma);
    (255.0 * v).round() as u8
}

/// Scales each pixel's color by `ratio(i)` and display-encodes it.
fn render(img: &HdrImage, gamma: f64, ratio: impl Fn(usize) -> f64) -> Result<LdrImage> {
    let pixels = img
        .pixels()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let r = ratio(i);
            [
                encode_channel(p[0] * r, gamma),
                encode_channel(p[1] * r, gamma),
                encode_channel(p[2] * r, gamma),
            ]
        })
        .collect();
    LdrImage::new(img.width(), img.height(), pixels)
}

/// The photographic display curve `L (1 + L / Lw²) / (1 + L)`.
#[inline]
pub fn reinhard_curve(l: f64, l_white: f64) -> f64 {
    l * (1.0 + l / (l_white * l_white)) / (1.0 + l)
}

pub fn reinhard_global(img: &HdrImage, p: &TmoParams) -> Result<LdrImage> {
    let lum = img.luminance();
    let avg = log_average(&lum)?;
    let scaled: Vec<f64> = lum.data().iter().map(|y| p.key * y / avg).collect();
    let l_white = match p.l_white {
        WhitePoint::Fixed(w) => w,
        WhitePoint::Auto => scaled.iter().cloned().fold(0.0, f64::max),
    };
    render(img, p.gamma, |i| {
        let y = lum.data()[i];
        if y > 0.0 {
            reinhard_curve(scaled[i], l_white) / y
        } else {
            0.0
        }
    })
}

/// Ward's contrast-preserving scale factor for a world adaptation level
/// `l_wa` and a display whose maximum is `l_dmax`.
pub fn ward_factor(l_wa: f64, l_dmax: f64) -> f64 {
    let num = 1.219 + (l_dmax / 2.0).powf(0.4);
    let den = 1.219 + l_wa.powf(0.4);
    (num / den).powf(2.5) / l_dmax
}

pub fn ward_scale(img: &HdrImage, p: &TmoParams) -> Result<LdrImage> {
    let lum = img.luminance();
    let m = ward_factor(log_average(&lum)?, WARD_DISPLAY_MAX);
    render(img, p.gamma, |_| m)
}

pub fn durand_bilateral(img: &HdrImage, p: &TmoParams) -> Result<LdrImage> {
    let lum = img.luminance();
    if !lum.data().iter().any(|&y| y > 0.0) {
        return Err(Error::DegenerateLuminance);
    }
    let log_lum = lum.map(|y| (y + LUM_FLOOR).log10());
    let sigma_s = p
        .sigma_spatial
        .unwrap_or(0.02 * img.width().min(img.height()) as f64);
    let base = bilateral_filter(&log_lum, sigma_s, p.sigma_range);
    let (lo, hi) = base.min_max();
    if hi - lo <= 1e-12 {
        return Err(Error::DegenerateBase);
    }
    let c = p.base_contrast.log10() / (hi - lo);
    let out_log: Vec<f64> = log_lum
        .data()
        .iter()
        .zip(base.data())
        .map(|(&l, &b)| c * b + (l - b) - c * hi)
        .collect();
    render(img, p.gamma, |i| {
        let y = lum.data()[i];
        if y > 0.0 {
            10f64.powf(out_log[i]) / y
        } else {
            0.0
        }
    })
}

/// Brute-force bilateral filter with Gaussian spatial and range kernels,
/// window radius `ceil(3 sigma_s)` and replicated borders.
pub fn bilateral_filter(map: &Plane, sigma_s: f64, sigma_r: f64) -> Plane {
    assert!(sigma_s > 0.0 && sigma_r > 0.0, "bilateral sigmas must be positive");
    let radius = (3.0 * sigma_s).ceil() as isize;
    let side = (2 * radius + 1) as usize;
    let mut spatial = Vec::with_capacity(side * side);
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            spatial.push((-((dx * dx + dy * dy) as f64) / (2.0 * sigma_s * sigma_s)).exp());
        }
    }
    let inv_2r2 = 1.0 / (2.0 * sigma_r * sigma_r);
    Plane::from_fn(map.width(), map.height(), |x, y| {
        let center = map.get(x, y);
        let (mut num, mut den) = (0.0, 0.0);
        let mut k = 0;
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                let v = map.get_clamped(x as isize + dx, y as isize + dy);
                let d = v - center;
                let w = spatial[k] * (-d * d * inv_2r2).exp();
                num += w * v;
                den += w;
                k += 1;
            }
        }
        num / den
    })
}
