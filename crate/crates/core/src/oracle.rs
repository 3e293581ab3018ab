//! Full-reference contrast-distortion oracle.
//!
//! Both images are reduced to log2 luminance and split into a high band
//! (`L0 - G1`) and a low band (`G1 - G2`) with two Gaussian blurs. Each
//! band contrast is passed through a Weibull psychometric function, and
//! the per-pixel detection probabilities of reference and test are combined
//! into six maps: loss of visible contrast, amplification of invisible
//! contrast and reversal of visible contrast, for each band.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::image::{ensure_same_dims, HdrImage, LdrImage, Plane};
use crate::{Error, Result};

/// Luminance floor applied before the log transform.
pub const LUM_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MapKind {
    #[serde(rename = "amp-high")]
    AmpHigh,
    #[serde(rename = "amp-low")]
    AmpLow,
    #[serde(rename = "loss-high")]
    LossHigh,
    #[serde(rename = "loss-low")]
    LossLow,
    #[serde(rename = "rev-high")]
    RevHigh,
    #[serde(rename = "rev-low")]
    RevLow,
}

impl MapKind {
    /// Canonical order, also the order of the map blocks in a feature vector.
    pub const ALL: [MapKind; 6] = [
        MapKind::AmpHigh,
        MapKind::AmpLow,
        MapKind::LossHigh,
        MapKind::LossLow,
        MapKind::RevHigh,
        MapKind::RevLow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MapKind::AmpHigh => "amp-high",
            MapKind::AmpLow => "amp-low",
            MapKind::LossHigh => "loss-high",
            MapKind::LossLow => "loss-low",
            MapKind::RevHigh => "rev-high",
            MapKind::RevLow => "rev-low",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MapKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown map type '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleParams {
    /// Fine blur sigma in pixels.
    pub sigma1: f64,
    /// Coarse blur sigma in pixels.
    pub sigma2: f64,
    /// Visibility threshold in log2 contrast units.
    pub threshold: f64,
    /// Psychometric slope.
    pub slope: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            sigma1: 1.0,
            sigma2: 4.0,
            threshold: 0.04,
            slope: 3.5,
        }
    }
}

impl OracleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma1 > 0.0 && self.sigma1 < self.sigma2 && self.sigma2.is_finite()) {
            return Err(Error::Config(format!(
                "oracle sigmas must satisfy 0 < sigma1 < sigma2, got {} and {}",
                self.sigma1, self.sigma2
            )));
        }
        if !(self.threshold > 0.0 && self.slope > 0.0) {
            return Err(Error::Config("oracle threshold and slope must be positive".into()));
        }
        Ok(())
    }

    /// Detection probability `1 - exp(-(|c| / t)^s)` of a signed contrast.
    #[inline]
    pub fn visibility(&self, c: f64) -> f64 {
        1.0 - (-(c.abs() / self.threshold).powf(self.slope)).exp()
    }
}

/// Signed band contrasts in log2 units.
#[derive(Clone, Debug, PartialEq)]
pub struct BandPair {
    pub high: Plane,
    pub low: Plane,
}

/// The six per-pixel distortion maps of one image, indexed by [`MapKind`].
#[derive(Clone, Debug, PartialEq)]
pub struct DistortionMapSet {
    maps: [Plane; 6],
}

impl DistortionMapSet {
    pub fn new(maps: [Plane; 6]) -> Result<Self> {
        let dims = maps[0].dims();
        for m in &maps[1..] {
            ensure_same_dims(dims, m.dims())?;
        }
        Ok(Self { maps })
    }

    pub fn get(&self, kind: MapKind) -> &Plane {
        &self.maps[kind.index()]
    }

    pub fn dims(&self) -> (usize, usize) {
        self.maps[0].dims()
    }

    pub fn iter(&self) -> impl Iterator<Item = (MapKind, &Plane)> {
        MapKind::ALL.into_iter().zip(self.maps.iter())
    }

    pub fn into_maps(self) -> [Plane; 6] {
        self.maps
    }
}

/// Normalized 1-D Gaussian kernel with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable convolution with a symmetric odd-length kernel, replicated
/// borders.
pub fn separable_filter(src: &Plane, kernel: &[f64]) -> Plane {
    let r = (kernel.len() / 2) as isize;
    let horiz = Plane::from_fn(src.width(), src.height(), |x, y| {
        kernel
            .iter()
            .enumerate()
            .map(|(i, w)| w * src.get_clamped(x as isize + i as isize - r, y as isize))
            .sum()
    });
    Plane::from_fn(src.width(), src.height(), |x, y| {
        kernel
            .iter()
            .enumerate()
            .map(|(i, w)| w * horiz.get_clamped(x as isize, y as isize + i as isize - r))
            .sum()
    })
}

pub fn gaussian_blur(src: &Plane, sigma: f64) -> Plane {
    separable_filter(src, &gaussian_kernel(sigma))
}

pub fn band_decompose(lum: &Plane, p: &OracleParams) -> BandPair {
    let l0 = lum.map(|y| y.max(LUM_FLOOR).log2());
    let g1 = gaussian_blur(&l0, p.sigma1);
    let g2 = gaussian_blur(&l0, p.sigma2);
    let high = l0.zip_map(&g1, |a, b| a - b).expect("same dims");
    let low = g1.zip_map(&g2, |a, b| a - b).expect("same dims");
    BandPair { high, low }
}

/// Per-pixel (loss, amplification, reversal) for a reference and a test
/// contrast.
#[inline]
pub fn classify(c_ref: f64, c_test: f64, p: &OracleParams) -> (f64, f64, f64) {
    let pr = p.visibility(c_ref);
    let pt = p.visibility(c_test);
    let loss = pr * (1.0 - pt);
    let amp = (1.0 - pr) * pt;
    let rev = if c_ref * c_test < 0.0 { pr * pt } else { 0.0 };
    (loss, amp, rev)
}

/// Distortion maps from reference and test luminance directly.
pub fn distortion_maps_from_luminance(
    reference: &Plane,
    test: &Plane,
    p: &OracleParams,
) -> Result<DistortionMapSet> {
    p.validate()?;
    ensure_same_dims(reference.dims(), test.dims())?;
    let r = band_decompose(reference, p);
    let t = band_decompose(test, p);
    let (w, h) = reference.dims();
    let n = w * h;
    let mut out: [Vec<f64>; 6] = Default::default();
    for v in out.iter_mut() {
        v.reserve_exact(n);
    }
    for (bands, (ki_loss, ki_amp, ki_rev)) in [
        (
            (&r.high, &t.high),
            (MapKind::LossHigh, MapKind::AmpHigh, MapKind::RevHigh),
        ),
        (
            (&r.low, &t.low),
            (MapKind::LossLow, MapKind::AmpLow, MapKind::RevLow),
        ),
    ] {
        for (&cr, &ct) in bands.0.data().iter().zip(bands.1.data()) {
            let (loss, amp, rev) = classify(cr, ct, p);
            out[ki_loss.index()].push(loss);
            out[ki_amp.index()].push(amp);
            out[ki_rev.index()].push(rev);
        }
    }
    let maps = out.map(|v| Plane::new(w, h, v).expect("dims checked"));
    DistortionMapSet::new(maps)
}

/// Ground-truth maps for a tone-mapped rendition `ldr` of `hdr`.
pub fn distortion_maps(hdr: &HdrImage, ldr: &LdrImage, p: &OracleParams) -> Result<DistortionMapSet> {
    ensure_same_dims(hdr.dims(), ldr.dims())?;
    distortion_maps_from_luminance(&hdr.luminance(), &ldr.linear_luminance(), p)
}
