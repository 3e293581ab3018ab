//! Natural-scene-statistics features of a tone-mapped image and its
//! distortion maps.
//!
//! Each raster is divisively normalized (MSCN), the coefficients are fitted
//! with a zero-mode asymmetric generalized Gaussian by moment matching, and
//! the three fitted parameters are joined by the raw raster's mean and
//! standard deviation. Seven rasters times five statistics gives a
//! 35-dimensional vector.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::image::{ensure_same_dims, LdrImage, Plane};
use crate::oracle::{separable_filter, DistortionMapSet, MapKind};
use crate::{rng, Error, Result};

pub const FEATURE_LEN: usize = 35;

/// Names of the seven rasters, in feature-vector order.
pub const RASTER_NAMES: [&str; 7] = [
    "image", "amp-high", "amp-low", "loss-high", "loss-low", "rev-high", "rev-low",
];

const MIN_SAMPLES: usize = 100;
const ALPHA_RANGE: (f64, f64) = (0.1, 10.0);
const EMPTY_SIDE_SIGMA: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MscnConfig {
    /// Side of the square Gaussian window (odd).
    pub window: usize,
    pub sigma: f64,
    /// Stabilizer added to the local deviation.
    pub c: f64,
}

impl MscnConfig {
    /// For rasters on a [0, 255] scale.
    pub fn image() -> Self {
        Self {
            window: 7,
            sigma: 7.0 / 6.0,
            c: 1.0,
        }
    }

    /// For rasters on a [0, 1] scale.
    pub fn map() -> Self {
        Self {
            c: 1.0 / 255.0,
            ..Self::image()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window % 2 == 0 || self.window == 0 {
            return Err(Error::Config(format!("MSCN window must be odd, got {}", self.window)));
        }
        if !(self.sigma > 0.0 && self.c > 0.0) {
            return Err(Error::Config("MSCN sigma and stabilizer must be positive".into()));
        }
        Ok(())
    }

    /// 1-D factor of the separable window; the 2-D window is its outer
    /// product and therefore also sums to one.
    pub fn kernel(&self) -> Vec<f64> {
        let r = (self.window / 2) as isize;
        let mut k: Vec<f64> = (-r..=r)
            .map(|i| (-((i * i) as f64) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let s: f64 = k.iter().sum();
        k.iter_mut().for_each(|v| *v /= s);
        k
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub image: MscnConfig,
    pub maps: MscnConfig,
    /// Amplitude of the uniform dither added to maps before fitting, so
    /// that flat maps still yield a well-posed fit.
    pub dither: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            image: MscnConfig::image(),
            maps: MscnConfig::map(),
            dither: 1e-6,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        self.image.validate()?;
        self.maps.validate()?;
        if !(self.dither >= 0.0) {
            return Err(Error::Config("feature dither must be non-negative".into()));
        }
        Ok(())
    }
}

/// Mean-subtracted contrast-normalized coefficients,
/// `(I - mu) / (sigma + C)` with Gaussian-weighted local moments and
/// replicated borders.
pub fn mscn(src: &Plane, cfg: &MscnConfig) -> Plane {
    let k = cfg.kernel();
    let r = (k.len() / 2) as isize;
    let mu = separable_filter(src, &k);
    Plane::from_fn(src.width(), src.height(), |x, y| {
        let m = mu.get(x, y);
        let mut var = 0.0;
        for (j, wy) in k.iter().enumerate() {
            for (i, wx) in k.iter().enumerate() {
                let d = src.get_clamped(x as isize + i as isize - r, y as isize + j as isize - r) - m;
                var += wy * wx * d * d;
            }
        }
        (src.get(x, y) - m) / (var.sqrt() + cfg.c)
    })
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// The gamma function via the Lanczos approximation (g = 7, nine terms),
/// with reflection below 1/2.
pub fn gamma_fn(a: f64) -> f64 {
    if a < 0.5 {
        return std::f64::consts::PI / ((std::f64::consts::PI * a).sin() * gamma_fn(1.0 - a));
    }
    let a = a - 1.0;
    let t = a + LANCZOS_G + 0.5;
    let series = LANCZOS[1..]
        .iter()
        .enumerate()
        .fold(LANCZOS[0], |s, (i, c)| s + c / (a + i as f64 + 1.0));
    (2.0 * std::f64::consts::PI).sqrt() * t.powf(a + 0.5) * (-t).exp() * series
}

/// Generalized Gaussian ratio `Γ(2/α)² / (Γ(1/α) Γ(3/α))`, strictly
/// increasing in α.
pub fn rho(alpha: f64) -> f64 {
    let g2 = gamma_fn(2.0 / alpha);
    g2 * g2 / (gamma_fn(1.0 / alpha) * gamma_fn(3.0 / alpha))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggdParams {
    pub alpha: f64,
    pub beta_left: f64,
    pub beta_right: f64,
}

impl AggdParams {
    /// Density of the zero-mode AGGD.
    pub fn density(&self, x: f64) -> f64 {
        let norm = self.alpha / ((self.beta_left + self.beta_right) * gamma_fn(1.0 / self.alpha));
        let beta = if x < 0.0 { self.beta_left } else { self.beta_right };
        norm * (-(x.abs() / beta).powf(self.alpha)).exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AggdFit {
    pub params: AggdParams,
    /// Set when one side had no samples and its deviation was clamped.
    pub one_sided: bool,
    /// Number of bisection steps used to invert `rho`.
    pub iterations: usize,
}

/// Moment-matching AGGD fit.
pub fn aggd_fit(samples: &[f64]) -> Result<AggdFit> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::Degenerate(format!(
            "AGGD fit needs at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("AGGD fit on non-finite samples".into()));
    }
    let (mut sq_l, mut n_l, mut sq_r, mut n_r) = (0.0, 0usize, 0.0, 0usize);
    let (mut abs_sum, mut sq_sum) = (0.0, 0.0);
    for &x in samples {
        let x2 = x * x;
        if x < 0.0 {
            sq_l += x2;
            n_l += 1;
        } else {
            sq_r += x2;
            n_r += 1;
        }
        abs_sum += x.abs();
        sq_sum += x2;
    }
    if sq_sum == 0.0 {
        return Err(Error::Degenerate("AGGD fit on all-zero samples".into()));
    }
    let side_sigma = |sq: f64, n: usize| {
        if n == 0 || sq == 0.0 {
            None
        } else {
            Some((sq / n as f64).sqrt())
        }
    };
    let (sigma_l, sigma_r) = (side_sigma(sq_l, n_l), side_sigma(sq_r, n_r));
    let one_sided = sigma_l.is_none() || sigma_r.is_none();
    let sigma_l = sigma_l.unwrap_or(EMPTY_SIDE_SIGMA);
    let sigma_r = sigma_r.unwrap_or(EMPTY_SIDE_SIGMA);

    let n = samples.len() as f64;
    let g = sigma_l / sigma_r;
    let r_hat = (abs_sum / n).powi(2) / (sq_sum / n);
    let big_r = r_hat * (g.powi(3) + 1.0) * (g + 1.0) / (g * g + 1.0).powi(2);
    let (alpha, iterations) = invert_rho(big_r);
    let scale = (gamma_fn(1.0 / alpha) / gamma_fn(3.0 / alpha)).sqrt();
    Ok(AggdFit {
        params: AggdParams {
            alpha,
            beta_left: sigma_l * scale,
            beta_right: sigma_r * scale,
        },
        one_sided,
        iterations,
    })
}

/// Bisection for `rho(alpha) = target` on the fixed bracket; targets
/// outside the bracket's image clamp to its ends.
fn invert_rho(target: f64) -> (f64, usize) {
    let (mut lo, mut hi) = ALPHA_RANGE;
    if target <= rho(lo) {
        return (lo, 0);
    }
    if target >= rho(hi) {
        return (hi, 0);
    }
    let mut it = 0;
    while it < 60 {
        it += 1;
        let mid = 0.5 * (lo + hi);
        let v = rho(mid);
        if (v - target).abs() < 1e-12 {
            return (mid, it);
        }
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi), it)
}

/// A 35-value feature vector: for each raster in [`RASTER_NAMES`] order,
/// `(alpha, beta_left, beta_right, mean, std)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_LEN]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn raster_block(raster: &Plane, cfg: &MscnConfig, name: &'static str) -> Result<[f64; 5]> {
    let coeffs = mscn(raster, cfg);
    let fit = aggd_fit(coeffs.data()).map_err(|e| Error::Feature {
        raster: name,
        source: Box::new(e),
    })?;
    let p = fit.params;
    Ok([p.alpha, p.beta_left, p.beta_right, raster.mean(), raster.std()])
}

/// Adds seeded uniform noise in `[-amp, amp]`, clamped back into [0, 1].
pub fn dither(map: &Plane, amplitude: f64, seed: u64) -> Plane {
    use rand::Rng;
    if amplitude == 0.0 {
        return map.clone();
    }
    let mut r = rng::seeded(seed);
    map.map(|v| (v + r.random_range(-amplitude..=amplitude)).clamp(0.0, 1.0))
}

pub fn extract_features(
    ldr: &LdrImage,
    maps: &DistortionMapSet,
    cfg: &FeatureConfig,
) -> Result<FeatureVector> {
    ensure_same_dims(ldr.dims(), maps.dims())?;
    let lum = ldr.linear_luminance().map(|v| 255.0 * v);
    let mut out = [0.0; FEATURE_LEN];
    out[..5].copy_from_slice(&raster_block(&lum, &cfg.image, RASTER_NAMES[0])?);
    for kind in MapKind::ALL {
        let i = kind.index() + 1;
        let map = dither(maps.get(kind), cfg.dither, i as u64);
        out[5 * i..5 * i + 5].copy_from_slice(&raster_block(&map, &cfg.maps, RASTER_NAMES[i])?);
    }
    Ok(FeatureVector(out))
}

/// Formats with nine significant digits, without an exponent where that
/// stays readable.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{v:.8e}")
    }
}

pub fn csv_header() -> String {
    let mut h = String::from("id");
    for i in 1..=FEATURE_LEN {
        h.push_str(&format!(",f{i:02}"));
    }
    h
}

pub fn write_feature_csv<W: Write>(mut w: W, rows: &[(String, FeatureVector)]) -> std::io::Result<()> {
    writeln!(w, "{}", csv_header())?;
    for (id, fv) in rows {
        write!(w, "{id}")?;
        for v in fv.as_slice() {
            write!(w, ",{}", format_sig9(*v))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_feature_csv(text: &str) -> Result<Vec<(String, FeatureVector)>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::parse("feature csv", 0, "empty file"))?;
    if header.trim() != csv_header() {
        return Err(Error::parse("feature csv", 0, "unexpected header"));
    }
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        let mut cells = line.split(',');
        let id = cells.next().unwrap_or_default().to_string();
        let values: Vec<f64> = cells
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse("feature csv", ln + 2, format!("line {}: {e}", ln + 2)))?;
        let arr: [f64; FEATURE_LEN] = values.try_into().map_err(|v: Vec<f64>| {
            Error::parse("feature csv", ln + 2, format!("expected {FEATURE_LEN} values, got {}", v.len()))
        })?;
        rows.push((id, FeatureVector(arr)));
    }
    Ok(rows)
}
