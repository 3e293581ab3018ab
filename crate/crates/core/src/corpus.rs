//! Synthetic HDR scenes, corpus assembly and training patch extraction.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::hdrio;
use crate::image::{ensure_same_dims, luminance_of, HdrImage, Plane};
use crate::mapnet::Patch;
use crate::oracle::{distortion_maps, DistortionMapSet, MapKind, OracleParams};
use crate::tonemap::{tonemap, Operator, TmoParams};
use crate::{rng, Error, Result};

/// log10 luminance span of every synthetic scene.
pub const SYNTH_LOG_RANGE: (f64, f64) = (-2.0, 4.0);

/// Bilinearly interpolated lattice noise with `cells` cells across.
fn value_noise(r: &mut rng::Rng, size: usize, cells: usize) -> Vec<f64> {
    let n = cells + 1;
    let lattice: Vec<f64> = (0..n * n).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
    let mut out = vec![0.0; size * size];
    for y in 0..size {
        let fy = y as f64 * cells as f64 / size as f64;
        let (iy, ty) = (fy.floor() as usize, fy.fract());
        for x in 0..size {
            let fx = x as f64 * cells as f64 / size as f64;
            let (ix, tx) = (fx.floor() as usize, fx.fract());
            let at = |i: usize, j: usize| lattice[j * n + i];
            let top = at(ix, iy) * (1.0 - tx) + at(ix + 1, iy) * tx;
            let bot = at(ix, iy + 1) * (1.0 - tx) + at(ix + 1, iy + 1) * tx;
            out[y * size + x] = top * (1.0 - ty) + bot * ty;
        }
    }
    out
}

/// One procedural scene: a smooth ramp, multi-octave texture and a few
/// hard-edged rectangles and discs, rescaled so log10 luminance spans
/// exactly [`SYNTH_LOG_RANGE`].
pub fn synth_scene(size: usize, seed: u64) -> Result<HdrImage> {
    if size < 8 {
        return Err(Error::InvalidInput(format!("scene size {size} is too small")));
    }
    let mut r = rng::seeded(seed);
    let s = size as f64;
    let angle = r.random::<f64>() * std::f64::consts::TAU;
    let (dx, dy) = (angle.cos(), angle.sin());
    let ramp = 1.5 + r.random::<f64>() * 2.0;
    let mut field: Vec<f64> = (0..size * size)
        .map(|i| {
            let (x, y) = ((i % size) as f64 / s - 0.5, (i / size) as f64 / s - 0.5);
            ramp * (x * dx + y * dy)
        })
        .collect();
    for (cells, amp) in [(4, 0.6), (16, 0.3), (size / 4, 0.15)] {
        let gain = amp * (0.5 + r.random::<f64>());
        for (f, v) in field.iter_mut().zip(value_noise(&mut r, size, cells.max(2))) {
            *f += gain * v;
        }
    }
    let patches = 3 + r.random_range(0..5);
    for _ in 0..patches {
        let offset = r.random_range(-1.5..1.5);
        let (cx, cy) = (r.random::<f64>() * s, r.random::<f64>() * s);
        let rad = s * (0.05 + 0.15 * r.random::<f64>());
        let disc = r.random::<bool>();
        for (i, f) in field.iter_mut().enumerate() {
            let (x, y) = ((i % size) as f64 - cx, (i / size) as f64 - cy);
            let inside = if disc {
                x * x + y * y <= rad * rad
            } else {
                x.abs() <= rad && y.abs() <= 0.6 * rad
            };
            if inside {
                *f += offset;
            }
        }
    }
    let (lo, hi) = field
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (l0, l1) = SYNTH_LOG_RANGE;
    let tint: Vec<[f64; 3]> = (0..2)
        .map(|_| {
            let c = [0.6 + 0.8 * r.random::<f64>(), 0.6 + 0.8 * r.random::<f64>(), 0.6 + 0.8 * r.random::<f64>()];
            let y = luminance_of(c);
            [c[0] / y, c[1] / y, c[2] / y]
        })
        .collect();
    let mix = value_noise(&mut r, size, 3);
    let pixels = field
        .iter()
        .zip(&mix)
        .map(|(&f, &m)| {
            let lum = 10f64.powf(l0 + (l1 - l0) * (f - lo) / (hi - lo));
            let t = 0.5 + 0.5 * m;
            let c: [f64; 3] = std::array::from_fn(|k| tint[0][k] * (1.0 - t) + tint[1][k] * t);
            [lum * c[0], lum * c[1], lum * c[2]]
        })
        .collect();
    HdrImage::new(size, size, pixels)
}

/// Writes `scene_NNN.hdr` files into `dir` and returns their paths.
pub fn synth_scenes(dir: &Path, count: usize, size: usize, seed: u64) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    (0..count)
        .map(|i| {
            let img = synth_scene(size, rng::child_seed(seed, i as u64))?;
            let path = dir.join(format!("scene_{i:03}.hdr"));
            hdrio::write_hdr(&path, &img)?;
            Ok(path)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidInput(format!("unknown split '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub tmos: Vec<TmoParams>,
    /// Train, validation and test fractions of the scenes.
    pub splits: [f64; 3],
    pub oracle: OracleParams,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            tmos: Operator::ALL.iter().map(|&o| TmoParams::for_operator(o)).collect(),
            splits: [0.65, 0.16, 0.19],
            oracle: OracleParams::default(),
            seed: 0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tmos.is_empty() {
            return Err(Error::Config("corpus.tmos must name at least one operator".into()));
        }
        let mut seen = Vec::new();
        for t in &self.tmos {
            t.validate()?;
            if seen.contains(&t.operator) {
                return Err(Error::Config(format!("corpus.tmos lists '{}' twice", t.operator)));
            }
            seen.push(t.operator);
        }
        let sum: f64 = self.splits.iter().sum();
        if self.splits.iter().any(|&f| !(0.0..=1.0).contains(&f)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config("corpus.splits must be fractions summing to 1".into()));
        }
        self.oracle.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub scene: String,
    pub hdr: PathBuf,
    pub tmo: Operator,
    pub ldr: PathBuf,
    pub maps: BTreeMap<MapKind, PathBuf>,
    pub split: Split,
}

/// Paths are relative to the directory holding `manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub const FILE: &'static str = "manifest.json";

    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(Self::FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        let path = root.join(Self::FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

/// Scene-level split: shuffles the scene ids with the seed and cuts them by
/// the rounded train and validation fractions; the test split takes the rest.
pub fn assign_splits(scenes: &[String], fractions: [f64; 3], seed: u64) -> BTreeMap<String, Split> {
    let mut order: Vec<&String> = scenes.iter().collect();
    order.shuffle(&mut rng::seeded(seed));
    let n = order.len();
    let n_train = ((fractions[0] * n as f64).round() as usize).min(n);
    let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    order
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let split = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            (s.clone(), split)
        })
        .collect()
}

fn check_map_range(maps: &DistortionMapSet) -> Result<()> {
    for (kind, m) in maps.iter() {
        if m.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput(format!("oracle map '{kind}' left [0, 1]")));
        }
    }
    Ok(())
}

/// Renders every `.hdr` file in `hdr_dir` with every configured operator,
/// labels each rendition with the oracle and lays the results out under
/// `out_dir` as `{scene}/{tmo}/{ldr.png, maps/*.pfm}`.
pub fn build_corpus(hdr_dir: &Path, out_dir: &Path, cfg: &CorpusConfig) -> Result<CorpusManifest> {
    cfg.validate()?;
    let mut files: Vec<PathBuf> = fs::read_dir(hdr_dir)
        .map_err(|e| Error::io(hdr_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("hdr")))
        .collect();
    files.sort();

    let mut scenes: Vec<(String, HdrImage)> = Vec::new();
    for path in &files {
        match hdrio::read_hdr(path) {
            Ok(img) => {
                let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                scenes.push((id, img));
            }
            Err(e) => log::warn!("skipping {}: {e}", path.display()),
        }
    }
    if scenes.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no decodable .hdr files in {}",
            hdr_dir.display()
        )));
    }

    let ids: Vec<String> = scenes.iter().map(|(s, _)| s.clone()).collect();
    let splits = assign_splits(&ids, cfg.splits, cfg.seed);
    let mut entries = Vec::new();
    for (scene, hdr) in &scenes {
        let scene_dir = out_dir.join(scene);
        let hdr_rel = PathBuf::from(scene).join("scene.hdr");
        let mut rendered = Vec::new();
        for tmo in &cfg.tmos {
            match tonemap(hdr, tmo) {
                Ok(ldr) => rendered.push((tmo.operator, ldr)),
                Err(e) => log::warn!("skipping {scene}/{}: {e}", tmo.operator),
            }
        }
        if rendered.is_empty() {
            continue;
        }
        fs::create_dir_all(&scene_dir).map_err(|e| Error::io(&scene_dir, e))?;
        hdrio::write_hdr(out_dir.join(&hdr_rel), hdr)?;
        for (op, ldr) in rendered {
            let rel = PathBuf::from(scene).join(op.name());
            let maps = distortion_maps(hdr, &ldr, &cfg.oracle)?;
            check_map_range(&maps)?;
            fs::create_dir_all(scene_dir.join(op.name()).join("maps")).map_err(|e| Error::io(&scene_dir, e))?;
            hdrio::write_png(out_dir.join(rel.join("ldr.png")), &ldr)?;
            let mut map_paths = BTreeMap::new();
            for (kind, m) in maps.iter() {
                let p = rel.join("maps").join(format!("{}.pfm", kind.name()));
                hdrio::write_pfm_plane(out_dir.join(&p), m)?;
                map_paths.insert(kind, p);
            }
            entries.push(ManifestEntry {
                scene: scene.clone(),
                hdr: hdr_rel.clone(),
                tmo: op,
                ldr: rel.join("ldr.png"),
                maps: map_paths,
                split: splits[scene],
            });
        }
    }
    if entries.is_empty() {
        return Err(Error::InvalidInput("no scene could be rendered".into()));
    }
    let manifest = CorpusManifest {
        seed: cfg.seed,
        entries,
    };
    manifest.save(out_dir)?;
    Ok(manifest)
}

/// Loads the six ground-truth maps of an entry.
pub fn load_maps(root: &Path, entry: &ManifestEntry) -> Result<DistortionMapSet> {
    let load = |k: MapKind| -> Result<Plane> {
        let p = entry
            .maps
            .get(&k)
            .ok_or_else(|| Error::InvalidInput(format!("entry {}/{} lacks map '{k}'", entry.scene, entry.tmo)))?;
        hdrio::read_pfm_plane(root.join(p))
    };
    let [a, b, c, d, e, f] = MapKind::ALL.map(load);
    DistortionMapSet::new([a?, b?, c?, d?, e?, f?])
}

/// Top-left corners of all `patch`×`patch` windows at `stride`.
pub fn patch_origins(width: usize, height: usize, patch: usize, stride: usize) -> Vec<(usize, usize)> {
    let axis = |len: usize| -> Vec<usize> {
        if len < patch {
            Vec::new()
        } else {
            (0..=(len - patch) / stride).map(|k| k * stride).collect()
        }
    };
    let (xs, ys) = (axis(width), axis(height));
    ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect()
}

/// Aligned (linear luminance, label) windows from one image.
pub fn patches_from(lum: &Plane, label: &Plane, patch: usize, stride: usize) -> Result<Vec<Patch>> {
    ensure_same_dims(lum.dims(), label.dims())?;
    if patch == 0 || stride == 0 {
        return Err(Error::InvalidInput("patch and stride must be positive".into()));
    }
    let (w, h) = lum.dims();
    Ok(patch_origins(w, h, patch, stride)
        .into_iter()
        .map(|(x, y)| Patch {
            input: lum.crop(x, y, patch, patch),
            label: label.crop(x, y, patch, patch),
        })
        .collect())
}

pub fn patch_extract(
    manifest: &CorpusManifest,
    root: &Path,
    split: Split,
    kind: MapKind,
    patch: usize,
    stride: usize,
) -> Result<Vec<Patch>> {
    let mut out = Vec::new();
    for e in manifest.split(split) {
        let lum = hdrio::read_png(root.join(&e.ldr))?.linear_luminance();
        let map_path = e
            .maps
            .get(&kind)
            .ok_or_else(|| Error::InvalidInput(format!("entry {}/{} lacks map '{kind}'", e.scene, e.tmo)))?;
        let label = hdrio::read_pfm_plane(root.join(map_path))?;
        out.extend(patches_from(&lum, &label, patch, stride)?);
    }
    Ok(out)
}

/// Quality score implied by a map set: 100 · (1 − mean high-band loss).
pub fn synthetic_mos(maps: &DistortionMapSet) -> f64 {
    100.0 * (1.0 - maps.get(MapKind::LossHigh).mean())
}
