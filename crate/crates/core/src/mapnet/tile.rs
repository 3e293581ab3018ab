use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::RcNet;
use super::tensor::Tensor;
use crate::image::{LdrImage, Plane};
use crate::oracle::{DistortionMapSet, MapKind};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TileConfig {
    pub size: usize,
    pub stride: usize,
}

impl Default for TileConfig {
    fn default() -> Self {
        Self { size: 128, stride: 64 }
    }
}

impl TileConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || self.size % 4 != 0 || self.stride == 0 || self.stride > self.size {
            return Err(Error::Config(format!(
                "tiles need size a positive multiple of 4 and 0 < stride <= size, got {}/{}",
                self.size, self.stride
            )));
        }
        Ok(())
    }
}

/// Window origins along one axis: every `stride` from 0, plus a final
/// window flush with the end when the grid does not land on it.
pub fn tile_origins(len: usize, size: usize, stride: usize) -> Vec<usize> {
    assert!(len >= size && stride > 0);
    let mut v: Vec<usize> = (0..).map(|k| k * stride).take_while(|&o| o + size <= len).collect();
    if *v.last().expect("len >= size") + size < len {
        v.push(len - size);
    }
    v
}

/// Triangular blending weight, positive everywhere in the window.
pub fn hat(i: usize, size: usize) -> f64 {
    (i.min(size - 1 - i) + 1) as f64
}

fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i % period;
    if m < n {
        m
    } else {
        period - m
    }
}

/// Extends `p` on the right and bottom by mirror reflection.
pub fn reflect_pad(p: &Plane, width: usize, height: usize) -> Plane {
    let (w, h) = p.dims();
    Plane::from_fn(width.max(w), height.max(h), |x, y| p.get(reflect(x, w), reflect(y, h)))
}

/// Runs `net` over overlapping tiles of `lum` and blends the predictions.
pub fn predict_plane(net: &RcNet<f32>, lum: &Plane, tiles: &TileConfig) -> Result<Plane> {
    tiles.validate()?;
    let (w0, h0) = lum.dims();
    let padded = reflect_pad(lum, tiles.size, tiles.size);
    let (w, h) = padded.dims();
    let xs = tile_origins(w, tiles.size, tiles.stride);
    let ys = tile_origins(h, tiles.size, tiles.stride);
    let s = tiles.size;
    let run = |x0: usize, y0: usize| -> Result<Tensor<f32>> {
        let crop = padded.crop(x0, y0, s, s);
        let t = Tensor::from_vec(1, s, s, crop.data().iter().map(|&v| v as f32).collect());
        net.forward(&t)
    };
    if xs.len() == 1 && ys.len() == 1 {
        let out = run(0, 0)?;
        let full = Plane::new(s, s, out.data.iter().map(|&v| v as f64).collect())?;
        return Ok(full.crop(0, 0, w0, h0));
    }
    let weights: Vec<f64> = (0..s).map(|i| hat(i, s)).collect();
    let mut acc = vec![0.0; w * h];
    let mut norm = vec![0.0; w * h];
    for &y0 in &ys {
        for &x0 in &xs {
            let out = run(x0, y0)?;
            for ty in 0..s {
                for tx in 0..s {
                    let wt = weights[ty] * weights[tx];
                    let j = (y0 + ty) * w + x0 + tx;
                    acc[j] += wt * out.data[ty * s + tx] as f64;
                    norm[j] += wt;
                }
            }
        }
    }
    let blended = Plane::new(w, h, acc.iter().zip(&norm).map(|(a, n)| a / n).collect())?;
    Ok(blended.crop(0, 0, w0, h0))
}

/// One trained network per distortion map.
#[derive(Clone, Debug, Default)]
pub struct ModelSet {
    models: Vec<RcNet<f32>>,
}

impl ModelSet {
    pub fn new(models: Vec<RcNet<f32>>) -> Self {
        Self { models }
    }

    pub fn get(&self, kind: MapKind) -> Result<&RcNet<f32>> {
        self.models
            .iter()
            .find(|m| m.map == kind)
            .ok_or_else(|| Error::MissingModel(kind.name().into()))
    }

    pub fn insert(&mut self, net: RcNet<f32>) {
        self.models.retain(|m| m.map != net.map);
        self.models.push(net);
    }

    pub fn model_path(dir: &Path, kind: MapKind) -> std::path::PathBuf {
        dir.join(format!("{}.json", kind.name()))
    }

    /// Loads `{map}.json` for every map kind present in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut set = Self::default();
        for kind in MapKind::ALL {
            let path = Self::model_path(dir, kind);
            if path.exists() {
                let net = RcNet::load(&path)?;
                if net.map != kind {
                    return Err(Error::InvalidInput(format!(
                        "{} holds a model for '{}'",
                        path.display(),
                        net.map
                    )));
                }
                set.insert(net);
            }
        }
        Ok(set)
    }

    /// Fails with the first missing map kind.
    pub fn require_all(&self) -> Result<()> {
        MapKind::ALL.iter().try_for_each(|&k| self.get(k).map(|_| ()))
    }
}

/// Predicts all six distortion maps from a tone-mapped image alone.
pub fn predict_image(models: &ModelSet, ldr: &LdrImage, tiles: &TileConfig) -> Result<DistortionMapSet> {
    models.require_all()?;
    let lum = ldr.linear_luminance();
    let maps = MapKind::ALL.map(|k| predict_plane(models.get(k).expect("checked above"), &lum, tiles));
    let [a, b, c, d, e, f] = maps;
    DistortionMapSet::new([a?, b?, c?, d?, e?, f?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapnet::model::architecture;

    fn net(kind: MapKind) -> RcNet<f32> {
        RcNet::new(kind, architecture(2, 0.5), kind.index() as u64).unwrap()
    }

    #[test]
    fn origins() {
        assert_eq!(tile_origins(128, 128, 64), vec![0]);
        assert_eq!(tile_origins(256, 128, 64), vec![0, 64, 128]);
        assert_eq!(tile_origins(200, 128, 64), vec![0, 64, 72]);
        assert_eq!(tile_origins(129, 128, 64), vec![0, 1]);
    }

    #[test]
    fn reflection_padding() {
        let p = Plane::from_fn(3, 2, |x, y| (10 * y + x) as f64);
        let q = reflect_pad(&p, 6, 4);
        let row0: Vec<f64> = (0..6).map(|x| q.get(x, 0)).collect();
        assert_eq!(row0, vec![0.0, 1.0, 2.0, 1.0, 0.0, 1.0]);
        let col0: Vec<f64> = (0..4).map(|y| q.get(0, y)).collect();
        assert_eq!(col0, vec![0.0, 10.0, 0.0, 10.0]);
    }

    #[test]
    fn single_tile_equals_forward_pass() {
        let n = net(MapKind::AmpHigh);
        let tiles = TileConfig { size: 16, stride: 8 };
        let lum = Plane::from_fn(16, 16, |x, y| ((x * y) % 7) as f64 / 7.0);
        let got = predict_plane(&n, &lum, &tiles).unwrap();
        let t = Tensor::from_vec(1, 16, 16, lum.data().iter().map(|&v| v as f32).collect());
        let want = n.forward(&t).unwrap();
        for (a, b) in got.data().iter().zip(&want.data) {
            assert_eq!(*a, *b as f64);
        }
    }

    #[test]
    fn agreeing_tiles_blend_to_the_same_value() {
        // a constant input through a fresh net gives a constant-interior
        // output; with zero input every pixel is exactly sigmoid(0)
        let n = net(MapKind::AmpHigh);
        let tiles = TileConfig { size: 16, stride: 8 };
        let out = predict_plane(&n, &Plane::filled(40, 28, 0.0), &tiles).unwrap();
        assert_eq!(out.dims(), (40, 28));
        assert!(out.data().iter().all(|&v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn small_images_are_padded_and_cropped_back() {
        let n = net(MapKind::RevHigh);
        let tiles = TileConfig { size: 16, stride: 8 };
        let lum = Plane::from_fn(11, 5, |x, y| (x + y) as f64 / 16.0);
        let out = predict_plane(&n, &lum, &tiles).unwrap();
        assert_eq!(out.dims(), (11, 5));
        assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn missing_model_is_reported() {
        let mut set = ModelSet::default();
        for k in &MapKind::ALL[..5] {
            set.insert(net(*k));
        }
        let img = LdrImage::new(16, 16, vec![[9, 9, 9]; 256]).unwrap();
        match predict_image(&set, &img, &TileConfig { size: 16, stride: 8 }) {
            Err(Error::MissingModel(m)) => assert_eq!(m, "rev-low"),
            other => panic!("{other:?}"),
        }
        set.insert(net(MapKind::RevLow));
        let maps = predict_image(&set, &img, &TileConfig { size: 16, stride: 8 }).unwrap();
        assert_eq!(maps.dims(), (16, 16));
    }
}
