//! Volume container, native file I/O, resampling, cropping, normalization,
//! augmentation, and synthetic tube phantom generation.
//!
//! The native container is a JSON header (`shape`, `spacing`, `origin`,
//! `dtype`, `order`) next to a companion `.raw` file of little-endian f32 in
//! C order.

use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

/// Rank-3 scalar voxel grid with physical spacing in mm.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolumeKind {
    Intensity,
    Label,
}

impl Volume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], data: Vec<f32>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("volume dims must be >= 1, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Data(format!("spacing must be positive, got {spacing:?}")));
        }
        if data.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::Shape(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                dims
            )));
        }
        Ok(Volume {
            dims,
            spacing,
            origin: [0.0; 3],
            data,
        })
    }

    pub fn zeros(dims: [usize; 3], spacing: [f64; 3]) -> Self {
        Volume {
            dims,
            spacing,
            origin: [0.0; 3],
            data: vec![0.0; dims[0] * dims[1] * dims[2]],
        }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[self.idx(i, j, k)]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize, k: usize) -> &mut f32 {
        let idx = self.idx(i, j, k);
        &mut self.data[idx]
    }

    pub fn numel(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0.0).count()
    }
}

/// A cubic crop (image plus optional mask) cut from a source volume.
#[derive(Debug, Clone)]
pub struct LabeledCrop {
    pub image: Volume,
    pub mask: Option<Volume>,
    pub source_id: String,
    pub offset: [usize; 3],
}

/// Image volume together with its ground-truth mask.
#[derive(Debug, Clone)]
pub struct LabeledVolume {
    pub image: Volume,
    pub mask: Volume,
}

// ---------------------------------------------------------------------------
// Native container I/O
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct Header {
    shape: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    dtype: String,
    order: String,
}

fn raw_path(header_path: &Path) -> PathBuf {
    header_path.with_extension("raw")
}

/// Write a volume as `<path>.json` header plus `<path>.raw` payload.
/// `path` should name the JSON header file.
pub fn write_volume(path: &Path, v: &Volume) -> Result<()> {
    let header = Header {
        shape: v.dims,
        spacing: v.spacing,
        origin: v.origin,
        dtype: "f32".into(),
        order: "C".into(),
    };
    let json = serde_json::to_string_pretty(&header)
        .map_err(|e| Error::Format(format!("header encode: {e}")))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))?;
    let rp = raw_path(path);
    let mut f = std::fs::File::create(&rp).map_err(|e| Error::io(&rp, e))?;
    let mut buf = Vec::with_capacity(v.data.len() * 4);
    for &x in &v.data {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    f.write_all(&buf).map_err(|e| Error::io(&rp, e))?;
    Ok(())
}

/// Load a volume from the native container. Label volumes are binarized at 0.5.
pub fn load_volume(path: &Path, kind: VolumeKind) -> Result<Volume> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header: Header =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if header.dtype != "f32" {
        return Err(Error::Format(format!("unsupported dtype {}", header.dtype)));
    }
    if header.order != "C" {
        return Err(Error::Format(format!("unsupported order {}", header.order)));
    }
    let rp = raw_path(path);
    let mut f = std::fs::File::open(&rp).map_err(|e| Error::io(&rp, e))?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes).map_err(|e| Error::io(&rp, e))?;
    let n = header.shape[0] * header.shape[1] * header.shape[2];
    if bytes.len() != n * 4 {
        return Err(Error::Format(format!(
            "{}: payload is {} bytes, header implies {}",
            rp.display(),
            bytes.len(),
            n * 4
        )));
    }
    let mut data = Vec::with_capacity(n);
    for chunk in bytes.chunks_exact(4) {
        data.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data(format!("{}: non-finite voxels", rp.display())));
    }
    if kind == VolumeKind::Label {
        for v in &mut data {
            *v = if *v >= 0.5 { 1.0 } else { 0.0 };
        }
    }
    let mut vol = Volume::new(header.shape, header.spacing, data)?;
    vol.origin = header.origin;
    Ok(vol)
}

// ---------------------------------------------------------------------------
// Resampling / normalization
// ---------------------------------------------------------------------------

/// Resample to a new voxel spacing. Trilinear interpolation for intensity,
/// nearest neighbor for labels. Physical extent is preserved within one
/// output voxel.
pub fn resample(v: &Volume, target_spacing: [f64; 3], kind: VolumeKind) -> Result<Volume> {
    if target_spacing.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Data(format!(
            "target spacing must be positive, got {target_spacing:?}"
        )));
    }
    let mut out_dims = [0usize; 3];
    for a in 0..3 {
        let d = (v.dims[a] as f64 * v.spacing[a] / target_spacing[a]).round() as usize;
        if d == 0 {
            return Err(Error::Shape(format!(
                "resample to {target_spacing:?} collapses axis {a} to zero voxels"
            )));
        }
        out_dims[a] = d;
    }
    let mut out = Volume::zeros(out_dims, target_spacing);
    out.origin = v.origin;
    let scale = [
        target_spacing[0] / v.spacing[0],
        target_spacing[1] / v.spacing[1],
        target_spacing[2] / v.spacing[2],
    ];
    for i in 0..out_dims[0] {
        let fi = i as f64 * scale[0];
        for j in 0..out_dims[1] {
            let fj = j as f64 * scale[1];
            for k in 0..out_dims[2] {
                let fk = k as f64 * scale[2];
                let val = match kind {
                    VolumeKind::Intensity => trilinear(v, fi, fj, fk),
                    VolumeKind::Label => nearest(v, fi, fj, fk),
                };
                *out.at_mut(i, j, k) = val;
            }
        }
    }
    Ok(out)
}

fn nearest(v: &Volume, fi: f64, fj: f64, fk: f64) -> f32 {
    let i = (fi.round() as i64).clamp(0, v.dims[0] as i64 - 1) as usize;
    let j = (fj.round() as i64).clamp(0, v.dims[1] as i64 - 1) as usize;
    let k = (fk.round() as i64).clamp(0, v.dims[2] as i64 - 1) as usize;
    v.at(i, j, k)
}

fn trilinear(v: &Volume, fi: f64, fj: f64, fk: f64) -> f32 {
    let cl = |f: f64, d: usize| -> (usize, usize, f64) {
        let f = f.clamp(0.0, (d - 1) as f64);
        let lo = f.floor() as usize;
        let hi = (lo + 1).min(d - 1);
        (lo, hi, f - lo as f64)
    };
    let (i0, i1, ti) = cl(fi, v.dims[0]);
    let (j0, j1, tj) = cl(fj, v.dims[1]);
    let (k0, k1, tk) = cl(fk, v.dims[2]);
    let mut acc = 0.0f64;
    for (i, wi) in [(i0, 1.0 - ti), (i1, ti)] {
        if wi == 0.0 {
            continue;
        }
        for (j, wj) in [(j0, 1.0 - tj), (j1, tj)] {
            if wj == 0.0 {
                continue;
            }
            for (k, wk) in [(k0, 1.0 - tk), (k1, tk)] {
                if wk == 0.0 {
                    continue;
                }
                acc += wi * wj * wk * v.at(i, j, k) as f64;
            }
        }
    }
    acc as f32
}

/// Min-max scale intensities to [0,1]. A constant volume maps to all zeros.
pub fn normalize(v: &Volume) -> Result<Volume> {
    if v.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Data("normalize: non-finite input values".into()));
    }
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &x in &v.data {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    let mut out = v.clone();
    if hi > lo {
        let range = (hi - lo) as f64;
        for x in &mut out.data {
            *x = (((*x - lo) as f64) / range) as f32;
        }
    } else {
        out.data.iter_mut().for_each(|x| *x = 0.0);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Cropping
// ---------------------------------------------------------------------------

/// Per-axis tile offsets: stride = size, final partial tile flush against the
/// boundary.
fn axis_offsets(dim: usize, size: usize) -> Vec<usize> {
    let mut offs = Vec::new();
    let mut o = 0;
    loop {
        if o + size >= dim {
            offs.push(dim - size);
            break;
        }
        offs.push(o);
        o += size;
    }
    offs
}

/// Tile a volume (and optional mask) into cubic crops of `size`.
pub fn crop_blocks(
    v: &Volume,
    mask: Option<&Volume>,
    size: usize,
    source_id: &str,
) -> Result<Vec<LabeledCrop>> {
    if v.dims.iter().any(|&d| d < size) {
        return Err(Error::Shape(format!(
            "crop size {size} exceeds volume dims {:?}",
            v.dims
        )));
    }
    if let Some(m) = mask {
        if m.dims != v.dims {
            return Err(Error::Shape("mask dims differ from image dims".into()));
        }
    }
    let extract = |src: &Volume, off: [usize; 3]| -> Volume {
        let mut out = Volume::zeros([size; 3], src.spacing);
        out.origin = src.origin;
        for i in 0..size {
            for j in 0..size {
                let s = src.idx(off[0] + i, off[1] + j, off[2]);
                let d = out.idx(i, j, 0);
                out.data[d..d + size].copy_from_slice(&src.data[s..s + size]);
            }
        }
        out
    };
    let mut crops = Vec::new();
    for &oi in &axis_offsets(v.dims[0], size) {
        for &oj in &axis_offsets(v.dims[1], size) {
            for &ok in &axis_offsets(v.dims[2], size) {
                let off = [oi, oj, ok];
                crops.push(LabeledCrop {
                    image: extract(v, off),
                    mask: mask.map(|m| extract(m, off)),
                    source_id: source_id.to_string(),
                    offset: off,
                });
            }
        }
    }
    Ok(crops)
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

pub const AUGMENT_PROB: f64 = 0.1;

/// Axis pairs eligible for 90-degree rotation.
pub const ROT_PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

fn flip_axis(v: &Volume, axis: usize) -> Volume {
    let mut out = v.clone();
    let [d0, d1, d2] = v.dims;
    for i in 0..d0 {
        for j in 0..d1 {
            for k in 0..d2 {
                let mut t = [i, j, k];
                t[axis] = v.dims[axis] - 1 - t[axis];
                *out.at_mut(t[0], t[1], t[2]) = v.at(i, j, k);
            }
        }
    }
    out
}

/// Rotate 90 degrees in the (a,b) plane: index_a <- index_b,
/// index_b <- S-1-index_a.
fn rot90(v: &Volume, a: usize, b: usize) -> Volume {
    let mut out = v.clone();
    let [d0, d1, d2] = v.dims;
    let s = v.dims[a];
    for i in 0..d0 {
        for j in 0..d1 {
            for k in 0..d2 {
                let src = [i, j, k];
                let mut dst = src;
                dst[a] = src[b];
                dst[b] = s - 1 - src[a];
                *out.at_mut(dst[0], dst[1], dst[2]) = v.at(i, j, k);
            }
        }
    }
    out
}

/// Apply a fixed set of augmentation decisions. Pure; used by `augment` and
/// directly testable.
pub fn apply_augment(c: &LabeledCrop, flips: [bool; 3], rot: Option<(usize, usize)>) -> LabeledCrop {
    let mut image = c.image.clone();
    let mut mask = c.mask.clone();
    for (axis, &f) in flips.iter().enumerate() {
        if f {
            image = flip_axis(&image, axis);
            mask = mask.map(|m| flip_axis(&m, axis));
        }
    }
    if let Some((a, b)) = rot {
        image = rot90(&image, a, b);
        mask = mask.map(|m| rot90(&m, a, b));
    }
    LabeledCrop {
        image,
        mask,
        source_id: c.source_id.clone(),
        offset: c.offset,
    }
}

/// Random flip per axis (p = 0.1 each) and one random 90-degree rotation
/// (p = 0.1). The crop must be cubic so rotations preserve shape.
pub fn augment(c: &LabeledCrop, rng: &mut impl Rng) -> Result<LabeledCrop> {
    let d = c.image.dims;
    if d[0] != d[1] || d[1] != d[2] {
        return Err(Error::Shape(format!("augment requires a cubic crop, got {d:?}")));
    }
    let flips = [
        rng.random::<f64>() < AUGMENT_PROB,
        rng.random::<f64>() < AUGMENT_PROB,
        rng.random::<f64>() < AUGMENT_PROB,
    ];
    let rot = if rng.random::<f64>() < AUGMENT_PROB {
        Some(ROT_PAIRS[rng.random_range(0..3)])
    } else {
        None
    };
    Ok(apply_augment(c, flips, rot))
}

// ---------------------------------------------------------------------------
// Phantom generation
// ---------------------------------------------------------------------------

/// Synthetic tube phantom parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub grid_size: [usize; 3],
    /// Tube radii in voxels, cycled over tubes.
    pub tube_radii: Vec<f64>,
    pub tube_count: usize,
    /// Gaussian blur sigma (voxels) applied to the binary mask.
    pub blur_sigma: f64,
    /// Additive Gaussian noise standard deviation.
    pub noise_std: f64,
    /// Allow slightly tilted (non-axis-aligned) tubes.
    pub tilt: bool,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            grid_size: [64; 3],
            tube_radii: vec![1.0, 2.0, 4.0, 6.0, 8.0],
            tube_count: 5,
            blur_sigma: 1.0,
            noise_std: 0.05,
            tilt: true,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let min_dim = *self.grid_size.iter().min().unwrap_or(&0) as f64;
        if self.grid_size.iter().any(|&d| d == 0) {
            return Err(Error::Config("phantom grid_size must be nonzero".into()));
        }
        if self.tube_radii.is_empty() && self.tube_count > 0 {
            return Err(Error::Config("tube_radii empty with tube_count > 0".into()));
        }
        if self.tube_radii.iter().any(|&r| !(r > 0.0) || r >= min_dim / 2.0) {
            return Err(Error::Config(format!(
                "tube radii must be in (0, min_dim/2) = (0, {})",
                min_dim / 2.0
            )));
        }
        if self.blur_sigma < 0.0 || self.noise_std < 0.0 {
            return Err(Error::Config("blur_sigma and noise_std must be >= 0".into()));
        }
        Ok(())
    }

    /// Radius below which a tube is tagged as thin (SA-like) rather than
    /// thick (MA-like) in the region volumes.
    pub fn thin_threshold(&self) -> f64 {
        3.0
    }
}

/// Phantom output: image, binary mask, and thin/thick region tags.
#[derive(Debug, Clone)]
pub struct PhantomVolumes {
    pub image: Volume,
    pub mask: Volume,
    pub region_thin: Volume,
    pub region_thick: Volume,
}

struct Tube {
    p0: [f64; 3],
    dir: [f64; 3],
    radius: f64,
}

fn line_dist(p: [f64; 3], t: &Tube) -> f64 {
    let d = [p[0] - t.p0[0], p[1] - t.p0[1], p[2] - t.p0[2]];
    let dot = d[0] * t.dir[0] + d[1] * t.dir[1] + d[2] * t.dir[2];
    let perp = [
        d[0] - dot * t.dir[0],
        d[1] - dot * t.dir[1],
        d[2] - dot * t.dir[2],
    ];
    (perp[0] * perp[0] + perp[1] * perp[1] + perp[2] * perp[2]).sqrt()
}

/// Straight axis-aligned digital tube through the grid center; the
/// deterministic building block reused by tests and the response scans.
pub fn make_axis_tube(grid: [usize; 3], radius: f64, axis: usize) -> Volume {
    let mut center = [0.0f64; 3];
    for a in 0..3 {
        center[a] = (grid[a] as f64 - 1.0) / 2.0;
    }
    let mut dir = [0.0; 3];
    dir[axis] = 1.0;
    let tube = Tube {
        p0: center,
        dir,
        radius,
    };
    let mut mask = Volume::zeros(grid, [1.0; 3]);
    rasterize_tube(&mut mask, &tube);
    mask
}

fn rasterize_tube(mask: &mut Volume, t: &Tube) {
    let [d0, d1, d2] = mask.dims;
    for i in 0..d0 {
        for j in 0..d1 {
            for k in 0..d2 {
                if line_dist([i as f64, j as f64, k as f64], t) <= t.radius {
                    *mask.at_mut(i, j, k) = 1.0;
                }
            }
        }
    }
}

fn gaussian_blur(v: &Volume, sigma: f64) -> Volume {
    if sigma <= 0.0 {
        return v.clone();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    let mut sum = 0.0;
    for t in -radius..=radius {
        let w = (-(t * t) as f64 / (2.0 * sigma * sigma)).exp();
        kernel.push(w);
        sum += w;
    }
    kernel.iter_mut().for_each(|w| *w /= sum);

    let mut cur = v.clone();
    for axis in 0..3 {
        let mut next = cur.clone();
        let [d0, d1, d2] = cur.dims;
        for i in 0..d0 {
            for j in 0..d1 {
                for k in 0..d2 {
                    let mut acc = 0.0f64;
                    for (ti, &w) in kernel.iter().enumerate() {
                        let t = ti as i64 - radius;
                        let mut p = [i as i64, j as i64, k as i64];
                        p[axis] += t;
                        if p[axis] < 0 || p[axis] >= cur.dims[axis] as i64 {
                            continue; // zero padding
                        }
                        acc += w * cur.at(p[0] as usize, p[1] as usize, p[2] as usize) as f64;
                    }
                    *next.at_mut(i, j, k) = acc as f32;
                }
            }
        }
        cur = next;
    }
    cur
}

/// Generate a deterministic tube phantom: mask = union of random tubes,
/// image = blurred mask + noise, clamped to [0,1].
pub fn make_phantom(spec: &PhantomSpec) -> Result<PhantomVolumes> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let grid = spec.grid_size;
    let mut mask = Volume::zeros(grid, [1.0; 3]);
    let mut region_thin = Volume::zeros(grid, [1.0; 3]);
    let mut region_thick = Volume::zeros(grid, [1.0; 3]);

    for t in 0..spec.tube_count {
        let radius = spec.tube_radii[t % spec.tube_radii.len()];
        let tube = place_tube(grid, radius, spec.tilt, &mut rng)?;
        rasterize_tube(&mut mask, &tube);
        let region = Tube {
            radius: tube.radius + 2.0,
            ..tube
        };
        if radius <= spec.thin_threshold() {
            rasterize_tube(&mut region_thin, &region);
        } else {
            rasterize_tube(&mut region_thick, &region);
        }
    }

    let mut image = gaussian_blur(&mask, spec.blur_sigma);
    if spec.noise_std > 0.0 {
        let normal = Normal::new(0.0f64, spec.noise_std)
            .map_err(|e| Error::Numeric(format!("noise distribution: {e}")))?;
        for v in &mut image.data {
            *v += normal.sample(&mut rng) as f32;
        }
    }
    for v in &mut image.data {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(PhantomVolumes {
        image,
        mask,
        region_thin,
        region_thick,
    })
}

fn place_tube(grid: [usize; 3], radius: f64, tilt: bool, rng: &mut ChaCha8Rng) -> Result<Tube> {
    for _ in 0..32 {
        let axis = rng.random_range(0..3usize);
        let mut p0 = [0.0f64; 3];
        let mut ok = true;
        for a in 0..3 {
            if a == axis {
                p0[a] = (grid[a] as f64 - 1.0) / 2.0;
            } else {
                let lo = radius + 1.0;
                let hi = grid[a] as f64 - 1.0 - radius - 1.0;
                if hi <= lo {
                    ok = false;
                    break;
                }
                p0[a] = lo + rng.random::<f64>() * (hi - lo);
            }
        }
        if !ok {
            continue;
        }
        let mut dir = [0.0f64; 3];
        dir[axis] = 1.0;
        if tilt {
            for a in 0..3 {
                if a != axis {
                    dir[a] = (rng.random::<f64>() - 0.5) * 0.4;
                }
            }
            let n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
            dir.iter_mut().for_each(|d| *d /= n);
        }
        return Ok(Tube { p0, dir, radius });
    }
    Err(Error::Data(format!(
        "could not place a tube of radius {radius} in grid {grid:?}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use self::tempdir::tempdir;

    mod tempdir {
        use std::path::PathBuf;
        pub struct TempDir(PathBuf);
        impl TempDir {
            pub fn path(&self) -> &std::path::Path {
                &self.0
            }
        }
        impl Drop for TempDir {
            fn drop(&mut self) {
                let _ = std::fs::remove_dir_all(&self.0);
            }
        }
        pub fn tempdir(tag: &str) -> TempDir {
            let p = std::env::temp_dir().join(format!("logbseg-test-{tag}-{}", std::process::id()));
            std::fs::create_dir_all(&p).unwrap();
            TempDir(p)
        }
    }

    #[test]
    fn roundtrip_zero_volume() {
        let dir = tempdir("rt0");
        let v = Volume::zeros([4, 4, 4], [1.0, 1.0, 1.0]);
        let p = dir.path().join("v.json");
        write_volume(&p, &v).unwrap();
        let w = load_volume(&p, VolumeKind::Intensity).unwrap();
        assert_eq!(w.dims, [4, 4, 4]);
        assert_eq!(w.spacing, [1.0, 1.0, 1.0]);
        assert!(w.data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn roundtrip_random_bitwise() {
        let dir = tempdir("rt1");
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data: Vec<f32> = (0..512).map(|_| rng.random::<f32>() * 10.0 - 5.0).collect();
        let v = Volume::new([8, 8, 8], [0.8, 0.8, 0.3], data).unwrap();
        let p = dir.path().join("v.json");
        write_volume(&p, &v).unwrap();
        let w = load_volume(&p, VolumeKind::Intensity).unwrap();
        assert_eq!(v.data, w.data);
        assert_eq!(v.spacing, w.spacing);
    }

    #[test]
    fn label_load_binarizes() {
        let dir = tempdir("lbl");
        let mut v = Volume::zeros([1, 1, 3], [1.0; 3]);
        v.data = vec![0.0, 0.7, 1.0];
        let p = dir.path().join("m.json");
        write_volume(&p, &v).unwrap();
        let w = load_volume(&p, VolumeKind::Label).unwrap();
        assert_eq!(w.data, vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tempdir("trunc");
        let v = Volume::zeros([4, 4, 4], [1.0; 3]);
        let p = dir.path().join("v.json");
        write_volume(&p, &v).unwrap();
        let raw = p.with_extension("raw");
        let bytes = std::fs::read(&raw).unwrap();
        std::fs::write(&raw, &bytes[..bytes.len() - 4]).unwrap();
        assert!(load_volume(&p, VolumeKind::Intensity).is_err());
    }

    #[test]
    fn resample_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<f32> = (0..512).map(|_| rng.random()).collect();
        let v = Volume::new([8, 8, 8], [1.0; 3], data).unwrap();
        let w = resample(&v, [1.0; 3], VolumeKind::Intensity).unwrap();
        assert_eq!(v.dims, w.dims);
        assert_eq!(v.data, w.data);
    }

    #[test]
    fn resample_constant_stays_constant() {
        let v = Volume::new([8, 8, 8], [1.0; 3], vec![3.5; 512]).unwrap();
        let w = resample(&v, [0.7, 1.3, 2.0], VolumeKind::Intensity).unwrap();
        for &x in &w.data {
            assert!((x - 3.5).abs() < 1e-6);
        }
    }

    #[test]
    fn resample_linear_ramp() {
        // f(i,j,k) = i at spacing 1 -> spacing 2: interior value at out index
        // i is the analytic ramp 2*i.
        let mut v = Volume::zeros([8, 8, 8], [1.0; 3]);
        for i in 0..8 {
            for j in 0..8 {
                for k in 0..8 {
                    *v.at_mut(i, j, k) = i as f32;
                }
            }
        }
        let w = resample(&v, [2.0, 1.0, 1.0], VolumeKind::Intensity).unwrap();
        assert_eq!(w.dims, [4, 8, 8]);
        for i in 0..4 {
            // out index 3 maps to source coord 6.0, still interior
            let expect = (2 * i) as f32;
            assert!((w.at(i, 3, 3) - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn resample_label_stays_binary_and_extent_preserved() {
        let mut v = Volume::zeros([10, 10, 10], [1.0; 3]);
        for i in 3..7 {
            for j in 3..7 {
                for k in 3..7 {
                    *v.at_mut(i, j, k) = 1.0;
                }
            }
        }
        let w = resample(&v, [0.6, 0.9, 1.7], VolumeKind::Label).unwrap();
        assert!(w.is_binary());
        for a in 0..3 {
            let ext_in = v.dims[a] as f64 * v.spacing[a];
            let ext_out = w.dims[a] as f64 * w.spacing[a];
            assert!((ext_in - ext_out).abs() <= w.spacing[a]);
        }
    }

    #[test]
    fn resample_degenerate_errors() {
        let v = Volume::zeros([4, 4, 4], [1.0; 3]);
        assert!(resample(&v, [100.0, 1.0, 1.0], VolumeKind::Intensity).is_err());
    }

    #[test]
    fn normalize_range_and_constant() {
        let v = Volume::new([1, 1, 4], [1.0; 3], vec![-100.0, 0.0, 100.0, 300.0]).unwrap();
        let w = normalize(&v).unwrap();
        assert_eq!(w.data[0], 0.0);
        assert_eq!(w.data[3], 1.0);
        let c = Volume::new([1, 1, 4], [1.0; 3], vec![5.0; 4]).unwrap();
        assert!(normalize(&c).unwrap().data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn normalize_hand_case() {
        // values {0,1,3} with range [0,4] -> {0, 0.25, 0.75}
        let v = Volume::new([1, 1, 4], [1.0; 3], vec![0.0, 1.0, 3.0, 4.0]).unwrap();
        let w = normalize(&v).unwrap();
        assert_eq!(w.data, vec![0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn normalize_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f32> = (0..512).map(|_| rng.random::<f32>() * 40.0 - 7.0).collect();
        let v = Volume::new([8, 8, 8], [1.0; 3], data).unwrap();
        let w1 = normalize(&v).unwrap();
        let w2 = normalize(&w1).unwrap();
        assert_eq!(w1.data, w2.data);
    }

    #[test]
    fn crop_counts() {
        let v = Volume::zeros([64, 64, 64], [1.0; 3]);
        let c = crop_blocks(&v, None, 64, "v").unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].offset, [0, 0, 0]);

        let v = Volume::zeros([128, 128, 128], [1.0; 3]);
        let c = crop_blocks(&v, None, 64, "v").unwrap();
        assert_eq!(c.len(), 8);

        let v = Volume::zeros([100, 100, 100], [1.0; 3]);
        let c = crop_blocks(&v, None, 64, "v").unwrap();
        assert_eq!(c.len(), 8);
        for crop in &c {
            for a in 0..3 {
                assert!(crop.offset[a] == 0 || crop.offset[a] == 36);
            }
        }
    }

    #[test]
    fn crop_covers_every_voxel_unique_offsets() {
        let v = Volume::zeros([37, 21, 50], [1.0; 3]);
        let crops = crop_blocks(&v, None, 16, "v").unwrap();
        let mut covered = vec![false; v.numel()];
        let mut offsets = std::collections::HashSet::new();
        for c in &crops {
            assert!(offsets.insert(c.offset));
            for i in 0..16 {
                for j in 0..16 {
                    for k in 0..16 {
                        covered[v.idx(c.offset[0] + i, c.offset[1] + j, c.offset[2] + k)] = true;
                    }
                }
            }
        }
        assert!(covered.iter().all(|&b| b));
    }

    fn sample_crop() -> LabeledCrop {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<f32> = (0..64).map(|_| rng.random()).collect();
        let image = Volume::new([4, 4, 4], [1.0; 3], data).unwrap();
        let mdata: Vec<f32> = (0..64).map(|_| if rng.random::<f64>() < 0.3 { 1.0 } else { 0.0 }).collect();
        let mask = Volume::new([4, 4, 4], [1.0; 3], mdata).unwrap();
        LabeledCrop {
            image,
            mask: Some(mask),
            source_id: "t".into(),
            offset: [0; 3],
        }
    }

    #[test]
    fn augment_noop_branch() {
        let c = sample_crop();
        let out = apply_augment(&c, [false; 3], None);
        assert_eq!(out.image.data, c.image.data);
        assert_eq!(out.mask.unwrap().data, c.mask.unwrap().data);
    }

    #[test]
    fn augment_flip_moves_voxels() {
        let c = sample_crop();
        let out = apply_augment(&c, [true, false, false], None);
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    assert_eq!(out.image.at(3 - i, j, k), c.image.at(i, j, k));
                }
            }
        }
    }

    #[test]
    fn augment_rot90_order_four() {
        let c = sample_crop();
        let mut cur = c.clone();
        for _ in 0..4 {
            cur = apply_augment(&cur, [false; 3], Some((0, 2)));
        }
        assert_eq!(cur.image.data, c.image.data);
        assert_eq!(cur.mask.unwrap().data, c.mask.unwrap().data);
    }

    #[test]
    fn augment_preserves_foreground_count() {
        let c = sample_crop();
        let before = c.mask.as_ref().unwrap().foreground_count();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..50 {
            let out = augment(&c, &mut rng).unwrap();
            assert_eq!(out.mask.unwrap().foreground_count(), before);
        }
    }

    #[test]
    fn phantom_empty_and_deterministic() {
        let spec = PhantomSpec {
            tube_count: 0,
            grid_size: [16; 3],
            tube_radii: vec![2.0],
            ..Default::default()
        };
        let p = make_phantom(&spec).unwrap();
        assert_eq!(p.mask.foreground_count(), 0);

        let spec = PhantomSpec {
            grid_size: [24; 3],
            tube_count: 3,
            tube_radii: vec![1.0, 2.0, 4.0],
            seed: 42,
            ..Default::default()
        };
        let a = make_phantom(&spec).unwrap();
        let b = make_phantom(&spec).unwrap();
        assert_eq!(a.image.data, b.image.data);
        assert_eq!(a.mask.data, b.mask.data);
    }

    #[test]
    fn phantom_tube_matches_distance_oracle() {
        // one axis-aligned tube radius 3 through a 32^3 grid center
        let mask = make_axis_tube([32; 3], 3.0, 0);
        let c = (32.0 - 1.0) / 2.0;
        let mut count = 0usize;
        for j in 0..32 {
            for k in 0..32 {
                let d = ((j as f64 - c).powi(2) + (k as f64 - c).powi(2)).sqrt();
                if d <= 3.0 {
                    count += 32;
                }
            }
        }
        assert_eq!(mask.foreground_count(), count);
        assert!(count > 0);
    }

    #[test]
    fn phantom_radius_too_large_rejected() {
        let spec = PhantomSpec {
            grid_size: [8; 3],
            tube_radii: vec![6.0],
            tube_count: 1,
            ..Default::default()
        };
        assert!(spec.validate().is_err());
    }
}
