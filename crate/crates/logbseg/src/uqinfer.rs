//! Monte-Carlo inference: stochastic forward ensembles over sliding crops,
//! voxelwise confidence bounds, boundary-width statistics, and isosurface
//! mesh export.

use crate::error::{Error, Result};
use crate::metrics::surface_voxels;
use crate::network::{predict, Model};
use crate::tensor::{Real, Tensor};
use crate::voxelio::Volume;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

/// Default ensemble size for Monte-Carlo inference.
pub const DEFAULT_N: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsMethod {
    /// Voxelwise min/max over members (default).
    Minmax,
    /// mean ± 1.96 · sample std, clamped to [0,1]; needs n ≥ 2.
    Normal,
}

#[derive(Debug, Clone)]
pub struct PredictionEnsemble {
    pub members: Vec<Volume>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct UncertaintyMap {
    pub mean: Volume,
    pub lower: Volume,
    pub upper: Volume,
    /// upper − lower.
    pub width: Volume,
}

fn axis_offsets(dim: usize, size: usize, stride: usize) -> Vec<usize> {
    let mut offs = Vec::new();
    let mut o = 0;
    loop {
        if o + size >= dim {
            offs.push(dim - size);
            break;
        }
        offs.push(o);
        o += stride;
    }
    offs
}

fn extract_crop(v: &Volume, off: [usize; 3], size: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(size * size * size);
    for x in 0..size {
        for y in 0..size {
            for z in 0..size {
                out.push(v.at(off[0] + x, off[1] + y, off[2] + z));
            }
        }
    }
    out
}

/// One full-volume stochastic prediction: sliding crops, overlap-averaged.
pub fn predict_volume<T: Real>(
    model: &Model<T>,
    vol: &Volume,
    crop_size: usize,
    rng: Option<&mut ChaCha8Rng>,
    half_stride: bool,
) -> Result<Volume> {
    if vol.dims.iter().any(|&d| d < crop_size) {
        return Err(Error::Shape(format!(
            "volume dims {:?} smaller than crop size {crop_size}",
            vol.dims
        )));
    }
    model.cfg.check_crop([crop_size; 3])?;
    let stride = if half_stride {
        (crop_size / 2).max(1)
    } else {
        crop_size
    };
    let offs: Vec<[usize; 3]> = {
        let ox = axis_offsets(vol.dims[0], crop_size, stride);
        let oy = axis_offsets(vol.dims[1], crop_size, stride);
        let oz = axis_offsets(vol.dims[2], crop_size, stride);
        let mut v = Vec::new();
        for &x in &ox {
            for &y in &oy {
                for &z in &oz {
                    v.push([x, y, z]);
                }
            }
        }
        v
    };
    let mut acc = vec![0.0f64; vol.numel()];
    let mut cnt = vec![0.0f64; vol.numel()];
    let mut rng = rng;
    for off in offs {
        let data = extract_crop(vol, off, crop_size)
            .into_iter()
            .map(|v| T::fromf(v as f64))
            .collect();
        let x = Tensor::from_vec(&[1, crop_size, crop_size, crop_size], data);
        let out = predict(model, &x, rng.as_deref_mut())?;
        let mut i = 0;
        for dx in 0..crop_size {
            for dy in 0..crop_size {
                for dz in 0..crop_size {
                    let gi = vol.idx(off[0] + dx, off[1] + dy, off[2] + dz);
                    acc[gi] += out.probs.data[i].tof();
                    cnt[gi] += 1.0;
                    i += 1;
                }
            }
        }
    }
    let data = acc
        .iter()
        .zip(&cnt)
        .map(|(&a, &c)| (a / c) as f32)
        .collect();
    let mut out = Volume::new(vol.dims, vol.spacing, data)?;
    out.origin = vol.origin;
    Ok(out)
}

/// n stochastic forward passes with per-member derived seeds.
pub fn mc_predict<T: Real>(
    model: &Model<T>,
    vol: &Volume,
    crop_size: usize,
    n: usize,
    seed: u64,
    half_stride: bool,
) -> Result<PredictionEnsemble> {
    if n < 1 {
        return Err(Error::Config("ensemble size must be >= 1".into()));
    }
    let stochastic = model.cfg.bayesian && model.cfg.active_log_layers > 0;
    let mut members = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed.wrapping_add((i as u64).wrapping_mul(0x9e3779b97f4a7c15)));
        let rng_opt = if stochastic { Some(&mut rng) } else { None };
        members.push(predict_volume(model, vol, crop_size, rng_opt, half_stride)?);
    }
    Ok(PredictionEnsemble { members, seed })
}

/// Voxelwise mean/lower/upper/width from an ensemble.
pub fn confidence_bounds(e: &PredictionEnsemble, method: BoundsMethod) -> Result<UncertaintyMap> {
    let n = e.members.len();
    if n == 0 {
        return Err(Error::Data("empty ensemble".into()));
    }
    if method == BoundsMethod::Normal && n < 2 {
        return Err(Error::Config(
            "normal bounds need at least 2 ensemble members".into(),
        ));
    }
    let first = &e.members[0];
    for m in &e.members[1..] {
        if m.dims != first.dims {
            return Err(Error::Shape("ensemble members differ in shape".into()));
        }
    }
    let numel = first.numel();
    let mut mean = vec![0.0f32; numel];
    let mut lower = vec![0.0f32; numel];
    let mut upper = vec![0.0f32; numel];
    for i in 0..numel {
        let vals: Vec<f64> = e.members.iter().map(|m| m.data[i] as f64).collect();
        let mu = vals.iter().sum::<f64>() / n as f64;
        let (lo, hi) = match method {
            BoundsMethod::Minmax => (
                vals.iter().cloned().fold(f64::INFINITY, f64::min),
                vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            ),
            BoundsMethod::Normal => {
                let var = vals.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n - 1) as f64;
                let half = 1.96 * var.sqrt();
                ((mu - half).max(0.0), (mu + half).min(1.0))
            }
        };
        mean[i] = mu as f32;
        lower[i] = lo as f32;
        upper[i] = hi as f32;
    }
    let width = lower
        .iter()
        .zip(&upper)
        .map(|(&l, &u)| u - l)
        .collect::<Vec<f32>>();
    let mk = |data: Vec<f32>| -> Result<Volume> {
        let mut v = Volume::new(first.dims, first.spacing, data)?;
        v.origin = first.origin;
        Ok(v)
    };
    Ok(UncertaintyMap {
        mean: mk(mean)?,
        lower: mk(lower)?,
        upper: mk(upper)?,
        width: mk(width)?,
    })
}

/// Mean interval width on the ground-truth surface vs the interior.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WidthStat {
    pub boundary_mean_width: f64,
    /// Zero when the foreground has no interior voxels.
    pub interior_mean_width: f64,
}

pub fn boundary_width_stat(u: &UncertaintyMap, gt: &Volume) -> Result<WidthStat> {
    if u.width.dims != gt.dims {
        return Err(Error::Shape("width map and mask shapes differ".into()));
    }
    if gt.foreground_count() == 0 {
        return Err(Error::Data("mask has no foreground".into()));
    }
    let surface = surface_voxels(gt);
    let mut on_surface = vec![false; gt.numel()];
    for &[x, y, z] in &surface {
        on_surface[gt.idx(x, y, z)] = true;
    }
    let mut bsum = 0.0;
    let mut bn = 0usize;
    let mut isum = 0.0;
    let mut in_ = 0usize;
    for (i, (&w, &g)) in u.width.data.iter().zip(&gt.data).enumerate() {
        if g < 0.5 {
            continue;
        }
        if on_surface[i] {
            bsum += w as f64;
            bn += 1;
        } else {
            isum += w as f64;
            in_ += 1;
        }
    }
    Ok(WidthStat {
        boundary_mean_width: bsum / bn as f64,
        interior_mean_width: if in_ == 0 { 0.0 } else { isum / in_ as f64 },
    })
}

/// Write the four uncertainty volumes as `<stem>_mean/_lower/_upper/_width`.
pub fn write_uncertainty(dir: &Path, stem: &str, u: &UncertaintyMap) -> Result<()> {
    for (suffix, vol) in [
        ("mean", &u.mean),
        ("lower", &u.lower),
        ("upper", &u.upper),
        ("width", &u.width),
    ] {
        crate::voxelio::write_volume(&dir.join(format!("{stem}_{suffix}.json")), vol)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Marching cubes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TriMesh {
    /// Vertex positions in mm.
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriMesh {
    /// V − E + F with edges counted once per undirected pair.
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = std::collections::HashSet::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        self.vertices.len() as i64 - edges.len() as i64 + self.triangles.len() as i64
    }
}

const EDGE_CORNERS: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

// corner i offset within a cube (x, y, z)
const CORNER_OFFSETS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

/// Extract the isosurface of a probability volume at `level`, with vertices
/// in mm coordinates and shared across neighboring cubes (watertight).
pub fn marching_cubes(prob: &Volume, level: f64) -> Result<TriMesh> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config("iso level must lie in (0,1)".into()));
    }
    let [dx, dy, dz] = prob.dims;
    let mut vertices: Vec<[f64; 3]> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    // vertex index per global edge: (lower endpoint voxel, axis)
    let mut edge_vertex: HashMap<([usize; 3], usize), usize> = HashMap::new();

    for x in 0..dx.saturating_sub(1) {
        for y in 0..dy.saturating_sub(1) {
            for z in 0..dz.saturating_sub(1) {
                let corner_val =
                    |c: usize| prob.at(x + CORNER_OFFSETS[c][0], y + CORNER_OFFSETS[c][1], z + CORNER_OFFSETS[c][2]) as f64;
                let mut cube_index = 0usize;
                for c in 0..8 {
                    if corner_val(c) < level {
                        cube_index |= 1 << c;
                    }
                }
                if EDGE_TABLE[cube_index] == 0 {
                    continue;
                }
                let mut local = [usize::MAX; 12];
                for e in 0..12 {
                    if EDGE_TABLE[cube_index] & (1 << e) == 0 {
                        continue;
                    }
                    let [ca, cb] = EDGE_CORNERS[e];
                    let pa = [
                        x + CORNER_OFFSETS[ca][0],
                        y + CORNER_OFFSETS[ca][1],
                        z + CORNER_OFFSETS[ca][2],
                    ];
                    let pb = [
                        x + CORNER_OFFSETS[cb][0],
                        y + CORNER_OFFSETS[cb][1],
                        z + CORNER_OFFSETS[cb][2],
                    ];
                    let (lo, axis) = if pa <= pb {
                        (pa, (0..3).find(|&i| pa[i] != pb[i]).unwrap_or(0))
                    } else {
                        (pb, (0..3).find(|&i| pa[i] != pb[i]).unwrap_or(0))
                    };
                    let key = (lo, axis);
                    let idx = *edge_vertex.entry(key).or_insert_with(|| {
                        let va = corner_val(ca);
                        let vb = corner_val(cb);
                        let t = if (vb - va).abs() < 1e-12 {
                            0.5
                        } else {
                            (level - va) / (vb - va)
                        };
                        let p = [
                            (pa[0] as f64 + t * (pb[0] as f64 - pa[0] as f64)) * prob.spacing[0]
                                + prob.origin[0],
                            (pa[1] as f64 + t * (pb[1] as f64 - pa[1] as f64)) * prob.spacing[1]
                                + prob.origin[1],
                            (pa[2] as f64 + t * (pb[2] as f64 - pa[2] as f64)) * prob.spacing[2]
                                + prob.origin[2],
                        ];
                        vertices.push(p);
                        vertices.len() - 1
                    });
                    local[e] = idx;
                }
                let row = &TRIANGLE_TABLE[cube_index];
                let mut i = 0;
                while row[i] >= 0 {
                    triangles.push([
                        local[row[i] as usize],
                        local[row[i + 1] as usize],
                        local[row[i + 2] as usize],
                    ]);
                    i += 3;
                }
            }
        }
    }
    if vertices.is_empty() {
        return Err(Error::Data(format!("no isosurface at level {level}")));
    }
    Ok(TriMesh {
        vertices,
        triangles,
    })
}

/// Marching-cubes isosurface written as a Wavefront OBJ file.
pub fn export_surface(prob: &Volume, level: f64, path: &Path) -> Result<()> {
    let mesh = marching_cubes(prob, level)?;
    let mut f =
        std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let werr = |e: std::io::Error| Error::io(path, e);
    writeln!(f, "# isosurface at level {level}, coordinates in mm").map_err(werr)?;
    for v in &mesh.vertices {
        writeln!(f, "v {} {} {}", v[0], v[1], v[2]).map_err(werr)?;
    }
    for t in &mesh.triangles {
        writeln!(f, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).map_err(werr)?;
    }
    Ok(())
}

const EDGE_TABLE: [u16; 256] = [
    0x0, 0x109, 0x203, 0x30a, 0x406, 0x50f, 0x605, 0x70c, 0x80c, 0x905, 0xa0f, 0xb06, 0xc0a,
    0xd03, 0xe09, 0xf00, 0x190, 0x99, 0x393, 0x29a, 0x596, 0x49f, 0x795, 0x69c, 0x99c, 0x895,
    0xb9f, 0xa96, 0xd9a, 0xc93, 0xf99, 0xe90, 0x230, 0x339, 0x33, 0x13a, 0x636, 0x73f, 0x435,
    0x53c, 0xa3c, 0xb35, 0x83f, 0x936, 0xe3a, 0xf33, 0xc39, 0xd30, 0x3a0, 0x2a9, 0x1a3, 0xaa,
    0x7a6, 0x6af, 0x5a5, 0x4ac, 0xbac, 0xaa5, 0x9af, 0x8a6, 0xfaa, 0xea3, 0xda9, 0xca0, 0x460,
    0x569, 0x663, 0x76a, 0x66, 0x16f, 0x265, 0x36c, 0xc6c, 0xd65, 0xe6f, 0xf66, 0x86a, 0x963,
    0xa69, 0xb60, 0x5f0, 0x4f9, 0x7f3, 0x6fa, 0x1f6, 0xff, 0x3f5, 0x2fc, 0xdfc, 0xcf5, 0xfff,
    0xef6, 0x9fa, 0x8f3, 0xbf9, 0xaf0, 0x650, 0x759, 0x453, 0x55a, 0x256, 0x35f, 0x55, 0x15c,
    0xe5c, 0xf55, 0xc5f, 0xd56, 0xa5a, 0xb53, 0x859, 0x950, 0x7c0, 0x6c9, 0x5c3, 0x4ca, 0x3c6,
    0x2cf, 0x1c5, 0xcc, 0xfcc, 0xec5, 0xdcf, 0xcc6, 0xbca, 0xac3, 0x9c9, 0x8c0, 0x8c0, 0x9c9,
    0xac3, 0xbca, 0xcc6, 0xdcf, 0xec5, 0xfcc, 0xcc, 0x1c5, 0x2cf, 0x3c6, 0x4ca, 0x5c3, 0x6c9,
    0x7c0, 0x950, 0x859, 0xb53, 0xa5a, 0xd56, 0xc5f, 0xf55, 0xe5c, 0x15c, 0x55, 0x35f, 0x256,
    0x55a, 0x453, 0x759, 0x650, 0xaf0, 0xbf9, 0x8f3, 0x9fa, 0xef6, 0xfff, 0xcf5, 0xdfc, 0x2fc,
    0x3f5, 0xff, 0x1f6, 0x6fa, 0x7f3, 0x4f9, 0x5f0, 0xb60, 0xa69, 0x963, 0x86a, 0xf66, 0xe6f,
    0xd65, 0xc6c, 0x36c, 0x265, 0x16f, 0x66, 0x76a, 0x663, 0x569, 0x460, 0xca0, 0xda9, 0xea3,
    0xfaa, 0x8a6, 0x9af, 0xaa5, 0xbac, 0x4ac, 0x5a5, 0x6af, 0x7a6, 0xaa, 0x1a3, 0x2a9, 0x3a0,
    0xd30, 0xc39, 0xf33, 0xe3a, 0x936, 0x83f, 0xb35, 0xa3c, 0x53c, 0x435, 0x73f, 0x636, 0x13a,
    0x33, 0x339, 0x230, 0xe90, 0xf99, 0xc93, 0xd9a, 0xa96, 0xb9f, 0x895, 0x99c, 0x69c, 0x795,
    0x49f, 0x596, 0x29a, 0x393, 0x99, 0x190, 0xf00, 0xe09, 0xd03, 0xc0a, 0xb06, 0xa0f, 0x905,
    0x80c, 0x70c, 0x605, 0x50f, 0x406, 0x30a, 0x203, 0x109, 0x0,
];

const TRIANGLE_TABLE: [[i8; 16]; 256] = [
    [-1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [0, 8, 3, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [0, 1, 9, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [1, 8, 3, 9, 8, 1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [1, 2, 10, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [0, 8, 3, 1, 2, 10, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [9, 2, 10, 0, 2, 9, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [2, 8, 3, 2, 10, 8, 10, 9, 8, -1, -1, -1, -1, -1, -1, -1],
    [3, 11, 2, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [0, 11, 2, 8, 11, 0, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [1, 9, 0, 2, 3, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [1, 11, 2, 1, 9, 11, 9, 8, 11, -1, -1, -1, -1, -1, -1, -1],
    [3, 10, 1, 11, 10, 3, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [0, 10, 1, 0, 8, 10, 8, 11, 10, -1, -1, -1, -1, -1, -1, -1],
    [3, 9, 0, 3, 11, 9, 11, 10, 9, -1, -1, -1, -1, -1, -1, -1],
    [9, 8, 10, 10, 8, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [4, 7, 8, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [4, 3, 0, 7, 3, 4, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [0, 1, 9, 8, 4, 7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [4, 1, 9, 4, 7, 1, 7, 3, 1, -1, -1, -1, -1, -1, -1, -1],
    [1, 2, 10, 8, 4, 7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [3, 4, 7, 3, 0, 4, 1, 2, 10, -1, -1, -1, -1, -1, -1, -1],
    [9, 2, 10, 9, 0, 2, 8, 4, 7, -1, -1, -1, -1, -1, -1, -1],
    [2, 10, 9, 2, 9, 7, 2, 7, 3, 7, 9, 4, -1, -1, -1, -1],
    [8, 4, 7, 3, 11, 2, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [11, 4, 7, 11, 2, 4, 2, 0, 4, -1, -1, -1, -1, -1, -1, -1],
    [9, 0, 1, 8, 4, 7, 2, 3, 11, -1, -1, -1, -1, -1, -1, -1],
    [4, 7, 11, 9, 4, 11, 9, 11, 2, 9, 2, 1, -1, -1, -1, -1],
    [3, 10, 1, 3, 11, 10, 7, 8, 4, -1, -1, -1, -1, -1, -1, -1],
    [1, 11, 10, 1, 4, 11, 1, 0, 4, 7, 11, 4, -1, -1, -1, -1],
    [4, 7, 8, 9, 0, 11, 9, 11, 10, 11, 0, 3, -1, -1, -1, -1],
    [4, 7, 11, 4, 11, 9, 9, 11, 10, -1, -1, -1, -1, -1, -1, -1],
    [9, 5, 4, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [9, 5, 4, 0, 8, 3, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [0, 5, 4, 1, 5, 0, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [8, 5, 4, 8, 3, 5, 3, 1, 5, -1, -1, -1, -1, -1, -1, -1],
    [1, 2, 10, 9, 5, 4, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [3, 0, 8, 1, 2, 10, 4, 9, 5, -1, -1, -1, -1, -1, -1, -1],
    [5, 2, 10, 5, 4, 2, 4, 0, 2, -1, -1, -1, -1, -1, -1, -1],
    [2, 10, 5, 3, 2, 5, 3, 5, 4, 3, 4, 8, -1, -1, -1, -1],
    [9, 5, 4, 2, 3, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [0, 11, 2, 0, 8, 11, 4, 9, 5, -1, -1, -1, -1, -1, -1, -1],
    [0, 5, 4, 0, 1, 5, 2, 3, 11, -1, -1, -1, -1, -1, -1, -1],
    [2, 1, 5, 2, 5, 8, 2, 8, 11, 4, 8, 5, -1, -1, -1, -1],
    [10, 3, 11, 10, 1, 3, 9, 5, 4, -1, -1, -1, -1, -1, -1, -1],
    [4, 9, 5, 0, 8, 1, 8, 10, 1, 8, 11, 10, -1, -1, -1, -1],
    [5, 4, 0, 5, 0, 11, 5, 11, 10, 11, 0, 3, -1, -1, -1, -1],
    [5, 4, 8, 5, 8, 10, 10, 8, 11, -1, -1, -1, -1, -1, -1, -1],
    [9, 7, 8, 5, 7, 9, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [9, 3, 0, 9, 5, 3, 5, 7, 3, -1, -1, -1, -1, -1, -1, -1],
    [0, 7, 8, 0, 1, 7, 1, 5, 7, -1, -1, -1, -1, -1, -1, -1],
    [1, 5, 3, 3, 5, 7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [9, 7, 8, 9, 5, 7, 10, 1, 2, -1, -1, -1, -1, -1, -1, -1],
    [10, 1, 2, 9, 5, 0, 5, 3, 0, 5, 7, 3, -1, -1, -1, -1],
    [8, 0, 2, 8, 2, 5, 8, 5, 7, 10, 5, 2, -1, -1, -1, -1],
    [2, 10, 5, 2, 5, 3, 3, 5, 7, -1, -1, -1, -1, -1, -1, -1],
    [7, 9, 5, 7, 8, 9, 3, 11, 2, -1, -1, -1, -1, -1, -1, -1],
    [9, 5, 7, 9, 7, 2, 9, 2, 0, 2, 7, 11, -1, -1, -1, -1],
    [2, 3, 11, 0, 1, 8, 1, 7, 8, 1, 5, 7, -1, -1, -1, -1],
    [11, 2, 1, 11, 1, 7, 7, 1, 5, -1, -1, -1, -1, -1, -1, -1],
    [9, 5, 8, 8, 5, 7, 10, 1, 3, 10, 3, 11, -1, -1, -1, -1],
    [5, 7, 0, 5, 0, 9, 7, 11, 0, 1, 0, 10, 11, 10, 0, -1],
    [11, 10, 0, 11, 0, 3, 10, 5, 0, 8, 0, 7, 5, 7, 0, -1],
    [11, 10, 5, 7, 11, 5, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [10, 6, 5, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [0, 8, 3, 5, 10, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [9, 0, 1, 5, 10, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [1, 8, 3, 1, 9, 8, 5, 10, 6, -1, -1, -1, -1, -1, -1, -1],
    [1, 6, 5, 2, 6, 1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [1, 6, 5, 1, 2, 6, 3, 0, 8, -1, -1, -1, -1, -1, -1, -1],
    [9, 6, 5, 9, 0, 6, 0, 2, 6, -1, -1, -1, -1, -1, -1, -1],
    [5, 9, 8, 5, 8, 2, 5, 2, 6, 3, 2, 8, -1, -1, -1, -1],
    [2, 3, 11, 10, 6, 5, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [11, 0, 8, 11, 2, 0, 10, 6, 5, -1, -1, -1, -1, -1, -1, -1],
    [0, 1, 9, 2, 3, 11, 5, 10, 6, -1, -1, -1, -1, -1, -1, -1],
    [5, 10, 6, 1, 9, 2, 9, 11, 2, 9, 8, 11, -1, -1, -1, -1],
    [6, 3, 11, 6, 5, 3, 5, 1, 3, -1, -1, -1, -1, -1, -1, -1],
    [0, 8, 11, 0, 11, 5, 0, 5, 1, 5, 11, 6, -1, -1, -1, -1],
    [3, 11, 6, 0, 3, 6, 0, 6, 5, 0, 5, 9, -1, -1, -1, -1],
    [6, 5, 9, 6, 9, 11, 11, 9, 8, -1, -1, -1, -1, -1, -1, -1],
    [5, 10, 6, 4, 7, 8, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [4, 3, 0, 4, 7, 3, 6, 5, 10, -1, -1, -1, -1, -1, -1, -1],
    [1, 9, 0, 5, 10, 6, 8, 4, 7, -1, -1, -1, -1, -1, -1, -1],
    [10, 6, 5, 1, 9, 7, 1, 7, 3, 7, 9, 4, -1, -1, -1, -1],
    [6, 1, 2, 6, 5, 1, 4, 7, 8, -1, -1, -1, -1, -1, -1, -1],
    [1, 2, 5, 5, 2, 6, 3, 0, 4, 3, 4, 7, -1, -1, -1, -1],
    [8, 4, 7, 9, 0, 5, 0, 6, 5, 0, 2, 6, -1, -1, -1, -1],
    [7, 3, 9, 7, 9, 4, 3, 2, 9, 5, 9, 6, 2, 6, 9, -1],
    [3, 11, 2, 7, 8, 4, 10, 6, 5, -1, -1, -1, -1, -1, -1, -1],
    [5, 10, 6, 4, 7, 2, 4, 2, 0, 2, 7, 11, -1, -1, -1, -1],
    [0, 1, 9, 4, 7, 8, 2, 3, 11, 5, 10, 6, -1, -1, -1, -1],
    [9, 2, 1, 9, 11, 2, 9, 4, 11, 7, 11, 4, 5, 10, 6, -1],
    [8, 4, 7, 3, 11, 5, 3, 5, 1, 5, 11, 6, -1, -1, -1, -1],
    [5, 1, 11, 5, 11, 6, 1, 0, 11, 7, 11, 4, 0, 4, 11, -1],
    [0, 5, 9, 0, 6, 5, 0, 3, 6, 11, 6, 3, 8, 4, 7, -1],
    [6, 5, 9, 6, 9, 11, 4, 7, 9, 7, 11, 9, -1, -1, -1, -1],
    [10, 4, 9, 6, 4, 10, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [4, 10, 6, 4, 9, 10, 0, 8, 3, -1, -1, -1, -1, -1, -1, -1],
    [10, 0, 1, 10, 6, 0, 6, 4, 0, -1, -1, -1, -1, -1, -1, -1],
    [8, 3, 1, 8, 1, 6, 8, 6, 4, 6, 1, 10, -1, -1, -1, -1],
    [1, 4, 9, 1, 2, 4, 2, 6, 4, -1, -1, -1, -1, -1, -1, -1],
    [3, 0, 8, 1, 2, 9, 2, 4, 9, 2, 6, 4, -1, -1, -1, -1],
    [0, 2, 4, 4, 2, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [8, 3, 2, 8, 2, 4, 4, 2, 6, -1, -1, -1, -1, -1, -1, -1],
    [10, 4, 9, 10, 6, 4, 11, 2, 3, -1, -1, -1, -1, -1, -1, -1],
    [0, 8, 2, 2, 8, 11, 4, 9, 10, 4, 10, 6, -1, -1, -1, -1],
    [3, 11, 2, 0, 1, 6, 0, 6, 4, 6, 1, 10, -1, -1, -1, -1],
    [6, 4, 1, 6, 1, 10, 4, 8, 1, 2, 1, 11, 8, 11, 1, -1],
    [9, 6, 4, 9, 3, 6, 9, 1, 3, 11, 6, 3, -1, -1, -1, -1],
    [8, 11, 1, 8, 1, 0, 11, 6, 1, 9, 1, 4, 6, 4, 1, -1],
    [3, 11, 6, 3, 6, 0, 0, 6, 4, -1, -1, -1, -1, -1, -1, -1],
    [6, 4, 8, 11, 6, 8, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [7, 10, 6, 7, 8, 10, 8, 9, 10, -1, -1, -1, -1, -1, -1, -1],
    [0, 7, 3, 0, 10, 7, 0, 9, 10, 6, 7, 10, -1, -1, -1, -1],
    [10, 6, 7, 1, 10, 7, 1, 7, 8, 1, 8, 0, -1, -1, -1, -1],
    [10, 6, 7, 10, 7, 1, 1, 7, 3, -1, -1, -1, -1, -1, -1, -1],
    [1, 2, 6, 1, 6, 8, 1, 8, 9, 8, 6, 7, -1, -1, -1, -1],
    [2, 6, 9, 2, 9, 1, 6, 7, 9, 0, 9, 3, 7, 3, 9, -1],
    [7, 8, 0, 7, 0, 6, 6, 0, 2, -1, -1, -1, -1, -1, -1, -1],
    [7, 3, 2, 6, 7, 2, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [2, 3, 11, 10, 6, 8, 10, 8, 9, 8, 6, 7, -1, -1, -1, -1],
    [2, 0, 7, 2, 7, 11, 0, 9, 7, 6, 7, 10, 9, 10, 7, -1],
    [1, 8, 0, 1, 7, 8, 1, 10, 7, 6, 7, 10, 2, 3, 11, -1],
    [11, 2, 1, 11, 1, 7, 10, 6, 1, 6, 7, 1, -1, -1, -1, -1],
    [8, 9, 6, 8, 6, 7, 9, 1, 6, 11, 6, 3, 1, 3, 6, -1],
    [0, 9, 1, 11, 6, 7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [7, 8, 0, 7, 0, 6, 3, 11, 0, 11, 6, 0, -1, -1, -1, -1],
    [7, 11, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [7, 6, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [3, 0, 8, 11, 7, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [0, 1, 9, 11, 7, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [8, 1, 9, 8, 3, 1, 11, 7, 6, -1, -1, -1, -1, -1, -1, -1],
    [10, 1, 2, 6, 11, 7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [1, 2, 10, 3, 0, 8, 6, 11, 7, -1, -1, -1, -1, -1, -1, -1],
    [2, 9, 0, 2, 10, 9, 6, 11, 7, -1, -1, -1, -1, -1, -1, -1],
    [6, 11, 7, 2, 10, 3, 10, 8, 3, 10, 9, 8, -1, -1, -1, -1],
    [7, 2, 3, 6, 2, 7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [7, 0, 8, 7, 6, 0, 6, 2, 0, -1, -1, -1, -1, -1, -1, -1],
    [2, 7, 6, 2, 3, 7, 0, 1, 9, -1, -1, -1, -1, -1, -1, -1],
    [1, 6, 2, 1, 8, 6, 1, 9, 8, 8, 7, 6, -1, -1, -1, -1],
    [10, 7, 6, 10, 1, 7, 1, 3, 7, -1, -1, -1, -1, -1, -1, -1],
    [10, 7, 6, 1, 7, 10, 1, 8, 7, 1, 0, 8, -1, -1, -1, -1],
    [0, 3, 7, 0, 7, 10, 0, 10, 9, 6, 10, 7, -1, -1, -1, -1],
    [7, 6, 10, 7, 10, 8, 8, 10, 9, -1, -1, -1, -1, -1, -1, -1],
    [6, 8, 4, 11, 8, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [3, 6, 11, 3, 0, 6, 0, 4, 6, -1, -1, -1, -1, -1, -1, -1],
    [8, 6, 11, 8, 4, 6, 9, 0, 1, -1, -1, -1, -1, -1, -1, -1],
    [9, 4, 6, 9, 6, 3, 9, 3, 1, 11, 3, 6, -1, -1, -1, -1],
    [6, 8, 4, 6, 11, 8, 2, 10, 1, -1, -1, -1, -1, -1, -1, -1],
    [1, 2, 10, 3, 0, 11, 0, 6, 11, 0, 4, 6, -1, -1, -1, -1],
    [4, 11, 8, 4, 6, 11, 0, 2, 9, 2, 10, 9, -1, -1, -1, -1],
    [10, 9, 3, 10, 3, 2, 9, 4, 3, 11, 3, 6, 4, 6, 3, -1],
    [8, 2, 3, 8, 4, 2, 4, 6, 2, -1, -1, -1, -1, -1, -1, -1],
    [0, 4, 2, 4, 6, 2, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [1, 9, 0, 2, 3, 4, 2, 4, 6, 4, 3, 8, -1, -1, -1, -1],
    [1, 9, 4, 1, 4, 2, 2, 4, 6, -1, -1, -1, -1, -1, -1, -1],
    [8, 1, 3, 8, 6, 1, 8, 4, 6, 6, 10, 1, -1, -1, -1, -1],
    [10, 1, 0, 10, 0, 6, 6, 0, 4, -1, -1, -1, -1, -1, -1, -1],
    [4, 6, 3, 4, 3, 8, 6, 10, 3, 0, 3, 9, 10, 9, 3, -1],
    [10, 9, 4, 6, 10, 4, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [4, 9, 5, 7, 6, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [0, 8, 3, 4, 9, 5, 11, 7, 6, -1, -1, -1, -1, -1, -1, -1],
    [5, 0, 1, 5, 4, 0, 7, 6, 11, -1, -1, -1, -1, -1, -1, -1],
    [11, 7, 6, 8, 3, 4, 3, 5, 4, 3, 1, 5, -1, -1, -1, -1],
    [9, 5, 4, 10, 1, 2, 7, 6, 11, -1, -1, -1, -1, -1, -1, -1],
    [6, 11, 7, 1, 2, 10, 0, 8, 3, 4, 9, 5, -1, -1, -1, -1],
    [7, 6, 11, 5, 4, 10, 4, 2, 10, 4, 0, 2, -1, -1, -1, -1],
    [3, 4, 8, 3, 5, 4, 3, 2, 5, 10, 5, 2, 11, 7, 6, -1],
    [7, 2, 3, 7, 6, 2, 5, 4, 9, -1, -1, -1, -1, -1, -1, -1],
    [9, 5, 4, 0, 8, 6, 0, 6, 2, 6, 8, 7, -1, -1, -1, -1],
    [3, 6, 2, 3, 7, 6, 1, 5, 0, 5, 4, 0, -1, -1, -1, -1],
    [6, 2, 8, 6, 8, 7, 2, 1, 8, 4, 8, 5, 1, 5, 8, -1],
    [9, 5, 4, 10, 1, 6, 1, 7, 6, 1, 3, 7, -1, -1, -1, -1],
    [1, 6, 10, 1, 7, 6, 1, 0, 7, 8, 7, 0, 9, 5, 4, -1],
    [4, 0, 10, 4, 10, 5, 0, 3, 10, 6, 10, 7, 3, 7, 10, -1],
    [7, 6, 10, 7, 10, 8, 5, 4, 10, 4, 8, 10, -1, -1, -1, -1],
    [6, 9, 5, 6, 11, 9, 11, 8, 9, -1, -1, -1, -1, -1, -1, -1],
    [3, 6, 11, 0, 6, 3, 0, 5, 6, 0, 9, 5, -1, -1, -1, -1],
    [0, 11, 8, 0, 5, 11, 0, 1, 5, 5, 6, 11, -1, -1, -1, -1],
    [6, 11, 3, 6, 3, 5, 5, 3, 1, -1, -1, -1, -1, -1, -1, -1],
    [1, 2, 10, 9, 5, 11, 9, 11, 8, 11, 5, 6, -1, -1, -1, -1],
    [0, 11, 3, 0, 6, 11, 0, 9, 6, 5, 6, 9, 1, 2, 10, -1],
    [11, 8, 5, 11, 5, 6, 8, 0, 5, 10, 5, 2, 0, 2, 5, -1],
    [6, 11, 3, 6, 3, 5, 2, 10, 3, 10, 5, 3, -1, -1, -1, -1],
    [5, 8, 9, 5, 2, 8, 5, 6, 2, 3, 8, 2, -1, -1, -1, -1],
    [9, 5, 6, 9, 6, 0, 0, 6, 2, -1, -1, -1, -1, -1, -1, -1],
    [1, 5, 8, 1, 8, 0, 5, 6, 8, 3, 8, 2, 6, 2, 8, -1],
    [1, 5, 6, 2, 1, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [1, 3, 6, 1, 6, 10, 3, 8, 6, 5, 6, 9, 8, 9, 6, -1],
    [10, 1, 0, 10, 0, 6, 9, 5, 0, 5, 6, 0, -1, -1, -1, -1],
    [0, 3, 8, 5, 6, 10, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [10, 5, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [11, 5, 10, 7, 5, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [11, 5, 10, 11, 7, 5, 8, 3, 0, -1, -1, -1, -1, -1, -1, -1],
    [5, 11, 7, 5, 10, 11, 1, 9, 0, -1, -1, -1, -1, -1, -1, -1],
    [10, 7, 5, 10, 11, 7, 9, 8, 1, 8, 3, 1, -1, -1, -1, -1],
    [11, 1, 2, 11, 7, 1, 7, 5, 1, -1, -1, -1, -1, -1, -1, -1],
    [0, 8, 3, 1, 2, 7, 1, 7, 5, 7, 2, 11, -1, -1, -1, -1],
    [9, 7, 5, 9, 2, 7, 9, 0, 2, 2, 11, 7, -1, -1, -1, -1],
    [7, 5, 2, 7, 2, 11, 5, 9, 2, 3, 2, 8, 9, 8, 2, -1],
    [2, 5, 10, 2, 3, 5, 3, 7, 5, -1, -1, -1, -1, -1, -1, -1],
    [8, 2, 0, 8, 5, 2, 8, 7, 5, 10, 2, 5, -1, -1, -1, -1],
    [9, 0, 1, 5, 10, 3, 5, 3, 7, 3, 10, 2, -1, -1, -1, -1],
    [9, 8, 2, 9, 2, 1, 8, 7, 2, 10, 2, 5, 7, 5, 2, -1],
    [1, 3, 5, 3, 7, 5, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [0, 8, 7, 0, 7, 1, 1, 7, 5, -1, -1, -1, -1, -1, -1, -1],
    [9, 0, 3, 9, 3, 5, 5, 3, 7, -1, -1, -1, -1, -1, -1, -1],
    [9, 8, 7, 5, 9, 7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [5, 8, 4, 5, 10, 8, 10, 11, 8, -1, -1, -1, -1, -1, -1, -1],
    [5, 0, 4, 5, 11, 0, 5, 10, 11, 11, 3, 0, -1, -1, -1, -1],
    [0, 1, 9, 8, 4, 10, 8, 10, 11, 10, 4, 5, -1, -1, -1, -1],
    [10, 11, 4, 10, 4, 5, 11, 3, 4, 9, 4, 1, 3, 1, 4, -1],
    [2, 5, 1, 2, 8, 5, 2, 11, 8, 4, 5, 8, -1, -1, -1, -1],
    [0, 4, 11, 0, 11, 3, 4, 5, 11, 2, 11, 1, 5, 1, 11, -1],
    [0, 2, 5, 0, 5, 9, 2, 11, 5, 4, 5, 8, 11, 8, 5, -1],
    [9, 4, 5, 2, 11, 3, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [2, 5, 10, 3, 5, 2, 3, 4, 5, 3, 8, 4, -1, -1, -1, -1],
    [5, 10, 2, 5, 2, 4, 4, 2, 0, -1, -1, -1, -1, -1, -1, -1],
    [3, 10, 2, 3, 5, 10, 3, 8, 5, 4, 5, 8, 0, 1, 9, -1],
    [5, 10, 2, 5, 2, 4, 1, 9, 2, 9, 4, 2, -1, -1, -1, -1],
    [8, 4, 5, 8, 5, 3, 3, 5, 1, -1, -1, -1, -1, -1, -1, -1],
    [0, 4, 5, 1, 0, 5, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [8, 4, 5, 8, 5, 3, 9, 0, 5, 0, 3, 5, -1, -1, -1, -1],
    [9, 4, 5, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [4, 11, 7, 4, 9, 11, 9, 10, 11, -1, -1, -1, -1, -1, -1, -1],
    [0, 8, 3, 4, 9, 7, 9, 11, 7, 9, 10, 11, -1, -1, -1, -1],
    [1, 10, 11, 1, 11, 4, 1, 4, 0, 7, 4, 11, -1, -1, -1, -1],
    [3, 1, 4, 3, 4, 8, 1, 10, 4, 7, 4, 11, 10, 11, 4, -1],
    [4, 11, 7, 9, 11, 4, 9, 2, 11, 9, 1, 2, -1, -1, -1, -1],
    [9, 7, 4, 9, 11, 7, 9, 1, 11, 2, 11, 1, 0, 8, 3, -1],
    [11, 7, 4, 11, 4, 2, 2, 4, 0, -1, -1, -1, -1, -1, -1, -1],
    [11, 7, 4, 11, 4, 2, 8, 3, 4, 3, 2, 4, -1, -1, -1, -1],
    [2, 9, 10, 2, 7, 9, 2, 3, 7, 7, 4, 9, -1, -1, -1, -1],
    [9, 10, 7, 9, 7, 4, 10, 2, 7, 8, 7, 0, 2, 0, 7, -1],
    [3, 7, 10, 3, 10, 2, 7, 4, 10, 1, 10, 0, 4, 0, 10, -1],
    [1, 10, 2, 8, 7, 4, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [4, 9, 1, 4, 1, 7, 7, 1, 3, -1, -1, -1, -1, -1, -1, -1],
    [4, 9, 1, 4, 1, 7, 0, 8, 1, 8, 7, 1, -1, -1, -1, -1],
    [4, 0, 3, 7, 4, 3, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [4, 8, 7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [9, 10, 8, 10, 11, 8, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [3, 0, 9, 3, 9, 11, 11, 9, 10, -1, -1, -1, -1, -1, -1, -1],
    [0, 1, 10, 0, 10, 8, 8, 10, 11, -1, -1, -1, -1, -1, -1, -1],
    [3, 1, 10, 11, 3, 10, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [1, 2, 11, 1, 11, 9, 9, 11, 8, -1, -1, -1, -1, -1, -1, -1],
    [3, 0, 9, 3, 9, 11, 1, 2, 9, 2, 11, 9, -1, -1, -1, -1],
    [0, 2, 11, 8, 0, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [3, 2, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [2, 3, 8, 2, 8, 10, 10, 8, 9, -1, -1, -1, -1, -1, -1, -1],
    [9, 10, 2, 0, 9, 2, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [2, 3, 8, 2, 8, 10, 0, 1, 8, 1, 10, 8, -1, -1, -1, -1],
    [1, 10, 2, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [1, 3, 8, 9, 1, 8, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [0, 9, 1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [0, 3, 8, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [-1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::ModelConfig;

    fn tiny_model(bayesian: bool, init_std: f64) -> Model<f32> {
        Model::new(ModelConfig {
            depth: 2,
            base_channels: 2,
            branch_channels: 2,
            bayesian,
            init_std,
            seed: 11,
            ..Default::default()
        })
        .unwrap()
    }

    fn ramp_volume(dims: [usize; 3]) -> Volume {
        let n = dims[0] * dims[1] * dims[2];
        let data = (0..n).map(|i| i as f32 / n as f32).collect();
        Volume::new(dims, [1.0; 3], data).unwrap()
    }

    #[test]
    fn deterministic_limit_identical_members() {
        let model = tiny_model(false, 0.01);
        let vol = ramp_volume([16, 16, 16]);
        let e = mc_predict(&model, &vol, 16, 3, 7, false).unwrap();
        assert_eq!(e.members.len(), 3);
        assert_eq!(e.members[0].data, e.members[1].data);
        assert_eq!(e.members[0].data, e.members[2].data);
    }

    #[test]
    fn same_seed_identical_ensembles() {
        let model = tiny_model(true, 0.05);
        let vol = ramp_volume([16, 16, 16]);
        let a = mc_predict(&model, &vol, 16, 2, 42, false).unwrap();
        let b = mc_predict(&model, &vol, 16, 2, 42, false).unwrap();
        for (x, y) in a.members.iter().zip(&b.members) {
            assert_eq!(x.data, y.data);
        }
        let c = mc_predict(&model, &vol, 16, 2, 43, false).unwrap();
        assert_ne!(a.members[0].data, c.members[0].data);
    }

    #[test]
    fn single_crop_volume_matches_direct_prediction() {
        let model = tiny_model(false, 0.01);
        let vol = ramp_volume([16, 16, 16]);
        let full = predict_volume(&model, &vol, 16, None, true).unwrap();
        let x = Tensor::from_vec(
            &[1usize, 16, 16, 16],
            vol.data.iter().map(|&v| v).collect::<Vec<f32>>(),
        );
        let direct = predict(&model, &x, None).unwrap();
        for (a, &b) in full.data.iter().zip(&direct.probs.data) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn sliding_window_covers_non_multiple_dims() {
        let model = tiny_model(false, 0.01);
        let vol = ramp_volume([20, 16, 24]);
        let out = predict_volume(&model, &vol, 16, None, false).unwrap();
        assert_eq!(out.dims, [20, 16, 24]);
        assert!(out.data.iter().all(|p| (0.0..=1.0).contains(p)));
        // overlap-averaged variant also covers everything
        let out2 = predict_volume(&model, &vol, 16, None, true).unwrap();
        assert_eq!(out2.dims, [20, 16, 24]);
    }

    fn members_at(vals: &[f32]) -> PredictionEnsemble {
        PredictionEnsemble {
            members: vals
                .iter()
                .map(|&v| Volume::new([2, 2, 2], [1.0; 3], vec![v; 8]).unwrap())
                .collect(),
            seed: 0,
        }
    }

    #[test]
    fn bounds_examples() {
        // identical members
        let u = confidence_bounds(&members_at(&[0.4, 0.4]), BoundsMethod::Minmax).unwrap();
        assert_eq!(u.mean.data[0], 0.4);
        assert_eq!(u.lower.data[0], 0.4);
        assert_eq!(u.upper.data[0], 0.4);
        assert_eq!(u.width.data[0], 0.0);
        // {0.2, 0.8} minmax
        let u = confidence_bounds(&members_at(&[0.2, 0.8]), BoundsMethod::Minmax).unwrap();
        assert!((u.lower.data[0] - 0.2).abs() < 1e-6);
        assert!((u.mean.data[0] - 0.5).abs() < 1e-6);
        assert!((u.upper.data[0] - 0.8).abs() < 1e-6);
        // {0.2, 0.8} normal: 0.5 ± 1.96*0.42426 clamps to (0, 1)
        let u = confidence_bounds(&members_at(&[0.2, 0.8]), BoundsMethod::Normal).unwrap();
        assert_eq!(u.lower.data[0], 0.0);
        assert_eq!(u.upper.data[0], 1.0);
        // n=1 normal rejected, minmax fine
        assert!(confidence_bounds(&members_at(&[0.3]), BoundsMethod::Normal).is_err());
        let u = confidence_bounds(&members_at(&[0.3]), BoundsMethod::Minmax).unwrap();
        assert_eq!(u.mean.data[0], u.lower.data[0]);
    }

    #[test]
    fn bounds_ordering_random() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let members: Vec<Volume> = (0..5)
            .map(|_| {
                Volume::new(
                    [3, 3, 3],
                    [1.0; 3],
                    (0..27).map(|_| rng.random::<f32>()).collect(),
                )
                .unwrap()
            })
            .collect();
        let e = PredictionEnsemble { members, seed: 0 };
        for method in [BoundsMethod::Minmax, BoundsMethod::Normal] {
            let u = confidence_bounds(&e, method).unwrap();
            for i in 0..27 {
                assert!(u.lower.data[i] <= u.mean.data[i] + 1e-6);
                assert!(u.mean.data[i] <= u.upper.data[i] + 1e-6);
                assert!(u.width.data[i] >= 0.0);
            }
        }
    }

    #[test]
    fn ensemble_stats_match_streaming_reference() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let members: Vec<Volume> = (0..10)
            .map(|_| {
                Volume::new(
                    [2, 2, 2],
                    [1.0; 3],
                    (0..8).map(|_| rng.random::<f32>()).collect(),
                )
                .unwrap()
            })
            .collect();
        let e = PredictionEnsemble { members, seed: 0 };
        let u = confidence_bounds(&e, BoundsMethod::Minmax).unwrap();
        for i in 0..8 {
            // Welford streaming mean
            let mut mean = 0.0f64;
            for (k, m) in e.members.iter().enumerate() {
                mean += (m.data[i] as f64 - mean) / (k + 1) as f64;
            }
            // the map stores f32; compare at f32 resolution
            assert!((mean as f32 as f64 - u.mean.data[i] as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn width_monotone_in_posterior_std() {
        let mut narrow = tiny_model(true, 0.02);
        let vol = ramp_volume([16, 16, 16]);
        let e1 = mc_predict(&narrow, &vol, 16, 4, 3, false).unwrap();
        let w1 = confidence_bounds(&e1, BoundsMethod::Minmax).unwrap();
        // double every posterior std (softplus is monotone; rho for 2x std)
        for vk in &mut narrow.log_layers {
            let stds = vk.posterior_std();
            for (r, s) in vk.rho.data.iter_mut().zip(stds) {
                *r = crate::tensor::softplus_inv(2.0 * s) as f32;
            }
        }
        let e2 = mc_predict(&narrow, &vol, 16, 4, 3, false).unwrap();
        let w2 = confidence_bounds(&e2, BoundsMethod::Minmax).unwrap();
        let avg = |v: &Volume| v.data.iter().map(|&x| x as f64).sum::<f64>() / v.numel() as f64;
        assert!(avg(&w2.width) >= avg(&w1.width));
    }

    #[test]
    fn width_stats() {
        let mut gt = Volume::new([6, 6, 6], [1.0; 3], vec![0.0; 216]).unwrap();
        for x in 1..5 {
            for y in 1..5 {
                for z in 1..5 {
                    *gt.at_mut(x, y, z) = 1.0;
                }
            }
        }
        // width 1 on the gt surface, 0 inside
        let surf = surface_voxels(&gt);
        let mut width = Volume::new([6, 6, 6], [1.0; 3], vec![0.0; 216]).unwrap();
        for &[x, y, z] in &surf {
            *width.at_mut(x, y, z) = 1.0;
        }
        let zero = Volume::new([6, 6, 6], [1.0; 3], vec![0.0; 216]).unwrap();
        let u = UncertaintyMap {
            mean: zero.clone(),
            lower: zero.clone(),
            upper: width.clone(),
            width,
        };
        let s = boundary_width_stat(&u, &gt).unwrap();
        assert_eq!(s.boundary_mean_width, 1.0);
        assert_eq!(s.interior_mean_width, 0.0);
        // all-zero width
        let u0 = UncertaintyMap {
            mean: zero.clone(),
            lower: zero.clone(),
            upper: zero.clone(),
            width: zero.clone(),
        };
        let s0 = boundary_width_stat(&u0, &gt).unwrap();
        assert_eq!(s0.boundary_mean_width, 0.0);
        assert_eq!(s0.interior_mean_width, 0.0);
        // empty foreground error
        assert!(boundary_width_stat(&u0, &zero).is_err());
    }

    fn ball_volume(n: usize, r: f64, spacing: [f64; 3]) -> Volume {
        let c = (n as f64 - 1.0) / 2.0;
        let data = (0..n * n * n)
            .map(|i| {
                let x = (i / (n * n)) as f64 - c;
                let y = ((i / n) % n) as f64 - c;
                let z = (i % n) as f64 - c;
                if (x * x + y * y + z * z).sqrt() <= r {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        Volume::new([n; 3], spacing, data).unwrap()
    }

    #[test]
    fn marching_cubes_ball_is_watertight() {
        let ball = ball_volume(12, 4.0, [1.0; 3]);
        let mesh = marching_cubes(&ball, 0.5).unwrap();
        assert!(mesh.vertices.len() > 50);
        assert_eq!(mesh.euler_characteristic(), 2, "sphere topology expected");
    }

    #[test]
    fn marching_cubes_empty_and_scaling() {
        let zero = Volume::new([6, 6, 6], [1.0; 3], vec![0.0; 216]).unwrap();
        assert!(marching_cubes(&zero, 0.5).is_err());
        let a = marching_cubes(&ball_volume(10, 3.0, [1.0; 3]), 0.5).unwrap();
        let b = marching_cubes(&ball_volume(10, 3.0, [2.0, 1.0, 0.5]), 0.5).unwrap();
        assert_eq!(a.vertices.len(), b.vertices.len());
        for (va, vb) in a.vertices.iter().zip(&b.vertices) {
            assert!((va[0] * 2.0 - vb[0]).abs() < 1e-9);
            assert!((va[1] - vb[1]).abs() < 1e-9);
            assert!((va[2] * 0.5 - vb[2]).abs() < 1e-9);
        }
        assert!(marching_cubes(&a_volume_level_check(), 1.5).is_err());
    }

    fn a_volume_level_check() -> Volume {
        ball_volume(6, 2.0, [1.0; 3])
    }

    #[test]
    fn obj_export_roundtrip_lines() {
        let dir = std::env::temp_dir().join("logbseg_mesh_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ball.obj");
        export_surface(&ball_volume(10, 3.0, [1.0; 3]), 0.5, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let nv = text.lines().filter(|l| l.starts_with("v ")).count();
        let nf = text.lines().filter(|l| l.starts_with("f ")).count();
        let mesh = marching_cubes(&ball_volume(10, 3.0, [1.0; 3]), 0.5).unwrap();
        assert_eq!(nv, mesh.vertices.len());
        assert_eq!(nf, mesh.triangles.len());
        std::fs::remove_dir_all(&dir).ok();
    }
}
