//! Segmentation quality metrics: Dice coefficient, average surface distance,
//! and symmetric Hausdorff distance, with millimeter spacing applied.
//!
//! Surface distances use an exact anisotropic Euclidean distance transform
//! (per-axis lower-envelope sweeps); the unit tests compare it against an
//! all-pairs brute-force oracle.

use crate::error::{Error, Result};
use crate::voxelio::Volume;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Ma,
    Sa,
    Whole,
}

/// Metrics of one (prediction, ground truth) pair over one region.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub region: Region,
    pub dice: f64,
    /// None when either surface is empty in the region.
    pub asd_mm: Option<f64>,
    pub hausdorff_mm: Option<f64>,
    pub n_pred_voxels: usize,
    pub n_gt_voxels: usize,
}

fn check_same_shape(a: &Volume, b: &Volume) -> Result<()> {
    if a.dims != b.dims {
        return Err(Error::Shape(format!(
            "volume shapes differ: {:?} vs {:?}",
            a.dims, b.dims
        )));
    }
    Ok(())
}

/// Dice coefficient 2|A∩B| / (|A|+|B|); both-empty pairs score 1.0.
pub fn dice(a: &Volume, b: &Volume) -> Result<f64> {
    check_same_shape(a, b)?;
    let mut na = 0usize;
    let mut nb = 0usize;
    let mut inter = 0usize;
    for (&x, &y) in a.data.iter().zip(&b.data) {
        let fa = x >= 0.5;
        let fb = y >= 0.5;
        na += fa as usize;
        nb += fb as usize;
        inter += (fa && fb) as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

/// Foreground voxels with at least one 6-neighbor that is background or
/// outside the volume.
pub fn surface_voxels(m: &Volume) -> Vec<[usize; 3]> {
    let [dx, dy, dz] = m.dims;
    let mut out = Vec::new();
    for x in 0..dx {
        for y in 0..dy {
            for z in 0..dz {
                if m.at(x, y, z) < 0.5 {
                    continue;
                }
                let mut boundary = false;
                for (ax, d) in [(0usize, -1isize), (0, 1), (1, -1), (1, 1), (2, -1), (2, 1)] {
                    let mut p = [x as isize, y as isize, z as isize];
                    p[ax] += d;
                    if p[ax] < 0 || p[ax] >= m.dims[ax] as isize {
                        boundary = true;
                        break;
                    }
                    if m.at(p[0] as usize, p[1] as usize, p[2] as usize) < 0.5 {
                        boundary = true;
                        break;
                    }
                }
                if boundary {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

const INF: f64 = f64::INFINITY;

/// One-dimensional squared-distance lower envelope over samples at positions
/// i*spacing with seed costs f[i].
fn edt_1d(f: &[f64], spacing: f64, out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut zbound = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    zbound[0] = -INF;
    zbound[1] = INF;
    let pos = |i: usize| i as f64 * spacing;
    for q in 1..n {
        if f[q] == INF {
            continue;
        }
        loop {
            let p = v[k];
            if f[p] == INF {
                // first finite parabola
                if k == 0 {
                    v[0] = q;
                    zbound[0] = -INF;
                    zbound[1] = INF;
                    break;
                }
                k -= 1;
                continue;
            }
            let s = ((f[q] + pos(q) * pos(q)) - (f[p] + pos(p) * pos(p)))
                / (2.0 * pos(q) - 2.0 * pos(p));
            if s <= zbound[k] {
                if k == 0 {
                    v[0] = q;
                    zbound[0] = -INF;
                    zbound[1] = INF;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                zbound[k] = s;
                zbound[k + 1] = INF;
                break;
            }
        }
    }
    let mut k = 0usize;
    for q in 0..n {
        while zbound[k + 1] < pos(q) {
            k += 1;
        }
        let p = v[k];
        out[q] = if f[p] == INF {
            INF
        } else {
            let d = pos(q) - pos(p);
            d * d + f[p]
        };
    }
}

/// Exact squared Euclidean distance (mm²) from every voxel to the nearest
/// seed voxel, honoring anisotropic spacing. All-infinite when no seeds.
pub fn squared_edt(dims: [usize; 3], spacing: [f64; 3], seeds: &[[usize; 3]]) -> Vec<f64> {
    let [dx, dy, dz] = dims;
    let mut dist = vec![INF; dx * dy * dz];
    let idx = |x: usize, y: usize, z: usize| (x * dy + y) * dz + z;
    for &[x, y, z] in seeds {
        dist[idx(x, y, z)] = 0.0;
    }
    // sweep along z, then y, then x
    let mut buf_in = vec![0.0f64; dx.max(dy).max(dz)];
    let mut buf_out = vec![0.0f64; dx.max(dy).max(dz)];
    for x in 0..dx {
        for y in 0..dy {
            for z in 0..dz {
                buf_in[z] = dist[idx(x, y, z)];
            }
            edt_1d(&buf_in[..dz], spacing[2], &mut buf_out[..dz]);
            for z in 0..dz {
                dist[idx(x, y, z)] = buf_out[z];
            }
        }
    }
    for x in 0..dx {
        for z in 0..dz {
            for y in 0..dy {
                buf_in[y] = dist[idx(x, y, z)];
            }
            edt_1d(&buf_in[..dy], spacing[1], &mut buf_out[..dy]);
            for y in 0..dy {
                dist[idx(x, y, z)] = buf_out[y];
            }
        }
    }
    for y in 0..dy {
        for z in 0..dz {
            for x in 0..dx {
                buf_in[x] = dist[idx(x, y, z)];
            }
            edt_1d(&buf_in[..dx], spacing[0], &mut buf_out[..dx]);
            for x in 0..dx {
                dist[idx(x, y, z)] = buf_out[x];
            }
        }
    }
    dist
}

/// Directed surface distances: for each surface voxel of `a`, its distance in
/// mm to the nearest surface voxel of `b`.
fn directed_distances(a: &Volume, b: &Volume, spacing: [f64; 3]) -> Result<Vec<f64>> {
    let sa = surface_voxels(a);
    let sb = surface_voxels(b);
    if sa.is_empty() || sb.is_empty() {
        return Err(Error::Data(
            "surface distance undefined for an empty mask".into(),
        ));
    }
    let [_, dy, dz] = a.dims;
    let dist = squared_edt(a.dims, spacing, &sb);
    Ok(sa
        .iter()
        .map(|&[x, y, z]| dist[(x * dy + y) * dz + z].sqrt())
        .collect())
}

/// Symmetric average surface distance in mm.
pub fn asd(a: &Volume, b: &Volume, spacing: [f64; 3]) -> Result<f64> {
    check_same_shape(a, b)?;
    let dab = directed_distances(a, b, spacing)?;
    let dba = directed_distances(b, a, spacing)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(0.5 * (mean(&dab) + mean(&dba)))
}

/// Symmetric (100th percentile) Hausdorff distance in mm.
pub fn hausdorff(a: &Volume, b: &Volume, spacing: [f64; 3]) -> Result<f64> {
    check_same_shape(a, b)?;
    let dab = directed_distances(a, b, spacing)?;
    let dba = directed_distances(b, a, spacing)?;
    let max = |v: &[f64]| v.iter().cloned().fold(0.0f64, f64::max);
    Ok(max(&dab).max(max(&dba)))
}

/// Binarize a probability volume at `threshold`.
pub fn binarize(pred: &Volume, threshold: f32) -> Volume {
    let data = pred
        .data
        .iter()
        .map(|&p| if p >= threshold { 1.0 } else { 0.0 })
        .collect();
    Volume {
        dims: pred.dims,
        spacing: pred.spacing,
        origin: pred.origin,
        data,
    }
}

fn intersect(m: &Volume, region: &Volume) -> Volume {
    let data = m
        .data
        .iter()
        .zip(&region.data)
        .map(|(&v, &r)| if r >= 0.5 { v } else { 0.0 })
        .collect();
    Volume {
        dims: m.dims,
        spacing: m.spacing,
        origin: m.origin,
        data,
    }
}

/// Threshold the prediction, optionally restrict both masks to a region, and
/// compute all three metrics. Distances come back as None when either surface
/// is empty after intersection.
pub fn evaluate(
    pred: &Volume,
    gt: &Volume,
    region_mask: Option<&Volume>,
    region: Region,
    threshold: f32,
) -> Result<MetricsReport> {
    check_same_shape(pred, gt)?;
    let mut p = binarize(pred, threshold);
    let mut g = gt.clone();
    if let Some(r) = region_mask {
        check_same_shape(pred, r)?;
        p = intersect(&p, r);
        g = intersect(&g, r);
    }
    let spacing = gt.spacing;
    let d = dice(&p, &g)?;
    let (asd_mm, hausdorff_mm) = match (asd(&p, &g, spacing), hausdorff(&p, &g, spacing)) {
        (Ok(a), Ok(h)) => (Some(a), Some(h)),
        _ => (None, None),
    };
    Ok(MetricsReport {
        region,
        dice: d,
        asd_mm,
        hausdorff_mm,
        n_pred_voxels: p.foreground_count(),
        n_gt_voxels: g.foreground_count(),
    })
}
