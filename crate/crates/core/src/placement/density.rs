//! Bin-overlap density: overflow metric and quadratic penalty.

use super::instance::MicroPlacementInstance;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityEval {
    /// Total excess over `d_t * capacity`, divided by movable area.
    pub overflow: f64,
    /// Squared per-bin excess of the widened density plus that of its blur.
    pub penalty: f64,
    /// Penalty gradient with respect to interleaved positions.
    pub gradient: Vec<f64>,
}

/// Overlap length of `[c - half, c + half]` with `[b0, b1]` and its
/// derivative with respect to `c`.
fn overlap(c: f64, half: f64, b0: f64, b1: f64) -> (f64, f64) {
    let lo = c - half;
    let hi = c + half;
    let len = hi.min(b1) - lo.max(b0);
    if len <= 0.0 {
        return (0.0, 0.0);
    }
    let d_hi = if hi < b1 { 1.0 } else { 0.0 };
    let d_lo = if lo > b0 { 1.0 } else { 0.0 };
    (len, d_hi - d_lo)
}

fn bin_range(lo: f64, hi: f64, size: f64, count: usize) -> std::ops::Range<usize> {
    let first = (lo / size).floor().max(0.0) as usize;
    let last = ((hi / size).ceil().max(0.0) as usize).min(count);
    first.min(count)..last
}

/// Per-bin usage by area-proportional assignment of each cell rectangle.
pub fn bin_usage(instance: &MicroPlacementInstance, positions: &[f64]) -> Vec<f64> {
    let (bw, bh) = (instance.bin_width(), instance.bin_height());
    let mut usage = vec![0.0; instance.bins_x * instance.bins_y];
    for (i, cell) in instance.cells.iter().enumerate() {
        let (x, y) = (positions[2 * i], positions[2 * i + 1]);
        let (hx, hy) = (cell.w / 2.0, cell.h / 2.0);
        for bx in bin_range(x - hx, x + hx, bw, instance.bins_x) {
            let (ox, _) = overlap(x, hx, bx as f64 * bw, (bx + 1) as f64 * bw);
            if ox == 0.0 {
                continue;
            }
            for by in bin_range(y - hy, y + hy, bh, instance.bins_y) {
                let (oy, _) = overlap(y, hy, by as f64 * bh, (by + 1) as f64 * bh);
                usage[by * instance.bins_x + bx] += ox * oy;
            }
        }
    }
    usage
}

/// Width of the Gaussian blur applied to the penalty density, in bins.
pub const BLUR_SIGMA_BINS: f64 = 1.0;

/// Row-stochastic blur weights `k[src][dst]` over `count` bins.
fn blur_kernel(count: usize, sigma: f64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|src| {
            let raw: Vec<f64> = (0..count)
                .map(|dst| {
                    let d = dst as f64 - src as f64;
                    (-0.5 * d * d / (sigma * sigma)).exp()
                })
                .collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|w| w / total).collect()
        })
        .collect()
}

/// Exact overflow, plus the penalty and its gradient on a smoothed density.
///
/// For the penalty each cell footprint is widened to at least one bin per
/// axis, with its density scaled down to keep the area. The penalty sums the
/// squared excess of that bin map and of a Gaussian-blurred copy; the blurred
/// term pushes cells deep inside a crowded region toward free space.
pub fn density_overflow(instance: &MicroPlacementInstance, positions: &[f64]) -> DensityEval {
    let (bw, bh) = (instance.bin_width(), instance.bin_height());
    let (nx, ny) = (instance.bins_x, instance.bins_y);
    let limit = instance.target_density * bw * bh;
    let usage = bin_usage(instance, positions);
    let total_excess: f64 = usage.iter().map(|u| (u - limit).max(0.0)).sum();

    let footprints: Vec<(f64, f64, f64)> = instance
        .cells
        .iter()
        .map(|c| {
            let (hx, hy) = ((c.w / 2.0).max(bw / 2.0), (c.h / 2.0).max(bh / 2.0));
            (hx, hy, c.w * c.h / (4.0 * hx * hy))
        })
        .collect();
    let mut spread = vec![0.0; usage.len()];
    for (i, &(hx, hy, scale)) in footprints.iter().enumerate() {
        let (x, y) = (positions[2 * i], positions[2 * i + 1]);
        for bx in bin_range(x - hx, x + hx, bw, nx) {
            let (ox, _) = overlap(x, hx, bx as f64 * bw, (bx + 1) as f64 * bw);
            for by in bin_range(y - hy, y + hy, bh, ny) {
                let (oy, _) = overlap(y, hy, by as f64 * bh, (by + 1) as f64 * bh);
                spread[by * nx + bx] += scale * ox * oy;
            }
        }
    }
    let kx = blur_kernel(nx, BLUR_SIGMA_BINS);
    let ky = blur_kernel(ny, BLUR_SIGMA_BINS);
    let blurred = separable(&spread, nx, ny, |s, d| kx[s][d], |s, d| ky[s][d]);
    let local: Vec<f64> = spread.iter().map(|u| (u - limit).max(0.0)).collect();
    let global: Vec<f64> = blurred.iter().map(|u| (u - limit).max(0.0)).collect();
    let penalty: f64 = local.iter().chain(&global).map(|e| e * e).sum();
    // d penalty / d spread[c] = 2 e_c + sum_b 2 g_b K(c -> b)
    let doubled: Vec<f64> = global.iter().map(|e| 2.0 * e).collect();
    let mut potential = separable(&doubled, nx, ny, |s, d| kx[d][s], |s, d| ky[d][s]);
    for (p, e) in potential.iter_mut().zip(&local) {
        *p += 2.0 * e;
    }

    let mut gradient = vec![0.0; positions.len()];
    for (i, &(hx, hy, scale)) in footprints.iter().enumerate() {
        let (x, y) = (positions[2 * i], positions[2 * i + 1]);
        for bx in bin_range(x - hx, x + hx, bw, nx) {
            let (ox, dox) = overlap(x, hx, bx as f64 * bw, (bx + 1) as f64 * bw);
            if ox == 0.0 {
                continue;
            }
            for by in bin_range(y - hy, y + hy, bh, ny) {
                let w = potential[by * nx + bx];
                if w == 0.0 {
                    continue;
                }
                let (oy, doy) = overlap(y, hy, by as f64 * bh, (by + 1) as f64 * bh);
                gradient[2 * i] += w * scale * dox * oy;
                gradient[2 * i + 1] += w * scale * ox * doy;
            }
        }
    }
    DensityEval {
        overflow: total_excess / instance.total_cell_area(),
        penalty,
        gradient,
    }
}

/// Applies `out[dy][dx] = sum wx(sx, dx) wy(sy, dy) map[sy][sx]`.
fn separable(
    map: &[f64],
    nx: usize,
    ny: usize,
    wx: impl Fn(usize, usize) -> f64,
    wy: impl Fn(usize, usize) -> f64,
) -> Vec<f64> {
    let mut rows = vec![0.0; map.len()];
    for y in 0..ny {
        for sx in 0..nx {
            let v = map[y * nx + sx];
            if v == 0.0 {
                continue;
            }
            for dx in 0..nx {
                rows[y * nx + dx] += wx(sx, dx) * v;
            }
        }
    }
    let mut out = vec![0.0; map.len()];
    for sy in 0..ny {
        for x in 0..nx {
            let v = rows[sy * nx + x];
            if v == 0.0 {
                continue;
            }
            for dy in 0..ny {
                out[dy * nx + x] += wy(sy, dy) * v;
            }
        }
    }
    out
}
