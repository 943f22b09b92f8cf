//! Independent oracles shared by the integration suites: a float64 reference
//! of the network and its layers, central finite differences, brute-force
//! geometry and metric tallies.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

// ---------------------------------------------------------------------------
// float64 reference layers

/// `[C, H, W]` feature map.
#[derive(Clone, Debug)]
pub struct Map {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub v: Vec<f64>,
}

impl Map {
    pub fn new(c: usize, h: usize, w: usize, v: Vec<f64>) -> Self {
        assert_eq!(v.len(), c * h * w);
        Self { c, h, w, v }
    }
    fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.v[(c * self.h + y) * self.w + x]
    }
}

pub fn conv_ref(x: &Map, weight: &[f64], bias: &[f64], cout: usize, k: usize, stride: usize) -> Map {
    let pad = (k / 2) as isize;
    let (ho, wo) = (x.h.div_ceil(stride), x.w.div_ceil(stride));
    let mut out = vec![0.0; cout * ho * wo];
    for co in 0..cout {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = bias[co];
                for ci in 0..x.c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - pad;
                            let ix = (ox * stride + kx) as isize - pad;
                            if iy < 0 || ix < 0 || iy as usize >= x.h || ix as usize >= x.w {
                                continue;
                            }
                            acc += weight[((co * x.c + ci) * k + ky) * k + kx] * x.at(ci, iy as usize, ix as usize);
                        }
                    }
                }
                out[(co * ho + oy) * wo + ox] = acc;
            }
        }
    }
    Map::new(cout, ho, wo, out)
}

/// Bilinear resize by `factor` (2.0 or 0.5), half-pixel centers, clamped.
pub fn resize_ref(x: &Map, factor: f64) -> Map {
    let (ho, wo) = ((x.h as f64 * factor) as usize, (x.w as f64 * factor) as usize);
    let coord = |i: usize, n: usize| -> (usize, usize, f64) {
        let s = ((i as f64 + 0.5) / factor - 0.5).max(0.0);
        let lo = (s.floor() as usize).min(n - 1);
        let hi = (lo + 1).min(n - 1);
        (lo, hi, s - lo as f64)
    };
    let mut out = Vec::with_capacity(x.c * ho * wo);
    for c in 0..x.c {
        for oy in 0..ho {
            let (y0, y1, fy) = coord(oy, x.h);
            for ox in 0..wo {
                let (x0, x1, fx) = coord(ox, x.w);
                let top = x.at(c, y0, x0) * (1.0 - fx) + x.at(c, y0, x1) * fx;
                let bot = x.at(c, y1, x0) * (1.0 - fx) + x.at(c, y1, x1) * fx;
                out.push(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    Map::new(x.c, ho, wo, out)
}

fn relu_ref(x: Map, pattern: &mut Vec<bool>) -> Map {
    pattern.extend(x.v.iter().map(|&v| v > 0.0));
    Map {
        v: x.v.into_iter().map(|v| v.max(0.0)).collect(),
        ..x
    }
}

fn add_ref(a: &Map, b: &Map) -> Map {
    Map::new(a.c, a.h, a.w, a.v.iter().zip(&b.v).map(|(x, y)| x + y).collect())
}

/// Reference forward of the two-branch network for one sample. `p` holds
/// the 18 tensors in architecture order. Also returns the sign pattern of
/// every pre-activation so callers can detect kinks.
pub fn hrnet_ref(p: &[Vec<f64>], x: &Map) -> (Map, Vec<bool>) {
    let mut pat = Vec::new();
    let conv = |i: usize, x: &Map, cout: usize, k: usize, s: usize| conv_ref(x, &p[i], &p[i + 1], cout, k, s);
    let stem = relu_ref(conv(0, x, 16, 3, 1), &mut pat);
    let h1 = relu_ref(conv(2, &stem, 16, 3, 1), &mut pat);
    let h = relu_ref(conv(4, &h1, 16, 3, 1), &mut pat);
    let l0 = relu_ref(conv(6, &stem, 32, 3, 2), &mut pat);
    let l1 = relu_ref(conv(8, &l0, 32, 3, 1), &mut pat);
    let l = relu_ref(conv(10, &l1, 32, 3, 1), &mut pat);
    let up = resize_ref(&conv(12, &l, 16, 1, 1), 2.0);
    let down = conv(14, &h, 32, 3, 2);
    let hf = relu_ref(add_ref(&h, &up), &mut pat);
    let lf = relu_ref(add_ref(&l, &down), &mut pat);
    let lup = relu_ref(resize_ref(&conv(12, &lf, 16, 1, 1), 2.0), &mut pat);
    let mut cat = hf.v.clone();
    cat.extend_from_slice(&lup.v);
    let cat = Map::new(32, hf.h, hf.w, cat);
    (conv(16, &cat, 8, 1, 1), pat)
}

/// Masked cross-entropy in float64 over `[N][C, H, W]` logits.
pub fn masked_ce_ref(logits: &[Map], labels: &[u8], supervision: &[u8]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    let mut idx = 0;
    for m in logits {
        for y in 0..m.h {
            for x in 0..m.w {
                if supervision[idx] == 1 {
                    let zs: Vec<f64> = (0..m.c).map(|k| m.at(k, y, x)).collect();
                    let mx = zs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let lse = mx + zs.iter().map(|z| (z - mx).exp()).sum::<f64>().ln();
                    total += lse - zs[labels[idx] as usize];
                    count += 1;
                }
                idx += 1;
            }
        }
    }
    total / count as f64
}

// ---------------------------------------------------------------------------
// finite differences

pub const FD_EPS: f64 = 1e-3;

/// Entries smaller than this fraction of the tensor's largest numerical
/// gradient are compared on that scale instead of their own.
pub const REL_FLOOR: f64 = 1e-3;

#[derive(Debug, Default, Clone, Copy)]
pub struct GradReport {
    pub max_rel: f64,
    pub checked: usize,
    pub skipped_kinks: usize,
}

impl GradReport {
    pub fn merge(self, o: GradReport) -> GradReport {
        GradReport {
            max_rel: self.max_rel.max(o.max_rel),
            checked: self.checked + o.checked,
            skipped_kinks: self.skipped_kinks + o.skipped_kinks,
        }
    }
}

/// Compares `analytic[i]` with the central difference of `f` at the listed
/// coordinates of `x`. `f` returns the scalar and an activation pattern;
/// a coordinate whose ±ε evaluations see different patterns straddles a
/// ReLU kink and is skipped.
pub fn fd_check<F>(x: &[f64], analytic: &[f32], coords: &[usize], f: F) -> GradReport
where
    F: Fn(&[f64]) -> (f64, Vec<bool>),
{
    let mut numeric = Vec::with_capacity(coords.len());
    let mut report = GradReport::default();
    let mut buf = x.to_vec();
    for &i in coords {
        buf[i] = x[i] + FD_EPS;
        let (fp, pp) = f(&buf);
        buf[i] = x[i] - FD_EPS;
        let (fm, pm) = f(&buf);
        buf[i] = x[i];
        if pp != pm {
            report.skipped_kinks += 1;
            continue;
        }
        numeric.push((i, (fp - fm) / (2.0 * FD_EPS)));
    }
    let scale = numeric.iter().fold(0.0f64, |m, (_, n)| m.max(n.abs()));
    for (i, n) in numeric {
        let a = analytic[i] as f64;
        let denom = a.abs().max(n.abs()).max(REL_FLOOR * scale).max(1e-12);
        report.max_rel = report.max_rel.max((a - n).abs() / denom);
        report.checked += 1;
    }
    report
}

pub fn sample_coords(rng: &mut ChaCha8Rng, len: usize, n: usize) -> Vec<usize> {
    if n >= len {
        return (0..len).collect();
    }
    let mut all: Vec<usize> = (0..len).collect();
    for i in 0..n {
        let j = rng.random_range(i..len);
        all.swap(i, j);
    }
    all.truncate(n);
    all.sort_unstable();
    all
}

// ---------------------------------------------------------------------------
// geometry and counting oracles

/// PNPOLY crossing test over closed rings `[(x, y)]`.
pub fn pnpoly(rings: &[Vec<(f64, f64)>], px: f64, py: f64) -> bool {
    let mut inside = false;
    for ring in rings {
        let n = ring.len();
        let mut j = n - 1;
        for i in 0..n {
            let (xi, yi) = ring[i];
            let (xj, yj) = ring[j];
            if (yi > py) != (yj > py) && px < xi + (py - yi) * (xj - xi) / (yj - yi) {
                inside = !inside;
            }
            j = i;
        }
    }
    inside
}

/// Recursive 8-connected flood fill; run on a large stack.
pub fn flood_fill_count(grid: &[u8], w: usize, h: usize) -> (usize, Vec<usize>) {
    fn fill(g: &[u8], seen: &mut [bool], w: usize, h: usize, x: usize, y: usize) -> usize {
        let i = y * w + x;
        if seen[i] || g[i] == 0 {
            return 0;
        }
        seen[i] = true;
        let mut n = 1;
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if (dx, dy) != (0, 0) && nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                    n += fill(g, seen, w, h, nx as usize, ny as usize);
                }
            }
        }
        n
    }
    let grid = grid.to_vec();
    std::thread::Builder::new()
        .stack_size(512 << 20)
        .spawn(move || {
            let mut seen = vec![false; w * h];
            let mut sizes = Vec::new();
            for y in 0..h {
                for x in 0..w {
                    let s = fill(&grid, &mut seen, w, h, x, y);
                    if s > 0 {
                        sizes.push(s);
                    }
                }
            }
            (sizes.len(), sizes)
        })
        .unwrap()
        .join()
        .unwrap()
}

/// Brute-force tally of `(reference, prediction)` pairs into a K×K table,
/// skipping references outside `0..k`.
pub fn tally(reference: &[u8], prediction: &[u8], k: usize) -> Vec<Vec<u64>> {
    let mut t = vec![vec![0u64; k]; k];
    for (&r, &p) in reference.iter().zip(prediction) {
        if (r as usize) < k {
            t[r as usize][p as usize] += 1;
        }
    }
    t
}

/// Metrics from a K×K table written out longhand: (oa, kappa, fwiou).
pub fn metrics_longhand(t: &[Vec<u64>]) -> (f64, f64, f64) {
    let k = t.len();
    let mut total = 0.0;
    let mut diag = 0.0;
    let mut rows = vec![0.0; k];
    let mut cols = vec![0.0; k];
    for i in 0..k {
        for j in 0..k {
            let v = t[i][j] as f64;
            total += v;
            rows[i] += v;
            cols[j] += v;
            if i == j {
                diag += v;
            }
        }
    }
    let po = diag / total;
    let pe: f64 = (0..k).map(|i| rows[i] * cols[i]).sum::<f64>() / (total * total);
    let mut fw = 0.0;
    for i in 0..k {
        let union = rows[i] + cols[i] - t[i][i] as f64;
        if rows[i] > 0.0 {
            fw += rows[i] / total * (t[i][i] as f64 / union);
        }
    }
    (po, (po - pe) / (1.0 - pe), fw)
}
