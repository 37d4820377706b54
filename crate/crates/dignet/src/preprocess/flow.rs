//! Dense optical flow via local polynomial expansion.
//!
//! Each image is approximated around every pixel by a quadratic
//! f(x) = x'Ax + b'x + c under a Gaussian applicability window; equating the
//! expansions of consecutive frames yields a per-pixel linear system in the
//! displacement, which is solved over a Gaussian-weighted neighborhood,
//! coarse-to-fine over a two-times pyramid.

use ndarray::Array2;

use crate::imops;

#[derive(Debug, Clone)]
pub struct FlowConfig {
    /// Applicability window for the polynomial fit.
    pub poly_sigma: f32,
    /// Aggregation window for the displacement solve.
    pub window_sigma: f32,
    /// Update iterations per pyramid level.
    pub iterations: usize,
    /// Tikhonov term in the 2x2 solve; keeps flat regions at exactly zero.
    pub reg: f32,
    /// Smallest pyramid level side, pixels.
    pub min_size: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { poly_sigma: 1.1, window_sigma: 2.0, iterations: 3, reg: 1e-4, min_size: 16 }
    }
}

/// Horizontal 1-D correlation with edge clamping. Correlation, not
/// convolution: the odd moment kernels are antisymmetric and the sign
/// convention matters.
fn correlate_rows(plane: &Array2<f32>, taps: &[f32]) -> Array2<f32> {
    let (h, w) = plane.dim();
    let radius = (taps.len() / 2) as i64;
    Array2::from_shape_fn((h, w), |(y, x)| {
        taps.iter()
            .enumerate()
            .map(|(i, t)| {
                let xs = (x as i64 + i as i64 - radius).clamp(0, w as i64 - 1) as usize;
                t * plane[[y, xs]]
            })
            .sum()
    })
}

fn correlate_cols(plane: &Array2<f32>, taps: &[f32]) -> Array2<f32> {
    correlate_rows(&plane.t().to_owned(), taps).t().to_owned()
}

/// Inverts a small matrix in place by Gauss-Jordan with partial pivoting.
fn invert_small(m: &mut Vec<Vec<f64>>) {
    let n = m.len();
    let mut inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())
            .unwrap();
        m.swap(col, pivot);
        inv.swap(col, pivot);
        let p = m[col][col];
        assert!(p.abs() > 1e-12, "singular moment matrix");
        for j in 0..n {
            m[col][j] /= p;
            inv[col][j] /= p;
        }
        for row in 0..n {
            if row != col {
                let f = m[row][col];
                for j in 0..n {
                    m[row][j] -= f * m[col][j];
                    inv[row][j] -= f * inv[col][j];
                }
            }
        }
    }
    *m = inv;
}

/// Quadratic expansion coefficients per pixel: b = (bx, by) and
/// A = [[axx, axy], [axy, ayy]].
struct PolyExpansion {
    bx: Array2<f32>,
    by: Array2<f32>,
    axx: Array2<f32>,
    ayy: Array2<f32>,
    axy: Array2<f32>,
}

fn poly_expand(img: &Array2<f32>, sigma: f32) -> PolyExpansion {
    let g = imops::gaussian_kernel(sigma);
    let radius = (g.len() / 2) as i64;
    let xg: Vec<f32> = g.iter().enumerate().map(|(i, t)| (i as i64 - radius) as f32 * t).collect();
    let x2g: Vec<f32> =
        g.iter().enumerate().map(|(i, t)| ((i as i64 - radius) * (i as i64 - radius)) as f32 * t).collect();

    // Weighted raw moments of the image against the basis (1, x, y, x2, y2, xy),
    // built separably.
    let cg = correlate_rows(img, &g);
    let cxg = correlate_rows(img, &xg);
    let cx2g = correlate_rows(img, &x2g);
    let m = [
        correlate_cols(&cg, &g),   // 1
        correlate_cols(&cxg, &g),  // x
        correlate_cols(&cg, &xg),  // y
        correlate_cols(&cx2g, &g), // x^2
        correlate_cols(&cg, &x2g), // y^2
        correlate_cols(&cxg, &xg), // xy
    ];

    // Constant metric G_ij = sum w b_i b_j over the window; its inverse maps
    // moments to expansion coefficients at every pixel.
    let basis = |i: usize, x: f64, y: f64| -> f64 {
        match i {
            0 => 1.0,
            1 => x,
            2 => y,
            3 => x * x,
            4 => y * y,
            _ => x * y,
        }
    };
    let mut metric = vec![vec![0.0f64; 6]; 6];
    for (ky, wy) in g.iter().enumerate() {
        let y = (ky as i64 - radius) as f64;
        for (kx, wx) in g.iter().enumerate() {
            let x = (kx as i64 - radius) as f64;
            let w = (*wy as f64) * (*wx as f64);
            for i in 0..6 {
                for j in 0..6 {
                    metric[i][j] += w * basis(i, x, y) * basis(j, x, y);
                }
            }
        }
    }
    invert_small(&mut metric);

    let (h, w) = img.dim();
    let coeff = |row: usize| -> Array2<f32> {
        Array2::from_shape_fn((h, w), |(y, x)| {
            (0..6).map(|j| metric[row][j] * m[j][[y, x]] as f64).sum::<f64>() as f32
        })
    };
    let r6 = coeff(5);
    PolyExpansion {
        bx: coeff(1),
        by: coeff(2),
        axx: coeff(3),
        ayy: coeff(4),
        axy: r6.mapv(|v| 0.5 * v),
    }
}

/// One displacement refinement pass given expansions of both frames and the
/// current flow estimate.
fn update_flow(
    e1: &PolyExpansion,
    e2: &PolyExpansion,
    u: &Array2<f32>,
    v: &Array2<f32>,
    cfg: &FlowConfig,
) -> (Array2<f32>, Array2<f32>) {
    let (h, w) = u.dim();
    let mut g11 = Array2::zeros((h, w));
    let mut g12 = Array2::zeros((h, w));
    let mut g22 = Array2::zeros((h, w));
    let mut h1 = Array2::zeros((h, w));
    let mut h2 = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let du = u[[y, x]];
            let dv = v[[y, x]];
            let xs = ((x as f32 + du).round().clamp(0.0, w as f32 - 1.0)) as usize;
            let ys = ((y as f32 + dv).round().clamp(0.0, h as f32 - 1.0)) as usize;
            let axx = 0.5 * (e1.axx[[y, x]] + e2.axx[[ys, xs]]);
            let ayy = 0.5 * (e1.ayy[[y, x]] + e2.ayy[[ys, xs]]);
            let axy = 0.5 * (e1.axy[[y, x]] + e2.axy[[ys, xs]]);
            let dbx = -0.5 * (e2.bx[[ys, xs]] - e1.bx[[y, x]]) + axx * du + axy * dv;
            let dby = -0.5 * (e2.by[[ys, xs]] - e1.by[[y, x]]) + axy * du + ayy * dv;
            g11[[y, x]] = axx * axx + axy * axy;
            g12[[y, x]] = axy * (axx + ayy);
            g22[[y, x]] = axy * axy + ayy * ayy;
            h1[[y, x]] = axx * dbx + axy * dby;
            h2[[y, x]] = axy * dbx + ayy * dby;
        }
    }
    let s = cfg.window_sigma;
    let g11 = imops::gaussian_blur_plane(&g11, s);
    let g12 = imops::gaussian_blur_plane(&g12, s);
    let g22 = imops::gaussian_blur_plane(&g22, s);
    let h1 = imops::gaussian_blur_plane(&h1, s);
    let h2 = imops::gaussian_blur_plane(&h2, s);
    let mut un = Array2::zeros((h, w));
    let mut vn = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let a = g11[[y, x]] + cfg.reg;
            let b = g12[[y, x]];
            let d = g22[[y, x]] + cfg.reg;
            let det = a * d - b * b;
            un[[y, x]] = (d * h1[[y, x]] - b * h2[[y, x]]) / det;
            vn[[y, x]] = (a * h2[[y, x]] - b * h1[[y, x]]) / det;
        }
    }
    (un, vn)
}

fn downsample(plane: &Array2<f32>) -> Array2<f32> {
    let blurred = imops::gaussian_blur_plane(plane, 1.0);
    let (h, w) = plane.dim();
    Array2::from_shape_fn((h / 2, w / 2), |(y, x)| blurred[[y * 2, x * 2]])
}

/// Bilinear upsample of a flow component to the target size, scaled by the
/// pyramid factor.
fn upsample_flow(plane: &Array2<f32>, h: usize, w: usize) -> Array2<f32> {
    let (sh, sw) = plane.dim();
    let fy = sh as f32 / h as f32;
    let fx = sw as f32 / w as f32;
    Array2::from_shape_fn((h, w), |(y, x)| {
        2.0 * imops::bilinear_sample(plane, (y as f32 + 0.5) * fy - 0.5, (x as f32 + 0.5) * fx - 0.5)
    })
}

/// Dense flow from `prev` to `next` (grayscale planes, same shape).
/// Returns the horizontal and vertical components in pixels.
pub fn dense_flow(prev: &Array2<f32>, next: &Array2<f32>, cfg: &FlowConfig) -> (Array2<f32>, Array2<f32>) {
    assert_eq!(prev.dim(), next.dim(), "flow inputs must match in shape");
    let mut pyramid = vec![(prev.clone(), next.clone())];
    while pyramid.last().unwrap().0.dim().0 / 2 >= cfg.min_size
        && pyramid.last().unwrap().0.dim().1 / 2 >= cfg.min_size
    {
        let (p, n) = pyramid.last().unwrap();
        pyramid.push((downsample(p), downsample(n)));
    }
    let coarsest = pyramid.last().unwrap().0.dim();
    let mut u = Array2::zeros(coarsest);
    let mut v = Array2::zeros(coarsest);
    for (p, n) in pyramid.iter().rev() {
        let (h, w) = p.dim();
        if u.dim() != (h, w) {
            u = upsample_flow(&u, h, w);
            v = upsample_flow(&v, h, w);
        }
        let e1 = poly_expand(p, cfg.poly_sigma);
        let e2 = poly_expand(n, cfg.poly_sigma);
        for _ in 0..cfg.iterations {
            let (un, vn) = update_flow(&e1, &e2, &u, &v, cfg);
            u = un;
            v = vn;
        }
    }
    (u, v)
}

/// Per-frame flow for a clip of grayscale planes: entry t holds the flow from
/// frame t-1 to frame t, and entry 0 is zero. A single-frame clip therefore
/// has zero flow everywhere.
pub fn clip_flow(frames: &[Array2<f32>], cfg: &FlowConfig) -> Vec<(Array2<f32>, Array2<f32>)> {
    assert!(!frames.is_empty(), "clip_flow needs at least one frame");
    let zero = Array2::zeros(frames[0].dim());
    let mut out = vec![(zero.clone(), zero)];
    for t in 1..frames.len() {
        out.push(dense_flow(&frames[t - 1], &frames[t], cfg));
    }
    out
}

/// Mean flow magnitude over every pixel of every entry.
pub fn mean_flow_magnitude(flow: &[(Array2<f32>, Array2<f32>)]) -> f32 {
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for (u, v) in flow {
        for (a, b) in u.iter().zip(v.iter()) {
            sum += ((a * a + b * b) as f64).sqrt();
            count += 1;
        }
    }
    (sum / count.max(1) as f64) as f32
}
