//! 3-D convolution over (C,T,H,W) volumes, built on im2col plus a matrix
//! product so both directions reuse the fast gemm path.

use ndarray::{Array2, Array4, Ix1, Ix2, Ix4};

use crate::nn::graph::{Arr, Graph, Var};

#[derive(Debug, Clone, Copy)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    /// Cubic kernel side; padding is (kernel-1)/2 so odd kernels preserve
    /// size at stride 1.
    pub kernel: usize,
    pub stride: (usize, usize, usize),
}

impl ConvSpec {
    pub fn out_dims(&self, t: usize, h: usize, w: usize) -> (usize, usize, usize) {
        let p = (self.kernel - 1) / 2;
        let o = |n: usize, s: usize| (n + 2 * p - self.kernel) / s + 1;
        (o(t, self.stride.0), o(h, self.stride.1), o(w, self.stride.2))
    }
}

/// Unrolls the padded input into (positions, in_ch * kernel^3).
fn im2col(x: &Array4<f64>, spec: &ConvSpec) -> Array2<f64> {
    let (c, t, h, w) = x.dim();
    let k = spec.kernel;
    let p = (k - 1) / 2;
    let (ot, oh, ow) = spec.out_dims(t, h, w);
    let mut cols = Array2::zeros((ot * oh * ow, c * k * k * k));
    let mut row = 0;
    for zt in 0..ot {
        for zy in 0..oh {
            for zx in 0..ow {
                let bt = (zt * spec.stride.0) as i64 - p as i64;
                let by = (zy * spec.stride.1) as i64 - p as i64;
                let bx = (zx * spec.stride.2) as i64 - p as i64;
                let mut col = 0;
                for ch in 0..c {
                    for kt in 0..k {
                        let st = bt + kt as i64;
                        for ky in 0..k {
                            let sy = by + ky as i64;
                            for kx in 0..k {
                                let sx = bx + kx as i64;
                                if st >= 0
                                    && (st as usize) < t
                                    && sy >= 0
                                    && (sy as usize) < h
                                    && sx >= 0
                                    && (sx as usize) < w
                                {
                                    cols[[row, col]] = x[[ch, st as usize, sy as usize, sx as usize]];
                                }
                                col += 1;
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
    cols
}

/// Scatters column gradients back onto the input volume.
fn col2im(dcols: &Array2<f64>, dims: (usize, usize, usize, usize), spec: &ConvSpec) -> Array4<f64> {
    let (c, t, h, w) = dims;
    let k = spec.kernel;
    let p = (k - 1) / 2;
    let (ot, oh, ow) = spec.out_dims(t, h, w);
    let mut dx = Array4::zeros((c, t, h, w));
    let mut row = 0;
    for zt in 0..ot {
        for zy in 0..oh {
            for zx in 0..ow {
                let bt = (zt * spec.stride.0) as i64 - p as i64;
                let by = (zy * spec.stride.1) as i64 - p as i64;
                let bx = (zx * spec.stride.2) as i64 - p as i64;
                let mut col = 0;
                for ch in 0..c {
                    for kt in 0..k {
                        let st = bt + kt as i64;
                        for ky in 0..k {
                            let sy = by + ky as i64;
                            for kx in 0..k {
                                let sx = bx + kx as i64;
                                if st >= 0
                                    && (st as usize) < t
                                    && sy >= 0
                                    && (sy as usize) < h
                                    && sx >= 0
                                    && (sx as usize) < w
                                {
                                    dx[[ch, st as usize, sy as usize, sx as usize]] +=
                                        dcols[[row, col]];
                                }
                                col += 1;
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
    dx
}

impl Graph {
    /// 3-D convolution: x (C,T,H,W), weight (out_ch, in_ch*k^3), bias
    /// (out_ch) -> (out_ch, T', H', W').
    pub fn conv3d(&mut self, x: Var, weight: Var, bias: Var, spec: ConvSpec) -> Var {
        let xv = self.value(x).view().into_dimensionality::<Ix4>().expect("conv input must be 4-d");
        let (c, t, h, w) = xv.dim();
        assert_eq!(c, spec.in_ch, "conv input channels");
        let cols = im2col(&xv.to_owned(), &spec);
        let wv = self.value(weight).view().into_dimensionality::<Ix2>().expect("conv weight must be 2-d");
        assert_eq!(wv.dim(), (spec.out_ch, spec.in_ch * spec.kernel.pow(3)));
        let bv = self.value(bias).view().into_dimensionality::<Ix1>().expect("conv bias must be 1-d");
        // (P, CK^3) x (CK^3, O) -> (P, O)
        let mut out_po = cols.dot(&wv.t());
        out_po += &bv;
        let (ot, oh, ow) = spec.out_dims(t, h, w);
        let mut out = Array4::zeros((spec.out_ch, ot, oh, ow));
        for (pidx, orow) in out_po.rows().into_iter().enumerate() {
            let zt = pidx / (oh * ow);
            let zy = (pidx / ow) % oh;
            let zx = pidx % ow;
            for (och, &v) in orow.iter().enumerate() {
                out[[och, zt, zy, zx]] = v;
            }
        }
        let cols_saved = cols;
        self.push(
            out.into_dyn(),
            Some(Box::new(move |vals, g| {
                let g4 = g.view().into_dimensionality::<Ix4>().unwrap();
                let (oc, ot, oh, ow) = g4.dim();
                // Reshape upstream grad to (P, O).
                let mut g_po = Array2::zeros((ot * oh * ow, oc));
                for och in 0..oc {
                    for zt in 0..ot {
                        for zy in 0..oh {
                            for zx in 0..ow {
                                g_po[[zt * oh * ow + zy * ow + zx, och]] = g4[[och, zt, zy, zx]];
                            }
                        }
                    }
                }
                let wv = vals[weight].view().into_dimensionality::<Ix2>().unwrap();
                let dw = g_po.t().dot(&cols_saved);
                let db = g_po.sum_axis(ndarray::Axis(0));
                let dcols = g_po.dot(&wv);
                let xdims = vals[x].view().into_dimensionality::<Ix4>().unwrap().dim();
                let dx = col2im(&dcols, xdims, &spec);
                vec![
                    (x, dx.into_dyn()),
                    (weight, dw.into_dyn()),
                    (bias, db.into_dyn()),
                ]
            })),
        )
    }
}

/// Plain (non-differentiated) average pooling of a (C,T,H,W) volume over
/// non-overlapping spatial windows; used to shrink inputs before the model.
pub fn avg_pool_spatial(x: &Arr, factor: usize) -> Arr {
    let xv = x.view().into_dimensionality::<Ix4>().expect("pool input must be 4-d");
    let (c, t, h, w) = xv.dim();
    assert!(h % factor == 0 && w % factor == 0, "pool factor must divide the side");
    let (oh, ow) = (h / factor, w / factor);
    let inv = 1.0 / (factor * factor) as f64;
    Array4::from_shape_fn((c, t, oh, ow), |(ch, tt, y, x0)| {
        let mut s = 0.0;
        for dy in 0..factor {
            for dx in 0..factor {
                s += xv[[ch, tt, y * factor + dy, x0 * factor + dx]];
            }
        }
        s * inv
    })
    .into_dyn()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::{Init, ParamStore};
    use ndarray::Array1;

    #[test]
    fn identity_kernel_preserves_input() {
        // 1x1x1 kernel with weight 1 is the identity map.
        let mut store = ParamStore::new(0);
        store.register("w", &[1, 1], Init::Ones);
        store.register("b", &[1], Init::Zeros);
        let mut g = Graph::new();
        let x = g.input(Array4::from_shape_fn((1, 2, 3, 3), |(_, t, y, x)| (t * 9 + y * 3 + x) as f64).into_dyn());
        let w = g.param(&store, "w");
        let b = g.param(&store, "b");
        let spec = ConvSpec { in_ch: 1, out_ch: 1, kernel: 1, stride: (1, 1, 1) };
        let y = g.conv3d(x, w, b, spec);
        assert_eq!(g.value(y), g.value(x));
    }

    #[test]
    fn stride_two_halves_dims() {
        let spec = ConvSpec { in_ch: 3, out_ch: 4, kernel: 3, stride: (2, 2, 2) };
        assert_eq!(spec.out_dims(8, 28, 28), (4, 14, 14));
    }

    #[test]
    fn matches_direct_convolution() {
        // Oracle: triple-loop direct convolution on a small volume.
        let mut store = ParamStore::new(3);
        let spec = ConvSpec { in_ch: 2, out_ch: 3, kernel: 3, stride: (1, 1, 1) };
        store.register("w", &[3, 2 * 27], Init::FanIn { fan_in: 54, gain: 1.0 });
        store.register("b", &[3], Init::Uniform(0.5));
        let xv = Array4::from_shape_fn((2, 3, 4, 4), |(c, t, y, x)| {
            ((c * 7 + t * 5 + y * 3 + x) % 11) as f64 * 0.1 - 0.3
        });
        let mut g = Graph::new();
        let x = g.input(xv.clone().into_dyn());
        let w = g.param(&store, "w");
        let b = g.param(&store, "b");
        let y = g.conv3d(x, w, b, spec);
        let yv = g.value(y).view().into_dimensionality::<Ix4>().unwrap().to_owned();

        let wv = store.value("w").view().into_dimensionality::<Ix2>().unwrap().to_owned();
        let bv: Array1<f64> = store.value("b").view().into_dimensionality::<Ix1>().unwrap().to_owned();
        for och in 0..3 {
            for zt in 0..3 {
                for zy in 0..4 {
                    for zx in 0..4 {
                        let mut acc = bv[och];
                        let mut col = 0;
                        for c in 0..2 {
                            for kt in 0..3usize {
                                for ky in 0..3usize {
                                    for kx in 0..3usize {
                                        let st = zt as i64 + kt as i64 - 1;
                                        let sy = zy as i64 + ky as i64 - 1;
                                        let sx = zx as i64 + kx as i64 - 1;
                                        if st >= 0 && st < 3 && sy >= 0 && sy < 4 && sx >= 0 && sx < 4 {
                                            acc += wv[[och, col]]
                                                * xv[[c, st as usize, sy as usize, sx as usize]];
                                        }
                                        col += 1;
                                    }
                                }
                            }
                        }
                        assert!((yv[[och, zt, zy, zx]] - acc).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn avg_pool_reduces_and_preserves_constants() {
        let x = Array4::from_elem((2, 3, 8, 8), 2.5).into_dyn();
        let p = avg_pool_spatial(&x, 4);
        assert_eq!(p.shape(), &[2, 3, 2, 2]);
        assert!(p.iter().all(|&v| (v - 2.5).abs() < 1e-12));
    }
}
