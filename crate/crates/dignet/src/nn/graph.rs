//! Minimal reverse-mode differentiation tape over dynamic-dimension arrays.
//!
//! A `Graph` is built per forward pass; every op pushes a node holding its
//! value and a closure that maps the upstream gradient to per-parent
//! gradients. Everything runs in f64 so finite-difference checks hold at
//! tight tolerances.

use std::collections::HashMap;
use std::rc::Rc;

use ndarray::{Array1, Array2, ArrayD, Axis, Ix1, Ix2, Ix3, Ix4, IxDyn};

use crate::nn::params::ParamStore;

pub type Arr = ArrayD<f64>;
pub type Var = usize;

/// Maps (all node values, upstream gradient) to (parent id, gradient) pairs.
pub(crate) type BackFn = Box<dyn Fn(&[Arr], &Arr) -> Vec<(Var, Arr)>>;

pub struct Graph {
    vals: Vec<Arr>,
    backs: Vec<Option<BackFn>>,
    param_vars: HashMap<String, Var>,
    /// (store index, var) for every parameter leaf touched this pass.
    param_links: Vec<(usize, Var)>,
}

fn v2(a: &Arr) -> ndarray::ArrayView2<'_, f64> {
    a.view().into_dimensionality::<Ix2>().expect("expected 2-d value")
}

fn v1(a: &Arr) -> ndarray::ArrayView1<'_, f64> {
    a.view().into_dimensionality::<Ix1>().expect("expected 1-d value")
}

impl Graph {
    pub fn new() -> Graph {
        Graph { vals: Vec::new(), backs: Vec::new(), param_vars: HashMap::new(), param_links: Vec::new() }
    }

    pub(crate) fn push(&mut self, val: Arr, back: Option<BackFn>) -> Var {
        self.vals.push(val);
        self.backs.push(back);
        self.vals.len() - 1
    }

    /// Constant leaf; no gradient flows into it.
    pub fn input(&mut self, val: Arr) -> Var {
        self.push(val, None)
    }

    /// Parameter leaf fetched from the store, cached by name so repeated use
    /// accumulates into one gradient slot.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Var {
        if let Some(&v) = self.param_vars.get(name) {
            return v;
        }
        let idx = store.index_of(name).unwrap_or_else(|| panic!("unknown parameter {name}"));
        let v = self.push(store.value_at(idx).clone(), None);
        self.param_vars.insert(name.to_string(), v);
        self.param_links.push((idx, v));
        v
    }

    pub fn value(&self, v: Var) -> &Arr {
        &self.vals[v]
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    /// Reverse pass from `root` seeded with `seed` (same shape as the root
    /// value). Returns one gradient slot per node.
    pub fn backward_from(&self, root: Var, seed: Arr) -> Vec<Option<Arr>> {
        assert_eq!(seed.shape(), self.vals[root].shape(), "seed shape mismatch");
        let mut grads: Vec<Option<Arr>> = vec![None; self.vals.len()];
        grads[root] = Some(seed);
        for id in (0..=root).rev() {
            let Some(back) = &self.backs[id] else { continue };
            let Some(g) = grads[id].clone() else { continue };
            for (pid, pg) in back(&self.vals, &g) {
                debug_assert!(pid < id, "graph must be topologically ordered");
                match &mut grads[pid] {
                    Some(acc) => *acc += &pg,
                    slot => *slot = Some(pg),
                }
            }
        }
        grads
    }

    /// Gradients aligned with the parameter store order; untouched parameters
    /// get zeros.
    pub fn param_grads(&self, store: &ParamStore, grads: &[Option<Arr>]) -> Vec<Arr> {
        let mut out: Vec<Arr> =
            (0..store.len()).map(|i| Arr::zeros(store.value_at(i).raw_dim())).collect();
        for &(idx, var) in &self.param_links {
            if let Some(g) = &grads[var] {
                out[idx] += g;
            }
        }
        out
    }

    // ---- elementwise ----

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.vals[a].shape(), self.vals[b].shape());
        let val = &self.vals[a] + &self.vals[b];
        self.push(val, Some(Box::new(move |_, g| vec![(a, g.clone()), (b, g.clone())])))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let val = &self.vals[a] - &self.vals[b];
        self.push(val, Some(Box::new(move |_, g| vec![(a, g.clone()), (b, g.mapv(|x| -x))])))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let val = &self.vals[a] * &self.vals[b];
        self.push(
            val,
            Some(Box::new(move |vals, g| vec![(a, g * &vals[b]), (b, g * &vals[a])])),
        )
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let val = self.vals[a].mapv(|x| x * c);
        self.push(val, Some(Box::new(move |_, g| vec![(a, g.mapv(|x| x * c))])))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let val = self.vals[a].mapv(|x| x.max(0.0));
        self.push(
            val,
            Some(Box::new(move |vals, g| {
                let mask = vals[a].mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                vec![(a, g * &mask)]
            })),
        )
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let val = self.vals[a].mapv(|x| x.clamp(lo, hi));
        self.push(
            val,
            Some(Box::new(move |vals, g| {
                let mask = vals[a].mapv(|x| if x > lo && x < hi { 1.0 } else { 0.0 });
                vec![(a, g * &mask)]
            })),
        )
    }

    /// ln(1 + e^x), numerically stable.
    pub fn softplus(&mut self, a: Var) -> Var {
        let val = self.vals[a].mapv(|x| x.max(0.0) + (-x.abs()).exp().ln_1p());
        self.push(
            val,
            Some(Box::new(move |vals, g| {
                let sig = vals[a].mapv(|x| 1.0 / (1.0 + (-x).exp()));
                vec![(a, g * &sig)]
            })),
        )
    }

    /// exp(min(x, cap)); gradient is zero where the cap engages.
    pub fn exp_capped(&mut self, a: Var, cap: f64) -> Var {
        let val = self.vals[a].mapv(|x| x.min(cap).exp());
        let out_val = val.clone();
        self.push(
            val,
            Some(Box::new(move |vals, g| {
                let mask = vals[a].mapv(|x| if x < cap { 1.0 } else { 0.0 });
                vec![(a, g * &out_val * &mask)]
            })),
        )
    }

    // ---- linear algebra ----

    /// (M,K) x (K,N) matrix product.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let val = v2(&self.vals[a]).dot(&v2(&self.vals[b]));
        self.push(
            val.into_dyn(),
            Some(Box::new(move |vals, g| {
                let g2 = v2(g);
                vec![
                    (a, g2.dot(&v2(&vals[b]).t()).into_dyn()),
                    (b, v2(&vals[a]).t().dot(&g2).into_dyn()),
                ]
            })),
        )
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let val = v2(&self.vals[a]).t().to_owned();
        self.push(val.into_dyn(), Some(Box::new(move |_, g| vec![(a, v2(g).t().to_owned().into_dyn())])))
    }

    /// x (N,D) * w (D,O) + b (O) -> (N,O).
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let mut val = v2(&self.vals[x]).dot(&v2(&self.vals[w]));
        val += &v1(&self.vals[b]);
        self.push(
            val.into_dyn(),
            Some(Box::new(move |vals, g| {
                let g2 = v2(g);
                vec![
                    (x, g2.dot(&v2(&vals[w]).t()).into_dyn()),
                    (w, v2(&vals[x]).t().dot(&g2).into_dyn()),
                    (b, g2.sum_axis(Axis(0)).into_dyn()),
                ]
            })),
        )
    }

    /// Row-wise softmax of a 2-d array.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = v2(&self.vals[a]);
        let mut out = Array2::zeros(x.raw_dim());
        for (mut orow, xrow) in out.rows_mut().into_iter().zip(x.rows()) {
            let m = xrow.fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
            let mut sum = 0.0;
            for (o, &v) in orow.iter_mut().zip(xrow.iter()) {
                *o = (v - m).exp();
                sum += *o;
            }
            orow.mapv_inplace(|v| v / sum);
        }
        let y = out.clone();
        self.push(
            out.into_dyn(),
            Some(Box::new(move |_, g| {
                let g2 = v2(g);
                let mut dx = Array2::zeros(y.raw_dim());
                for i in 0..y.nrows() {
                    let dot: f64 = (0..y.ncols()).map(|j| g2[[i, j]] * y[[i, j]]).sum();
                    for j in 0..y.ncols() {
                        dx[[i, j]] = y[[i, j]] * (g2[[i, j]] - dot);
                    }
                }
                vec![(a, dx.into_dyn())]
            })),
        )
    }

    /// Row-wise layer normalization with learned gain and bias, over (N,D).
    pub fn layernorm_rows(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let xv = v2(&self.vals[x]).to_owned();
        let (n, d) = xv.dim();
        let mut xhat = Array2::zeros((n, d));
        let mut inv_std = Array1::zeros(n);
        for i in 0..n {
            let row = xv.row(i);
            let mean = row.mean().unwrap();
            let var = row.mapv(|v| (v - mean) * (v - mean)).mean().unwrap();
            let is = 1.0 / (var + eps).sqrt();
            inv_std[i] = is;
            for j in 0..d {
                xhat[[i, j]] = (row[j] - mean) * is;
            }
        }
        let gv = v1(&self.vals[gain]).to_owned();
        let mut out = Array2::zeros((n, d));
        let bv = v1(&self.vals[bias]).to_owned();
        for i in 0..n {
            for j in 0..d {
                out[[i, j]] = xhat[[i, j]] * gv[j] + bv[j];
            }
        }
        let xhat_c = xhat.clone();
        self.push(
            out.into_dyn(),
            Some(Box::new(move |vals, g| {
                let g2 = v2(g);
                let gv = v1(&vals[gain]);
                let (n, d) = xhat_c.dim();
                let mut dx = Array2::zeros((n, d));
                let mut dgain = Array1::zeros(d);
                let mut dbias = Array1::zeros(d);
                for i in 0..n {
                    let mut sum_gh = 0.0;
                    let mut sum_gh_xhat = 0.0;
                    for j in 0..d {
                        let gh = g2[[i, j]] * gv[j];
                        sum_gh += gh;
                        sum_gh_xhat += gh * xhat_c[[i, j]];
                        dgain[j] += g2[[i, j]] * xhat_c[[i, j]];
                        dbias[j] += g2[[i, j]];
                    }
                    let dn = d as f64;
                    for j in 0..d {
                        let gh = g2[[i, j]] * gv[j];
                        dx[[i, j]] =
                            inv_std[i] * (gh - sum_gh / dn - xhat_c[[i, j]] * sum_gh_xhat / dn);
                    }
                }
                vec![(x, dx.into_dyn()), (gain, dgain.into_dyn()), (bias, dbias.into_dyn())]
            })),
        )
    }

    // ---- reductions & shaping ----

    pub fn sum_all(&mut self, a: Var) -> Var {
        let val = ndarray::arr1(&[self.vals[a].sum()]).into_dyn();
        self.push(
            val,
            Some(Box::new(move |vals, g| {
                let s = g[[0]];
                vec![(a, Arr::from_elem(vals[a].raw_dim(), s))]
            })),
        )
    }

    /// Mean over rows: (N,C) -> (C,).
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let x = v2(&self.vals[a]);
        let n = x.nrows() as f64;
        let val = x.mean_axis(Axis(0)).unwrap();
        self.push(
            val.into_dyn(),
            Some(Box::new(move |vals, g| {
                let x = v2(&vals[a]);
                let g1 = v1(g);
                let mut dx = Array2::zeros(x.raw_dim());
                for mut row in dx.rows_mut() {
                    for (d, &gj) in row.iter_mut().zip(g1.iter()) {
                        *d = gj / n;
                    }
                }
                vec![(a, dx.into_dyn())]
            })),
        )
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let val = self.vals[a]
            .as_standard_layout()
            .to_owned()
            .into_shape(IxDyn(shape))
            .expect("reshape size mismatch");
        self.push(
            val,
            Some(Box::new(move |vals, g| {
                let back =
                    g.as_standard_layout().to_owned().into_shape(vals[a].raw_dim()).unwrap();
                vec![(a, back)]
            })),
        )
    }

    /// Scales a vector to unit L2 norm: (D,) -> (D,).
    pub fn l2_normalize(&mut self, a: Var) -> Var {
        let x = v1(&self.vals[a]).to_owned();
        let norm = x.dot(&x).sqrt().max(1e-12);
        let y = x.mapv(|v| v / norm);
        let y_c = y.clone();
        self.push(
            y.into_dyn(),
            Some(Box::new(move |_, g| {
                let g1 = v1(g);
                let dot = g1.dot(&y_c);
                let dx = g1
                    .iter()
                    .zip(y_c.iter())
                    .map(|(&gi, &yi)| (gi - dot * yi) / norm)
                    .collect::<Array1<f64>>();
                vec![(a, dx.into_dyn())]
            })),
        )
    }

    /// Concatenates along an axis; every input must agree on the other axes.
    pub fn concat_axis(&mut self, parts: &[Var], axis: usize) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.vals[p].view()).collect();
        let val = ndarray::concatenate(Axis(axis), &views).expect("concat shape mismatch");
        let parts = parts.to_vec();
        self.push(
            val,
            Some(Box::new(move |vals, g| {
                let mut out = Vec::with_capacity(parts.len());
                let mut start = 0;
                for &p in &parts {
                    let len = vals[p].shape()[axis];
                    let slice = g
                        .slice_axis(Axis(axis), ndarray::Slice::from(start..start + len))
                        .to_owned();
                    out.push((p, slice));
                    start += len;
                }
                out
            })),
        )
    }

    /// Columns [start, start+len) of a 2-d array.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let val = v2(&self.vals[a]).slice(ndarray::s![.., start..start + len]).to_owned();
        self.push(
            val.into_dyn(),
            Some(Box::new(move |vals, g| {
                let mut dx = Array2::<f64>::zeros(v2(&vals[a]).raw_dim());
                dx.slice_mut(ndarray::s![.., start..start + len]).assign(&v2(g));
                vec![(a, dx.into_dyn())]
            })),
        )
    }

    /// One column of a 2-d array as a vector: (N,M) -> (N,).
    pub fn select_col(&mut self, a: Var, col: usize) -> Var {
        let val = v2(&self.vals[a]).column(col).to_owned();
        self.push(
            val.into_dyn(),
            Some(Box::new(move |vals, g| {
                let mut dx = Array2::<f64>::zeros(v2(&vals[a]).raw_dim());
                dx.column_mut(col).assign(&v1(g));
                vec![(a, dx.into_dyn())]
            })),
        )
    }

    /// Multiplies each row of (N,C) by the matching entry of (N,).
    pub fn mul_rows(&mut self, x: Var, w: Var) -> Var {
        let xv = v2(&self.vals[x]);
        let wv = v1(&self.vals[w]);
        let mut out = xv.to_owned();
        for (mut row, &s) in out.rows_mut().into_iter().zip(wv.iter()) {
            row.mapv_inplace(|v| v * s);
        }
        self.push(
            out.into_dyn(),
            Some(Box::new(move |vals, g| {
                let g2 = v2(g);
                let xv = v2(&vals[x]);
                let wv = v1(&vals[w]);
                let mut dx = g2.to_owned();
                for (mut row, &s) in dx.rows_mut().into_iter().zip(wv.iter()) {
                    row.mapv_inplace(|v| v * s);
                }
                let dw = (&g2 * &xv).sum_axis(Axis(1));
                vec![(x, dx.into_dyn()), (w, dw.into_dyn())]
            })),
        )
    }

    /// Adds `s * mask` to a 2-d array, where `s` is a one-element parameter.
    pub fn add_masked_scalar(&mut self, a: Var, s: Var, mask: Rc<Array2<f64>>) -> Var {
        let sv = self.vals[s][[0]];
        let val = &v2(&self.vals[a]).to_owned() + &mask.mapv(|m| m * sv);
        let mask_b = Rc::clone(&mask);
        self.push(
            val.into_dyn(),
            Some(Box::new(move |_, g| {
                let g2 = v2(g);
                let ds = (&g2 * &*mask_b).sum();
                vec![(a, g.clone()), (s, ndarray::arr1(&[ds]).into_dyn())]
            })),
        )
    }

    /// Time slice t of a (C,T,H,W) volume -> (C,H,W).
    pub fn slice_time(&mut self, a: Var, t: usize) -> Var {
        let x = self.vals[a].view().into_dimensionality::<Ix4>().expect("expected 4-d value");
        let val = x.index_axis(Axis(1), t).to_owned();
        self.push(
            val.into_dyn(),
            Some(Box::new(move |vals, g| {
                let mut dx = ArrayD::<f64>::zeros(vals[a].raw_dim());
                {
                    let mut dx4 = dx.view_mut().into_dimensionality::<Ix4>().unwrap();
                    let g3 = g.view().into_dimensionality::<Ix3>().unwrap();
                    dx4.index_axis_mut(Axis(1), t).assign(&g3);
                }
                vec![(a, dx)]
            })),
        )
    }

    /// Stacks T slices of shape (C,H,W) into (C,T,H,W).
    pub fn stack_time(&mut self, slices: &[Var]) -> Var {
        let views: Vec<_> = slices
            .iter()
            .map(|&s| self.vals[s].view().into_dimensionality::<Ix3>().expect("expected 3-d value"))
            .collect();
        let stacked = ndarray::stack(Axis(1), &views).expect("stack shape mismatch");
        let slices = slices.to_vec();
        self.push(
            stacked.into_dyn(),
            Some(Box::new(move |_, g| {
                let g4 = g.view().into_dimensionality::<Ix4>().unwrap();
                slices
                    .iter()
                    .enumerate()
                    .map(|(t, &s)| (s, g4.index_axis(Axis(1), t).to_owned().into_dyn()))
                    .collect()
            })),
        )
    }

    /// Bilinear gather: samples `src` (C,H,W) at `pos` (N,2) rows of (y,x),
    /// edge-clamped, producing (N,C). Gradients flow to both the source and
    /// the positions; clamped coordinates get zero positional gradient.
    pub fn gather_bilinear(&mut self, src: Var, pos: Var) -> Var {
        let s = self.vals[src].view().into_dimensionality::<Ix3>().expect("gather src must be 3-d");
        let p = v2(&self.vals[pos]);
        let (c, h, w) = s.dim();
        let n = p.nrows();
        let mut out = Array2::zeros((n, c));
        for i in 0..n {
            let y = p[[i, 0]].clamp(0.0, (h - 1) as f64);
            let x = p[[i, 1]].clamp(0.0, (w - 1) as f64);
            let y0 = (y.floor() as usize).min(h - 1);
            let x0 = (x.floor() as usize).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let x1 = (x0 + 1).min(w - 1);
            let fy = y - y0 as f64;
            let fx = x - x0 as f64;
            for ch in 0..c {
                let top = s[[ch, y0, x0]] * (1.0 - fx) + s[[ch, y0, x1]] * fx;
                let bot = s[[ch, y1, x0]] * (1.0 - fx) + s[[ch, y1, x1]] * fx;
                out[[i, ch]] = top * (1.0 - fy) + bot * fy;
            }
        }
        self.push(
            out.into_dyn(),
            Some(Box::new(move |vals, g| {
                let s = vals[src].view().into_dimensionality::<Ix3>().unwrap();
                let p = v2(&vals[pos]);
                let g2 = v2(g);
                let (c, h, w) = s.dim();
                let n = p.nrows();
                let mut dsrc = ndarray::Array3::<f64>::zeros((c, h, w));
                let mut dpos = Array2::<f64>::zeros((n, 2));
                for i in 0..n {
                    let ry = p[[i, 0]];
                    let rx = p[[i, 1]];
                    let y = ry.clamp(0.0, (h - 1) as f64);
                    let x = rx.clamp(0.0, (w - 1) as f64);
                    let y_active = ry > 0.0 && ry < (h - 1) as f64;
                    let x_active = rx > 0.0 && rx < (w - 1) as f64;
                    let y0 = (y.floor() as usize).min(h - 1);
                    let x0 = (x.floor() as usize).min(w - 1);
                    let y1 = (y0 + 1).min(h - 1);
                    let x1 = (x0 + 1).min(w - 1);
                    let fy = y - y0 as f64;
                    let fx = x - x0 as f64;
                    for ch in 0..c {
                        let go = g2[[i, ch]];
                        dsrc[[ch, y0, x0]] += go * (1.0 - fy) * (1.0 - fx);
                        dsrc[[ch, y0, x1]] += go * (1.0 - fy) * fx;
                        dsrc[[ch, y1, x0]] += go * fy * (1.0 - fx);
                        dsrc[[ch, y1, x1]] += go * fy * fx;
                        if y_active {
                            let dy = (s[[ch, y1, x0]] * (1.0 - fx) + s[[ch, y1, x1]] * fx)
                                - (s[[ch, y0, x0]] * (1.0 - fx) + s[[ch, y0, x1]] * fx);
                            dpos[[i, 0]] += go * dy;
                        }
                        if x_active {
                            let dx = (s[[ch, y0, x1]] * (1.0 - fy) + s[[ch, y1, x1]] * fy)
                                - (s[[ch, y0, x0]] * (1.0 - fy) + s[[ch, y1, x0]] * fy);
                            dpos[[i, 1]] += go * dx;
                        }
                    }
                }
                vec![(src, dsrc.into_dyn()), (pos, dpos.into_dyn())]
            })),
        )
    }

    /// Mean over graph neighbors: (N,C) features with a shared adjacency
    /// list. Nodes with no neighbors get zeros.
    pub fn neighbor_mean(&mut self, x: Var, adj: Rc<Vec<Vec<usize>>>) -> Var {
        let xv = v2(&self.vals[x]);
        let (n, c) = xv.dim();
        let mut out = Array2::zeros((n, c));
        for i in 0..n {
            let nbrs = &adj[i];
            if nbrs.is_empty() {
                continue;
            }
            let inv = 1.0 / nbrs.len() as f64;
            for &j in nbrs {
                for ch in 0..c {
                    out[[i, ch]] += xv[[j, ch]] * inv;
                }
            }
        }
        let adj_b = Rc::clone(&adj);
        self.push(
            out.into_dyn(),
            Some(Box::new(move |_, g| {
                let g2 = v2(g);
                let (n, c) = g2.dim();
                let mut dx = Array2::zeros((n, c));
                for i in 0..n {
                    let nbrs = &adj_b[i];
                    if nbrs.is_empty() {
                        continue;
                    }
                    let inv = 1.0 / nbrs.len() as f64;
                    for &j in nbrs {
                        for ch in 0..c {
                            dx[[j, ch]] += g2[[i, ch]] * inv;
                        }
                    }
                }
                vec![(x, dx.into_dyn())]
            })),
        )
    }

    /// Inverted dropout with a precomputed mask (1/(1-p) kept, 0 dropped).
    pub fn dropout_mask(&mut self, x: Var, mask: Arr) -> Var {
        assert_eq!(self.vals[x].shape(), mask.shape());
        let val = &self.vals[x] * &mask;
        self.push(val, Some(Box::new(move |_, g| vec![(x, g * &mask)])))
    }

    /// Multiplies a tensor elementwise by exp(min(eta*z, cap)) with a scalar
    /// parameter eta (one-element array) and a constant depth field `z`.
    /// Returns the corrected tensor; gradient reaches both the tensor and eta.
    pub fn attenuation_correct(&mut self, f: Var, eta: Var, z: Rc<Arr>, cap: f64) -> Var {
        let e = self.vals[eta][[0]];
        let factor = z.mapv(|zz| (e * zz).min(cap).exp());
        assert_eq!(self.vals[f].shape(), factor.shape());
        let val = &self.vals[f] * &factor;
        let z_b = Rc::clone(&z);
        self.push(
            val,
            Some(Box::new(move |vals, g| {
                let e = vals[eta][[0]];
                let factor = z_b.mapv(|zz| (e * zz).min(cap).exp());
                let df = g * &factor;
                let mut deta = 0.0;
                for (((gi, fi), fac), zz) in
                    g.iter().zip(vals[f].iter()).zip(factor.iter()).zip(z_b.iter())
                {
                    if e * zz < cap {
                        deta += gi * fi * fac * zz;
                    }
                }
                vec![(f, df), (eta, ndarray::arr1(&[deta]).into_dyn())]
            })),
        )
    }
}
