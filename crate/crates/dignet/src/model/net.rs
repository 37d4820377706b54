//! The recognizer network: 3-D conv stem, depth-conditioned deformable
//! alignment stages, spatio-temporal graph message passing, graph
//! transformer encoding, pooling, and the classification head.

use std::rc::Rc;

use ndarray::{Array2, Array3, Array4, Ix3, Ix4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{DigError, Result};
use crate::model::config::{HeadKind, ModelConfig};
use crate::model::topology::GraphTopology;
use crate::nn::conv::ConvSpec;
use crate::nn::graph::{Arr, Graph, Var};
use crate::nn::params::{Init, ParamStore};
use crate::preprocess::ProcessedClip;

/// Flow-direction stabilizer in f_hat = (u,v)/(||(u,v)|| + EPS).
pub const FLOW_EPS: f64 = 1e-6;

/// Model-ready single clip: frames (C,T,S,S) and depth (T,S,S), both f64.
#[derive(Debug, Clone)]
pub struct ModelInput {
    pub frames: Arr,
    pub depth: Arr,
}

/// Converts a processed clip to the model grid, average-pooling the spatial
/// axes down to `cfg.input_hw` and rescaling flow displacements so they stay
/// in model-grid pixels.
pub fn model_input_from_clip(clip: &ProcessedClip, cfg: &ModelConfig) -> Result<ModelInput> {
    let (r, c, s, s2) = clip.frames.dim();
    if s != s2 || c != cfg.in_channels {
        return Err(DigError::Shape(format!(
            "clip tensor is ({r},{c},{s},{s2}), expected square frames with {} channels",
            cfg.in_channels
        )));
    }
    if s % cfg.input_hw != 0 {
        return Err(DigError::Shape(format!(
            "clip side {s} is not a multiple of the model side {}",
            cfg.input_hw
        )));
    }
    let factor = s / cfg.input_hw;
    let hw = cfg.input_hw;
    let inv = 1.0 / (factor * factor) as f64;
    let flow_scale = 1.0 / factor as f64;
    let mut frames = Array4::zeros((c, r, hw, hw));
    let mut depth = Array3::zeros((r, hw, hw));
    for t in 0..r {
        for y in 0..hw {
            for x in 0..hw {
                for ch in 0..c {
                    let mut acc = 0.0;
                    for dy in 0..factor {
                        for dx in 0..factor {
                            acc += clip.frames[[t, ch, y * factor + dy, x * factor + dx]] as f64;
                        }
                    }
                    let mut v = acc * inv;
                    if ch >= 3 {
                        v *= flow_scale;
                    }
                    frames[[ch, t, y, x]] = v;
                }
                let mut acc = 0.0;
                for dy in 0..factor {
                    for dx in 0..factor {
                        acc += clip.depth[[t, y * factor + dy, x * factor + dx]] as f64;
                    }
                }
                depth[[t, y, x]] = acc * inv;
            }
        }
    }
    Ok(ModelInput { frames: frames.into_dyn(), depth: depth.into_dyn() })
}

fn bilinear_f64(plane: &ndarray::ArrayView2<f64>, y: f64, x: f64) -> f64 {
    let (h, w) = plane.dim();
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let y0 = (y.floor() as usize).min(h - 1);
    let x0 = (x.floor() as usize).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = y - y0 as f64;
    let fx = x - x0 as f64;
    let top = plane[[y0, x0]] * (1.0 - fx) + plane[[y0, x1]] * fx;
    let bot = plane[[y1, x0]] * (1.0 - fx) + plane[[y1, x1]] * fx;
    top * (1.0 - fy) + bot * fy
}

fn nearest_t(t_out: usize, t_dst: usize, t_src: usize) -> usize {
    if t_dst == t_src {
        return t_out;
    }
    let pos = (t_out as f64 + 0.5) * t_src as f64 / t_dst as f64 - 0.5;
    (pos.round().max(0.0) as usize).min(t_src - 1)
}

/// Resamples a (T,S,S) depth volume to (t2,h2,h2): bilinear in space,
/// nearest in time.
fn resample_depth(depth: &Arr, t2: usize, h2: usize) -> Array3<f64> {
    let d = depth.view().into_dimensionality::<Ix3>().unwrap();
    let (ts, hs, _) = d.dim();
    Array3::from_shape_fn((t2, h2, h2), |(t, y, x)| {
        let plane = d.index_axis(ndarray::Axis(0), nearest_t(t, t2, ts));
        let fy = hs as f64 / h2 as f64;
        bilinear_f64(&plane, (y as f64 + 0.5) * fy - 0.5, (x as f64 + 0.5) * fy - 0.5)
    })
}

/// Resamples the two flow channels of the input to (2,t2,h2,h2), scaling
/// displacement magnitudes onto the coarser grid.
fn resample_flow(frames: &Arr, t2: usize, h2: usize) -> Array4<f64> {
    let f = frames.view().into_dimensionality::<Ix4>().unwrap();
    let (_, ts, hs, _) = f.dim();
    let scale = h2 as f64 / hs as f64;
    Array4::from_shape_fn((2, t2, h2, h2), |(ch, t, y, x)| {
        let plane = f
            .index_axis(ndarray::Axis(0), 3 + ch)
            .index_axis(ndarray::Axis(0), nearest_t(t, t2, ts))
            .to_owned();
        let fy = hs as f64 / h2 as f64;
        scale * bilinear_f64(&plane.view(), (y as f64 + 0.5) * fy - 0.5, (x as f64 + 0.5) * fy - 0.5)
    })
}

fn conv_w(name: &str, store: &mut ParamStore, out_ch: usize, in_ch: usize, k: usize, init: Init) {
    store.register(&format!("{name}.w"), &[out_ch, in_ch * k * k * k], init);
    store.register(&format!("{name}.b"), &[out_ch], Init::Zeros);
}

fn lin_w(name: &str, store: &mut ParamStore, inp: usize, out: usize) {
    store.register(&format!("{name}.w"), &[inp, out], Init::FanIn { fan_in: inp, gain: 1.0 });
    store.register(&format!("{name}.b"), &[out], Init::Zeros);
}

/// Unit-row prototype matrix by Gram-Schmidt over a seeded random matrix.
fn prototype_matrix(m: usize, d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut rows: Vec<ndarray::Array1<f64>> = Vec::with_capacity(m);
    for _ in 0..m {
        let mut v = ndarray::Array1::from_shape_fn(d, |_| rng.gen_range(-1.0..1.0f64));
        for prev in &rows {
            let dot = v.dot(prev);
            v = v - prev.mapv(|p| p * dot);
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-8 {
            v.mapv_inplace(|x| x / norm);
        } else {
            // Degenerate draw (d < m or collinear); fall back to a fresh
            // random unit row without orthogonalizing.
            v = ndarray::Array1::from_shape_fn(d, |_| rng.gen_range(-1.0..1.0f64));
            let n = v.dot(&v).sqrt().max(1e-8);
            v.mapv_inplace(|x| x / n);
        }
        rows.push(v);
    }
    let mut out = Array2::zeros((m, d));
    for (i, row) in rows.iter().enumerate() {
        out.row_mut(i).assign(row);
    }
    out
}

/// Registers every parameter the configuration needs (idempotent).
pub fn register_params(store: &mut ParamStore, cfg: &ModelConfig) {
    conv_w("stem", store, cfg.stem_channels, cfg.in_channels, 3, Init::FanIn {
        fan_in: cfg.in_channels * 27,
        gain: 1.0,
    });
    let mut c_in = cfg.stem_channels;
    for (i, &c_out) in cfg.stage_channels.iter().enumerate() {
        let s = format!("s{i}");
        if cfg.use_dada {
            conv_w(&format!("{s}.off1"), store, cfg.offset_hidden, c_in + 3, 3, Init::FanIn {
                fan_in: (c_in + 3) * 27,
                gain: 1.0,
            });
            // Final offset layer starts at zero so training begins with an
            // identity warp.
            conv_w(&format!("{s}.off2"), store, 2, cfg.offset_hidden, 3, Init::Zeros);
            lin_w(&format!("{s}.gk1"), store, 2, cfg.gk_hidden);
            lin_w(&format!("{s}.gk2"), store, cfg.gk_hidden, 2 * cfg.ray_k + 1);
            store.register(&format!("{s}.eta_raw"), &[1], Init::Const(inv_softplus(cfg.eta_init)));
        }
        conv_w(&format!("{s}.mix"), store, c_out, c_in, 3, Init::FanIn { fan_in: c_in * 27, gain: 1.0 });
        c_in = c_out;
    }
    let c = cfg.embed_dim();
    if cfg.use_stg {
        for i in 0..cfg.stg_layers {
            lin_w(&format!("stg{i}.self"), store, c, c);
            store.register(&format!("stg{i}.nbr.w"), &[c, c], Init::FanIn { fan_in: c, gain: 1.0 });
        }
    }
    if cfg.use_transformer {
        for l in 0..cfg.transformer_layers {
            let t = format!("tf{l}");
            store.register(&format!("{t}.ln1.g"), &[c], Init::Ones);
            store.register(&format!("{t}.ln1.b"), &[c], Init::Zeros);
            lin_w(&format!("{t}.qkv"), store, c, 3 * c);
            lin_w(&format!("{t}.proj"), store, c, c);
            store.register(&format!("{t}.adj_bias"), &[1], Init::Zeros);
            store.register(&format!("{t}.ln2.g"), &[c], Init::Ones);
            store.register(&format!("{t}.ln2.b"), &[c], Init::Zeros);
            lin_w(&format!("{t}.ffn1"), store, c, cfg.ffn_multiplier * c);
            lin_w(&format!("{t}.ffn2"), store, cfg.ffn_multiplier * c, c);
        }
        store.register("tf_out_ln.g", &[c], Init::Ones);
        store.register("tf_out_ln.b", &[c], Init::Zeros);
    }
    match cfg.head {
        HeadKind::Affine => lin_w("head", store, c, cfg.num_classes),
        HeadKind::Prototype { .. } => {
            if store.index_of("prototypes").is_none() {
                store.register("prototypes", &[cfg.num_classes, c], Init::Zeros);
                let mut rng = ChaCha8Rng::seed_from_u64(store.seed() ^ 0x70726f746f);
                let m = prototype_matrix(cfg.num_classes, c, &mut rng);
                store.set("prototypes", m.into_dyn());
                store.mark_no_decay("prototypes");
            }
        }
    }
}

pub(crate) fn inv_softplus(y: f64) -> f64 {
    // x with ln(1+e^x) = y
    (y.exp() - 1.0).max(1e-12).ln()
}

pub struct ForwardPass {
    pub graph: Graph,
    /// Pooled feature vector before normalization.
    pub pooled: Var,
    /// Unit-norm embedding.
    pub embedding: Var,
    pub logits: Var,
    /// Length-`num_classes` simplex vector.
    pub probs: Var,
    /// Positions where the attenuation exponent hit the cap this pass.
    pub exponent_clamps: u64,
}

fn check_finite(g: &Graph, v: Var, stage: &str) -> Result<()> {
    if g.value(v).iter().any(|x| !x.is_finite()) {
        return Err(DigError::Numeric(format!("non-finite activations after {stage}")));
    }
    Ok(())
}

struct StageAux {
    /// (t,h,w) grid positions + ray offsets per k, precomputed constants.
    base_pos: Vec<Vec<Array2<f64>>>, // [t][k] -> (HW, 2) rows (y,x)
    /// Per-t (HW,2) columns (z, |flow|) for the weighting net.
    gk_feat: Vec<Array2<f64>>,
    /// Depth broadcast to (C,T,H,W) for the attenuation factor.
    z_bcast: Rc<Arr>,
}

/// Ray-sampling displacement for one position: (dy, dx) added to (y, x) for
/// sample index k, flow (u,v), and depth z. Linear in k, inverse-linear in z.
pub fn ray_offset(u: f64, v: f64, z: f64, k: i64) -> (f64, f64) {
    let mag = (u * u + v * v).sqrt();
    let inv = 1.0 / (mag + FLOW_EPS);
    let step = k as f64 / z.max(1e-6);
    (step * v * inv, step * u * inv)
}

fn stage_aux(depth: &Array3<f64>, flow: &Array4<f64>, c: usize, ray_k: usize) -> StageAux {
    let (t, h, w) = depth.dim();
    let mut base_pos = Vec::with_capacity(t);
    let mut gk_feat = Vec::with_capacity(t);
    for tt in 0..t {
        let mut per_k = Vec::with_capacity(2 * ray_k + 1);
        for ki in -(ray_k as i64)..=(ray_k as i64) {
            let mut pos = Array2::zeros((h * w, 2));
            for y in 0..h {
                for x in 0..w {
                    let n = y * w + x;
                    let (dy, dx) = ray_offset(
                        flow[[0, tt, y, x]],
                        flow[[1, tt, y, x]],
                        depth[[tt, y, x]],
                        ki,
                    );
                    pos[[n, 0]] = y as f64 + dy;
                    pos[[n, 1]] = x as f64 + dx;
                }
            }
            per_k.push(pos);
        }
        base_pos.push(per_k);
        let mut feat = Array2::zeros((h * w, 2));
        for y in 0..h {
            for x in 0..w {
                let u = flow[[0, tt, y, x]];
                let v = flow[[1, tt, y, x]];
                feat[[y * w + x, 0]] = depth[[tt, y, x]];
                feat[[y * w + x, 1]] = (u * u + v * v).sqrt();
            }
        }
        gk_feat.push(feat);
    }
    let z_bcast = Array4::from_shape_fn((c, t, h, w), |(_, tt, y, x)| depth[[tt, y, x]]).into_dyn();
    StageAux { base_pos, gk_feat: gk_feat, z_bcast: Rc::new(z_bcast) }
}

/// One alignment stage: offset prediction, ray-sampling warp, attenuation
/// correction, then the strided channel-mix convolution. Returns the stage
/// output and the number of capped attenuation exponents.
#[allow(clippy::too_many_arguments)]
pub(crate) fn dada_stage(
    g: &mut Graph,
    store: &ParamStore,
    cfg: &ModelConfig,
    name: &str,
    f0: Var,
    depth: &Array3<f64>,
    flow: &Array4<f64>,
    out_ch: usize,
) -> (Var, u64) {
    let dims = g.value(f0).shape().to_vec();
    let (c, t, h, w) = (dims[0], dims[1], dims[2], dims[3]);
    let mut clamps = 0u64;
    let aligned = if cfg.use_dada {
        // Offset field from features, depth, and flow.
        let z_in = g.input(
            Array4::from_shape_fn((1, t, h, w), |(_, tt, y, x)| depth[[tt, y, x]]).into_dyn(),
        );
        let flow_in = g.input(flow.clone().into_dyn());
        let off_in = g.concat_axis(&[f0, z_in, flow_in], 0);
        let w1 = g.param(store, &format!("{name}.off1.w"));
        let b1 = g.param(store, &format!("{name}.off1.b"));
        let spec1 = ConvSpec { in_ch: c + 3, out_ch: cfg.offset_hidden, kernel: 3, stride: (1, 1, 1) };
        let h1 = g.conv3d(off_in, w1, b1, spec1);
        let h1r = g.relu(h1);
        let w2 = g.param(store, &format!("{name}.off2.w"));
        let b2 = g.param(store, &format!("{name}.off2.b"));
        let spec2 = ConvSpec { in_ch: cfg.offset_hidden, out_ch: 2, kernel: 3, stride: (1, 1, 1) };
        let dp_raw = g.conv3d(h1r, w2, b2, spec2);
        let dp = g.clamp(dp_raw, -cfg.offset_clamp, cfg.offset_clamp);

        let aux = stage_aux(depth, flow, c, cfg.ray_k);
        let gk_w1 = g.param(store, &format!("{name}.gk1.w"));
        let gk_b1 = g.param(store, &format!("{name}.gk1.b"));
        let gk_w2 = g.param(store, &format!("{name}.gk2.w"));
        let gk_b2 = g.param(store, &format!("{name}.gk2.b"));

        let mut slices = Vec::with_capacity(t);
        for tt in 0..t {
            let f_t = g.slice_time(f0, tt);
            let dp_t = g.slice_time(dp, tt);
            let dp_2n = g.reshape(dp_t, &[2, h * w]);
            let dp_n2 = g.transpose(dp_2n);
            // Sample weights from (z, |flow|) through the small perceptron.
            let feat = g.input(aux.gk_feat[tt].clone().into_dyn());
            let g1 = g.linear(feat, gk_w1, gk_b1);
            let g1r = g.relu(g1);
            let logits = g.linear(g1r, gk_w2, gk_b2);
            let wts = g.softmax_rows(logits);
            let mut acc: Option<Var> = None;
            for (kidx, base) in aux.base_pos[tt].iter().enumerate() {
                let base_v = g.input(base.clone().into_dyn());
                let pos = g.add(base_v, dp_n2);
                let sampled = g.gather_bilinear(f_t, pos);
                let wk = g.select_col(wts, kidx);
                let weighted = g.mul_rows(sampled, wk);
                acc = Some(match acc {
                    Some(a) => g.add(a, weighted),
                    None => weighted,
                });
            }
            let warp_nc = acc.unwrap();
            let warp_cn = g.transpose(warp_nc);
            let warp = g.reshape(warp_cn, &[c, h, w]);
            slices.push(warp);
        }
        let warped = g.stack_time(&slices);

        let eta_raw = g.param(store, &format!("{name}.eta_raw"));
        let eta = g.softplus(eta_raw);
        let eta_val = g.value(eta)[[0]];
        clamps = aux
            .z_bcast
            .iter()
            .filter(|&&z| eta_val * z >= cfg.exponent_cap)
            .count() as u64;
        g.attenuation_correct(warped, eta, Rc::clone(&aux.z_bcast), cfg.exponent_cap)
    } else {
        f0
    };
    let mw = g.param(store, &format!("{name}.mix.w"));
    let mb = g.param(store, &format!("{name}.mix.b"));
    let mix_spec = ConvSpec { in_ch: c, out_ch: out_ch, kernel: 3, stride: (2, 2, 2) };
    let mixed = g.conv3d(aligned, mw, mb, mix_spec);
    (g.relu(mixed), clamps)
}

/// Full forward pass over one clip. `dropout_rng` enables the encoder-output
/// dropout; pass `None` for deterministic inference.
pub fn forward(
    store: &mut ParamStore,
    cfg: &ModelConfig,
    input: &ModelInput,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<ForwardPass> {
    cfg.validate()?;
    register_params(store, cfg);
    if input.frames.iter().any(|v| !v.is_finite()) {
        return Err(DigError::Numeric("non-finite values in model input".into()));
    }
    let dims = input.frames.shape().to_vec();
    if dims.len() != 4 || dims[0] != cfg.in_channels {
        return Err(DigError::Shape(format!(
            "model input must be ({},T,S,S), got {:?}",
            cfg.in_channels, dims
        )));
    }
    let (t0, s0) = (dims[1], dims[2]);

    let mut g = Graph::new();
    let x = g.input(input.frames.clone());
    let sw = g.param(store, "stem.w");
    let sb = g.param(store, "stem.b");
    let stem_spec =
        ConvSpec { in_ch: cfg.in_channels, out_ch: cfg.stem_channels, kernel: 3, stride: (1, 1, 1) };
    let stem = g.conv3d(x, sw, sb, stem_spec);
    let mut feat = g.relu(stem);
    check_finite(&g, feat, "stem")?;

    let mut clamps = 0u64;
    let mut cur_t = t0;
    let mut cur_s = s0;
    for (i, &c_out) in cfg.stage_channels.iter().enumerate() {
        let depth = resample_depth(&input.depth, cur_t, cur_s);
        let flow = resample_flow(&input.frames, cur_t, cur_s);
        let (out, stage_clamps) =
            dada_stage(&mut g, store, cfg, &format!("s{i}"), feat, &depth, &flow, c_out);
        clamps += stage_clamps;
        feat = out;
        check_finite(&g, feat, &format!("alignment stage {i}"))?;
        cur_t = (cur_t + 1) / 2;
        cur_s = (cur_s + 1) / 2;
    }

    let c = cfg.embed_dim();
    let shp = g.value(feat).shape().to_vec();
    let n_nodes = shp[1] * shp[2] * shp[3];
    let flat_cn = g.reshape(feat, &[c, n_nodes]);
    let mut nodes = g.transpose(flat_cn);

    let topo = GraphTopology::build(shp[1], shp[2], shp[3]);
    if cfg.use_stg {
        for i in 0..cfg.stg_layers {
            let wself = g.param(store, &format!("stg{i}.self.w"));
            let bself = g.param(store, &format!("stg{i}.self.b"));
            let wnbr = g.param(store, &format!("stg{i}.nbr.w"));
            let self_path = g.linear(nodes, wself, bself);
            let agg = g.neighbor_mean(nodes, Rc::clone(&topo.adj));
            let nbr_path = g.matmul(agg, wnbr);
            let summed = g.add(self_path, nbr_path);
            nodes = g.relu(summed);
        }
        check_finite(&g, nodes, "graph message passing")?;
    }

    if cfg.use_transformer {
        let mask = topo.mask();
        let hd = c / cfg.heads;
        for l in 0..cfg.transformer_layers {
            let t = format!("tf{l}");
            let ln1g = g.param(store, &format!("{t}.ln1.g"));
            let ln1b = g.param(store, &format!("{t}.ln1.b"));
            let normed = g.layernorm_rows(nodes, ln1g, ln1b, 1e-5);
            let qkvw = g.param(store, &format!("{t}.qkv.w"));
            let qkvb = g.param(store, &format!("{t}.qkv.b"));
            let qkv = g.linear(normed, qkvw, qkvb);
            let bias = g.param(store, &format!("{t}.adj_bias"));
            let mut heads_out = Vec::with_capacity(cfg.heads);
            for hh in 0..cfg.heads {
                let q = g.slice_cols(qkv, hh * hd, hd);
                let k = g.slice_cols(qkv, c + hh * hd, hd);
                let v = g.slice_cols(qkv, 2 * c + hh * hd, hd);
                let kt = g.transpose(k);
                let raw = g.matmul(q, kt);
                let scaled = g.scale(raw, 1.0 / (hd as f64).sqrt());
                let biased = g.add_masked_scalar(scaled, bias, Rc::clone(&mask));
                let attn = g.softmax_rows(biased);
                heads_out.push(g.matmul(attn, v));
            }
            let cat = g.concat_axis(&heads_out, 1);
            let pw = g.param(store, &format!("{t}.proj.w"));
            let pb = g.param(store, &format!("{t}.proj.b"));
            let proj = g.linear(cat, pw, pb);
            nodes = g.add(nodes, proj);
            let ln2g = g.param(store, &format!("{t}.ln2.g"));
            let ln2b = g.param(store, &format!("{t}.ln2.b"));
            let n2 = g.layernorm_rows(nodes, ln2g, ln2b, 1e-5);
            let f1w = g.param(store, &format!("{t}.ffn1.w"));
            let f1b = g.param(store, &format!("{t}.ffn1.b"));
            let f2w = g.param(store, &format!("{t}.ffn2.w"));
            let f2b = g.param(store, &format!("{t}.ffn2.b"));
            let ff1 = g.linear(n2, f1w, f1b);
            let ffr = g.relu(ff1);
            let ff2 = g.linear(ffr, f2w, f2b);
            nodes = g.add(nodes, ff2);
        }
        let og = g.param(store, "tf_out_ln.g");
        let ob = g.param(store, "tf_out_ln.b");
        nodes = g.layernorm_rows(nodes, og, ob, 1e-5);
        check_finite(&g, nodes, "graph transformer")?;
        // Dropout at the encoder output, training only.
        if cfg.dropout > 0.0 {
            if let Some(rng) = dropout_rng {
                let keep = 1.0 - cfg.dropout;
                let mask = Arr::from_shape_fn(g.value(nodes).raw_dim(), |_| {
                    if rng.gen::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                nodes = g.dropout_mask(nodes, mask);
            }
        }
    }

    let pooled = g.mean_rows(nodes);
    let embedding = g.l2_normalize(pooled);
    let logits = match cfg.head {
        HeadKind::Affine => {
            let hw = g.param(store, "head.w");
            let hb = g.param(store, "head.b");
            let h2 = g.reshape(pooled, &[1, c]);
            let l2 = g.linear(h2, hw, hb);
            g.reshape(l2, &[cfg.num_classes])
        }
        HeadKind::Prototype { scale } => {
            let protos = g.param(store, "prototypes");
            let e2 = g.reshape(embedding, &[c, 1]);
            let sim = g.matmul(protos, e2);
            let flat = g.reshape(sim, &[cfg.num_classes]);
            g.scale(flat, scale)
        }
    };
    let l2d = g.reshape(logits, &[1, cfg.num_classes]);
    let p2d = g.softmax_rows(l2d);
    let probs = g.reshape(p2d, &[cfg.num_classes]);
    check_finite(&g, probs, "classification head")?;

    Ok(ForwardPass { graph: g, pooled, embedding, logits, probs, exponent_clamps: clamps })
}

/// Predicted class index: argmax of the output distribution.
pub fn predict(pass: &ForwardPass) -> usize {
    let p = pass.graph.value(pass.probs);
    let mut best = 0;
    for i in 1..p.len() {
        if p[[i]] > p[[best]] {
            best = i;
        }
    }
    best
}
