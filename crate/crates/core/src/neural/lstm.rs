use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayBase, ArrayView2, ArrayView3, Axis, Data, Dimension};
use rayon::prelude::*;

use super::model::{Affine, SequenceModel};
use crate::{Error, Result};

/// Batch rows handled by one task in [`loss_and_gradient`]. Fixed so the
/// reduction order does not depend on the thread count.
pub const GRADIENT_CHUNK: usize = 16;

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Post-activation gate values of one LSTM step.
#[derive(Clone, Debug, PartialEq)]
pub struct GateCache {
    pub forget: Vec<f64>,
    pub input: Vec<f64>,
    pub candidate: Vec<f64>,
    pub output: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellOutput {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    pub gates: GateCache,
}

/// Gate nonlinearities and state update for one row. `z` holds the four
/// pre-activations `[f | i | C̃ | o]`; `gates` receives their activations.
#[inline]
fn cell_pointwise(z: &[f64], c_prev: &[f64], gates: &mut [f64], c: &mut [f64], tanh_c: &mut [f64], h: &mut [f64]) {
    let hw = c_prev.len();
    for j in 0..hw {
        let f = sigmoid(z[j]);
        let i = sigmoid(z[hw + j]);
        let g = z[2 * hw + j].tanh();
        let o = sigmoid(z[3 * hw + j]);
        gates[j] = f;
        gates[hw + j] = i;
        gates[2 * hw + j] = g;
        gates[3 * hw + j] = o;
        c[j] = f * c_prev[j] + i * g;
        tanh_c[j] = c[j].tanh();
        h[j] = o * tanh_c[j];
    }
}

/// One LSTM step for a single sample. `w` is `4H × (H + I)` acting on
/// `[h_prev | x]` and `b` has length `4H`.
pub fn lstm_cell_forward(
    w: ArrayView2<f64>,
    b: &[f64],
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<CellOutput> {
    let hw = h_prev.len();
    if c_prev.len() != hw || w.nrows() != 4 * hw || b.len() != 4 * hw || w.ncols() != hw + x.len() {
        return Err(Error::Shape(format!(
            "LSTM weights {}x{}, bias {}, h {}, c {}, x {}",
            w.nrows(),
            w.ncols(),
            b.len(),
            hw,
            c_prev.len(),
            x.len()
        )));
    }
    let hx: Array1<f64> = h_prev.iter().chain(x).copied().collect();
    let z = w.dot(&hx) + &Array1::from(b.to_vec());
    let z = z.as_slice().expect("contiguous");
    let mut gates = vec![0.0; 4 * hw];
    let (mut c, mut tanh_c, mut h) = (vec![0.0; hw], vec![0.0; hw], vec![0.0; hw]);
    cell_pointwise(z, c_prev, &mut gates, &mut c, &mut tanh_c, &mut h);
    Ok(CellOutput {
        h,
        c,
        gates: GateCache {
            forget: gates[..hw].to_vec(),
            input: gates[hw..2 * hw].to_vec(),
            candidate: gates[2 * hw..3 * hw].to_vec(),
            output: gates[3 * hw..].to_vec(),
        },
    })
}

struct LayerCache {
    /// `(T, B, 4H)` gate activations.
    gates: Array3<f64>,
    /// `(T + 1, B, H)`; index 0 is the initial state.
    h: Array3<f64>,
    c: Array3<f64>,
    tanh_c: Array3<f64>,
}

struct Cache {
    inputs: Array3<f64>,
    /// Encoder activations; index 0 is the encoder input.
    enc_h: Vec<Array2<f64>>,
    enc_c: Vec<Array2<f64>>,
    layers: Vec<LayerCache>,
}

/// Result of [`forward`]: time-major outputs `(T, B, O)` and, in training
/// mode, the activations needed by [`backward`].
pub struct Forward {
    pub outputs: Array3<f64>,
    cache: Option<Cache>,
}

impl Forward {
    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }
}

fn encoder_forward(layers: &[Affine], p: &[f64], o0: ArrayView2<f64>) -> Vec<Array2<f64>> {
    let mut acts = vec![o0.to_owned()];
    for (k, a) in layers.iter().enumerate() {
        let mut z = acts[k].dot(&a.w.matrix(p).t()) + a.b.vector(p);
        if k + 1 < layers.len() {
            z.mapv_inplace(f64::tanh);
        }
        acts.push(z);
    }
    acts
}

/// `(h₀, c₀)` for a batch of initial-moment rows `(B, E)`; shared by every
/// LSTM layer.
pub fn encode_initial_state(model: &SequenceModel, o0: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    if o0.ncols() != model.config().o0_width {
        return Err(Error::Shape(format!("o0 width {} != {}", o0.ncols(), model.config().o0_width)));
    }
    let layout = model.layout();
    let p = model.params();
    let mut h = encoder_forward(&layout.encoder_h, p, o0);
    let mut c = encoder_forward(&layout.encoder_c, p, o0);
    Ok((h.pop().expect("encoder output"), c.pop().expect("encoder output")))
}

fn layer_forward(a: &Affine, p: &[f64], x: ArrayView3<f64>, h0: ArrayView2<f64>, c0: ArrayView2<f64>) -> LayerCache {
    let (t_len, batch, inp) = x.dim();
    let hw = h0.ncols();
    let w = a.w.matrix(p);
    let wh = w.slice(s![.., ..hw]);
    let wx = w.slice(s![.., hw..]);
    let x2 = x.to_shape((t_len * batch, inp)).expect("reshape input");
    let mut zx = x2.dot(&wx.t());
    zx += &a.b.vector(p);

    let mut h = Array3::zeros((t_len + 1, batch, hw));
    let mut c = Array3::zeros((t_len + 1, batch, hw));
    h.slice_mut(s![0, .., ..]).assign(&h0);
    c.slice_mut(s![0, .., ..]).assign(&c0);
    let mut gates = Array3::zeros((t_len, batch, 4 * hw));
    let mut tanh_c = Array3::zeros((t_len, batch, hw));
    let mut z = Array2::zeros((batch, 4 * hw));
    let step = batch * hw;
    for t in 0..t_len {
        z.assign(&zx.slice(s![t * batch..(t + 1) * batch, ..]));
        general_mat_mul(1.0, &h.slice(s![t, .., ..]), &wh.t(), 1.0, &mut z);
        let zs = z.as_slice().expect("contiguous");
        let (c_before, c_after) = c.as_slice_mut().expect("contiguous").split_at_mut((t + 1) * step);
        let c_prev = &c_before[t * step..];
        let c_next = &mut c_after[..step];
        let h_next = &mut h.as_slice_mut().expect("contiguous")[(t + 1) * step..(t + 2) * step];
        let g_t = &mut gates.as_slice_mut().expect("contiguous")[t * 4 * step..(t + 1) * 4 * step];
        let tc_t = &mut tanh_c.as_slice_mut().expect("contiguous")[t * step..(t + 1) * step];
        for b in 0..batch {
            let r = b * hw..(b + 1) * hw;
            let r4 = 4 * b * hw..4 * (b + 1) * hw;
            cell_pointwise(
                &zs[r4.clone()],
                &c_prev[r.clone()],
                &mut g_t[r4],
                &mut c_next[r.clone()],
                &mut tc_t[r.clone()],
                &mut h_next[r],
            );
        }
    }
    LayerCache { gates, h, c, tanh_c }
}

fn check_inputs(model: &SequenceModel, inputs: &ArrayView3<f64>, o0: &ArrayView2<f64>) -> Result<()> {
    let cfg = model.config();
    let (t_len, batch, inp) = inputs.dim();
    if inp != cfg.input_width {
        return Err(Error::Shape(format!("input width {inp} != {}", cfg.input_width)));
    }
    if o0.nrows() != batch || o0.ncols() != cfg.o0_width {
        return Err(Error::Shape(format!(
            "o0 {}x{} for batch {batch} and width {}",
            o0.nrows(),
            o0.ncols(),
            cfg.o0_width
        )));
    }
    if t_len == 0 || batch == 0 {
        return Err(Error::Shape("empty input sequence".into()));
    }
    Ok(())
}

/// Unrolls the model over time-major `inputs` `(T, B, I)` from the encoded
/// initial state of `o0` `(B, E)`.
pub fn forward(
    model: &SequenceModel,
    inputs: ArrayView3<f64>,
    o0: ArrayView2<f64>,
    keep_cache: bool,
) -> Result<Forward> {
    check_inputs(model, &inputs, &o0)?;
    let layout = model.layout();
    let p = model.params();
    let (t_len, batch, _) = inputs.dim();
    let hw = model.config().hidden;
    let enc_h = encoder_forward(&layout.encoder_h, p, o0);
    let enc_c = encoder_forward(&layout.encoder_c, p, o0);
    let h0 = enc_h.last().expect("encoder output").view();
    let c0 = enc_c.last().expect("encoder output").view();
    let inputs = inputs.as_standard_layout().into_owned();
    let mut layers: Vec<LayerCache> = Vec::with_capacity(layout.lstm.len());
    for a in &layout.lstm {
        let cache = match layers.last() {
            None => layer_forward(a, p, inputs.view(), h0, c0),
            Some(below) => layer_forward(a, p, below.h.slice(s![1.., .., ..]), h0, c0),
        };
        if !keep_cache {
            layers.clear();
        }
        layers.push(cache);
    }
    let top = layers.last().expect("at least one layer");
    let top_h = top.h.slice(s![1.., .., ..]);
    let top2 = top_h.to_shape((t_len * batch, hw)).expect("reshape hidden");
    let y = top2.dot(&layout.head.w.matrix(p).t()) + layout.head.b.vector(p);
    let outputs = y.into_shape_with_order((t_len, batch, layout.head.w.rows)).expect("reshape outputs");
    let cache = keep_cache.then(|| Cache { inputs, enc_h, enc_c, layers });
    Ok(Forward { outputs, cache })
}

/// Single-sequence forward pass: `inputs` is `(T, I)`, output `(T, O)`.
pub fn model_forward(model: &SequenceModel, inputs: ArrayView2<f64>, o0: &[f64]) -> Result<Array2<f64>> {
    let (t_len, inp) = inputs.dim();
    let x = inputs.to_shape((t_len, 1, inp)).expect("reshape");
    let o = ArrayView2::from_shape((1, o0.len()), o0).expect("row vector");
    let out = forward(model, x.view(), o, false)?.outputs;
    let o_w = out.dim().2;
    Ok(out.into_shape_with_order((t_len, o_w)).expect("reshape"))
}

/// Mean of squared differences over all entries.
pub fn mse_loss<S1, S2, D>(pred: &ArrayBase<S1, D>, truth: &ArrayBase<S2, D>) -> Result<f64>
where
    S1: Data<Elem = f64>,
    S2: Data<Elem = f64>,
    D: Dimension,
{
    if pred.shape() != truth.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", pred.shape(), truth.shape())));
    }
    if pred.is_empty() {
        return Err(Error::Shape("empty arrays".into()));
    }
    let sum: f64 = pred.iter().zip(truth.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / pred.len() as f64)
}

fn encoder_backward(layers: &[Affine], p: &[f64], acts: &[Array2<f64>], d_out: Array2<f64>, g: &mut [f64]) {
    let mut d = d_out;
    for k in (0..layers.len()).rev() {
        let a = &layers[k];
        if k + 1 < layers.len() {
            d.zip_mut_with(&acts[k + 1], |dv, &av| *dv *= 1.0 - av * av);
        }
        let mut gw = a.w.matrix_mut(g);
        general_mat_mul(1.0, &d.t(), &acts[k], 1.0, &mut gw);
        a.b.vector_mut(g).scaled_add(1.0, &d.sum_axis(Axis(0)));
        if k > 0 {
            d = d.dot(&a.w.matrix(p));
        }
    }
}

/// BPTT through one layer. Accumulates weight gradients into `g` and returns
/// `(dL/dx, dL/dh₀, dL/dc₀)`; `dL/dx` is skipped when `want_dx` is false.
fn layer_backward(
    a: &Affine,
    p: &[f64],
    x: ArrayView3<f64>,
    lc: &LayerCache,
    dh_out: ArrayView3<f64>,
    want_dx: bool,
    g: &mut [f64],
) -> (Option<Array3<f64>>, Array2<f64>, Array2<f64>) {
    let (t_len, batch, inp) = x.dim();
    let hw = lc.h.dim().2;
    let w = a.w.matrix(p);
    let wh = w.slice(s![.., ..hw]);
    let wx = w.slice(s![.., hw..]);
    let mut dz = Array2::<f64>::zeros((t_len * batch, 4 * hw));
    let mut dh_next = Array2::<f64>::zeros((batch, hw));
    let mut dc_next = Array2::<f64>::zeros((batch, hw));
    let step = batch * hw;
    let gates = lc.gates.as_slice().expect("contiguous");
    let cs = lc.c.as_slice().expect("contiguous");
    let tcs = lc.tanh_c.as_slice().expect("contiguous");
    let dhs = dh_out.as_standard_layout();
    let dhs = dhs.as_slice().expect("contiguous");
    for t in (0..t_len).rev() {
        {
            let dz_t = &mut dz.as_slice_mut().expect("contiguous")[t * 4 * step..(t + 1) * 4 * step];
            let dhn = dh_next.as_slice().expect("contiguous");
            let dcn = dc_next.as_slice_mut().expect("contiguous");
            for b in 0..batch {
                for j in 0..hw {
                    let k = b * hw + j;
                    let gb = t * 4 * step + 4 * b * hw;
                    let (f, i, gc, o) =
                        (gates[gb + j], gates[gb + hw + j], gates[gb + 2 * hw + j], gates[gb + 3 * hw + j]);
                    let tc = tcs[t * step + k];
                    let c_prev = cs[t * step + k];
                    let dh = dhs[t * step + k] + dhn[k];
                    let d_o = dh * tc;
                    let dc = dh * o * (1.0 - tc * tc) + dcn[k];
                    let zb = 4 * b * hw;
                    dz_t[zb + j] = dc * c_prev * f * (1.0 - f);
                    dz_t[zb + hw + j] = dc * gc * i * (1.0 - i);
                    dz_t[zb + 2 * hw + j] = dc * i * (1.0 - gc * gc);
                    dz_t[zb + 3 * hw + j] = d_o * o * (1.0 - o);
                    dcn[k] = dc * f;
                }
            }
        }
        let dz_t = dz.slice(s![t * batch..(t + 1) * batch, ..]);
        general_mat_mul(1.0, &dz_t, &wh, 0.0, &mut dh_next);
    }
    let h_prev = lc.h.slice(s![..t_len, .., ..]);
    let h_prev = h_prev.to_shape((t_len * batch, hw)).expect("reshape");
    let x2 = x.to_shape((t_len * batch, inp)).expect("reshape");
    {
        let mut gw = a.w.matrix_mut(g);
        general_mat_mul(1.0, &dz.t(), &h_prev, 1.0, &mut gw.slice_mut(s![.., ..hw]));
        general_mat_mul(1.0, &dz.t(), &x2, 1.0, &mut gw.slice_mut(s![.., hw..]));
    }
    a.b.vector_mut(g).scaled_add(1.0, &dz.sum_axis(Axis(0)));
    let dx = want_dx.then(|| dz.dot(&wx).into_shape_with_order((t_len, batch, inp)).expect("reshape"));
    (dx, dh_next, dc_next)
}

/// Gradient of a scalar loss with respect to every parameter, given
/// `d_out = dL/d(outputs)` with the shape of `forward.outputs`.
pub fn backward(model: &SequenceModel, fwd: &Forward, d_out: ArrayView3<f64>) -> Result<Vec<f64>> {
    let cache = fwd.cache.as_ref().ok_or(Error::MissingCache)?;
    if d_out.dim() != fwd.outputs.dim() {
        return Err(Error::Shape(format!("upstream {:?} vs outputs {:?}", d_out.dim(), fwd.outputs.dim())));
    }
    let layout = model.layout();
    let p = model.params();
    let mut g = vec![0.0; layout.len];
    let (t_len, batch, o_w) = d_out.dim();
    let hw = model.config().hidden;

    let top = cache.layers.last().expect("layers");
    let top_h = top.h.slice(s![1.., .., ..]);
    let top_h = top_h.to_shape((t_len * batch, hw)).expect("reshape");
    let dy = d_out.as_standard_layout();
    let dy = dy.to_shape((t_len * batch, o_w)).expect("reshape");
    general_mat_mul(1.0, &dy.t(), &top_h, 1.0, &mut layout.head.w.matrix_mut(&mut g));
    layout.head.b.vector_mut(&mut g).scaled_add(1.0, &dy.sum_axis(Axis(0)));
    let mut dh = dy.dot(&layout.head.w.matrix(p)).into_shape_with_order((t_len, batch, hw)).expect("reshape");

    let mut dh0 = Array2::<f64>::zeros((batch, hw));
    let mut dc0 = Array2::<f64>::zeros((batch, hw));
    for l in (0..layout.lstm.len()).rev() {
        let x = if l == 0 { cache.inputs.view() } else { cache.layers[l - 1].h.slice(s![1.., .., ..]) };
        let (dx, dh_l, dc_l) = layer_backward(&layout.lstm[l], p, x, &cache.layers[l], dh.view(), l > 0, &mut g);
        dh0 += &dh_l;
        dc0 += &dc_l;
        if let Some(dx) = dx {
            dh = dx;
        }
    }
    encoder_backward(&layout.encoder_h, p, &cache.enc_h, dh0, &mut g);
    encoder_backward(&layout.encoder_c, p, &cache.enc_c, dc0, &mut g);
    Ok(g)
}

/// MSE over a whole batch and its gradient. The batch (axis 1) is split into
/// [`GRADIENT_CHUNK`]-row pieces whose gradients are summed in order, so the
/// result is identical with or without `parallel`.
pub fn loss_and_gradient(
    model: &SequenceModel,
    inputs: ArrayView3<f64>,
    o0: ArrayView2<f64>,
    targets: ArrayView3<f64>,
    parallel: bool,
) -> Result<(f64, Vec<f64>)> {
    check_inputs(model, &inputs, &o0)?;
    let (t_len, batch, _) = inputs.dim();
    let o_w = model.config().output_width;
    if targets.dim() != (t_len, batch, o_w) {
        return Err(Error::Shape(format!("targets {:?} vs ({t_len}, {batch}, {o_w})", targets.dim())));
    }
    let total = (t_len * batch * o_w) as f64;
    let starts: Vec<usize> = (0..batch).step_by(GRADIENT_CHUNK).collect();
    let chunk = |&start: &usize| -> Result<(f64, Vec<f64>)> {
        let end = (start + GRADIENT_CHUNK).min(batch);
        let x = inputs.slice(s![.., start..end, ..]);
        let o = o0.slice(s![start..end, ..]);
        let y = targets.slice(s![.., start..end, ..]);
        let fwd = forward(model, x, o, true)?;
        let diff = &fwd.outputs - &y;
        let sq: f64 = diff.iter().map(|d| d * d).sum();
        let d_out = diff.mapv(|d| 2.0 * d / total);
        Ok((sq, backward(model, &fwd, d_out.view())?))
    };
    let parts: Vec<Result<(f64, Vec<f64>)>> =
        if parallel { starts.par_iter().map(chunk).collect() } else { starts.iter().map(chunk).collect() };
    let mut loss = 0.0;
    let mut grad = vec![0.0; model.n_params()];
    for part in parts {
        let (sq, g) = part?;
        loss += sq;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    Ok((loss / total, grad))
}
