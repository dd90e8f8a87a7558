//! Bidirectional gated recurrent layer (GRU or LSTM cells).
//!
//! Per direction the parameters are input weights `F x gH`, recurrent weights
//! `H x gH` and a bias `gH`, where `g` is 3 for GRU (update, reset, candidate)
//! and 4 for LSTM (input, forget, cell, output). Output row `t` concatenates the
//! forward state after step `t` with the backward state after step `t`.

use serde::{Deserialize, Serialize};

use super::kernels::sigmoid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Gru,
    Lstm,
}

impl CellKind {
    pub fn gates(self) -> usize {
        match self {
            CellKind::Gru => 3,
            CellKind::Lstm => 4,
        }
    }
}

/// Borrowed weights for one direction.
#[derive(Clone, Copy)]
pub struct DirWeights<'a> {
    pub w: &'a [f64],
    pub u: &'a [f64],
    pub b: &'a [f64],
}

#[derive(Clone, Debug, Default)]
pub struct DirGrads {
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub b: Vec<f64>,
}

/// Activations saved during the forward pass, in processing order.
#[derive(Clone, Debug)]
pub struct DirCache {
    /// State entering each step (`T x H`).
    h_prev: Vec<f64>,
    /// Post-activation gates per step (`T x gH`).
    gates: Vec<f64>,
    /// GRU: `r * h_prev`; LSTM: cell state entering the step.
    aux: Vec<f64>,
    /// LSTM only: cell state after the step.
    c_out: Vec<f64>,
    /// Hidden state after each step (`T x H`).
    h_out: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct BiCache {
    fw: DirCache,
    bw: DirCache,
}

fn vec_mat(v: &[f64], m: &[f64], cols: usize, out: &mut [f64]) {
    for (i, &x) in v.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (o, &mv) in out.iter_mut().zip(&m[i * cols..(i + 1) * cols]) {
            *o += x * mv;
        }
    }
}

/// Runs one direction over `order` (time indices in processing order).
fn run_direction(
    kind: CellKind,
    input: &[f64],
    features: usize,
    hidden: usize,
    p: DirWeights<'_>,
    order: &[usize],
) -> DirCache {
    let g = kind.gates();
    let gh = g * hidden;
    let steps = order.len();
    let mut cache = DirCache {
        h_prev: vec![0.0; steps * hidden],
        gates: vec![0.0; steps * gh],
        aux: vec![0.0; steps * hidden],
        c_out: if kind == CellKind::Lstm { vec![0.0; steps * hidden] } else { Vec::new() },
        h_out: vec![0.0; steps * hidden],
    };
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    let mut pre = vec![0.0; gh];
    for (s, &t) in order.iter().enumerate() {
        let x = &input[t * features..(t + 1) * features];
        pre.copy_from_slice(p.b);
        vec_mat(x, p.w, gh, &mut pre);
        cache.h_prev[s * hidden..(s + 1) * hidden].copy_from_slice(&h);
        let gates = &mut cache.gates[s * gh..(s + 1) * gh];
        match kind {
            CellKind::Gru => {
                // Recurrent contribution to the update and reset gates.
                let mut rec = vec![0.0; gh];
                for (i, &hv) in h.iter().enumerate() {
                    if hv == 0.0 {
                        continue;
                    }
                    let row = &p.u[i * gh..i * gh + 2 * hidden];
                    for (r, &uv) in rec[..2 * hidden].iter_mut().zip(row) {
                        *r += hv * uv;
                    }
                }
                for j in 0..2 * hidden {
                    gates[j] = sigmoid(pre[j] + rec[j]);
                }
                let rh = &mut cache.aux[s * hidden..(s + 1) * hidden];
                for j in 0..hidden {
                    rh[j] = gates[hidden + j] * h[j];
                }
                let mut cand = pre[2 * hidden..].to_vec();
                for (i, &v) in rh.iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    let row = &p.u[i * gh + 2 * hidden..(i + 1) * gh];
                    for (cv, &uv) in cand.iter_mut().zip(row) {
                        *cv += v * uv;
                    }
                }
                for j in 0..hidden {
                    let n = cand[j].tanh();
                    gates[2 * hidden + j] = n;
                    let z = gates[j];
                    h[j] = (1.0 - z) * n + z * h[j];
                }
            }
            CellKind::Lstm => {
                vec_mat(&h, p.u, gh, &mut pre);
                cache.aux[s * hidden..(s + 1) * hidden].copy_from_slice(&c);
                for j in 0..hidden {
                    let i_g = sigmoid(pre[j]);
                    let f_g = sigmoid(pre[hidden + j]);
                    let c_g = pre[2 * hidden + j].tanh();
                    let o_g = sigmoid(pre[3 * hidden + j]);
                    gates[j] = i_g;
                    gates[hidden + j] = f_g;
                    gates[2 * hidden + j] = c_g;
                    gates[3 * hidden + j] = o_g;
                    c[j] = f_g * c[j] + i_g * c_g;
                    h[j] = o_g * c[j].tanh();
                }
                cache.c_out[s * hidden..(s + 1) * hidden].copy_from_slice(&c);
            }
        }
        cache.h_out[s * hidden..(s + 1) * hidden].copy_from_slice(&h);
    }
    cache
}

/// Backpropagation through time for one direction. `grad_h` holds the output
/// gradient for each processing step. Accumulates into `grads` and `grad_x`.
#[allow(clippy::too_many_arguments)]
fn backprop_direction(
    kind: CellKind,
    input: &[f64],
    features: usize,
    hidden: usize,
    p: DirWeights<'_>,
    order: &[usize],
    cache: &DirCache,
    grad_h: &[f64],
    grads: &mut DirGrads,
    grad_x: &mut [f64],
) {
    let g = kind.gates();
    let gh = g * hidden;
    let mut dh_next = vec![0.0; hidden];
    let mut dc_next = vec![0.0; hidden];
    let mut da = vec![0.0; gh];
    for (s, &t) in order.iter().enumerate().rev() {
        let x = &input[t * features..(t + 1) * features];
        let h_prev = &cache.h_prev[s * hidden..(s + 1) * hidden];
        let gates = &cache.gates[s * gh..(s + 1) * gh];
        let mut dh: Vec<f64> = (0..hidden)
            .map(|j| grad_h[s * hidden + j] + dh_next[j])
            .collect();
        let mut dh_prev = vec![0.0; hidden];
        match kind {
            CellKind::Gru => {
                let rh = &cache.aux[s * hidden..(s + 1) * hidden];
                for j in 0..hidden {
                    let z = gates[j];
                    let n = gates[2 * hidden + j];
                    let dn = dh[j] * (1.0 - z);
                    let dz = dh[j] * (h_prev[j] - n);
                    dh_prev[j] = dh[j] * z;
                    da[j] = dz * z * (1.0 - z);
                    da[2 * hidden + j] = dn * (1.0 - n * n);
                }
                // Candidate path through r * h_prev.
                let mut drh = vec![0.0; hidden];
                for i in 0..hidden {
                    let row = &p.u[i * gh + 2 * hidden..(i + 1) * gh];
                    drh[i] = row.iter().zip(&da[2 * hidden..]).map(|(a, b)| a * b).sum();
                    if rh[i] != 0.0 {
                        let gu = &mut grads.u[i * gh + 2 * hidden..(i + 1) * gh];
                        for (gv, &d) in gu.iter_mut().zip(&da[2 * hidden..]) {
                            *gv += rh[i] * d;
                        }
                    }
                }
                for j in 0..hidden {
                    let r = gates[hidden + j];
                    let dr = drh[j] * h_prev[j];
                    dh_prev[j] += drh[j] * r;
                    da[hidden + j] = dr * r * (1.0 - r);
                }
                for i in 0..hidden {
                    let row = &p.u[i * gh..i * gh + 2 * hidden];
                    dh_prev[i] += row.iter().zip(&da[..2 * hidden]).map(|(a, b)| a * b).sum::<f64>();
                    if h_prev[i] != 0.0 {
                        let gu = &mut grads.u[i * gh..i * gh + 2 * hidden];
                        for (gv, &d) in gu.iter_mut().zip(&da[..2 * hidden]) {
                            *gv += h_prev[i] * d;
                        }
                    }
                }
            }
            CellKind::Lstm => {
                let c_prev = &cache.aux[s * hidden..(s + 1) * hidden];
                let c_out = &cache.c_out[s * hidden..(s + 1) * hidden];
                for j in 0..hidden {
                    let (i_g, f_g, c_g, o_g) = (
                        gates[j],
                        gates[hidden + j],
                        gates[2 * hidden + j],
                        gates[3 * hidden + j],
                    );
                    let tc = c_out[j].tanh();
                    let d_o = dh[j] * tc;
                    let dc = dc_next[j] + dh[j] * o_g * (1.0 - tc * tc);
                    da[j] = dc * c_g * i_g * (1.0 - i_g);
                    da[hidden + j] = dc * c_prev[j] * f_g * (1.0 - f_g);
                    da[2 * hidden + j] = dc * i_g * (1.0 - c_g * c_g);
                    da[3 * hidden + j] = d_o * o_g * (1.0 - o_g);
                    dc_next[j] = dc * f_g;
                }
                for i in 0..hidden {
                    let row = &p.u[i * gh..(i + 1) * gh];
                    dh_prev[i] = row.iter().zip(&da).map(|(a, b)| a * b).sum();
                    if h_prev[i] != 0.0 {
                        for (gv, &d) in grads.u[i * gh..(i + 1) * gh].iter_mut().zip(&da) {
                            *gv += h_prev[i] * d;
                        }
                    }
                }
            }
        }
        for (gb, &d) in grads.b.iter_mut().zip(&da) {
            *gb += d;
        }
        let gx = &mut grad_x[t * features..(t + 1) * features];
        for (i, &xv) in x.iter().enumerate() {
            let row = &p.w[i * gh..(i + 1) * gh];
            gx[i] += row.iter().zip(&da).map(|(a, b)| a * b).sum::<f64>();
            if xv != 0.0 {
                for (gv, &d) in grads.w[i * gh..(i + 1) * gh].iter_mut().zip(&da) {
                    *gv += xv * d;
                }
            }
        }
        dh.copy_from_slice(&dh_prev);
        dh_next = dh;
    }
}

/// Forward pass of the bidirectional layer over a `T x F` input.
/// Returns the `T x 2H` output and the cache needed for backpropagation.
pub fn bidirectional_forward(
    kind: CellKind,
    input: &[f64],
    steps: usize,
    features: usize,
    hidden: usize,
    fw: DirWeights<'_>,
    bw: DirWeights<'_>,
) -> (Vec<f64>, BiCache) {
    let fwd_order: Vec<usize> = (0..steps).collect();
    let bwd_order: Vec<usize> = (0..steps).rev().collect();
    let fw_cache = run_direction(kind, input, features, hidden, fw, &fwd_order);
    let bw_cache = run_direction(kind, input, features, hidden, bw, &bwd_order);
    let mut out = vec![0.0; steps * 2 * hidden];
    for t in 0..steps {
        let row = &mut out[t * 2 * hidden..(t + 1) * 2 * hidden];
        row[..hidden].copy_from_slice(&fw_cache.h_out[t * hidden..(t + 1) * hidden]);
        let s = steps - 1 - t;
        row[hidden..].copy_from_slice(&bw_cache.h_out[s * hidden..(s + 1) * hidden]);
    }
    (
        out,
        BiCache {
            fw: fw_cache,
            bw: bw_cache,
        },
    )
}

/// Returns `(grad_input, forward_grads, backward_grads)`.
#[allow(clippy::too_many_arguments)]
pub fn bidirectional_backward(
    kind: CellKind,
    input: &[f64],
    steps: usize,
    features: usize,
    hidden: usize,
    fw: DirWeights<'_>,
    bw: DirWeights<'_>,
    cache: &BiCache,
    grad_out: &[f64],
) -> (Vec<f64>, DirGrads, DirGrads) {
    let zero_grads = |p: DirWeights<'_>| DirGrads {
        w: vec![0.0; p.w.len()],
        u: vec![0.0; p.u.len()],
        b: vec![0.0; p.b.len()],
    };
    let mut g_fw = zero_grads(fw);
    let mut g_bw = zero_grads(bw);
    let mut grad_x = vec![0.0; input.len()];
    let mut gh_fw = vec![0.0; steps * hidden];
    let mut gh_bw = vec![0.0; steps * hidden];
    for t in 0..steps {
        let row = &grad_out[t * 2 * hidden..(t + 1) * 2 * hidden];
        gh_fw[t * hidden..(t + 1) * hidden].copy_from_slice(&row[..hidden]);
        let s = steps - 1 - t;
        gh_bw[s * hidden..(s + 1) * hidden].copy_from_slice(&row[hidden..]);
    }
    let fwd_order: Vec<usize> = (0..steps).collect();
    let bwd_order: Vec<usize> = (0..steps).rev().collect();
    backprop_direction(kind, input, features, hidden, fw, &fwd_order, &cache.fw, &gh_fw, &mut g_fw, &mut grad_x);
    backprop_direction(kind, input, features, hidden, bw, &bwd_order, &cache.bw, &gh_bw, &mut g_bw, &mut grad_x);
    (grad_x, g_fw, g_bw)
}
