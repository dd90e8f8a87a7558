//! Forward and backward kernels on raw row-major buffers.
//!
//! Images are laid out `H x W x C`, convolution kernels `3 x 3 x Cin x Cout`.

/// 3x3 convolution, stride 1, zero padding of one pixel on every border.
pub fn conv3x3_forward(
    input: &[f64],
    (h, w, cin): (usize, usize, usize),
    kernels: &[f64],
    bias: &[f64],
    cout: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; h * w * cout];
    for px in out.chunks_exact_mut(cout) {
        px.copy_from_slice(bias);
    }
    for y in 0..h {
        for x in 0..w {
            let o = &mut out[(y * w + x) * cout..(y * w + x + 1) * cout];
            for ky in 0..3 {
                let Some(iy) = (y + ky).checked_sub(1).filter(|&iy| iy < h) else { continue };
                for kx in 0..3 {
                    let Some(ix) = (x + kx).checked_sub(1).filter(|&ix| ix < w) else { continue };
                    let patch = &input[(iy * w + ix) * cin..(iy * w + ix + 1) * cin];
                    let taps = &kernels[(ky * 3 + kx) * cin * cout..(ky * 3 + kx + 1) * cin * cout];
                    for (&v, k) in patch.iter().zip(taps.chunks_exact(cout)) {
                        if v == 0.0 {
                            continue;
                        }
                        for (acc, &kv) in o.iter_mut().zip(k) {
                            *acc += v * kv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of [`conv3x3_forward`] with respect to input, kernels and bias.
/// The input gradient is skipped (left empty) unless `input_grad` is set.
pub fn conv3x3_backward(
    input: &[f64],
    (h, w, cin): (usize, usize, usize),
    kernels: &[f64],
    cout: usize,
    grad_out: &[f64],
    input_grad: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut g_in = if input_grad { vec![0.0; input.len()] } else { Vec::new() };
    let mut g_k = vec![0.0; kernels.len()];
    let mut g_b = vec![0.0; cout];
    for y in 0..h {
        for x in 0..w {
            let go = &grad_out[(y * w + x) * cout..(y * w + x + 1) * cout];
            for (b, &g) in g_b.iter_mut().zip(go) {
                *b += g;
            }
            for ky in 0..3 {
                let Some(iy) = (y + ky).checked_sub(1).filter(|&iy| iy < h) else { continue };
                for kx in 0..3 {
                    let Some(ix) = (x + kx).checked_sub(1).filter(|&ix| ix < w) else { continue };
                    let base = (iy * w + ix) * cin;
                    let kbase = (ky * 3 + kx) * cin * cout;
                    for ci in 0..cin {
                        let v = input[base + ci];
                        let krange = kbase + ci * cout..kbase + (ci + 1) * cout;
                        if input_grad {
                            g_in[base + ci] += kernels[krange.clone()].iter().zip(go).map(|(a, b)| a * b).sum::<f64>();
                        }
                        if v != 0.0 {
                            for (gk, &g) in g_k[krange].iter_mut().zip(go) {
                                *gk += v * g;
                            }
                        }
                    }
                }
            }
        }
    }
    (g_in, g_k, g_b)
}

/// Disjoint 2x2 max pooling. Returns the pooled values and, per output cell,
/// the flat input index that won (first in row-major order on ties).
pub fn maxpool2x2_forward(input: &[f64], (h, w, c): (usize, usize, usize)) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; oh * ow * c];
    let mut arg = vec![0usize; oh * ow * c];
    for y in 0..oh {
        for x in 0..ow {
            for ch in 0..c {
                let mut best_i = ((2 * y) * w + 2 * x) * c + ch;
                let mut best = input[best_i];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = ((2 * y + dy) * w + 2 * x + dx) * c + ch;
                    if input[i] > best {
                        best = input[i];
                        best_i = i;
                    }
                }
                let o = (y * ow + x) * c + ch;
                out[o] = best;
                arg[o] = best_i;
            }
        }
    }
    (out, arg)
}

pub fn maxpool2x2_backward(input_len: usize, argmax: &[usize], grad_out: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; input_len];
    for (&i, &go) in argmax.iter().zip(grad_out) {
        g[i] += go;
    }
    g
}

/// `rows x n` times `n x m` plus bias, the shared map behind dense and
/// time-distributed dense.
pub fn affine_forward(input: &[f64], rows: usize, n: usize, weights: &[f64], bias: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * m];
    for r in 0..rows {
        let o = &mut out[r * m..(r + 1) * m];
        o.copy_from_slice(bias);
        for (i, &v) in input[r * n..(r + 1) * n].iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            for (acc, &wv) in o.iter_mut().zip(&weights[i * m..(i + 1) * m]) {
                *acc += v * wv;
            }
        }
    }
    out
}

pub fn affine_backward(
    input: &[f64],
    rows: usize,
    n: usize,
    weights: &[f64],
    m: usize,
    grad_out: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut g_in = vec![0.0; rows * n];
    let mut g_w = vec![0.0; n * m];
    let mut g_b = vec![0.0; m];
    for r in 0..rows {
        let go = &grad_out[r * m..(r + 1) * m];
        for (b, &g) in g_b.iter_mut().zip(go) {
            *b += g;
        }
        for i in 0..n {
            let v = input[r * n + i];
            let wrow = &weights[i * m..(i + 1) * m];
            g_in[r * n + i] = wrow.iter().zip(go).map(|(a, b)| a * b).sum();
            if v != 0.0 {
                for (gw, &g) in g_w[i * m..(i + 1) * m].iter_mut().zip(go) {
                    *gw += v * g;
                }
            }
        }
    }
    (g_in, g_w, g_b)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(sum(exp(xs)))`; `-inf` for an all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Row-wise softmax over the last dimension.
pub fn softmax_rows(input: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; input.len()];
    for (row, o) in input.chunks_exact(cols).zip(out.chunks_exact_mut(cols)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (ov, &v) in o.iter_mut().zip(row) {
            *ov = (v - max).exp();
            sum += *ov;
        }
        for ov in o.iter_mut() {
            *ov /= sum;
        }
    }
    out
}

pub fn log_softmax_rows(input: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; input.len()];
    for (row, o) in input.chunks_exact(cols).zip(out.chunks_exact_mut(cols)) {
        let lse = log_sum_exp(row);
        for (ov, &v) in o.iter_mut().zip(row) {
            *ov = v - lse;
        }
    }
    out
}
