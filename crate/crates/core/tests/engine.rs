mod common;

use common::{conv_oracle, ctc_path_enumeration, pool_oracle, random_tensor, rng};
use hwcheck::engine::kernels::sigmoid;
use hwcheck::engine::{ctc, Activation, CellKind, Graph, RecurrentNodes, Tensor};
use hwcheck::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn conv_zero_input_passes_bias() {
    let mut g = Graph::new();
    let x = g.constant("x", Tensor::zeros(&[4, 4, 1]));
    let k = g.constant("k", random_tensor(&[3, 3, 1, 1], &mut rng(1)));
    let b = g.constant("b", Tensor::full(&[1], 0.5));
    let y = g.conv3x3("conv", x, k, b).unwrap();
    assert_eq!(g.value(y).shape(), &[4, 4, 1]);
    assert!(g.value(y).data().iter().all(|&v| v == 0.5));
}

#[test]
fn conv_delta_kernel_is_identity() {
    let input = random_tensor(&[5, 6, 1], &mut rng(2));
    let mut delta = Tensor::zeros(&[3, 3, 1, 1]);
    delta.set(&[1, 1, 0, 0], 1.0);
    let mut g = Graph::new();
    let x = g.constant("x", input.clone());
    let k = g.constant("k", delta);
    let b = g.constant("b", Tensor::zeros(&[1]));
    let y = g.conv3x3("conv", x, k, b).unwrap();
    assert_eq!(g.value(y).data(), input.data());
}

#[test]
fn conv_matches_direct_summation() {
    let mut r = rng(3);
    let input = random_tensor(&[5, 5, 2], &mut r);
    let kernels = random_tensor(&[3, 3, 2, 3], &mut r);
    let bias = random_tensor(&[3], &mut r);
    let expected = conv_oracle(&input, &kernels, &bias);
    let mut g = Graph::new();
    let x = g.constant("x", input);
    let k = g.constant("k", kernels);
    let b = g.constant("b", bias);
    let y = g.conv3x3("conv", x, k, b).unwrap();
    assert_eq!(g.value(y).shape(), &[5, 5, 3]);
    for (a, e) in g.value(y).data().iter().zip(&expected) {
        assert!((a - e).abs() < 1e-12);
    }
}

#[test]
fn conv_rejects_channel_mismatch() {
    let mut g = Graph::new();
    let x = g.constant("x", Tensor::zeros(&[4, 4, 2]));
    let k = g.constant("k", Tensor::zeros(&[3, 3, 1, 4]));
    let b = g.constant("b", Tensor::zeros(&[4]));
    assert!(matches!(g.conv3x3("conv", x, k, b), Err(Error::Dimension(_))));
}

#[test]
fn pool_small_and_odd() {
    let mut g = Graph::new();
    let x = g.constant("x", Tensor::new(&[2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let y = g.maxpool2x2("pool", x).unwrap();
    assert_eq!(g.value(y).data(), &[4.0]);
    let odd = g.constant("odd", Tensor::zeros(&[3, 4, 1]));
    assert!(matches!(g.maxpool2x2("pool", odd), Err(Error::Dimension(_))));
}

#[test]
fn pool_ties_route_to_first_cell() {
    let mut g = Graph::new();
    let x = g.param("x", Tensor::full(&[4, 4, 1], 2.0));
    let y = g.maxpool2x2("pool", x).unwrap();
    assert!(g.value(y).data().iter().all(|&v| v == 2.0));
    let loss = g.weighted_sum("loss", y, vec![1.0; 4]).unwrap();
    g.backward(loss).unwrap();
    let grad = g.grad(x).unwrap();
    for y in 0..4 {
        for x in 0..4 {
            let expected = if y % 2 == 0 && x % 2 == 0 { 1.0 } else { 0.0 };
            assert_eq!(grad[y * 4 + x], expected, "cell ({y},{x})");
        }
    }
}

#[test]
fn pool_matches_window_scan() {
    let input = random_tensor(&[8, 8, 3], &mut rng(4));
    let expected = pool_oracle(&input);
    let mut g = Graph::new();
    let x = g.constant("x", input);
    let y = g.maxpool2x2("pool", x).unwrap();
    assert_eq!(g.value(y).shape(), &[4, 4, 3]);
    assert_eq!(g.value(y).data(), &expected[..]);
}

#[test]
fn dense_identity_zero_and_oracle() {
    let mut r = rng(5);
    let input = random_tensor(&[4], &mut r);
    let mut eye = Tensor::zeros(&[4, 4]);
    for i in 0..4 {
        eye.set(&[i, i], 1.0);
    }
    let mut g = Graph::new();
    let x = g.constant("x", input.clone());
    let w = g.constant("w", eye);
    let b = g.constant("b", Tensor::zeros(&[4]));
    let y = g.dense("dense", x, w, b).unwrap();
    assert_eq!(g.value(y).data(), input.data());

    let zero = g.constant("zero", Tensor::zeros(&[4]));
    let w3 = random_tensor(&[4, 3], &mut r);
    let b3 = random_tensor(&[3], &mut r);
    let wn = g.constant("w3", w3.clone());
    let bn = g.constant("b3", b3.clone());
    let y0 = g.dense("dense", zero, wn, bn).unwrap();
    assert_eq!(g.value(y0).data(), b3.data());

    let y1 = g.dense("dense", x, wn, bn).unwrap();
    for j in 0..3 {
        let dot: f64 = (0..4).map(|i| input.data()[i] * w3.get(&[i, j])).sum::<f64>() + b3.data()[j];
        assert!((g.value(y1).data()[j] - dot).abs() < 1e-12);
    }
}

#[test]
fn time_distributed_dense_is_per_row_dense() {
    let mut r = rng(6);
    let input = random_tensor(&[5, 4], &mut r);
    let w = random_tensor(&[4, 2], &mut r);
    let b = random_tensor(&[2], &mut r);
    let mut g = Graph::new();
    let x = g.constant("x", input.clone());
    let wn = g.constant("w", w.clone());
    let bn = g.constant("b", b.clone());
    let y = g.time_distributed_dense("td", x, wn, bn).unwrap();
    assert_eq!(g.value(y).shape(), &[5, 2]);
    for t in 0..5 {
        let row = g.constant("row", Tensor::new(&[4], input.row(t).to_vec()).unwrap());
        let d = g.dense("dense", row, wn, bn).unwrap();
        for j in 0..2 {
            let oracle: f64 = (0..4).map(|i| input.get(&[t, i]) * w.get(&[i, j])).sum::<f64>() + b.data()[j];
            assert!((g.value(y).get(&[t, j]) - oracle).abs() < 1e-12);
            assert_eq!(g.value(y).get(&[t, j]), g.value(d).data()[j]);
        }
    }
}

#[test]
fn time_distributed_dense_shares_weights() {
    let mut r = rng(7);
    let row: Vec<f64> = random_tensor(&[3], &mut r).into_data();
    let input = Tensor::new(&[2, 3], [row.clone(), row].concat()).unwrap();
    let mut g = Graph::new();
    let x = g.constant("x", input);
    let w = g.constant("w", random_tensor(&[3, 4], &mut r));
    let b = g.constant("b", random_tensor(&[4], &mut r));
    let y = g.time_distributed_dense("td", x, w, b).unwrap();
    assert_eq!(g.value(y).row(0), g.value(y).row(1));
}

struct DirParams {
    w: Tensor,
    u: Tensor,
    b: Tensor,
}

/// Plain GRU step written gate by gate.
fn gru_step(p: &DirParams, x: &[f64], h: &[f64]) -> Vec<f64> {
    let hidden = h.len();
    let pre = |gate: usize, j: usize, hv: &[f64]| -> f64 {
        let col = gate * hidden + j;
        let mut s = p.b.data()[col];
        for (i, &xv) in x.iter().enumerate() {
            s += xv * p.w.get(&[i, col]);
        }
        for (i, &v) in hv.iter().enumerate() {
            s += v * p.u.get(&[i, col]);
        }
        s
    };
    let z: Vec<f64> = (0..hidden).map(|j| sigmoid(pre(0, j, h))).collect();
    let r: Vec<f64> = (0..hidden).map(|j| sigmoid(pre(1, j, h))).collect();
    let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
    (0..hidden)
        .map(|j| {
            let n = pre(2, j, &rh).tanh();
            (1.0 - z[j]) * n + z[j] * h[j]
        })
        .collect()
}

fn lstm_step(p: &DirParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let hidden = h.len();
    let pre = |gate: usize, j: usize| -> f64 {
        let col = gate * hidden + j;
        p.b.data()[col]
            + x.iter().enumerate().map(|(i, &v)| v * p.w.get(&[i, col])).sum::<f64>()
            + h.iter().enumerate().map(|(i, &v)| v * p.u.get(&[i, col])).sum::<f64>()
    };
    let mut hn = vec![0.0; hidden];
    let mut cn = vec![0.0; hidden];
    for j in 0..hidden {
        let (i, f, g, o) = (sigmoid(pre(0, j)), sigmoid(pre(1, j)), pre(2, j).tanh(), sigmoid(pre(3, j)));
        cn[j] = f * c[j] + i * g;
        hn[j] = o * cn[j].tanh();
    }
    (hn, cn)
}

fn unroll(kind: CellKind, p: &DirParams, input: &Tensor, order: &[usize], hidden: usize) -> Vec<Vec<f64>> {
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    let mut out = vec![Vec::new(); input.shape()[0]];
    for &t in order {
        match kind {
            CellKind::Gru => h = gru_step(p, input.row(t), &h),
            CellKind::Lstm => {
                let (hn, cn) = lstm_step(p, input.row(t), &h, &c);
                h = hn;
                c = cn;
            }
        }
        out[t] = h.clone();
    }
    out
}

fn run_birnn(kind: CellKind, input: &Tensor, fw: &DirParams, bw: &DirParams) -> Tensor {
    let mut g = Graph::new();
    let x = g.constant("x", input.clone());
    let params = RecurrentNodes {
        fw_w: g.constant("fw_w", fw.w.clone()),
        fw_u: g.constant("fw_u", fw.u.clone()),
        fw_b: g.constant("fw_b", fw.b.clone()),
        bw_w: g.constant("bw_w", bw.w.clone()),
        bw_u: g.constant("bw_u", bw.u.clone()),
        bw_b: g.constant("bw_b", bw.b.clone()),
    };
    let y = g.bidirectional_recurrent("rnn", x, kind, params).unwrap();
    g.value(y).clone()
}

fn dir_params(kind: CellKind, f: usize, h: usize, r: &mut ChaCha8Rng) -> DirParams {
    let gh = kind.gates() * h;
    DirParams {
        w: random_tensor(&[f, gh], r),
        u: random_tensor(&[h, gh], r),
        b: random_tensor(&[gh], r),
    }
}

#[test]
fn recurrent_matches_unrolled_cells() {
    for kind in [CellKind::Gru, CellKind::Lstm] {
        let mut r = rng(8);
        let (steps, f, h) = (3, 4, 5);
        let input = random_tensor(&[steps, f], &mut r);
        let fw = dir_params(kind, f, h, &mut r);
        let bw = dir_params(kind, f, h, &mut r);
        let out = run_birnn(kind, &input, &fw, &bw);
        assert_eq!(out.shape(), &[steps, 2 * h]);
        let fwd = unroll(kind, &fw, &input, &[0, 1, 2], h);
        let bwd = unroll(kind, &bw, &input, &[2, 1, 0], h);
        for t in 0..steps {
            for j in 0..h {
                assert!((out.get(&[t, j]) - fwd[t][j]).abs() < 1e-10);
                assert!((out.get(&[t, h + j]) - bwd[t][j]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn recurrent_single_step_and_reversal_symmetry() {
    let mut r = rng(9);
    let (f, h) = (3, 4);
    let p = dir_params(CellKind::Gru, f, h, &mut r);
    let same = DirParams {
        w: p.w.clone(),
        u: p.u.clone(),
        b: p.b.clone(),
    };
    let one = random_tensor(&[1, f], &mut r);
    let out = run_birnn(CellKind::Gru, &one, &p, &same);
    assert_eq!(&out.row(0)[..h], &out.row(0)[h..]);

    let q = dir_params(CellKind::Gru, f, h, &mut r);
    let seq = random_tensor(&[5, f], &mut r);
    let mut rev_data = Vec::new();
    for t in (0..5).rev() {
        rev_data.extend_from_slice(seq.row(t));
    }
    let rev = Tensor::new(&[5, f], rev_data).unwrap();
    let a = run_birnn(CellKind::Gru, &seq, &p, &q);
    let b = run_birnn(CellKind::Gru, &rev, &q, &p);
    for t in 0..5 {
        let (ra, rb) = (a.row(t), b.row(4 - t));
        assert_eq!(&ra[..h], &rb[h..]);
        assert_eq!(&ra[h..], &rb[..h]);
    }
}

#[test]
fn recurrent_rejects_empty_sequence() {
    // A zero-length tensor cannot be constructed, so the layer never sees T = 0.
    assert!(Tensor::new(&[0, 3], vec![]).is_err());
}

#[test]
fn dropout_modes() {
    let input = random_tensor(&[100], &mut rng(10));
    let mut g = Graph::new();
    let x = g.constant("x", input.clone());
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let y = g.dropout("d", x, 0.0, true, &mut r).unwrap();
    assert_eq!(g.value(y).data(), input.data());
    let y = g.dropout("d", x, 0.5, false, &mut r).unwrap();
    assert_eq!(g.value(y).data(), input.data());
    assert!(g.dropout("d", x, 1.0, true, &mut r).is_err());
}

#[test]
fn dropout_zero_fraction() {
    let mut g = Graph::new();
    let x = g.constant("x", Tensor::full(&[10_000], 1.0));
    let mut r = ChaCha8Rng::seed_from_u64(11);
    let y = g.dropout("d", x, 0.1, true, &mut r).unwrap();
    let zeros = g.value(y).data().iter().filter(|&&v| v == 0.0).count() as f64 / 10_000.0;
    assert!((zeros - 0.1).abs() <= 0.01, "zero fraction {zeros}");
    let kept = g.value(y).data().iter().find(|&&v| v != 0.0).unwrap();
    assert!((kept - 1.0 / 0.9).abs() < 1e-15);
}

#[test]
fn softmax_rows_sum_to_one() {
    let mut g = Graph::new();
    let x = g.constant("x", random_tensor(&[6, 28], &mut rng(12)));
    let y = g.activate("softmax", x, Activation::Softmax).unwrap();
    for t in 0..6 {
        let s: f64 = g.value(y).row(t).iter().sum();
        assert!((s - 1.0).abs() < 1e-10);
    }
}

#[test]
fn ctc_two_frames_uniform_enumerated() {
    // 9 sequences over {a, b, blank}; "a" is produced by aa, a-, -a
    let paths = ctc_path_enumeration(&[0.0; 6], 2, 3, 2);
    assert!((paths[&vec![0]] - 3.0 / 9.0).abs() < 1e-15);
    let out = ctc::ctc_loss(&[0.0; 6], 2, 3, 2, &[0]).unwrap();
    assert!((out.loss - 3f64.ln()).abs() < 1e-12);
}

#[test]
fn ctc_gradient_rows_sum_to_zero() {
    let logits = random_tensor(&[6, 4], &mut rng(13));
    let out = ctc::ctc_loss(logits.data(), 6, 4, 3, &[1, 0, 1]).unwrap();
    for row in out.grad.chunks(4) {
        let s: f64 = row.iter().sum(); assert!(s.abs() < 1e-12, "row sum {s}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_preserves_and_pool_halves(h in 1usize..5, w in 1usize..5, cin in 1usize..3, cout in 1usize..3, seed in 0u64..1000) {
        let (h, w) = (2 * h, 2 * w);
        let mut r = rng(seed);
        let mut g = Graph::new();
        let x = g.constant("x", random_tensor(&[h, w, cin], &mut r));
        let k = g.constant("k", random_tensor(&[3, 3, cin, cout], &mut r));
        let b = g.constant("b", random_tensor(&[cout], &mut r));
        let y = g.conv3x3("conv", x, k, b).unwrap();
        prop_assert_eq!(g.value(y).shape(), &[h, w, cout]);
        let p = g.maxpool2x2("pool", y).unwrap();
        prop_assert_eq!(g.value(p).shape(), &[h / 2, w / 2, cout]);
    }

    #[test]
    fn inference_dropout_is_bit_identical(seed in 0u64..1000, rate in 0.0f64..0.99) {
        let input = random_tensor(&[32], &mut rng(seed));
        let mut g = Graph::new();
        let x = g.constant("x", input.clone());
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let y = g.dropout("d", x, rate, false, &mut r).unwrap();
        prop_assert_eq!(g.value(y).data(), input.data());
    }
}

#[test]
fn ctc_matches_path_enumeration() {
    let (cases, worst) = common::ctc_oracle_sweep();
    assert!(cases > 300, "only {cases} cases");
    assert!(worst < 1e-8, "worst error {worst:e}");
}
