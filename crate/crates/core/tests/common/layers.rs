//! One finite-difference case per layer kind.

use hwcheck::engine::{Activation, CellKind, Graph, NodeId, RecurrentNodes, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{gradient_check, random_tensor, random_weights, rng};

pub const COORDS: usize = 100;

fn project(g: &mut Graph, out: NodeId, seed: u64) -> NodeId {
    let n = g.value(out).len();
    g.weighted_sum("projection", out, random_weights(n, seed)).unwrap()
}

fn recurrent_leaves(kind: CellKind, features: usize, hidden: usize, seed: u64) -> Vec<Tensor> {
    let mut r = rng(seed);
    let gh = kind.gates() * hidden;
    vec![
        random_tensor(&[4, features], &mut r),
        random_tensor(&[features, gh], &mut r),
        random_tensor(&[hidden, gh], &mut r),
        random_tensor(&[gh], &mut r),
        random_tensor(&[features, gh], &mut r),
        random_tensor(&[hidden, gh], &mut r),
        random_tensor(&[gh], &mut r),
    ]
}

fn recurrent_case(kind: CellKind, seed: u64) -> f64 {
    let leaves = recurrent_leaves(kind, 3, 4, seed);
    gradient_check(
        &leaves,
        |g, ids| {
            let params = RecurrentNodes {
                fw_w: ids[1],
                fw_u: ids[2],
                fw_b: ids[3],
                bw_w: ids[4],
                bw_u: ids[5],
                bw_b: ids[6],
            };
            let out = g.bidirectional_recurrent("rnn", ids[0], kind, params).unwrap();
            project(g, out, seed + 1)
        },
        COORDS,
        seed + 2,
    )
}

/// Worst relative error for every layer kind, in a fixed order.
pub fn all_layer_kinds() -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();
    let mut r = rng(7);

    let leaves = vec![random_tensor(&[6, 5, 2], &mut r), random_tensor(&[3, 3, 2, 3], &mut r), random_tensor(&[3], &mut r)];
    out.push((
        "conv3x3_same",
        gradient_check(
            &leaves,
            |g, ids| {
                let y = g.conv3x3("conv", ids[0], ids[1], ids[2]).unwrap();
                project(g, y, 11)
            },
            COORDS,
            12,
        ),
    ));

    let leaves = vec![random_tensor(&[6, 4, 3], &mut r)];
    out.push((
        "maxpool2x2",
        gradient_check(
            &leaves,
            |g, ids| {
                let y = g.maxpool2x2("pool", ids[0]).unwrap();
                project(g, y, 13)
            },
            COORDS,
            14,
        ),
    ));

    let leaves = vec![random_tensor(&[5], &mut r), random_tensor(&[5, 3], &mut r), random_tensor(&[3], &mut r)];
    out.push((
        "dense",
        gradient_check(
            &leaves,
            |g, ids| {
                let y = g.dense("dense", ids[0], ids[1], ids[2]).unwrap();
                project(g, y, 15)
            },
            COORDS,
            16,
        ),
    ));

    let leaves = vec![random_tensor(&[4, 5], &mut r), random_tensor(&[5, 3], &mut r), random_tensor(&[3], &mut r)];
    out.push((
        "time_distributed_dense",
        gradient_check(
            &leaves,
            |g, ids| {
                let y = g.time_distributed_dense("td", ids[0], ids[1], ids[2]).unwrap();
                project(g, y, 17)
            },
            COORDS,
            18,
        ),
    ));

    out.push(("bidirectional_recurrent(gru)", recurrent_case(CellKind::Gru, 19)));
    out.push(("bidirectional_recurrent(lstm)", recurrent_case(CellKind::Lstm, 23)));

    let leaves = vec![random_tensor(&[40], &mut r)];
    out.push((
        "dropout",
        gradient_check(
            &leaves,
            |g, ids| {
                let mut mask_rng = ChaCha8Rng::seed_from_u64(99);
                let y = g.dropout("dropout", ids[0], 0.3, true, &mut mask_rng).unwrap();
                project(g, y, 27)
            },
            COORDS,
            28,
        ),
    ));

    for (name, act) in [
        ("activation(relu)", Activation::Relu),
        ("activation(tanh)", Activation::Tanh),
        ("activation(sigmoid)", Activation::Sigmoid),
        ("activation(softmax)", Activation::Softmax),
    ] {
        let leaves = vec![random_tensor(&[3, 6], &mut r)];
        out.push((
            name,
            gradient_check(
                &leaves,
                |g, ids| {
                    let y = g.activate("act", ids[0], act).unwrap();
                    project(g, y, 29)
                },
                COORDS,
                30,
            ),
        ));
    }

    let leaves = vec![random_tensor(&[4, 3, 2], &mut r)];
    out.push((
        "map_to_sequence",
        gradient_check(
            &leaves,
            |g, ids| {
                let y = g.map_to_sequence("seq", ids[0]).unwrap();
                project(g, y, 31)
            },
            COORDS,
            32,
        ),
    ));

    let leaves = vec![random_tensor(&[4, 2], &mut r), random_tensor(&[4, 4], &mut r)];
    out.push((
        "pad_and_stack",
        gradient_check(
            &leaves,
            |g, ids| {
                let p = g.pad_columns("pad", ids[0], 1, 1).unwrap();
                let s = g.stack_channels("stack", ids[1], p).unwrap();
                let f = g.flatten("flat", s).unwrap();
                project(g, f, 33)
            },
            COORDS,
            34,
        ),
    ));

    let leaves = vec![random_tensor(&[7, 4], &mut r)];
    out.push((
        "ctc_loss",
        gradient_check(&leaves, |g, ids| g.ctc_loss("ctc", ids[0], &[0, 2, 2], 3).unwrap(), COORDS, 35),
    ));

    for (i, label) in [0.0, 1.0].into_iter().enumerate() {
        let leaves = vec![Tensor::new(&[1], vec![0.2 + 0.5 * i as f64]).unwrap()];
        out.push((
            if label == 0.0 { "bce_loss(y=0)" } else { "bce_loss(y=1)" },
            gradient_check(&leaves, |g, ids| g.bce_loss("bce", ids[0], label).unwrap(), COORDS, 36),
        ));
    }
    out
}
