use rand::Rng;
use treeconv::model::{
    self, basic_module, init_params, joint_loss_graph, ConvParams, LayerParams, ModelError, ModelParams,
};
use treeconv::numerics::{gradient_check, ParamKind, Tape, Tensor};
use treeconv::training::{joint_loss, l2_norm_sq};
use treeconv::{seed, LabelPair, SampleWindow};

type Map = Vec<Vec<f64>>;

/// Zero-padded "same" cross-correlation written from scratch.
fn naive_conv(model: &ModelParams, p: &ConvParams, x: &Map) -> Map {
    let w = model.params.get(p.weight).value.data();
    let b = model.params.get(p.bias).value.data();
    let (cin, cout, k) = (p.spec.in_channels, p.spec.out_channels, p.spec.kernel_size);
    assert_eq!(x.len(), cin);
    let len = x[0].len();
    let mut out = vec![vec![0.0; len]; cout];
    for (j, row) in out.iter_mut().enumerate() {
        for (pos, v) in row.iter_mut().enumerate() {
            let mut s = b[j];
            for (c, xc) in x.iter().enumerate() {
                for m in 0..k {
                    let q = pos as isize + m as isize - (k / 2) as isize;
                    if (0..len as isize).contains(&q) {
                        s += w[(j * cin + c) * k + m] * xc[q as usize];
                    }
                }
            }
            *v = s;
        }
    }
    out
}

fn naive_relu(x: Map) -> Map {
    x.into_iter().map(|r| r.into_iter().map(|v| v.max(0.0)).collect()).collect()
}

fn naive_add(a: &Map, b: &Map) -> Map {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + y).collect())
        .collect()
}

fn naive_module(model: &ModelParams, layer: &LayerParams, feature: &Map, event: &Map) -> Map {
    let h = naive_add(
        &naive_relu(naive_conv(model, &layer.event, event)),
        &naive_relu(naive_conv(model, &layer.feature, feature)),
    );
    let r = naive_relu(naive_conv(model, &layer.residual[0], &h));
    let r = naive_relu(naive_conv(model, &layer.residual[1], &r));
    let r = naive_conv(model, &layer.residual[2], &r);
    naive_relu(naive_add(&h, &r))
}

fn naive_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn naive_head(model: &ModelParams, head: model::DenseParams, flat: &[f64]) -> Vec<f64> {
    let w = &model.params.get(head.weight).value;
    let b = model.params.get(head.bias).value.data();
    let logits: Vec<f64> = w
        .data()
        .chunks(flat.len())
        .zip(b)
        .map(|(row, bias)| bias + row.iter().zip(flat).map(|(a, x)| a * x).sum::<f64>())
        .collect();
    naive_softmax(&logits)
}

fn row(t: &Tensor) -> Map {
    vec![t.data().to_vec()]
}

fn randomize_biases(model: &mut ModelParams, seed_value: u64) {
    let mut rng = seed::rng(seed_value, 77);
    for p in model.params.iter_mut() {
        if p.kind == ParamKind::Bias {
            p.value.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
        }
    }
}

fn window(sensors: &[usize], k: usize, label: LabelPair) -> SampleWindow {
    SampleWindow::from_sensors(sensors, k, 37, label)
}

#[test]
fn forward_matches_naive_reimplementation() {
    for k in [2, 4, 8] {
        let mut m = init_params(k, 37, 11).unwrap();
        randomize_biases(&mut m, 5);
        let w = window(&[3, 9, 9, 0, 36, 12, 5, 20, 7][..k], k, LabelPair::new(1, 4));

        let mut feature = row(&w.embeddings[k - 1]);
        let trace = model::tree_trace(&m, &w).unwrap();
        for (i, layer) in m.layers().iter().enumerate() {
            feature = naive_module(&m, layer, &feature, &row(&w.embeddings[k - 2 - i]));
            let got = &trace[i];
            assert_eq!(got.shape(), &[feature.len(), 37]);
            for (a, b) in got.data().iter().zip(feature.iter().flatten()) {
                assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()), "layer {i}: {a} vs {b}");
            }
        }

        let flat: Vec<f64> = feature.into_iter().flatten().collect();
        assert_eq!(flat.len(), m.head_input_len());
        let pred = model::predict(&m, &w).unwrap();
        for (got, want) in [
            (&pred.resident_probs, naive_head(&m, m.resident_head(), &flat)),
            (&pred.activity_probs, naive_head(&m, m.activity_head(), &flat)),
        ] {
            for (a, b) in got.data().iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn zero_residual_branch_reduces_to_h() {
    let mut m = init_params(3, 37, 2).unwrap();
    randomize_biases(&mut m, 1);
    let layer = m.layers()[1].clone();
    let last = layer.residual[2];
    m.params.get_mut(last.weight).value.fill(0.0);
    m.params.get_mut(last.bias).value.fill(0.0);

    let w = window(&[4, 17, 30], 3, LabelPair::new(0, 0));
    let trace = model::tree_trace(&m, &w).unwrap();
    let h = naive_add(
        &naive_relu(naive_conv(&m, &layer.event, &row(&w.embeddings[0]))),
        &naive_relu(naive_conv(
            &m,
            &layer.feature,
            &trace[0].data().chunks(37).map(<[f64]>::to_vec).collect(),
        )),
    );
    // h is already nonnegative, so relu(h + 0) = h.
    for (a, b) in trace[1].data().iter().zip(h.iter().flatten()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn basic_module_output_is_nonnegative_with_expected_shape() {
    let m = init_params(8, 37, 3).unwrap();
    let w = window(&[1, 2, 3, 4, 5, 6, 7, 8], 8, LabelPair::new(0, 1));
    let mut tape = Tape::new(&m.params);
    let f = tape.input(w.embeddings[7].clone());
    let e = tape.input(w.embeddings[6].clone());
    let out = basic_module(&mut tape, f, e, &m.layers()[0]).unwrap();
    assert_eq!(tape.value(out).shape(), &[16, 37]);
    assert!(tape.value(out).data().iter().all(|v| *v >= 0.0));
}

#[test]
fn uniform_heads_give_log_class_counts() {
    let m = ModelParams::zeros(8, 37).unwrap();
    let w = window(&[5], 8, LabelPair::new(1, 14));
    let pred = model::predict(&m, &w).unwrap();
    let loss = joint_loss(&pred, w.label, &m.params, 0.0004).unwrap();
    let expected = 2f64.ln() + 15f64.ln();
    assert!((loss - expected).abs() < 1e-12);
    assert!((expected - 3.401197381662155).abs() < 1e-12);
}

#[test]
fn l2_gradient_is_two_beta_w() {
    let beta = 0.0004;
    let mut m = init_params(3, 37, 4).unwrap();
    randomize_biases(&mut m, 2);
    let w = window(&[1, 2, 3], 3, LabelPair::new(0, 3));
    let (with, without) = {
        let grads = |b: f64| {
            let mut tape = Tape::new(&m.params);
            let l = joint_loss_graph(&mut tape, &m, &w, b).unwrap();
            tape.backward(l).unwrap()
        };
        (grads(beta), grads(0.0))
    };
    for (i, p) in m.params.iter().enumerate() {
        let id = treeconv::numerics::ParamId(i);
        let zero = Tensor::zeros(p.value.shape());
        let a = with.get(id).unwrap_or(&zero);
        let b = without.get(id).unwrap_or(&zero);
        for ((ga, gb), v) in a.data().iter().zip(b.data()).zip(p.value.data()) {
            let expected = match p.kind {
                ParamKind::Weight => 2.0 * beta * v,
                ParamKind::Bias => 0.0,
            };
            assert!((ga - gb - expected).abs() < 1e-14, "{}", p.name);
        }
    }
    let pred = model::predict(&m, &w).unwrap();
    let total = joint_loss(&pred, w.label, &m.params, beta).unwrap();
    let ce = joint_loss(&pred, w.label, &m.params, 0.0).unwrap();
    assert!((total - ce - beta * l2_norm_sq(&m.params)).abs() < 1e-14);
}

#[test]
fn small_network_gradient_check() {
    let mut m = init_params(4, 37, 9).unwrap();
    randomize_biases(&mut m, 9);
    let frozen = m.clone();
    let w = window(&[10, 11, 30, 2], 4, LabelPair::new(1, 6));
    let report = gradient_check(&mut m.params, 60, 1, |tape: &mut Tape<'_>| {
        joint_loss_graph(tape, &frozen, &w, 0.0004).map_err(|e| match e {
            ModelError::Numerics(n) => n,
            other => panic!("{other}"),
        })
    })
    .unwrap();
    assert!(report.max_rel_error < 1e-5, "{:?}", report.worst());
    assert_eq!(m.params, frozen.params);
}

#[test]
fn padded_slots_are_zero_inputs() {
    let m = init_params(8, 37, 1).unwrap();
    let short = window(&[6, 2], 8, LabelPair::new(0, 0));
    assert_eq!(short.pad_count, 6);
    let explicit = SampleWindow {
        embeddings: {
            let mut e = vec![Tensor::zeros(&[1, 37]); 6];
            e.extend(short.embeddings[6..].iter().cloned());
            e
        },
        label: short.label,
        pad_count: 6,
    };
    assert_eq!(model::predict(&m, &short).unwrap(), model::predict(&m, &explicit).unwrap());
}
