use proptest::prelude::*;
use treeconv::numerics::{
    conv1d, gradient_check, relu, GradCheckReport, softmax, ConvSpec, NumericsError, ParamId, ParamKind, ParamSet, ParamTensor,
    Tape, Tensor, Var,
};

fn vec_of(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, n)
}

/// Values bounded away from the ReLU kink so finite differences stay smooth.
fn off_kink(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0.05f64..1.5, any::<bool>()), n)
        .prop_map(|v| v.into_iter().map(|(m, neg)| if neg { -m } else { m }).collect())
}

fn insert(ps: &mut ParamSet, name: &str, shape: &[usize], data: Vec<f64>) -> ParamId {
    ps.insert(ParamTensor::new(name, ParamKind::Weight, Tensor::new(shape.to_vec(), data).unwrap()))
        .unwrap()
}

/// Scalar readout `r · flatten(x) + r0` so every output element reaches the loss.
fn readout(tape: &mut Tape<'_>, x: Var, r: ParamId, r0: ParamId) -> Result<Var, NumericsError> {
    let flat = tape.flatten(x);
    let rw = tape.param(r);
    let rb = tape.param(r0);
    tape.dense(flat, rw, rb)
}

/// Central differences carry ~1e-11 roundoff, which dominates the relative
/// error of gradients that are exactly zero.
fn agrees(report: &GradCheckReport) -> bool {
    report
        .probes
        .iter()
        .all(|p| p.rel_error < 1e-7 || (p.analytic - p.numeric).abs() < 1e-9)
}

#[derive(Debug, Clone)]
struct ConvCase {
    spec: ConvSpec,
    len: usize,
    x: Vec<f64>,
    w: Vec<f64>,
    b: Vec<f64>,
}

fn conv_case() -> impl Strategy<Value = ConvCase> {
    (1usize..4, 1usize..4, prop_oneof![Just(1usize), Just(3), Just(5)], 1usize..9).prop_flat_map(
        |(cin, cout, kernel, len)| {
            let spec = ConvSpec::new(cin, cout, kernel).unwrap();
            (
                vec_of(cin * len, -1.0, 1.0),
                vec_of(cout * cin * kernel, -1.0, 1.0),
                vec_of(cout, -0.5, 0.5),
            )
                .prop_map(move |(x, w, b)| ConvCase { spec, len, x, w, b })
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_preserves_length(c in conv_case()) {
        let x = Tensor::new(vec![c.spec.in_channels, c.len], c.x.clone()).unwrap();
        let w = Tensor::new(c.spec.weight_shape().to_vec(), c.w.clone()).unwrap();
        let b = Tensor::new(vec![c.spec.out_channels], c.b.clone()).unwrap();
        let y = conv1d(&x, &w, &b, &c.spec).unwrap();
        prop_assert_eq!(y.shape(), &[c.spec.out_channels, c.len][..]);
    }

    #[test]
    fn conv_matches_direct_sum(c in conv_case()) {
        let x = Tensor::new(vec![c.spec.in_channels, c.len], c.x.clone()).unwrap();
        let w = Tensor::new(c.spec.weight_shape().to_vec(), c.w.clone()).unwrap();
        let b = Tensor::new(vec![c.spec.out_channels], c.b.clone()).unwrap();
        let y = conv1d(&x, &w, &b, &c.spec).unwrap();
        let (cin, k, pad) = (c.spec.in_channels, c.spec.kernel_size, c.spec.kernel_size / 2);
        for j in 0..c.spec.out_channels {
            for p in 0..c.len {
                let mut s = c.b[j];
                for ch in 0..cin {
                    for m in 0..k {
                        let q = p as isize + m as isize - pad as isize;
                        if q >= 0 && (q as usize) < c.len {
                            s += c.w[(j * cin + ch) * k + m] * c.x[ch * c.len + q as usize];
                        }
                    }
                }
                prop_assert!((y.data()[j * c.len + p] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_is_a_distribution(z in prop::collection::vec(-50.0f64..50.0, 1..20)) {
        let p = softmax(&Tensor::from_vec(z)).unwrap();
        let total: f64 = p.data().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(p.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn softmax_shift_invariant(z in prop::collection::vec(-20.0f64..20.0, 1..20), c in -100.0f64..100.0) {
        let p = softmax(&Tensor::from_vec(z.clone())).unwrap();
        let q = softmax(&Tensor::from_vec(z.iter().map(|v| v + c).collect())).unwrap();
        for (a, b) in p.data().iter().zip(q.data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn relu_idempotent(v in prop::collection::vec(-5.0f64..5.0, 1..30)) {
        let t = Tensor::from_vec(v);
        let once = relu(&t);
        prop_assert_eq!(relu(&once), once.clone());
        prop_assert!(once.data().iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn conv_gradients_match_finite_differences(c in conv_case(), seed in any::<u64>()) {
        let mut ps = ParamSet::new();
        let out_len = c.spec.out_channels * c.len;
        let x = insert(&mut ps, "x", &[c.spec.in_channels, c.len], c.x.clone());
        let w = insert(&mut ps, "w", &c.spec.weight_shape(), c.w.clone());
        let b = insert(&mut ps, "b", &[c.spec.out_channels], c.b.clone());
        let readout_w: Vec<f64> = (0..out_len).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
        let r = insert(&mut ps, "r", &[1, out_len], readout_w);
        let r0 = insert(&mut ps, "r0", &[1], vec![0.0]);
        let spec = c.spec;
        let report = gradient_check(&mut ps, 20, seed, |tape: &mut Tape<'_>| {
            let (xv, wv, bv) = (tape.param(x), tape.param(w), tape.param(b));
            let y = tape.conv1d(xv, wv, bv, spec)?;
            readout(tape, y, r, r0)
        }).unwrap();
        prop_assert!(agrees(&report), "{:?}", report.worst());
    }

    #[test]
    fn relu_and_add_gradients_match_finite_differences(a in off_kink(6), b in off_kink(6), seed in any::<u64>()) {
        let mut ps = ParamSet::new();
        let av = insert(&mut ps, "a", &[2, 3], a);
        let bv = insert(&mut ps, "b", &[2, 3], b);
        let r = insert(&mut ps, "r", &[1, 6], vec![0.3, -1.1, 0.7, 0.2, -0.4, 0.9]);
        let r0 = insert(&mut ps, "r0", &[1], vec![0.1]);
        let report = gradient_check(&mut ps, 20, seed, |tape: &mut Tape<'_>| {
            let x = tape.param(av);
            let y = tape.param(bv);
            let rx = tape.relu(x);
            let s = tape.add(rx, y)?;
            readout(tape, s, r, r0)
        }).unwrap();
        prop_assert!(agrees(&report), "{:?}", report.worst());
    }

    #[test]
    fn dense_softmax_cross_entropy_gradients(
        (d, classes) in (1usize..6, 2usize..6),
        seed in any::<u64>(),
    ) {
        let mut rng_vals = (0..).map(|i: usize| (((i as u64).wrapping_mul(seed | 1) >> 7) % 200) as f64 / 100.0 - 1.0);
        let mut take = |n: usize| (&mut rng_vals).take(n).collect::<Vec<f64>>();
        let mut ps = ParamSet::new();
        let x = insert(&mut ps, "x", &[d], take(d));
        let w = insert(&mut ps, "w", &[classes, d], take(classes * d));
        let b = insert(&mut ps, "b", &[classes], take(classes));
        let target = (seed as usize) % classes;
        let report = gradient_check(&mut ps, 20, seed, |tape: &mut Tape<'_>| {
            let (xv, wv, bv) = (tape.param(x), tape.param(w), tape.param(b));
            let logits = tape.dense(xv, wv, bv)?;
            let p = tape.softmax(logits)?;
            tape.cross_entropy(p, target)
        }).unwrap();
        prop_assert!(agrees(&report), "{:?}", report.worst());
    }

    #[test]
    fn sum_squares_and_scale_gradients(v in vec_of(5, -2.0, 2.0), factor in -3.0f64..3.0, seed in any::<u64>()) {
        let mut ps = ParamSet::new();
        let x = insert(&mut ps, "x", &[5], v.clone());
        let grads = {
            let mut tape = Tape::new(&ps);
            let xv = tape.param(x);
            let s = tape.sum_squares(xv);
            let l = tape.scale(s, factor);
            tape.backward(l).unwrap()
        };
        for (g, xv) in grads.get(x).unwrap().data().iter().zip(&v) {
            prop_assert!((g - 2.0 * factor * xv).abs() < 1e-12);
        }
        let report = gradient_check(&mut ps, 5, seed, |tape: &mut Tape<'_>| {
            let xv = tape.param(x);
            let s = tape.sum_squares(xv);
            Ok(tape.scale(s, factor))
        }).unwrap();
        prop_assert!(agrees(&report));
    }

    /// Scaling the loss by `c` scales every gradient by `c`; summing two
    /// losses sums their gradients.
    #[test]
    fn backward_is_linear(c in conv_case(), factor in -3.0f64..3.0) {
        let mut ps = ParamSet::new();
        let out_len = c.spec.out_channels * c.len;
        let x = insert(&mut ps, "x", &[c.spec.in_channels, c.len], c.x.clone());
        let w = insert(&mut ps, "w", &c.spec.weight_shape(), c.w.clone());
        let b = insert(&mut ps, "b", &[c.spec.out_channels], c.b.clone());
        let r = insert(&mut ps, "r", &[1, out_len], (0..out_len).map(|i| 0.1 * i as f64 - 0.3).collect());
        let r0 = insert(&mut ps, "r0", &[1], vec![0.0]);
        let spec = c.spec;
        let grads_of = |mode: u8| {
            let mut tape = Tape::new(&ps);
            let (xv, wv, bv) = (tape.param(x), tape.param(w), tape.param(b));
            let y = tape.conv1d(xv, wv, bv, spec).unwrap();
            let l1 = readout(&mut tape, y, r, r0).unwrap();
            let sq = tape.sum_squares(y);
            let sq = tape.flatten(sq);
            let loss = match mode {
                0 => l1,
                1 => tape.scale(l1, factor),
                2 => sq,
                _ => tape.add(l1, sq).unwrap(),
            };
            let g = tape.backward(loss).unwrap();
            [x, w, b].map(|id| g.get(id).unwrap().clone())
        };
        let (base, scaled, other, both) = (grads_of(0), grads_of(1), grads_of(2), grads_of(3));
        for i in 0..3 {
            for j in 0..base[i].len() {
                let (g, s) = (base[i].data()[j], scaled[i].data()[j]);
                prop_assert!((s - factor * g).abs() <= 1e-12 * (1.0 + g.abs()));
                let sum = g + other[i].data()[j];
                prop_assert!((both[i].data()[j] - sum).abs() <= 1e-12 * (1.0 + sum.abs()));
            }
        }
    }
}
