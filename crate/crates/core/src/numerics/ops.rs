//! Forward kernels and their hand-written adjoints.
//!
//! The tape in [`super::tape`] calls these; they are also usable directly for
//! gradient-free inference and tests.

use super::{NumericsError, Tensor};

/// Probability floor applied before the logarithm in [`cross_entropy`].
pub const PROB_CLIP: f64 = 1e-12;

/// Stride-1, zero-padded 1D convolution geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
}

impl ConvSpec {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
    ) -> Result<Self, NumericsError> {
        if in_channels == 0 || out_channels == 0 || kernel_size == 0 {
            return Err(NumericsError::InvalidConv(
                "channel counts and kernel size must be positive".into(),
            ));
        }
        if kernel_size.is_multiple_of(2) {
            return Err(NumericsError::InvalidConv(format!(
                "kernel size {kernel_size} is even; length-preserving padding needs an odd kernel"
            )));
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel_size,
        })
    }

    pub fn padding(&self) -> usize {
        (self.kernel_size - 1) / 2
    }

    pub fn weight_shape(&self) -> [usize; 3] {
        [self.out_channels, self.in_channels, self.kernel_size]
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel_size
    }
}

fn expect_dim(
    op: &'static str,
    dim: &'static str,
    expected: usize,
    found: usize,
) -> Result<(), NumericsError> {
    if expected == found {
        Ok(())
    } else {
        Err(NumericsError::ShapeMismatch {
            op,
            dim,
            expected,
            found,
        })
    }
}

fn expect_rank(op: &'static str, t: &Tensor, rank: usize) -> Result<(), NumericsError> {
    expect_dim(op, "rank", rank, t.rank())
}

fn check_conv(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    spec: &ConvSpec,
) -> Result<usize, NumericsError> {
    expect_rank("conv1d", input, 2)?;
    expect_rank("conv1d", weights, 3)?;
    expect_rank("conv1d", bias, 1)?;
    expect_dim("conv1d", "input channels", spec.in_channels, input.shape()[0])?;
    expect_dim("conv1d", "weight out channels", spec.out_channels, weights.shape()[0])?;
    expect_dim("conv1d", "weight in channels", spec.in_channels, weights.shape()[1])?;
    expect_dim("conv1d", "kernel size", spec.kernel_size, weights.shape()[2])?;
    expect_dim("conv1d", "bias length", spec.out_channels, bias.shape()[0])?;
    let len = input.shape()[1];
    if len == 0 {
        return Err(NumericsError::ShapeMismatch {
            op: "conv1d",
            dim: "input length",
            expected: 1,
            found: 0,
        });
    }
    Ok(len)
}

/// Valid output positions `p` for kernel tap `m`: those where
/// `p + m - pad` falls inside `0..len`. Empty when `lo >= hi`.
#[inline]
fn tap_range(m: usize, pad: usize, len: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(m);
    let hi = (len + pad).saturating_sub(m).min(len);
    (lo, hi)
}

/// Pre-activation convolution: `out[j][p] = b[j] + Σ_{c,m} w[j][c][m] · x[c][p+m-pad]`.
pub fn conv1d(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    spec: &ConvSpec,
) -> Result<Tensor, NumericsError> {
    let len = check_conv(input, weights, bias, spec)?;
    let pad = spec.padding();
    let kernel = spec.kernel_size;
    let x = input.data();
    let w = weights.data();
    let mut out = Tensor::zeros(&[spec.out_channels, len]);
    let o = out.data_mut();
    for j in 0..spec.out_channels {
        let row = &mut o[j * len..(j + 1) * len];
        row.fill(bias.data()[j]);
        for c in 0..spec.in_channels {
            let xr = &x[c * len..(c + 1) * len];
            let wr = &w[(j * spec.in_channels + c) * kernel..][..kernel];
            for (m, &wv) in wr.iter().enumerate() {
                if wv == 0.0 {
                    continue;
                }
                let (lo, hi) = tap_range(m, pad, len);
                if hi <= lo {
                    continue;
                }
                let shift = lo + m - pad;
                for (dst, src) in row[lo..hi].iter_mut().zip(&xr[shift..shift + (hi - lo)]) {
                    *dst += wv * src;
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`conv1d`]: returns `(d input, d weights, d bias)`.
pub(crate) fn conv1d_backward(
    input: &Tensor,
    weights: &Tensor,
    spec: &ConvSpec,
    grad_out: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let len = input.shape()[1];
    let pad = spec.padding();
    let kernel = spec.kernel_size;
    let x = input.data();
    let w = weights.data();
    let g = grad_out.data();
    let mut gx = Tensor::zeros(input.shape());
    let mut gw = Tensor::zeros(weights.shape());
    let mut gb = Tensor::zeros(&[spec.out_channels]);
    {
        let gxd = gx.data_mut();
        let gwd = gw.data_mut();
        let gbd = gb.data_mut();
        for j in 0..spec.out_channels {
            let gr = &g[j * len..(j + 1) * len];
            gbd[j] = gr.iter().sum();
            for c in 0..spec.in_channels {
                let xr = &x[c * len..(c + 1) * len];
                let base = (j * spec.in_channels + c) * kernel;
                for m in 0..kernel {
                    let (lo, hi) = tap_range(m, pad, len);
                    if hi <= lo {
                        continue;
                    }
                    let shift = lo + m - pad;
                    let n = hi - lo;
                    let gslice = &gr[lo..hi];
                    let mut acc = 0.0;
                    for (gv, xv) in gslice.iter().zip(&xr[shift..shift + n]) {
                        acc += gv * xv;
                    }
                    gwd[base + m] += acc;
                    let wv = w[base + m];
                    if wv != 0.0 {
                        let gxr = &mut gxd[c * len + shift..c * len + shift + n];
                        for (dst, gv) in gxr.iter_mut().zip(gslice) {
                            *dst += wv * gv;
                        }
                    }
                }
            }
        }
    }
    (gx, gw, gb)
}

pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// The derivative at exactly zero is taken as 0.
pub(crate) fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut g = grad_out.clone();
    for (gv, x) in g.data_mut().iter_mut().zip(input.data()) {
        if *x <= 0.0 {
            *gv = 0.0;
        }
    }
    g
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    if a.shape() != b.shape() {
        return Err(NumericsError::ShapesDiffer {
            op: "add",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let mut out = a.clone();
    for (o, v) in out.data_mut().iter_mut().zip(b.data()) {
        *o += v;
    }
    Ok(out)
}

pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor, NumericsError> {
    expect_rank("dense", input, 1)?;
    expect_rank("dense", weights, 2)?;
    expect_rank("dense", bias, 1)?;
    let (k, d) = (weights.shape()[0], weights.shape()[1]);
    expect_dim("dense", "input length", d, input.len())?;
    expect_dim("dense", "bias length", k, bias.len())?;
    let x = input.data();
    let out: Vec<f64> = weights
        .data()
        .chunks_exact(d)
        .zip(bias.data())
        .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
        .collect();
    Ok(Tensor::from_vec(out))
}

/// Adjoint of [`dense`]: returns `(d input, d weights, d bias)`.
pub(crate) fn dense_backward(
    input: &Tensor,
    weights: &Tensor,
    grad_out: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let d = weights.shape()[1];
    let x = input.data();
    let mut gx = vec![0.0; d];
    let mut gw = Tensor::zeros(weights.shape());
    for ((row, grow), &g) in weights
        .data()
        .chunks_exact(d)
        .zip(gw.data_mut().chunks_exact_mut(d))
        .zip(grad_out.data())
    {
        if g == 0.0 {
            continue;
        }
        for i in 0..d {
            grow[i] = g * x[i];
            gx[i] += g * row[i];
        }
    }
    (Tensor::from_vec(gx), gw, grad_out.clone())
}

/// Max-shifted softmax over a flat vector.
pub fn softmax(logits: &Tensor) -> Result<Tensor, NumericsError> {
    expect_rank("softmax", logits, 1)?;
    if logits.is_empty() {
        return Err(NumericsError::ShapeMismatch {
            op: "softmax",
            dim: "length",
            expected: 1,
            found: 0,
        });
    }
    let max = logits.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.data().iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(Tensor::from_vec(exps.into_iter().map(|e| e / total).collect()))
}

/// Vector-Jacobian product of softmax given its output `probs`.
pub(crate) fn softmax_backward(probs: &Tensor, grad_out: &Tensor) -> Tensor {
    let dot: f64 = probs.data().iter().zip(grad_out.data()).map(|(p, g)| p * g).sum();
    Tensor::from_vec(
        probs
            .data()
            .iter()
            .zip(grad_out.data())
            .map(|(p, g)| p * (g - dot))
            .collect(),
    )
}

/// `-ln(max(probs[target], PROB_CLIP))`.
pub fn cross_entropy(probs: &Tensor, target: usize) -> Result<f64, NumericsError> {
    expect_rank("cross_entropy", probs, 1)?;
    if target >= probs.len() {
        return Err(NumericsError::InvalidTarget {
            index: target,
            classes: probs.len(),
        });
    }
    Ok(-probs.data()[target].max(PROB_CLIP).ln())
}

pub(crate) fn cross_entropy_backward(probs: &Tensor, target: usize, grad_out: f64) -> Tensor {
    let mut g = Tensor::zeros(probs.shape());
    let p = probs.data()[target];
    // Below the clip the loss is constant in p.
    if p > PROB_CLIP {
        g.data_mut()[target] = -grad_out / p;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn conv_zero_weights_give_zero_output() {
        let spec = ConvSpec::new(2, 3, 3).unwrap();
        let x = t(&[2, 4], &[1.0, -2.0, 3.0, 0.5, 4.0, 1.0, -1.0, 2.0]);
        let out = conv1d(&x, &Tensor::zeros(&[3, 2, 3]), &Tensor::zeros(&[3]), &spec).unwrap();
        assert_eq!(out, Tensor::zeros(&[3, 4]));
    }

    #[test]
    fn conv_box_filter_by_hand() {
        let spec = ConvSpec::new(1, 1, 3).unwrap();
        let x = t(&[1, 5], &[0.0, 1.0, 0.0, 0.0, 0.0]);
        let w = t(&[1, 1, 3], &[1.0, 1.0, 1.0]);
        let out = conv1d(&x, &w, &Tensor::zeros(&[1]), &spec).unwrap();
        assert_eq!(out.data(), &[1.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn conv_is_cross_correlation() {
        // Asymmetric kernel pins the tap orientation: out[p] = Σ w[m] x[p+m-1].
        let spec = ConvSpec::new(1, 1, 3).unwrap();
        let x = t(&[1, 4], &[1.0, 2.0, 3.0, 4.0]);
        let w = t(&[1, 1, 3], &[1.0, 10.0, 100.0]);
        let out = conv1d(&x, &w, &t(&[1], &[0.5]), &spec).unwrap();
        assert_eq!(out.data(), &[210.5, 321.5, 432.5, 43.5]);
    }

    #[test]
    fn conv_one_hot_shape() {
        let spec = ConvSpec::new(1, 16, 3).unwrap();
        let mut x = Tensor::zeros(&[1, 37]);
        x.data_mut()[5] = 1.0;
        let out = conv1d(&x, &Tensor::zeros(&[16, 1, 3]), &Tensor::zeros(&[16]), &spec).unwrap();
        assert_eq!(out.shape(), &[16, 37]);
    }

    #[test]
    fn conv_length_one() {
        let spec = ConvSpec::new(1, 1, 5).unwrap();
        let w = t(&[1, 1, 5], &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let out = conv1d(&t(&[1, 1], &[2.0]), &w, &Tensor::zeros(&[1]), &spec).unwrap();
        assert_eq!(out.data(), &[6.0]);
    }

    #[test]
    fn conv_reports_offending_dimension() {
        let spec = ConvSpec::new(2, 1, 3).unwrap();
        let err = conv1d(
            &Tensor::zeros(&[3, 5]),
            &Tensor::zeros(&[1, 2, 3]),
            &Tensor::zeros(&[1]),
            &spec,
        )
        .unwrap_err();
        assert!(err.to_string().contains("input channels"), "{err}");
    }

    #[test]
    fn even_kernel_rejected() {
        assert!(ConvSpec::new(1, 1, 4).is_err());
    }

    #[test]
    fn relu_cases() {
        assert_eq!(relu(&t(&[3], &[-1.0, 0.0, 2.0])).data(), &[0.0, 0.0, 2.0]);
        assert_eq!(relu(&t(&[2], &[-1.0, -3.0])).data(), &[0.0, 0.0]);
        let pos = t(&[3], &[0.0, 1.0, 7.5]);
        assert_eq!(relu(&pos), pos);
    }

    #[test]
    fn add_cases() {
        let a = t(&[2], &[1.0, 2.0]);
        assert_eq!(add(&a, &Tensor::zeros(&[2])).unwrap(), a);
        assert_eq!(add(&a, &t(&[2], &[3.0, 4.0])).unwrap().data(), &[4.0, 6.0]);
        assert_eq!(add(&a, &t(&[2], &[-1.0, -2.0])).unwrap(), Tensor::zeros(&[2]));
        assert!(add(&a, &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn dense_cases() {
        let x = t(&[2], &[2.0, 3.0]);
        let eye = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(dense(&x, &eye, &Tensor::zeros(&[2])).unwrap(), x);
        let b = t(&[2], &[0.25, -4.0]);
        assert_eq!(dense(&x, &Tensor::zeros(&[2, 2]), &b).unwrap(), b);
        let w = t(&[2, 2], &[1.0, 1.0, 1.0, -1.0]);
        assert_eq!(dense(&x, &w, &Tensor::zeros(&[2])).unwrap().data(), &[5.0, -1.0]);
        assert!(dense(&t(&[3], &[0.0; 3]), &w, &Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn softmax_cases() {
        assert_eq!(softmax(&Tensor::zeros(&[2])).unwrap().data(), &[0.5, 0.5]);
        let p = softmax(&Tensor::zeros(&[15])).unwrap();
        for v in p.data() {
            assert_relative_eq!(*v, 1.0 / 15.0, epsilon = 1e-15);
        }
        let logits = t(&[3], &[0.3, -1.2, 2.0]);
        let shifted = t(&[3], &[100.3, 98.8, 102.0]);
        let (a, b) = (softmax(&logits).unwrap(), softmax(&shifted).unwrap());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let p = softmax(&t(&[2], &[1e300, 0.0])).unwrap();
        assert_eq!(p.data(), &[1.0, 0.0]);
    }

    #[test]
    fn cross_entropy_cases() {
        assert_eq!(cross_entropy(&t(&[2], &[0.0, 1.0]), 1).unwrap(), 0.0);
        assert_relative_eq!(
            cross_entropy(&t(&[2], &[0.5, 0.5]), 0).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-12
        );
        let uniform = softmax(&Tensor::zeros(&[15])).unwrap();
        assert_relative_eq!(cross_entropy(&uniform, 3).unwrap(), 2.70805, epsilon = 1e-5);
        assert!(matches!(
            cross_entropy(&uniform, 15),
            Err(NumericsError::InvalidTarget { index: 15, classes: 15 })
        ));
    }

    #[test]
    fn cross_entropy_clips_zero_probability() {
        let loss = cross_entropy(&t(&[2], &[1.0, 0.0]), 1).unwrap();
        assert_relative_eq!(loss, -(1e-12f64).ln());
    }
}
