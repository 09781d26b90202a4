//! Forward and backward passes of every layer type, as plain functions over
//! tensors. Inputs are single examples: images are `[channels, rows, cols]`,
//! vectors are one-dimensional.

use rand::Rng;

use super::tensor::{axpy, dot, matmul, MatView, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
    pub kernel_rows: usize,
    pub kernel_cols: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_rows: usize,
    pub out_cols: usize,
}

impl ConvGeometry {
    pub fn new(
        input: &[usize],
        kernel_rows: usize,
        kernel_cols: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let &[channels, rows, cols] = input else {
            return Err(Error::shape(format!(
                "conv input must be [C, H, W], got {input:?}"
            )));
        };
        if stride == 0 {
            return Err(Error::invalid("conv stride must be positive"));
        }
        let out = |size: usize, k: usize| -> Result<usize> {
            let padded = size + 2 * padding;
            if k == 0 || padded < k {
                return Err(Error::shape(format!(
                    "kernel {k} larger than padded input {padded}"
                )));
            }
            Ok((padded - k) / stride + 1)
        };
        Ok(ConvGeometry {
            channels,
            rows,
            cols,
            kernel_rows,
            kernel_cols,
            stride,
            padding,
            out_rows: out(rows, kernel_rows)?,
            out_cols: out(cols, kernel_cols)?,
        })
    }

    fn patch_len(&self) -> usize {
        self.channels * self.kernel_rows * self.kernel_cols
    }

    fn positions(&self) -> usize {
        self.out_rows * self.out_cols
    }

    /// Input offset read by patch element `(c, i, j)` at output `(oy, ox)`, if inside the image.
    #[inline]
    fn source(&self, c: usize, i: usize, j: usize, oy: usize, ox: usize) -> Option<usize> {
        let y = (oy * self.stride + i).checked_sub(self.padding)?;
        let x = (ox * self.stride + j).checked_sub(self.padding)?;
        (y < self.rows && x < self.cols).then(|| (c * self.rows + y) * self.cols + x)
    }
}

/// Unfold input patches into a `[C*kh*kw, H'*W']` matrix.
fn im2col<T: Real>(input: &[T], g: &ConvGeometry) -> Vec<T> {
    let positions = g.positions();
    let mut cols = vec![T::ZERO; g.patch_len() * positions];
    let mut row = 0;
    for c in 0..g.channels {
        for i in 0..g.kernel_rows {
            for j in 0..g.kernel_cols {
                let dst = &mut cols[row * positions..(row + 1) * positions];
                for oy in 0..g.out_rows {
                    for ox in 0..g.out_cols {
                        if let Some(src) = g.source(c, i, j, oy, ox) {
                            dst[oy * g.out_cols + ox] = input[src];
                        }
                    }
                }
                row += 1;
            }
        }
    }
    cols
}

/// Inverse scatter of [`im2col`], summing overlapping contributions.
fn col2im<T: Real>(cols: &[T], g: &ConvGeometry) -> Vec<T> {
    let positions = g.positions();
    let mut out = vec![T::ZERO; g.channels * g.rows * g.cols];
    let mut row = 0;
    for c in 0..g.channels {
        for i in 0..g.kernel_rows {
            for j in 0..g.kernel_cols {
                let src = &cols[row * positions..(row + 1) * positions];
                for oy in 0..g.out_rows {
                    for ox in 0..g.out_cols {
                        if let Some(dst) = g.source(c, i, j, oy, ox) {
                            out[dst] += src[oy * g.out_cols + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
    out
}

fn conv_geometry<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<(ConvGeometry, usize)> {
    let &[out_ch, in_ch, kh, kw] = weights.shape() else {
        return Err(Error::shape(format!(
            "conv weights must be [O, C, kh, kw], got {:?}",
            weights.shape()
        )));
    };
    let g = ConvGeometry::new(input.shape(), kh, kw, stride, padding)?;
    if g.channels != in_ch {
        return Err(Error::shape(format!(
            "conv expects {in_ch} input channels, got {}",
            g.channels
        )));
    }
    Ok((g, out_ch))
}

/// Cross-correlation with zero padding.
pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let (g, out_ch) = conv_geometry(input, weights, stride, padding)?;
    bias.expect_shape("conv bias", &[out_ch])?;
    let cols = im2col(input.data(), &g);
    let positions = g.positions();
    let mut out = vec![T::ZERO; out_ch * positions];
    for (o, chunk) in out.chunks_mut(positions).enumerate() {
        chunk.iter_mut().for_each(|v| *v = bias.data()[o]);
    }
    matmul(
        MatView::new(weights.data(), out_ch, g.patch_len()),
        MatView::new(&cols, g.patch_len(), positions),
        &mut out,
        true,
    );
    Tensor::new(vec![out_ch, g.out_rows, g.out_cols], out)
}

/// Gradients of [`conv2d_forward`] with respect to input, weights and bias.
pub fn conv2d_backward<T: Real>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weights: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (g, out_ch) = conv_geometry(input, weights, stride, padding)?;
    grad_out.expect_shape("conv grad", &[out_ch, g.out_rows, g.out_cols])?;
    let positions = g.positions();
    let patch = g.patch_len();
    let cols = im2col(input.data(), &g);
    let grad_view = MatView::new(grad_out.data(), out_ch, positions);

    let mut grad_w = vec![T::ZERO; out_ch * patch];
    matmul(
        grad_view,
        MatView::new(&cols, patch, positions).t(),
        &mut grad_w,
        false,
    );

    let grad_b = grad_out
        .data()
        .chunks(positions)
        .map(|c| c.iter().copied().sum())
        .collect();

    let mut grad_cols = cols;
    matmul(
        MatView::new(weights.data(), out_ch, patch).t(),
        grad_view,
        &mut grad_cols,
        false,
    );
    Ok((
        Tensor::new(input.shape().to_vec(), col2im(&grad_cols, &g))?,
        Tensor::new(weights.shape().to_vec(), grad_w)?,
        Tensor::new(vec![out_ch], grad_b)?,
    ))
}

/// Max pooling in floor mode. Returns the output and, for each output
/// element, the flat input index it was taken from (first maximum in
/// row-major order).
pub fn maxpool2d_forward<T: Real>(
    input: &Tensor<T>,
    kernel: usize,
    stride: usize,
) -> Result<(Tensor<T>, Vec<usize>)> {
    let &[channels, rows, cols] = input.shape() else {
        return Err(Error::shape(format!(
            "pool input must be [C, H, W], got {:?}",
            input.shape()
        )));
    };
    if kernel == 0 || stride == 0 {
        return Err(Error::invalid("pool kernel and stride must be positive"));
    }
    if rows < kernel || cols < kernel {
        return Err(Error::shape(format!(
            "pool kernel {kernel} larger than {rows}x{cols} input"
        )));
    }
    let out_rows = (rows - kernel) / stride + 1;
    let out_cols = (cols - kernel) / stride + 1;
    let data = input.data();
    let mut out = Vec::with_capacity(channels * out_rows * out_cols);
    let mut indices = Vec::with_capacity(out.capacity());
    for c in 0..channels {
        for oy in 0..out_rows {
            for ox in 0..out_cols {
                let mut best = (c * rows + oy * stride) * cols + ox * stride;
                for i in 0..kernel {
                    let base = (c * rows + oy * stride + i) * cols + ox * stride;
                    for idx in base..base + kernel {
                        if data[idx] > data[best] {
                            best = idx;
                        }
                    }
                }
                out.push(data[best]);
                indices.push(best);
            }
        }
    }
    Ok((
        Tensor::new(vec![channels, out_rows, out_cols], out)?,
        indices,
    ))
}

/// Route each output gradient back to the input position that won the max.
pub fn maxpool2d_backward<T: Real>(
    grad_out: &Tensor<T>,
    indices: &[usize],
    input_shape: &[usize],
) -> Result<Tensor<T>> {
    if grad_out.len() != indices.len() {
        return Err(Error::shape(format!(
            "{} pool gradients for {} recorded maxima",
            grad_out.len(),
            indices.len()
        )));
    }
    let mut grad = Tensor::zeros(input_shape);
    let data = grad.data_mut();
    for (&idx, &g) in indices.iter().zip(grad_out.data()) {
        *data
            .get_mut(idx)
            .ok_or_else(|| Error::shape("pool index outside input"))? += g;
    }
    Ok(grad)
}

/// `weights * input + bias` for a flat input.
pub fn linear_forward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (out_f, in_f) = linear_dims(input, weights)?;
    bias.expect_shape("linear bias", &[out_f])?;
    let out = weights
        .data()
        .chunks_exact(in_f)
        .zip(bias.data())
        .map(|(row, &b)| b + dot(row, input.data()))
        .collect();
    Tensor::new(vec![out_f], out)
}

/// Gradients of [`linear_forward`] with respect to input, weights and bias.
pub fn linear_backward<T: Real>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weights: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let mut grad_w = Tensor::zeros(weights.shape());
    let mut grad_b = Tensor::zeros(&[grad_out.len()]);
    let grad_in = linear_backward_into(
        grad_out,
        input,
        weights,
        grad_w.data_mut(),
        grad_b.data_mut(),
    )?;
    Ok((grad_in, grad_w, grad_b))
}

/// [`linear_backward`] adding the weight and bias gradients into existing
/// buffers. Rows with a zero output gradient contribute nothing and are skipped.
pub(crate) fn linear_backward_into<T: Real>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_w: &mut [T],
    grad_b: &mut [T],
) -> Result<Tensor<T>> {
    let (out_f, in_f) = linear_dims(input, weights)?;
    grad_out.expect_shape("linear grad", &[out_f])?;
    if grad_w.len() != out_f * in_f || grad_b.len() != out_f {
        return Err(Error::shape(
            "linear gradient buffers do not match the weights",
        ));
    }
    let mut grad_in = vec![T::ZERO; in_f];
    for (o, &g) in grad_out.data().iter().enumerate() {
        grad_b[o] += g;
        if g == T::ZERO {
            continue;
        }
        axpy(g, input.data(), &mut grad_w[o * in_f..(o + 1) * in_f]);
        axpy(g, &weights.data()[o * in_f..(o + 1) * in_f], &mut grad_in);
    }
    Tensor::new(vec![in_f], grad_in)
}

fn linear_dims<T: Real>(input: &Tensor<T>, weights: &Tensor<T>) -> Result<(usize, usize)> {
    let &[out_f, in_f] = weights.shape() else {
        return Err(Error::shape(format!(
            "linear weights must be [out, in], got {:?}",
            weights.shape()
        )));
    };
    input.expect_shape("linear input", &[in_f])?;
    Ok((out_f, in_f))
}

pub fn relu_forward<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    let data = input
        .data()
        .iter()
        .map(|&v| if v > T::ZERO { v } else { T::ZERO })
        .collect();
    Tensor::new(input.shape().to_vec(), data).expect("relu preserves shape")
}

pub fn relu_backward<T: Real>(grad_out: &Tensor<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
    grad_out.expect_shape("relu grad", input.shape())?;
    let data = grad_out
        .data()
        .iter()
        .zip(input.data())
        .map(|(&g, &x)| if x > T::ZERO { g } else { T::ZERO })
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

/// Inverted dropout. In training mode each element is zeroed with
/// probability `p` and survivors are scaled by `1/(1-p)`; the returned mask
/// holds the per-element multiplier. Evaluation mode, or `p == 0`, is the identity.
pub fn dropout_forward<T: Real, R: Rng + ?Sized>(
    input: &Tensor<T>,
    p: f64,
    train: bool,
    rng: &mut R,
) -> Result<(Tensor<T>, Option<Vec<T>>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid(format!(
            "dropout probability {p} outside [0, 1)"
        )));
    }
    if !train || p == 0.0 {
        return Ok((input.clone(), None));
    }
    let keep = T::from_f64(1.0 / (1.0 - p));
    let mask: Vec<T> = (0..input.len())
        .map(|_| {
            if rng.random::<f64>() < p {
                T::ZERO
            } else {
                keep
            }
        })
        .collect();
    let data = input
        .data()
        .iter()
        .zip(&mask)
        .map(|(&v, &m)| v * m)
        .collect();
    Ok((Tensor::new(input.shape().to_vec(), data)?, Some(mask)))
}

pub fn dropout_backward<T: Real>(grad_out: &Tensor<T>, mask: Option<&[T]>) -> Result<Tensor<T>> {
    let Some(mask) = mask else {
        return Ok(grad_out.clone());
    };
    if mask.len() != grad_out.len() {
        return Err(Error::shape("dropout mask does not match gradient"));
    }
    let data = grad_out
        .data()
        .iter()
        .zip(mask)
        .map(|(&g, &m)| g * m)
        .collect();
    Tensor::new(grad_out.shape().to_vec(), data)
}

pub fn flatten<T: Real>(input: Tensor<T>) -> Tensor<T> {
    let len = input.len();
    input.reshape(vec![len]).expect("flatten preserves size")
}

/// Softmax in double precision; probabilities sum to one.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<f64> {
    let max = logits
        .iter()
        .map(|v| v.to_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v.to_f64() - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of `softmax(logits)` against `label`, via log-sum-exp,
/// with its gradient `softmax - onehot`.
pub fn softmax_cross_entropy<T: Real>(
    logits: &Tensor<T>,
    label: usize,
) -> Result<(f64, Tensor<T>)> {
    let n = logits.len();
    if label >= n {
        return Err(Error::invalid(format!(
            "label {label} out of range for {n} classes"
        )));
    }
    if logits.data().iter().any(|v| !v.to_f64().is_finite()) {
        return Err(Error::invalid("non-finite logits"));
    }
    let values = logits.to_f64_vec();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    let loss = lse - values[label];
    let grad = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let p = (v - lse).exp();
            T::from_f64(if i == label { p - 1.0 } else { p })
        })
        .collect();
    Ok((loss, Tensor::new(logits.shape().to_vec(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn conv_scalar_affine_and_its_gradient() {
        let x = t(&[1, 1, 1], &[5.0]);
        let w = t(&[1, 1, 1, 1], &[2.0]);
        let b = t(&[1], &[1.0]);
        assert_eq!(conv2d_forward(&x, &w, &b, 1, 0).unwrap().data(), &[11.0]);
        let (gi, gw, gb) = conv2d_backward(&t(&[1, 1, 1], &[1.0]), &x, &w, 1, 0).unwrap();
        assert_eq!(gw.data(), &[5.0]);
        assert_eq!(gi.data(), &[2.0]);
        assert_eq!(gb.data(), &[1.0]);
    }

    #[test]
    fn conv_identity_kernel() {
        let data: Vec<f64> = (0..20).map(|v| v as f64 * 0.3 - 2.0).collect();
        let x = t(&[1, 4, 5], &data);
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        let out = conv2d_forward(&x, &t(&[1, 1, 3, 3], &k), &t(&[1], &[0.0]), 1, 1).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn conv_counts_overlaps() {
        let out = conv2d_forward(
            &t(&[1, 3, 3], &[1.0; 9]),
            &t(&[1, 1, 3, 3], &[1.0; 9]),
            &t(&[1], &[0.0]),
            1,
            1,
        )
        .unwrap();
        assert_eq!(out.data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn conv_bias_gradient_is_spatial_sum() {
        let x = t(&[1, 3, 3], &[0.5; 9]);
        let w = t(&[2, 1, 3, 3], &[0.1; 18]);
        let go: Vec<f64> = (0..18).map(|v| v as f64).collect();
        let (_, _, gb) = conv2d_backward(&t(&[2, 3, 3], &go), &x, &w, 1, 1).unwrap();
        assert_eq!(gb.data(), &[36.0, 117.0]);
    }

    #[test]
    fn conv_rejects_shape_mismatch() {
        let x = t(&[2, 3, 3], &[0.0; 18]);
        let w = t(&[1, 1, 3, 3], &[0.0; 9]);
        assert!(conv2d_forward(&x, &w, &t(&[1], &[0.0]), 1, 1).is_err());
        let x = t(&[1, 2, 2], &[0.0; 4]);
        assert!(conv2d_forward(&x, &w, &t(&[1], &[0.0]), 1, 0).is_err());
        let x = t(&[1, 3, 3], &[0.0; 9]);
        assert!(conv2d_forward(&x, &w, &t(&[2], &[0.0; 2]), 1, 0).is_err());
    }

    #[test]
    fn strided_conv_shape() {
        let x = t(&[1, 7, 7], &[1.0; 49]);
        let out =
            conv2d_forward(&x, &t(&[3, 1, 3, 3], &[1.0; 27]), &t(&[3], &[0.0; 3]), 2, 1).unwrap();
        assert_eq!(out.shape(), &[3, 4, 4]);
    }

    #[test]
    fn maxpool_basic_and_floor_mode() {
        let (out, idx) = maxpool2d_forward(&t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]), 2, 2).unwrap();
        assert_eq!(out.data(), &[4.0]);
        assert_eq!(idx, vec![3]);
        let (out, _) = maxpool2d_forward(&Tensor::<f64>::zeros(&[2, 75, 75]), 2, 2).unwrap();
        assert_eq!(out.shape(), &[2, 37, 37]);
        assert!(maxpool2d_forward(&Tensor::<f64>::zeros(&[1, 1, 4]), 2, 2).is_err());
    }

    #[test]
    fn maxpool_ties_go_to_first_position() {
        let x = t(&[1, 4, 4], &[0.5; 16]);
        let (out, idx) = maxpool2d_forward(&x, 2, 2).unwrap();
        let grad =
            maxpool2d_backward(&t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]), &idx, x.shape()).unwrap();
        assert_eq!(out.data(), &[0.5; 4]);
        let mut expected = [0.0; 16];
        expected[0] = 1.0;
        expected[2] = 2.0;
        expected[8] = 3.0;
        expected[10] = 4.0;
        assert_eq!(grad.data(), &expected[..]);
    }

    #[test]
    fn relu_cases() {
        let x = t(&[3], &[-1.0, 0.0, 2.0]);
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 2.0]);
        assert_eq!(
            relu_backward(&t(&[3], &[1.0; 3]), &x).unwrap().data(),
            &[0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = t(&[1000], &[1.0; 1000]);
        let (same, mask) = dropout_forward(&x, 0.0, true, &mut rng).unwrap();
        assert_eq!(same, x);
        assert!(mask.is_none());
        let (eval, _) = dropout_forward(&x, 0.25, false, &mut rng).unwrap();
        assert_eq!(eval, x);

        let (out, mask) = dropout_forward(&x, 0.25, true, &mut rng).unwrap();
        let zeros = out.data().iter().filter(|&&v| v == 0.0).count();
        assert!((180..320).contains(&zeros), "{zeros}");
        assert!(out
            .data()
            .iter()
            .all(|&v| v == 0.0 || (v - 4.0 / 3.0).abs() < 1e-12));
        let back = dropout_backward(&x, mask.as_deref()).unwrap();
        assert_eq!(back, out);
        assert!(dropout_forward(&x, 1.0, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_masks_reproduce_from_seed() {
        let x = t(&[64], &[1.0; 64]);
        let a = dropout_forward(&x, 0.5, true, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = dropout_forward(&x, 0.5, true, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cross_entropy_cases() {
        let (loss, grad) = softmax_cross_entropy(&t(&[10], &[0.3; 10]), 4).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
        assert!((grad.data()[4] + 0.9).abs() < 1e-12);

        let (loss, grad) = softmax_cross_entropy(&t(&[2], &[1000.0, 0.0]), 0).unwrap();
        assert!(loss.abs() < 1e-12 && loss.is_finite());
        assert!(grad.data().iter().all(|g| g.is_finite()));

        assert!(softmax_cross_entropy(&t(&[2], &[0.0, 0.0]), 2).is_err());
    }

    #[test]
    fn flatten_keeps_data() {
        let x = t(&[2, 2, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let f = flatten(x.clone());
        assert_eq!(f.shape(), &[8]);
        assert_eq!(f.data(), x.data());
    }

    #[test]
    fn linear_rejects_mismatch() {
        let w = t(&[2, 3], &[0.0; 6]);
        assert!(linear_forward(&t(&[4], &[0.0; 4]), &w, &t(&[2], &[0.0; 2])).is_err());
        assert!(linear_forward(&t(&[3], &[0.0; 3]), &w, &t(&[3], &[0.0; 3])).is_err());
    }
}
