//! Foreground reinforcing: mask-gated local attention over the query key.
//!
//! A mask channel is concatenated to the query key, two convolutions produce
//! per-pixel logits over the w×h neighborhood, and the softmaxed weights are
//! gated by `mask_gate` of the previous-frame mask value. The enhanced key is
//! the weighted sum of each pixel's zero-padded neighborhood.

use crate::error::{Error, Result};
use crate::tensor::{conv2d, softmax_axis, DenseArray};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Initial logit bias on the center tap of the attention window.
const CENTER_LOGIT_BIAS: f64 = 6.0;

/// Local-attention parameters: kernel extents plus the two convolutions.
#[derive(Debug, Clone)]
pub struct FrmParams {
    pub kernel_h: usize,
    pub kernel_w: usize,
    /// kernel_h × kernel_w × (Ck+1) × Ck
    pub conv_local: DenseArray,
    pub conv_local_bias: DenseArray,
    /// 1 × 1 × Ck × Z
    pub conv_logits: DenseArray,
    pub conv_logits_bias: DenseArray,
}

impl FrmParams {
    /// Seeded pseudo-random draw; `kernel` gives both odd extents.
    pub fn seeded(key_channels: usize, kernel: usize, seed: u64) -> Result<Self> {
        if kernel % 2 == 0 || kernel == 0 {
            return Err(Error::argument("frm kernel extent must be odd and >= 1"));
        }
        let z = kernel * kernel;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cin = key_channels + 1;
        let scale = 1.0 / (cin * z) as f64;
        let mut draw = |n: usize, s: f64| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-s..s)).collect()
        };
        Ok(FrmParams {
            kernel_h: kernel,
            kernel_w: kernel,
            conv_local: DenseArray::new(
                vec![kernel, kernel, cin, key_channels],
                draw(kernel * kernel * cin * key_channels, scale.sqrt()),
            )?,
            conv_local_bias: DenseArray::new(vec![key_channels], draw(key_channels, 0.1))?,
            conv_logits: DenseArray::new(
                vec![1, 1, key_channels, z],
                draw(key_channels * z, (1.0 / key_channels as f64).sqrt()),
            )?,
            conv_logits_bias: {
                // center-favoring prior: the softmaxed weights start close to
                // an identity attention so untrained params do not smear the
                // key field across patch boundaries
                let mut bias = draw(z, 0.1);
                bias[z / 2] += CENTER_LOGIT_BIAS;
                DenseArray::new(vec![z], bias)?
            },
        })
    }

    pub fn patch_size(&self) -> usize {
        self.kernel_h * self.kernel_w
    }
}

/// Per-pixel attention weights over the local patch, H×W×Z.
#[derive(Debug, Clone)]
pub struct AttentionField {
    pub alpha: DenseArray,
}

/// Soft gate G(m) = exp(m)/e; maps [0,1] onto [1/e, 1].
pub fn mask_gate(m: f64) -> f64 {
    (m - 1.0).exp()
}

/// Mask-gated local attention weights for a query key.
pub fn attention_weights(
    key: &DenseArray,
    mask_prev: &DenseArray,
    params: &FrmParams,
) -> Result<AttentionField> {
    if key.rank() != 3 || mask_prev.rank() != 3 {
        return Err(Error::argument("attention_weights expects H×W×C and H×W×1"));
    }
    let (h, w, ck) = (key.shape()[0], key.shape()[1], key.shape()[2]);
    if mask_prev.shape() != [h, w, 1] {
        return Err(Error::argument("mask shape does not match key"));
    }
    if params.conv_local.shape()[2] != ck + 1 {
        return Err(Error::argument("params channel mismatch"));
    }

    // F = concat(key, mask) along channels
    let mut concat = DenseArray::zeros(vec![h, w, ck + 1]);
    for i in 0..h {
        for j in 0..w {
            for c in 0..ck {
                concat.set3(i, j, c, key.at3(i, j, c));
            }
            concat.set3(i, j, ck, mask_prev.at3(i, j, 0));
        }
    }
    let att = conv2d(&concat, &params.conv_local, &params.conv_local_bias)?;
    let logits = conv2d(&att, &params.conv_logits, &params.conv_logits_bias)?;
    let mut alpha = softmax_axis(&logits, 2)?;
    let z = params.patch_size();
    for i in 0..h {
        for j in 0..w {
            let g = mask_gate(mask_prev.at3(i, j, 0));
            for p in 0..z {
                let v = alpha.at3(i, j, p) * g;
                alpha.set3(i, j, p, v);
            }
        }
    }
    Ok(AttentionField { alpha })
}

/// Weighted sum of each pixel's w×h neighborhood (zero-padded) under `alpha`.
pub fn enhance(key: &DenseArray, alpha: &AttentionField, params: &FrmParams) -> Result<DenseArray> {
    let (h, w, ck) = (key.shape()[0], key.shape()[1], key.shape()[2]);
    let z = params.patch_size();
    if alpha.alpha.shape() != [h, w, z] {
        return Err(Error::argument("attention field shape mismatch"));
    }
    let (ph, pw) = ((params.kernel_h - 1) / 2, (params.kernel_w - 1) / 2);
    let mut out = DenseArray::zeros(vec![h, w, ck]);
    for i in 0..h {
        for j in 0..w {
            for p in 0..z {
                let a = alpha.alpha.at3(i, j, p);
                let si = i as isize + (p / params.kernel_w) as isize - ph as isize;
                let sj = j as isize + (p % params.kernel_w) as isize - pw as isize;
                if si < 0 || si >= h as isize || sj < 0 || sj >= w as isize {
                    continue; // zero padding
                }
                for c in 0..ck {
                    let v = out.at3(i, j, c) + a * key.at3(si as usize, sj as usize, c);
                    out.set3(i, j, c, v);
                }
            }
        }
    }
    Ok(out)
}
