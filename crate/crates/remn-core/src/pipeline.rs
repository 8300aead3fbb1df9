//! Toy encoders, linear decoder, and the per-frame orchestration loop.
//!
//! Frames are encoded into patch-level key/value features at 1/16 resolution.
//! Keys carry pooled color plus a weak position encoding through a seeded
//! linear projection; values additionally carry the downsampled object mask
//! channel. The decoder recovers per-pixel foreground evidence from the
//! readout by inverting the value projection on the mask channel, so the
//! score of a query pixel is the affinity-weighted foreground-ness of the
//! memory it matched.

use crate::asm::{should_store, SamplingConfig};
use crate::error::{Error, Result};
use crate::frm::{attention_weights, enhance, FrmParams};
use crate::memory::{compute_affinity, readout, MemoryBank};
use crate::rrm::{
    compress, compress_entries, gate_probabilities, select_policy, stack_keys, CompressorParams,
    GateParams, TemporalPolicy,
};
use crate::tensor::{bilinear_upsample, resize_mask_nearest, DenseArray, LabelMask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

/// Patch size of the toy encoders; keys and values live at 1/16 resolution.
pub const PATCH: usize = 16;

/// Pooled features per patch before projection: mean R, G, B and the two
/// normalized patch-center coordinates.
const KEY_FEATURES: usize = 5;
/// Key features plus the downsampled mask channel.
const VALUE_FEATURES: usize = 6;

/// Weight of the position channels relative to color; small so appearance
/// dominates the matching.
const POS_WEIGHT: f64 = 0.25;
/// Overall key scale; sharpens the affinity softmax.
const KEY_GAIN: f64 = 4.0;

/// 8-bit RGB frame.
#[derive(Debug, Clone)]
pub struct Frame {
    height: usize,
    width: usize,
    rgb: Vec<u8>,
}

impl Frame {
    pub fn new(height: usize, width: usize, rgb: Vec<u8>) -> Result<Self> {
        if rgb.len() != height * width * 3 {
            return Err(Error::argument("frame data length mismatch"));
        }
        Ok(Frame { height, width, rgb })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rgb(&self) -> &[u8] {
        &self.rgb
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let at = (row * self.width + col) * 3;
        [self.rgb[at], self.rgb[at + 1], self.rgb[at + 2]]
    }
}

/// Full pipeline configuration; `seed` determines every parameter draw.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub key_channels: usize,
    pub value_channels: usize,
    pub objects: usize,
    pub seed: u64,
    pub frm_enabled: bool,
    pub frm_kernel: usize,
    pub frm_seed: Option<u64>,
    pub asm_enabled: bool,
    pub sigma: f64,
    pub interval: usize,
    pub rrm_enabled: bool,
    pub capacity: usize,
    pub policies: usize,
    pub rrm_hidden: usize,
    pub rrm_seed: Option<u64>,
    pub protect_first: bool,
    pub store_raw_key: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            key_channels: 16,
            value_channels: 32,
            objects: 1,
            seed: 0,
            frm_enabled: true,
            frm_kernel: 3,
            frm_seed: None,
            asm_enabled: true,
            sigma: 0.1,
            interval: 5,
            rrm_enabled: true,
            capacity: 8,
            policies: 2,
            rrm_hidden: 8,
            rrm_seed: None,
            protect_first: false,
            store_raw_key: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.key_channels == 0 || self.value_channels == 0 {
            return Err(Error::argument("channel widths must be >= 1"));
        }
        if self.objects == 0 {
            return Err(Error::argument("object count must be >= 1"));
        }
        if self.frm_kernel % 2 == 0 {
            return Err(Error::argument("frm kernel must be odd"));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(Error::argument("sigma must lie in (0, 1)"));
        }
        if self.interval == 0 {
            return Err(Error::argument("interval must be >= 1"));
        }
        if self.policies == 0 {
            return Err(Error::argument("policy count must be >= 1"));
        }
        let max_stride = 1usize << self.policies;
        if self.rrm_enabled && self.capacity % max_stride != 0 {
            return Err(Error::argument(format!(
                "capacity {} must be divisible by 2^policies = {}",
                self.capacity, max_stride
            )));
        }
        Ok(())
    }

    pub fn frm_seed(&self) -> u64 {
        self.frm_seed.unwrap_or_else(|| self.seed.wrapping_add(0x46524d))
    }

    pub fn rrm_seed(&self) -> u64 {
        self.rrm_seed.unwrap_or_else(|| self.seed.wrapping_add(0x52524d))
    }
}

/// All derived parameters, fully determined by the config seeds.
#[derive(Debug, Clone)]
pub struct PipelineParams {
    pub frm: FrmParams,
    pub gate: GateParams,
    pub compressor: CompressorParams,
    key_proj: Vec<f64>,
    key_bias: Vec<f64>,
    value_proj: Vec<f64>,
    value_bias: Vec<f64>,
    decoder_weight: Vec<f64>,
    decoder_bias: f64,
}

/// Solve a small square linear system by Gaussian elimination with partial
/// pivoting.
fn solve_small(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() < 1e-12 {
            return Err(Error::state("singular system in decoder construction"));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

impl PipelineParams {
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let ck = cfg.key_channels;
        let cv = cfg.value_channels;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let key_scale = KEY_GAIN / (KEY_FEATURES as f64).sqrt();
        let key_proj: Vec<f64> = (0..ck * KEY_FEATURES)
            .map(|_| rng.gen_range(-key_scale..key_scale))
            .collect();
        let key_bias: Vec<f64> = (0..ck).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let value_proj: Vec<f64> = (0..cv * VALUE_FEATURES)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let value_bias: Vec<f64> = (0..cv).map(|_| rng.gen_range(-0.5..0.5)).collect();

        // decoder weight w solves Vᵀw = e_mask (min-norm via w = V(VᵀV)⁻¹e),
        // so w·(V f + b) recovers the mask feature up to a constant
        let mut gram = vec![vec![0.0; VALUE_FEATURES]; VALUE_FEATURES];
        for (i, row) in gram.iter_mut().enumerate() {
            for (j, g) in row.iter_mut().enumerate() {
                *g = (0..cv)
                    .map(|r| value_proj[r * VALUE_FEATURES + i] * value_proj[r * VALUE_FEATURES + j])
                    .sum();
            }
        }
        let mut e_mask = vec![0.0; VALUE_FEATURES];
        e_mask[VALUE_FEATURES - 1] = 1.0;
        let coeffs = solve_small(gram, e_mask)?;
        let decoder_weight: Vec<f64> = (0..cv)
            .map(|r| {
                (0..VALUE_FEATURES)
                    .map(|f| value_proj[r * VALUE_FEATURES + f] * coeffs[f])
                    .sum()
            })
            .collect();
        let bias_term: f64 = decoder_weight
            .iter()
            .zip(&value_bias)
            .map(|(w, b)| w * b)
            .sum();
        // threshold at foreground evidence 0.5
        let decoder_bias = -0.5 - bias_term;

        Ok(PipelineParams {
            frm: FrmParams::seeded(ck, cfg.frm_kernel, cfg.frm_seed())?,
            gate: GateParams::seeded(ck, cfg.rrm_hidden, cfg.policies, cfg.rrm_seed())?,
            compressor: CompressorParams::uniform(cfg.policies),
            key_proj,
            key_bias,
            value_proj,
            value_bias,
            decoder_weight,
            decoder_bias,
        })
    }
}

/// Per-frame outcome emitted by the segmentation loop.
#[derive(Debug, Clone)]
pub struct FrameResult {
    pub mask: LabelMask,
    pub stored: bool,
    pub policy_applied: Option<TemporalPolicy>,
    pub rrm_loss: Option<f64>,
    pub latency: f64,
    /// Bank length at the end of the frame, after any compression.
    pub bank_size: usize,
    /// Largest bank length reached during the frame (after insert, before
    /// compression); equals `bank_size` on frames without compression.
    pub bank_peak: usize,
}

fn patch_dims(frame: &Frame) -> Result<(usize, usize)> {
    if frame.height() % PATCH != 0 || frame.width() % PATCH != 0 {
        return Err(Error::argument(format!(
            "frame size {}x{} not divisible by {}",
            frame.height(),
            frame.width(),
            PATCH
        )));
    }
    Ok((frame.height() / PATCH, frame.width() / PATCH))
}

/// Pooled patch features: mean RGB in [0,1] plus weighted patch-center
/// coordinates.
fn patch_features(frame: &Frame, h: usize, w: usize) -> Vec<f64> {
    let mut feats = vec![0.0; h * w * KEY_FEATURES];
    let norm = (PATCH * PATCH) as f64 * 255.0;
    for pi in 0..h {
        for pj in 0..w {
            let mut sums = [0.0f64; 3];
            for dy in 0..PATCH {
                for dx in 0..PATCH {
                    let px = frame.pixel(pi * PATCH + dy, pj * PATCH + dx);
                    sums[0] += px[0] as f64;
                    sums[1] += px[1] as f64;
                    sums[2] += px[2] as f64;
                }
            }
            let at = (pi * w + pj) * KEY_FEATURES;
            feats[at] = sums[0] / norm;
            feats[at + 1] = sums[1] / norm;
            feats[at + 2] = sums[2] / norm;
            feats[at + 3] = POS_WEIGHT * (pi as f64 + 0.5) / h as f64;
            feats[at + 4] = POS_WEIGHT * (pj as f64 + 0.5) / w as f64;
        }
    }
    feats
}

/// Toy key encoder: pooled patch statistics through the seeded projection.
pub fn encode_key(frame: &Frame, cfg: &PipelineConfig, params: &PipelineParams) -> Result<DenseArray> {
    let (h, w) = patch_dims(frame)?;
    let ck = cfg.key_channels;
    let feats = patch_features(frame, h, w);
    let mut out = DenseArray::zeros(vec![h, w, ck]);
    for p in 0..h * w {
        let f = &feats[p * KEY_FEATURES..(p + 1) * KEY_FEATURES];
        for c in 0..ck {
            let row = &params.key_proj[c * KEY_FEATURES..(c + 1) * KEY_FEATURES];
            let v: f64 = row.iter().zip(f).map(|(a, b)| a * b).sum();
            out.data_mut()[p * ck + c] = v + params.key_bias[c];
        }
    }
    Ok(out)
}

/// Toy value encoder: patch features plus the downsampled object mask
/// channel through the seeded projection.
pub fn encode_value(
    frame: &Frame,
    object_mask: &LabelMask,
    cfg: &PipelineConfig,
    params: &PipelineParams,
) -> Result<DenseArray> {
    let (h, w) = patch_dims(frame)?;
    if object_mask.height() != frame.height() || object_mask.width() != frame.width() {
        return Err(Error::argument("value encoder mask shape mismatch"));
    }
    let cv = cfg.value_channels;
    let feats = patch_features(frame, h, w);
    let mask_ds = resize_mask_nearest(object_mask, h, w)?;
    let mut out = DenseArray::zeros(vec![h, w, cv]);
    for p in 0..h * w {
        let mut f = [0.0; VALUE_FEATURES];
        f[..KEY_FEATURES].copy_from_slice(&feats[p * KEY_FEATURES..(p + 1) * KEY_FEATURES]);
        f[VALUE_FEATURES - 1] = mask_ds.data()[p];
        for c in 0..cv {
            let row = &params.value_proj[c * VALUE_FEATURES..(c + 1) * VALUE_FEATURES];
            let v: f64 = row.iter().zip(&f).map(|(a, b)| a * b).sum();
            out.data_mut()[p * cv + c] = v + params.value_bias[c];
        }
    }
    Ok(out)
}

/// Linear decoder: per-object foreground score, bilinear ×16 upsample, and
/// per-pixel argmax with ties going to background.
pub fn decode_mask(
    readouts: &[DenseArray],
    params: &PipelineParams,
) -> Result<LabelMask> {
    if readouts.is_empty() {
        return Err(Error::argument("decode_mask needs at least one readout"));
    }
    let (h, w, cv) = (
        readouts[0].shape()[0],
        readouts[0].shape()[1],
        readouts[0].shape()[2],
    );
    let mut upsampled = Vec::with_capacity(readouts.len());
    for r in readouts {
        if r.shape() != [h, w, cv] {
            return Err(Error::argument("readout shape mismatch"));
        }
        let mut scores = DenseArray::zeros(vec![h, w, 1]);
        for p in 0..h * w {
            let v = &r.data()[p * cv..(p + 1) * cv];
            let s: f64 = params
                .decoder_weight
                .iter()
                .zip(v)
                .map(|(a, b)| a * b)
                .sum();
            scores.data_mut()[p] = s + params.decoder_bias;
        }
        upsampled.push(bilinear_upsample(&scores, PATCH)?);
    }
    let (oh, ow) = (h * PATCH, w * PATCH);
    let mut mask = LabelMask::zeros(oh, ow);
    for i in 0..oh {
        for j in 0..ow {
            let mut best = 0.0; // background score
            let mut best_label = 0u8;
            let mut tie = false;
            for (obj, s) in upsampled.iter().enumerate() {
                let v = s.at3(i, j, 0);
                if v > best {
                    best = v;
                    best_label = obj as u8 + 1;
                    tie = false;
                } else if v == best && best_label != 0 {
                    tie = true;
                }
            }
            mask.set(i, j, if tie { 0 } else { best_label });
        }
    }
    Ok(mask)
}

fn enhanced_key(
    raw_key: &DenseArray,
    prev_mask: &LabelMask,
    params: &PipelineParams,
) -> Result<DenseArray> {
    let (h, w) = (raw_key.shape()[0], raw_key.shape()[1]);
    let fg = resize_mask_nearest(&prev_mask.foreground(), h, w)?;
    let field = attention_weights(raw_key, &fg, &params.frm)?;
    enhance(raw_key, &field, &params.frm)
}

/// Compression step honoring the protect-first switch: with protection, the
/// first entry is carried over and the largest stride-divisible prefix of the
/// tail is compressed; any remainder is kept as-is.
fn compress_bank(
    bank: &MemoryBank,
    policy: TemporalPolicy,
    comp: &CompressorParams,
    protect_first: bool,
) -> Result<MemoryBank> {
    if !protect_first {
        return compress(bank, policy, comp);
    }
    let stride = policy.stride();
    let weights = &comp.kernels[policy.s];
    let tail = &bank.entries()[1..];
    let compressible = tail.len() - tail.len() % stride;
    let mut entries = vec![bank.entries()[0].clone()];
    entries.extend(compress_entries(&tail[..compressible], weights));
    entries.extend(tail[compressible..].iter().cloned());
    let mut out = bank.clone();
    out.replace_entries(entries);
    Ok(out)
}

/// Segment a video given the first-frame annotation; returns per-frame
/// results and the final bank state.
pub fn run_segmentation(
    frames: &[Frame],
    first_mask: &LabelMask,
    cfg: &PipelineConfig,
    params: &PipelineParams,
) -> Result<(Vec<FrameResult>, MemoryBank)> {
    if frames.is_empty() {
        return Err(Error::argument("empty frame list"));
    }
    if first_mask.height() != frames[0].height() || first_mask.width() != frames[0].width() {
        return Err(Error::argument("first mask shape mismatch"));
    }
    if first_mask.max_label() as usize > cfg.objects {
        return Err(Error::argument("first mask labels exceed object count"));
    }
    cfg.validate()?;

    let mut bank = MemoryBank::new(cfg.capacity);
    let mut results = Vec::with_capacity(frames.len());

    // frame 0: encode and store unconditionally with the annotation
    let start = Instant::now();
    let raw = encode_key(&frames[0], cfg, params)?;
    let key = if cfg.frm_enabled {
        let enhanced = enhanced_key(&raw, first_mask, params)?;
        if cfg.store_raw_key {
            raw
        } else {
            enhanced
        }
    } else {
        raw
    };
    let values = (1..=cfg.objects as u8)
        .map(|label| encode_value(&frames[0], &first_mask.binary_slice(label), cfg, params))
        .collect::<Result<Vec<_>>>()?;
    bank.insert(key, values, first_mask.clone(), 0)?;
    results.push(FrameResult {
        mask: first_mask.clone(),
        stored: true,
        policy_applied: None,
        rrm_loss: None,
        latency: start.elapsed().as_secs_f64(),
        bank_size: bank.len(),
        bank_peak: bank.len(),
    });

    let mut prev_mask = first_mask.clone();
    for (t, frame) in frames.iter().enumerate().skip(1) {
        let start = Instant::now();
        let raw = encode_key(frame, cfg, params)?;
        let query_key = if cfg.frm_enabled {
            enhanced_key(&raw, &prev_mask, params)?
        } else {
            raw.clone()
        };
        let affinity = compute_affinity(&bank, &query_key)?;
        let readouts = (0..cfg.objects)
            .map(|obj| readout(&affinity, &bank, obj))
            .collect::<Result<Vec<_>>>()?;
        let mask = decode_mask(&readouts, params)?;

        let store = if cfg.asm_enabled {
            let reference = bank
                .latest_mask()
                .ok_or_else(|| Error::state("bank has no latest mask"))?;
            should_store(&mask, reference, &SamplingConfig { sigma: cfg.sigma })?
        } else {
            t % cfg.interval == 0
        };

        let mut policy_applied = None;
        let mut loss = None;
        let mut bank_peak = bank.len();
        if store {
            let values = (1..=cfg.objects as u8)
                .map(|label| encode_value(frame, &mask.binary_slice(label), cfg, params))
                .collect::<Result<Vec<_>>>()?;
            let stored_key = if cfg.store_raw_key { raw } else { query_key };
            bank.insert(stored_key, values, mask.clone(), t)?;
            bank_peak = bank.len();
            if cfg.rrm_enabled && bank.len() >= cfg.capacity {
                let keys = stack_keys(&bank)?;
                let prob = gate_probabilities(&keys, &params.gate)?;
                let policy = select_policy(&prob);
                let compressed =
                    compress_bank(&bank, policy, &params.compressor, cfg.protect_first)?;
                loss = Some(crate::rrm::rrm_loss(&bank, &compressed)?);
                bank = compressed;
                policy_applied = Some(policy);
            }
        }

        results.push(FrameResult {
            mask: mask.clone(),
            stored: store,
            policy_applied,
            rrm_loss: loss,
            latency: start.elapsed().as_secs_f64(),
            bank_size: bank.len(),
            bank_peak,
        });
        prev_mask = mask;
    }
    Ok((results, bank))
}

/// Segment a video; see [`run_segmentation`] for the bank-returning variant.
pub fn segment_video(
    frames: &[Frame],
    first_mask: &LabelMask,
    cfg: &PipelineConfig,
) -> Result<Vec<FrameResult>> {
    let params = PipelineParams::from_config(cfg)?;
    run_segmentation(frames, first_mask, cfg, &params).map(|(r, _)| r)
}
