//! Redundancy reduction: a soft modulation gate picks a temporal policy, a
//! strided per-channel temporal kernel compresses the bank, and a KL loss
//! measures how far the pooled feature distribution drifted.

use crate::error::{Error, Result};
use crate::memory::{BankEntry, MemoryBank};
use crate::tensor::{global_average_pool, kl_divergence, softmax_axis, DenseArray};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BN_EPS: f64 = 1e-5;

/// Soft modulation gate parameters: two linear maps around a fixed batch norm
/// plus a scalar bias before the ω activation.
#[derive(Debug, Clone)]
pub struct GateParams {
    /// hidden × Ck
    pub lambda: Vec<f64>,
    pub lambda_bias: Vec<f64>,
    pub bn_scale: Vec<f64>,
    pub bn_shift: Vec<f64>,
    /// fixed inference statistics
    pub bn_mean: Vec<f64>,
    pub bn_var: Vec<f64>,
    /// policies × hidden
    pub beta: Vec<f64>,
    pub beta_bias: Vec<f64>,
    pub gamma: f64,
    pub key_channels: usize,
    pub hidden: usize,
    pub policies: usize,
}

/// Gradients of Σ Prob with respect to every gate parameter, in the same
/// layout as [`GateParams`].
#[derive(Debug, Clone)]
pub struct GateGradient {
    pub lambda: Vec<f64>,
    pub lambda_bias: Vec<f64>,
    pub bn_scale: Vec<f64>,
    pub bn_shift: Vec<f64>,
    pub beta: Vec<f64>,
    pub beta_bias: Vec<f64>,
    pub gamma: f64,
}

/// Chosen temporal policy; compression stride is 2^(s+1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TemporalPolicy {
    pub s: usize,
}

impl TemporalPolicy {
    pub fn stride(&self) -> usize {
        1 << (self.s + 1)
    }
}

/// Per-policy temporal kernels, one weight vector of length 2^(s+1) each.
#[derive(Debug, Clone)]
pub struct CompressorParams {
    pub kernels: Vec<Vec<f64>>,
}

impl CompressorParams {
    /// Uniform-averaging kernels: every weight is 2^-(s+1), so constants are
    /// preserved.
    pub fn uniform(policies: usize) -> Self {
        let kernels = (0..policies)
            .map(|s| {
                let len = 1usize << (s + 1);
                vec![1.0 / len as f64; len]
            })
            .collect();
        CompressorParams { kernels }
    }
}

impl GateParams {
    pub fn seeded(key_channels: usize, hidden: usize, policies: usize, seed: u64) -> Result<Self> {
        if policies == 0 || hidden == 0 || key_channels == 0 {
            return Err(Error::argument("gate dimensions must be >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize, s: f64| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-s..s)).collect()
        };
        Ok(GateParams {
            lambda: draw(hidden * key_channels, (1.0 / key_channels as f64).sqrt()),
            lambda_bias: draw(hidden, 0.5),
            bn_scale: vec![1.0; hidden],
            bn_shift: vec![0.0; hidden],
            bn_mean: vec![0.0; hidden],
            bn_var: vec![1.0; hidden],
            beta: draw(policies * hidden, (1.0 / hidden as f64).sqrt()),
            beta_bias: draw(policies, 0.5),
            gamma: draw(1, 0.5)[0],
            key_channels,
            hidden,
            policies,
        })
    }

    /// Trainable parameters flattened in a fixed order (bn statistics are not
    /// trainable and are excluded).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.lambda);
        out.extend_from_slice(&self.lambda_bias);
        out.extend_from_slice(&self.bn_scale);
        out.extend_from_slice(&self.bn_shift);
        out.extend_from_slice(&self.beta);
        out.extend_from_slice(&self.beta_bias);
        out.push(self.gamma);
        out
    }

    pub fn assign(&mut self, flat: &[f64]) {
        let mut at = 0;
        let mut take = |n: usize| {
            let s = &flat[at..at + n];
            at += n;
            s.to_vec()
        };
        self.lambda = take(self.hidden * self.key_channels);
        self.lambda_bias = take(self.hidden);
        self.bn_scale = take(self.hidden);
        self.bn_shift = take(self.hidden);
        self.beta = take(self.policies * self.hidden);
        self.beta_bias = take(self.policies);
        self.gamma = flat[at];
    }
}

impl GateGradient {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.lambda);
        out.extend_from_slice(&self.lambda_bias);
        out.extend_from_slice(&self.bn_scale);
        out.extend_from_slice(&self.bn_shift);
        out.extend_from_slice(&self.beta);
        out.extend_from_slice(&self.beta_bias);
        out.push(self.gamma);
        out
    }
}

struct GateForward {
    pooled: Vec<f64>,
    pre_bn: Vec<f64>,
    normalized: Vec<f64>,
    hidden: Vec<f64>,
    pre_omega: Vec<f64>,
    prob: Vec<f64>,
}

fn gate_forward(keys: &DenseArray, params: &GateParams) -> Result<GateForward> {
    if keys.rank() != 4 {
        return Err(Error::argument("gate input must be T×H×W×C"));
    }
    let ck = keys.shape()[3];
    if ck != params.key_channels {
        return Err(Error::argument("gate channel mismatch"));
    }
    let t = keys.shape()[0];
    let gap = global_average_pool(keys)?;
    // mean over T so the output length is fixed at the policy count
    let mut pooled = vec![0.0; ck];
    for ti in 0..t {
        for c in 0..ck {
            pooled[c] += gap.at4(ti, 0, 0, c);
        }
    }
    pooled.iter_mut().for_each(|v| *v /= t as f64);

    let m = params.hidden;
    let mut pre_bn = vec![0.0; m];
    for i in 0..m {
        let mut acc = params.lambda_bias[i];
        for c in 0..ck {
            acc += params.lambda[i * ck + c] * pooled[c];
        }
        pre_bn[i] = acc;
    }
    let normalized: Vec<f64> = (0..m)
        .map(|i| {
            (pre_bn[i] - params.bn_mean[i]) / (params.bn_var[i] + BN_EPS).sqrt()
                * params.bn_scale[i]
                + params.bn_shift[i]
        })
        .collect();
    let hidden: Vec<f64> = normalized.iter().map(|&v| v.max(0.0)).collect();
    let s = params.policies;
    let mut pre_omega = vec![0.0; s];
    for p in 0..s {
        let mut acc = params.beta_bias[p] + params.gamma;
        for i in 0..m {
            acc += params.beta[p * m + i] * hidden[i];
        }
        pre_omega[p] = acc;
    }
    let prob: Vec<f64> = pre_omega.iter().map(|&z| z.tanh().max(0.0)).collect();
    Ok(GateForward {
        pooled,
        pre_bn,
        normalized,
        hidden,
        pre_omega,
        prob,
    })
}

/// Policy probabilities Prob = ω(β·ReLU(BN(λ·GAP(k))) + γ), entries in [0, 1).
pub fn gate_probabilities(keys: &DenseArray, params: &GateParams) -> Result<DenseArray> {
    let fwd = gate_forward(keys, params)?;
    DenseArray::new(vec![params.policies], fwd.prob)
}

/// Distance from the nearest activation kink (ReLU or ω) in the gate's
/// forward pass; finite-difference gradient checks are only well-posed when
/// this is comfortably larger than the probe step.
pub fn kink_distance(keys: &DenseArray, params: &GateParams) -> Result<f64> {
    let fwd = gate_forward(keys, params)?;
    Ok(fwd
        .normalized
        .iter()
        .chain(fwd.pre_omega.iter())
        .map(|v| v.abs())
        .fold(f64::INFINITY, f64::min))
}

/// Smallest index attaining the maximum probability.
pub fn select_policy(prob: &DenseArray) -> TemporalPolicy {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in prob.data().iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    TemporalPolicy { s: best }
}

/// Stack all bank keys into a T×H×W×Ck array for the gate.
pub fn stack_keys(bank: &MemoryBank) -> Result<DenseArray> {
    if bank.is_empty() {
        return Err(Error::state("stack_keys on empty bank"));
    }
    let shape = bank.entries()[0].key.shape().to_vec();
    let mut data = Vec::with_capacity(bank.len() * bank.entries()[0].key.len());
    for entry in bank.entries() {
        data.extend_from_slice(entry.key.data());
    }
    DenseArray::new(vec![bank.len(), shape[0], shape[1], shape[2]], data)
}

/// Reduce consecutive windows of entries with a per-channel temporal kernel.
pub(crate) fn compress_entries(entries: &[BankEntry], weights: &[f64]) -> Vec<BankEntry> {
    let stride = weights.len();
    entries
        .chunks_exact(stride)
        .map(|window| {
            let mut key = DenseArray::zeros(window[0].key.shape().to_vec());
            for (w, e) in weights.iter().zip(window) {
                for (o, v) in key.data_mut().iter_mut().zip(e.key.data()) {
                    *o += w * v;
                }
            }
            let objects = window[0].values.len();
            let values = (0..objects)
                .map(|obj| {
                    let mut val = DenseArray::zeros(window[0].values[obj].shape().to_vec());
                    for (w, e) in weights.iter().zip(window) {
                        for (o, v) in val.data_mut().iter_mut().zip(e.values[obj].data()) {
                            *o += w * v;
                        }
                    }
                    val
                })
                .collect();
            BankEntry {
                key,
                values,
                frame_index: window[window.len() - 1].frame_index,
            }
        })
        .collect()
}

/// Compress the bank with the chosen policy's temporal kernel.
///
/// T must be divisible by the stride; the output holds T / 2^(s+1) entries
/// and the latest mask is unchanged.
pub fn compress(
    bank: &MemoryBank,
    policy: TemporalPolicy,
    comp: &CompressorParams,
) -> Result<MemoryBank> {
    if policy.s >= comp.kernels.len() {
        return Err(Error::argument("policy index exceeds compressor kernels"));
    }
    let weights = &comp.kernels[policy.s];
    let stride = policy.stride();
    if weights.len() != stride {
        return Err(Error::argument("kernel length does not match policy stride"));
    }
    if bank.len() % stride != 0 {
        return Err(Error::state(format!(
            "bank length {} not divisible by stride {}",
            bank.len(),
            stride
        )));
    }
    let mut out = bank.clone();
    out.replace_entries(compress_entries(bank.entries(), weights));
    Ok(out)
}

/// Pooled channel distribution: GAP over (T, H, W), then softmax over
/// channels.
fn channel_distribution(maps: Vec<&DenseArray>) -> Result<DenseArray> {
    let c = maps[0].shape()[2];
    let mut pooled = vec![0.0; c];
    let mut count = 0usize;
    for m in &maps {
        let (h, w) = (m.shape()[0], m.shape()[1]);
        for i in 0..h {
            for j in 0..w {
                for ch in 0..c {
                    pooled[ch] += m.at3(i, j, ch);
                }
            }
        }
        count += m.shape()[0] * m.shape()[1];
    }
    pooled.iter_mut().for_each(|v| *v /= count as f64);
    softmax_axis(&DenseArray::new(vec![c], pooled)?, 0)
}

/// KL drift between a bank and its compressed form, on pooled channel
/// distributions: key term plus the mean over objects of the value terms.
pub fn rrm_loss(before: &MemoryBank, after: &MemoryBank) -> Result<f64> {
    if before.is_empty() || after.is_empty() {
        return Err(Error::state("rrm_loss on empty bank"));
    }
    let ck_b = before.entries()[0].key.shape()[2];
    let ck_a = after.entries()[0].key.shape()[2];
    if ck_b != ck_a || before.object_count() != after.object_count() {
        return Err(Error::argument("rrm_loss channel or object mismatch"));
    }
    let key_before = channel_distribution(before.entries().iter().map(|e| &e.key).collect())?;
    let key_after = channel_distribution(after.entries().iter().map(|e| &e.key).collect())?;
    let mut loss = kl_divergence(&key_before, &key_after)?;
    let objects = before.object_count();
    let mut value_term = 0.0;
    for obj in 0..objects {
        let vb = channel_distribution(before.entries().iter().map(|e| &e.values[obj]).collect())?;
        let va = channel_distribution(after.entries().iter().map(|e| &e.values[obj]).collect())?;
        value_term += kl_divergence(&vb, &va)?;
    }
    loss += value_term / objects as f64;
    Ok(loss)
}

/// Analytic gradient of Σ Prob with respect to every gate parameter.
pub fn gate_gradient(keys: &DenseArray, params: &GateParams) -> Result<GateGradient> {
    let fwd = gate_forward(keys, params)?;
    let m = params.hidden;
    let s = params.policies;
    let ck = params.key_channels;

    // dL/dz2: ω'(z) = sech²(z) when z > 0, else 0
    let dz2: Vec<f64> = fwd
        .pre_omega
        .iter()
        .map(|&z| {
            if z > 0.0 {
                let t = z.tanh();
                1.0 - t * t
            } else {
                0.0
            }
        })
        .collect();

    let gamma_grad: f64 = dz2.iter().sum();
    let beta_bias = dz2.clone();
    let mut beta = vec![0.0; s * m];
    let mut dhidden = vec![0.0; m];
    for p in 0..s {
        for i in 0..m {
            beta[p * m + i] = dz2[p] * fwd.hidden[i];
            dhidden[i] += dz2[p] * params.beta[p * m + i];
        }
    }
    // through ReLU then BN
    let mut bn_scale = vec![0.0; m];
    let mut bn_shift = vec![0.0; m];
    let mut dpre_bn = vec![0.0; m];
    for i in 0..m {
        let relu_active = if fwd.normalized[i] > 0.0 { 1.0 } else { 0.0 };
        let dnorm = dhidden[i] * relu_active;
        let inv_std = 1.0 / (params.bn_var[i] + BN_EPS).sqrt();
        bn_scale[i] = dnorm * (fwd.pre_bn[i] - params.bn_mean[i]) * inv_std;
        bn_shift[i] = dnorm;
        dpre_bn[i] = dnorm * params.bn_scale[i] * inv_std;
    }
    let lambda_bias = dpre_bn.clone();
    let mut lambda = vec![0.0; m * ck];
    for i in 0..m {
        for c in 0..ck {
            lambda[i * ck + c] = dpre_bn[i] * fwd.pooled[c];
        }
    }
    Ok(GateGradient {
        lambda,
        lambda_bias,
        bn_scale,
        bn_shift,
        beta,
        beta_bias,
        gamma: gamma_grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::LabelMask;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_keys(t: usize, h: usize, w: usize, c: usize, seed: u64) -> DenseArray {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseArray::new(
            vec![t, h, w, c],
            (0..t * h * w * c).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn bank_of(keys: Vec<DenseArray>, values: Vec<Vec<DenseArray>>) -> MemoryBank {
        let mut bank = MemoryBank::new(keys.len());
        for (i, (k, v)) in keys.into_iter().zip(values).enumerate() {
            bank.insert(k, v, LabelMask::zeros(16, 16), i).unwrap();
        }
        bank
    }

    #[test]
    fn zero_input_zero_params_gives_zero_prob() {
        let mut params = GateParams::seeded(4, 3, 2, 50).unwrap();
        params.lambda_bias = vec![0.0; 3];
        params.beta_bias = vec![0.0; 2];
        params.gamma = 0.0;
        let keys = DenseArray::zeros(vec![2, 2, 2, 4]);
        let prob = gate_probabilities(&keys, &params).unwrap();
        for &v in prob.data() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn large_gamma_saturates_tanh() {
        let mut params = GateParams::seeded(4, 3, 2, 51).unwrap();
        params.lambda = vec![0.0; 12];
        params.lambda_bias = vec![0.0; 3];
        params.beta = vec![0.0; 6];
        params.beta_bias = vec![0.0; 2];
        params.gamma = 10.0;
        let keys = random_keys(2, 2, 2, 4, 52);
        let prob = gate_probabilities(&keys, &params).unwrap();
        for &v in prob.data() {
            assert!((v - f64::tanh(10.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn prob_entries_in_unit_interval() {
        for seed in 0..100 {
            let params = GateParams::seeded(6, 4, 3, seed).unwrap();
            let keys = random_keys(3, 2, 2, 6, 1000 + seed);
            let prob = gate_probabilities(&keys, &params).unwrap();
            for &v in prob.data() {
                assert!((0.0..1.0).contains(&v));
            }
        }
    }

    // independent reimplementation with nested loops over raw parameters
    fn gate_brute(keys: &DenseArray, p: &GateParams) -> Vec<f64> {
        let (t, h, w, ck) = (
            keys.shape()[0],
            keys.shape()[1],
            keys.shape()[2],
            keys.shape()[3],
        );
        let mut x = vec![0.0; ck];
        for c in 0..ck {
            let mut sum = 0.0;
            for ti in 0..t {
                for i in 0..h {
                    for j in 0..w {
                        sum += keys.at4(ti, i, j, c);
                    }
                }
            }
            x[c] = sum / (t * h * w) as f64;
        }
        let mut out = vec![0.0; p.policies];
        let hidden: Vec<f64> = (0..p.hidden)
            .map(|i| {
                let mut z = p.lambda_bias[i];
                for c in 0..ck {
                    z += p.lambda[i * ck + c] * x[c];
                }
                let u = (z - p.bn_mean[i]) / (p.bn_var[i] + 1e-5).sqrt() * p.bn_scale[i]
                    + p.bn_shift[i];
                u.max(0.0)
            })
            .collect();
        for (s, o) in out.iter_mut().enumerate() {
            let mut z = p.beta_bias[s] + p.gamma;
            for i in 0..p.hidden {
                z += p.beta[s * p.hidden + i] * hidden[i];
            }
            *o = z.tanh().max(0.0);
        }
        out
    }

    #[test]
    fn gate_matches_brute_force() {
        let params = GateParams::seeded(8, 5, 3, 53).unwrap();
        let keys = random_keys(4, 2, 2, 8, 54);
        let prob = gate_probabilities(&keys, &params).unwrap();
        let want = gate_brute(&keys, &params);
        for (g, w) in prob.data().iter().zip(&want) {
            assert!((g - w).abs() < 1e-6);
        }
    }

    #[test]
    fn select_policy_rules() {
        let mk = |v: Vec<f64>| DenseArray::new(vec![v.len()], v).unwrap();
        assert_eq!(select_policy(&mk(vec![0.1, 0.9])).s, 1);
        assert_eq!(select_policy(&mk(vec![0.0, 0.0])).s, 0);
        assert_eq!(select_policy(&mk(vec![0.3, 0.3, 0.2])).s, 0);
    }

    #[test]
    fn select_policy_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for _ in 0..200 {
            let v: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
            let c = rng.gen_range(0.1..10.0);
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            let a = select_policy(&DenseArray::new(vec![4], v).unwrap());
            let b = select_policy(&DenseArray::new(vec![4], scaled).unwrap());
            assert_eq!(a, b);
        }
    }

    #[test]
    fn compress_lengths() {
        let comp = CompressorParams::uniform(2);
        let keys: Vec<DenseArray> = (0..8)
            .map(|i| {
                let k = random_keys(1, 1, 1, 2, 60 + i);
                DenseArray::new(vec![1, 1, 2], k.data().to_vec()).unwrap()
            })
            .collect();
        let values: Vec<Vec<DenseArray>> = (0..8)
            .map(|i| vec![DenseArray::new(vec![1, 1, 2], vec![i as f64, 0.0]).unwrap()])
            .collect();
        let bank = bank_of(keys, values);
        // T = 8, s = 1 → stride 4 → 2 entries
        let out = compress(&bank, TemporalPolicy { s: 1 }, &comp).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out.entries()[0].frame_index, 3);
        assert_eq!(out.entries()[1].frame_index, 7);
    }

    #[test]
    fn compress_identical_entries_unchanged() {
        let comp = CompressorParams::uniform(2);
        let key = random_keys(1, 2, 2, 2, 61);
        let key = DenseArray::new(vec![2, 2, 2], key.data().to_vec()).unwrap();
        let val = DenseArray::new(vec![2, 2, 2], vec![0.5; 8]).unwrap();
        let bank = bank_of(
            (0..4).map(|_| key.clone()).collect(),
            (0..4).map(|_| vec![val.clone()]).collect(),
        );
        let out = compress(&bank, TemporalPolicy { s: 0 }, &comp).unwrap();
        assert_eq!(out.len(), 2);
        for e in out.entries() {
            for (a, b) in e.key.data().iter().zip(key.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn compress_pairwise_average() {
        let comp = CompressorParams::uniform(1);
        let mk = |v: f64| DenseArray::new(vec![1, 1, 1], vec![v]).unwrap();
        let bank = bank_of(
            vec![mk(1.0), mk(3.0), mk(5.0), mk(9.0)],
            (0..4).map(|i| vec![mk(i as f64)]).collect(),
        );
        let out = compress(&bank, TemporalPolicy { s: 0 }, &comp).unwrap();
        assert_eq!(out.len(), 2);
        assert!((out.entries()[0].key.data()[0] - 2.0).abs() < 1e-12);
        assert!((out.entries()[1].key.data()[0] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn compress_non_divisible_is_state_error() {
        let comp = CompressorParams::uniform(2);
        let mk = |v: f64| DenseArray::new(vec![1, 1, 1], vec![v]).unwrap();
        let bank = bank_of(
            vec![mk(1.0), mk(2.0), mk(3.0)],
            (0..3).map(|_| vec![mk(0.0)]).collect(),
        );
        assert!(matches!(
            compress(&bank, TemporalPolicy { s: 1 }, &comp),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn compress_preserves_temporal_mean() {
        let comp = CompressorParams::uniform(2);
        let keys: Vec<DenseArray> = (0..8)
            .map(|i| {
                let k = random_keys(1, 2, 2, 3, 70 + i);
                DenseArray::new(vec![2, 2, 3], k.data().to_vec()).unwrap()
            })
            .collect();
        let values: Vec<Vec<DenseArray>> = (0..8)
            .map(|i| {
                let v = random_keys(1, 2, 2, 2, 90 + i);
                vec![DenseArray::new(vec![2, 2, 2], v.data().to_vec()).unwrap()]
            })
            .collect();
        let bank = bank_of(keys, values);
        let out = compress(&bank, TemporalPolicy { s: 1 }, &comp).unwrap();
        for pc in 0..12 {
            let before: f64 =
                bank.entries().iter().map(|e| e.key.data()[pc]).sum::<f64>() / 8.0;
            let after: f64 =
                out.entries().iter().map(|e| e.key.data()[pc]).sum::<f64>() / 2.0;
            assert!((before - after).abs() < 1e-9);
        }
    }

    #[test]
    fn loss_zero_for_constant_bank() {
        let comp = CompressorParams::uniform(2);
        let key = DenseArray::new(vec![2, 2, 3], (0..12).map(|i| i as f64 * 0.1).collect()).unwrap();
        let val = DenseArray::new(vec![2, 2, 2], (0..8).map(|i| i as f64 * 0.2).collect()).unwrap();
        let bank = bank_of(
            (0..4).map(|_| key.clone()).collect(),
            (0..4).map(|_| vec![val.clone()]).collect(),
        );
        let out = compress(&bank, TemporalPolicy { s: 0 }, &comp).unwrap();
        let loss = rrm_loss(&bank, &out).unwrap();
        assert!(loss.abs() <= 1e-9);
    }

    #[test]
    fn loss_nonnegative_randomized() {
        let comp = CompressorParams::uniform(2);
        for seed in 0..100 {
            let keys: Vec<DenseArray> = (0..4)
                .map(|i| {
                    let k = random_keys(1, 2, 2, 3, seed * 10 + i);
                    DenseArray::new(vec![2, 2, 3], k.data().to_vec()).unwrap()
                })
                .collect();
            let values: Vec<Vec<DenseArray>> = (0..4)
                .map(|i| {
                    let v = random_keys(1, 2, 2, 2, 2000 + seed * 10 + i);
                    vec![DenseArray::new(vec![2, 2, 2], v.data().to_vec()).unwrap()]
                })
                .collect();
            let bank = bank_of(keys, values);
            let out = compress(&bank, TemporalPolicy { s: 0 }, &comp).unwrap();
            assert!(rrm_loss(&bank, &out).unwrap() >= -1e-9);
        }
    }

    #[test]
    fn loss_matches_hand_computation() {
        // 2-channel keys crafted so the pooled means are known exactly
        let mk_key = |a: f64, b: f64| DenseArray::new(vec![1, 1, 2], vec![a, b]).unwrap();
        let bank = bank_of(
            vec![mk_key(1.0, 0.0), mk_key(0.0, 1.0), mk_key(1.0, 1.0), mk_key(0.0, 0.0)],
            (0..4).map(|_| vec![mk_key(0.3, 0.3)]).collect(),
        );
        let comp = CompressorParams::uniform(1);
        let out = compress(&bank, TemporalPolicy { s: 0 }, &comp).unwrap();
        // pooled key means: before (0.5, 0.5), after ((0.5+0.5)/2, (0.5+0.5)/2)
        // = (0.5, 0.5) → key KL = 0; values constant → value KL = 0
        let loss = rrm_loss(&bank, &out).unwrap();
        assert!(loss.abs() < 1e-9);

        // now make the compression actually shift the pooled mean by using a
        // non-uniform kernel
        let comp2 = CompressorParams {
            kernels: vec![vec![0.8, 0.2]],
        };
        let out2 = compress(&bank, TemporalPolicy { s: 0 }, &comp2).unwrap();
        // window 1: 0.8·(1,0) + 0.2·(0,1) = (0.8, 0.2)
        // window 2: 0.8·(1,1) + 0.2·(0,0) = (0.8, 0.8)
        // pooled after = (0.8, 0.5); before = (0.5, 0.5)
        let p = softmax_axis(&DenseArray::new(vec![2], vec![0.5, 0.5]).unwrap(), 0).unwrap();
        let q = softmax_axis(&DenseArray::new(vec![2], vec![0.8, 0.5]).unwrap(), 0).unwrap();
        let want = kl_divergence(&p, &q).unwrap(); // value term is 0
        let got = rrm_loss(&bank, &out2).unwrap();
        assert!((got - want).abs() < 1e-6);
    }

    #[test]
    fn gradient_zero_in_flat_region() {
        let mut params = GateParams::seeded(4, 3, 2, 56).unwrap();
        params.lambda = vec![0.0; 12];
        params.lambda_bias = vec![0.0; 3];
        params.beta = vec![0.0; 6];
        params.beta_bias = vec![0.0; 2];
        params.gamma = -1.0; // ω clamped at 0
        let keys = random_keys(2, 2, 2, 4, 57);
        let grad = gate_gradient(&keys, &params).unwrap();
        for v in grad.flatten() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn gamma_gradient_analytic() {
        let mut params = GateParams::seeded(4, 3, 2, 58).unwrap();
        params.gamma = 0.7;
        let keys = random_keys(2, 2, 2, 4, 59);
        let fwd_prob = gate_probabilities(&keys, &params).unwrap();
        let grad = gate_gradient(&keys, &params).unwrap();
        // d(Σ Prob)/dγ = Σ_s sech²(z_s) over active entries; recover z from
        // prob where active (prob > 0 → z = atanh(prob))
        let want: f64 = fwd_prob
            .data()
            .iter()
            .map(|&p| if p > 0.0 { 1.0 - p * p } else { 0.0 })
            .sum();
        assert!((grad.gamma - want).abs() < 1e-9);
    }

    fn objective(keys: &DenseArray, params: &GateParams) -> f64 {
        gate_probabilities(keys, params).unwrap().data().iter().sum()
    }

    fn away_from_kinks(keys: &DenseArray, params: &GateParams) -> bool {
        let fwd = gate_forward(keys, params).unwrap();
        fwd.normalized.iter().all(|v| v.abs() > 1e-3)
            && fwd.pre_omega.iter().all(|v| v.abs() > 1e-3)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut checked = 0;
        let mut seed = 0u64;
        while checked < 20 {
            seed += 1;
            let params = GateParams::seeded(5, 4, 3, seed).unwrap();
            let keys = random_keys(3, 2, 2, 5, 10_000 + seed);
            if !away_from_kinks(&keys, &params) {
                continue;
            }
            let grad = gate_gradient(&keys, &params).unwrap().flatten();
            let flat = params.flatten();
            let step = 1e-5;
            for (i, g) in grad.iter().enumerate() {
                let mut plus = params.clone();
                let mut minus = params.clone();
                let mut fp = flat.clone();
                fp[i] += step;
                plus.assign(&fp);
                fp[i] -= 2.0 * step;
                minus.assign(&fp);
                let fd = (objective(&keys, &plus) - objective(&keys, &minus)) / (2.0 * step);
                let denom = g.abs().max(fd.abs()).max(1e-8);
                assert!(
                    (g - fd).abs() / denom <= 1e-4,
                    "param {}: analytic {} vs fd {}",
                    i,
                    g,
                    fd
                );
            }
            checked += 1;
        }
    }
}
