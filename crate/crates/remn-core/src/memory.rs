//! Memory bank container and the non-local read: softmax-normalized L2
//! affinity between memory and query keys, and the affinity-weighted value
//! readout.
//!
//! Keys are shared across objects; values are stored per object. The affinity
//! is computed once per query frame and reused for every object readout.

use crate::error::{Error, Result};
use crate::tensor::{DenseArray, LabelMask};

/// One stored memory frame: a key plus per-object value maps.
#[derive(Debug, Clone)]
pub struct BankEntry {
    pub key: DenseArray,
    pub values: Vec<DenseArray>,
    pub frame_index: usize,
}

/// Ordered store of at most `capacity` key/value pairs plus the latest mask.
#[derive(Debug, Clone)]
pub struct MemoryBank {
    entries: Vec<BankEntry>,
    capacity: usize,
    latest_mask: Option<LabelMask>,
}

/// Column-stochastic matrix of shape (T·H·W) × (H·W).
#[derive(Debug, Clone)]
pub struct Affinity {
    pub weights: DenseArray,
    pub memory_pixels: usize,
    pub query_pixels: usize,
}

impl MemoryBank {
    pub fn new(capacity: usize) -> Self {
        MemoryBank {
            entries: Vec::new(),
            capacity,
            latest_mask: None,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> &[BankEntry] {
        &self.entries
    }

    pub fn latest_mask(&self) -> Option<&LabelMask> {
        self.latest_mask.as_ref()
    }

    /// Replace the entry list wholesale; used by temporal compression.
    pub(crate) fn replace_entries(&mut self, entries: Vec<BankEntry>) {
        self.entries = entries;
    }

    /// Append a key/value pair; the mask becomes the latest memory mask.
    pub fn insert(
        &mut self,
        key: DenseArray,
        values: Vec<DenseArray>,
        mask: LabelMask,
        frame_index: usize,
    ) -> Result<()> {
        if let Some(first) = self.entries.first() {
            if key.shape() != first.key.shape() {
                return Err(Error::argument("bank_insert key shape mismatch"));
            }
            if values.len() != first.values.len() {
                return Err(Error::argument("bank_insert object count mismatch"));
            }
            for (v, fv) in values.iter().zip(&first.values) {
                if v.shape() != fv.shape() {
                    return Err(Error::argument("bank_insert value shape mismatch"));
                }
            }
        }
        self.entries.push(BankEntry {
            key,
            values,
            frame_index,
        });
        self.latest_mask = Some(mask);
        Ok(())
    }

    pub fn object_count(&self) -> usize {
        self.entries.first().map_or(0, |e| e.values.len())
    }
}

/// Softmax-normalized L2 similarity between all memory pixels and all query
/// pixels.
///
/// Distances use the expansion ‖a−b‖² = ‖a‖² − 2a·b + ‖b‖²; the ‖b‖² term is
/// constant within each column softmax and is dropped there.
pub fn compute_affinity(bank: &MemoryBank, query_key: &DenseArray) -> Result<Affinity> {
    if bank.is_empty() {
        return Err(Error::state("compute_affinity on empty bank"));
    }
    let shape = query_key.shape();
    let (h, w, ck) = (shape[0], shape[1], shape[2]);
    let first = &bank.entries()[0];
    if first.key.shape() != [h, w, ck] {
        return Err(Error::argument("query key shape does not match bank"));
    }
    let t = bank.len();
    let hw = h * w;
    let mem_pixels = t * hw;

    // flatten memory keys and precompute ‖a_i‖²
    let mut mem = Vec::with_capacity(mem_pixels * ck);
    for entry in bank.entries() {
        mem.extend_from_slice(entry.key.data());
    }
    let mem_sq: Vec<f64> = (0..mem_pixels)
        .map(|i| mem[i * ck..(i + 1) * ck].iter().map(|v| v * v).sum())
        .collect();

    let qdata = query_key.data();
    let mut weights = DenseArray::zeros(vec![mem_pixels, hw]);
    let wdata = weights.data_mut();
    let mut logits = vec![0.0; mem_pixels];
    for j in 0..hw {
        let q = &qdata[j * ck..(j + 1) * ck];
        let mut max = f64::NEG_INFINITY;
        for (i, logit) in logits.iter_mut().enumerate() {
            let a = &mem[i * ck..(i + 1) * ck];
            let dot: f64 = a.iter().zip(q).map(|(av, qv)| av * qv).sum();
            *logit = 2.0 * dot - mem_sq[i];
            max = max.max(*logit);
        }
        let mut sum = 0.0;
        for (i, &logit) in logits.iter().enumerate() {
            let e = (logit - max).exp();
            wdata[i * hw + j] = e;
            sum += e;
        }
        for i in 0..mem_pixels {
            wdata[i * hw + j] /= sum;
        }
    }
    Ok(Affinity {
        weights,
        memory_pixels: mem_pixels,
        query_pixels: hw,
    })
}

/// Affinity-weighted aggregation of one object's memory values.
pub fn readout(aff: &Affinity, bank: &MemoryBank, object: usize) -> Result<DenseArray> {
    if bank.is_empty() {
        return Err(Error::state("readout on empty bank"));
    }
    if object >= bank.object_count() {
        return Err(Error::argument(format!(
            "object {} out of range (have {})",
            object,
            bank.object_count()
        )));
    }
    let first = &bank.entries()[0].values[object];
    let (h, w, cv) = (first.shape()[0], first.shape()[1], first.shape()[2]);
    let hw = h * w;
    if aff.query_pixels != hw || aff.memory_pixels != bank.len() * hw {
        return Err(Error::argument("affinity shape does not match bank"));
    }

    let mut vals = Vec::with_capacity(aff.memory_pixels * cv);
    for entry in bank.entries() {
        vals.extend_from_slice(entry.values[object].data());
    }
    let wdata = aff.weights.data();
    let mut out = DenseArray::zeros(vec![h, w, cv]);
    let odata = out.data_mut();
    for i in 0..aff.memory_pixels {
        let v = &vals[i * cv..(i + 1) * cv];
        let row = &wdata[i * hw..(i + 1) * hw];
        for j in 0..hw {
            let wij = row[j];
            if wij == 0.0 {
                continue;
            }
            for c in 0..cv {
                odata[j * cv + c] += wij * v[c];
            }
        }
    }
    Ok(out)
}
