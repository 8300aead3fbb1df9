//! Minimal dense-array numeric kernels shared by the rest of the crate.
//!
//! Arrays are row-major `f64` with explicit shapes. Everything here is a pure
//! function with no domain semantics.

use crate::error::{Error, Result};

/// Dense row-major array of `f64` with an explicit shape.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseArray {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::argument("zero extent in shape"));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::argument(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                len,
                data.len()
            )));
        }
        Ok(DenseArray { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len: usize = shape.iter().product();
        DenseArray {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Flat index for a 2-d array.
    #[inline]
    pub fn idx2(&self, i: usize, j: usize) -> usize {
        i * self.shape[1] + j
    }

    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx2(i, j)]
    }

    /// Flat index for a 3-d array.
    #[inline]
    pub fn idx3(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.shape[1] + j) * self.shape[2] + k
    }

    #[inline]
    pub fn at3(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.idx3(i, j, k)]
    }

    #[inline]
    pub fn set3(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.idx3(i, j, k);
        self.data[idx] = v;
    }

    /// Flat index for a 4-d array.
    #[inline]
    pub fn idx4(&self, t: usize, i: usize, j: usize, k: usize) -> usize {
        ((t * self.shape[1] + i) * self.shape[2] + j) * self.shape[3] + k
    }

    #[inline]
    pub fn at4(&self, t: usize, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.idx4(t, i, j, k)]
    }

    #[inline]
    pub fn set4(&mut self, t: usize, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.idx4(t, i, j, k);
        self.data[idx] = v;
    }
}

/// Integer label map, 0 = background, 1..K = object identities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl LabelMask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::argument("zero mask extent"));
        }
        if data.len() != height * width {
            return Err(Error::argument("mask data length does not match extents"));
        }
        Ok(LabelMask {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        LabelMask {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: u8) {
        self.data[row * self.width + col] = v;
    }

    /// Largest label present (0 for an all-background mask).
    pub fn max_label(&self) -> u8 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    /// Binary {0,1} slice for one object label.
    pub fn binary_slice(&self, label: u8) -> LabelMask {
        let data = self
            .data
            .iter()
            .map(|&v| if v == label && label != 0 { 1 } else { 0 })
            .collect();
        LabelMask {
            height: self.height,
            width: self.width,
            data,
        }
    }

    /// Union foreground mask: any label > 0 becomes 1.
    pub fn foreground(&self) -> LabelMask {
        let data = self
            .data
            .iter()
            .map(|&v| if v > 0 { 1 } else { 0 })
            .collect();
        LabelMask {
            height: self.height,
            width: self.width,
            data,
        }
    }
}

/// Softmax along one axis, with max-subtraction for stability.
pub fn softmax_axis(x: &DenseArray, axis: usize) -> Result<DenseArray> {
    if axis >= x.rank() {
        return Err(Error::argument(format!(
            "axis {} out of range for rank {}",
            axis,
            x.rank()
        )));
    }
    let axis_len = x.shape()[axis];
    let inner: usize = x.shape()[axis + 1..].iter().product();
    let outer: usize = x.shape()[..axis].iter().product();

    let mut out = x.clone();
    for o in 0..outer {
        for i in 0..inner {
            let base = o * axis_len * inner + i;
            let mut max = f64::NEG_INFINITY;
            for a in 0..axis_len {
                max = max.max(x.data[base + a * inner]);
            }
            let mut sum = 0.0;
            for a in 0..axis_len {
                let e = (x.data[base + a * inner] - max).exp();
                out.data[base + a * inner] = e;
                sum += e;
            }
            for a in 0..axis_len {
                out.data[base + a * inner] /= sum;
            }
        }
    }
    Ok(out)
}

/// KL divergence Σ p·log((p+ε)/(q+ε)) with ε = 1e-12.
pub fn kl_divergence(p: &DenseArray, q: &DenseArray) -> Result<f64> {
    if p.shape() != q.shape() {
        return Err(Error::argument("kl_divergence shape mismatch"));
    }
    const EPS: f64 = 1e-12;
    let mut sum = 0.0;
    for (&pv, &qv) in p.data().iter().zip(q.data()) {
        sum += pv * ((pv + EPS) / (qv + EPS)).ln();
    }
    Ok(sum)
}

/// 2-d cross-correlation, stride 1, "same" zero padding.
///
/// `x` is H×W×Cin, `kernel` is kh×kw×Cin×Cout with odd kh, kw.
pub fn conv2d(x: &DenseArray, kernel: &DenseArray, bias: &DenseArray) -> Result<DenseArray> {
    if x.rank() != 3 || kernel.rank() != 4 || bias.rank() != 1 {
        return Err(Error::argument("conv2d expects H×W×Cin, kh×kw×Cin×Cout, Cout"));
    }
    let (h, w, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (kh, kw, kcin, cout) = (
        kernel.shape()[0],
        kernel.shape()[1],
        kernel.shape()[2],
        kernel.shape()[3],
    );
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::argument("conv2d kernel extents must be odd"));
    }
    if kcin != cin {
        return Err(Error::argument(format!(
            "conv2d channel mismatch: input {} vs kernel {}",
            cin, kcin
        )));
    }
    if bias.shape()[0] != cout {
        return Err(Error::argument("conv2d bias length mismatch"));
    }
    let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
    let mut out = DenseArray::zeros(vec![h, w, cout]);
    for i in 0..h {
        for j in 0..w {
            for co in 0..cout {
                let mut acc = bias.data()[co];
                for dy in 0..kh {
                    let si = i as isize + dy as isize - ph as isize;
                    if si < 0 || si >= h as isize {
                        continue;
                    }
                    for dx in 0..kw {
                        let sj = j as isize + dx as isize - pw as isize;
                        if sj < 0 || sj >= w as isize {
                            continue;
                        }
                        for ci in 0..cin {
                            acc += x.at3(si as usize, sj as usize, ci)
                                * kernel.at4(dy, dx, ci, co);
                        }
                    }
                }
                out.set3(i, j, co, acc);
            }
        }
    }
    Ok(out)
}

/// Mean over the spatial grid per (t, c): T×H×W×C → T×1×1×C.
pub fn global_average_pool(x: &DenseArray) -> Result<DenseArray> {
    if x.rank() != 4 {
        return Err(Error::argument("global_average_pool expects T×H×W×C"));
    }
    let (t, h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let mut out = DenseArray::zeros(vec![t, 1, 1, c]);
    let norm = (h * w) as f64;
    for ti in 0..t {
        for ci in 0..c {
            let mut sum = 0.0;
            for i in 0..h {
                for j in 0..w {
                    sum += x.at4(ti, i, j, ci);
                }
            }
            out.set4(ti, 0, 0, ci, sum / norm);
        }
    }
    Ok(out)
}

/// Nearest-neighbor downsample of a label mask to H×W×1.
///
/// Each target pixel samples the source pixel containing its center: source
/// row = floor((i + 0.5) · H0 / H), likewise for columns.
pub fn resize_mask_nearest(m: &LabelMask, h: usize, w: usize) -> Result<DenseArray> {
    if h == 0 || w == 0 {
        return Err(Error::argument("zero target extent"));
    }
    if m.height() < h || m.width() < w {
        return Err(Error::argument("resize_mask_nearest target larger than source"));
    }
    let mut out = DenseArray::zeros(vec![h, w, 1]);
    for i in 0..h {
        let si = (((i as f64 + 0.5) * m.height() as f64 / h as f64) as usize).min(m.height() - 1);
        for j in 0..w {
            let sj = (((j as f64 + 0.5) * m.width() as f64 / w as f64) as usize).min(m.width() - 1);
            out.set3(i, j, 0, m.at(si, sj) as f64);
        }
    }
    Ok(out)
}

/// Align-corners-false bilinear upsample by an integer factor.
pub fn bilinear_upsample(x: &DenseArray, factor: usize) -> Result<DenseArray> {
    if x.rank() != 3 {
        return Err(Error::argument("bilinear_upsample expects H×W×C"));
    }
    if factor == 0 {
        return Err(Error::argument("factor must be >= 1"));
    }
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = (h * factor, w * factor);
    let mut out = DenseArray::zeros(vec![oh, ow, c]);
    let f = factor as f64;
    for i in 0..oh {
        let sy = ((i as f64 + 0.5) / f - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = sy - y0 as f64;
        for j in 0..ow {
            let sx = ((j as f64 + 0.5) / f - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = sx - x0 as f64;
            for ci in 0..c {
                let v = x.at3(y0, x0, ci) * (1.0 - fy) * (1.0 - fx)
                    + x.at3(y0, x1, ci) * (1.0 - fy) * fx
                    + x.at3(y1, x0, ci) * fy * (1.0 - fx)
                    + x.at3(y1, x1, ci) * fy * fx;
                out.set3(i, j, ci, v);
            }
        }
    }
    Ok(out)
}
