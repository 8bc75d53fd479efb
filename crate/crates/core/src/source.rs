//! Subtractively dithered uniform scalar quantizer and chunking of the packed
//! indices into feedback-codec blocks.

use bitvec::{order::Msb0, vec::BitVec};
use rand::Rng;
use serde::Serialize;

use crate::analysis::{plan_blocklength, q_func, rate_distortion, LinkBudget};
use crate::codec::MAX_SUBCHANNEL_BITS;
use crate::error::{domain, Error, Result};

/// Most-significant-bit-first bit string.
pub type BitString = BitVec<u8, Msb0>;

/// Largest block payload: two real sub-channels at the per-sub-channel cap.
pub const MAX_CHUNK_BITS: u32 = 2 * MAX_SUBCHANNEL_BITS;

/// Minimum clip range in source standard deviations.
pub const CLIP_SIGMAS: f64 = 4.0;

/// Ceiling on expected clipping distortion as a fraction of `D`.
pub const CLIP_DISTORTION_SHARE: f64 = 0.01;

/// Expected squared excess `E[(|w| - c)^2; |w| > c]` of a standard normal.
pub fn clip_excess(c: f64) -> f64 {
    let phi = (-0.5 * c * c).exp() / (2.0 * std::f64::consts::PI).sqrt();
    (2.0 * ((1.0 + c * c) * q_func(c) - c * phi)).max(0.0)
}

/// Smallest clip edge (in standard deviations, at least [`CLIP_SIGMAS`]) whose
/// clipping distortion stays below `CLIP_DISTORTION_SHARE * D`.
pub fn clip_edge(distortion: f64, source_var: f64) -> f64 {
    let target = CLIP_DISTORTION_SHARE * distortion / source_var;
    if clip_excess(CLIP_SIGMAS) <= target {
        return CLIP_SIGMAS;
    }
    let (mut lo, mut hi) = (CLIP_SIGMAS, 40.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if clip_excess(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Cell geometry derived from `(D, source_var)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuantizerParams {
    /// Cell width `sqrt(12 D)`.
    pub step: f64,
    /// Indices run over `-half_cells..=half_cells`; `2^width - 1` cells in all.
    pub half_cells: u64,
    /// Fixed index width in bits; zero when nothing is sent.
    pub width: u32,
    /// `R(D)` in bits per coordinate.
    pub rate_bits_per_coord: f64,
}

impl QuantizerParams {
    pub fn new(distortion: f64, source_var: f64) -> Result<Self> {
        if !(distortion > 0.0 && distortion.is_finite()) {
            return Err(domain(format!("distortion must be positive, got {distortion}")));
        }
        if !(source_var > 0.0 && source_var.is_finite()) {
            return Err(domain(format!("source variance must be positive, got {source_var}")));
        }
        let rate = rate_distortion(distortion, source_var)?;
        let step = (12.0 * distortion).sqrt();
        if rate == 0.0 {
            return Ok(QuantizerParams { step, half_cells: 0, width: 0, rate_bits_per_coord: 0.0 });
        }
        // Cover the clip edge, then widen to the largest odd range the index width allows.
        let edge = clip_edge(distortion, source_var) * source_var.sqrt();
        let min_half = (edge / step - 0.5).ceil().max(1.0) as u64;
        let width = u64::BITS - (2 * min_half).leading_zeros();
        let half_cells = (1u64 << (width - 1)) - 1;
        Ok(QuantizerParams { step, half_cells, width, rate_bits_per_coord: rate })
    }

    /// Like [`QuantizerParams::new`], widening the index until `peak` is inside the range.
    pub fn covering(distortion: f64, source_var: f64, peak: f64) -> Result<Self> {
        let mut params = Self::new(distortion, source_var)?;
        if !params.active() || !peak.is_finite() {
            return Ok(params);
        }
        while (params.half_cells as f64 + 0.5) * params.step < peak && params.width < 63 {
            params.width += 1;
            params.half_cells = (1u64 << (params.width - 1)) - 1;
        }
        Ok(params)
    }

    pub fn cells(&self) -> u64 {
        2 * self.half_cells + 1
    }

    /// Whether the quantizer sends anything at all.
    pub fn active(&self) -> bool {
        self.width > 0
    }

    /// `q` dither values uniform on `[-step/2, step/2)`; none when inactive.
    pub fn sample_dither<R: Rng + ?Sized>(&self, q: usize, rng: &mut R) -> Vec<f64> {
        if !self.active() {
            return Vec::new();
        }
        (0..q).map(|_| self.step * (rng.random::<f64>() - 0.5)).collect()
    }
}

/// Packed quantizer indices plus the accounting needed by the rate and secrecy layers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantizedPayload {
    /// `q * width` bits, one fixed-width index per coordinate.
    #[serde(skip)]
    pub indices: BitString,
    pub q: usize,
    pub width: u32,
    pub rate_bits_per_coord: f64,
    /// `ceil(q R(D))`, the payload length used for rate and secrecy accounting.
    pub accounted_bits: u64,
    /// Coordinates that hit the clip range.
    pub clipped: usize,
    /// Transmission chunks of `indices`, filled by [`QuantizedPayload::plan_chunks`].
    pub blocks: Vec<Chunk>,
}

impl QuantizedPayload {
    pub fn actual_bits(&self) -> u64 {
        self.indices.len() as u64
    }

    /// Accounted rate per coordinate after rounding the block up to whole bits.
    pub fn accounted_rate(&self) -> f64 {
        self.accounted_bits as f64 / self.q as f64
    }

    pub fn index(&self, coord: usize) -> u64 {
        let w = self.width as usize;
        read_bits(&self.indices, coord * w, w) as u64
    }

    pub fn plan_chunks(&mut self, budget: &LinkBudget, tau: f64, n_max: usize) -> Result<()> {
        self.blocks = chunk(self.actual_bits(), budget, tau, n_max)?;
        Ok(())
    }
}

/// Quantizes `w` with explicit per-coordinate dither.
pub fn quantize_with_dither(w: &[f64], params: &QuantizerParams, dither: &[f64]) -> Result<QuantizedPayload> {
    if w.is_empty() {
        return Err(domain("cannot quantize an empty vector"));
    }
    let q = w.len();
    let accounted_bits = (q as f64 * params.rate_bits_per_coord).ceil() as u64;
    let mut indices = BitString::with_capacity(q * params.width as usize);
    let mut clipped = 0;
    if params.active() {
        if dither.len() != q {
            return Err(Error::Dimension { expected: q, got: dither.len() });
        }
        let k_max = params.half_cells as f64;
        for (&x, &u) in w.iter().zip(dither) {
            let k = ((x + u) / params.step).round();
            let k = if k.abs() > k_max {
                clipped += 1;
                k.clamp(-k_max, k_max)
            } else if k.is_nan() {
                clipped += 1;
                0.0
            } else {
                k
            };
            push_bits(&mut indices, (k + k_max) as u128, params.width as usize);
        }
    }
    Ok(QuantizedPayload {
        indices,
        q,
        width: params.width,
        rate_bits_per_coord: params.rate_bits_per_coord,
        accounted_bits,
        clipped,
        blocks: Vec::new(),
    })
}

/// Reconstructs `k step - u` per coordinate. Indices past the last cell, which
/// only a corrupted channel can produce, map to the outermost cell.
pub fn dequantize_with_dither(
    payload: &QuantizedPayload,
    params: &QuantizerParams,
    dither: &[f64],
) -> Result<Vec<f64>> {
    if !params.active() {
        return Ok(vec![0.0; payload.q]);
    }
    let w = params.width as usize;
    if payload.width != params.width || payload.indices.len() != payload.q * w {
        return Err(Error::Decode(format!(
            "expected {} bits of width {}, got {} bits of width {}",
            payload.q * w,
            params.width,
            payload.indices.len(),
            payload.width
        )));
    }
    if dither.len() != payload.q {
        return Err(Error::Dimension { expected: payload.q, got: dither.len() });
    }
    let top = params.cells() - 1;
    let k_max = params.half_cells as f64;
    Ok(dither
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let idx = (read_bits(&payload.indices, i * w, w) as u64).min(top);
            (idx as f64 - k_max) * params.step - u
        })
        .collect())
}

/// Quantizes `w`, drawing the shared dither from `rng`.
pub fn quantize<R: Rng + ?Sized>(w: &[f64], distortion: f64, source_var: f64, rng: &mut R) -> Result<QuantizedPayload> {
    let params = QuantizerParams::new(distortion, source_var)?;
    let dither = params.sample_dither(w.len(), rng);
    quantize_with_dither(w, &params, &dither)
}

/// Inverse of [`quantize`]; `rng` must be in the state `quantize` started from.
pub fn dequantize<R: Rng + ?Sized>(
    payload: &QuantizedPayload,
    distortion: f64,
    source_var: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let params = QuantizerParams::new(distortion, source_var)?;
    let dither = params.sample_dither(payload.q, rng);
    dequantize_with_dither(payload, &params, &dither)
}

/// Empirical entropy of the per-coordinate indices in bits.
pub fn index_entropy_bits(payload: &QuantizedPayload) -> f64 {
    if payload.width == 0 {
        return 0.0;
    }
    let mut counts = std::collections::HashMap::new();
    for i in 0..payload.q {
        *counts.entry(payload.index(i)).or_insert(0u64) += 1;
    }
    let n = payload.q as f64;
    counts.values().map(|&c| c as f64 / n).map(|p| -p * p.log2()).sum()
}

/// One feedback-codec block of a round's payload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Chunk {
    pub bits: u32,
    pub n_t: usize,
    /// Error budget assigned to this block.
    pub tau: f64,
}

/// Splits `payload_bits` into `ceil(bits / 80)` near-equal chunks, each planned
/// at `tau / #chunks`.
pub fn chunk(payload_bits: u64, budget: &LinkBudget, tau: f64, n_max: usize) -> Result<Vec<Chunk>> {
    if payload_bits == 0 {
        return Ok(Vec::new());
    }
    let count = payload_bits.div_ceil(u64::from(MAX_CHUNK_BITS));
    let base = (payload_bits / count) as u32;
    let extra = payload_bits % count;
    let tau_chunk = tau / count as f64;
    let plan_base = plan_blocklength(base, budget, tau_chunk, n_max)?;
    let plan_big = if extra > 0 { Some(plan_blocklength(base + 1, budget, tau_chunk, n_max)?) } else { None };
    Ok((0..count)
        .map(|i| {
            let (bits, report) = match &plan_big {
                Some(r) if i < extra => (base + 1, r),
                _ => (base, &plan_base),
            };
            Chunk { bits, n_t: report.n_t, tau: tau_chunk }
        })
        .collect())
}

/// Reads chunk payloads as integers in transmission order.
pub fn split_chunks(bits: &BitString, chunks: &[Chunk]) -> Result<Vec<u128>> {
    let total: usize = chunks.iter().map(|c| c.bits as usize).sum();
    if total != bits.len() {
        return Err(Error::Dimension { expected: bits.len(), got: total });
    }
    let mut pos = 0;
    Ok(chunks
        .iter()
        .map(|c| {
            let v = read_bits(bits, pos, c.bits as usize);
            pos += c.bits as usize;
            v
        })
        .collect())
}

/// Inverse of [`split_chunks`].
pub fn join_chunks(values: &[u128], chunks: &[Chunk]) -> Result<BitString> {
    if values.len() != chunks.len() {
        return Err(Error::Dimension { expected: chunks.len(), got: values.len() });
    }
    let mut out = BitString::new();
    for (&v, c) in values.iter().zip(chunks) {
        push_bits(&mut out, v, c.bits as usize);
    }
    Ok(out)
}

fn push_bits(out: &mut BitString, value: u128, width: usize) {
    for b in (0..width).rev() {
        out.push((value >> b) & 1 == 1);
    }
}

fn read_bits(bits: &BitString, start: usize, width: usize) -> u128 {
    bits[start..start + width].iter().fold(0u128, |acc, b| (acc << 1) | u128::from(*b))
}
