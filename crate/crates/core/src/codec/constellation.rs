use serde::Serialize;

use crate::error::{domain, Result};

/// Largest payload one real sub-channel may carry. Beyond this the final
/// estimation error falls toward binary64 resolution of the PAM centers.
pub const MAX_SUBCHANNEL_BITS: u32 = 40;

const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// Equally spaced PAM centers on `[-sqrt(3), sqrt(3)]`, one per message.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PamConstellation {
    bits: u32,
    m_levels: u64,
    half_width: f64,
}

impl PamConstellation {
    pub fn new(bits: u32) -> Result<Self> {
        if bits > MAX_SUBCHANNEL_BITS {
            return Err(domain(format!("{bits} bits exceed the per-sub-channel cap of {MAX_SUBCHANNEL_BITS}")));
        }
        let m_levels = 1u64 << bits;
        Ok(PamConstellation { bits, m_levels, half_width: SQRT_3 / m_levels as f64 })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn m_levels(&self) -> u64 {
        self.m_levels
    }

    /// Half the width of one decision interval, `sqrt(3) / m`.
    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn center(&self, index: u64) -> f64 {
        debug_assert!(index < self.m_levels);
        -SQRT_3 + (2 * index + 1) as f64 * self.half_width
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.m_levels).map(|k| self.center(k)).collect()
    }

    /// Index of the sub-interval containing `x`, clamped to the outer cells.
    pub fn nearest(&self, x: f64) -> u64 {
        let cell = ((x + SQRT_3) / (2.0 * self.half_width)).floor();
        if cell.is_nan() || cell < 0.0 {
            0
        } else {
            (cell as u64).min(self.m_levels - 1)
        }
    }

    /// Second moment of a uniformly chosen center, `(m^2 - 1) / m^2`.
    pub fn second_moment(&self) -> f64 {
        let m = self.m_levels as f64;
        (m * m - 1.0) / (m * m)
    }
}

pub fn build_constellation(payload_bits_sub: u32) -> Result<PamConstellation> {
    PamConstellation::new(payload_bits_sub)
}
