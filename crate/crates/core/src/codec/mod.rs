//! Modulo-dithered feedback codec run independently on the two real
//! sub-channels of a quasi-static complex link.

mod block;
mod constellation;
mod schedule;

pub use block::{simulate_blocks, BlockCodec, BlockStats, BlockTranscript, Dither, MessagePair};
pub use constellation::{build_constellation, PamConstellation, MAX_SUBCHANNEL_BITS};
pub use schedule::{build_schedule, SubChannelSchedule};

use rand::Rng;

/// Symmetric modulo onto `[-d/2, d/2)`.
#[inline]
pub fn modulo_d(x: f64, d: f64) -> f64 {
    let r = x - d * (x / d + 0.5).floor();
    // Rounding can land exactly on the excluded upper edge or just below the lower one.
    if r >= 0.5 * d {
        r - d
    } else if r < -0.5 * d {
        r + d
    } else {
        r
    }
}

/// `n` i.i.d. dither values uniform on `[-d/2, d/2)`.
pub fn sample_dither<R: Rng + ?Sized>(rng: &mut R, n: usize, d: f64) -> Vec<f64> {
    (0..n).map(|_| d * (rng.random::<f64>() - 0.5)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Domain};
    use proptest::prelude::*;

    #[test]
    fn modulo_examples() {
        assert!((modulo_d(2.6, 2.0) - 0.6).abs() < 1e-12);
        assert_eq!(modulo_d(-1.0, 2.0), -1.0);
        assert_eq!(modulo_d(1.0, 2.0), -1.0);
        assert_eq!(modulo_d(0.0, 2.0), 0.0);
        assert_eq!(modulo_d(3.0, 3.0), 0.0);
        assert!((modulo_d(0.6 * 5.0, 5.0) + 0.4 * 5.0).abs() < 1e-12);
    }

    #[test]
    fn dither_moments() {
        let mut rng = substream(1, Domain::Test, 0);
        let d = 6.0;
        let v = sample_dither(&mut rng, 200_000, d);
        assert!(v.iter().all(|x| (-3.0..3.0).contains(x)));
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 4.0 * (d * d / 12.0 / n).sqrt());
        assert!((var - d * d / 12.0).abs() / (d * d / 12.0) < 0.01);
    }

    proptest! {
        #[test]
        fn modulo_range_and_periodicity(x in -1e4f64..1e4, d in 0.1f64..50.0, k in -20i32..20) {
            let r = modulo_d(x, d);
            prop_assert!(r >= -0.5 * d && r < 0.5 * d);
            prop_assert_eq!(modulo_d(r, d), r);
            let shifted = modulo_d(x + f64::from(k) * d, d);
            // Equal up to the wrap at the interval edge.
            let diff = (shifted - r).abs();
            prop_assert!(diff < 1e-9 * (1.0 + x.abs()) || (diff - d).abs() < 1e-9 * (1.0 + x.abs()));
        }
    }
}
