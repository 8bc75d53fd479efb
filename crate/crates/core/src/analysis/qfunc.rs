//! Gaussian tail probability and its inverse.

use std::f64::consts::{PI, SQRT_2};

use statrs::function::erf::erfc;

use crate::error::{domain, Result};

/// Upper tail of the standard normal distribution, `P(N(0,1) > x)`.
pub fn q_func(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Acklam's rational approximation of the standard normal quantile.
fn normal_quantile_seed(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] =
        [7.784_695_709_041_462e-3, 3.224_671_290_700_398e-1, 2.445_134_137_142_996, 3.754_408_661_907_416];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    }
}

fn rel_err(x: f64, p: f64) -> f64 {
    ((q_func(x) - p) / p).abs()
}

/// Inverse of [`q_func`]: the `x` with `Q(x) = p`.
///
/// A rational seed is refined by Halley steps; if the refined point still
/// misses the target, the root is bracketed and bisected.
pub fn q_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain(format!("q_inv requires 0 < p < 1, got {p}")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let mut x = -normal_quantile_seed(p);
    for _ in 0..4 {
        let density = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
        if density == 0.0 {
            break;
        }
        let v = (q_func(x) - p) / density;
        x += v / (1.0 - 0.5 * x * v);
        if rel_err(x, p) < 1e-14 {
            return Ok(x);
        }
    }
    if rel_err(x, p) < 1e-12 {
        return Ok(x);
    }
    // Bisection fallback on a bracket around the refined point.
    let (mut lo, mut hi) = (x - 1.0, x + 1.0);
    while q_func(lo) < p {
        lo -= 1.0;
    }
    while q_func(hi) > p {
        hi += 1.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if q_func(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * mid.abs().max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
