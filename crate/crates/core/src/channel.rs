//! Quasi-static complex fading duplex channel with an eavesdropper tap.
//!
//! The four coefficients are drawn once per round and held fixed for every
//! channel use of that round. Each complex channel splits into two real
//! sub-channels by derotating with the known coefficient.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::analysis::LinkBudget;
use crate::error::{domain, Result};

/// One draw of the forward, feedback and eavesdropper coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelRealization {
    /// Edge server to cloud server.
    pub h: Complex64,
    /// Cloud server to edge server (feedback).
    pub h_fb: Complex64,
    /// Edge server to eavesdropper.
    pub g: Complex64,
    /// Cloud server to eavesdropper.
    pub g_fb: Complex64,
}

/// Noise variances of the forward, feedback and eavesdropper receivers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseSpec {
    pub sigma1_2: f64,
    pub sigma2_2: f64,
    pub sigmae_2: f64,
}

impl NoiseSpec {
    pub fn new(sigma1_2: f64, sigma2_2: f64, sigmae_2: f64) -> Result<Self> {
        for (name, v) in [("sigma1_2", sigma1_2), ("sigma2_2", sigma2_2), ("sigmae_2", sigmae_2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(NoiseSpec { sigma1_2, sigma2_2, sigmae_2 })
    }
}

/// Draws `CN(0, var)`: independent real and imaginary parts of variance `var / 2`.
pub fn complex_gaussian<R: Rng + ?Sized>(var: f64, rng: &mut R) -> Complex64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

impl ChannelRealization {
    /// Rayleigh draw: every coefficient i.i.d. `CN(0, 1)`.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        ChannelRealization {
            h: complex_gaussian(1.0, rng),
            h_fb: complex_gaussian(1.0, rng),
            g: complex_gaussian(1.0, rng),
            g_fb: complex_gaussian(1.0, rng),
        }
    }

    /// All four coefficients equal to one.
    pub fn unit() -> Self {
        let one = Complex64::new(1.0, 0.0);
        ChannelRealization { h: one, h_fb: one, g: one, g_fb: one }
    }

    /// `Y = h X + eta_1`.
    pub fn forward_use<R: Rng + ?Sized>(&self, x: Complex64, noise: &NoiseSpec, rng: &mut R) -> Complex64 {
        self.h * x + complex_gaussian(noise.sigma1_2, rng)
    }

    /// `Y_fb = h_fb X_fb + eta_2`.
    pub fn feedback_use<R: Rng + ?Sized>(&self, x_fb: Complex64, noise: &NoiseSpec, rng: &mut R) -> Complex64 {
        self.h_fb * x_fb + complex_gaussian(noise.sigma2_2, rng)
    }

    /// `Z = g X + g_fb X_fb + eta_e`; pass `x_fb = 0` on the last use of a block.
    pub fn eve_use<R: Rng + ?Sized>(&self, x: Complex64, x_fb: Complex64, noise: &NoiseSpec, rng: &mut R) -> Complex64 {
        self.g * x + self.g_fb * x_fb + complex_gaussian(noise.sigmae_2, rng)
    }

    /// Link budget of this realization for forward power `p` and feedback power `p_fb`.
    pub fn budget(&self, p: f64, p_fb: f64, noise: &NoiseSpec) -> Result<LinkBudget> {
        LinkBudget::new(
            p / noise.sigma1_2,
            p_fb / noise.sigma2_2,
            self.h.norm_sqr(),
            self.h_fb.norm_sqr(),
            self.g.norm_sqr(),
            noise.sigmae_2,
        )
    }
}

/// Undoes a known complex gain, returning the two real sub-channel outputs
/// `(Re(conj(c) y) / |c|^2, Im(conj(c) y) / |c|^2)`.
pub fn derotate(y: Complex64, coeff: Complex64) -> Result<(f64, f64)> {
    Ok(Derotator::new(coeff)?.apply(y))
}

/// Precomputed `conj(c) / |c|^2` for repeated derotation by the same coefficient.
#[derive(Debug, Clone, Copy)]
pub struct Derotator {
    factor: Complex64,
}

impl Derotator {
    pub fn new(coeff: Complex64) -> Result<Self> {
        let m2 = coeff.norm_sqr();
        if !(m2 > 0.0 && m2.is_finite()) {
            return Err(domain("cannot derotate by a zero coefficient"));
        }
        Ok(Derotator { factor: coeff.conj() / m2 })
    }

    #[inline]
    pub fn apply(&self, y: Complex64) -> (f64, f64) {
        let r = self.factor * y;
        (r.re, r.im)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Domain};
    use proptest::prelude::*;

    const N: usize = 100_000;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    fn noise(s1: f64, s2: f64, se: f64) -> NoiseSpec {
        NoiseSpec::new(s1, s2, se).unwrap()
    }

    #[test]
    fn realization_is_deterministic_per_stream() {
        let a = ChannelRealization::sample(&mut substream(5, Domain::Realization, 9));
        let b = ChannelRealization::sample(&mut substream(5, Domain::Realization, 9));
        assert_eq!(a, b);
    }

    #[test]
    fn rayleigh_statistics() {
        let mut rng = substream(1, Domain::Test, 0);
        let draws: Vec<ChannelRealization> = (0..N).map(|_| ChannelRealization::sample(&mut rng)).collect();
        let h2: Vec<f64> = draws.iter().map(|r| r.h.norm_sqr()).collect();
        assert!((mean_var(&h2).0 - 1.0).abs() < 0.02);
        let re: Vec<f64> = draws.iter().map(|r| r.g.re).collect();
        let im: Vec<f64> = draws.iter().map(|r| r.g.im).collect();
        let (mr, vr) = mean_var(&re);
        let (mi, vi) = mean_var(&im);
        let cov = re.iter().zip(&im).map(|(a, b)| (a - mr) * (b - mi)).sum::<f64>() / (N as f64 - 1.0);
        assert!((cov / (vr * vi).sqrt()).abs() < 0.02);
        assert!((vr - 0.5).abs() < 0.015 && (vi - 0.5).abs() < 0.015);
    }

    #[test]
    fn forward_noise_free_limit_and_variance() {
        let mut rng = substream(2, Domain::Test, 0);
        let r = ChannelRealization::unit();
        let x = Complex64::new(0.3, -1.2);
        let y = r.forward_use(x, &noise(1e-20, 1.0, 1.0), &mut rng);
        assert!((y - x).norm() < 1e-9);

        let n = noise(2.0, 1.0, 1.0);
        let ys: Vec<f64> = (0..N).map(|_| r.forward_use(Complex64::new(0.0, 0.0), &n, &mut rng).re).collect();
        assert!((mean_var(&ys).1 / 1.0 - 1.0).abs() < 0.03);
    }

    #[test]
    fn forward_conditional_mean_is_gain_times_input() {
        let mut rng = substream(3, Domain::Test, 0);
        let r = ChannelRealization { h: Complex64::new(0.6, -0.8), ..ChannelRealization::unit() };
        let n = noise(1.0, 1.0, 1.0);
        let x = Complex64::new(2.0, 1.0);
        let ys: Vec<Complex64> = (0..N).map(|_| r.forward_use(x, &n, &mut rng)).collect();
        let expect = r.h * x;
        let re: Vec<f64> = ys.iter().map(|y| y.re).collect();
        let im: Vec<f64> = ys.iter().map(|y| y.im).collect();
        let se = (0.5 / N as f64).sqrt();
        assert!((mean_var(&re).0 - expect.re).abs() < 3.0 * se * 1.5);
        assert!((mean_var(&im).0 - expect.im).abs() < 3.0 * se * 1.5);
    }

    #[test]
    fn feedback_rotation_and_variance() {
        let mut rng = substream(4, Domain::Test, 0);
        let r = ChannelRealization { h_fb: Complex64::new(0.0, 1.0), ..ChannelRealization::unit() };
        let y = r.feedback_use(Complex64::new(1.0, 0.0), &noise(1.0, 1e-20, 1.0), &mut rng);
        assert!((y - Complex64::new(0.0, 1.0)).norm() < 1e-9);

        let n = noise(1.0, 3.0, 1.0);
        let x = Complex64::new(0.5, 0.5);
        let d: Vec<f64> = (0..N).map(|_| (r.feedback_use(x, &n, &mut rng) - r.h_fb * x).im).collect();
        assert!((mean_var(&d).1 / 1.5 - 1.0).abs() < 0.03);

        let a = r.feedback_use(x, &n, &mut substream(4, Domain::ChannelNoise, 1));
        let b = r.feedback_use(x, &n, &mut substream(4, Domain::ChannelNoise, 1));
        assert_eq!(a, b);
    }

    #[test]
    fn eavesdropper_superposition() {
        let mut rng = substream(6, Domain::Test, 0);
        let n = noise(1.0, 1.0, 1.0);
        let zero = Complex64::new(0.0, 0.0);
        let off = ChannelRealization { g: zero, g_fb: zero, ..ChannelRealization::unit() };
        let zs: Vec<f64> = (0..10_000)
            .map(|_| off.eve_use(Complex64::new(5.0, 5.0), Complex64::new(3.0, 0.0), &n, &mut rng).re)
            .collect();
        assert!(mean_var(&zs).0.abs() < 3.0 * (0.5f64 / 10_000.0).sqrt());

        let clean = ChannelRealization { g_fb: zero, ..ChannelRealization::unit() };
        let x = Complex64::new(0.7, 0.1);
        let z = clean.eve_use(x, Complex64::new(9.0, 9.0), &noise(1.0, 1.0, 1e-20), &mut rng);
        assert!((z - x).norm() < 1e-9);

        let r = ChannelRealization {
            g: Complex64::new(0.5, 0.2),
            g_fb: Complex64::new(-0.3, 0.9),
            ..ChannelRealization::unit()
        };
        let (x, xf) = (Complex64::new(1.0, -2.0), Complex64::new(0.4, 0.4));
        let zs: Vec<Complex64> = (0..10_000).map(|_| r.eve_use(x, xf, &n, &mut rng)).collect();
        let m = zs.iter().sum::<Complex64>() / 10_000.0;
        let expect = r.g * x + r.g_fb * xf;
        let se = (0.5f64 / 10_000.0).sqrt();
        assert!((m.re - expect.re).abs() < 3.0 * se * 1.5 && (m.im - expect.im).abs() < 3.0 * se * 1.5);
    }

    #[test]
    fn derotate_examples() {
        let y = Complex64::new(1.5, -0.25);
        assert_eq!(derotate(y, Complex64::new(1.0, 0.0)).unwrap(), (1.5, -0.25));
        let (a, b) = derotate(Complex64::new(2.0, 3.0), Complex64::new(0.0, 1.0)).unwrap();
        assert!((a - 3.0).abs() < 1e-15 && (b + 2.0).abs() < 1e-15);
        assert!(derotate(y, Complex64::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn derotated_noise_variance_halves() {
        let mut rng = substream(7, Domain::Test, 0);
        let h = Complex64::new(0.3, 0.4);
        let d = Derotator::new(h).unwrap();
        let (re, im): (Vec<f64>, Vec<f64>) = (0..N).map(|_| d.apply(complex_gaussian(1.0, &mut rng))).unzip();
        let target = 1.0 / (2.0 * h.norm_sqr());
        assert!((mean_var(&re).1 / target - 1.0).abs() < 0.03);
        assert!((mean_var(&im).1 / target - 1.0).abs() < 0.03);
    }

    proptest! {
        #[test]
        fn derotation_is_exact_without_noise(
            xr in -10.0f64..10.0, xi in -10.0f64..10.0,
            cr in -3.0f64..3.0, ci in -3.0f64..3.0,
        ) {
            prop_assume!(cr * cr + ci * ci > 1e-3);
            let c = Complex64::new(cr, ci);
            let (a, b) = derotate(c * Complex64::new(xr, xi), c).unwrap();
            prop_assert!((a - xr).abs() < 1e-9 && (b - xi).abs() < 1e-9);
        }
    }
}
