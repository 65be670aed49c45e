//! Stationary Gaussian-process speed perturbations with a Matérn covariance.

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::special::{bessel_k, gamma};
use crate::trajectory::SpeedTrajectory;

/// Largest tolerated negative eigenvalue mass of the circulant embedding, relative to its trace.
pub const EMBEDDING_NEGATIVE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternKernel<T> {
    /// C, m/s
    pub amplitude: T,
    /// rho, s
    pub length_scale: T,
    /// nu
    pub smoothness: T,
}

impl<T: Scalar> MaternKernel<T> {
    pub fn new(amplitude: T, length_scale: T, smoothness: T) -> Result<Self> {
        let k = Self {
            amplitude,
            length_scale,
            smoothness,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("amplitude", self.amplitude),
            ("length_scale", self.length_scale),
            ("smoothness", self.smoothness),
        ] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::Domain(format!("Matern {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Autocorrelation R(tau) in (m/s)^2.
    pub fn eval(&self, tau: T) -> T {
        let c2 = self.amplitude * self.amplitude;
        let r = tau.abs();
        if r == T::zero() {
            return c2;
        }
        let nu = self.smoothness;
        let rho = self.length_scale;
        if nu == T::lit(0.5) {
            c2 * (-r / rho).exp()
        } else if nu == T::lit(1.5) {
            let a = T::lit(3.0).sqrt() * r / rho;
            c2 * (T::one() + a) * (-a).exp()
        } else if nu == T::lit(2.5) {
            let a = T::lit(5.0).sqrt() * r / rho;
            c2 * (T::one() + a + a * a / T::lit(3.0)) * (-a).exp()
        } else {
            T::lit(matern_bessel(c2.as_f64(), rho.as_f64(), nu.as_f64(), r.as_f64()))
        }
    }

    /// Two-sided spectral density S(omega) = integral R(tau) exp(-j omega tau) dtau.
    pub fn psd(&self, omega: T) -> T {
        let c2 = (self.amplitude * self.amplitude).as_f64();
        let nu = self.smoothness.as_f64();
        let rho = self.length_scale.as_f64();
        let w = omega.as_f64();
        let lambda = 2.0 * nu / (rho * rho);
        let scale = 2.0 * std::f64::consts::PI.sqrt() * gamma(nu + 0.5) / gamma(nu) * lambda.powf(nu);
        T::lit(c2 * scale * (lambda + w * w).powf(-(nu + 0.5)))
    }
}

/// General-order Matérn form through K_nu; valid for r > 0.
pub fn matern_bessel(c2: f64, rho: f64, nu: f64, r: f64) -> f64 {
    if r == 0.0 {
        return c2;
    }
    let z = (2.0 * nu).sqrt() * r / rho;
    c2 * 2f64.powf(1.0 - nu) / gamma(nu) * z.powf(nu) * bessel_k(nu, z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpConfig<T> {
    pub kernel: MaternKernel<T>,
    /// v*, m/s
    pub mean_speed: T,
    /// s
    pub duration: T,
    /// s
    pub dt: T,
    pub seed: u64,
}

impl<T: Scalar> GpConfig<T> {
    /// Number of samples N = duration / dt.
    pub fn samples(&self) -> Result<usize> {
        self.kernel.validate()?;
        if !(self.dt > T::zero()) || !(self.duration > T::zero()) {
            return Err(Error::Domain("duration and dt must be positive".into()));
        }
        if !(self.mean_speed > T::zero()) {
            return Err(Error::Domain(format!("mean speed must be positive, got {}", self.mean_speed)));
        }
        let ratio = (self.duration / self.dt).as_f64();
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Domain(format!(
                "duration / dt = {ratio} is not a positive integer"
            )));
        }
        Ok(n as usize)
    }
}

/// Draws a zero-mean path of the kernel's process on `n` points spaced `dt`, via circulant
/// embedding on a grid of 2n points.
pub fn sample_perturbation<T: Scalar>(kernel: &MaternKernel<T>, n: usize, dt: T, seed: u64) -> Result<Vec<T>> {
    let eigen = embedding_eigenvalues(kernel, n, dt)?;
    let m = eigen.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inv_m = T::one() / T::lit(m as f64);
    let mut buf: Vec<Complex<T>> = eigen
        .iter()
        .map(|&lam| {
            let a = (lam * inv_m).sqrt();
            let re = T::standard_normal(&mut rng);
            let im = T::standard_normal(&mut rng);
            Complex::new(a * re, a * im)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    Ok(buf.iter().take(n).map(|c| c.re).collect())
}

/// Clipped eigenvalues of the 2n-point circulant embedding of the covariance.
pub fn embedding_eigenvalues<T: Scalar>(kernel: &MaternKernel<T>, n: usize, dt: T) -> Result<Vec<T>> {
    kernel.validate()?;
    if n == 0 {
        return Err(Error::Domain("need at least one sample".into()));
    }
    let m = 2 * n;
    let mut buf: Vec<Complex<T>> = (0..m)
        .map(|k| {
            let lag = k.min(m - k);
            Complex::new(kernel.eval(dt * T::lit(lag as f64)), T::zero())
        })
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let trace: f64 = buf.iter().map(|c| c.re.as_f64()).sum();
    let negative_mass: f64 = buf.iter().map(|c| c.re.as_f64()).filter(|&x| x < 0.0).map(f64::abs).sum();
    let min_eigenvalue = buf.iter().map(|c| c.re.as_f64()).fold(f64::INFINITY, f64::min);
    if negative_mass > EMBEDDING_NEGATIVE_TOLERANCE * trace.abs() {
        return Err(Error::Embedding {
            negative_mass,
            trace,
            min_eigenvalue,
        });
    }
    Ok(buf.iter().map(|c| c.re.max(T::zero())).collect())
}

/// Speed record of a single vehicle: v* plus one GP draw, stored under `vehicle`.
pub fn sample_gp<T: Scalar>(config: &GpConfig<T>, vehicle: usize) -> Result<SpeedTrajectory<T>> {
    let n = config.samples()?;
    let path = sample_perturbation(&config.kernel, n, config.dt, config.seed)?;
    let speeds = path.into_iter().map(|x| x + config.mean_speed).collect();
    SpeedTrajectory::new(T::zero(), config.dt)?.with_speed(vehicle, speeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_kernel() -> MaternKernel<f64> {
        MaternKernel::new(1.0, 5.0, 2.5).unwrap()
    }

    #[test]
    fn kernel_at_zero_is_variance() {
        assert_eq!(reference_kernel().eval(0.0), 1.0);
        let k = MaternKernel::new(2.0, 3.0, 1.7).unwrap();
        assert_eq!(k.eval(0.0), 4.0);
    }

    #[test]
    fn closed_form_matches_bessel_form() {
        // (1 + sqrt5 + 5/3) exp(-sqrt5) at tau = rho
        let expected = (1.0 + 5f64.sqrt() + 5.0 / 3.0) * (-(5f64.sqrt())).exp();
        let k = reference_kernel();
        assert!((k.eval(5.0) - expected).abs() < 1e-15);
        for nu in [0.5, 1.5, 2.5] {
            let k = MaternKernel::new(1.3, 4.0, nu).unwrap();
            for tau in [0.01, 0.7, 4.0, 5.0, 13.0, 40.0] {
                let b = matern_bessel(1.69, 4.0, nu, tau);
                assert!((k.eval(tau) - b).abs() < 1e-10, "nu={nu} tau={tau}");
            }
        }
    }

    #[test]
    fn kernel_is_even() {
        let k = MaternKernel::new(1.0, 5.0, 1.2).unwrap();
        for tau in [0.3, 2.0, 9.0] {
            assert_eq!(k.eval(tau), k.eval(-tau));
            assert_eq!(reference_kernel().eval(tau), reference_kernel().eval(-tau));
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(MaternKernel::new(0.0, 5.0, 2.5).is_err());
        assert!(MaternKernel::new(1.0, -1.0, 2.5).is_err());
        assert!(MaternKernel::new(1.0, 5.0, 0.0).is_err());
    }

    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let n = if n % 2 == 1 { n + 1 } else { n };
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + h * i as f64);
        }
        s * h / 3.0
    }

    #[test]
    fn psd_matches_numeric_fourier_transform() {
        for k in [reference_kernel(), MaternKernel::new(1.0, 5.0, 1.5).unwrap()] {
            for omega in [0.05, 0.2, 0.5, 1.0, 2.0] {
                // even kernel: S(w) = 2 * int_0^200 R(t) cos(w t) dt
                let numeric = 2.0 * simpson(|t| k.eval(t) * (omega * t).cos(), 0.0, 200.0, 400_000);
                let analytic = k.psd(omega);
                assert!(((numeric - analytic) / analytic).abs() < 1e-4, "omega={omega}");
            }
        }
    }

    #[test]
    fn psd_integrates_to_variance() {
        let k = reference_kernel();
        // int_{-inf}^{inf} S dw / 2pi = (1/pi) int_0^inf S dw; substitute w = tan(u)
        let integral = simpson(
            |u: f64| {
                if u >= std::f64::consts::FRAC_PI_2 {
                    0.0
                } else {
                    k.psd(u.tan()) / u.cos().powi(2)
                }
            },
            0.0,
            std::f64::consts::FRAC_PI_2,
            200_000,
        ) / std::f64::consts::PI;
        assert!((integral - 1.0).abs() < 1e-8, "{integral}");
        assert!((0..200).all(|i| k.psd(i as f64 * 0.1) >= 0.0));
    }

    #[test]
    fn sampling_is_reproducible() {
        let cfg = GpConfig {
            kernel: reference_kernel(),
            mean_speed: 25.0,
            duration: 50.0,
            dt: 0.1,
            seed: 7,
        };
        let a = sample_gp(&cfg, 8).unwrap();
        let b = sample_gp(&cfg, 8).unwrap();
        let (a, b) = (a.speed(8).unwrap(), b.speed(8).unwrap());
        assert_eq!(a.len(), 500);
        assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = sample_gp(&GpConfig { seed: 8, ..cfg }, 8).unwrap();
        assert_ne!(a, c.speed(8).unwrap());
    }

    #[test]
    fn degenerate_amplitude_gives_constant_speed() {
        let cfg = GpConfig {
            kernel: MaternKernel::new(1e-12, 5.0, 2.5).unwrap(),
            mean_speed: 25.0,
            duration: 100.0,
            dt: 0.1,
            seed: 3,
        };
        let t = sample_gp(&cfg, 1).unwrap();
        assert!(t.speed(1).unwrap().iter().all(|v: &f64| (v - 25.0).abs() < 1e-9));
    }

    #[test]
    fn non_integer_sample_count_rejected() {
        let cfg = GpConfig {
            kernel: reference_kernel(),
            mean_speed: 25.0,
            duration: 10.05,
            dt: 0.1,
            seed: 0,
        };
        assert!(cfg.samples().is_err());
    }

    #[test]
    fn indefinite_embedding_reports_diagnostic() {
        // A very smooth kernel on a grid far shorter than its correlation length embeds badly.
        let k = MaternKernel::new(1.0, 200.0, 2.5).unwrap();
        match embedding_eigenvalues(&k, 50, 0.1) {
            Err(Error::Embedding { negative_mass, .. }) => assert!(negative_mass > 0.0),
            other => panic!("expected embedding error, got {other:?}"),
        }
    }

    #[test]
    fn single_precision_kernel_agrees() {
        let k32 = MaternKernel::<f32>::new(1.0, 5.0, 2.5).unwrap();
        let k64 = reference_kernel();
        for tau in [0.0f32, 1.0, 5.0, 12.0] {
            assert!((k32.eval(tau) as f64 - k64.eval(tau as f64)).abs() < 1e-6);
        }
    }
}
