//! Expected surrogate energy from spectra: acceleration and speed variances of the truck.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freq::LinkTransfer;
use crate::scalar::Scalar;
use crate::spectral::{ChainSpectrum, SpectralEstimate};

/// Tolerance on the imaginary residue relative to the integral's magnitude.
pub const IMAGINARY_RESIDUE: f64 = 1e-9;

/// Upper end of the finite quadrature for analytic spectra; the remainder is mapped onto (0, 1].
pub const ORACLE_OMEGA_MAX: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    /// m^2/s^2
    pub speed_variance: f64,
    /// m^2/s^4
    pub theta_squared: f64,
    /// m/s
    pub v_star: f64,
    /// t_f - t0, s
    pub horizon: f64,
}

impl MomentSummary {
    pub fn expected_energy(&self) -> f64 {
        expected_energy(self.v_star, self.horizon, self.theta_squared.sqrt())
    }
}

/// E[w-bar] = (t_f - t0) v* theta / sqrt(2 pi).
pub fn expected_energy<T: Scalar>(v_star: T, horizon: T, theta: T) -> T {
    horizon * v_star * theta / T::TAU().sqrt()
}

/// sum_ij T_i(j omega) conj(T_j(j omega)) S_ij at bin `k`.
fn quadratic_form<T: Scalar>(tf: &[(usize, Complex<T>)], spec: &SpectralEstimate<T>, k: usize) -> Result<Complex<T>> {
    let mut acc = Complex::new(T::zero(), T::zero());
    for &(i, ti) in tf {
        for &(j, tj) in tf {
            acc += ti * tj.conj() * spec.require(i, j)?[k];
        }
    }
    Ok(acc)
}

/// Weight of bin `k` in the one-sided periodic trapezoid: half at DC and at an exact Nyquist bin.
pub fn bin_weight<T: Scalar>(spec: &SpectralEstimate<T>, k: usize) -> T {
    let last = spec.omegas.len() - 1;
    if k == 0 || (k == last && spec.has_nyquist_bin()) {
        T::lit(0.5)
    } else {
        T::one()
    }
}

fn spectral_moment<T: Scalar>(lt: &LinkTransfer<T>, spec: &SpectralEstimate<T>, power: i32) -> Result<T> {
    let indices: Vec<usize> = lt.links.iter().map(|l| l.0).collect();
    spec.check_hermitian(&indices, T::lit(IMAGINARY_RESIDUE))?;
    let mut total = Complex::new(T::zero(), T::zero());
    let mut magnitude = T::zero();
    for (k, &w) in spec.omegas.iter().enumerate() {
        if power > 0 && w == T::zero() {
            continue;
        }
        let tf = indices
            .iter()
            .map(|&i| Ok((i, lt.response(i, w)?)))
            .collect::<Result<Vec<_>>>()?;
        let term = quadratic_form(&tf, spec, k)? * (bin_weight(spec, k) * w.powi(power));
        magnitude += term.norm();
        total += term;
    }
    check_residue(total, magnitude)?;
    // One-sided values carry twice the density: (1/pi) int S dw = (1/2pi) int S_one dw.
    Ok(total.re * spec.delta_omega() / T::TAU())
}

fn check_residue<T: Scalar>(total: Complex<T>, magnitude: T) -> Result<()> {
    if total.im.abs() > T::lit(IMAGINARY_RESIDUE) * magnitude.max(T::min_positive_value()) {
        return Err(Error::Input(format!(
            "spectral integral has imaginary residue {} against magnitude {}",
            total.im, magnitude
        )));
    }
    Ok(())
}

/// Acceleration variance (1/pi) sum_ij int_0^inf w^2 T_i T_j* S_ij dw on the estimate's grid.
pub fn theta_squared<T: Scalar>(lt: &LinkTransfer<T>, spec: &SpectralEstimate<T>) -> Result<T> {
    spectral_moment(lt, spec, 2)
}

/// Speed-perturbation variance, the w^0 analogue of `theta_squared`.
pub fn speed_variance<T: Scalar>(lt: &LinkTransfer<T>, spec: &SpectralEstimate<T>) -> Result<T> {
    spectral_moment(lt, spec, 0)
}

const GL_NODES: [f64; 4] = [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
const GL_WEIGHTS: [f64; 4] = [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];

/// Composite 8-point Gauss-Legendre rule on `panels` equal panels.
fn gauss_legendre(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let half = 0.5 * h;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let mut s = 0.0;
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            s += w * (f(mid - half * x) + f(mid + half * x));
        }
        total += s * half;
    }
    total
}

/// Doubles the panel count until successive estimates agree to `tol` relative.
fn adaptive_quadrature(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let mut panels = 128;
    let mut prev = gauss_legendre(f, a, b, panels);
    while panels < 1 << 16 {
        panels *= 2;
        let cur = gauss_legendre(f, a, b, panels);
        if (cur - prev).abs() <= tol * cur.abs().max(f64::MIN_POSITIVE) {
            return cur;
        }
        prev = cur;
    }
    prev
}

/// (1/pi) int_0^inf w^power sum_ij T_i T_j* S_ij dw for analytic chain spectra: adaptive
/// quadrature on [0, 20] rad/s plus the tail mapped by w = 20/u onto u in (0, 1].
fn oracle_moment(lt: &LinkTransfer<f64>, chain: &ChainSpectrum, power: i32, tol: f64) -> Result<f64> {
    let indices: Vec<usize> = lt.links.iter().map(|l| l.0).collect();
    let integrand = |w: f64| -> Result<f64> {
        if power > 0 && w == 0.0 {
            return Ok(0.0);
        }
        let mut g = Complex::new(0.0, 0.0);
        for &i in &indices {
            g += lt.response(i, w)? * chain.from_lead(i, w)?;
        }
        Ok(g.norm_sqr() * chain.kernel.psd(w) * w.powi(power))
    };
    // The sum over the Hermitian matrix factorizes as |sum_i T_i H_i|^2 S_lead, real by construction.
    let failure = std::cell::RefCell::new(None);
    let f = |w: f64| match integrand(w) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            0.0
        }
    };
    let head = adaptive_quadrature(&f, 0.0, ORACLE_OMEGA_MAX, tol);
    let tail_f = |u: f64| f(ORACLE_OMEGA_MAX / u) * (ORACLE_OMEGA_MAX / (u * u));
    let tail = adaptive_quadrature(&tail_f, 0.0, 1.0, tol);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok((head + tail) / std::f64::consts::PI)
}

/// Acceleration variance under the analytic chain spectra.
pub fn theta_squared_oracle(lt: &LinkTransfer<f64>, chain: &ChainSpectrum) -> Result<f64> {
    oracle_moment(lt, chain, 2, 1e-10)
}

/// Speed-perturbation variance under the analytic chain spectra.
pub fn speed_variance_oracle(lt: &LinkTransfer<f64>, chain: &ChainSpectrum) -> Result<f64> {
    oracle_moment(lt, chain, 0, 1e-10)
}

/// Both moments together with the horizon and equilibrium speed.
pub fn oracle_moments(lt: &LinkTransfer<f64>, chain: &ChainSpectrum, v_star: f64, horizon: f64) -> Result<MomentSummary> {
    Ok(MomentSummary {
        speed_variance: speed_variance_oracle(lt, chain)?,
        theta_squared: theta_squared_oracle(lt, chain)?,
        v_star,
        horizon,
    })
}
