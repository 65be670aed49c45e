//! Closed-loop transfer functions, characteristic function and plant-stability region.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::traffic::ControllerParams;

/// Linearized closed loop of one controller and actuation delay.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkTransfer<T> {
    pub alpha: T,
    pub kappa: T,
    /// actuation delay, s
    pub sigma: T,
    /// (vehicle, beta_i, sigma_i), vehicle 1 first
    pub links: Vec<(usize, T, T)>,
}

impl<T: Scalar> LinkTransfer<T> {
    pub fn new(ctrl: &ControllerParams<T>, sigma: T) -> Result<Self> {
        ctrl.validate()?;
        Ok(Self {
            alpha: ctrl.alpha,
            kappa: ctrl.policy.kappa,
            sigma,
            links: ctrl.links.iter().map(|(&i, l)| (i, l.gain, l.delay)).collect(),
        })
    }

    pub fn gain_sum(&self) -> T {
        self.links.iter().map(|l| l.1).sum()
    }

    /// D(s) = s^2 e^{s sigma} + (alpha + sum beta) s + alpha kappa.
    pub fn char_fn(&self, s: Complex<T>) -> Complex<T> {
        let b = self.alpha + self.gain_sum();
        s * s * (s * self.sigma).exp() + s * b + self.alpha * self.kappa
    }

    /// dD/ds.
    pub fn char_fn_derivative(&self, s: Complex<T>) -> Complex<T> {
        let e = (s * self.sigma).exp();
        s * e * T::lit(2.0) + s * s * e * self.sigma + (self.alpha + self.gain_sum())
    }

    /// T_i(s); vehicle 1 carries the headway path.
    pub fn link_tf(&self, vehicle: usize, s: Complex<T>) -> Result<Complex<T>> {
        let &(_, beta, delay) = self
            .links
            .iter()
            .find(|l| l.0 == vehicle)
            .ok_or_else(|| Error::Input(format!("vehicle {vehicle} is not in the connected set")))?;
        let e = (s * self.sigma).exp();
        let d = s * s * e + s * (self.alpha + self.gain_sum()) + self.alpha * self.kappa;
        let scale = (s * s * e).norm() + s.norm() * (self.alpha + self.gain_sum()).abs() + (self.alpha * self.kappa).abs();
        if d.norm() <= T::lit(1e-13) * scale {
            return Err(Error::Pole {
                re: s.re.as_f64(),
                im: s.im.as_f64(),
            });
        }
        let num = if vehicle == 1 {
            s * beta + self.alpha * self.kappa
        } else {
            s * beta * (-s * delay).exp()
        };
        Ok(num / d)
    }

    /// T_i(j omega).
    pub fn response(&self, vehicle: usize, omega: T) -> Result<Complex<T>> {
        self.link_tf(vehicle, Complex::new(T::zero(), omega))
    }
}

/// Sum-of-gains interval guaranteeing plant stability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityRegion {
    pub alpha: f64,
    pub sigma: f64,
    pub kappa: f64,
    pub omega_low: f64,
    pub omega_high: f64,
    /// inclusive
    pub lower: f64,
    /// exclusive
    pub upper: f64,
}

impl StabilityRegion {
    pub fn contains(&self, gain_sum: f64) -> bool {
        self.lower <= gain_sum && gain_sum < self.upper
    }

    /// Signed distance to the nearest bound, positive inside.
    pub fn margin(&self, gain_sum: f64) -> f64 {
        (gain_sum - self.lower).min(self.upper - gain_sum)
    }
}

const ROOT_TOLERANCE: f64 = 1e-10;

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut f_lo = f(lo);
    while hi - lo > ROOT_TOLERANCE * 1e-3 {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
        if mid == lo && mid == hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Roots of alpha kappa = omega^2 cos(omega sigma) on (0, pi/(2 sigma)) and the resulting bounds
/// on the sum of gains.
pub fn stability_region(alpha: f64, kappa: f64, sigma: f64) -> Result<StabilityRegion> {
    if !(alpha > 0.0 && kappa > 0.0 && sigma > 0.0) || !(alpha.is_finite() && kappa.is_finite() && sigma.is_finite()) {
        return Err(Error::Domain(format!(
            "stability region needs alpha, kappa, sigma > 0 (got {alpha}, {kappa}, {sigma})"
        )));
    }
    let target = alpha * kappa;
    let g = |w: f64| w * w * (w * sigma).cos();
    // Peak of x^2 cos x on (0, pi/2) where x tan x = 2.
    let x_peak = bisect(0.5, 1.5, |x| x * x.tan() - 2.0);
    let w_peak = x_peak / sigma;
    let g_max = g(w_peak);
    if target >= g_max {
        return Err(Error::Infeasible {
            target,
            max_value: g_max,
        });
    }
    let omega_low = bisect(0.0, w_peak, |w| g(w) - target);
    let omega_high = bisect(w_peak, std::f64::consts::FRAC_PI_2 / sigma, |w| g(w) - target);
    Ok(StabilityRegion {
        alpha,
        sigma,
        kappa,
        omega_low,
        omega_high,
        lower: omega_low * (omega_low * sigma).sin() - alpha,
        upper: omega_high * (omega_high * sigma).sin() - alpha,
    })
}

/// Plant-stability test for a gain sum; false whenever the region is empty or undefined.
pub fn is_plant_stable(alpha: f64, kappa: f64, sigma: f64, gain_sum: f64) -> bool {
    stability_region(alpha, kappa, sigma).is_ok_and(|r| r.contains(gain_sum))
}

/// Rectangle in the complex plane searched for characteristic roots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Default for SearchBox {
    /// Re in [-5, 2], Im in [0, 20]; the lower edge sits slightly below the real axis so real
    /// roots are interior.
    fn default() -> Self {
        Self {
            re_min: -5.0,
            re_max: 2.0,
            im_min: -0.0371,
            im_max: 20.0,
        }
    }
}

type C64 = Complex<f64>;

struct RootFinder<'a> {
    lt: &'a LinkTransfer<f64>,
}

impl RootFinder<'_> {
    fn d(&self, s: C64) -> C64 {
        self.lt.char_fn(s)
    }

    /// Change in arg D along the segment a -> b, refined until each sub-step turns < pi/8.
    fn arg_change(&self, a: C64, b: C64) -> Result<f64> {
        const PIECES: usize = 64;
        let mut total = 0.0;
        let mut prev_s = a;
        let mut prev = self.d(a);
        for k in 1..=PIECES {
            let s = a + (b - a) * (k as f64 / PIECES as f64);
            let cur = self.d(s);
            total += self.refine(prev_s, prev, s, cur, 0)?;
            prev_s = s;
            prev = cur;
        }
        Ok(total)
    }

    fn refine(&self, a: C64, fa: C64, b: C64, fb: C64, depth: usize) -> Result<f64> {
        if fa.norm() == 0.0 || fb.norm() == 0.0 {
            return Err(Error::RootCount(format!("root on the contour near {a}")));
        }
        let step = (fb / fa).arg();
        if step.abs() < std::f64::consts::FRAC_PI_8 {
            return Ok(step);
        }
        if depth > 40 {
            return Err(Error::RootCount(format!("argument unresolved between {a} and {b}")));
        }
        let m = (a + b) * 0.5;
        let fm = self.d(m);
        Ok(self.refine(a, fa, m, fm, depth + 1)? + self.refine(m, fm, b, fb, depth + 1)?)
    }

    fn count(&self, bx: &SearchBox) -> Result<i64> {
        let c = [
            C64::new(bx.re_min, bx.im_min),
            C64::new(bx.re_max, bx.im_min),
            C64::new(bx.re_max, bx.im_max),
            C64::new(bx.re_min, bx.im_max),
        ];
        let mut total = 0.0;
        for k in 0..4 {
            total += self.arg_change(c[k], c[(k + 1) % 4])?;
        }
        let n = total / std::f64::consts::TAU;
        let rounded = n.round();
        if (n - rounded).abs() > 1e-6 {
            return Err(Error::RootCount(format!("non-integer winding {n} on {bx:?}")));
        }
        Ok(rounded as i64)
    }

    fn newton(&self, mut s: C64) -> Option<C64> {
        for _ in 0..100 {
            let d = self.d(s);
            let dd = self.lt.char_fn_derivative(s);
            if dd.norm() == 0.0 {
                return None;
            }
            let step = d / dd;
            s -= step;
            if !s.re.is_finite() || !s.im.is_finite() {
                return None;
            }
            if step.norm() <= 1e-15 * s.norm().max(1.0) {
                return Some(s);
            }
        }
        None
    }

    fn search(&self, bx: SearchBox, count: i64, roots: &mut Vec<C64>, depth: usize) -> Result<()> {
        if count == 0 {
            return Ok(());
        }
        let w = bx.re_max - bx.re_min;
        let h = bx.im_max - bx.im_min;
        if count == 1 && w.max(h) < 0.25 || w.max(h) < 1e-9 || depth > 60 {
            let center = C64::new(bx.re_min + 0.5 * w, bx.im_min + 0.5 * h);
            let slack = 0.5 * w.max(h);
            let root = match self.newton(center) {
                Some(r)
                    if r.re >= bx.re_min - slack
                        && r.re <= bx.re_max + slack
                        && r.im >= bx.im_min - slack
                        && r.im <= bx.im_max + slack =>
                {
                    r
                }
                _ if w.max(h) >= 1e-9 && depth <= 60 => return self.split(bx, count, roots, depth),
                _ => center,
            };
            for _ in 0..count {
                roots.push(root);
            }
            return Ok(());
        }
        self.split(bx, count, roots, depth)
    }

    fn split(&self, bx: SearchBox, count: i64, roots: &mut Vec<C64>, depth: usize) -> Result<()> {
        // Off-center cut so that cuts rarely pass through a root.
        const CUT: f64 = 0.4987;
        let halves = if bx.re_max - bx.re_min >= bx.im_max - bx.im_min {
            let m = bx.re_min + CUT * (bx.re_max - bx.re_min);
            [SearchBox { re_max: m, ..bx }, SearchBox { re_min: m, ..bx }]
        } else {
            let m = bx.im_min + CUT * (bx.im_max - bx.im_min);
            [SearchBox { im_max: m, ..bx }, SearchBox { im_min: m, ..bx }]
        };
        let counts = [self.count(&halves[0])?, self.count(&halves[1])?];
        if counts[0] + counts[1] != count || counts.iter().any(|&c| c < 0) {
            return Err(Error::RootCount(format!(
                "children count {counts:?} disagree with parent {count} on {bx:?}"
            )));
        }
        for (b, c) in halves.into_iter().zip(counts) {
            self.search(b, c, roots, depth + 1)?;
        }
        Ok(())
    }
}

/// Characteristic roots inside `bx`, located by winding-number subdivision and Newton polishing.
pub fn characteristic_roots(lt: &LinkTransfer<f64>, bx: &SearchBox) -> Result<Vec<C64>> {
    let finder = RootFinder { lt };
    let total = finder.count(bx)?;
    if total < 0 {
        return Err(Error::RootCount(format!("negative winding {total}")));
    }
    let mut roots = Vec::with_capacity(total as usize);
    finder.search(*bx, total, &mut roots, 0)?;
    Ok(roots)
}

/// Largest real part among characteristic roots inside `bx`; negative infinity if none.
pub fn rightmost_root_oracle(lt: &LinkTransfer<f64>, bx: &SearchBox) -> Result<f64> {
    Ok(characteristic_roots(lt, bx)?
        .iter()
        .map(|r| r.re)
        .fold(f64::NEG_INFINITY, f64::max))
}
