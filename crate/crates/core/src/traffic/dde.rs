//! Fixed-step RK4 for delay differential equations with constant lags.
//!
//! Lags are whole multiples of the step. States and derivatives at past grid points live in a
//! ring buffer; values at half steps come from cubic Hermite interpolation between grid points.
//! Times before the start read a constant pre-history.

use crate::scalar::Scalar;

/// Right-hand side of a delay system.
pub trait DelaySystem<T: Scalar> {
    fn dim(&self) -> usize;

    /// Writes dx/dt at time `t` for stage state `x`. Delayed states come from `past`.
    fn rhs(&self, t: T, x: &[T], past: &Past<'_, T>, dx: &mut [T]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Start,
    Mid,
    End,
}

impl Stage {
    #[inline]
    fn half_offset(self) -> usize {
        match self {
            Stage::Start => 0,
            Stage::Mid => 1,
            Stage::End => 2,
        }
    }
}

#[derive(Debug, Clone)]
struct History<T> {
    dim: usize,
    capacity: usize,
    states: Vec<T>,
    derivs: Vec<T>,
    /// left-limit derivatives at nodes 1..=max_lag, where delayed inputs leave the pre-history
    left: Vec<T>,
    left_nodes: usize,
    prehistory: Vec<T>,
}

impl<T: Scalar> History<T> {
    #[inline]
    fn state(&self, k: isize, j: usize) -> T {
        if k < 0 {
            self.prehistory[j]
        } else {
            self.states[(k as usize % self.capacity) * self.dim + j]
        }
    }

    #[inline]
    fn deriv(&self, k: isize, j: usize) -> T {
        if k < 0 {
            T::zero()
        } else {
            self.derivs[(k as usize % self.capacity) * self.dim + j]
        }
    }

    /// Derivative at node `k` as seen from the interval ending there.
    #[inline]
    fn deriv_left(&self, k: isize, j: usize) -> T {
        let k = k as usize;
        if k >= 1 && k * self.dim <= self.left.len() {
            self.left[(k - 1) * self.dim + j]
        } else {
            self.deriv(k as isize, j)
        }
    }

    fn store(&mut self, k: usize, x: &[T], into_states: bool) {
        let base = (k % self.capacity) * self.dim;
        let target = if into_states { &mut self.states } else { &mut self.derivs };
        target[base..base + self.dim].copy_from_slice(x);
    }
}

/// View of the solution history from the current RK stage.
pub struct Past<'a, T> {
    history: &'a History<T>,
    step: usize,
    stage: Stage,
    x: &'a [T],
    h: T,
}

impl<T: Scalar> Past<'_, T> {
    /// Component `j` of the state `lag` steps before the current stage time.
    #[inline]
    pub fn state(&self, lag: usize, j: usize) -> T {
        if lag == 0 {
            return self.x[j];
        }
        let n = self.step as isize;
        let lag = lag as isize;
        match self.stage {
            Stage::Start => self.history.state(n - lag, j),
            Stage::End => self.history.state(n + 1 - lag, j),
            Stage::Mid => {
                let a = n - lag;
                if a < 0 {
                    return self.history.prehistory[j];
                }
                let (x0, x1) = (self.history.state(a, j), self.history.state(a + 1, j));
                let (d0, d1) = (self.history.deriv(a, j), self.history.deriv_left(a + 1, j));
                T::lit(0.5) * (x0 + x1) + self.h * T::lit(0.125) * (d0 - d1)
            }
        }
    }

    /// Index of (stage time - lag steps) on the half-step grid, `None` before the start.
    ///
    /// A step that ends exactly where the input begins lies wholly in the pre-history, so its
    /// end stage sees the left limit; inputs may jump there.
    #[inline]
    pub fn half_index(&self, lag: usize) -> Option<usize> {
        match (2 * self.step + self.stage.half_offset()).checked_sub(2 * lag) {
            Some(0) if self.stage == Stage::End => None,
            k => k,
        }
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn step_index(&self) -> usize {
        self.step
    }
}

pub struct DelayRk4<T> {
    h: T,
    t0: T,
    step: usize,
    x: Vec<T>,
    history: History<T>,
    k: [Vec<T>; 4],
    tmp: Vec<T>,
}

impl<T: Scalar> DelayRk4<T> {
    /// `prehistory` is the constant state for t < t0; `x0` the state at t0.
    pub fn new(h: T, t0: T, x0: Vec<T>, prehistory: Vec<T>, max_lag: usize) -> Self {
        let dim = x0.len();
        assert_eq!(prehistory.len(), dim, "pre-history dimension mismatch");
        let capacity = max_lag + 2;
        let mut history = History {
            dim,
            capacity,
            states: vec![T::zero(); capacity * dim],
            derivs: vec![T::zero(); capacity * dim],
            left: Vec::with_capacity(max_lag * dim),
            left_nodes: max_lag,
            prehistory,
        };
        history.store(0, &x0, true);
        let zeros = vec![T::zero(); dim];
        Self {
            h,
            t0,
            step: 0,
            x: x0,
            history,
            k: [zeros.clone(), zeros.clone(), zeros.clone(), zeros.clone()],
            tmp: zeros,
        }
    }

    pub fn state(&self) -> &[T] {
        &self.x
    }

    pub fn time(&self) -> T {
        self.t0 + self.h * T::lit(self.step as f64)
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    fn eval<S: DelaySystem<T>>(&mut self, sys: &S, stage: Stage, slot: usize, from_tmp: bool) {
        let t = self.time()
            + match stage {
                Stage::Start => T::zero(),
                Stage::Mid => self.h * T::lit(0.5),
                Stage::End => self.h,
            };
        let x: &[T] = if from_tmp { &self.tmp } else { &self.x };
        let past = Past {
            history: &self.history,
            step: self.step,
            stage,
            x,
            h: self.h,
        };
        let mut out = std::mem::take(&mut self.k[slot]);
        sys.rhs(t, x, &past, &mut out);
        self.k[slot] = out;
    }

    /// Derivative at the current grid point without advancing.
    pub fn derivative<S: DelaySystem<T>>(&mut self, sys: &S) -> &[T] {
        self.eval(sys, Stage::Start, 0, false);
        &self.k[0]
    }

    /// Advances one step and returns the derivative evaluated at the start of the step.
    pub fn step<S: DelaySystem<T>>(&mut self, sys: &S) -> &[T] {
        let half = self.h * T::lit(0.5);
        self.eval(sys, Stage::Start, 0, false);
        self.history.store(self.step, &self.k[0], false);

        for j in 0..self.x.len() {
            self.tmp[j] = self.x[j] + half * self.k[0][j];
        }
        self.eval(sys, Stage::Mid, 1, true);
        for j in 0..self.x.len() {
            self.tmp[j] = self.x[j] + half * self.k[1][j];
        }
        self.eval(sys, Stage::Mid, 2, true);
        for j in 0..self.x.len() {
            self.tmp[j] = self.x[j] + self.h * self.k[2][j];
        }
        self.eval(sys, Stage::End, 3, true);

        let sixth = self.h / T::lit(6.0);
        for j in 0..self.x.len() {
            self.x[j] += sixth * (self.k[0][j] + T::lit(2.0) * (self.k[1][j] + self.k[2][j]) + self.k[3][j]);
        }
        if self.step < self.history.left_nodes {
            // inputs may jump at this node; keep the derivative from the left for interpolation
            self.tmp.copy_from_slice(&self.x);
            self.eval(sys, Stage::End, 3, true);
            self.history.left.extend_from_slice(&self.k[3]);
        }
        self.step += 1;
        self.history.store(self.step, &self.x, true);
        &self.k[0]
    }
}

/// Number of steps closest to `delay / h`.
pub fn lag_steps<T: Scalar>(delay: T, h: T) -> usize {
    (delay / h).round().to_usize().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay {
        lag: usize,
        rate: f64,
    }

    // x'(t) = -rate * x(t - lag h)
    impl DelaySystem<f64> for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, _x: &[f64], past: &Past<'_, f64>, dx: &mut [f64]) {
            dx[0] = -self.rate * past.state(self.lag, 0);
        }
    }

    #[test]
    fn ode_limit_matches_exponential() {
        let sys = Decay { lag: 0, rate: 1.0 };
        let mut rk = DelayRk4::new(0.01, 0.0, vec![1.0], vec![1.0], 0);
        for _ in 0..100 {
            rk.step(&sys);
        }
        assert!((rk.state()[0] - (-1.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn method_of_steps_reference() {
        // x' = -x(t - 1), x = 1 for t <= 0: x(t) = 1 - t on [0,1],
        // x(t) = 1 - t + (t - 1)^2 / 2 on [1, 2].
        let sys = Decay { lag: 100, rate: 1.0 };
        let mut rk = DelayRk4::new(0.01, 0.0, vec![1.0], vec![1.0], 100);
        for _ in 0..100 {
            rk.step(&sys);
        }
        assert!((rk.state()[0] - 0.0).abs() < 1e-12);
        for _ in 0..50 {
            rk.step(&sys);
        }
        let t: f64 = 1.5;
        assert!((rk.state()[0] - (1.0 - t + (t - 1.0).powi(2) / 2.0)).abs() < 1e-10);
        for _ in 0..50 {
            rk.step(&sys);
        }
        // on [2, 3]: x = 1 - t + (t-1)^2/2 - (t-2)^3/6
        for _ in 0..50 {
            rk.step(&sys);
        }
        let t: f64 = 2.5;
        let exact = 1.0 - t + (t - 1.0).powi(2) / 2.0 - (t - 2.0).powi(3) / 6.0;
        assert!((rk.state()[0] - exact).abs() < 1e-8, "{} vs {exact}", rk.state()[0]);
    }

    #[test]
    fn half_index_tracks_stage_time() {
        struct Probe;
        impl DelaySystem<f64> for Probe {
            fn dim(&self) -> usize {
                1
            }
            fn rhs(&self, t: f64, _x: &[f64], past: &Past<'_, f64>, dx: &mut [f64]) {
                let idx = past.half_index(3);
                let expected = ((t - 0.03) / 0.005).round();
                match idx {
                    Some(i) => assert_eq!(i as f64, expected),
                    None => assert!(expected < 0.0 || (expected == 0.0 && past.stage() == Stage::End)),
                }
                dx[0] = 0.0;
            }
        }
        let mut rk = DelayRk4::new(0.01, 0.0, vec![0.0], vec![0.0], 3);
        for _ in 0..10 {
            rk.step(&Probe);
        }
    }

    #[test]
    fn lag_rounding() {
        assert_eq!(lag_steps(0.6, 0.01), 60);
        assert_eq!(lag_steps(0.6049, 0.01), 60);
        assert_eq!(lag_steps(0.0, 0.01), 0);
    }
}
