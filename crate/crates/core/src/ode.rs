//! Dormand–Prince 5(4) integrator with continuous (dense) output.
//!
//! The caller observes every accepted step through a [`DenseStep`] and may
//! stop the integration at any point inside it, which is how event location
//! is layered on top.
//!
//! Reference: Hairer, Nørsett, Wanner, Solving Ordinary Differential
//! Equations I, 2nd ed., §II.5 and §II.6 (coefficients of DOPRI5 and its
//! dense output).

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Fifth-order minus embedded fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    /// Largest allowed step; `f64::INFINITY` for none.
    pub max_step: f64,
    pub max_steps: usize,
    /// Initial step; `None` picks one from the local derivative scale.
    pub first_step: Option<f64>,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_step: f64::INFINITY,
            max_steps: 200_000,
            first_step: None,
        }
    }
}

/// One accepted step and its quartic continuous extension.
#[derive(Debug, Clone)]
pub struct DenseStep<const N: usize> {
    pub x0: f64,
    pub x1: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    cont: [[f64; N]; 5],
}

impl<const N: usize> DenseStep<N> {
    /// Interpolated state at `x` in `[x0, x1]`.
    pub fn eval(&self, x: f64) -> [f64; N] {
        let h = self.x1 - self.x0;
        let s = (x - self.x0) / h;
        let s1 = 1.0 - s;
        let c = &self.cont;
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = c[0][i] + s * (c[1][i] + s1 * (c[2][i] + s * (c[3][i] + s1 * c[4][i])));
        }
        out
    }
}

/// What the step observer wants next.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Flow<const N: usize> {
    Continue,
    /// Halt with the given terminal point (normally inside the last step).
    Stop {
        x: f64,
        y: [f64; N],
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Reached `x_end`.
    Completed,
    /// The observer requested a stop.
    Stopped,
    /// The right-hand side failed; the state is the last accepted one.
    RhsFailed,
    StepUnderflow,
    MaxSteps,
}

#[derive(Debug, Clone)]
pub struct Outcome<const N: usize, E> {
    pub x: f64,
    pub y: [f64; N],
    pub termination: Termination,
    pub rhs_error: Option<E>,
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

impl Dopri5 {
    /// Integrates `y' = f(x, y)` from `x0` to `x_end > x0`.
    ///
    /// `stops` are abscissae (ascending) that steps must land on exactly; the
    /// observer sees the step ending there with `y1` the step value.
    pub fn integrate<const N: usize, E, F, O>(
        &self,
        mut f: F,
        x0: f64,
        y0: [f64; N],
        x_end: f64,
        stops: &[f64],
        mut observe: O,
    ) -> Outcome<N, E>
    where
        F: FnMut(f64, &[f64; N]) -> Result<[f64; N], E>,
        O: FnMut(&DenseStep<N>) -> Flow<N>,
    {
        let mut out = Outcome {
            x: x0,
            y: y0,
            termination: Termination::Completed,
            rhs_error: None,
            accepted: 0,
            rejected: 0,
            evaluations: 0,
        };
        macro_rules! eval {
            ($x:expr, $y:expr) => {{
                out.evaluations += 1;
                match f($x, &$y) {
                    Ok(v) => v,
                    Err(e) => {
                        out.termination = Termination::RhsFailed;
                        out.rhs_error = Some(e);
                        return out;
                    }
                }
            }};
        }

        let mut x = x0;
        let mut y = y0;
        let mut k1 = eval!(x, y);
        let span = x_end - x0;
        let mut h = self
            .first_step
            .unwrap_or_else(|| self.initial_step(&y, &k1))
            .min(self.max_step)
            .min(span);
        let mut next_stop = stops.iter().position(|&s| s > x0 + 1e-15 * span.abs().max(1.0));
        let mut last_rejected = false;

        while x < x_end {
            if out.accepted + out.rejected >= self.max_steps {
                out.termination = Termination::MaxSteps;
                break;
            }
            let mut target = x_end;
            if let Some(i) = next_stop {
                target = target.min(stops[i]);
            }
            let proposed = h;
            let mut lands = false;
            if x + 1.01 * h >= target {
                h = target - x;
                lands = true;
            }
            if h <= 1e-15 * x.abs().max(1.0) {
                out.termination = Termination::StepUnderflow;
                break;
            }

            let mut yt = [0.0; N];
            for i in 0..N {
                yt[i] = y[i] + h * A21 * k1[i];
            }
            let k2 = eval!(x + C2 * h, yt);
            for i in 0..N {
                yt[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            let k3 = eval!(x + C3 * h, yt);
            for i in 0..N {
                yt[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            let k4 = eval!(x + C4 * h, yt);
            for i in 0..N {
                yt[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            let k5 = eval!(x + C5 * h, yt);
            for i in 0..N {
                yt[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            let xn = if lands { target } else { x + h };
            let k6 = eval!(xn, yt);
            let mut yn = [0.0; N];
            for i in 0..N {
                yn[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            let k7 = eval!(xn, yn);

            let mut err = 0.0;
            for i in 0..N {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.atol + self.rtol * y[i].abs().max(yn[i].abs());
                err += (e / sc) * (e / sc);
            }
            let err = (err / N as f64).sqrt();
            if !err.is_finite() {
                out.rejected += 1;
                h *= 0.2;
                last_rejected = true;
                continue;
            }

            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err > 1.0 {
                out.rejected += 1;
                h *= factor.min(1.0);
                last_rejected = true;
                continue;
            }

            let mut cont = [[0.0; N]; 5];
            for i in 0..N {
                let dy = yn[i] - y[i];
                let bspl = h * k1[i] - dy;
                cont[0][i] = y[i];
                cont[1][i] = dy;
                cont[2][i] = bspl;
                cont[3][i] = dy - h * k7[i] - bspl;
                cont[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let step = DenseStep {
                x0: x,
                x1: xn,
                y0: y,
                y1: yn,
                cont,
            };
            out.accepted += 1;
            x = xn;
            y = yn;
            k1 = k7;
            out.x = x;
            out.y = y;
            if lands {
                if let Some(i) = next_stop {
                    if stops[i] <= x {
                        next_stop = (i + 1 < stops.len()).then_some(i + 1);
                    }
                }
            }

            if let Flow::Stop { x: xs, y: ys } = observe(&step) {
                out.x = xs;
                out.y = ys;
                out.termination = Termination::Stopped;
                return out;
            }

            let grow = if last_rejected { factor.min(1.0) } else { factor };
            last_rejected = false;
            h = if lands { proposed.max(h * grow) } else { h * grow };
            h = h.min(self.max_step);
        }
        out
    }

    fn initial_step<const N: usize>(&self, y: &[f64; N], dy: &[f64; N]) -> f64 {
        let mut d0: f64 = 0.0;
        let mut d1: f64 = 0.0;
        for i in 0..N {
            let sc = self.atol + self.rtol * y[i].abs();
            d0 += (y[i] / sc).powi(2);
            d1 += (dy[i] / sc).powi(2);
        }
        let (d0, d1) = ((d0 / N as f64).sqrt(), (d1 / N as f64).sqrt());
        if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        }
    }
}

/// Final bracket of a sign change located inside one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing<const N: usize> {
    /// Last abscissa with `g < 0`.
    pub before: f64,
    pub y_before: [f64; N],
    /// First abscissa with `g >= 0`.
    pub after: f64,
    pub y_after: [f64; N],
}

/// Locates a root of `g` inside a dense step by bisection, assuming
/// `g(y0) < 0 <= g(y1)`. The returned bracket is narrower than `tol`.
pub fn bisect_in_step<const N: usize>(step: &DenseStep<N>, g: impl Fn(&[f64; N]) -> f64, tol: f64) -> Crossing<N> {
    let (mut lo, mut hi) = (step.x0, step.x1);
    let (mut y_lo, mut y_hi) = (step.y0, step.y1);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let y = step.eval(mid);
        if g(&y) < 0.0 {
            lo = mid;
            y_lo = y;
        } else {
            hi = mid;
            y_hi = y;
        }
    }
    Crossing {
        before: lo,
        y_before: y_lo,
        after: hi,
        y_after: y_hi,
    }
}
