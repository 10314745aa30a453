//! Motor friction and torsion-torque hysteresis of a single joint.
//!
//! The hysteresis model works in degrees of torsion and N·m of torque, so its
//! stiffness coefficients can be entered exactly as tabulated. Callers convert
//! at the boundary with [`crate::units`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rigid_dynamics::JointVector;

/// Smooth replacement for `sign(v)`: `2 / (1 + exp(-γ v)) - 1`, evaluated as
/// the algebraically identical `tanh(γ v / 2)` to avoid overflow.
pub fn sigmoid(v: f64, gamma: f64) -> f64 {
    (0.5 * gamma * v).tanh()
}

/// Steady-state Stribeck friction curve of one motor drive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrictionParams {
    /// Coulomb level (N·m).
    pub fc: f64,
    /// Stribeck level (N·m).
    pub fs: f64,
    /// Viscous coefficient (N·m·s/rad).
    pub b: f64,
    /// Stribeck velocity factor (s/rad).
    pub v: f64,
    /// Shape exponent, non-zero.
    pub mu: f64,
    /// Sigmoid velocity scaling.
    pub gamma: f64,
}

impl Default for FrictionParams {
    fn default() -> Self {
        Self {
            fc: 10.0,
            fs: 5.0,
            b: 1.0,
            v: 2.0,
            mu: -2.0,
            gamma: 500.0,
        }
    }
}

impl FrictionParams {
    /// No friction at all; used for conservative test configurations.
    pub fn frictionless() -> Self {
        Self {
            fc: 0.0,
            fs: 0.0,
            b: 0.0,
            ..Self::default()
        }
    }

    /// Checks the physical constraints. A fully frictionless drive
    /// (`fc = fs = b = 0`) is accepted as a degenerate case.
    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.fc, self.fs, self.b, self.v, self.mu, self.gamma]
            .iter()
            .all(|x| x.is_finite());
        let frictionless = self.fc == 0.0 && self.fs == 0.0 && self.b == 0.0;
        let levels = frictionless || (self.fc > 0.0 && self.fs > 0.0 && self.b >= 0.0);
        if !all_finite || !levels || self.v <= 0.0 || self.mu == 0.0 || self.gamma <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "friction requires Fc, Fs > 0, B >= 0, V > 0, mu != 0, gamma > 0, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn torque(&self, thetad: f64) -> f64 {
        let stribeck = (-self.v.powf(-self.mu) * thetad.abs().powf(self.mu)).exp();
        sigmoid(thetad, self.gamma) * (self.fc + self.fs * stribeck) + self.b * thetad
    }
}

pub fn friction_torque<const N: usize>(
    thetad: &JointVector<N>,
    params: &[FrictionParams; N],
) -> JointVector<N> {
    JointVector::<N>::from_fn(|i, _| params[i].torque(thetad[i]))
}

/// Bouc-Wen-like torsion-torque hysteresis, in degrees and N·m.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HysteresisParams {
    /// Linear stiffness (N·m/deg).
    pub k1: f64,
    /// Cubic stiffness (N·m/deg³).
    pub k3: f64,
    /// Weight of the elastic (static) part, `0 < w < 1`.
    pub w: f64,
    pub psi: f64,
    pub xi: f64,
    pub eta: f64,
}

impl Default for HysteresisParams {
    fn default() -> Self {
        Self {
            k1: 300.0,
            k3: 50000.0,
            w: 0.4,
            psi: 300.0,
            xi: 500.0,
            eta: 1.5,
        }
    }
}

impl HysteresisParams {
    /// Purely elastic linear spring `τ = k1 Δ` (no hysteresis, no stiffening).
    pub fn linear(k1: f64) -> Self {
        Self {
            k1,
            k3: 0.0,
            w: 1.0,
            ..Self::default()
        }
    }

    /// `0 < w < 1` is required for the hysteretic model; `w = 1` is accepted
    /// as the purely elastic limit.
    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.k1, self.k3, self.w, self.psi, self.xi, self.eta]
            .iter()
            .all(|x| x.is_finite());
        if !all_finite || self.k1 <= 0.0 || self.k3 < 0.0 || !(self.w > 0.0 && self.w <= 1.0) || self.eta < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "hysteresis requires k1 > 0, k3 >= 0, 0 < w <= 1, eta >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Static stiffening spring `k1 Δ + k3 Δ³`.
    pub fn alpha(&self, delta: f64) -> f64 {
        self.k1 * delta + self.k3 * delta * delta * delta
    }

    pub fn alpha_slope(&self, delta: f64) -> f64 {
        self.k1 + 3.0 * self.k3 * delta * delta
    }

    /// Dynamic term evaluated on the accumulated internal state.
    pub fn beta(&self, state: &HysteresisState) -> f64 {
        self.alpha(state.x_int)
    }

    /// Unique real root of the monotone cubic `k1 Δ + k3 Δ³ = τ̄`.
    pub fn alpha_inverse(&self, tau_bar: f64) -> Result<f64> {
        if !tau_bar.is_finite() {
            return Err(Error::NonFinite(format!("alpha_inverse({tau_bar})")));
        }
        if tau_bar == 0.0 {
            return Ok(0.0);
        }
        let tol = 1e-12 * tau_bar.abs().max(1.0);
        let f = |d: f64| self.alpha(d) - tau_bar;

        // |α(Δ)| >= k1 |Δ|, so the root lies within ±|τ̄|/k1; the loop only
        // matters for pathological parameters.
        let mut half_width = tau_bar.abs() / self.k1;
        while f(half_width) < 0.0 || f(-half_width) > 0.0 {
            half_width *= 2.0;
        }
        let (mut lo, mut hi) = if tau_bar > 0.0 { (0.0, half_width) } else { (-half_width, 0.0) };
        let mut d = tau_bar / self.alpha_slope(0.0).max(f64::MIN_POSITIVE);
        d = d.clamp(lo, hi);
        for _ in 0..200 {
            let r = f(d);
            if r.abs() <= tol {
                return Ok(d);
            }
            if r > 0.0 {
                hi = d;
            } else {
                lo = d;
            }
            let newton = d - r / self.alpha_slope(d);
            d = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo <= f64::EPSILON * d.abs().max(f64::MIN_POSITIVE) {
                return Ok(d);
            }
        }
        Ok(d)
    }

    /// Upper bound of `|x|` reached under monotone loading from the virgin state.
    pub fn state_bound(&self) -> f64 {
        if self.psi + self.xi > 0.0 {
            (1.0 / (self.psi + self.xi)).powf(1.0 / self.eta)
        } else {
            f64::INFINITY
        }
    }

    /// `dx/dΔ` of the internal state along a branch travelled in `direction`.
    fn state_slope(&self, x: f64, direction: f64) -> f64 {
        let ax = x.abs();
        1.0 - self.psi * direction.signum() * ax.powf(self.eta - 1.0) * x - self.xi * ax.powf(self.eta)
    }

    /// `d(dx/dΔ)/dx` along a branch travelled in `direction`.
    fn state_slope_gradient(&self, x: f64, direction: f64) -> f64 {
        let ax = x.abs();
        let g = self.eta * ax.powf(self.eta - 1.0);
        -(self.psi * direction.signum() + self.xi * x.signum()) * g
    }

    /// Advances the internal state along a torsion increment `d_delta` (deg).
    /// The model is rate independent, so the state depends only on the path
    /// in `Δ`, which is integrated with RK4 in `Δ` on sub-steps of at most
    /// [`MAX_TORSION_SUBSTEP`] degrees.
    pub fn advance(&self, state: &HysteresisState, d_delta: f64) -> HysteresisState {
        if d_delta == 0.0 {
            return *state;
        }
        let n = (d_delta.abs() / MAX_TORSION_SUBSTEP).ceil().max(1.0) as usize;
        let h = d_delta / n as f64;
        let dir = d_delta.signum();
        let mut x = state.x;
        for _ in 0..n {
            let k1 = self.state_slope(x, dir);
            let k2 = self.state_slope(x + 0.5 * h * k1, dir);
            let k3 = self.state_slope(x + 0.5 * h * k2, dir);
            let k4 = self.state_slope(x + h * k3, dir);
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        HysteresisState {
            x,
            x_int: state.x_int + (x - state.x),
        }
    }
}

/// Largest torsion step (deg) used when integrating the hysteresis state
/// along a prescribed torsion path.
pub const MAX_TORSION_SUBSTEP: f64 = 1e-4;

/// Internal memory of the hysteresis model (degrees).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HysteresisState {
    /// Bouc-Wen internal state.
    pub x: f64,
    /// Running integral of `ẋ`; the argument of the dynamic term.
    pub x_int: f64,
}

impl HysteresisState {
    pub fn virgin() -> Self {
        Self::default()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.x_int.is_finite()
    }
}

/// Time derivative of the hysteresis memory for a torsion rate `delta_dot`
/// (deg/s). Both components integrate the same rate.
pub fn hysteresis_rate(state: &HysteresisState, delta_dot: f64, p: &HysteresisParams) -> HysteresisState {
    let ax = state.x.abs();
    let xd = delta_dot
        - p.psi * delta_dot.abs() * ax.powf(p.eta - 1.0) * state.x
        - p.xi * delta_dot * ax.powf(p.eta);
    HysteresisState { x: xd, x_int: xd }
}

/// Joint torque produced by torsion `delta` (deg) given the hysteresis memory.
pub fn hysteresis_torque(delta: f64, state: &HysteresisState, p: &HysteresisParams) -> f64 {
    p.w * p.alpha(delta) + (1.0 - p.w) * p.beta(state)
}

/// `dχ/dΔ` (N·m/deg) of the hysteretic map at `delta` when travelling in
/// `direction` (sign of `Δ̇`). Its reciprocal is the Jacobian of the inverse
/// map used by the reference transformation.
pub fn chi_derivative(delta: f64, state: &HysteresisState, direction: f64, p: &HysteresisParams) -> Result<f64> {
    let slope = p.w * p.alpha_slope(delta) + (1.0 - p.w) * p.alpha_slope(state.x_int) * p.state_slope(state.x, direction);
    if !(slope > 0.0) {
        return Err(Error::NotInvertible { joint: 0, slope });
    }
    Ok(slope)
}

/// Curvature `d²χ/dΔ²` (N·m/deg²) of the hysteretic map along the branch
/// travelled in `direction`, with the memory moving along with `Δ`.
pub fn chi_curvature(delta: f64, state: &HysteresisState, direction: f64, p: &HysteresisParams) -> f64 {
    let s = p.state_slope(state.x, direction);
    let ds = p.state_slope_gradient(state.x, direction) * s;
    let a2 = |d: f64| 6.0 * p.k3 * d;
    p.w * a2(delta) + (1.0 - p.w) * (a2(state.x_int) * s * s + p.alpha_slope(state.x_int) * ds)
}

/// How the implicit inverse model (the torsion appears inside its own dynamic
/// term) is resolved on each step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InverseScheme {
    /// Solve `w α(Δ) + (1 - w) β(Δ) = τ` exactly for the new torsion, with
    /// the memory advanced along the candidate increment.
    #[default]
    Implicit,
    /// Evaluate the dynamic term on the previous step's memory. Cheap, but
    /// the fixed-point iteration has loop gain `(1 - w)/w · dx/dΔ`, which
    /// exceeds one near the origin when `w < 0.5`.
    Delayed,
}

/// Memory of an inverse hysteresis model: its own internal state and the
/// torsion it produced on the previous step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InverseHysteresis {
    pub hyst: HysteresisState,
    /// Last torsion estimate (deg).
    pub delta: f64,
}

impl InverseHysteresis {
    /// Torsion estimate (deg) for torque `tau_in` (N·m) after one step of
    /// length `dt`; updates the memory.
    pub fn step(&mut self, tau_in: f64, dt: f64, p: &HysteresisParams, scheme: InverseScheme) -> Result<f64> {
        let (next, delta) = hysteresis_inverse_step(*self, tau_in, dt, p, scheme)?;
        *self = next;
        Ok(delta)
    }
}

pub fn hysteresis_inverse_step(
    mem: InverseHysteresis,
    tau_in: f64,
    dt: f64,
    p: &HysteresisParams,
    scheme: InverseScheme,
) -> Result<(InverseHysteresis, f64)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidTimeStep(dt));
    }
    if !tau_in.is_finite() {
        return Err(Error::NonFinite(format!("inverse hysteresis input {tau_in}")));
    }
    let delta = match scheme {
        InverseScheme::Delayed => p.alpha_inverse((tau_in - (1.0 - p.w) * p.beta(&mem.hyst)) / p.w)?,
        InverseScheme::Implicit => solve_implicit(&mem, tau_in, p)?,
    };
    let hyst = p.advance(&mem.hyst, delta - mem.delta);
    Ok((InverseHysteresis { hyst, delta }, delta))
}

/// Root of `g(Δ) = w α(Δ) + (1 - w) β(advance(memory, Δ - Δprev)) - τ`.
/// `g` is strictly increasing (its slope is `chi_derivative > 0`), so a
/// Newton iteration safeguarded by bisection always converges.
fn solve_implicit(mem: &InverseHysteresis, tau: f64, p: &HysteresisParams) -> Result<f64> {
    let g = |d: f64| hysteresis_torque(d, &p.advance(&mem.hyst, d - mem.delta), p) - tau;
    let tol = 1e-10 * tau.abs().max(1.0);

    let g0 = g(mem.delta);
    if g0.abs() <= tol {
        return Ok(mem.delta);
    }
    // Bracket from the bounded dynamic term: |β| <= α(max(|x_int|, bound)).
    let xb = mem.hyst.x_int.abs().max(mem.hyst.x.abs()).max(p.state_bound().min(1e6));
    let beta_max = p.alpha(xb);
    let (mut lo, mut hi) = if g0 > 0.0 {
        (p.alpha_inverse((tau - (1.0 - p.w) * beta_max) / p.w)?.min(mem.delta), mem.delta)
    } else {
        (mem.delta, p.alpha_inverse((tau + (1.0 - p.w) * beta_max) / p.w)?.max(mem.delta))
    };
    let mut width = (hi - lo).max(1e-6);
    while g(lo) > 0.0 {
        lo -= width;
        width *= 2.0;
    }
    width = (hi - lo).max(1e-6);
    while g(hi) < 0.0 {
        hi += width;
        width *= 2.0;
    }

    let mut d = 0.5 * (lo + hi);
    for _ in 0..200 {
        let r = g(d);
        if r.abs() <= tol {
            return Ok(d);
        }
        if r > 0.0 {
            hi = d;
        } else {
            lo = d;
        }
        let state = p.advance(&mem.hyst, d - mem.delta);
        let slope = chi_derivative(d, &state, d - mem.delta, p).unwrap_or(0.0);
        let newton = if slope > 0.0 { d - r / slope } else { f64::NAN };
        d = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= 4.0 * f64::EPSILON * d.abs().max(1e-300) {
            return Ok(d);
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sigmoid_basics() {
        assert_eq!(sigmoid(0.0, 500.0), 0.0);
        assert_relative_eq!(sigmoid(1e3, 500.0), 1.0);
        for v in [0.01, 0.1, 1.0] {
            assert_eq!(sigmoid(-v, 500.0), -sigmoid(v, 500.0));
            let literal = 2.0 / (1.0 + (-500.0 * v as f64).exp()) - 1.0;
            assert_relative_eq!(sigmoid(v, 500.0), literal, epsilon = 1e-15);
        }
    }

    #[test]
    fn friction_examples() {
        let p = FrictionParams::default();
        assert_eq!(p.torque(0.0), 0.0);
        let expected = 10.0 + 5.0 * (-1.0f64).exp() + 2.0;
        assert_relative_eq!(p.torque(2.0), expected, epsilon = 1e-9);
        assert_relative_eq!(p.torque(2.0), 13.839, epsilon = 1e-3);
        for v in [0.5, 2.0, 10.0] {
            assert_eq!(p.torque(-v), -p.torque(v));
        }
    }

    #[test]
    fn friction_validation() {
        assert!(FrictionParams::default().validate().is_ok());
        assert!(FrictionParams::frictionless().validate().is_ok());
        assert!(FrictionParams { mu: 0.0, ..Default::default() }.validate().is_err());
        assert!(FrictionParams { v: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn alpha_examples() {
        let p = HysteresisParams::default();
        assert_eq!(p.alpha(0.0), 0.0);
        assert_relative_eq!(p.alpha(0.1), 80.0, epsilon = 1e-12);
        let mut prev = p.alpha(-1.0);
        for k in 1..=200 {
            let a = p.alpha(-1.0 + k as f64 * 0.01);
            assert!(a > prev);
            prev = a;
        }
    }

    #[test]
    fn alpha_inverse_examples() {
        let p = HysteresisParams::default();
        assert_eq!(p.alpha_inverse(0.0).unwrap(), 0.0);
        assert_relative_eq!(p.alpha_inverse(80.0).unwrap(), 0.1, epsilon = 1e-12);
        for d in [-0.3, 0.05, 0.25] {
            assert_relative_eq!(p.alpha_inverse(p.alpha(d)).unwrap(), d, epsilon = 1e-9);
        }
        assert!(p.alpha_inverse(f64::NAN).is_err());
        let lin = HysteresisParams::linear(300.0);
        assert_relative_eq!(lin.alpha_inverse(150.0).unwrap(), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn rate_examples() {
        let p = HysteresisParams::default();
        let virgin = HysteresisState::virgin();
        assert_eq!(hysteresis_rate(&virgin, 1.0, &p).x, 1.0);
        let loaded = HysteresisState { x: 0.005, x_int: 0.005 };
        assert_eq!(hysteresis_rate(&loaded, 0.0, &p).x, 0.0);
        // ẋ vanishes under loading at x = (1 / (ψ + ξ))^(1/η)
        let xb = (1.0f64 / 800.0).powf(2.0 / 3.0);
        assert_relative_eq!(p.state_bound(), xb, epsilon = 1e-15);
        let sat = HysteresisState { x: xb, x_int: xb };
        assert!(hysteresis_rate(&sat, 1.0, &p).x.abs() < 1e-12);
    }

    #[test]
    fn torque_from_virgin_state() {
        let p = HysteresisParams::default();
        assert_eq!(hysteresis_torque(0.0, &HysteresisState::virgin(), &p), 0.0);
    }

    #[test]
    fn small_monotone_loading_follows_alpha() {
        let p = HysteresisParams::default();
        let d = 1e-3;
        let s = p.advance(&HysteresisState::virgin(), d);
        let tau = hysteresis_torque(d, &s, &p);
        assert!(((tau - p.alpha(d)) / p.alpha(d)).abs() < 0.01);
    }

    #[test]
    fn chi_derivative_at_virgin_origin_is_k1() {
        let p = HysteresisParams::default();
        let s = chi_derivative(0.0, &HysteresisState::virgin(), 1.0, &p).unwrap();
        assert_relative_eq!(s, 300.0, epsilon = 1e-12);
    }

    #[test]
    fn curvature_matches_slope_differences() {
        let p = HysteresisParams::default();
        for (start, dir) in [(0.0, 1.0), (0.15, -1.0), (-0.05, 1.0)] {
            let mut state = p.advance(&HysteresisState::virgin(), start);
            let mut delta = start;
            for _ in 0..10 {
                // Both stencil points are reached by moving forward along the branch.
                let prev = state;
                let step = 0.01 * dir;
                let h = 1e-6 * dir;
                state = p.advance(&prev, step);
                delta += step;
                let plus = chi_derivative(delta + h, &p.advance(&prev, step + h), dir, &p).unwrap();
                let minus = chi_derivative(delta - h, &p.advance(&prev, step - h), dir, &p).unwrap();
                let fd = (plus - minus) / (2.0 * h);
                let c = chi_curvature(delta, &state, dir, &p);
                // |x|^(η-1) is not smooth at x = 0, which limits the difference quotient.
                assert!((fd - c).abs() <= 1e-3 * c.abs().max(1.0), "delta {delta}: fd {fd} vs {c}");
            }
        }
    }

    #[test]
    fn inverse_step_rejects_bad_dt() {
        let p = HysteresisParams::default();
        for scheme in [InverseScheme::Implicit, InverseScheme::Delayed] {
            assert!(hysteresis_inverse_step(InverseHysteresis::default(), 1.0, 0.0, &p, scheme).is_err());
        }
    }

    #[test]
    fn zero_input_keeps_virgin_inverse_at_zero() {
        let p = HysteresisParams::default();
        for scheme in [InverseScheme::Implicit, InverseScheme::Delayed] {
            let mut mem = InverseHysteresis::default();
            for _ in 0..100 {
                assert_eq!(mem.step(0.0, 1e-3, &p, scheme).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn delayed_scheme_chatters_near_origin() {
        // Releasing a partially loaded inverse model to zero torque: the
        // delayed scheme oscillates step to step, the implicit one settles.
        let p = HysteresisParams::default();
        let mut implicit = InverseHysteresis::default();
        let mut delayed = InverseHysteresis::default();
        implicit.step(2.0, 1e-3, &p, InverseScheme::Implicit).unwrap();
        delayed.step(2.0, 1e-3, &p, InverseScheme::Implicit).unwrap();
        let mut last = [0.0; 2];
        let mut prev = [0.0; 2];
        for _ in 0..50 {
            prev = last;
            last = [
                implicit.step(0.0, 1e-3, &p, InverseScheme::Implicit).unwrap(),
                delayed.step(0.0, 1e-3, &p, InverseScheme::Delayed).unwrap(),
            ];
        }
        assert!((last[0] - prev[0]).abs() < 1e-12);
        assert!((last[1] - prev[1]).abs() > 1e-3, "{last:?} {prev:?}");
    }

    #[test]
    fn constant_torque_reaches_fixed_point() {
        let p = HysteresisParams::default();
        for scheme in [InverseScheme::Implicit, InverseScheme::Delayed] {
            let mut mem = InverseHysteresis::default();
            let mut d = 0.0;
            for _ in 0..200 {
                d = mem.step(80.0, 1e-3, &p, scheme).unwrap();
            }
            let residual = p.w * p.alpha(d) + (1.0 - p.w) * p.beta(&mem.hyst) - 80.0;
            assert!(residual.abs() <= 1e-6, "{scheme:?}: residual {residual}");
        }
    }
}
