//! Fixed-step explicit integration.

/// States that can be combined linearly by an integrator.
pub trait OdeState: Sized {
    /// `self + h * rate`
    fn add_scaled(&self, rate: &Self, h: f64) -> Self;
}

impl<const N: usize> OdeState for nalgebra::SVector<f64, N> {
    fn add_scaled(&self, rate: &Self, h: f64) -> Self {
        self + rate * h
    }
}

impl OdeState for f64 {
    fn add_scaled(&self, rate: &Self, h: f64) -> Self {
        self + h * rate
    }
}

/// One classical Runge-Kutta step of an autonomous system `ẏ = f(y)`.
pub fn rk4_step<S, E, F>(y: &S, dt: f64, mut f: F) -> Result<S, E>
where
    S: OdeState,
    F: FnMut(&S) -> Result<S, E>,
{
    let k1 = f(y)?;
    let k2 = f(&y.add_scaled(&k1, 0.5 * dt))?;
    let k3 = f(&y.add_scaled(&k2, 0.5 * dt))?;
    let k4 = f(&y.add_scaled(&k3, dt))?;
    Ok(y
        .add_scaled(&k1, dt / 6.0)
        .add_scaled(&k2, dt / 3.0)
        .add_scaled(&k3, dt / 3.0)
        .add_scaled(&k4, dt / 6.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector2;
    use std::convert::Infallible;

    #[test]
    fn harmonic_oscillator_matches_closed_form() {
        let omega = 3.0;
        let dt = 1e-3;
        let mut y = Vector2::new(1.0, 0.0);
        for _ in 0..10_000 {
            y = rk4_step::<_, Infallible, _>(&y, dt, |s| Ok(Vector2::new(s[1], -omega * omega * s[0]))).unwrap();
        }
        let t = 10.0;
        assert!((y[0] - (omega * t).cos()).abs() < 1e-9);
        let energy = 0.5 * y[1] * y[1] + 0.5 * omega * omega * y[0] * y[0];
        assert!((energy / (0.5 * omega * omega) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn fourth_order_convergence_on_exponential() {
        let err = |dt: f64| {
            let n = (1.0 / dt).round() as usize;
            let mut y = 1.0f64;
            for _ in 0..n {
                y = rk4_step::<_, Infallible, _>(&y, dt, |s| Ok(-s)).unwrap();
            }
            (y - (-1.0f64).exp()).abs()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((ratio.log2() - 4.0).abs() < 0.1, "order {}", ratio.log2());
    }
}
