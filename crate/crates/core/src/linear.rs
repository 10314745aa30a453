//! Linearized single-joint analysis: nominal poles and zeros of the elastic
//! joint and the root locus of the loop closed through the predicted
//! torsion `u = Kp Δ̃`, with `Δ̃` the observer torque lagged by `1/(s/L + 1)`
//! and mapped through a linear spring.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Real polynomial with coefficients in ascending powers of `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialR {
    coeffs: Vec<f64>,
}

impl PolynomialR {
    /// Trailing zero coefficients are removed; the zero polynomial keeps a
    /// single zero coefficient.
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    /// Monic polynomial with the given real roots.
    pub fn from_real_roots(roots: &[f64]) -> Self {
        roots
            .iter()
            .fold(Self::new(vec![1.0]), |p, &r| p.mul(&Self::new(vec![-r, 1.0])))
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let at = |p: &Self, i: usize| p.coeffs.get(i).copied().unwrap_or(0.0);
        Self::new((0..n).map(|i| at(self, i) + at(other, i)).collect())
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * k).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    pub fn derivative(&self) -> Self {
        Self::new(self.coeffs.iter().enumerate().skip(1).map(|(i, c)| c * i as f64).collect())
    }

    pub fn eval(&self, s: C64) -> C64 {
        self.coeffs.iter().rev().fold(C64::new(0.0, 0.0), |acc, &c| acc * s + c)
    }

    /// Number of leading zero coefficients, i.e. the multiplicity of the
    /// root at the origin.
    pub fn zero_root_multiplicity(&self) -> usize {
        if self.is_zero() {
            return 0;
        }
        self.coeffs.iter().take_while(|&&c| c == 0.0).count()
    }

    /// All complex roots: eigenvalues of the companion matrix, each polished
    /// by a few Newton steps on the original coefficients. Exact roots at the
    /// origin are returned as exact zeros.
    pub fn roots(&self) -> Result<Vec<C64>> {
        if self.is_zero() {
            return Err(Error::DegeneratePolynomial("all coefficients are zero".into()));
        }
        if self.degree() == 0 {
            return Err(Error::DegeneratePolynomial("constant polynomial has no roots".into()));
        }
        if self.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("polynomial coefficient".into()));
        }
        let zeros = self.zero_root_multiplicity();
        let reduced = Self::new(self.coeffs[zeros..].to_vec());
        let mut roots = vec![C64::new(0.0, 0.0); zeros];
        let n = reduced.degree();
        if n == 0 {
            return Ok(roots);
        }

        let lead = reduced.coeffs[n];
        let mut companion = DMatrix::<f64>::zeros(n, n);
        for i in 1..n {
            companion[(i, i - 1)] = 1.0;
        }
        for i in 0..n {
            companion[(i, n - 1)] = -reduced.coeffs[i] / lead;
        }
        let eig = companion.complex_eigenvalues();
        let dp = reduced.derivative();
        for &z0 in eig.iter() {
            if !(z0.re.is_finite() && z0.im.is_finite()) {
                return Err(Error::RootFinding("companion eigenvalue is not finite".into()));
            }
            roots.push(polish(&reduced, &dp, z0));
        }
        // Real-coefficient roots come in conjugate pairs; make them exact.
        symmetrize_conjugates(&mut roots[zeros..]);
        let tol = 1e-8 * self.max_abs_coeff();
        if let Some(bad) = roots.iter().find(|&&z| self.eval(z).norm() > tol) {
            return Err(Error::RootFinding(format!(
                "residual {:.3e} at root {bad} exceeds {tol:.3e}",
                self.eval(*bad).norm()
            )));
        }
        Ok(roots)
    }
}

fn polish(p: &PolynomialR, dp: &PolynomialR, z0: C64) -> C64 {
    let mut z = z0;
    let mut best = (p.eval(z).norm(), z);
    for _ in 0..20 {
        let d = dp.eval(z);
        if d.norm() == 0.0 {
            break;
        }
        let next = z - p.eval(z) / d;
        let r = p.eval(next).norm();
        if !(r.is_finite()) {
            break;
        }
        if r < best.0 {
            best = (r, next);
        }
        if (next - z).norm() <= 1e-15 * next.norm().max(1.0) {
            break;
        }
        z = next;
    }
    best.1
}

fn symmetrize_conjugates(roots: &mut [C64]) {
    let scale = roots.iter().fold(1.0f64, |m, z| m.max(z.norm()));
    let tiny = 1e-12 * scale;
    for z in roots.iter_mut() {
        if z.im.abs() <= tiny {
            z.im = 0.0;
        }
    }
    let mut used = vec![false; roots.len()];
    for i in 0..roots.len() {
        if used[i] || roots[i].im <= 0.0 {
            continue;
        }
        let target = roots[i].conj();
        let partner = (0..roots.len())
            .filter(|&j| j != i && !used[j] && roots[j].im < 0.0)
            .min_by(|&a, &b| (roots[a] - target).norm().total_cmp(&(roots[b] - target).norm()));
        if let Some(j) = partner {
            let avg = C64::new(0.5 * (roots[i].re + roots[j].re), 0.5 * (roots[i].im - roots[j].im));
            roots[i] = avg;
            roots[j] = avg.conj();
            used[i] = true;
            used[j] = true;
        }
    }
}

/// Decoupled linear model of one elastic joint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearJointModel {
    /// Link inertia (kg m²).
    pub h_hat: f64,
    /// Motor inertia (kg m²).
    pub j: f64,
    /// Viscous motor friction (N·m·s/rad).
    pub b: f64,
    /// Joint stiffness (N·m/rad).
    pub k: f64,
    /// Observer gain (1/s).
    pub l: f64,
}

impl LinearJointModel {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.h_hat, self.j, self.k, self.l].iter().all(|&v| v > 0.0 && v.is_finite());
        if !pos || !(self.b >= 0.0 && self.b.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "linear joint model needs positive inertias, stiffness and observer gain and B >= 0, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Link transfer polynomial `Ĥ s² + K`.
    pub fn link_poly(&self) -> PolynomialR {
        PolynomialR::new(vec![self.k, 0.0, self.h_hat])
    }

    /// Motor transfer polynomial `J s² + B s + K`.
    pub fn motor_poly(&self) -> PolynomialR {
        PolynomialR::new(vec![self.k, self.b, self.j])
    }

    /// Observer lag denominator `s / L + 1`.
    pub fn lag_poly(&self) -> PolynomialR {
        PolynomialR::new(vec![1.0, 1.0 / self.l])
    }

    /// `Pl Pm - K²`, the denominator of `θ(s)/u(s)`.
    pub fn plant_denominator(&self) -> PolynomialR {
        self.link_poly().mul(&self.motor_poly()).add(&PolynomialR::new(vec![-self.k * self.k]))
    }

    /// Nominal zeros `±i √(K/Ĥ)`.
    pub fn nominal_zeros(&self) -> [C64; 2] {
        let w = (self.k / self.h_hat).sqrt();
        [C64::new(0.0, w), C64::new(0.0, -w)]
    }
}

/// Poles and zeros of `θ(s)/u(s) = Pl / (Pl Pm - K²)`.
pub fn nominal_poles_zeros(model: &LinearJointModel) -> Result<(Vec<C64>, Vec<C64>)> {
    model.validate()?;
    Ok((model.plant_denominator().roots()?, model.link_poly().roots()?))
}

/// `(s/L + 1)(Pm Pl - K²) - Kp Ĥ s²`, obtained by eliminating `q` from the
/// link equation and the motor equation with torsion feedback.
pub fn characteristic_polynomial_derived(model: &LinearJointModel, kp: f64) -> PolynomialR {
    model
        .lag_poly()
        .mul(&model.plant_denominator())
        .add(&PolynomialR::new(vec![0.0, 0.0, -kp * model.h_hat]))
}

/// `K² (s/L + 1) + Kp [K - Pl ((s/L + 1) Pm - 1)]`: denominator plus `Kp`
/// times numerator of the loop transfer function, taken term by term.
pub fn characteristic_polynomial_literal(model: &LinearJointModel, kp: f64) -> PolynomialR {
    let den = model.lag_poly().scale(model.k * model.k);
    let inner = model.lag_poly().mul(&model.motor_poly()).add(&PolynomialR::new(vec![-1.0]));
    let num = PolynomialR::new(vec![model.k]).add(&model.link_poly().mul(&inner).scale(-1.0));
    den.add(&num.scale(kp))
}

/// Which characteristic polynomial a locus is computed from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LocusForm {
    Derived,
    Literal,
}

impl LocusForm {
    pub fn polynomial(&self, model: &LinearJointModel, kp: f64) -> PolynomialR {
        match self {
            LocusForm::Derived => characteristic_polynomial_derived(model, kp),
            LocusForm::Literal => characteristic_polynomial_literal(model, kp),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocusPoint {
    pub kp: f64,
    /// Roots ordered so that index `i` follows the same branch across the
    /// sweep.
    pub roots: Vec<C64>,
}

/// `n` logarithmically spaced gains from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
        }
    }
}

/// Closed-loop roots along a sorted positive gain grid, with branches
/// matched between neighbouring grid points by minimum total displacement.
pub fn root_locus(model: &LinearJointModel, kp_grid: &[f64], form: LocusForm) -> Result<Vec<LocusPoint>> {
    model.validate()?;
    if kp_grid.iter().any(|&k| !(k > 0.0 && k.is_finite())) {
        return Err(Error::InvalidParameter("gain grid must contain positive finite values".into()));
    }
    if kp_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("gain grid must be sorted ascending".into()));
    }
    let mut out: Vec<LocusPoint> = Vec::with_capacity(kp_grid.len());
    for &kp in kp_grid {
        let mut roots = form.polynomial(model, kp).roots()?;
        match out.last() {
            Some(prev) if prev.roots.len() == roots.len() => roots = match_branches(&prev.roots, roots),
            _ => roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))),
        }
        out.push(LocusPoint { kp, roots });
    }
    Ok(out)
}

/// Reorders `next` so that it pairs with `prev` at minimum summed distance.
/// Exhaustive for up to seven roots, greedy beyond.
fn match_branches(prev: &[C64], next: Vec<C64>) -> Vec<C64> {
    let n = prev.len();
    let cost = |perm: &[usize]| -> f64 { perm.iter().enumerate().map(|(i, &j)| (prev[i] - next[j]).norm()).sum() };
    let order: Vec<usize> = if n <= 7 {
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = (cost(&perm), perm.clone());
        permute(&mut perm, n, &mut |p| {
            let c = cost(p);
            if c < best.0 {
                best = (c, p.to_vec());
            }
        });
        best.1
    } else {
        let mut free: Vec<usize> = (0..n).collect();
        prev.iter()
            .map(|p| {
                let (k, _) = free
                    .iter()
                    .enumerate()
                    .min_by(|a, b| (p - next[*a.1]).norm().total_cmp(&(p - next[*b.1]).norm()))
                    .expect("same length");
                free.remove(k)
            })
            .collect()
    };
    order.into_iter().map(|j| next[j]).collect()
}

/// Heap's algorithm.
fn permute(a: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k <= 1 {
        visit(a);
        return;
    }
    for i in 0..k - 1 {
        permute(a, k - 1, visit);
        if k % 2 == 0 {
            a.swap(i, k - 1);
        } else {
            a.swap(0, k - 1);
        }
    }
    permute(a, k - 1, visit);
}

/// Index of the least damped oscillatory branch (largest `Re/|s|` among
/// roots with positive imaginary part) at the first locus point.
pub fn critical_branch(locus: &[LocusPoint]) -> Option<usize> {
    let first = locus.first()?;
    first
        .roots
        .iter()
        .enumerate()
        .filter(|(_, z)| z.im > 0.0)
        .max_by(|a, b| (a.1.re / a.1.norm()).total_cmp(&(b.1.re / b.1.norm())))
        .map(|(i, _)| i)
}
