//! Cavity kernels on Laplace and Fourier grids, the Vernon step, the uniform
//! one-dimensional map and its closed-form fixed point, and the multiplier
//! acting on the real (noise) kernel.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::model::Params;
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Real Laplace variable λ.
    Laplace,
    /// Real frequency ν.
    Fourier,
}

/// Which half of the Feynman-Vernon pair a kernel represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    /// Dissipation kernel k_I.
    Imaginary,
    /// Noise kernel k_R.
    Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageType {
    /// Sum over the upstream branches entering a node.
    NType,
    /// Single branch, after integrating out one oscillator.
    MType,
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelValues<T> {
    Real(Vec<T>),
    Complex(Vec<Complex<T>>),
    /// `ln|v|` and `arg v`, used once magnitudes leave the representable range.
    LogPolar { log_abs: Vec<T>, phase: Vec<T> },
}

impl<T: Real> KernelValues<T> {
    pub fn len(&self) -> usize {
        match self {
            KernelValues::Real(v) => v.len(),
            KernelValues::Complex(v) => v.len(),
            KernelValues::LogPolar { log_abs, .. } => log_abs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Value at index `i` as a complex number (LogPolar is exponentiated and
    /// may overflow).
    pub fn complex_at(&self, i: usize) -> Complex<T> {
        match self {
            KernelValues::Real(v) => Complex::new(v[i], T::zero()),
            KernelValues::Complex(v) => v[i],
            KernelValues::LogPolar { log_abs, phase } => Complex::from_polar(log_abs[i].exp(), phase[i]),
        }
    }
}

/// Grid and tags shared by kernels that can be combined pointwise.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelShape<T> {
    pub grid: Vec<T>,
    pub mode: Mode,
    pub role: Role,
}

impl<T: Real> KernelShape<T> {
    pub fn new(grid: Vec<T>, mode: Mode, role: Role) -> Result<Self> {
        if grid.iter().any(|x| !x.is_finite()) {
            return Err(Error::Shape("grid contains non-finite points".into()));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Shape("grid must be strictly increasing".into()));
        }
        if mode == Mode::Laplace && grid.first().is_some_and(|&x| x < T::zero()) {
            return Err(Error::Shape("Laplace grid must be non-negative".into()));
        }
        Ok(Self { grid, mode, role })
    }

    pub fn laplace(grid: Vec<T>) -> Result<Self> {
        Self::new(grid, Mode::Laplace, Role::Imaginary)
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CavityKernel<T> {
    pub shape: KernelShape<T>,
    pub values: KernelValues<T>,
    pub message_type: MessageType,
}

impl<T: Real> CavityKernel<T> {
    pub fn new(shape: KernelShape<T>, values: KernelValues<T>, message_type: MessageType) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::Shape(format!(
                "{} values for a grid of {} points",
                values.len(),
                shape.len()
            )));
        }
        match (shape.mode, shape.role, &values) {
            (Mode::Laplace, Role::Imaginary, KernelValues::Real(_)) => {}
            (Mode::Laplace, Role::Imaginary, _) => {
                return Err(Error::Shape("Laplace-side dissipation kernels are real".into()))
            }
            (Mode::Fourier, _, KernelValues::Real(_)) => {
                return Err(Error::Shape("Fourier-side kernels carry complex values".into()))
            }
            _ => {}
        }
        let k = Self {
            shape,
            values,
            message_type,
        };
        if k.shape.mode == Mode::Fourier && !k.is_hermitian(T::lit(1e-9)) {
            return Err(Error::Shape("Fourier kernel violates v(-nu) = conj v(nu)".into()));
        }
        Ok(k)
    }

    pub fn zeros(shape: KernelShape<T>, message_type: MessageType) -> Self {
        let n = shape.len();
        let values = match shape.mode {
            Mode::Laplace if shape.role == Role::Imaginary => KernelValues::Real(vec![T::zero(); n]),
            _ => KernelValues::Complex(vec![Complex::new(T::zero(), T::zero()); n]),
        };
        Self {
            shape,
            values,
            message_type,
        }
    }

    /// Real values, if the kernel stores them.
    pub fn real_values(&self) -> Option<&[T]> {
        match &self.values {
            KernelValues::Real(v) => Some(v),
            _ => None,
        }
    }

    /// Checks v(−ν) = conj v(ν) for every pair of mirrored grid points, to
    /// relative tolerance `tol`.
    pub fn is_hermitian(&self, tol: T) -> bool {
        let g = &self.shape.grid;
        let (mut i, mut j) = (0usize, g.len());
        // Two-pointer sweep over the sorted grid looking for ν and −ν.
        while i < j {
            let (a, b) = (g[i], g[j - 1]);
            let s = a + b;
            let scale = a.abs().max(b.abs()).max(T::one());
            if s.abs() <= T::lit(1e-12) * scale {
                if let KernelValues::LogPolar { log_abs, phase } = &self.values {
                    if (log_abs[i] - log_abs[j - 1]).abs() > tol * log_abs[i].abs().max(T::one())
                        || (phase[i] + phase[j - 1]).abs() > tol
                    {
                        return false;
                    }
                } else {
                    let (u, v) = (self.values.complex_at(i), self.values.complex_at(j - 1));
                    let d = (u - v.conj()).norm();
                    if d > tol * u.norm().max(v.norm()).max(T::min_positive_value()) && d > T::zero() {
                        return false;
                    }
                }
                i += 1;
                j -= 1;
            } else if s < T::zero() {
                i += 1;
            } else {
                j -= 1;
            }
        }
        true
    }
}

/// Twice the bare oscillator response on the Laplace side, (2/m)/(λ²+ω²).
pub fn g0_laplace<T: Real>(params: &Params<T>, lambda: T) -> T {
    g0_with(params.mass, params.omega_sq, lambda)
}

pub(crate) fn g0_with<T: Real>(mass: T, omega_sq: T, lambda: T) -> T {
    T::lit(2.0) / (mass * (lambda * lambda + omega_sq))
}

fn pole_tolerance<T: Real>() -> T {
    T::lit(1e-14).max(T::lit(4.0) * T::epsilon())
}

/// `prefactor·g0/(1 − g0·k_in)`, failing when the denominator vanishes
/// relative to its terms.
pub(crate) fn vernon_core<T: Real>(prefactor: T, g0: T, k_in: T, lambda: T) -> Result<T> {
    let gk = g0 * k_in;
    let denom = T::one() - gk;
    if !denom.is_finite() || denom.abs() <= pole_tolerance::<T>() * gk.abs().max(T::one()) {
        return Err(Error::Pole { lambda: lambda.as_f64() });
    }
    Ok(prefactor * g0 / denom)
}

/// One edge of the Vernon transform for the dissipation kernel:
/// (C_edge²/2)·G̃₀/(1 − G̃₀·k_in), mapping the n-type input to the m-type
/// output.
pub fn vernon_imag<T: Real>(k_in: T, params: &Params<T>, c_edge: T, lambda: T) -> Result<T> {
    let half = T::lit(0.5);
    vernon_core(half * c_edge * c_edge, g0_laplace(params, lambda), k_in, lambda)
}

/// Pointwise [`vernon_imag`] over a Laplace-mode n-type kernel.
pub fn vernon_imag_kernel<T: Real>(input: &CavityKernel<T>, params: &Params<T>, c_edge: T) -> Result<CavityKernel<T>> {
    let vals = input
        .real_values()
        .ok_or_else(|| Error::Shape("vernon_imag_kernel needs a real Laplace kernel".into()))?;
    let out = input
        .shape
        .grid
        .iter()
        .zip(vals)
        .map(|(&l, &k)| vernon_imag(k, params, c_edge, l))
        .collect::<Result<Vec<_>>>()?;
    Ok(CavityKernel {
        shape: input.shape.clone(),
        values: KernelValues::Real(out),
        message_type: MessageType::MType,
    })
}

/// Sums m-type messages on a common shape into an n-type kernel. An empty
/// list gives the zero kernel of a leaf.
pub fn bp_sum<T: Real>(shape: &KernelShape<T>, messages: &[&CavityKernel<T>]) -> Result<CavityKernel<T>> {
    let mut acc = CavityKernel::zeros(shape.clone(), MessageType::NType);
    for m in messages {
        if m.shape != *shape {
            return Err(Error::Shape("messages must share grid, mode and role".into()));
        }
        if m.message_type != MessageType::MType {
            return Err(Error::Shape("bp_sum expects m-type messages".into()));
        }
        match (&mut acc.values, &m.values) {
            (KernelValues::Real(a), KernelValues::Real(b)) => a.iter_mut().zip(b).for_each(|(x, y)| *x = *x + *y),
            (KernelValues::Complex(a), KernelValues::Complex(b)) => {
                a.iter_mut().zip(b).for_each(|(x, y)| *x = *x + *y)
            }
            (KernelValues::Complex(a), KernelValues::Real(b)) => {
                a.iter_mut().zip(b).for_each(|(x, y)| x.re = x.re + *y)
            }
            _ => return Err(Error::Shape("cannot sum log-polar kernels".into())),
        }
    }
    Ok(acc)
}

/// ((n−1)C²/2)·G̃₀/(1 − G̃₀·k): the n-type message after one more generation
/// of a regular tree.
pub fn uniform_map<T: Real>(k: T, params: &Params<T>, lambda: T) -> Result<T> {
    let c2 = params.coupling * params.coupling;
    vernon_core(T::lit(0.5) * params.branches() * c2, g0_laplace(params, lambda), k, lambda)
}

/// Decaying root of the fixed-point quadratic, m(λ²+ω²)/4·(1 − √disc),
/// written as 2A·G̃₀/(1 + √disc) with A = (n−1)C²/2 to avoid cancellation.
pub fn closed_form_fixed_point<T: Real>(params: &Params<T>, lambda: T) -> Result<T> {
    let disc = params.discriminant(lambda);
    if disc < T::zero() {
        return Err(Error::NoFixedPoint {
            lambda: lambda.as_f64(),
            threshold: params.lambda_star().map(|l| l.as_f64()),
        });
    }
    let a = T::lit(0.5) * params.branches() * params.coupling * params.coupling;
    Ok(T::lit(2.0) * a * g0_laplace(params, lambda) / (T::one() + disc.sqrt()))
}

/// Residual of the fixed-point quadratic G̃₀k² − k + A·G̃₀ = 0, relative to
/// the size of its terms.
pub fn fixed_point_residual<T: Real>(params: &Params<T>, lambda: T, k: T) -> T {
    let g = g0_laplace(params, lambda);
    let ag = T::lit(0.5) * params.branches() * params.coupling * params.coupling * g;
    let terms = (g * k * k).abs() + k.abs() + ag.abs();
    if terms == T::zero() {
        return T::zero();
    }
    (g * k * k - k + ag).abs() / terms
}

/// Closed-form fixed point over a Laplace shape (n-type).
pub fn closed_form_kernel<T: Real>(params: &Params<T>, shape: &KernelShape<T>) -> Result<CavityKernel<T>> {
    if shape.mode != Mode::Laplace {
        return Err(Error::Shape("closed_form_kernel needs a Laplace grid".into()));
    }
    let vals = shape
        .grid
        .iter()
        .map(|&l| closed_form_fixed_point(params, l))
        .collect::<Result<Vec<_>>>()?;
    CavityKernel::new(shape.clone(), KernelValues::Real(vals), MessageType::NType)
}

/// Slope of the uniform map at its fixed point, k*²/A. Below one the fixed
/// point attracts geometrically with this ratio.
pub fn contraction_rate<T: Real>(params: &Params<T>, lambda: T) -> Result<T> {
    let k = closed_form_fixed_point(params, lambda)?;
    let a = T::lit(0.5) * params.branches() * params.coupling * params.coupling;
    if a == T::zero() {
        return Ok(T::zero());
    }
    Ok(k * k / a)
}

/// How an orbit of the uniform map ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrbitClass {
    Converged { iterations: usize },
    /// Returned to within tolerance of an earlier point after `period` steps.
    Periodic { period: usize },
    /// Neither converged nor periodic, but kept winding through the pole of
    /// the map. The map is a Möbius transformation; beyond the threshold it
    /// is a rotation of the projective line, so generic orbits are
    /// quasi-periodic rather than short cycles.
    Oscillating,
    /// Monotone and still moving when the step budget ran out.
    Unsettled,
    /// Hit the pole of the map at this step.
    Pole { step: usize },
    /// Produced a non-finite value at this step.
    Diverged { step: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Orbit<T> {
    /// x₀, x₁, … up to the last computed point.
    pub values: Vec<T>,
    pub class: OrbitClass,
    /// max − min over the orbit.
    pub diameter: T,
    /// Steps per passage through the pole, when any passage occurred.
    pub empirical_period: Option<f64>,
}

impl<T> Orbit<T> {
    pub fn converged(&self) -> bool {
        matches!(self.class, OrbitClass::Converged { .. })
    }

    pub fn oscillates(&self) -> bool {
        matches!(self.class, OrbitClass::Periodic { .. } | OrbitClass::Oscillating)
    }
}

fn settled<T: Real>(prev: T, next: T, tol: T) -> bool {
    (next - prev).abs() <= tol * prev.abs().max(T::one())
}

/// Iterates [`uniform_map`] from `x0` for at most `steps` steps. Convergence
/// means |x_{i+1} − x_i| ≤ tol·max(1, |x_i|).
pub fn orbit<T: Real>(params: &Params<T>, lambda: T, x0: T, steps: usize, tol: T) -> Orbit<T> {
    let mut values = Vec::with_capacity(steps.min(1 << 16) + 1);
    values.push(x0);
    let mut class = None;
    let mut x = x0;
    for i in 0..steps {
        let next = match uniform_map(x, params, lambda) {
            Ok(v) => v,
            Err(_) => {
                class = Some(OrbitClass::Pole { step: i + 1 });
                break;
            }
        };
        if !next.is_finite() {
            class = Some(OrbitClass::Diverged { step: i + 1 });
            break;
        }
        values.push(next);
        if settled(x, next, tol) {
            class = Some(OrbitClass::Converged { iterations: i + 1 });
            break;
        }
        x = next;
    }

    let descents = values.windows(2).filter(|w| w[1] < w[0]).count();
    let ascents = values.windows(2).filter(|w| w[1] > w[0]).count();
    let class = class.unwrap_or_else(|| {
        let last = values.len() - 1;
        let period = (1..=64.min(last / 2)).find(|&p| {
            (0..p.min(last - p)).all(|j| settled(values[last - j - p], values[last - j], tol))
        });
        match period {
            Some(p) => OrbitClass::Periodic { period: p },
            None if descents >= 2 && ascents >= 2 => OrbitClass::Oscillating,
            None => OrbitClass::Unsettled,
        }
    });
    let (lo, hi) = values
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let steps_taken = values.len() - 1;
    let empirical_period = (descents > 0 && !matches!(class, OrbitClass::Converged { .. }))
        .then(|| steps_taken as f64 / descents as f64);
    Orbit {
        values,
        class,
        diameter: hi - lo,
        empirical_period,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointIteration<T> {
    pub value: T,
    pub iterations: usize,
    pub converged: bool,
    /// The orbit keeps oscillating instead of settling (periodic or
    /// quasi-periodic).
    pub cycle_detected: bool,
    pub class: OrbitClass,
    pub empirical_period: Option<f64>,
}

/// Iterates the uniform map from zero. Failure to converge is reported in
/// the result, not as an error.
pub fn iterate_fixed_point<T: Real>(
    params: &Params<T>,
    lambda: T,
    tol: T,
    max_iter: usize,
) -> Result<FixedPointIteration<T>> {
    if tol.is_nan() || tol <= T::zero() {
        return Err(Error::InvalidParam {
            name: "tol",
            reason: format!("must be positive, got {tol}"),
        });
    }
    let o = orbit(params, lambda, T::zero(), max_iter, tol);
    Ok(FixedPointIteration {
        value: *o.values.last().expect("orbit starts with x0"),
        iterations: o.values.len() - 1,
        converged: o.converged(),
        cycle_detected: o.oscillates(),
        class: o.class,
        empirical_period: o.empirical_period,
    })
}

/// Fixed point continued to the real frequency axis, λ → −iν.
///
/// Outside the band [λ₊₋, λ₊₊] the value is real. Inside, the square root
/// is imaginary and its sign is chosen so that Im k̂ ≤ 0 for ν ≥ 0; the
/// product k̂(ν)·k̂(−ν) = (n−1)C²/2 does not depend on that choice.
pub fn fourier_fixed_point<T: Real>(params: &Params<T>, nu: T) -> Complex<T> {
    let zero = T::zero();
    let c2 = params.coupling * params.coupling;
    if c2 == zero {
        return Complex::new(zero, zero);
    }
    let m = params.mass;
    let x = params.omega_sq - nu * nu;
    // a⁴ = 8(n−1)C²/m²
    let a4 = T::lit(8.0) * params.branches() * c2 / (m * m);
    let quarter = T::lit(0.25);
    // Points within rounding of a band edge are treated as on the edge;
    // otherwise the square root would turn an O(ε) error into O(√ε).
    let edge_tol = T::lit(16.0) * T::epsilon() * a4;
    if x * x - a4 > edge_tol {
        let s = (T::one() - a4 / (x * x)).sqrt();
        let a = T::lit(0.5) * params.branches() * c2;
        Complex::new(T::lit(4.0) * a / (m * x * (T::one() + s)), zero)
    } else {
        let sign = if nu < zero { T::one() } else { -T::one() };
        Complex::new(quarter * m * x, sign * quarter * m * (a4 - x * x).max(T::zero()).sqrt())
    }
}

/// Per-iteration gain of a Fourier component of the noise kernel at the
/// uniform dissipation fixed point, 4|k̂(ν)|²/((n−1)C²). Equal to 2 on the
/// closed band and below 2 elsewhere.
pub fn real_multiplier<T: Real>(params: &Params<T>, nu: T) -> T {
    let c2 = params.coupling * params.coupling;
    if c2 == T::zero() {
        return T::zero();
    }
    let k = fourier_fixed_point(params, nu);
    T::lit(4.0) * k.norm_sqr() / (params.branches() * c2)
}

/// Iterates k_R ← A(ν)·k_R on a Fourier-mode kernel. Once any magnitude
/// exceeds `cap` the remaining steps are kept in log-polar form.
pub fn real_kernel_orbit<T: Real>(
    k0: &CavityKernel<T>,
    params: &Params<T>,
    steps: usize,
    cap: T,
) -> Result<Vec<CavityKernel<T>>> {
    if k0.shape.mode != Mode::Fourier {
        return Err(Error::Shape("real_kernel_orbit needs a Fourier-mode kernel".into()));
    }
    let gains: Vec<T> = k0.shape.grid.iter().map(|&nu| real_multiplier(params, nu)).collect();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(k0.clone());
    for _ in 0..steps {
        let prev = out.last().expect("nonempty");
        let values = match &prev.values {
            KernelValues::Complex(v) => {
                let next: Vec<Complex<T>> = v.iter().zip(&gains).map(|(z, &g)| *z * g).collect();
                if next.iter().any(|z| z.norm() > cap || !z.norm().is_finite()) {
                    to_log_polar(v, &gains)
                } else {
                    KernelValues::Complex(next)
                }
            }
            KernelValues::LogPolar { log_abs, phase } => KernelValues::LogPolar {
                log_abs: log_abs.iter().zip(&gains).map(|(l, g)| *l + g.ln()).collect(),
                phase: phase.clone(),
            },
            KernelValues::Real(_) => unreachable!("Fourier kernels are complex"),
        };
        out.push(CavityKernel {
            shape: prev.shape.clone(),
            values,
            message_type: prev.message_type,
        });
    }
    Ok(out)
}

fn to_log_polar<T: Real>(v: &[Complex<T>], gains: &[T]) -> KernelValues<T> {
    KernelValues::LogPolar {
        log_abs: v.iter().zip(gains).map(|(z, g)| z.norm().ln() + g.ln()).collect(),
        phase: v.iter().map(|z| z.arg()).collect(),
    }
}
