//! Time-domain form of the uniform fixed-point kernel, by a sine integral
//! over the band and by a Bessel convolution, plus the equivalent bath
//! spectral density and a forward Laplace transform for closure checks.
//!
//! The fixed point k*(λ) has branch points at λ = ±iλ₊₋ and ±iλ₊₊ and
//! decays like 1/λ², so its inverse is a superposition of sines with
//! frequencies inside the band:
//!
//!   k(τ) = Λ ∫_q^1 sin(λ₊₊xτ)·√((x²−q²)(1−x²)) dx,  Λ = m·λ₊₊³/(2π).
//!
//! Substituting x² = q² + (1−q²)s turns the weight into √(s(1−s))/x(s), which
//! a Gauss-Chebyshev rule of the second kind integrates without endpoint
//! loss.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::laplace::{CavityKernel, KernelShape, KernelValues, MessageType};
use crate::model::Params;
use crate::quadrature::{boole_weights, ChebyshevU, GaussLegendre};

/// Uniform grid τ_j = j·step, j = 0..len.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub step: f64,
    pub len: usize,
}

impl TimeGrid {
    pub fn new(step: f64, len: usize) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::InvalidParam {
                name: "step",
                reason: format!("time step must be positive and finite, got {step}"),
            });
        }
        if len == 0 {
            return Err(Error::InvalidParam {
                name: "len",
                reason: "time grid needs at least one point".into(),
            });
        }
        Ok(Self { step, len })
    }

    /// `count` points covering [0, t_max].
    pub fn covering(t_max: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::InvalidParam {
                name: "count",
                reason: "need at least two points to cover an interval".into(),
            });
        }
        Self::new(t_max / (count - 1) as f64, count)
    }

    /// Grid over [0, t_max] with step at most `max_step`.
    pub fn with_max_step(t_max: f64, max_step: f64) -> Result<Self> {
        let intervals = (t_max / max_step).ceil().max(1.0) as usize;
        Self::covering(t_max, intervals + 1)
    }

    pub fn t_max(&self) -> f64 {
        self.step * (self.len - 1) as f64
    }

    pub fn at(&self, j: usize) -> f64 {
        self.step * j as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|j| self.at(j)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    BranchCut { order: usize },
    Bessel { fine_step: f64 },
    Oracle { modes: usize },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::BranchCut { .. } => "branch-cut",
            Method::Bessel { .. } => "bessel",
            Method::Oracle { .. } => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeKernel {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub method: Method,
    pub message_type: MessageType,
    pub params: Params<f64>,
    /// Non-fatal accuracy notes.
    pub warnings: Vec<String>,
}

impl TimeKernel {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Frequencies and weights of the discretised sine superposition.
#[derive(Debug, Clone)]
pub struct SineSum {
    pub freqs: Vec<f64>,
    pub coeffs: Vec<f64>,
}

impl SineSum {
    pub fn eval(&self, tau: f64) -> f64 {
        self.freqs.iter().zip(&self.coeffs).map(|(f, c)| c * (f * tau).sin()).sum()
    }

    /// Σ|cᵢ|, an upper bound on |k(τ)|.
    pub fn envelope(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }
}

/// Smallest Gauss-Chebyshev order that resolves the oscillations up to
/// `t_max`: 4 + 2·t_max·λ₊₊/π.
pub fn min_branch_cut_order(params: &Params<f64>, t_max: f64) -> usize {
    let upper = params.lambda_pp.unwrap_or(0.0);
    (4.0 + 2.0 * t_max * upper / PI).ceil() as usize
}

/// Default order: twice the minimum plus a margin for the endpoint factor.
pub fn default_branch_cut_order(params: &Params<f64>, t_max: f64) -> usize {
    2 * min_branch_cut_order(params, t_max) + 32
}

/// Quadrature nodes of the band integral as a sum of sines.
pub fn branch_cut_rule(params: &Params<f64>, order: usize) -> Result<SineSum> {
    let band = params.band()?;
    if band.q >= 1.0 {
        return Ok(SineSum {
            freqs: Vec::new(),
            coeffs: Vec::new(),
        });
    }
    let q2 = band.q * band.q;
    let pref = band.amplitude * (1.0 - q2).powi(2) / 2.0;
    let rule = ChebyshevU::new(order);
    let (freqs, coeffs) = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&x, &w)| {
            let s = 0.5 * (1.0 + x);
            let xs = (q2 + (1.0 - q2) * s).sqrt();
            (band.upper * xs, pref * 0.25 * w / xs)
        })
        .unzip();
    Ok(SineSum { freqs, coeffs })
}

/// Fixed-point kernel k(τ) (n-type) from the band sine integral. Without
/// an explicit order the default rule is used; an order below the minimum
/// is honoured but flagged.
pub fn branch_cut_kernel(params: &Params<f64>, grid: TimeGrid, quad_order: Option<usize>) -> Result<TimeKernel> {
    let min = min_branch_cut_order(params, grid.t_max());
    let order = quad_order.unwrap_or_else(|| default_branch_cut_order(params, grid.t_max()));
    let mut warnings = Vec::new();
    if order < min {
        warnings.push(format!(
            "quadrature order {order} is below {min} needed for tau_max = {}",
            grid.t_max()
        ));
    }
    let rule = branch_cut_rule(params, order)?;
    let values = (0..grid.len).map(|j| rule.eval(grid.at(j))).collect();
    Ok(TimeKernel {
        grid,
        values,
        method: Method::BranchCut { order },
        message_type: MessageType::NType,
        params: *params,
        warnings,
    })
}

/// f(t) = ∫₀ᵗ J₀(λ₊₋u)·J₀(λ₊₊(t−u)) du by composite 20-point Gauss-Legendre
/// with panels fine enough for both oscillations. f is odd in t.
pub fn bessel_convolution(params: &Params<f64>, t: f64) -> Result<f64> {
    let band = params.band()?;
    let gl = GaussLegendre::new(20);
    Ok(bessel_convolution_with(&gl, band.lower, band.upper, t))
}

fn bessel_convolution_with(gl: &GaussLegendre, lower: f64, upper: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let sign = t.signum();
    let t = t.abs();
    let panels = (t * (lower + upper) / PI).ceil() as usize + 1;
    sign * gl.integrate_composite(0.0, t, panels, |u| libm::j0(lower * u) * libm::j0(upper * (t - u)))
}

// Sixth-order central differences, stored from the centre outwards.
const D2: [f64; 4] = [-49.0 / 18.0, 1.5, -3.0 / 20.0, 1.0 / 90.0];
const D4: [f64; 5] = [91.0 / 8.0, -122.0 / 15.0, 169.0 / 60.0, -2.0 / 5.0, 7.0 / 240.0];

/// Symmetric stencil applied pairwise, so an odd function gives exactly zero
/// at the origin.
fn central(coeffs: &[f64], at: impl Fn(isize) -> f64, k: isize) -> f64 {
    coeffs[0] * at(k)
        + coeffs[1..]
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let d = i as isize + 1;
                c * (at(k + d) + at(k - d))
            })
            .sum::<f64>()
}

/// Largest fine step accepted by [`bessel_kernel`], 1/(20·λ₊₊).
pub fn bessel_max_step(params: &Params<f64>) -> Option<f64> {
    params.lambda_pp.map(|u| 1.0 / (20.0 * u))
}

/// Fixed-point kernel k(τ) (n-type) from the Bessel convolution:
///
///   k = (m/4)·(a⁴f − f⁗ − 2ω²f″ − ω⁴f),
///
/// with derivatives from sixth-order central differences on a fine grid
/// commensurate with `grid`. Near τ = 0 the stencils use the odd extension
/// of f, which carries the same information as the initial values
/// f(0) = 0, f′(0) = 1, f″(0) = 0, f‴(0) = −ω², f⁗(0) = 0.
pub fn bessel_kernel(params: &Params<f64>, grid: TimeGrid, fine_step: Option<f64>) -> Result<TimeKernel> {
    let band = params.band()?;
    let max_step = 1.0 / (20.0 * band.upper);
    let fine_step = fine_step.unwrap_or(max_step);
    if fine_step.is_nan() || fine_step <= 0.0 || fine_step > max_step * (1.0 + 1e-12) {
        return Err(Error::Accuracy(format!(
            "fine step {fine_step} is coarser than 1/(20 lambda_pp) = {max_step}"
        )));
    }
    let ratio = if grid.len > 1 {
        (grid.step / fine_step * (1.0 - 1e-12)).ceil().max(1.0) as usize
    } else {
        1
    };
    let h = if grid.len > 1 { grid.step / ratio as f64 } else { fine_step };
    let last = (grid.len - 1) * ratio;
    let gl = GaussLegendre::new(20);
    let f: Vec<f64> = (0..=last + 4)
        .map(|k| bessel_convolution_with(&gl, band.lower, band.upper, k as f64 * h))
        .collect();
    let at = |k: isize| -> f64 {
        if k < 0 {
            -f[(-k) as usize]
        } else {
            f[k as usize]
        }
    };
    let (h2, h4) = (h * h, h.powi(4));
    let w2 = params.omega_sq;
    let a4 = band.a_sq * band.a_sq;
    let values = (0..grid.len)
        .map(|j| {
            let k = (j * ratio) as isize;
            let d2 = central(&D2, at, k) / h2;
            let d4 = central(&D4, at, k) / h4;
            let f0 = at(k);
            0.25 * params.mass * (a4 * f0 - d4 - 2.0 * w2 * d2 - w2 * w2 * f0)
        })
        .collect();
    Ok(TimeKernel {
        grid,
        values,
        method: Method::Bessel { fine_step: h },
        message_type: MessageType::NType,
        params: *params,
        warnings: Vec::new(),
    })
}

/// Equivalent bath spectral density, (m/(2π))·√((ω²−λ₊₋²)(λ₊₊²−ω²)) on the
/// band and 0 elsewhere. Its sine transform ∫J(ω)sin(ωτ)dω is the
/// fixed-point kernel.
pub fn spectral_density(params: &Params<f64>, omega_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    let band = params.band()?;
    let (lo2, hi2) = (band.lower * band.lower, band.upper * band.upper);
    let pref = params.mass / (2.0 * PI);
    Ok(omega_grid
        .iter()
        .map(|&w| {
            let w2 = w * w;
            let j = if w > band.lower && w < band.upper {
                pref * ((w2 - lo2) * (hi2 - w2)).max(0.0).sqrt()
            } else {
                0.0
            };
            (w, j)
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct LaplaceEstimate {
    pub kernel: CavityKernel<f64>,
    /// envelope·e^{−λT}/λ per grid point.
    pub truncation_bound: Vec<f64>,
    /// Window actually integrated (a multiple of four steps).
    pub window: f64,
    pub warnings: Vec<String>,
}

/// ∫₀^T e^{−λτ}k(τ)dτ by composite Boole on the kernel samples.
pub fn forward_laplace(tk: &TimeKernel, lambda_grid: &[f64], window_t: f64) -> Result<LaplaceEstimate> {
    let shape = KernelShape::laplace(lambda_grid.to_vec())?;
    let step = tk.grid.step;
    if window_t > tk.grid.t_max() * (1.0 + 1e-12) {
        return Err(Error::InvalidParam {
            name: "window_t",
            reason: format!("window {window_t} exceeds the sampled range {}", tk.grid.t_max()),
        });
    }
    let steps = (window_t / step * (1.0 + 1e-12)).floor() as usize;
    let intervals = steps - steps % 4;
    if intervals == 0 {
        return Err(Error::InvalidParam {
            name: "window_t",
            reason: "window shorter than four time steps".into(),
        });
    }
    let window = intervals as f64 * step;
    let mut warnings = Vec::new();
    if let Some(max) = bessel_max_step(&tk.params) {
        if step > max * (1.0 + 1e-9) {
            warnings.push(format!("time step {step} is coarser than 1/(20 lambda_pp) = {max}"));
        }
    }
    let w = boole_weights(intervals, step);
    let envelope = tk.max_abs();
    let mut values = Vec::with_capacity(lambda_grid.len());
    let mut bound = Vec::with_capacity(lambda_grid.len());
    for &l in lambda_grid {
        if l * step > 0.25 {
            warnings.push(format!("lambda*step = {} > 0.25 at lambda = {l}: exponential under-resolved", l * step));
        }
        if l * window < 20.0 {
            warnings.push(format!("lambda*T = {} < 20 at lambda = {l}: truncation dominates", l * window));
        }
        let v: f64 = (0..=intervals).map(|j| w[j] * (-l * tk.grid.at(j)).exp() * tk.values[j]).sum();
        values.push(v);
        bound.push(if l > 0.0 { envelope * (-l * window).exp() / l } else { f64::INFINITY });
    }
    Ok(LaplaceEstimate {
        kernel: CavityKernel::new(shape, KernelValues::Real(values), tk.message_type)?,
        truncation_bound: bound,
        window,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplace::closed_form_fixed_point;
    use approx::assert_relative_eq;

    fn right() -> Params<f64> {
        Params::new(20, 0.1, 20.0, 0.5).unwrap()
    }

    fn left() -> Params<f64> {
        Params::new(5, 10.0, 1.0, 0.5).unwrap()
    }

    #[test]
    fn grid_helpers() {
        let g = TimeGrid::covering(5.0, 11).unwrap();
        assert_eq!(g.step, 0.5);
        assert_eq!(g.t_max(), 5.0);
        assert!(TimeGrid::new(0.0, 3).is_err());
        assert!(TimeGrid::new(0.1, 0).is_err());
        let g = TimeGrid::with_max_step(1.0, 0.3).unwrap();
        assert_eq!(g.len, 5);
    }

    #[test]
    fn branch_cut_vanishes_at_origin_and_is_bounded() {
        let p = right();
        let g = TimeGrid::covering(5.0, 501).unwrap();
        let k = branch_cut_kernel(&p, g, None).unwrap();
        assert_eq!(k.values[0], 0.0);
        assert!(k.warnings.is_empty());
        let env = branch_cut_rule(&p, 400).unwrap().envelope();
        assert!(k.values.iter().all(|v| v.abs() <= env));
    }

    #[test]
    fn envelope_matches_direct_band_integral() {
        // Λ∫_q^1 √((x²−q²)(1−x²)) dx by Gauss-Legendre after x = q + (1−q)sin²θ
        let p = right();
        let b = p.band().unwrap();
        let gl = GaussLegendre::new(40);
        let direct = b.amplitude
            * gl.integrate_composite(0.0, PI / 2.0, 8, |t| {
                let x = b.q + (1.0 - b.q) * t.sin().powi(2);
                let dx = 2.0 * (1.0 - b.q) * t.sin() * t.cos();
                ((x * x - b.q * b.q) * (1.0 - x * x)).max(0.0).sqrt() * dx
            });
        let env = branch_cut_rule(&p, 400).unwrap().envelope();
        assert_relative_eq!(env, direct, max_relative = 1e-12);
    }

    #[test]
    fn low_order_is_flagged() {
        let p = right();
        let g = TimeGrid::covering(5.0, 11).unwrap();
        let k = branch_cut_kernel(&p, g, Some(10)).unwrap();
        assert_eq!(k.warnings.len(), 1);
    }

    #[test]
    fn decoupled_kernel_is_zero() {
        let p = Params::new(5, 10.0, 0.0, 0.5).unwrap();
        let g = TimeGrid::covering(1.0, 11).unwrap();
        let k = branch_cut_kernel(&p, g, None).unwrap();
        assert!(k.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bessel_initial_values() {
        let p = right();
        let h = bessel_max_step(&p).unwrap();
        let f1 = bessel_convolution(&p, h).unwrap();
        let f2 = bessel_convolution(&p, 2.0 * h).unwrap();
        assert_eq!(bessel_convolution(&p, 0.0).unwrap(), 0.0);
        // f(t) = t − ω²t³/6 + O(t⁵); central differences through the odd extension
        let slope = (8.0 * f1 - f2) / (6.0 * h);
        assert_relative_eq!(slope, 1.0, max_relative = 1e-6);
        let third = (f2 - 2.0 * f1) / h.powi(3);
        assert_relative_eq!(third, -p.omega_sq, max_relative = 1e-3);
        assert_relative_eq!(bessel_convolution(&p, -0.3).unwrap(), -bessel_convolution(&p, 0.3).unwrap());
    }

    #[test]
    fn bessel_step_is_checked() {
        let p = right();
        let g = TimeGrid::covering(1.0, 11).unwrap();
        let too_coarse = 1.5 * bessel_max_step(&p).unwrap();
        assert!(matches!(bessel_kernel(&p, g, Some(too_coarse)), Err(Error::Accuracy(_))));
    }

    #[test]
    fn bessel_agrees_with_branch_cut_left_panel() {
        let p = left();
        let g = TimeGrid::covering(5.0, 501).unwrap();
        let a = branch_cut_kernel(&p, g, None).unwrap();
        let b = bessel_kernel(&p, g, None).unwrap();
        assert_eq!(b.values[0], 0.0);
        let rms = crate::num::rel_rms(&b.values, &a.values);
        assert!(rms < 1e-4, "{rms}");
    }

    #[test]
    fn spectral_density_support() {
        let p = right();
        let b = p.band().unwrap();
        let grid: Vec<f64> = (0..2000).map(|i| i as f64 * 0.03).collect();
        for (w, j) in spectral_density(&p, &grid).unwrap() {
            if w <= b.lower || w >= b.upper {
                assert_eq!(j, 0.0);
            } else {
                assert!(j > 0.0);
            }
        }
        let edges = spectral_density(&p, &[b.lower, b.upper]).unwrap();
        assert_eq!(edges[0].1, 0.0);
        assert_eq!(edges[1].1, 0.0);
    }

    #[test]
    fn spectral_sine_transform_is_the_kernel() {
        // ∫J(ω)sin(ωτ)dω with ω = λ₊₊x(s) on the same Chebyshev nodes:
        // dω = λ₊₊(1−q²)/(2x) ds and J carries √(s(1−s))(1−q²)λ₊₊² m/(2π).
        let p = right();
        let b = p.band().unwrap();
        let order = 300;
        let rule = ChebyshevU::new(order);
        let q2 = b.q * b.q;
        for &tau in &[0.1, 0.7, 2.3, 4.9] {
            let via_j = rule.integrate_unit(|s| {
                let x = (q2 + (1.0 - q2) * s).sqrt();
                let w = b.upper * x;
                let j = spectral_density(&p, &[w]).unwrap()[0].1;
                let weight = (s * (1.0 - s)).sqrt();
                // divide out the rule weight
                j / weight * (w * tau).sin() * b.upper * (1.0 - q2) / (2.0 * x)
            });
            let k = branch_cut_rule(&p, order).unwrap().eval(tau);
            assert!((via_j - k).abs() <= 1e-10 * k.abs().max(1.0), "{via_j} vs {k}");
        }
    }

    #[test]
    fn forward_laplace_recovers_closed_form() {
        let p = left();
        let t = 20.0;
        let g = TimeGrid::with_max_step(t, bessel_max_step(&p).unwrap()).unwrap();
        let k = branch_cut_kernel(&p, g, None).unwrap();
        let lambdas = [2.0, 3.0, 5.0, 10.0];
        let est = forward_laplace(&k, &lambdas, t).unwrap();
        for (i, &l) in lambdas.iter().enumerate() {
            let want = closed_form_fixed_point(&p, l).unwrap();
            let got = est.kernel.real_values().unwrap()[i];
            assert!(((got - want) / want).abs() < 1e-6, "lambda {l}: {got} vs {want}");
            assert!(est.truncation_bound[i] < 1e-6 * want);
        }
        assert!(est.warnings.is_empty());
    }

    #[test]
    fn forward_laplace_is_linear() {
        let p = left();
        let g = TimeGrid::covering(4.0, 401).unwrap();
        let k = branch_cut_kernel(&p, g, None).unwrap();
        let mut k3 = k.clone();
        k3.values.iter_mut().for_each(|v| *v *= 3.0);
        let a = forward_laplace(&k, &[5.0, 10.0], 4.0).unwrap();
        let b = forward_laplace(&k3, &[5.0, 10.0], 4.0).unwrap();
        for (x, y) in a.kernel.real_values().unwrap().iter().zip(b.kernel.real_values().unwrap()) {
            assert_relative_eq!(3.0 * x, *y, max_relative = 1e-14);
        }
        let mut zero = k.clone();
        zero.values.iter_mut().for_each(|v| *v = 0.0);
        let z = forward_laplace(&zero, &[1.0], 4.0).unwrap();
        assert_eq!(z.kernel.real_values().unwrap()[0], 0.0);
        let short = forward_laplace(&k, &[1.0], 4.0).unwrap();
        assert!(!short.warnings.is_empty());
    }
}
