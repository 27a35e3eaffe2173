//! Finite-time, non-stationary Vernon transform on a uniform two-time grid.
//!
//! Kernels are stored by absolute times: `at(i, j)` is K(t_i, s_j) with
//! t_i = i·dt, so the dressed response G(t, s−t) sits at `(t, s)`. The grid
//! starts at the preparation time τ = 0 and ends at T = (len−1)·dt.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::Params;
use crate::quadrature::boole_weights;

/// Gaussian thermal state of a single oscillator (ℏ = 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalState {
    pub beta: f64,
    pub a_prime: f64,
    pub c_prime: f64,
    pub length_scale: f64,
}

/// A′ = (mω/2)·tanh(βω/2), C′ = (mω/2)·coth(βω/2). β = ∞ gives the ground
/// state.
pub fn thermal_init(beta: f64, params: &Params<f64>) -> Result<ThermalState> {
    if beta.is_nan() || beta <= 0.0 {
        return Err(Error::InvalidParam {
            name: "beta",
            reason: format!("inverse temperature must be positive, got {beta}"),
        });
    }
    let w = params.omega();
    let half = params.mass * w / 2.0;
    let th = (beta * w / 2.0).tanh();
    let (a_prime, c_prime) = (half * th, half / th);
    Ok(ThermalState {
        beta,
        a_prime,
        c_prime,
        length_scale: 1.0 / (a_prime * c_prime).sqrt(),
    })
}

/// Kernel on the square grid (t_i, s_j), row-major in t.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoTimeKernel {
    pub dt: f64,
    pub len: usize,
    pub values: Vec<f64>,
    /// Entries with s < t are structurally zero.
    pub causal: bool,
}

impl TwoTimeKernel {
    fn check_grid(dt: f64, len: usize) -> Result<()> {
        if !(dt.is_finite() && dt > 0.0) || len < 2 {
            return Err(Error::InvalidParam {
                name: "dt",
                reason: format!("two-time grid needs dt > 0 and at least two points (dt = {dt}, len = {len})"),
            });
        }
        Ok(())
    }

    pub fn zeros(dt: f64, len: usize, causal: bool) -> Result<Self> {
        Self::check_grid(dt, len)?;
        Ok(Self { dt, len, values: vec![0.0; len * len], causal })
    }

    /// Causal kernel from f(t, u), u = s − t ≥ 0.
    pub fn causal_from_fn(dt: f64, len: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut k = Self::zeros(dt, len, true)?;
        for i in 0..len {
            for j in i..len {
                k.values[i * len + j] = f(i as f64 * dt, (j - i) as f64 * dt);
            }
        }
        Ok(k)
    }

    /// Causal kernel depending only on s − t.
    pub fn stationary(dt: f64, samples: &[f64]) -> Result<Self> {
        let len = samples.len();
        let mut k = Self::zeros(dt, len, true)?;
        for i in 0..len {
            k.values[i * len + i..(i + 1) * len].copy_from_slice(&samples[..len - i]);
        }
        Ok(k)
    }

    /// Full (non-causal) kernel from f(t, s).
    pub fn full_from_fn(dt: f64, len: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut k = Self::zeros(dt, len, false)?;
        for i in 0..len {
            for j in 0..len {
                k.values[i * len + j] = f(i as f64 * dt, j as f64 * dt);
            }
        }
        Ok(k)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len + j]
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn t_final(&self) -> f64 {
        self.time(self.len - 1)
    }

    /// Row t_i as a function of u = s − t_i.
    pub fn row_from_diagonal(&self, i: usize) -> &[f64] {
        &self.values[i * self.len + i..(i + 1) * self.len]
    }

    pub fn is_causal(&self) -> bool {
        (0..self.len).all(|i| (0..i).all(|j| self.at(i, j) == 0.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.len {
            for j in 0..i {
                worst = worst.max((self.at(i, j) - self.at(j, i)).abs());
            }
        }
        worst
    }

    fn same_grid(&self, other: &Self) -> Result<()> {
        if self.len != other.len || (self.dt - other.dt).abs() > 1e-12 * self.dt {
            return Err(Error::Shape(format!(
                "two-time grids differ: ({}, {}) vs ({}, {})",
                self.len, self.dt, other.len, other.dt
            )));
        }
        Ok(())
    }
}

/// Bare doubled response G₀(u) = (2/(mω))·sin(ωu) for u ≥ 0.
pub fn bare_response(params: &Params<f64>, u: f64) -> f64 {
    if u < 0.0 {
        return 0.0;
    }
    let w = params.omega();
    2.0 / (params.mass * w) * (w * u).sin()
}

/// Trapezoid weight of node `k` on the node range [lo, hi].
#[inline]
fn trap(k: usize, lo: usize, hi: usize, dt: f64) -> f64 {
    if lo == hi {
        0.0
    } else if k == lo || k == hi {
        0.5 * dt
    } else {
        dt
    }
}

/// ∫_t^T dt₁ ∫_{t₁}^T dt₂ G₀(t₁−t)·kI(t₁, t₂−t₁)·g(t₂, s−t₂) by the
/// trapezoid rule. Both factors are causal, so the integrals end at s.
pub fn apply_twinning_operator(ki: &TwoTimeKernel, params: &Params<f64>, g: &TwoTimeKernel) -> Result<TwoTimeKernel> {
    ki.same_grid(g)?;
    let (n, dt) = (ki.len, ki.dt);
    let g0: Vec<f64> = (0..n).map(|k| bare_response(params, k as f64 * dt)).collect();
    let mut out = TwoTimeKernel::zeros(dt, n, true)?;
    let mut h = vec![0.0; n];
    for j in 0..n {
        // h[t₁] = ∫_{t₁}^{s_j} kI(t₁, t₂) g(t₂, s_j) dt₂
        for (i1, hv) in h.iter_mut().enumerate().take(j + 1) {
            let row = &ki.values[i1 * n..(i1 + 1) * n];
            *hv = (i1..=j).map(|i2| trap(i2, i1, j, dt) * row[i2] * g.values[i2 * n + j]).sum();
        }
        for i in 0..=j {
            out.values[i * n + j] = (i..=j).map(|i1| trap(i1, i, j, dt) * g0[i1 - i] * h[i1]).sum();
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwinningOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Reject grids coarser than 1/(20λ₊₊).
    pub enforce_step: bool,
}

impl Default for TwinningOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200, enforce_step: true }
    }
}

#[derive(Debug, Clone)]
pub struct TwinningSolution {
    pub g: TwoTimeKernel,
    pub iterations: usize,
    /// max|G_{k+1} − G_k| / max|G_{k+1}| per iteration.
    pub residuals: Vec<f64>,
}

/// Largest time step accepted by the finite-time solvers, 1/(20·λ₊₊)
/// (1/(20ω) when the band is undefined).
pub fn max_step(params: &Params<f64>) -> f64 {
    1.0 / (20.0 * params.lambda_pp.unwrap_or_else(|| params.omega()))
}

fn check_step(params: &Params<f64>, dt: f64) -> Result<()> {
    let max = max_step(params);
    if dt > max * (1.0 + 1e-9) {
        return Err(Error::Accuracy(format!("time step {dt} exceeds 1/(20 lambda_pp) = {max}")));
    }
    Ok(())
}

fn relative_change(new: &[f64], old: &[f64]) -> f64 {
    let scale = new.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let diff = new.iter().zip(old).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Neumann iteration of the twinning relation from G₀ on the grid of `ki`.
pub fn twinning_solve(ki: &TwoTimeKernel, params: &Params<f64>, opts: TwinningOptions) -> Result<TwinningSolution> {
    if !ki.causal {
        return Err(Error::Shape("upstream dissipation kernel must be causal".into()));
    }
    if opts.enforce_step {
        check_step(params, ki.dt)?;
    }
    let g0 = TwoTimeKernel::causal_from_fn(ki.dt, ki.len, |_, u| bare_response(params, u))?;
    let mut g = g0.clone();
    let mut residuals = Vec::new();
    for it in 1..=opts.max_iter {
        let corr = apply_twinning_operator(ki, params, &g)?;
        let next: Vec<f64> = g0.values.iter().zip(&corr.values).map(|(a, b)| a + b).collect();
        let change = relative_change(&next, &g.values);
        g.values = next;
        residuals.push(change);
        if !change.is_finite() {
            return Err(Error::Numerical(format!("twinning iteration diverged at iteration {it}")));
        }
        if change <= opts.tol {
            return Ok(TwinningSolution { g, iterations: it, residuals });
        }
    }
    Err(Error::Numerical(format!(
        "twinning iteration did not converge in {} iterations (residual {:.3e})",
        opts.max_iter,
        residuals.last().copied().unwrap_or(f64::NAN)
    )))
}

/// Twinning relation for an upstream kernel that depends only on s − t,
/// where G depends only on s − t as well: g = G₀ + G₀ ∗ (κ ∗ g).
pub fn twinning_solve_stationary(
    kappa: &[f64],
    dt: f64,
    params: &Params<f64>,
    opts: TwinningOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if opts.enforce_step {
        check_step(params, dt)?;
    }
    let n = kappa.len();
    let g0: Vec<f64> = (0..n).map(|k| bare_response(params, k as f64 * dt)).collect();
    let mut g = g0.clone();
    let mut residuals = Vec::new();
    for it in 1..=opts.max_iter {
        let inner = causal_convolution(kappa, &g, dt);
        let corr = causal_convolution(&g0, &inner, dt);
        let next: Vec<f64> = g0.iter().zip(&corr).map(|(a, b)| a + b).collect();
        let change = relative_change(&next, &g);
        g = next;
        residuals.push(change);
        if !change.is_finite() {
            return Err(Error::Numerical(format!("twinning iteration diverged at iteration {it}")));
        }
        if change <= opts.tol {
            return Ok((g, residuals));
        }
    }
    Err(Error::Numerical(format!(
        "twinning iteration did not converge in {} iterations (residual {:.3e})",
        opts.max_iter,
        residuals.last().copied().unwrap_or(f64::NAN)
    )))
}

/// (a ∗ b)(u_j) = ∫_0^{u_j} a(v)·b(u_j − v) dv, trapezoid.
pub fn causal_convolution(a: &[f64], b: &[f64], dt: f64) -> Vec<f64> {
    (0..a.len())
        .map(|j| (0..=j).map(|k| trap(k, 0, j, dt) * a[k] * b[j - k]).sum())
        .collect()
}

/// ∫_0^W e^{−λu}·f(u) du by composite Boole over the largest multiple of
/// four steps available.
pub fn forward_laplace_samples(f: &[f64], dt: f64, lambdas: &[f64]) -> Result<Vec<f64>> {
    let intervals = (f.len().saturating_sub(1)) / 4 * 4;
    if intervals == 0 {
        return Err(Error::InvalidParam {
            name: "samples",
            reason: "need at least five samples for the Boole rule".into(),
        });
    }
    let w = boole_weights(intervals, dt);
    Ok(lambdas
        .iter()
        .map(|&l| (0..=intervals).map(|j| w[j] * (-l * j as f64 * dt).exp() * f[j]).sum())
        .collect())
}

/// Output dissipation kernel ½·C(t)·C(s)·G(t, s−t).
pub fn vernon_imag_finite(g: &TwoTimeKernel, c_edge: impl Fn(f64) -> f64) -> Result<TwoTimeKernel> {
    if !g.causal {
        return Err(Error::Shape("response kernel must be causal".into()));
    }
    let c: Vec<f64> = (0..g.len).map(|i| c_edge(g.time(i))).collect();
    let mut out = g.clone();
    for i in 0..g.len {
        for j in i..g.len {
            out.values[i * g.len + j] *= 0.5 * c[i] * c[j];
        }
    }
    Ok(out)
}

/// The real (noise) transform split into its memory term and the two
/// initial-state boundary terms.
#[derive(Debug, Clone)]
pub struct RealTransform {
    pub total: TwoTimeKernel,
    pub convolution: TwoTimeKernel,
    pub boundary: TwoTimeKernel,
}

/// Output noise kernel
///
///   C(t)C(s)·[∫_τ^t∫_τ^s kR(t′,s′)G(t′,t−t′)G(s′,s−s′) ds′dt′
///             + C′·G(τ,t−τ)G(τ,s−τ) + (1/A′)·∂_rG(r,t−r)·∂_rG(r,s−r)|_{r=τ}].
///
/// The r-derivative at the preparation time uses the one-sided second-order
/// difference (−3G₀ + 4G₁ − G₂)/(2dt) along the first time argument.
pub fn vernon_real_full(
    kr_up: &TwoTimeKernel,
    g: &TwoTimeKernel,
    state: &ThermalState,
    c_edge: impl Fn(f64) -> f64,
) -> Result<RealTransform> {
    kr_up.same_grid(g)?;
    if !g.causal {
        return Err(Error::Shape("response kernel must be causal".into()));
    }
    let (n, dt) = (g.len, g.dt);
    if n < 3 {
        return Err(Error::InvalidParam {
            name: "len",
            reason: "the boundary derivative needs at least three time points".into(),
        });
    }
    let c: Vec<f64> = (0..n).map(|i| c_edge(g.time(i))).collect();

    // With Gw(t′, t) = w_{t′}(t)·G(t′, t − t′) (trapezoid weight on [τ, t]),
    // the memory term is C(t)C(s)·(Gwᵀ·kR·Gw)(t, s).
    let gw = DMatrix::from_fn(n, n, |tp, t| if tp <= t { trap(tp, 0, t, dt) * g.at(tp, t) } else { 0.0 });
    let kr = DMatrix::from_row_slice(n, n, &kr_up.values);
    let memory = gw.transpose() * kr * &gw;
    let mut conv = TwoTimeKernel::zeros(dt, n, false)?;
    for t in 0..n {
        for s in 0..n {
            conv.values[t * n + s] = c[t] * c[s] * memory[(t, s)];
        }
    }

    let deriv: Vec<f64> = (0..n)
        .map(|t| (-3.0 * g.at(0, t) + 4.0 * g.at(1, t) - g.at(2, t)) / (2.0 * dt))
        .collect();
    let mut boundary = TwoTimeKernel::zeros(dt, n, false)?;
    for t in 0..n {
        for s in 0..n {
            boundary.values[t * n + s] = c[t]
                * c[s]
                * (state.c_prime * g.at(0, t) * g.at(0, s) + deriv[t] * deriv[s] / state.a_prime);
        }
    }
    let mut total = conv.clone();
    total.values.iter_mut().zip(&boundary.values).for_each(|(a, b)| *a += b);
    Ok(RealTransform { total, convolution: conv, boundary })
}

/// Upstream dissipation kernel kI(t, u), u = s − t, evaluable off-grid so
/// that responses can be refined.
pub enum Upstream<'a> {
    Stationary(&'a dyn Fn(f64) -> f64),
    General(&'a dyn Fn(f64, f64) -> f64),
}

impl Upstream<'_> {
    pub fn sample(&self, dt: f64, len: usize) -> Result<TwoTimeKernel> {
        match self {
            Upstream::Stationary(f) => {
                let s: Vec<f64> = (0..len).map(|k| f(k as f64 * dt)).collect();
                TwoTimeKernel::stationary(dt, &s)
            }
            Upstream::General(f) => TwoTimeKernel::causal_from_fn(dt, len, f),
        }
    }
}

/// Q(t) from the damped oscillator equation
///
///   Q̈ + ω²Q = (C/m)·Δ(t) + (2/m)·∫_t^T kI(t, s−t) Q(s) ds,
///
/// integrated backward from Q(T) = Q̇(T) = 0 by Störmer-Verlet in the
/// reversed time r = T − t, with the memory integral by the trapezoid rule.
pub fn ode_response(ki: &TwoTimeKernel, params: &Params<f64>, drive: &[f64]) -> Result<Vec<f64>> {
    let (n, dt) = (ki.len, ki.dt);
    if drive.len() != n {
        return Err(Error::Shape(format!("drive has {} samples, grid has {n}", drive.len())));
    }
    if params.omega() * dt > 1.0 {
        return Err(Error::Accuracy(format!(
            "backward integration unstable: omega*dt = {} > 1",
            params.omega() * dt
        )));
    }
    let last = n - 1;
    let (c, m, w2) = (params.coupling, params.mass, params.omega_sq);
    let mut y = vec![0.0; n];
    let force = |j: usize, y: &[f64]| {
        let t = last - j;
        let memory: f64 = (0..=j).map(|jp| trap(jp, 0, j, dt) * ki.at(t, last - jp) * y[jp]).sum();
        c / m * drive[t] + 2.0 / m * memory
    };
    y[1] = 0.5 * dt * dt * force(0, &y);
    for j in 1..last {
        let f = force(j, &y);
        y[j + 1] = 2.0 * y[j] - y[j - 1] + dt * dt * (-w2 * y[j] + f);
    }
    y.reverse();
    Ok(y)
}

/// Q(t) = ½·∫_t^T G(t, s−t)·C·Δ(s) ds.
pub fn convolution_response(g: &TwoTimeKernel, coupling: f64, drive: &[f64]) -> Result<Vec<f64>> {
    if drive.len() != g.len {
        return Err(Error::Shape(format!("drive has {} samples, grid has {}", drive.len(), g.len)));
    }
    let (n, dt) = (g.len, g.dt);
    Ok((0..n)
        .map(|i| 0.5 * coupling * (i..n).map(|j| trap(j, i, n - 1, dt) * g.at(i, j) * drive[j]).sum::<f64>())
        .collect())
}

/// One Richardson step for a second-order method: (4·fine − coarse)/3 on the
/// coarse grid.
pub fn richardson(coarse: &[f64], fine: &[f64]) -> Vec<f64> {
    coarse.iter().enumerate().map(|(i, c)| (4.0 * fine[2 * i] - c) / 3.0).collect()
}

#[derive(Debug, Clone)]
pub struct ResponseCheck {
    pub times: Vec<f64>,
    pub ode: Vec<f64>,
    pub convolution: Vec<f64>,
    /// Relative RMS difference of the two extrapolated responses.
    pub rel_rms: f64,
    pub twinning_iterations: usize,
}

/// Solves for Q by the backward ODE and by convolution with the twinning
/// solution, each at steps dt and dt/2 with one Richardson step, and
/// compares them on the coarse grid.
pub fn ode_response_check(
    upstream: &Upstream,
    params: &Params<f64>,
    drive: impl Fn(f64) -> f64,
    t_final: f64,
    dt: f64,
) -> Result<ResponseCheck> {
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidParam {
            name: "t_final",
            reason: format!("final time must be positive, got {t_final}"),
        });
    }
    let steps = (t_final / dt).ceil().max(2.0) as usize;
    let h = t_final / steps as f64;
    let mut odes = Vec::new();
    let mut convs = Vec::new();
    let mut iterations = 0;
    for refine in [1, 2] {
        let len = steps * refine + 1;
        let step = h / refine as f64;
        let ki = upstream.sample(step, len)?;
        let d: Vec<f64> = (0..len).map(|k| drive(k as f64 * step)).collect();
        odes.push(ode_response(&ki, params, &d)?);
        let sol = twinning_solve(&ki, params, TwinningOptions { tol: 1e-13, ..Default::default() })?;
        iterations = iterations.max(sol.iterations);
        convs.push(convolution_response(&sol.g, params.coupling, &d)?);
    }
    let ode = richardson(&odes[0], &odes[1]);
    let convolution = richardson(&convs[0], &convs[1]);
    let rel_rms = crate::num::rel_rms(&ode, &convolution);
    Ok(ResponseCheck {
        times: (0..=steps).map(|k| k as f64 * h).collect(),
        ode,
        convolution,
        rel_rms,
        twinning_iterations: iterations,
    })
}
