//! End-to-end self checks shared by the acceptance test and the `check`
//! subcommand. Every check returns a report instead of panicking; the
//! tolerances and time budgets are pinned here.

use std::time::{Duration, Instant};

use crate::error::Result;
use crate::finite_time::{
    forward_laplace_samples, max_step, ode_response_check, twinning_solve, TwinningOptions, Upstream,
};
use crate::laplace::{closed_form_fixed_point, fixed_point_residual, g0_laplace, iterate_fixed_point, real_multiplier};
use crate::model::{critical_coupling, Params};
use crate::num::{lin_grid, log_grid, rel_rms};
use crate::oracle::{mode_decomposition, oracle_kernel_laplace, oracle_time_kernel, recurrence_time, reflection_time};
use crate::rs::{map_orbit, population_stats, population_step, variance_gain, variance_gain_forms, Population};
use crate::timedomain::{
    bessel_kernel, branch_cut_kernel, branch_cut_rule, default_branch_cut_order, forward_laplace, spectral_density,
    TimeGrid,
};
use crate::tree_bp::{sweep_messages, TreeGraph};
use crate::KernelShape;

/// Both published parameter sets: (n, ω₀, C, m).
pub const LEFT_PANEL: (usize, f64, f64, f64) = (5, 10.0, 1.0, 0.5);
pub const RIGHT_PANEL: (usize, f64, f64, f64) = (20, 0.1, 20.0, 0.5);

pub fn left_panel() -> Params<f64> {
    Params::new(LEFT_PANEL.0, LEFT_PANEL.1, LEFT_PANEL.2, LEFT_PANEL.3).expect("valid panel parameters")
}

pub fn right_panel() -> Params<f64> {
    Params::new(RIGHT_PANEL.0, RIGHT_PANEL.1, RIGHT_PANEL.2, RIGHT_PANEL.3).expect("valid panel parameters")
}

#[derive(Debug, Clone)]
pub struct Report {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Option<Duration>,
}

impl std::fmt::Display for Report {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "criterion {:>2} {:<28} {}  ({:.2}s) {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

/// Outcome of the numeric part of a check.
struct Verdict {
    passed: bool,
    detail: String,
}

fn timed(id: u32, name: &'static str, budget: Option<f64>, body: impl FnOnce() -> Result<Verdict>) -> Report {
    let start = Instant::now();
    let outcome = body();
    let elapsed = start.elapsed();
    let budget = budget.map(Duration::from_secs_f64);
    let (mut passed, mut detail) = match outcome {
        Ok(v) => (v.passed, v.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    if let Some(b) = budget {
        if elapsed > b {
            passed = false;
            detail.push_str(&format!("; over the {:.0}s budget", b.as_secs_f64()));
        }
    }
    Report { id, name, passed, detail, elapsed, budget }
}

/// Iterated and closed-form fixed points agree on a log grid.
pub fn fixed_point_closure() -> Report {
    timed(1, "fixed-point closure", Some(1.0), || {
        let grid = log_grid(0.1, 100.0, 200);
        let (mut worst_rel, mut worst_res) = (0.0f64, 0.0f64);
        let mut unconverged = 0;
        for p in [left_panel(), right_panel()] {
            for &l in &grid {
                let closed = closed_form_fixed_point(&p, l)?;
                let it = iterate_fixed_point(&p, l, 1e-15, 1_000_000)?;
                if !it.converged {
                    unconverged += 1;
                }
                worst_rel = worst_rel.max((it.value - closed).abs() / closed.abs());
                worst_res = worst_res.max(fixed_point_residual(&p, l, closed));
            }
        }
        Ok(Verdict {
            passed: unconverged == 0 && worst_rel <= 1e-10 && worst_res <= 1e-12,
            detail: format!("max rel diff {worst_rel:.2e}, max residual {worst_res:.2e}, unconverged {unconverged}"),
        })
    })
}

/// Sine-integral and Bessel-convolution inversions agree.
pub fn two_route_inversion() -> Report {
    timed(2, "two-route inversion", Some(30.0), || {
        let p = right_panel();
        let grid = TimeGrid::covering(5.0, 2001)?;
        let bc = branch_cut_kernel(&p, grid, None)?;
        let bs = bessel_kernel(&p, grid, None)?;
        let err = rel_rms(&bs.values, &bc.values);
        Ok(Verdict {
            passed: err <= 1e-4,
            detail: format!("relative RMS {err:.2e} on tau in [0, 5]"),
        })
    })
}

/// Forward Laplace transform of the time kernel returns the closed form.
pub fn forward_laplace_closure() -> Report {
    timed(3, "forward-Laplace closure", Some(10.0), || {
        let t_window = 20.0;
        let mut worst = 0.0f64;
        for p in [left_panel(), right_panel()] {
            let lambdas = log_grid(40.0 / t_window, 100.0, 50);
            // resolve both the kernel and the steepest exponential
            let step = (1.0 / (40.0 * p.lambda_pp.expect("band defined"))).min(0.1 / 100.0);
            let grid = TimeGrid::with_max_step(t_window, step)?;
            let tk = branch_cut_kernel(&p, grid, None)?;
            let est = forward_laplace(&tk, &lambdas, t_window)?;
            let got = est.kernel.real_values().expect("real Laplace kernel");
            for (l, v) in lambdas.iter().zip(got) {
                let exact = closed_form_fixed_point(&p, *l)?;
                worst = worst.max((v - exact).abs() / exact.abs());
            }
        }
        Ok(Verdict {
            passed: worst <= 1e-6,
            detail: format!("max rel diff {worst:.2e} for lambda*T >= 40"),
        })
    })
}

/// Linear-algebra oracle against the message recursion on chains and trees.
pub fn oracle_equivalence() -> Report {
    timed(4, "oracle equivalence", Some(60.0), || {
        let lambdas = log_grid(0.1, 100.0, 50);
        let shape = KernelShape::laplace(lambdas.clone())?;
        let mut cases = Vec::new();
        for p in [left_panel(), right_panel()] {
            for d in [1, 10, 100, 400] {
                cases.push((p, TreeGraph::chain(d)?));
            }
        }
        // full trees with branching n − 1, as deep as stays below ~10⁵ nodes
        let left = left_panel();
        for d in [2, 5, 8] {
            cases.push((left, TreeGraph::regular(left.n - 1, d)?));
        }
        let right = right_panel();
        for d in [1, 3] {
            cases.push((right, TreeGraph::regular(right.n - 1, d)?));
        }
        let mut worst = 0.0f64;
        let mut largest = 0;
        for (p, tree) in &cases {
            largest = largest.max(tree.len());
            let msgs = sweep_messages(tree, p, &shape)?;
            let emitted = msgs.root_emitted(tree);
            let rec = emitted.real_values().expect("real Laplace kernel");
            for (i, &l) in lambdas.iter().enumerate() {
                let o = oracle_kernel_laplace(tree, p, l)?;
                worst = worst.max((o - rec[i]).abs() / rec[i].abs());
            }
        }
        Ok(Verdict {
            passed: worst <= 1e-10,
            detail: format!("max rel diff {worst:.2e} over {} trees (up to {largest} nodes)", cases.len()),
        })
    })
}

/// Parameters for the chain convergence check: n = 2, well inside the
/// ordered phase.
pub fn chain_params() -> Params<f64> {
    Params::new(2, 1.0, 0.8, 1.0).expect("valid chain parameters")
}

/// Oracle chain kernels converge to the branch-cut kernel with depth.
pub fn finite_size_convergence() -> Report {
    timed(5, "finite-size convergence", None, || {
        let p = chain_params();
        // the depth-200 echo returns inside this window, the depth-400 one
        // does not
        let t_end = 1.5 * reflection_time(&p, 200).expect("band defined");
        let grid = TimeGrid::with_max_step(t_end, 0.1)?;
        let exact = branch_cut_kernel(&p, grid, None)?;
        let e200 = rel_rms(&oracle_time_kernel(&TreeGraph::chain(200)?, &p, grid)?.values, &exact.values);
        let e400 = rel_rms(&oracle_time_kernel(&TreeGraph::chain(400)?, &p, grid)?.values, &exact.values);
        // shorter window scaled by the recurrence time of the depth-200 chain
        let t_rec = recurrence_time(&p, 200).expect("band defined");
        let short = TimeGrid::with_max_step(0.25 * t_rec, 0.1)?;
        let e_short = rel_rms(
            &oracle_time_kernel(&TreeGraph::chain(200)?, &p, short)?.values,
            &branch_cut_kernel(&p, short, None)?.values,
        );
        Ok(Verdict {
            passed: e400 < e200 && e400 <= 1e-2 && e_short <= 1e-2,
            detail: format!(
                "window [0, {t_end:.1}]: depth 200 {e200:.2e}, depth 400 {e400:.2e}; depth 200 on [0, T_rec/4]: {e_short:.2e}"
            ),
        })
    })
}

/// The real-kernel multiplier is 2 in band, below 1 far outside, at most 2.
pub fn band_multiplier() -> Report {
    timed(6, "band multiplier", None, || {
        let (mut in_band, mut outside_max, mut global_max) = (0.0f64, 0.0f64, 0.0f64);
        for p in [left_panel(), right_panel()] {
            let band = p.band()?;
            let (lo, hi) = (band.lower, band.upper);
            // open interval, avoiding the edges themselves
            for i in 1..=100 {
                let nu = lo + (hi - lo) * i as f64 / 101.0;
                in_band = in_band.max((real_multiplier(&p, nu) - 2.0).abs());
            }
            let start = hi + band.a_sq.sqrt();
            for nu in lin_grid(start, 10.0 * start, 200) {
                outside_max = outside_max.max(real_multiplier(&p, nu));
            }
            for nu in lin_grid(0.0, 3.0 * hi, 3001) {
                global_max = global_max.max(real_multiplier(&p, nu));
            }
        }
        Ok(Verdict {
            passed: in_band <= 1e-12 && outside_max < 1.0 && global_max <= 2.0 + 1e-12,
            detail: format!(
                "in-band |A-2| {in_band:.2e}, max A beyond edge+a {outside_max:.3}, global max {global_max:.15}"
            ),
        })
    })
}

/// Finite-tree modes and the spectral density live inside the band.
pub fn spectral_support() -> Report {
    timed(7, "spectral support", None, || {
        let cases = [
            (left_panel(), TreeGraph::regular(4, 5)?),
            (right_panel(), TreeGraph::regular(19, 2)?),
            (chain_params(), TreeGraph::chain(400)?),
            (Params::new(3, 1.0, 0.9 * critical_coupling(3, 1.0, 1.0).expect("finite"), 1.0)?, TreeGraph::regular(2, 10)?),
        ];
        let mut outside_modes = 0;
        let mut margin = f64::INFINITY;
        let mut outside_density = 0.0f64;
        for (p, tree) in &cases {
            let (lo, hi) = (p.lambda_pm.expect("real band"), p.lambda_pp.expect("real band"));
            for m in mode_decomposition(tree, p)? {
                if !(m.frequency > lo && m.frequency < hi) {
                    outside_modes += 1;
                }
                margin = margin.min((m.frequency - lo).min(hi - m.frequency));
            }
            let mut probe = lin_grid(0.0, lo, 50);
            probe.extend(lin_grid(hi, 3.0 * hi, 50));
            for (_, j) in spectral_density(p, &probe)? {
                outside_density = outside_density.max(j.abs());
            }
        }
        Ok(Verdict {
            passed: outside_modes == 0 && outside_density == 0.0,
            detail: format!(
                "{outside_modes} modes outside the band (closest margin {margin:.2e}), max |J| outside {outside_density:e}"
            ),
        })
    })
}

/// Variance gain below one at weak coupling, matched by population dynamics.
pub fn rs_stability() -> Report {
    timed(8, "RS stability", None, || {
        let grid = log_grid(0.1, 100.0, 200);
        let (mut max_gain, mut max_identity, mut worst_ratio) = (0.0f64, 0.0f64, 0.0f64);
        for n in [2, 3, 5] {
            let cs = critical_coupling(n, 1.0, 1.0).expect("finite for small n");
            let p = Params::new(n, 1.0, 0.1 * cs, 1.0)?;
            for &l in &grid {
                let g = variance_gain(&p, l)?;
                let f = variance_gain_forms(&p, l)?;
                max_gain = max_gain.max(g);
                max_identity = max_identity.max((f.propagated - f.closed).abs() / f.closed);
            }
            for l in [0.3, 1.0] {
                let g = variance_gain(&p, l)?;
                let mut pop = Population::perturbed(&p, l, 20_000, 2024 + n as u64, 0.01)?;
                let mut var = population_stats(&pop.samples, None).variance;
                for _ in 0..3 {
                    population_step(&mut pop)?;
                    let next = population_stats(&pop.samples, None).variance;
                    worst_ratio = worst_ratio.max((next / var / g - 1.0).abs());
                    var = next;
                }
            }
        }
        Ok(Verdict {
            passed: max_gain < 1.0 && max_identity <= 1e-12 && worst_ratio <= 0.2,
            detail: format!(
                "max gain {max_gain:.2e}, identity {max_identity:.1e}, worst sweep factor deviation {:.1}%",
                100.0 * worst_ratio
            ),
        })
    })
}

/// Orbits of the uniform map stop converging below λ*.
pub fn disordered_onset() -> Report {
    timed(9, "disordered-phase onset", None, || {
        let cs = critical_coupling(2, 1.0, 1.0).expect("finite for n = 2");
        let p = Params::new(2, 1.0, 2.0 * cs, 1.0)?;
        let ls = p.lambda_star().expect("above the critical coupling");
        let steps = 20_000;
        let converges = |l: f64| map_orbit(&p, l, 0.0, steps).converged();
        let below_ok = lin_grid(0.05, 0.95, 19).iter().all(|&l| !converges(l * ls));
        let above_ok = lin_grid(1.05, 3.0, 20).iter().all(|&l| converges(l * ls));
        let (mut lo, mut hi) = (0.5 * ls, 2.0 * ls);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if converges(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let switch = 0.5 * (lo + hi);
        let offset = (switch - ls).abs() / ls;
        Ok(Verdict {
            passed: below_ok && above_ok && offset <= 0.01,
            detail: format!("lambda* = {ls:.6}, switch at {switch:.6} (offset {:.2e})", offset),
        })
    })
}

/// Stationary twinning against the Laplace algebra and the backward ODE.
pub fn finite_time_consistency() -> Report {
    timed(10, "finite-time consistency", None, || {
        let p = left_panel();
        let w = p.omega();
        let lpp = p.lambda_pp.expect("band defined");

        // stationary upstream kernel: the uniform fixed point itself
        let window = 20.0 / w;
        let rule = branch_cut_rule(&p, default_branch_cut_order(&p, 2.0 * window))?;
        let kappa = |u: f64| rule.eval(u);
        let steps = ((window * 40.0 * lpp) / 4.0).ceil() as usize * 4;
        let dt = window / steps as f64;
        let ki = Upstream::Stationary(&kappa).sample(dt, steps + 1)?;
        let sol = twinning_solve(&ki, &p, TwinningOptions::default())?;
        let lambdas = lin_grid(2.0 * w, 10.0 * w, 9);
        let got = forward_laplace_samples(sol.g.row_from_diagonal(0), dt, &lambdas)?;
        let mut laplace_err = 0.0f64;
        for (l, v) in lambdas.iter().zip(&got) {
            let g0 = g0_laplace(&p, *l);
            let exact = g0 / (1.0 - g0 * closed_form_fixed_point(&p, *l)?);
            laplace_err = laplace_err.max((v - exact).abs() / exact.abs());
        }

        let drive = |t: f64| {
            let x = (t - 0.5) / 0.7;
            if x > 0.0 && x < 1.0 {
                (std::f64::consts::PI * x).sin().powi(2)
            } else {
                0.0
            }
        };
        let check = ode_response_check(&Upstream::Stationary(&kappa), &p, drive, 2.0, max_step(&p))?;
        Ok(Verdict {
            passed: laplace_err <= 1e-5 && check.rel_rms <= 1e-6,
            detail: format!(
                "Laplace closure {laplace_err:.2e} ({} iterations), ODE vs twinning RMS {:.2e}",
                sol.iterations, check.rel_rms
            ),
        })
    })
}

/// Runs criteria 1 to 10 in order.
pub fn run_all() -> Vec<Report> {
    run_selected(&[])
}

/// Runs the listed criteria (all when `ids` is empty).
pub fn run_selected(ids: &[u32]) -> Vec<Report> {
    let all: [(u32, fn() -> Report); 10] = [
        (1, fixed_point_closure),
        (2, two_route_inversion),
        (3, forward_laplace_closure),
        (4, oracle_equivalence),
        (5, finite_size_convergence),
        (6, band_multiplier),
        (7, spectral_support),
        (8, rs_stability),
        (9, disordered_onset),
        (10, finite_time_consistency),
    ];
    all.iter()
        .filter(|(id, _)| ids.is_empty() || ids.contains(id))
        .map(|(_, f)| f())
        .collect()
}
