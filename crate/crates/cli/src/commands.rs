//! One function per subcommand, each producing a table.

use qcavity::finite_time::{
    max_step, thermal_init, twinning_solve, vernon_imag_finite, vernon_real_full, TwinningOptions, TwoTimeKernel,
    Upstream,
};
use qcavity::laplace::{
    closed_form_fixed_point, contraction_rate, fixed_point_residual, fourier_fixed_point, iterate_fixed_point,
    real_multiplier, OrbitClass,
};
use qcavity::oracle::oracle_time_kernel;
use qcavity::rs::{
    map_orbit, population_stats, population_step, variance_gain, CouplingDist, DegreeDist, Disorder, Population,
    UpdateScheme,
};
use qcavity::timedomain::{
    bessel_kernel, branch_cut_kernel, branch_cut_rule, default_branch_cut_order, spectral_density, TimeGrid,
};
use qcavity::tree_bp::{depth_convergence, TreeGraph};
use qcavity::Error;

use crate::config::RunConfig;
use crate::output::Table;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum KernelMethod {
    BranchCut,
    Bessel,
    Oracle,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| format!("{x:.16e}"))
}

pub fn phase(cfg: &RunConfig) -> Result<Table, CliError> {
    let p = cfg.params()?;
    let mut t = Table::new("phase", vec!["lambda", "discriminant", "exists", "k_star", "contraction_rate", "flag"]);
    t.meta("critical_coupling", opt(p.critical_coupling()));
    t.meta("lambda_star", opt(p.lambda_star()));
    t.meta("omega_sq", format!("{:.16e}", p.omega_sq));
    t.meta("a_sq", opt(p.a_sq));
    t.meta("lambda_pp", opt(p.lambda_pp));
    t.meta("lambda_pm", opt(p.lambda_pm));
    t.meta("q", opt(p.q));
    t.meta("amplitude", opt(p.amplitude));
    for l in cfg.grids.lambda.points() {
        let exists = p.fixed_point_exists(l);
        let (k, rate, flag) = match closed_form_fixed_point(&p, l) {
            Ok(k) => (k, contraction_rate(&p, l)?, "ok"),
            Err(e) => (f64::NAN, f64::NAN, e.code()),
        };
        t.push(vec![l.into(), p.discriminant(l).into(), exists.into(), k.into(), rate.into(), flag.into()]);
    }
    t.plot_columns = vec![3];
    Ok(t)
}

pub fn fixed_point(cfg: &RunConfig) -> Result<Table, CliError> {
    let p = cfg.params()?;
    let nm = &cfg.numerics;
    let mut t = Table::new(
        "fixed-point",
        vec!["lambda", "closed_form", "iterated", "iterations", "rel_diff", "residual", "flag"],
    );
    let mut worst = 0.0f64;
    for l in cfg.grids.lambda.points() {
        let it = iterate_fixed_point(&p, l, nm.tol, nm.max_iter)?;
        let row = match closed_form_fixed_point(&p, l) {
            Ok(k) => {
                let rel = (it.value - k).abs() / k.abs();
                let flag = if it.converged {
                    worst = worst.max(rel);
                    "ok"
                } else {
                    "not-converged"
                };
                vec![
                    l.into(),
                    k.into(),
                    it.value.into(),
                    it.iterations.into(),
                    rel.into(),
                    fixed_point_residual(&p, l, k).into(),
                    flag.into(),
                ]
            }
            Err(e) => {
                let flag = if it.cycle_detected { "oscillating" } else { e.code() };
                vec![
                    l.into(),
                    f64::NAN.into(),
                    it.value.into(),
                    it.iterations.into(),
                    f64::NAN.into(),
                    f64::NAN.into(),
                    flag.into(),
                ]
            }
        };
        t.push(row);
    }
    t.meta("max_rel_diff", format!("{worst:.3e}"));
    t.plot_columns = vec![1, 2];
    Ok(t)
}

pub fn kernel(cfg: &RunConfig, method: KernelMethod) -> Result<Table, CliError> {
    let p = cfg.params()?;
    let nm = &cfg.numerics;
    let grid = TimeGrid::covering(cfg.grids.tau.max, cfg.grids.tau.count)?;
    let (tk, scale) = match method {
        KernelMethod::BranchCut => (branch_cut_kernel(&p, grid, nm.quad_order)?, 1.0),
        KernelMethod::Bessel => (bessel_kernel(&p, grid, nm.fine_step)?, 1.0),
        KernelMethod::Oracle => {
            let branching = nm.branching.unwrap_or(p.n - 1);
            let tree = TreeGraph::regular(branching, nm.depth)?;
            // the root emits one branch; n − 1 of them make the n-type kernel
            (oracle_time_kernel(&tree, &p, grid)?, p.branches())
        }
    };
    let mut t = Table::new("kernel", vec!["tau", "k"]);
    t.meta("method", tk.method.name());
    t.meta("message_type", "n-type");
    if scale != 1.0 {
        t.meta("scale", format!("{scale}"));
    }
    if !tk.warnings.is_empty() {
        t.meta("warnings", tk.warnings.join("|"));
    }
    for (j, v) in tk.values.iter().enumerate() {
        t.push(vec![grid.at(j).into(), (scale * v).into()]);
    }
    Ok(t)
}

pub fn spectrum(cfg: &RunConfig) -> Result<Table, CliError> {
    let p = cfg.params()?;
    let mut t = Table::new("spectrum", vec!["omega", "J"]);
    for (w, j) in spectral_density(&p, &cfg.grids.omega.points())? {
        t.push(vec![w.into(), j.into()]);
    }
    Ok(t)
}

pub fn multiplier(cfg: &RunConfig) -> Result<Table, CliError> {
    let p = cfg.params()?;
    let band = p.band()?;
    let mut t = Table::new("multiplier", vec!["nu", "re_k", "im_k", "A", "in_band"]);
    for nu in cfg.grids.nu.points() {
        let k = fourier_fixed_point(&p, nu);
        let inside = nu.abs() > band.lower && nu.abs() < band.upper;
        t.push(vec![nu.into(), k.re.into(), k.im.into(), real_multiplier(&p, nu).into(), inside.into()]);
    }
    t.plot_columns = vec![3];
    Ok(t)
}

pub fn tree(cfg: &RunConfig) -> Result<Table, CliError> {
    let p = cfg.params()?;
    let nm = &cfg.numerics;
    let branching = nm.branching.unwrap_or(p.n - 1);
    let errs = depth_convergence(&p, branching, nm.depth, nm.lambda)?;
    let mut t = Table::new("tree", vec!["depth", "abs_error", "ratio"]);
    t.meta("lambda", nm.lambda);
    t.meta("k_star", format!("{:.16e}", closed_form_fixed_point(&p, nm.lambda)?));
    t.meta("contraction_rate", format!("{:.16e}", contraction_rate(&p, nm.lambda)?));
    for (d, e) in errs.iter().enumerate() {
        let ratio = if d == 0 { f64::NAN } else { e / errs[d - 1] };
        t.push(vec![d.into(), (*e).into(), ratio.into()]);
    }
    Ok(t)
}

pub fn finite_time(cfg: &RunConfig) -> Result<Table, CliError> {
    let p = cfg.params()?;
    let nm = &cfg.numerics;
    let dt = nm.dt.unwrap_or_else(|| max_step(&p));
    let steps = (nm.t_final / dt).ceil().max(2.0) as usize;
    let dt = nm.t_final / steps as f64;
    let len = steps + 1;
    // upstream: the stationary uniform fixed point
    let rule = branch_cut_rule(&p, default_branch_cut_order(&p, nm.t_final))?;
    let kappa = |u: f64| rule.eval(u);
    let ki = Upstream::Stationary(&kappa).sample(dt, len)?;
    let sol = twinning_solve(&ki, &p, TwinningOptions::default())?;
    let c = p.coupling;
    let k_imag = vernon_imag_finite(&sol.g, |_| c)?;
    let state = thermal_init(nm.beta, &p)?;
    let zero = TwoTimeKernel::zeros(dt, len, false)?;
    let real = vernon_real_full(&zero, &sol.g, &state, |_| c)?;
    let mut t = Table::new("finite-time", vec!["t", "s", "u", "G", "k_imag", "k_real", "k_real_boundary"]);
    t.meta("dt", format!("{dt:.16e}"));
    t.meta("iterations", sol.iterations);
    t.meta("residual", format!("{:.3e}", sol.residuals.last().copied().unwrap_or(0.0)));
    t.meta("beta", nm.beta);
    t.meta("upstream", "stationary-fixed-point");
    t.meta("upstream_real", "zero");
    for i in 0..len {
        for j in i..len {
            t.push(vec![
                sol.g.time(i).into(),
                sol.g.time(j).into(),
                sol.g.time(j - i).into(),
                sol.g.at(i, j).into(),
                k_imag.at(i, j).into(),
                real.total.at(i, j).into(),
                real.boundary.at(i, j).into(),
            ]);
        }
    }
    // plot the first row, G(τ, u) against u
    t.plot_x = 2;
    t.plot_rows = Some(0..len);
    t.plot_columns = vec![3];
    Ok(t)
}

fn disorder(cfg: &RunConfig) -> Result<(Disorder, UpdateScheme), CliError> {
    let d = &cfg.disorder;
    let coupling = match d.coupling.as_str() {
        "constant" => CouplingDist::Constant,
        "uniform" => CouplingDist::Uniform { lo: d.coupling_low, hi: d.coupling_high },
        "two-point" => CouplingDist::TwoPoint { low: d.coupling_low, high: d.coupling_high, p_low: d.coupling_p_low },
        other => return Err(CliError::Config(format!("unknown coupling distribution `{other}`"))),
    };
    let degree = match d.degree.as_str() {
        "fixed" => DegreeDist::Fixed,
        "two-point" => DegreeDist::TwoPoint { low: d.degree_low, high: d.degree_high, p_low: d.degree_p_low },
        other => return Err(CliError::Config(format!("unknown degree distribution `{other}`"))),
    };
    let scheme = match d.scheme.as_str() {
        "generational" => UpdateScheme::Generational,
        "overwrite" => UpdateScheme::RandomOverwrite,
        other => return Err(CliError::Config(format!("unknown update scheme `{other}`"))),
    };
    Ok((Disorder { coupling, degree }, scheme))
}

pub fn population(cfg: &RunConfig) -> Result<Table, CliError> {
    let p = cfg.params()?;
    let nm = &cfg.numerics;
    let (dis, scheme) = disorder(cfg)?;
    let (samples, init) = match Population::perturbed(&p, nm.lambda, nm.pool_size, nm.seed, nm.rel_sigma) {
        Ok(pop) => (pop.samples, "perturbed-fixed-point"),
        Err(Error::NoFixedPoint { .. }) => (vec![0.0; nm.pool_size], "zero"),
        Err(e) => return Err(e.into()),
    };
    let mut pop = Population::new(&p, nm.lambda, samples, nm.seed.wrapping_add(1), dis)?.with_scheme(scheme);
    let mut t = Table::new("population", vec!["sweep", "mean", "variance", "std_error", "rejections"]);
    t.meta("lambda", nm.lambda);
    t.meta("pool_size", nm.pool_size);
    t.meta("init", init);
    t.meta("scheme", &cfg.disorder.scheme);
    if let Ok(g) = variance_gain(&p, nm.lambda) {
        t.meta("variance_gain", format!("{g:.16e}"));
    }
    let row = |pop: &Population| {
        let s = population_stats(&pop.samples, None);
        vec![pop.sweeps.into(), s.mean.into(), s.variance.into(), s.std_error.into(), pop.rejections.into()]
    };
    t.push(row(&pop));
    for _ in 0..nm.sweeps {
        population_step(&mut pop)?;
        t.push(row(&pop));
    }
    let s = population_stats(&pop.samples, None);
    let hist: Vec<String> = s.histogram.iter().map(|(a, b, c)| format!("{a:e}:{b:e}:{c}")).collect();
    t.meta("final_histogram", hist.join(";"));
    t.plot_columns = vec![2];
    Ok(t)
}

pub fn orbit(cfg: &RunConfig) -> Result<Table, CliError> {
    let p = cfg.params()?;
    let nm = &cfg.numerics;
    let o = map_orbit(&p, nm.lambda, nm.x0, nm.steps);
    let class = match o.class {
        OrbitClass::Converged { iterations } => format!("converged:{iterations}"),
        OrbitClass::Periodic { period } => format!("periodic:{period}"),
        OrbitClass::Oscillating => "oscillating".into(),
        OrbitClass::Unsettled => "unsettled".into(),
        OrbitClass::Pole { step } => format!("pole:{step}"),
        OrbitClass::Diverged { step } => format!("diverged:{step}"),
    };
    let mut t = Table::new("orbit", vec!["step", "x"]);
    t.meta("lambda", nm.lambda);
    t.meta("class", class);
    t.meta("diameter", format!("{:.16e}", o.diameter));
    t.meta("empirical_period", opt(o.empirical_period));
    t.meta("k_star", opt(closed_form_fixed_point(&p, nm.lambda).ok()));
    for (i, x) in o.values.iter().enumerate() {
        t.push(vec![i.into(), (*x).into()]);
    }
    Ok(t)
}

/// Runs the self checks and prints one line per criterion.
pub fn check(only: &[u32]) -> Result<(), CliError> {
    let reports = qcavity::checks::run_selected(only);
    let mut failed = Vec::new();
    println!("# tool=qcavity version={} command=check", env!("CARGO_PKG_VERSION"));
    for r in &reports {
        println!("{r}");
        if !r.passed {
            failed.push(r.id.to_string());
        }
    }
    let total: f64 = reports.iter().map(|r| r.elapsed.as_secs_f64()).sum();
    println!("# {} of {} criteria passed in {total:.1}s", reports.len() - failed.len(), reports.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("criteria failed: {}", failed.join(","))))
    }
}
