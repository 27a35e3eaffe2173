//! Replica-symmetric analysis at a single Laplace point: the variance gain of
//! the delta-distributed fixed point and population dynamics for the cavity
//! distribution of m-type dissipation kernels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::laplace::{self, closed_form_fixed_point, g0_with, vernon_core, Orbit};
use crate::model::Params;

/// Smallest pool accepted by [`Population`].
pub const MIN_POOL: usize = 1000;

/// Consecutive pole rejections tolerated in one elementary update.
const MAX_REDRAWS: usize = 1000;

/// Both closed forms of the variance gain, computed independently.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceGain {
    /// ((n−1)/4)·C⁴·[G̃₀/(1−G̃₀k*)]⁴.
    pub propagated: f64,
    /// 4k*⁴/((n−1)³C⁴).
    pub closed: f64,
}

/// Factor by which a small variance of the m-type messages is multiplied in
/// one generation around the uniform fixed point; the delta solution is
/// stable when it is below one.
pub fn variance_gain(params: &Params<f64>, lambda: f64) -> Result<f64> {
    let g = variance_gain_forms(params, lambda)?;
    let rel = (g.propagated - g.closed).abs() / g.closed.abs().max(f64::MIN_POSITIVE);
    if rel > 1e-12 {
        return Err(Error::Numerical(format!(
            "variance gain forms disagree: {} vs {} (relative {rel:.2e})",
            g.propagated, g.closed
        )));
    }
    Ok(g.closed)
}

pub fn variance_gain_forms(params: &Params<f64>, lambda: f64) -> Result<VarianceGain> {
    // k* is the n-type sum of the n − 1 incoming m-type messages
    let k = closed_form_fixed_point(params, lambda)?;
    let b = params.branches();
    let c4 = params.coupling.powi(4);
    let g0 = laplace::g0_laplace(params, lambda);
    let dressed = g0 / (1.0 - g0 * k);
    Ok(VarianceGain {
        propagated: b / 4.0 * c4 * dressed.powi(4),
        closed: 4.0 * k.powi(4) / (b.powi(3) * c4),
    })
}

/// Distribution of edge couplings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CouplingDist {
    /// Every edge carries the model coupling.
    Constant,
    Uniform { lo: f64, hi: f64 },
    /// `low` with probability `p_low`, else `high`.
    TwoPoint { low: f64, high: f64, p_low: f64 },
}

/// Distribution of the degree of the node emitting a message.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DegreeDist {
    /// Every node has the model degree n.
    Fixed,
    TwoPoint { low: usize, high: usize, p_low: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disorder {
    pub coupling: CouplingDist,
    pub degree: DegreeDist,
}

impl Default for Disorder {
    fn default() -> Self {
        Self { coupling: CouplingDist::Constant, degree: DegreeDist::Fixed }
    }
}

impl Disorder {
    fn validate(&self) -> Result<()> {
        let bad = |name, reason: String| Err(Error::InvalidParam { name, reason });
        match self.coupling {
            CouplingDist::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo <= hi) => {
                return bad("coupling", format!("uniform coupling interval [{lo}, {hi}] is empty"));
            }
            CouplingDist::TwoPoint { low, high, p_low }
                if !(low.is_finite() && high.is_finite() && (0.0..=1.0).contains(&p_low)) =>
            {
                return bad("coupling", format!("two-point coupling ({low}, {high}, p = {p_low}) is invalid"));
            }
            _ => {}
        }
        if let DegreeDist::TwoPoint { low, high, p_low } = self.degree {
            if low < 1 || high < 1 || !(0.0..=1.0).contains(&p_low) {
                return bad("degree", format!("two-point degree ({low}, {high}, p = {p_low}) is invalid"));
            }
        }
        Ok(())
    }

    fn mean_coupling(&self, params: &Params<f64>) -> f64 {
        match self.coupling {
            CouplingDist::Constant => params.coupling,
            CouplingDist::Uniform { lo, hi } => 0.5 * (lo + hi),
            CouplingDist::TwoPoint { low, high, p_low } => p_low * low + (1.0 - p_low) * high,
        }
    }

    fn draw_coupling(&self, params: &Params<f64>, rng: &mut impl Rng) -> f64 {
        match self.coupling {
            CouplingDist::Constant => params.coupling,
            CouplingDist::Uniform { lo, hi } if lo < hi => rng.random_range(lo..hi),
            CouplingDist::Uniform { lo, .. } => lo,
            CouplingDist::TwoPoint { low, high, p_low } => {
                if rng.random::<f64>() < p_low {
                    low
                } else {
                    high
                }
            }
        }
    }

    fn draw_degree(&self, params: &Params<f64>, rng: &mut impl Rng) -> usize {
        match self.degree {
            DegreeDist::Fixed => params.n,
            DegreeDist::TwoPoint { low, high, p_low } => {
                if rng.random::<f64>() < p_low {
                    low
                } else {
                    high
                }
            }
        }
    }
}

/// How one sweep writes its results back into the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateScheme {
    /// Pool-size new samples are drawn from the current pool, then replace
    /// it as a whole.
    #[default]
    Generational,
    /// Each new sample immediately overwrites a uniformly chosen member.
    RandomOverwrite,
}

/// Pool of m-type dissipation-kernel samples at one Laplace point.
#[derive(Debug, Clone)]
pub struct Population {
    pub samples: Vec<f64>,
    pub lambda: f64,
    pub params: Params<f64>,
    pub disorder: Disorder,
    pub scheme: UpdateScheme,
    pub seed: u64,
    /// Vernon poles hit so far; each rejected draw was redrawn.
    pub rejections: usize,
    pub sweeps: usize,
    rng: ChaCha8Rng,
}

impl Population {
    pub fn new(params: &Params<f64>, lambda: f64, samples: Vec<f64>, seed: u64, disorder: Disorder) -> Result<Self> {
        if samples.len() < MIN_POOL {
            return Err(Error::InvalidParam {
                name: "pool",
                reason: format!("pool size {} below the minimum {MIN_POOL}", samples.len()),
            });
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParam {
                name: "lambda",
                reason: format!("Laplace point must be positive, got {lambda}"),
            });
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam {
                name: "pool",
                reason: "pool samples must be finite".into(),
            });
        }
        disorder.validate()?;
        Ok(Self {
            samples,
            lambda,
            params: *params,
            disorder,
            scheme: UpdateScheme::default(),
            seed,
            rejections: 0,
            sweeps: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Every sample at the uniform fixed point k*/(n−1).
    pub fn at_fixed_point(params: &Params<f64>, lambda: f64, size: usize, seed: u64) -> Result<Self> {
        let k = closed_form_fixed_point(params, lambda)? / params.branches();
        Self::new(params, lambda, vec![k; size], seed, Disorder::default())
    }

    /// Gaussian perturbation of the fixed point with standard deviation
    /// `rel_sigma`·k*/(n−1), drawn from the population's own stream.
    pub fn perturbed(params: &Params<f64>, lambda: f64, size: usize, seed: u64, rel_sigma: f64) -> Result<Self> {
        let mut pop = Self::at_fixed_point(params, lambda, size, seed)?;
        let mean = pop.samples[0];
        let normal = Normal::new(mean, rel_sigma.abs() * mean.abs()).map_err(|e| Error::InvalidParam {
            name: "rel_sigma",
            reason: e.to_string(),
        })?;
        for v in pop.samples.iter_mut() {
            *v = normal.sample(&mut pop.rng);
        }
        Ok(pop)
    }

    pub fn with_scheme(mut self, scheme: UpdateScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// One new m-type sample: draw a degree k, sum k − 1 pool members,
    /// draw a coupling and apply the Vernon step. Pole hits are redrawn.
    fn draw_message(&mut self, pool: &[f64]) -> Result<f64> {
        let mean_c = self.disorder.mean_coupling(&self.params);
        for _ in 0..MAX_REDRAWS {
            let k = self.disorder.draw_degree(&self.params, &mut self.rng);
            let input: f64 = (1..k).map(|_| pool[self.rng.random_range(0..pool.len())]).sum();
            let c = self.disorder.draw_coupling(&self.params, &mut self.rng);
            let omega_sq = self.params.omega0 * self.params.omega0 + k as f64 * mean_c / self.params.mass;
            let g0 = g0_with(self.params.mass, omega_sq, self.lambda);
            match vernon_core(0.5 * c * c, g0, input, self.lambda) {
                Ok(v) => return Ok(v),
                Err(_) => self.rejections += 1,
            }
        }
        Err(Error::Numerical(format!(
            "{MAX_REDRAWS} consecutive Vernon poles at lambda = {}",
            self.lambda
        )))
    }
}

/// One sweep of pool-size elementary updates.
pub fn population_step(pop: &mut Population) -> Result<()> {
    let size = pop.samples.len();
    match pop.scheme {
        UpdateScheme::Generational => {
            let old = std::mem::take(&mut pop.samples);
            let mut next = Vec::with_capacity(size);
            for _ in 0..size {
                match pop.draw_message(&old) {
                    Ok(v) => next.push(v),
                    Err(e) => {
                        pop.samples = old;
                        return Err(e);
                    }
                }
            }
            pop.samples = next;
        }
        UpdateScheme::RandomOverwrite => {
            for _ in 0..size {
                let pool = std::mem::take(&mut pop.samples);
                let v = pop.draw_message(&pool);
                pop.samples = pool;
                let slot = pop.rng.random_range(0..size);
                pop.samples[slot] = v?;
            }
        }
    }
    pop.sweeps += 1;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationStats {
    pub mean: f64,
    /// Population variance (divides by the pool size).
    pub variance: f64,
    pub std_error: f64,
    pub min: f64,
    pub max: f64,
    /// (lower edge, upper edge, count); the last bin is closed.
    pub histogram: Vec<(f64, f64, usize)>,
}

/// Mean, variance and a histogram over `edges` (or 20 equal bins spanning
/// the samples when `edges` is `None`).
pub fn population_stats(samples: &[f64], edges: Option<&[f64]>) -> PopulationStats {
    let n = samples.len().max(1) as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let variance = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let (min, max) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let default_edges;
    let edges = match edges {
        Some(e) => e,
        None => {
            let (lo, hi) = if samples.is_empty() {
                (0.0, 1.0)
            } else if min < max {
                (min, max)
            } else {
                (min - 0.5, min + 0.5)
            };
            default_edges = (0..=20).map(|i| lo + (hi - lo) * i as f64 / 20.0).collect::<Vec<_>>();
            &default_edges
        }
    };
    let bins = edges.len().saturating_sub(1);
    let mut counts = vec![0usize; bins];
    for &v in samples {
        if bins == 0 || v < edges[0] || v > edges[bins] {
            continue;
        }
        let idx = edges.partition_point(|&e| e <= v).saturating_sub(1).min(bins - 1);
        counts[idx] += 1;
    }
    PopulationStats {
        mean,
        variance,
        std_error: (variance / n).sqrt(),
        min,
        max,
        histogram: (0..bins).map(|i| (edges[i], edges[i + 1], counts[i])).collect(),
    }
}

/// Orbit of the uniform map from `x0`, classified as converged, periodic,
/// oscillating or stopped at a pole.
pub fn map_orbit(params: &Params<f64>, lambda: f64, x0: f64, steps: usize) -> Orbit<f64> {
    laplace::orbit(params, lambda, x0, steps, 1e-13)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplace::OrbitClass;
    use approx::assert_relative_eq;

    fn small(n: usize) -> Params<f64> {
        let cs = crate::model::critical_coupling(n, 1.0, 1.0).unwrap();
        Params::new(n, 1.0, 0.1 * cs, 1.0).unwrap()
    }

    #[test]
    fn gain_forms_agree_and_boundary_value() {
        let p = Params::new(3, 1.0, 2.0 * crate::model::critical_coupling(3, 1.0, 1.0).unwrap(), 1.0).unwrap();
        for lam in [0.5, 1.7, 3.0, 20.0] {
            if let Ok(f) = variance_gain_forms(&p, lam) {
                assert_relative_eq!(f.propagated, f.closed, max_relative = 1e-12);
            }
        }
        // the square root vanishes at λ*
        let ls = p.lambda_star().unwrap();
        let g = variance_gain(&p, ls * (1.0 + 1e-15)).unwrap();
        assert_relative_eq!(g, 0.5, max_relative = 1e-6);
        assert!(matches!(variance_gain(&p, 0.5 * ls), Err(Error::NoFixedPoint { .. })));
    }

    #[test]
    fn small_coupling_gain_scales_like_c4() {
        let n = 3;
        let cs = crate::model::critical_coupling(n, 1.0, 1.0).unwrap();
        let lam: f64 = 1.3;
        let p = Params::new(n, 1.0, 1e-3 * cs, 1.0).unwrap();
        let c = p.coupling;
        // leading order: ((n−1)/4)·C⁴·G̃₀⁴ with the bare G̃₀ = 2/(m(λ²+ω₀²))
        let g0: f64 = 2.0 / (lam * lam + 1.0);
        let g = variance_gain(&p, lam).unwrap();
        assert_relative_eq!(g, (n as f64 - 1.0) / 4.0 * c.powi(4) * g0.powi(4), max_relative = 1e-2);
        assert!(g < 1.0);
    }

    #[test]
    fn delta_pool_is_invariant() {
        let p = small(3);
        let mut pop = Population::at_fixed_point(&p, 0.7, 2000, 1).unwrap();
        let k = pop.samples[0];
        population_step(&mut pop).unwrap();
        assert!(pop.samples.iter().all(|v| (v - k).abs() <= 1e-14 * k));
    }

    #[test]
    fn zero_coupling_collapses() {
        let p = Params::new(3, 1.0, 0.0, 1.0).unwrap();
        let mut pop = Population::new(&p, 1.0, vec![0.3; 1500], 4, Disorder::default()).unwrap();
        population_step(&mut pop).unwrap();
        assert!(pop.samples.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn variance_contracts_at_the_predicted_rate() {
        for n in [2, 3, 5] {
            let p = small(n);
            let lam = 0.4;
            let g = variance_gain(&p, lam).unwrap();
            let mut pop = Population::perturbed(&p, lam, 20_000, 11, 0.01).unwrap();
            let mut var = population_stats(&pop.samples, None).variance;
            for _ in 0..3 {
                population_step(&mut pop).unwrap();
                let next = population_stats(&pop.samples, None).variance;
                assert_relative_eq!(next / var, g, max_relative = 0.2);
                var = next;
            }
        }
    }

    #[test]
    fn determinism_and_disorder() {
        let p = small(3);
        let dis = Disorder {
            coupling: CouplingDist::Uniform { lo: 0.5 * p.coupling, hi: 1.5 * p.coupling },
            degree: DegreeDist::TwoPoint { low: 2, high: 4, p_low: 0.5 },
        };
        let run = |seed| {
            let k = closed_form_fixed_point(&p, 1.0).unwrap() / 2.0;
            let mut pop = Population::new(&p, 1.0, vec![k; 1000], seed, dis).unwrap();
            for _ in 0..5 {
                population_step(&mut pop).unwrap();
            }
            pop.samples
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
        let s = population_stats(&run(7), None);
        assert!(s.variance > 0.0 && s.mean > 0.0);
        assert_eq!(s.histogram.iter().map(|b| b.2).sum::<usize>(), 1000);
    }

    #[test]
    fn overwrite_scheme_also_contracts() {
        let p = small(3);
        let pop = Population::perturbed(&p, 1.0, 5000, 3, 0.01).unwrap();
        let v0 = population_stats(&pop.samples, None).variance;
        let mut pop = pop.with_scheme(UpdateScheme::RandomOverwrite);
        for _ in 0..50 {
            population_step(&mut pop).unwrap();
        }
        assert!(population_stats(&pop.samples, None).variance < v0);
    }

    #[test]
    fn stats_basics() {
        let s = population_stats(&[0.0, 2.0, 0.0, 2.0], None);
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.variance, 1.0);
        assert_eq!(population_stats(&vec![3.0; 1000], None).variance, 0.0);
        let s = population_stats(&[0.5, 1.0, 1.5, 3.0], Some(&[0.0, 1.0, 2.0]));
        assert_eq!(s.histogram.iter().map(|b| b.2).collect::<Vec<_>>(), vec![1, 2]);
        assert!(Population::new(&small(2), 1.0, vec![1.0; 10], 0, Disorder::default()).is_err());
    }

    #[test]
    fn orbits() {
        let p = Params::new(2, 1.0, 2.0 * crate::model::critical_coupling(2, 1.0, 1.0).unwrap(), 1.0).unwrap();
        let k = closed_form_fixed_point(&p, 2.0).unwrap();
        assert!(map_orbit(&p, 2.0, 0.0, 5000).converged());
        let fixed = map_orbit(&p, 2.0, k, 10);
        assert!(matches!(fixed.class, OrbitClass::Converged { iterations: 1 }));
        let o = map_orbit(&p, 0.5, 0.0, 5000);
        assert!(!o.converged());
        assert!(o.diameter.is_finite() && o.diameter > 0.0);
    }
}
