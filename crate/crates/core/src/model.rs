//! Physical parameters of a uniform network and the quantities derived from
//! them: effective frequency, band edges, critical coupling, and the
//! existence predicate for the uniform fixed point.

use crate::error::{Error, Result};
use crate::num::Real;

/// Degree, bare frequency, coupling and mass, together with every derived
/// spectral quantity. Build with [`Params::new`]; fields are read-only by
/// convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params<T> {
    pub n: usize,
    pub omega0: T,
    pub coupling: T,
    pub mass: T,
    /// ω² = ω₀² + n·C/m.
    pub omega_sq: T,
    /// Band half-width a² = √(8(n−1))·C/m; `None` for negative coupling.
    pub a_sq: Option<T>,
    /// Upper band edge √(ω² + a²).
    pub lambda_pp: Option<T>,
    /// Lower band edge √(ω² − a²); `None` once a² exceeds ω².
    pub lambda_pm: Option<T>,
    /// λ₊₋ / λ₊₊.
    pub q: Option<T>,
    /// Prefactor of the sine-integral representation of the fixed-point
    /// kernel, m·λ₊₊³/(2π).
    pub amplitude: Option<T>,
}

/// Band edges and derived constants, available when both edges are real.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band<T> {
    pub a_sq: T,
    pub upper: T,
    pub lower: T,
    pub q: T,
    pub amplitude: T,
}

impl<T: Real> Params<T> {
    pub fn new(n: usize, omega0: T, coupling: T, mass: T) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParam {
                name: "n",
                reason: format!("degree must be at least 2, got {n}"),
            });
        }
        for (name, v) in [("omega0", omega0), ("C", coupling), ("m", mass)] {
            if !v.is_finite() {
                return Err(Error::InvalidParam {
                    name,
                    reason: format!("must be finite, got {v}"),
                });
            }
        }
        if omega0 <= T::zero() {
            return Err(Error::InvalidParam {
                name: "omega0",
                reason: format!("must be positive, got {omega0}"),
            });
        }
        if mass <= T::zero() {
            return Err(Error::InvalidParam {
                name: "m",
                reason: format!("must be positive, got {mass}"),
            });
        }
        let nf = T::from_count(n);
        let bound = -mass * omega0 * omega0 / nf;
        if coupling <= bound {
            return Err(Error::PositivityBound {
                coupling: coupling.as_f64(),
                bound: bound.as_f64(),
            });
        }

        let omega_sq = omega0 * omega0 + nf * coupling / mass;
        let (mut a_sq, mut lambda_pp, mut lambda_pm, mut q, mut amplitude) =
            (None, None, None, None, None);
        if coupling >= T::zero() {
            let a2 = branch_root::<T>(n) * coupling / mass;
            let upper = (omega_sq + a2).sqrt();
            a_sq = Some(a2);
            lambda_pp = Some(upper);
            amplitude = Some(mass * upper.powi(3) / (T::lit(2.0) * T::PI()));
            if omega_sq >= a2 {
                let lower = (omega_sq - a2).sqrt();
                lambda_pm = Some(lower);
                q = Some(if a2 == T::zero() { T::one() } else { lower / upper });
            }
        }
        Ok(Self {
            n,
            omega0,
            coupling,
            mass,
            omega_sq,
            a_sq,
            lambda_pp,
            lambda_pm,
            q,
            amplitude,
        })
    }

    /// Same parameters with a different coupling.
    pub fn with_coupling(&self, coupling: T) -> Result<Self> {
        Self::new(self.n, self.omega0, coupling, self.mass)
    }

    pub fn omega(&self) -> T {
        self.omega_sq.sqrt()
    }

    /// Number of upstream branches feeding one message, n − 1.
    pub fn branches(&self) -> T {
        T::from_count(self.n - 1)
    }

    /// Band data, or an error when either edge is not real.
    pub fn band(&self) -> Result<Band<T>> {
        match (self.a_sq, self.lambda_pp, self.lambda_pm, self.q, self.amplitude) {
            (Some(a_sq), Some(upper), Some(lower), Some(q), Some(amplitude)) => Ok(Band {
                a_sq,
                upper,
                lower,
                q,
                amplitude,
            }),
            (None, ..) => Err(Error::BandUndefined("negative coupling")),
            _ => Err(Error::BandUndefined("lower band edge is imaginary")),
        }
    }

    pub fn critical_coupling(&self) -> Option<T> {
        critical_coupling(self.n, self.omega0, self.mass)
    }

    pub fn lambda_star(&self) -> Option<T> {
        lambda_star(self)
    }

    /// Square-root argument of the closed-form fixed point at Laplace
    /// variable `lambda`: 1 − 8(n−1)C²/(m²(λ²+ω²)²).
    pub fn discriminant(&self, lambda: T) -> T {
        let x = self.mass * (lambda * lambda + self.omega_sq);
        let c2 = self.coupling * self.coupling;
        T::one() - T::lit(8.0) * self.branches() * c2 / (x * x)
    }

    pub fn fixed_point_exists(&self, lambda: T) -> bool {
        fixed_point_exists(self, lambda)
    }
}

/// √(8(n−1)).
fn branch_root<T: Real>(n: usize) -> T {
    (T::lit(8.0) * T::from_count(n - 1)).sqrt()
}

pub fn derive_params<T: Real>(n: usize, omega0: T, coupling: T, mass: T) -> Result<Params<T>> {
    Params::new(n, omega0, coupling, mass)
}

/// Coupling above which the fixed point at λ = 0 disappears:
/// m·ω₀²/(√(8(n−1)) − n), or `None` when the denominator is not positive.
/// The denominator is positive for n ≤ 6 only.
pub fn critical_coupling<T: Real>(n: usize, omega0: T, mass: T) -> Option<T> {
    if n < 2 {
        return None;
    }
    let denom = branch_root::<T>(n) - T::from_count(n);
    (denom > T::zero()).then(|| mass * omega0 * omega0 / denom)
}

/// Laplace-variable threshold ω₀·√(C/C* − 1) below which the fixed point is
/// missing, for couplings beyond the critical one.
pub fn lambda_star<T: Real>(params: &Params<T>) -> Option<T> {
    let c_star = params.critical_coupling()?;
    (params.coupling > c_star).then(|| params.omega0 * (params.coupling / c_star - T::one()).sqrt())
}

/// Evaluated from the square-root argument directly, independent of
/// [`critical_coupling`].
pub fn fixed_point_exists<T: Real>(params: &Params<T>, lambda: T) -> bool {
    if lambda.is_infinite() {
        return true;
    }
    params.discriminant(lambda) >= T::zero()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn right_panel_parameters() {
        let p = Params::<f64>::new(20, 0.1, 20.0, 0.5).unwrap();
        assert_relative_eq!(p.omega_sq, 800.01, max_relative = 1e-15);
        // 8·19 = 152, √152·40
        let a2 = 152f64.sqrt() * 40.0;
        assert_relative_eq!(p.a_sq.unwrap(), a2, max_relative = 1e-15);
        assert_relative_eq!(p.lambda_pp.unwrap(), 35.960577306_8, max_relative = 1e-10);
        assert_relative_eq!(p.lambda_pm.unwrap(), 17.517330840_1, max_relative = 1e-10);
        assert_relative_eq!(p.q.unwrap(), 0.487125962709, max_relative = 1e-10);
    }

    #[test]
    fn decoupled_network() {
        let p = Params::<f64>::new(5, 10.0, 0.0, 0.5).unwrap();
        assert_eq!(p.omega_sq, 100.0);
        assert_eq!(p.a_sq, Some(0.0));
        assert_eq!(p.lambda_pp, Some(10.0));
        assert_eq!(p.lambda_pm, Some(10.0));
        assert_eq!(p.q, Some(1.0));
    }

    #[test]
    fn positivity_bound_rejected() {
        let err = Params::<f64>::new(2, 1.0, -0.6, 1.0).unwrap_err();
        assert!(matches!(err, Error::PositivityBound { .. }), "{err}");
        assert!(Params::<f64>::new(2, 1.0, -0.5, 1.0).is_err());
        let p = Params::<f64>::new(2, 1.0, -0.49, 1.0).unwrap();
        assert!(p.band().is_err());
    }

    #[test]
    fn bad_inputs_rejected() {
        assert!(Params::<f64>::new(1, 1.0, 0.0, 1.0).is_err());
        assert!(Params::<f64>::new(2, f64::NAN, 0.0, 1.0).is_err());
        assert!(Params::<f64>::new(2, 1.0, f64::INFINITY, 1.0).is_err());
        assert!(Params::<f64>::new(2, 1.0, 0.0, 0.0).is_err());
        assert!(Params::<f64>::new(2, -1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn critical_coupling_values() {
        let c2 = critical_coupling(2, 1.0, 1.0).unwrap();
        assert_relative_eq!(c2, 1.0 / (8f64.sqrt() - 2.0), max_relative = 1e-15);
        assert_relative_eq!(c2, 1.207106781186547, max_relative = 1e-14);
        let c5 = critical_coupling(5, 10.0, 0.5).unwrap();
        assert_relative_eq!(c5, 50.0 / (32f64.sqrt() - 5.0), max_relative = 1e-15);
        assert!((c5 - 76.12).abs() < 0.01);
        for n in 7..40 {
            assert!(critical_coupling(n, 1.0, 1.0).is_none(), "n = {n}");
        }
        for n in 2..7 {
            assert!(critical_coupling(n, 1.0, 1.0).is_some(), "n = {n}");
        }
    }

    #[test]
    fn critical_coupling_matches_existence_scan() {
        // Scan C at λ = 0 with the direct predicate and bisect the switch.
        for n in 2..7 {
            let c_star = critical_coupling(n, 1.3, 0.7).unwrap();
            let exists = |c: f64| Params::<f64>::new(n, 1.3, c, 0.7).unwrap().fixed_point_exists(0.0);
            let (mut lo, mut hi) = (0.0, 10.0 * c_star);
            assert!(exists(lo) && !exists(hi));
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if exists(mid) {
                    lo = mid
                } else {
                    hi = mid
                }
            }
            assert_relative_eq!(lo, c_star, max_relative = 1e-12);
        }
    }

    #[test]
    fn lambda_star_values() {
        let c_star = critical_coupling(2, 1.0, 1.0).unwrap();
        let p = Params::<f64>::new(2, 1.0, 2.0 * c_star, 1.0).unwrap();
        assert_relative_eq!(p.lambda_star().unwrap(), 1.0, max_relative = 1e-14);
        let p = Params::<f64>::new(2, 1.0, c_star, 1.0).unwrap();
        assert!(p.lambda_star().is_none());
        let p = Params::<f64>::new(8, 1.0, 100.0, 1.0).unwrap();
        assert!(p.lambda_star().is_none());
    }

    #[test]
    fn existence_examples() {
        let p = Params::<f64>::new(5, 10.0, 1.0, 0.5).unwrap();
        assert!(p.fixed_point_exists(0.0));
        assert_relative_eq!(p.discriminant(0.0), 1.0 - 32.0 / (0.25 * 110.0 * 110.0), max_relative = 1e-15);
        assert!((p.discriminant(0.0) - 0.9894).abs() < 1e-4);

        let c_star = critical_coupling(2, 1.0, 1.0).unwrap();
        let above = Params::<f64>::new(2, 1.0, c_star * (1.0 + 1e-9), 1.0).unwrap();
        let below = Params::<f64>::new(2, 1.0, c_star * (1.0 - 1e-9), 1.0).unwrap();
        assert!(!above.fixed_point_exists(0.0));
        assert!(below.fixed_point_exists(0.0));
        assert!(above.fixed_point_exists(f64::INFINITY));
        assert!(above.fixed_point_exists(1e8));
    }

    #[test]
    fn generic_over_f32() {
        let p = Params::<f32>::new(20, 0.1, 20.0, 0.5).unwrap();
        assert!((p.lambda_pp.unwrap() - 35.960_577).abs() < 1e-4);
        assert!(critical_coupling::<f32>(8, 1.0, 1.0).is_none());
    }
}
