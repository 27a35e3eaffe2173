//! Quadrature rules used by the time-domain and finite-time modules.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on [−1, 1], by Newton iteration on the
/// Legendre recurrence.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let n = order as f64;
        for i in 0..order.div_ceil(2) {
            // Tricomi's initial guess, then Newton.
            let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
            let (_, d) = legendre(order, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        if order % 2 == 1 {
            nodes[order / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// ∫_a^b f with this rule mapped affinely.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        half * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
    }

    /// Composite rule over `panels` equal panels of [a, b].
    pub fn integrate_composite(&self, a: f64, b: f64, panels: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|k| self.integrate(a + k as f64 * h, a + (k + 1) as f64 * h, &mut f))
            .sum()
    }
}

/// P_n(x) and P_n'(x).
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss-Chebyshev rule of the second kind: ∫_{−1}^{1} f(x)·√(1−x²) dx
/// ≈ Σ wᵢ f(xᵢ) with xᵢ = cos(iπ/(N+1)), wᵢ = π/(N+1)·sin²(iπ/(N+1)).
#[derive(Debug, Clone)]
pub struct ChebyshevU {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ChebyshevU {
    pub fn new(order: usize) -> Self {
        let h = PI / (order as f64 + 1.0);
        let (nodes, weights) = (1..=order)
            .map(|i| {
                let t = i as f64 * h;
                (t.cos(), h * t.sin().powi(2))
            })
            .unzip();
        Self { nodes, weights }
    }

    /// ∫_0^1 g(s)·√(s(1−s)) ds, through s = (1+x)/2.
    pub fn integrate_unit(&self, mut g: impl FnMut(f64) -> f64) -> f64 {
        0.25 * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(0.5 * (1.0 + x)))
            .sum::<f64>()
    }
}

/// Composite Boole weights for `intervals` equal steps of size `h`
/// (`intervals` must be a multiple of four).
pub fn boole_weights(intervals: usize, h: f64) -> Vec<f64> {
    assert!(intervals.is_multiple_of(4), "Boole rule needs a multiple of four intervals");
    let mut w = vec![0.0; intervals + 1];
    let c = 2.0 * h / 45.0;
    for k in (0..intervals).step_by(4) {
        for (j, b) in [7.0, 32.0, 12.0, 32.0, 7.0].iter().enumerate() {
            w[k + j] += c * b;
        }
    }
    w
}

/// Trapezoid sum of `f` sampled with step `h`.
pub fn trapezoid(f: &[f64], h: f64) -> f64 {
    match f.len() {
        0 | 1 => 0.0,
        n => h * (f.iter().sum::<f64>() - 0.5 * (f[0] + f[n - 1])),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_exact_for_polynomials() {
        for order in [1, 2, 5, 20, 41] {
            let gl = GaussLegendre::new(order);
            assert_relative_eq!(gl.weights.iter().sum::<f64>(), 2.0, max_relative = 1e-14);
            for deg in 0..(2 * order) {
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                let got = gl.integrate(-1.0, 1.0, |x| x.powi(deg as i32));
                assert!((got - exact).abs() < 1e-13, "order {order} degree {deg}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn legendre_twenty_point_reference() {
        // largest node of the 20-point rule (tabulated value)
        let gl = GaussLegendre::new(20);
        assert_relative_eq!(gl.nodes[19], 0.993_128_599_185_094_9, max_relative = 1e-15);
        assert_relative_eq!(gl.weights[19], 0.017_614_007_139_152_12, max_relative = 1e-13);
    }

    #[test]
    fn chebyshev_u_moments() {
        // ∫_0^1 √(s(1−s)) ds = π/8, ∫_0^1 s √(s(1−s)) ds = π/16
        let cu = ChebyshevU::new(30);
        assert_relative_eq!(cu.integrate_unit(|_| 1.0), PI / 8.0, max_relative = 1e-14);
        assert_relative_eq!(cu.integrate_unit(|s| s), PI / 16.0, max_relative = 1e-14);
        // smooth non-polynomial integrand against a composite Gauss-Legendre reference
        // after s = sin²θ, which removes the endpoint singularities
        let gl = GaussLegendre::new(30);
        let f = |s: f64| (3.0 * s).cos() / (0.3 + s);
        let reference = gl.integrate_composite(0.0, PI / 2.0, 8, |t| {
            let s = t.sin().powi(2);
            f(s) * (s * (1.0 - s)).sqrt() * 2.0 * t.sin() * t.cos()
        });
        assert_relative_eq!(ChebyshevU::new(60).integrate_unit(f), reference, max_relative = 1e-13);
    }

    #[test]
    fn boole_and_trapezoid() {
        let n = 40;
        let h = 1.0 / n as f64;
        let f: Vec<f64> = (0..=n).map(|i| (i as f64 * h).exp()).collect();
        let exact = 1f64.exp() - 1.0;
        let boole: f64 = boole_weights(n, h).iter().zip(&f).map(|(w, y)| w * y).sum();
        assert_relative_eq!(boole, exact, max_relative = 1e-11);
        let trap = trapezoid(&f, h);
        assert!((trap - exact).abs() < 1e-4 && (trap - exact).abs() > 1e-6);
    }
}
