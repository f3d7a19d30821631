//! Gauss–Legendre rules and a product rule on the unit disk.

use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// `n`-point rule on `[-1, 1]`, exact for polynomials of degree `2n − 1`.
    ///
    /// Nodes are Newton-refined roots of `P_n` from the Tricomi initial guess.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        pairwise_sum(&self.on_interval(a, b).map(|(x, w)| w * f(x)).collect::<Vec<_>>())
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Summation by recursive halving; the order is fixed by the input order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n if n <= 8 => values.iter().sum(),
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Product rule on the unit disk: Gauss–Legendre in `rho ∈ [0, 1]` and the
/// trapezoid rule in `theta`, with the `rho` Jacobian folded into the weights.
///
/// With `n_rho` radial and `n_theta` azimuthal nodes it integrates
/// `rho^k cos(m theta)` exactly for `k + 1 ≤ 2 n_rho − 1` and `m < n_theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiskRule {
    pub rho: Vec<f64>,
    pub theta: Vec<f64>,
    /// `w_rho[i] * rho[i]`
    radial_weights: Vec<f64>,
    angular_weight: f64,
}

impl DiskRule {
    pub fn new(n_rho: usize, n_theta: usize) -> Self {
        assert!(n_theta >= 1);
        let gl = GaussLegendre::new(n_rho);
        let (rho, radial_weights): (Vec<f64>, Vec<f64>) =
            gl.on_interval(0.0, 1.0).map(|(r, w)| (r, w * r)).unzip();
        let theta = (0..n_theta).map(|j| 2.0 * PI * j as f64 / n_theta as f64).collect();
        Self { rho, theta, radial_weights, angular_weight: 2.0 * PI / n_theta as f64 }
    }

    /// Rule with `order` radial nodes and `4·order` azimuthal nodes.
    pub fn with_order(order: usize) -> Self {
        Self::new(order, 4 * order)
    }

    /// `(rho, theta, weight)` for every node, radial index outermost.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.rho.iter().zip(&self.radial_weights).flat_map(move |(&r, &wr)| {
            self.theta.iter().map(move |&t| (r, t, wr * self.angular_weight))
        })
    }

    /// `∫₀¹ ∫₀^{2π} f(rho, theta) rho drho dtheta`
    pub fn integrate<F: Fn(f64, f64) -> f64>(&self, f: F) -> f64 {
        let terms: Vec<f64> = self.points().map(|(r, t, w)| w * f(r, t)).collect();
        pairwise_sum(&terms)
    }
}
