/// Uniform grid on the nondimensional contact patch `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    n_cells: usize,
}

impl Grid {
    pub fn new(n_cells: usize) -> Self {
        assert!(n_cells >= 1, "grid needs at least one cell");
        Self { n_cells }
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 / self.n_cells as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_nodes()).map(move |j| self.node(j))
    }

    /// Composite trapezoid weights.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut w = vec![h; self.n_nodes()];
        w[0] = 0.5 * h;
        w[self.n_cells] = 0.5 * h;
        w
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.n_nodes());
        let h = self.spacing();
        let inner: f64 = values[1..self.n_cells].iter().sum();
        h * (inner + 0.5 * (values[0] + values[self.n_cells]))
    }

    /// L2 norm of a two-component grid function, trapezoid rule.
    pub fn l2_norm(&self, values: &[Vec<f64>; 2]) -> f64 {
        let sq: Vec<f64> = values[0]
            .iter()
            .zip(&values[1])
            .map(|(a, b)| a * a + b * b)
            .collect();
        self.integrate(&sq).sqrt()
    }
}

// 4-point Gauss-Legendre rule on [-1, 1].
const GL_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GL_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

/// Composite 4-point Gauss-Legendre quadrature of `f` over `[0, 1]` using the
/// cells of `grid` as panels.
pub fn gauss_legendre<F: Fn(f64) -> f64>(grid: &Grid, f: F) -> f64 {
    let h = grid.spacing();
    let mut total = 0.0;
    for k in 0..grid.n_cells() {
        let mid = (k as f64 + 0.5) * h;
        let panel: f64 = GL_NODES
            .iter()
            .zip(GL_WEIGHTS.iter())
            .map(|(x, w)| w * f(mid + 0.5 * h * x))
            .sum();
        total += 0.5 * h * panel;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_is_exact_for_affine() {
        let g = Grid::new(7);
        let v: Vec<f64> = g.nodes().map(|x| 3.0 * x - 1.0).collect();
        assert!((g.integrate(&v) - 0.5).abs() < 1e-15);
        let w: f64 = g.trapezoid_weights().iter().sum();
        assert!((w - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gauss_legendre_integrates_exponential() {
        let g = Grid::new(20);
        let q = gauss_legendre(&g, |x| (-3.0 * x).exp());
        let exact = (1.0 - (-3.0f64).exp()) / 3.0;
        assert!((q - exact).abs() < 1e-14);
    }

    #[test]
    fn l2_norm_of_constant_profile() {
        let g = Grid::new(50);
        let z = [vec![0.027; 51], vec![0.033; 51]];
        let expected = (0.027f64.powi(2) + 0.033f64.powi(2)).sqrt();
        assert!((g.l2_norm(&z) - expected).abs() < 1e-15);
    }
}
