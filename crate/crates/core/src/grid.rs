//! Hurst parameters, uniform grids on `[0, 1]` and sampled paths.

use crate::error::{invalid, Error, Result};

/// Regularity class of a Hurst parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `H < 1/2`
    Rough,
    /// `H = 1/2`
    Brownian,
    /// `H > 1/2`
    Young,
}

/// Hurst parameter, strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Hurst(f64);

impl Hurst {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 && value < 1.0 {
            Ok(Self(value))
        } else {
            Err(invalid("hurst", format!("{value} is not in (0, 1)")))
        }
    }

    pub const fn value(self) -> f64 {
        self.0
    }

    pub fn regime(self) -> Regime {
        if self.0 < 0.5 {
            Regime::Rough
        } else if self.0 > 0.5 {
            Regime::Young
        } else {
            Regime::Brownian
        }
    }
}

impl std::fmt::Display for Hurst {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Uniform partition `t_k = k / n`, `k = 0..=n`, of `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeGrid {
    n: usize,
}

/// Uniform grid with `n` steps.
pub fn make_grid(n: usize) -> Result<TimeGrid> {
    TimeGrid::new(n)
}

impl TimeGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("grid_n", "a grid needs at least one step"));
        }
        Ok(Self { n })
    }

    /// Number of steps.
    pub const fn n(&self) -> usize {
        self.n
    }

    /// Number of nodes, `n + 1`.
    pub const fn len(&self) -> usize {
        self.n + 1
    }

    pub const fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        debug_assert!(k <= self.n);
        if k == self.n {
            1.0
        } else {
            k as f64 / self.n as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n).map(|k| self.node(k)).collect()
    }
}

/// Grid samples of an `R^dim`-valued path, stored row-major (one row per node).
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl Path {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "path dimension must be positive"));
        }
        if values.len() != grid.len() * dim {
            return Err(Error::Dimension(format!(
                "expected {} values for {} nodes x {dim} components, got {}",
                grid.len() * dim,
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, dim, values })
    }

    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        assert!(dim > 0);
        Self {
            grid,
            dim,
            values: vec![0.0; grid.len() * dim],
        }
    }

    /// Scalar path from node values.
    pub fn scalar(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, 1, values)
    }

    /// Samples `f(t, out)` at every node.
    pub fn from_fn(grid: TimeGrid, dim: usize, mut f: impl FnMut(f64, &mut [f64])) -> Self {
        let mut path = Self::zeros(grid, dim);
        for k in 0..grid.len() {
            let t = grid.node(k);
            f(t, path.at_mut(k));
        }
        path
    }

    /// Scalar path `t -> f(t)`.
    pub fn scalar_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, 1, |t, out| out[0] = f(t))
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Row at node `k`.
    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn at_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn start(&self) -> &[f64] {
        self.at(0)
    }

    pub fn end(&self) -> &[f64] {
        self.at(self.grid.n())
    }

    /// Increment over cell `k`, i.e. `h(t_{k+1}) - h(t_k)`, component `j`.
    pub fn increment(&self, k: usize, j: usize) -> f64 {
        self.values[(k + 1) * self.dim + j] - self.values[k * self.dim + j]
    }

    /// Component `j` as a node vector.
    pub fn component(&self, j: usize) -> Vec<f64> {
        assert!(j < self.dim);
        self.values
            .iter()
            .skip(j)
            .step_by(self.dim)
            .copied()
            .collect()
    }

    /// Assembles a path from per-component node vectors.
    pub fn from_components(grid: TimeGrid, comps: &[Vec<f64>]) -> Result<Self> {
        let dim = comps.len();
        if dim == 0 {
            return Err(invalid("dim", "no components"));
        }
        let mut values = vec![0.0; grid.len() * dim];
        for (j, c) in comps.iter().enumerate() {
            if c.len() != grid.len() {
                return Err(Error::Dimension(format!(
                    "component {j} has {} values, grid has {} nodes",
                    c.len(),
                    grid.len()
                )));
            }
            for (k, v) in c.iter().enumerate() {
                values[k * dim + j] = *v;
            }
        }
        Ok(Self { grid, dim, values })
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            dim: self.dim,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// Restriction to every `factor`-th node.
    pub fn subsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.grid.n().is_multiple_of(factor) {
            return Err(invalid(
                "factor",
                format!("{factor} does not divide n = {}", self.grid.n()),
            ));
        }
        let grid = TimeGrid::new(self.grid.n() / factor)?;
        let mut values = Vec::with_capacity(grid.len() * self.dim);
        for k in 0..grid.len() {
            values.extend_from_slice(self.at(k * factor));
        }
        Ok(Self {
            grid,
            dim: self.dim,
            values,
        })
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_examples() {
        assert_eq!(make_grid(1).unwrap().nodes(), vec![0.0, 1.0]);
        assert_eq!(
            make_grid(4).unwrap().nodes(),
            vec![0.0, 0.25, 0.5, 0.75, 1.0]
        );
        assert!(make_grid(0).is_err());
    }

    #[test]
    fn grid_endpoints_exact() {
        for n in [3, 7, 10, 333] {
            let g = make_grid(n).unwrap();
            let nodes = g.nodes();
            assert_eq!(nodes[0], 0.0);
            assert_eq!(nodes[n], 1.0);
            assert!(nodes.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn hurst_regimes() {
        assert_eq!(Hurst::new(0.3).unwrap().regime(), Regime::Rough);
        assert_eq!(Hurst::new(0.5).unwrap().regime(), Regime::Brownian);
        assert_eq!(Hurst::new(0.7).unwrap().regime(), Regime::Young);
        assert!(Hurst::new(0.0).is_err());
        assert!(Hurst::new(1.0).is_err());
        assert!(Hurst::new(f64::NAN).is_err());
    }

    #[test]
    fn path_shape_checked() {
        let g = make_grid(2).unwrap();
        assert!(Path::new(g, 2, vec![0.0; 6]).is_ok());
        assert!(Path::new(g, 2, vec![0.0; 5]).is_err());
    }

    #[test]
    fn components_roundtrip_and_subsample() {
        let g = make_grid(4).unwrap();
        let p = Path::from_fn(g, 2, |t, out| {
            out[0] = t;
            out[1] = t * t;
        });
        let q = Path::from_components(g, &[p.component(0), p.component(1)]).unwrap();
        assert_eq!(p, q);
        let s = p.subsample(2).unwrap();
        assert_eq!(s.grid().n(), 2);
        assert_eq!(s.at(1), &[0.5, 0.25]);
        assert!(p.subsample(3).is_err());
    }
}
