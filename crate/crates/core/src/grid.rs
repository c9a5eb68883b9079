//! Spatial and space-time grids shared by the quadrature engine and the solver.

use crate::error::{Error, Result};

/// Axis-aligned box in R^n.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    pub bounds: Vec<(f64, f64)>,
}

impl BoxDomain {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() || bounds.len() > 3 {
            return Err(Error::Invalid(format!(
                "box dimension must be 1..=3, got {}",
                bounds.len()
            )));
        }
        for &(a, b) in &bounds {
            if !(a < b) || !a.is_finite() || !b.is_finite() {
                return Err(Error::Invalid(format!("empty or invalid box side [{a},{b}]")));
            }
        }
        Ok(Self { bounds })
    }

    /// Cube [-r, r]^n.
    pub fn centered_cube(dim: usize, r: f64) -> Self {
        Self {
            bounds: vec![(-r, r); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.bounds)
            .all(|(&xi, &(a, b))| xi >= a && xi <= b)
    }

    pub fn volume(&self) -> f64 {
        self.bounds.iter().map(|&(a, b)| b - a).product()
    }

    pub fn intersect(&self, other: &BoxDomain) -> Option<BoxDomain> {
        let bounds: Vec<(f64, f64)> = self
            .bounds
            .iter()
            .zip(&other.bounds)
            .map(|(&(a, b), &(c, d))| (a.max(c), b.min(d)))
            .collect();
        if bounds.iter().all(|&(a, b)| a < b) {
            Some(BoxDomain { bounds })
        } else {
            None
        }
    }
}

/// Uniform cell grid over a box; values live at cell midpoints.
#[derive(Debug, Clone)]
pub struct SpatialGrid {
    pub domain: BoxDomain,
    pub cells: Vec<usize>,
}

impl SpatialGrid {
    pub fn new(domain: BoxDomain, cells: Vec<usize>) -> Result<Self> {
        if cells.len() != domain.dim() || cells.iter().any(|&c| c == 0) {
            return Err(Error::Invalid("cell counts must match dim and be positive".into()));
        }
        Ok(Self { domain, cells })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.domain
            .bounds
            .iter()
            .zip(&self.cells)
            .map(|(&(a, b), &c)| (b - a) / c as f64)
            .product()
    }

    /// Midpoint of the flat-indexed cell.
    pub fn cell_center(&self, flat: usize) -> Vec<f64> {
        let mut idx = flat;
        let mut out = Vec::with_capacity(self.dim());
        for d in 0..self.dim() {
            let c = self.cells[d];
            let i = idx % c;
            idx /= c;
            let (a, b) = self.domain.bounds[d];
            let h = (b - a) / c as f64;
            out.push(a + (i as f64 + 0.5) * h);
        }
        out
    }
}

/// Space-time discretization: uniform spatial nodes on a box plus a geometric
/// time ladder refined toward t = 0.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub domain: BoxDomain,
    pub h: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub ratio: f64,
}

impl GridSpec {
    pub fn new(domain: BoxDomain, h: f64, t_min: f64, t_max: f64, ratio: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Invalid("h must be positive".into()));
        }
        if !(t_min > 0.0 && t_min < t_max) {
            return Err(Error::Invalid(format!(
                "need 0 < t_min < t_max, got t_min={t_min}, t_max={t_max}"
            )));
        }
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::Invalid("time ratio must lie in (0,1)".into()));
        }
        Ok(Self {
            domain,
            h,
            t_min,
            t_max,
            ratio,
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Node count per dimension, boundary nodes included.
    pub fn nodes_per_dim(&self) -> Vec<usize> {
        self.domain
            .bounds
            .iter()
            .map(|&(a, b)| ((b - a) / self.h).round() as usize + 1)
            .collect()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes_per_dim().iter().product()
    }

    pub fn node_coord(&self, flat: usize) -> Vec<f64> {
        let npd = self.nodes_per_dim();
        let mut idx = flat;
        let mut out = Vec::with_capacity(self.dim());
        for d in 0..self.dim() {
            let i = idx % npd[d];
            idx /= npd[d];
            out.push(self.domain.bounds[d].0 + i as f64 * self.h);
        }
        out
    }

    /// Geometric time nodes t_j = t_max * ratio^(J-j), ascending, with t_min
    /// prepended when the ladder does not land on it.
    pub fn time_nodes(&self) -> Vec<f64> {
        let mut nodes = Vec::new();
        let mut t = self.t_max;
        while t > self.t_min * (1.0 + 1e-12) {
            nodes.push(t);
            t *= self.ratio;
        }
        nodes.push(self.t_min);
        nodes.reverse();
        nodes
    }
}
