//! Initial data: finite atomic measures plus an optional gridded density.

use crate::error::{Error, Result};
use crate::grid::{BoxDomain, SpatialGrid};

#[derive(Debug, Clone)]
pub struct Atom {
    pub location: Vec<f64>,
    pub weight: f64,
}

/// Nonnegative density sampled at cell midpoints of its grid.
#[derive(Debug, Clone)]
pub struct DensityGrid {
    pub grid: SpatialGrid,
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn new(grid: SpatialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_cells() {
            return Err(Error::Invalid(format!(
                "density needs {} cell values, got {}",
                grid.num_cells(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Invalid("density values must be finite and >= 0".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn uniform(grid: SpatialGrid, value: f64) -> Result<Self> {
        let n = grid.num_cells();
        Self::new(grid, vec![value; n])
    }
}

/// A nonnegative measure in M_T(R^n): atoms plus an optional density part.
#[derive(Debug, Clone)]
pub struct Measure {
    pub dim: usize,
    pub atoms: Vec<Atom>,
    pub density: Option<DensityGrid>,
}

impl Measure {
    pub fn new(
        dim: usize,
        atoms: Vec<Atom>,
        density: Option<DensityGrid>,
        horizon: f64,
    ) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Invalid(format!("dim must be 1..=3, got {dim}")));
        }
        for a in &atoms {
            if a.location.len() != dim || a.location.iter().any(|x| !x.is_finite()) {
                return Err(Error::Invalid("atom location must be a finite point in R^n".into()));
            }
            if !(a.weight > 0.0) || !a.weight.is_finite() {
                return Err(Error::Invalid("atom weights must be positive and finite".into()));
            }
        }
        if let Some(d) = &density {
            if d.grid.dim() != dim {
                return Err(Error::Invalid("density grid dimension mismatch".into()));
            }
        }
        let m = Self { dim, atoms, density };
        let norm = m.mt_norm(horizon);
        if !norm.is_finite() {
            return Err(Error::MeasureNotInMt(format!(
                "mT_norm diverges for horizon T={horizon}"
            )));
        }
        Ok(m)
    }

    pub fn dirac(location: Vec<f64>, weight: f64) -> Result<Self> {
        let dim = location.len();
        Self::new(dim, vec![Atom { location, weight }], None, 1.0)
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            atoms: Vec::new(),
            density: None,
        }
    }

    /// The weighted norm of the class M_T: atoms summed exactly, density by
    /// the midpoint rule over its cells.
    pub fn mt_norm(&self, horizon: f64) -> f64 {
        assert!(horizon > 0.0, "mT_norm requires T > 0");
        let mut total = 0.0;
        for a in &self.atoms {
            let r2: f64 = a.location.iter().map(|x| x * x).sum();
            total += a.weight * (-r2 / (4.0 * horizon)).exp();
        }
        if let Some(d) = &self.density {
            let vol = d.grid.cell_volume();
            for (i, &v) in d.values.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let y = d.grid.cell_center(i);
                let r2: f64 = y.iter().map(|x| x * x).sum();
                total += v * (-r2 / (4.0 * horizon)).exp() * vol;
            }
        }
        total
    }

    /// Total mass (atoms + density), ignoring the Gaussian weight.
    pub fn total_mass(&self) -> f64 {
        let atom_mass: f64 = self.atoms.iter().map(|a| a.weight).sum();
        let dens_mass = self
            .density
            .as_ref()
            .map(|d| d.values.iter().sum::<f64>() * d.grid.cell_volume())
            .unwrap_or(0.0);
        atom_mass + dens_mass
    }

    /// chi_B * mu: atoms outside the box dropped, density zeroed outside.
    pub fn restrict(&self, domain: &BoxDomain) -> Measure {
        let atoms = self
            .atoms
            .iter()
            .filter(|a| domain.contains(&a.location))
            .cloned()
            .collect();
        let density = self.density.as_ref().map(|d| {
            let values = d
                .values
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    if domain.contains(&d.grid.cell_center(i)) {
                        v
                    } else {
                        0.0
                    }
                })
                .collect();
            DensityGrid {
                grid: d.grid.clone(),
                values,
            }
        });
        Measure {
            dim: self.dim,
            atoms,
            density,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty()
            && self
                .density
                .as_ref()
                .map(|d| d.values.iter().all(|&v| v == 0.0))
                .unwrap_or(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_interval_density(n: usize, half_width: f64) -> DensityGrid {
        let grid = SpatialGrid::new(
            BoxDomain::new(vec![(-half_width, half_width)]).unwrap(),
            vec![n],
        )
        .unwrap();
        DensityGrid::uniform(grid, 1.0).unwrap()
    }

    #[test]
    fn mt_norm_dirac_origin() {
        let mu = Measure::dirac(vec![0.0], 1.0).unwrap();
        assert_eq!(mu.mt_norm(1.0), 1.0);
    }

    #[test]
    fn mt_norm_offset_dirac() {
        let mu = Measure::dirac(vec![2.0], 1.0).unwrap();
        assert!((mu.mt_norm(1.0) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn mt_norm_density_vs_simpson_oracle() {
        // independent oracle: composite Simpson on a fine grid for
        // int_{-1}^{1} exp(-y^2/4) dy
        let n = 20_000;
        let h = 2.0 / n as f64;
        let f = |y: f64| (-y * y / 4.0).exp();
        let mut simpson = f(-1.0) + f(1.0);
        for i in 1..n {
            let y = -1.0 + i as f64 * h;
            simpson += if i % 2 == 1 { 4.0 * f(y) } else { 2.0 * f(y) };
        }
        simpson *= h / 3.0;

        let mu = Measure::new(1, vec![], Some(unit_interval_density(20_000, 1.0)), 1.0).unwrap();
        assert!((mu.mt_norm(1.0) - simpson).abs() < 1e-8);
    }

    #[test]
    fn restrict_keeps_inner_atom_drops_outer() {
        let inside = Measure::dirac(vec![0.0], 1.0).unwrap();
        let cube = BoxDomain::centered_cube(1, 1.0);
        assert_eq!(inside.restrict(&cube).atoms.len(), 1);

        let outside = Measure::dirac(vec![2.0], 1.0).unwrap();
        assert!(outside.restrict(&cube).is_zero());
    }

    #[test]
    fn restrict_halves_uniform_density_mass() {
        let mu = Measure::new(1, vec![], Some(unit_interval_density(400, 2.0)), 1.0).unwrap();
        assert!((mu.total_mass() - 4.0).abs() < 1e-12);
        let cut = mu.restrict(&BoxDomain::centered_cube(1, 1.0));
        assert!((cut.total_mass() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mt_norm_additive_and_monotone_under_restrict() {
        let mu1 = Measure::dirac(vec![0.5], 2.0).unwrap();
        let mu2 = Measure::new(1, vec![], Some(unit_interval_density(100, 2.0)), 1.0).unwrap();
        let sum = Measure::new(
            1,
            mu1.atoms.clone(),
            mu2.density.clone(),
            1.0,
        )
        .unwrap();
        let t = 0.7;
        assert!((sum.mt_norm(t) - mu1.mt_norm(t) - mu2.mt_norm(t)).abs() < 1e-12);

        let cut = sum.restrict(&BoxDomain::centered_cube(1, 0.25));
        assert!(cut.mt_norm(t) <= sum.mt_norm(t));
    }

    #[test]
    fn single_offset_atom_norm_increases_in_horizon() {
        let mu = Measure::dirac(vec![1.5], 1.0).unwrap();
        let mut prev = 0.0;
        for t in [0.1, 0.5, 1.0, 2.0, 10.0] {
            let v = mu.mt_norm(t);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn invalid_atoms_rejected() {
        assert!(Measure::new(
            1,
            vec![Atom { location: vec![0.0], weight: 0.0 }],
            None,
            1.0
        )
        .is_err());
        assert!(Measure::new(
            1,
            vec![Atom { location: vec![f64::NAN], weight: 1.0 }],
            None,
            1.0
        )
        .is_err());
    }
}
