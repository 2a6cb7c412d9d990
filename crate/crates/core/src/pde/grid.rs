use crate::error::{Error, Result};
use crate::geometry::{ReferenceDomain, Subdomain, Vec3};

/// Cell-vertex Cartesian grid covering a box, boundary nodes included.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    dims: [usize; 3],
    origin: Vec3,
    spacing: [f64; 3],
}

impl Grid {
    pub fn new(origin: Vec3, extent: Vec3, dims: [usize; 3]) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::InvalidArgument(format!("grid needs >= 2 nodes per axis, got {dims:?}")));
        }
        if (0..3).any(|a| !(extent[a] > 0.0)) {
            return Err(Error::InvalidArgument("grid extent must be positive".into()));
        }
        let spacing = [0, 1, 2].map(|a| extent[a] / (dims[a] - 1) as f64);
        Ok(Self { dims, origin, spacing })
    }

    /// `n` nodes per axis over the domain's box.
    pub fn covering(domain: &ReferenceDomain, n: usize) -> Result<Self> {
        Self::new(domain.box_min(), domain.box_max() - domain.box_min(), [n; 3])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    /// Largest spacing; the grid's `h`.
    pub fn h(&self) -> f64 {
        self.spacing.iter().copied().fold(0.0, f64::max)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.dims[2];
        let j = (idx / self.dims[2]) % self.dims[1];
        let i = idx / (self.dims[1] * self.dims[2]);
        [i, j, k]
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.point_frac(i as f64, j as f64, k as f64)
    }

    /// Physical position of fractional node coordinates (face and edge centres).
    pub fn point_frac(&self, i: f64, j: f64, k: f64) -> Vec3 {
        Vec3::new(
            self.origin.x + i * self.spacing[0],
            self.origin.y + j * self.spacing[1],
            self.origin.z + k * self.spacing[2],
        )
    }

    pub fn node_point(&self, idx: usize) -> Vec3 {
        let [i, j, k] = self.coords(idx);
        self.point(i, j, k)
    }

    pub fn is_boundary(&self, i: usize, j: usize, k: usize) -> bool {
        i == 0 || j == 0 || k == 0 || i + 1 == self.dims[0] || j + 1 == self.dims[1] || k + 1 == self.dims[2]
    }

    pub fn boundary_mask(&self) -> Vec<bool> {
        (0..self.len())
            .map(|idx| {
                let [i, j, k] = self.coords(idx);
                self.is_boundary(i, j, k)
            })
            .collect()
    }

    pub fn tags(&self, domain: &ReferenceDomain) -> Vec<Subdomain> {
        (0..self.len()).map(|idx| domain.subdomain_of(&self.node_point(idx))).collect()
    }

    /// Composite trapezoid weight of a node: the cell volume, halved per boundary axis.
    pub fn trapezoid_weight(&self, idx: usize) -> f64 {
        let c = self.coords(idx);
        (0..3)
            .map(|a| if c[a] == 0 || c[a] + 1 == self.dims[a] { 0.5 } else { 1.0 })
            .product::<f64>()
            * self.cell_volume()
    }
}

/// Nodal scalar field on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    grid: Grid,
    values: Vec<f64>,
}

impl GridField {
    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, v: f64) -> Self {
        Self { grid: grid.clone(), values: vec![v; grid.len()] }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values but grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid: grid.clone(), values })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&Vec3) -> f64) -> Self {
        let values = (0..grid.len()).map(|idx| f(&grid.node_point(idx))).collect();
        Self { grid: grid.clone(), values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
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

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Plain Euclidean norm of the nodal vector.
    pub fn l2_vector(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Discrete `L^2(U)` norm with trapezoid weights.
    pub fn l2_norm(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| v * v * self.grid.trapezoid_weight(i))
            .sum::<f64>()
            .sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Self { grid: self.grid.clone(), values }
    }
}

/// `Q(u) = ∫_U u`, composite trapezoid over all nodes (exact for trilinear fields).
pub fn qoi_integral(u: &GridField) -> f64 {
    let g = u.grid();
    u.values().iter().enumerate().map(|(i, v)| v * g.trapezoid_weight(i)).sum()
}
