//! Flux-conservative assembly of the pulled-back diffusion operator
//! `-div(eps* J^{-1} J^{-T} det J grad u)` and of the transported forcing.
//!
//! The operator is the Hessian of a discrete energy: face terms carry the
//! diagonal of the coefficient tensor with harmonically averaged `eps`, and
//! edge terms carry the off-diagonal entries through centred four-node
//! differences. The result is a symmetric 19-point stencil.

use crate::error::{Error, Result};
use crate::geometry::{det3, DomainMap, Mat3, ReferenceDomain, Subdomain, Vec3};

use super::grid::{Grid, GridField};
use super::PbeCoefficients;

pub const STENCIL: [[i32; 3]; 19] = [
    [0, 0, 0],
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
    [-1, -1, 0],
    [-1, 1, 0],
    [1, -1, 0],
    [1, 1, 0],
    [-1, 0, -1],
    [-1, 0, 1],
    [1, 0, -1],
    [1, 0, 1],
    [0, -1, -1],
    [0, -1, 1],
    [0, 1, -1],
    [0, 1, 1],
];

fn slot(d: [i32; 3]) -> usize {
    STENCIL
        .iter()
        .position(|s| *s == d)
        .unwrap_or_else(|| panic!("offset {d:?} is outside the 19-point stencil"))
}

/// Symmetric stencil operator with Dirichlet rows on the box boundary.
#[derive(Clone, Debug)]
pub struct AssembledOperator {
    grid: Grid,
    coeffs: Vec<[f64; 19]>,
    dirichlet: Vec<bool>,
    // flat neighbour index per slot, usize::MAX when outside the grid
    neighbors: Vec<[usize; 19]>,
}

impl AssembledOperator {
    fn empty(grid: &Grid) -> Self {
        let [nx, ny, nz] = grid.dims();
        let neighbors = (0..grid.len())
            .map(|idx| {
                let c = grid.coords(idx);
                STENCIL.map(|d| {
                    let (i, j, k) = (c[0] as i64 + d[0] as i64, c[1] as i64 + d[1] as i64, c[2] as i64 + d[2] as i64);
                    if i < 0 || j < 0 || k < 0 || i >= nx as i64 || j >= ny as i64 || k >= nz as i64 {
                        usize::MAX
                    } else {
                        grid.index(i as usize, j as usize, k as usize)
                    }
                })
            })
            .collect();
        Self {
            grid: grid.clone(),
            coeffs: vec![[0.0; 19]; grid.len()],
            dirichlet: grid.boundary_mask(),
            neighbors,
        }
    }

    fn add(&mut self, a: [usize; 3], b: [usize; 3], v: f64) {
        let ia = self.grid.index(a[0], a[1], a[2]);
        let d = [0, 1, 2].map(|t| b[t] as i32 - a[t] as i32);
        self.coeffs[ia][slot(d)] += v;
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dirichlet_mask(&self) -> &[bool] {
        &self.dirichlet
    }

    pub fn stencil(&self, idx: usize) -> &[f64; 19] {
        &self.coeffs[idx]
    }

    pub fn diagonal(&self, idx: usize) -> f64 {
        self.coeffs[idx][0]
    }

    /// Entry `K[row][col]`, zero outside the stencil.
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.neighbors[row]
            .iter()
            .position(|&n| n == col)
            .map_or(0.0, |s| self.coeffs[row][s])
    }

    /// `out = K x` on interior rows (neighbouring boundary values of `x` are
    /// used as given); boundary rows of `out` are zero.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for idx in 0..self.grid.len() {
            if self.dirichlet[idx] {
                out[idx] = 0.0;
                continue;
            }
            let c = &self.coeffs[idx];
            let nb = &self.neighbors[idx];
            let mut s = 0.0;
            for t in 0..19 {
                if c[t] != 0.0 {
                    s += c[t] * x[nb[t]];
                }
            }
            out[idx] = s;
        }
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for idx in 0..self.grid.len() {
            if self.dirichlet[idx] {
                continue;
            }
            for t in 1..19 {
                let n = self.neighbors[idx][t];
                if n == usize::MAX || self.dirichlet[n] {
                    continue;
                }
                worst = worst.max((self.coeffs[idx][t] - self.entry(n, idx)).abs());
            }
        }
        worst
    }
}

/// `eps* J^{-1} J^{-T} det J` without the dielectric factor.
pub fn geometric_tensor(map: &DomainMap, r: &Vec3, y: &[f64]) -> Option<Mat3> {
    if map.dim() == 0 {
        return Some(Mat3::identity());
    }
    let j = map.jacobian(r, y);
    let det = det3(&j);
    if !(det > 0.0) {
        return None;
    }
    let inv = j.try_inverse()?;
    Some(inv * inv.transpose() * det)
}

fn harmonic(values: &[f64]) -> f64 {
    values.len() as f64 / values.iter().map(|v| 1.0 / v).sum::<f64>()
}

pub fn assemble_pulled_back_operator(
    domain: &ReferenceDomain,
    map: &DomainMap,
    coeffs: &PbeCoefficients,
    y: &[f64],
    grid: &Grid,
) -> Result<AssembledOperator> {
    let tags = grid.tags(domain);
    let eps: Vec<f64> = tags.iter().map(|t| coeffs.eps[t.index()]).collect();
    assemble_with_eps(map, y, grid, &eps)
}

/// Assembly from nodal dielectric values.
pub fn assemble_with_eps(map: &DomainMap, y: &[f64], grid: &Grid, eps: &[f64]) -> Result<AssembledOperator> {
    if eps.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::NonPositive("dielectric coefficient", eps.iter().copied().fold(f64::INFINITY, f64::min)));
    }
    let mut op = AssembledOperator::empty(grid);
    let dims = grid.dims();
    let h = grid.spacing();
    let boundary = |p: [usize; 3]| grid.is_boundary(p[0], p[1], p[2]);
    let eps_at = |p: [usize; 3]| eps[grid.index(p[0], p[1], p[2])];
    let tensor_at = |p: [usize; 3], half: [f64; 3]| -> Result<Mat3> {
        let r = grid.point_frac(p[0] as f64 + half[0], p[1] as f64 + half[1], p[2] as f64 + half[2]);
        geometric_tensor(map, &r, y).ok_or_else(|| Error::Assembly {
            node: p,
            reason: "det J <= 0 at a face or edge centre".into(),
        })
    };

    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let p = [i, j, k];
                for a in 0..3 {
                    if p[a] + 1 >= dims[a] {
                        continue;
                    }
                    let mut q = p;
                    q[a] += 1;
                    if boundary(p) && boundary(q) {
                        continue;
                    }
                    let mut half = [0.0; 3];
                    half[a] = 0.5;
                    let m = tensor_at(p, half)?;
                    let c = harmonic(&[eps_at(p), eps_at(q)]) * m[(a, a)] / (h[a] * h[a]);
                    op.add(p, p, c);
                    op.add(q, q, c);
                    op.add(p, q, -c);
                    op.add(q, p, -c);
                }
                for (a, b) in [(0, 1), (0, 2), (1, 2)] {
                    if p[a] + 1 >= dims[a] || p[b] + 1 >= dims[b] {
                        continue;
                    }
                    let mut n10 = p;
                    n10[a] += 1;
                    let mut n01 = p;
                    n01[b] += 1;
                    let mut n11 = n10;
                    n11[b] += 1;
                    let nodes = [p, n10, n01, n11];
                    if nodes.iter().all(|&n| boundary(n)) {
                        continue;
                    }
                    let mut half = [0.0; 3];
                    half[a] = 0.5;
                    half[b] = 0.5;
                    let m = tensor_at(p, half)?;
                    if m[(a, b)] == 0.0 {
                        continue;
                    }
                    let c = harmonic(&nodes.map(eps_at)) * m[(a, b)];
                    let va = [-1.0, 1.0, -1.0, 1.0].map(|v| v / (2.0 * h[a]));
                    let vb = [-1.0, -1.0, 1.0, 1.0].map(|v| v / (2.0 * h[b]));
                    for s in 0..4 {
                        for t in 0..4 {
                            let v = c * (va[s] * vb[t] + vb[s] * va[t]);
                            if v != 0.0 {
                                op.add(nodes[s], nodes[t], v);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(op)
}

/// Isotropic Gaussian `q (2 pi s^2)^{-3/2} exp(-|x|^2 / (2 s^2))`.
pub fn gaussian(x: &Vec3, q: f64, s: f64) -> f64 {
    q * (2.0 * std::f64::consts::PI * s * s).powf(-1.5) * (-x.norm_squared() / (2.0 * s * s)).exp()
}

/// Nodal `f*(r; y) det J(r; y)` with `f* = sum_k xi(F(r;y) - F(eta_k;y))`,
/// plus any interface flux sources.
pub fn assemble_rhs(
    domain: &ReferenceDomain,
    map: &DomainMap,
    coeffs: &PbeCoefficients,
    y: &[f64],
    grid: &Grid,
) -> GridField {
    let s = coeffs.effective_width(grid.h());
    let moved: Vec<(Vec3, f64)> = coeffs
        .charges
        .iter()
        .map(|c| (map.map_forward(&c.position, y), c.charge))
        .collect();
    let mut rhs = GridField::from_fn(grid, |r| {
        if moved.is_empty() {
            return 0.0;
        }
        let fr = map.map_forward(r, y);
        let f: f64 = moved.iter().map(|(eta, q)| gaussian(&(fr - eta), *q, s)).sum();
        f * map.det_jacobian(r, y)
    });
    if coeffs.interface_jump.iter().any(|g| *g != 0.0) {
        let src = interface_source(domain, grid, coeffs.interface_jump);
        for (v, s) in rhs.values_mut().iter_mut().zip(src.values()) {
            *v += s;
        }
    }
    rhs
}

/// Nodal source for prescribed co-normal jumps `[eps d_n u] = g_k` on the
/// interfaces, in reference coordinates. Each face straddling an interface
/// carries `|n_a| h_b h_c` of interface area, split evenly over its nodes.
pub fn interface_source(domain: &ReferenceDomain, grid: &Grid, jumps: [f64; 2]) -> GridField {
    let tags = grid.tags(domain);
    let dims = grid.dims();
    let h = grid.spacing();
    let vol = grid.cell_volume();
    let mut out = GridField::zeros(grid);
    for idx in 0..grid.len() {
        let p = grid.coords(idx);
        for a in 0..3 {
            if p[a] + 1 >= dims[a] {
                continue;
            }
            let mut q = p;
            q[a] += 1;
            let jdx = grid.index(q[0], q[1], q[2]);
            let (ta, tb) = (tags[idx], tags[jdx]);
            if ta == tb {
                continue;
            }
            let (lo, hi) = if ta < tb { (ta, tb) } else { (tb, ta) };
            let mut g = 0.0;
            if lo == Subdomain::U1 {
                g += jumps[0];
            }
            if hi == Subdomain::U3 {
                g += jumps[1];
            }
            let mut frac = [p[0] as f64, p[1] as f64, p[2] as f64];
            frac[a] += 0.5;
            let n = domain.level_set_gradient(&grid.point_frac(frac[0], frac[1], frac[2]));
            let area = n[a].abs() * h[(a + 1) % 3] * h[(a + 2) % 3];
            let v = -g * area / (2.0 * vol);
            out.values_mut()[idx] += v;
            out.values_mut()[jdx] += v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Cutoff, FieldTemplate, Mode};
    use crate::pde::Charge;
    use approx::assert_relative_eq;

    fn domain() -> ReferenceDomain {
        ReferenceDomain::centered_cube(35.0, 10.0, 15.0).unwrap()
    }

    #[test]
    fn identity_map_gives_seven_point_laplacian() {
        let d = domain();
        let grid = Grid::covering(&d, 9).unwrap();
        let coeffs = PbeCoefficients::uniform(1.0);
        let op = assemble_pulled_back_operator(&d, &DomainMap::identity(), &coeffs, &[], &grid).unwrap();
        let h2 = grid.h() * grid.h();
        let idx = grid.index(4, 4, 4);
        let st = op.stencil(idx);
        assert_relative_eq!(st[0], 6.0 / h2, max_relative = 1e-14);
        for t in 1..7 {
            assert_relative_eq!(st[t], -1.0 / h2, max_relative = 1e-14);
        }
        for t in 7..19 {
            assert_eq!(st[t], 0.0);
        }
    }

    #[test]
    fn harmonic_face_across_ion_exclusion_surface() {
        let d = domain();
        let grid = Grid::covering(&d, 71).unwrap(); // h = 1
        let coeffs = PbeCoefficients { eps: [70.0, 70.0, 1.0], ..PbeCoefficients::uniform(1.0) };
        let op = assemble_pulled_back_operator(&d, &DomainMap::identity(), &coeffs, &[], &grid).unwrap();
        // nodes x = 15 (U2, on the sphere) and x = 16 (U3) along the axis through the centre
        let a = grid.index(50, 35, 35);
        let b = grid.index(51, 35, 35);
        assert_eq!(d.subdomain_of(&grid.node_point(a)), Subdomain::U2);
        assert_eq!(d.subdomain_of(&grid.node_point(b)), Subdomain::U3);
        assert_relative_eq!(-op.entry(a, b), 2.0 * 70.0 * 1.0 / 71.0, max_relative = 1e-14);
    }

    #[test]
    fn general_map_operator_is_symmetric() {
        let d = domain();
        let grid = Grid::covering(&d, 11).unwrap();
        let cutoff = Cutoff { center: Vec3::zeros(), plateau: 16.0, width: 19.0 };
        let map = DomainMap::new(vec![
            Mode::new(9.0, FieldTemplate::CutoffShift { axis: 0, cutoff }),
            Mode::new(4.0, FieldTemplate::CutoffShift { axis: 2, cutoff }),
        ])
        .unwrap();
        let coeffs = PbeCoefficients { eps: [70.0, 70.0, 1.0], ..PbeCoefficients::uniform(1.0) };
        let op = assemble_pulled_back_operator(&d, &map, &coeffs, &[0.8, -0.6], &grid).unwrap();
        assert!(op.max_asymmetry() < 1e-12);
    }

    #[test]
    fn unit_charge_integrates_to_one() {
        let d = domain();
        let grid = Grid::covering(&d, 71).unwrap();
        let coeffs = PbeCoefficients {
            charges: vec![Charge { position: Vec3::zeros(), charge: 1.0 }],
            charge_width: Some(3.0),
            ..PbeCoefficients::uniform(1.0)
        };
        let rhs = assemble_rhs(&d, &DomainMap::identity(), &coeffs, &[], &grid);
        let total: f64 = rhs.values().iter().sum::<f64>() * grid.cell_volume();
        assert!((total - 1.0).abs() < 1e-3, "total charge {total}");
    }

    #[test]
    fn constant_shift_leaves_forcing_invariant() {
        let d = domain();
        let grid = Grid::covering(&d, 9).unwrap();
        let coeffs = PbeCoefficients {
            charges: vec![Charge { position: Vec3::new(1.0, 2.0, -1.0), charge: 0.7 }],
            ..PbeCoefficients::uniform(1.0)
        };
        let map = DomainMap::new(vec![Mode::new(4.0, FieldTemplate::ConstantShift { axis: 1 })]).unwrap();
        let a = assemble_rhs(&d, &map, &coeffs, &[0.0], &grid);
        let b = assemble_rhs(&d, &map, &coeffs, &[0.9], &grid);
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_relative_eq!(x, y, max_relative = 1e-12);
        }
    }

    #[test]
    fn no_charges_no_forcing() {
        let d = domain();
        let grid = Grid::covering(&d, 5).unwrap();
        let rhs = assemble_rhs(&d, &DomainMap::identity(), &PbeCoefficients::uniform(2.0), &[], &grid);
        assert_eq!(rhs.max_abs(), 0.0);
    }
}
