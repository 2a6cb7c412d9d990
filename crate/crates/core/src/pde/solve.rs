use log::debug;

use crate::error::{Error, Result};
use crate::geometry::{DomainMap, ReferenceDomain, Subdomain};

use super::assemble::{assemble_pulled_back_operator, assemble_rhs, AssembledOperator};
use super::grid::{Grid, GridField};
use super::PbeCoefficients;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgSettings {
    /// Relative residual target `|b - Ax| / |b|`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgSettings {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 10_000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
    /// Final recursively updated residual norm `|r|_2`.
    pub residual_norm: f64,
}

fn dot(a: &[f64], b: &[f64], mask: &[bool]) -> f64 {
    a.iter().zip(b).zip(mask).filter(|(_, &m)| !m).map(|((x, y), _)| x * y).sum()
}

/// Jacobi-preconditioned CG for `(K + diag(reaction)) x = b` on the interior
/// nodes. Boundary entries of `x` must be zero on entry and stay zero.
pub fn pcg(
    op: &AssembledOperator,
    reaction: &[f64],
    b: &[f64],
    x: &mut [f64],
    settings: &CgSettings,
) -> Result<CgReport> {
    let n = op.grid().len();
    let mask = op.dirichlet_mask();
    let apply = |v: &[f64], out: &mut [f64]| {
        op.apply(v, out);
        for i in 0..n {
            if !mask[i] {
                out[i] += reaction[i] * v[i];
            }
        }
    };
    let inv_diag: Vec<f64> = (0..n)
        .map(|i| if mask[i] { 0.0 } else { 1.0 / (op.diagonal(i) + reaction[i]) })
        .collect();

    let b_norm = dot(b, b, mask).sqrt();
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = if mask[i] { 0.0 } else { b[i] - r[i] };
    }
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgReport { iterations: 0, relative_residual: 0.0, residual_norm: 0.0 });
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z, mask);
    let mut res = dot(&r, &r, mask).sqrt();
    for it in 0..settings.max_iter {
        if res <= settings.tol * b_norm {
            return Ok(CgReport { iterations: it, relative_residual: res / b_norm, residual_norm: res });
        }
        apply(&p, &mut q);
        let pq = dot(&p, &q, mask);
        if !(pq > 0.0) {
            return Err(Error::CgNonConvergence { iterations: it, residual: res / b_norm });
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z, mask);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = dot(&r, &r, mask).sqrt();
    }
    if res <= settings.tol * b_norm {
        return Ok(CgReport { iterations: settings.max_iter, relative_residual: res / b_norm, residual_norm: res });
    }
    Err(Error::CgNonConvergence { iterations: settings.max_iter, residual: res / b_norm })
}

#[derive(Clone, Debug)]
pub struct LinearSolution {
    pub u: GridField,
    pub report: CgReport,
}

/// Solves `K u + c u = rhs` in the interior with `u = dirichlet` on the boundary.
pub fn solve_linear_interface(
    op: &AssembledOperator,
    reaction: &GridField,
    rhs: &GridField,
    dirichlet: &GridField,
    settings: &CgSettings,
) -> Result<LinearSolution> {
    if reaction.values().iter().any(|c| !(*c >= 0.0)) {
        return Err(Error::InvalidArgument("reaction coefficient must be nonnegative".into()));
    }
    let grid = op.grid();
    let mask = op.dirichlet_mask();
    let n = grid.len();
    let g: Vec<f64> = (0..n).map(|i| if mask[i] { dirichlet.values()[i] } else { 0.0 }).collect();
    let mut kg = vec![0.0; n];
    op.apply(&g, &mut kg);
    let b: Vec<f64> = (0..n).map(|i| if mask[i] { 0.0 } else { rhs.values()[i] - kg[i] }).collect();
    let mut v = vec![0.0; n];
    let report = pcg(op, reaction.values(), &b, &mut v, settings)?;
    for i in 0..n {
        v[i] += g[i];
    }
    Ok(LinearSolution { u: GridField::from_values(grid, v)?, report })
}

/// Everything a knot solve needs, assembled once for a fixed `y`.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub tags: Vec<Subdomain>,
    pub op: AssembledOperator,
    pub rhs: GridField,
    pub det_j: Vec<f64>,
    /// Nodal `kappa2* det J`.
    pub kappa2_det: Vec<f64>,
    pub dirichlet: GridField,
}

impl Discretization {
    pub fn new(
        domain: &ReferenceDomain,
        map: &DomainMap,
        coeffs: &PbeCoefficients,
        y: &[f64],
        grid: &Grid,
    ) -> Result<Self> {
        let tags = grid.tags(domain);
        let op = assemble_pulled_back_operator(domain, map, coeffs, y, grid)?;
        let rhs = assemble_rhs(domain, map, coeffs, y, grid);
        let det_j: Vec<f64> = (0..grid.len()).map(|i| map.det_jacobian(&grid.node_point(i), y)).collect();
        let kappa2_det = tags.iter().zip(&det_j).map(|(t, d)| coeffs.kappa2[t.index()] * d).collect();
        let mask = grid.boundary_mask();
        let dirichlet = GridField::from_values(
            grid,
            mask.iter().map(|&m| if m { coeffs.boundary_value } else { 0.0 }).collect(),
        )?;
        Ok(Self { tags, op, rhs, det_j, kappa2_det, dirichlet })
    }

    pub fn grid(&self) -> &Grid {
        self.op.grid()
    }

    pub fn is_linear(&self) -> bool {
        self.kappa2_det.iter().all(|k| *k == 0.0)
    }

    fn residual_into(&self, u: &[f64], out: &mut [f64]) {
        self.op.apply(u, out);
        let mask = self.op.dirichlet_mask();
        for i in 0..out.len() {
            out[i] = if mask[i] {
                u[i] - self.dirichlet.values()[i]
            } else {
                out[i] + self.kappa2_det[i] * u[i].sinh() - self.rhs.values()[i]
            };
        }
    }

    fn interior_norm(&self, v: &[f64]) -> f64 {
        dot(v, v, self.op.dirichlet_mask()).sqrt()
    }

    pub fn rhs_norm(&self) -> f64 {
        self.interior_norm(self.rhs.values())
    }
}

/// Nodal residual `K u + kappa2* sinh(u) det J - f* det J` (interior) and
/// `u - g` (boundary).
pub fn operator_residual(disc: &Discretization, u: &GridField) -> GridField {
    let mut out = vec![0.0; u.values().len()];
    disc.residual_into(u.values(), &mut out);
    GridField::from_values(u.grid(), out).expect("grid sizes agree")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonSettings {
    /// Stop when `|R| <= tol * (1 + |rhs|)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Smallest admissible damping factor.
    pub min_step: f64,
    pub cg: CgSettings,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 50, min_step: 1e-3, cg: CgSettings::default() }
    }
}

#[derive(Clone, Debug)]
pub struct NewtonSolution {
    pub u: GridField,
    /// Interior residual norm before each step and after the last one.
    pub residual_history: Vec<f64>,
    pub steps: usize,
    pub damping: Vec<f64>,
    pub linear_iterations: usize,
    /// `1 + |rhs|`, the scale used in the stopping test.
    pub residual_scale: f64,
}

impl NewtonSolution {
    pub fn normalized_history(&self) -> Vec<f64> {
        self.residual_history.iter().map(|r| r / self.residual_scale).collect()
    }
}

/// Damped Newton with residual backtracking.
pub fn newton_solve(disc: &Discretization, u0: &GridField, settings: &NewtonSettings) -> Result<NewtonSolution> {
    let grid = disc.grid();
    let n = grid.len();
    let mask = disc.op.dirichlet_mask();
    if !u0.is_finite() {
        return Err(Error::InvalidArgument("initial guess must be finite".into()));
    }
    let mut u: Vec<f64> = (0..n)
        .map(|i| if mask[i] { disc.dirichlet.values()[i] } else { u0.values()[i] })
        .collect();
    let scale = 1.0 + disc.rhs_norm();
    let mut res = vec![0.0; n];
    disc.residual_into(&u, &mut res);
    let mut r = disc.interior_norm(&res);
    let mut history = vec![r];
    let mut damping = Vec::new();
    let mut linear_iterations = 0;
    let mut trial = vec![0.0; n];
    let mut trial_res = vec![0.0; n];

    for step in 0..settings.max_iter {
        if r <= settings.tol * scale {
            return Ok(NewtonSolution {
                u: GridField::from_values(grid, u)?,
                residual_history: history,
                steps: step,
                damping,
                linear_iterations,
                residual_scale: scale,
            });
        }
        let reaction: Vec<f64> = (0..n).map(|i| disc.kappa2_det[i] * u[i].cosh()).collect();
        let b: Vec<f64> = (0..n).map(|i| if mask[i] { 0.0 } else { -res[i] }).collect();
        let mut delta = vec![0.0; n];
        let report = pcg(&disc.op, &reaction, &b, &mut delta, &settings.cg)?;
        linear_iterations += report.iterations;

        let mut lambda = 1.0;
        loop {
            for i in 0..n {
                trial[i] = u[i] + lambda * delta[i];
            }
            disc.residual_into(&trial, &mut trial_res);
            let rt = disc.interior_norm(&trial_res);
            if rt.is_finite() && rt < r {
                std::mem::swap(&mut u, &mut trial);
                std::mem::swap(&mut res, &mut trial_res);
                r = rt;
                break;
            }
            lambda *= 0.5;
            if lambda < settings.min_step {
                history.push(rt);
                return Err(Error::NewtonFailure { reason: "line search stagnated".into(), history });
            }
        }
        debug!("newton step {step}: lambda {lambda}, residual {r:.3e}, cg {}", report.iterations);
        damping.push(lambda);
        history.push(r);
    }
    if r <= settings.tol * scale {
        return Ok(NewtonSolution {
            u: GridField::from_values(grid, u)?,
            residual_history: history,
            steps: settings.max_iter,
            damping,
            linear_iterations,
            residual_scale: scale,
        });
    }
    Err(Error::NewtonFailure { reason: format!("no convergence in {} steps", settings.max_iter), history })
}

pub fn newton_solve_npbe(
    domain: &ReferenceDomain,
    map: &DomainMap,
    coeffs: &PbeCoefficients,
    y: &[f64],
    grid: &Grid,
    u0: Option<&GridField>,
    settings: &NewtonSettings,
) -> Result<NewtonSolution> {
    let disc = Discretization::new(domain, map, coeffs, y, grid)?;
    let zero = GridField::zeros(grid);
    newton_solve(&disc, u0.unwrap_or(&zero), settings)
}

/// Inverse power iteration for `|(K + diag(kappa2* cosh(u) det J))^{-1}|_2`,
/// the discrete analogue of the inverse-derivative bound.
pub fn inverse_operator_norm(disc: &Discretization, u: &GridField, iterations: usize, cg: &CgSettings) -> Result<f64> {
    let n = disc.grid().len();
    let mask = disc.op.dirichlet_mask();
    let reaction: Vec<f64> = (0..n).map(|i| disc.kappa2_det[i] * u.values()[i].cosh()).collect();
    let mut v: Vec<f64> = (0..n).map(|i| if mask[i] { 0.0 } else { 1.0 }).collect();
    let norm = disc.interior_norm(&v);
    v.iter_mut().for_each(|x| *x /= norm);
    let mut estimate = 0.0;
    for _ in 0..iterations.max(1) {
        let mut w = vec![0.0; n];
        pcg(&disc.op, &reaction, &v, &mut w, cg)?;
        let wn = disc.interior_norm(&w);
        estimate = wn;
        v = w.into_iter().map(|x| x / wn).collect();
    }
    Ok(estimate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::pde::Charge;

    fn small_problem(kappa: f64) -> (ReferenceDomain, PbeCoefficients, Grid) {
        let d = ReferenceDomain::centered_cube(10.0, 3.0, 5.0).unwrap();
        let coeffs = PbeCoefficients {
            eps: [2.0, 2.0, 1.0],
            kappa2: [0.0, 0.0, kappa],
            charges: vec![Charge { position: Vec3::zeros(), charge: 20.0 }],
            charge_width: Some(1.5),
            ..PbeCoefficients::uniform(1.0)
        };
        let grid = Grid::covering(&d, 17).unwrap();
        (d, coeffs, grid)
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let (d, mut coeffs, grid) = small_problem(0.5);
        coeffs.charges.clear();
        let sol = newton_solve_npbe(&d, &DomainMap::identity(), &coeffs, &[], &grid, None, &NewtonSettings::default())
            .unwrap();
        assert_eq!(sol.u.max_abs(), 0.0);
    }

    #[test]
    fn constant_boundary_gives_constant_solution() {
        let (d, mut coeffs, grid) = small_problem(0.0);
        coeffs.charges.clear();
        coeffs.boundary_value = 2.5;
        let sol = newton_solve_npbe(&d, &DomainMap::identity(), &coeffs, &[], &grid, None, &NewtonSettings::default())
            .unwrap();
        for v in sol.u.values() {
            assert!((v - 2.5).abs() < 1e-9);
        }
    }

    #[test]
    fn linear_problem_takes_one_step() {
        let (d, coeffs, grid) = small_problem(0.0);
        let sol = newton_solve_npbe(&d, &DomainMap::identity(), &coeffs, &[], &grid, None, &NewtonSettings::default())
            .unwrap();
        assert_eq!(sol.steps, 1);
    }

    #[test]
    fn residual_grows_when_perturbed() {
        let (d, coeffs, grid) = small_problem(0.5);
        let disc = Discretization::new(&d, &DomainMap::identity(), &coeffs, &[], &grid).unwrap();
        let sol = newton_solve(&disc, &GridField::zeros(&grid), &NewtonSettings::default()).unwrap();
        let r0 = operator_residual(&disc, &sol.u).l2_vector();
        let mut bumped = sol.u.clone();
        let mask = grid.boundary_mask();
        for (i, v) in bumped.values_mut().iter_mut().enumerate() {
            if !mask[i] && disc.tags[i] == Subdomain::U3 {
                *v += 1.0;
            }
        }
        assert!(operator_residual(&disc, &bumped).l2_vector() > r0 * 10.0);
    }

    #[test]
    fn negative_reaction_rejected() {
        let (d, coeffs, grid) = small_problem(0.0);
        let disc = Discretization::new(&d, &DomainMap::identity(), &coeffs, &[], &grid).unwrap();
        let bad = GridField::constant(&grid, -1.0);
        assert!(solve_linear_interface(&disc.op, &bad, &disc.rhs, &disc.dirichlet, &CgSettings::default()).is_err());
    }

    #[test]
    fn cg_iteration_cap_reports_residual() {
        let (d, coeffs, grid) = small_problem(0.0);
        let disc = Discretization::new(&d, &DomainMap::identity(), &coeffs, &[], &grid).unwrap();
        let zero = GridField::zeros(&grid);
        let err = solve_linear_interface(&disc.op, &zero, &disc.rhs, &disc.dirichlet, &CgSettings { tol: 1e-14, max_iter: 3 })
            .unwrap_err();
        match err {
            Error::CgNonConvergence { iterations, residual } => {
                assert_eq!(iterations, 3);
                assert!(residual > 0.0);
            }
            other => panic!("unexpected error {other}"),
        }
    }
}
