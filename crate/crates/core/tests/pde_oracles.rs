use std::f64::consts::PI;

use npbe_uq::geometry::{
    Cutoff, DisplacementField, DomainMap, FieldTemplate, Mat3, Mode, ReferenceDomain, Vec3,
};
use npbe_uq::pde::{
    assemble_pulled_back_operator, assemble_rhs, newton_solve, newton_solve_npbe, operator_residual,
    solve_linear_interface, CgSettings, Charge, Discretization, Grid, GridField, NewtonSettings, PbeCoefficients,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_box() -> ReferenceDomain {
    ReferenceDomain::new(Vec3::zeros(), Vec3::repeat(1.0), Vec3::repeat(0.5), 0.1, 0.2).unwrap()
}

fn manufactured_error(n: usize) -> f64 {
    let domain = unit_box();
    let grid = Grid::covering(&domain, n).unwrap();
    let coeffs = PbeCoefficients::uniform(1.0);
    let op = assemble_pulled_back_operator(&domain, &DomainMap::identity(), &coeffs, &[], &grid).unwrap();
    let exact = |r: &Vec3| (PI * r.x).sin() * (PI * r.y).sin() * (PI * r.z).sin();
    let rhs = GridField::from_fn(&grid, |r| 3.0 * PI * PI * exact(r));
    let zero = GridField::zeros(&grid);
    let sol = solve_linear_interface(&op, &zero, &rhs, &zero, &CgSettings::default()).unwrap();
    sol.u.zip_map(&GridField::from_fn(&grid, exact), |a, b| a - b).l2_norm()
}

#[test]
fn manufactured_solution_is_second_order() {
    let errs: Vec<f64> = [17, 33, 65].iter().map(|&n| manufactured_error(n)).collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    println!("errors {errs:?}, orders {orders:?}");
    assert!(orders.iter().all(|&p| p >= 1.8), "{orders:?}");
}

/// Cell-centred conservative discretisation of
/// `-(r^2 eps u')'/r^2 + k2 u = f` on `[0, rmax]` with `u(rmax) = 0`.
fn radial_oracle(eps: impl Fn(f64) -> f64, k2: impl Fn(f64) -> f64, f: impl Fn(f64) -> f64, rmax: f64, cells: usize) -> Vec<(f64, f64)> {
    let dr = rmax / cells as f64;
    let r: Vec<f64> = (0..cells).map(|i| (i as f64 + 0.5) * dr).collect();
    let vol: Vec<f64> = (0..cells).map(|i| (((i + 1) as f64 * dr).powi(3) - (i as f64 * dr).powi(3)) / 3.0).collect();
    let face_coeff = |i: usize| {
        let rf = i as f64 * dr;
        rf * rf * eps(rf) / dr
    };
    let (mut lo, mut di, mut up, mut b) = (vec![0.0; cells], vec![0.0; cells], vec![0.0; cells], vec![0.0; cells]);
    for i in 0..cells {
        let w = face_coeff(i);
        let e = if i + 1 < cells { face_coeff(i + 1) } else { rmax * rmax * eps(rmax) / (0.5 * dr) };
        di[i] = w + e + k2(r[i]) * vol[i];
        if i > 0 {
            lo[i] = -w;
        }
        if i + 1 < cells {
            up[i] = -e;
        }
        b[i] = f(r[i]) * vol[i];
    }
    // Thomas algorithm
    for i in 1..cells {
        let m = lo[i] / di[i - 1];
        di[i] -= m * up[i - 1];
        b[i] -= m * b[i - 1];
    }
    let mut u = vec![0.0; cells];
    u[cells - 1] = b[cells - 1] / di[cells - 1];
    for i in (0..cells - 1).rev() {
        u[i] = (b[i] - up[i] * u[i + 1]) / di[i];
    }
    r.into_iter().zip(u).collect()
}

fn interp(tab: &[(f64, f64)], x: f64) -> f64 {
    let dr = tab[1].0 - tab[0].0;
    let t = ((x - tab[0].0) / dr).max(0.0);
    let i = (t.floor() as usize).min(tab.len() - 2);
    let s = t - i as f64;
    tab[i].1 * (1.0 - s) + tab[i + 1].1 * s
}

#[test]
fn layered_ball_matches_radial_oracle() {
    let (r1, r2) = (8.0, 12.0);
    let eps = [2.0, 20.0, 80.0];
    let k2 = 0.5;
    let (q, s) = (50.0, 3.0);
    let domain = ReferenceDomain::centered_cube(35.0, r1, r2).unwrap();
    let grid = Grid::covering(&domain, 65).unwrap();
    let coeffs = PbeCoefficients {
        eps,
        kappa2: [0.0, 0.0, k2],
        charges: vec![Charge { position: Vec3::zeros(), charge: q }],
        charge_width: Some(s),
        boundary_value: 0.0,
        interface_jump: [0.0; 2],
    };
    let map = DomainMap::identity();
    let op = assemble_pulled_back_operator(&domain, &map, &coeffs, &[], &grid).unwrap();
    let rhs = assemble_rhs(&domain, &map, &coeffs, &[], &grid);
    let tags = grid.tags(&domain);
    let reaction = GridField::from_values(&grid, tags.iter().map(|t| coeffs.kappa2[t.index()]).collect()).unwrap();
    let zero = GridField::zeros(&grid);
    let u = solve_linear_interface(&op, &reaction, &rhs, &zero, &CgSettings::default()).unwrap().u;

    let layer = |r: f64| if r < r1 { 0 } else if r < r2 { 1 } else { 2 };
    let tab = radial_oracle(
        |r| eps[layer(r)],
        |r| if layer(r) == 2 { k2 } else { 0.0 },
        |r| q * (2.0 * PI * s * s).powf(-1.5) * (-r * r / (2.0 * s * s)).exp(),
        35.0,
        20000,
    );
    let peak = tab[0].1;
    // compare inside the sphere where the box walls are invisible
    let mut worst = 0.0f64;
    for i in 0..grid.len() {
        let p = grid.node_point(i);
        if p.norm() <= 20.0 {
            worst = worst.max((u.values()[i] - interp(&tab, p.norm())).abs());
        }
    }
    println!("max deviation {:.4e} relative to peak {:.4e}: {:.3}%", worst, peak, 100.0 * worst / peak);
    assert!(worst <= 0.02 * peak);
}

/// `b(r) = v sin(k·r + phi)`.
#[derive(Debug)]
struct Wave {
    v: Vec3,
    k: Vec3,
    phi: f64,
}

impl DisplacementField for Wave {
    fn value(&self, r: &Vec3) -> Vec3 {
        self.v * (self.k.dot(r) + self.phi).sin()
    }
    fn gradient(&self, r: &Vec3) -> Mat3 {
        self.v * self.k.transpose() * (self.k.dot(r) + self.phi).cos()
    }
    fn gradient_derivative(&self, r: &Vec3, axis: usize) -> Mat3 {
        -self.v * self.k.transpose() * self.k[axis] * (self.k.dot(r) + self.phi).sin()
    }
}

fn wavy_map(seed: u64) -> DomainMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes = (0..3)
        .map(|m| {
            let v = Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0)).normalize();
            let k = Vec3::from_fn(|_, _| rng.gen_range(-1.5..1.5));
            Mode::new(0.02 / (1 + m) as f64, Wave { v, k, phi: rng.gen_range(0.0..6.0) })
        })
        .collect();
    DomainMap::new(modes).unwrap()
}

/// Discrete energy whose Hessian is the operator, written directly from
/// face and edge contributions. The tensor is formed from an explicit inverse.
fn energy(grid: &Grid, map: &DomainMap, y: &[f64], eps: f64, u: &[f64]) -> f64 {
    let [nx, ny, nz] = grid.dims();
    let h = grid.spacing();
    let tensor = |r: Vec3| {
        let j = map.jacobian(&r, y);
        let ji = j.try_inverse().unwrap();
        ji * ji.transpose() * j.determinant() * eps
    };
    let at = |i: usize, j: usize, k: usize| u[grid.index(i, j, k)];
    let bnd = |i: usize, j: usize, k: usize| grid.is_boundary(i, j, k);
    let mut e = 0.0;
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let p = [i, j, k];
                let dims = [nx, ny, nz];
                for a in 0..3 {
                    if p[a] + 1 >= dims[a] {
                        continue;
                    }
                    let mut q = p;
                    q[a] += 1;
                    if bnd(p[0], p[1], p[2]) && bnd(q[0], q[1], q[2]) {
                        continue;
                    }
                    let mut c = grid.point(i, j, k);
                    c[a] += 0.5 * h[a];
                    let m = tensor(c);
                    let d = at(q[0], q[1], q[2]) - at(i, j, k);
                    e += 0.5 * m[(a, a)] * d * d / (h[a] * h[a]);
                }
                for (a, b) in [(0, 1), (0, 2), (1, 2)] {
                    if p[a] + 1 >= dims[a] || p[b] + 1 >= dims[b] {
                        continue;
                    }
                    let mut pa = p;
                    pa[a] += 1;
                    let mut pb = p;
                    pb[b] += 1;
                    let mut pab = pa;
                    pab[b] += 1;
                    let corners = [p, pa, pb, pab];
                    if corners.iter().all(|c| bnd(c[0], c[1], c[2])) {
                        continue;
                    }
                    let v = corners.map(|c| at(c[0], c[1], c[2]));
                    let da = (v[1] - v[0] + v[3] - v[2]) / (2.0 * h[a]);
                    let db = (v[2] - v[0] + v[3] - v[1]) / (2.0 * h[b]);
                    let mut c = grid.point(i, j, k);
                    c[a] += 0.5 * h[a];
                    c[b] += 0.5 * h[b];
                    e += tensor(c)[(a, b)] * da * db;
                }
            }
        }
    }
    e
}

#[test]
fn operator_matches_dense_energy_oracle_on_linear_fields() {
    let domain = unit_box();
    let grid = Grid::covering(&domain, 9).unwrap();
    let map = wavy_map(3);
    let y = [0.7, -0.4, 0.9];
    let coeffs = PbeCoefficients::uniform(1.3);
    let op = assemble_pulled_back_operator(&domain, &map, &coeffs, &y, &grid).unwrap();
    let c = Vec3::new(0.3, -1.1, 0.8);
    let u: Vec<f64> = (0..grid.len()).map(|i| c.dot(&grid.node_point(i))).collect();
    let mut ku = vec![0.0; grid.len()];
    op.apply(&u, &mut ku);
    // energy is quadratic, so a unit central difference is its exact gradient
    let mut worst = 0.0f64;
    let mut probe = u.clone();
    for idx in 0..grid.len() {
        let [i, j, k] = grid.coords(idx);
        if grid.is_boundary(i, j, k) {
            continue;
        }
        probe[idx] = u[idx] + 1.0;
        let ep = energy(&grid, &map, &y, 1.3, &probe);
        probe[idx] = u[idx] - 1.0;
        let em = energy(&grid, &map, &y, 1.3, &probe);
        probe[idx] = u[idx];
        worst = worst.max(((ep - em) / 2.0 - ku[idx]).abs());
    }
    println!("max |K u - grad E| = {worst:.3e}");
    assert!(worst <= 1e-8);
}

#[test]
fn general_map_operator_is_positive_semidefinite() {
    let domain = unit_box();
    let grid = Grid::covering(&domain, 11).unwrap();
    let map = wavy_map(8);
    let coeffs = PbeCoefficients { eps: [5.0, 2.0, 1.0], ..PbeCoefficients::uniform(1.0) };
    let op = assemble_pulled_back_operator(&domain, &map, &coeffs, &[1.0, -1.0, 0.5], &grid).unwrap();
    assert!(op.max_asymmetry() <= 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mask = grid.boundary_mask();
    for _ in 0..100 {
        let v: Vec<f64> = mask.iter().map(|&m| if m { 0.0 } else { rng.gen_range(-1.0..1.0) }).collect();
        let mut kv = vec![0.0; v.len()];
        op.apply(&v, &mut kv);
        let q: f64 = v.iter().zip(&kv).map(|(a, b)| a * b).sum();
        let n2: f64 = v.iter().map(|a| a * a).sum();
        assert!(q >= -1e-10 * n2);
    }
}

fn charged_problem(q: f64, kappa2: f64) -> (ReferenceDomain, PbeCoefficients, Grid) {
    let domain = ReferenceDomain::centered_cube(12.0, 3.0, 5.0).unwrap();
    let coeffs = PbeCoefficients {
        eps: [2.0, 10.0, 10.0],
        kappa2: [0.0, 0.0, kappa2],
        charges: vec![
            Charge { position: Vec3::new(0.5, 0.0, 0.0), charge: q },
            Charge { position: Vec3::new(-1.0, 0.8, 0.3), charge: -0.4 * q },
        ],
        charge_width: Some(1.2),
        boundary_value: 0.0,
        interface_jump: [0.0; 2],
    };
    let grid = Grid::covering(&domain, 25).unwrap();
    (domain, coeffs, grid)
}

fn cutoff_map() -> DomainMap {
    let cutoff = Cutoff { center: Vec3::zeros(), plateau: 5.0, width: 6.0 };
    DomainMap::new(vec![
        Mode::new(1.0, FieldTemplate::CutoffShift { axis: 0, cutoff }),
        Mode::new(0.5, FieldTemplate::CutoffShift { axis: 1, cutoff }),
    ])
    .unwrap()
}

#[test]
fn newton_converges_quadratically() {
    let (domain, coeffs, grid) = charged_problem(400.0, 1.0);
    let sol = newton_solve_npbe(&domain, &cutoff_map(), &coeffs, &[0.4, -0.6], &grid, None, &NewtonSettings::default()).unwrap();
    let hist = sol.normalized_history();
    println!("normalized residuals {hist:?}, max |u| {:.3}", sol.u.max_abs());
    assert!(sol.steps >= 3, "the test needs a genuinely nonlinear solve");
    for w in hist.windows(2) {
        if w[0] <= 1e-2 && w[1] > 1e-13 {
            assert!(w[1] <= 10.0 * w[0] * w[0], "{} !<= 10 * {}^2", w[1], w[0]);
        }
    }
}

#[test]
fn linear_problem_takes_one_step() {
    let (domain, coeffs, grid) = charged_problem(5.0, 0.0);
    let map = cutoff_map();
    let y = [0.2, 0.3];
    let sol = newton_solve_npbe(&domain, &map, &coeffs, &y, &grid, None, &NewtonSettings::default()).unwrap();
    assert_eq!(sol.steps, 1);
    let disc = Discretization::new(&domain, &map, &coeffs, &y, &grid).unwrap();
    let zero = GridField::zeros(&grid);
    let lin = solve_linear_interface(&disc.op, &zero, &disc.rhs, &disc.dirichlet, &CgSettings::default()).unwrap();
    let diff = sol.u.zip_map(&lin.u, |a, b| a - b).max_abs();
    assert!(diff <= 1e-9 * lin.u.max_abs(), "{diff}");
}

#[test]
fn small_data_matches_linearisation() {
    let (domain, coeffs, grid) = charged_problem(2.0, 1.0);
    let map = cutoff_map();
    let y = [-0.5, 0.5];
    let disc = Discretization::new(&domain, &map, &coeffs, &y, &grid).unwrap();
    let u = newton_solve(&disc, &GridField::zeros(&grid), &NewtonSettings::default()).unwrap().u;
    let reaction = GridField::from_values(&grid, disc.kappa2_det.clone()).unwrap();
    let lin = solve_linear_interface(&disc.op, &reaction, &disc.rhs, &disc.dirichlet, &CgSettings::default()).unwrap().u;
    let m = u.max_abs();
    let diff = u.zip_map(&lin, |a, b| a - b).max_abs();
    println!("|u| = {m:.3e}, |u - u_lin| = {diff:.3e}, 5|u|^3 = {:.3e}", 5.0 * m.powi(3));
    assert!(m < 0.5);
    assert!(diff <= 5.0 * m.powi(3));
}

#[test]
fn random_start_reaches_the_same_solution() {
    let (domain, coeffs, grid) = charged_problem(200.0, 1.0);
    let map = cutoff_map();
    let y = [0.1, 0.9];
    let settings = NewtonSettings::default();
    let a = newton_solve_npbe(&domain, &map, &coeffs, &y, &grid, None, &settings).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let start = GridField::from_values(&grid, (0..grid.len()).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
    let b = newton_solve_npbe(&domain, &map, &coeffs, &y, &grid, Some(&start), &settings).unwrap();
    let diff = a.u.zip_map(&b.u, |x, z| x - z).max_abs();
    assert!(diff <= 1e-7, "{diff}");
    let sinh_u = a.u.map(f64::sinh);
    assert!(sinh_u.is_finite() && sinh_u.l2_norm().is_finite());
    let disc = Discretization::new(&domain, &map, &coeffs, &y, &grid).unwrap();
    let res = operator_residual(&disc, &a.u);
    assert!(res.l2_vector() <= settings.tol * (1.0 + disc.rhs_norm()));
}
