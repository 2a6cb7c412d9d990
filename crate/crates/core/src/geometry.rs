//! Reference domain, analytic domain maps and Jacobian-level quantities.
//!
//! The reference domain is a box `U` holding two concentric spheres. The inner
//! ball is `U1` (molecule), the shell up to the outer sphere is `U2`
//! (ion-exclusion layer) and the rest of the box is `U3` (solvent).
//!
//! A [`DomainMap`] is the affine-in-`y` family
//! `F(r; y) = r + sum_k sqrt(mu_k) b_k(r) y_k` with Jacobian
//! `J(r; y) = I + sum_k sqrt(mu_k) B_k(r) y_k`, `B_k = grad b_k`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pde::PbeCoefficients;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subdomain {
    U1,
    U2,
    U3,
}

impl Subdomain {
    pub const ALL: [Subdomain; 3] = [Subdomain::U1, Subdomain::U2, Subdomain::U3];

    pub fn index(self) -> usize {
        match self {
            Subdomain::U1 => 0,
            Subdomain::U2 => 1,
            Subdomain::U3 => 2,
        }
    }
}

impl fmt::Display for Subdomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "U{}", self.index() + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Classification {
    pub label: Subdomain,
    /// Set when the point is within the band of one of the interface level sets.
    pub interface_adjacent: bool,
}

/// Box with two nested spheres, properly decomposed into `U1 ⊂⊂ U1∪U2 ⊂⊂ U`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceDomain {
    box_min: Vec3,
    box_max: Vec3,
    center: Vec3,
    radii: [f64; 2],
}

impl ReferenceDomain {
    pub fn new(box_min: Vec3, box_max: Vec3, center: Vec3, inner: f64, outer: f64) -> Result<Self> {
        if (0..3).any(|a| box_max[a] <= box_min[a]) {
            return Err(Error::InvalidDomain("box_max must exceed box_min on every axis".into()));
        }
        if !(inner > 0.0 && outer > inner) {
            return Err(Error::InvalidDomain(format!(
                "sphere radii must satisfy 0 < inner < outer, got {inner} and {outer}"
            )));
        }
        let clearance = (0..3)
            .map(|a| (center[a] - box_min[a]).min(box_max[a] - center[a]))
            .fold(f64::INFINITY, f64::min);
        if clearance <= outer {
            return Err(Error::InvalidDomain(format!(
                "outer sphere (radius {outer}) is not compactly contained in the box (clearance {clearance})"
            )));
        }
        Ok(Self { box_min, box_max, center, radii: [inner, outer] })
    }

    /// Cube `[-half, half]^3` with spheres centred at the origin.
    pub fn centered_cube(half: f64, inner: f64, outer: f64) -> Result<Self> {
        Self::new(Vec3::repeat(-half), Vec3::repeat(half), Vec3::zeros(), inner, outer)
    }

    pub fn box_min(&self) -> Vec3 {
        self.box_min
    }

    pub fn box_max(&self) -> Vec3 {
        self.box_max
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }

    pub fn radii(&self) -> [f64; 2] {
        self.radii
    }

    pub fn contains(&self, r: &Vec3) -> bool {
        (0..3).all(|a| r[a] >= self.box_min[a] && r[a] <= self.box_max[a])
    }

    /// Signed-distance level set of interface `k` (0 = I1, 1 = I2); negative inside.
    pub fn level_set(&self, k: usize, r: &Vec3) -> f64 {
        (r - self.center).norm() - self.radii[k]
    }

    pub fn level_set_gradient(&self, r: &Vec3) -> Vec3 {
        let d = r - self.center;
        let n = d.norm();
        if n == 0.0 {
            Vec3::zeros()
        } else {
            d / n
        }
    }

    /// Label without the box check; points outside the box fall into `U3`.
    pub fn subdomain_of(&self, r: &Vec3) -> Subdomain {
        if self.level_set(0, r) <= 0.0 {
            Subdomain::U1
        } else if self.level_set(1, r) <= 0.0 {
            Subdomain::U2
        } else {
            Subdomain::U3
        }
    }

    pub fn classify_point(&self, r: &Vec3, band: f64) -> Result<Classification> {
        if !self.contains(r) {
            return Err(Error::OutsideBox(r.x, r.y, r.z));
        }
        let label = self.subdomain_of(r);
        let interface_adjacent = (0..2).any(|k| self.level_set(k, r).abs() < band);
        Ok(Classification { label, interface_adjacent })
    }
}

/// A displacement field `b : R^3 -> R^3` with closed-form first and second derivatives.
pub trait DisplacementField: Send + Sync + fmt::Debug {
    fn value(&self, r: &Vec3) -> Vec3;

    /// `B(r)` with `B[(i, j)] = d b_i / d r_j`.
    fn gradient(&self, r: &Vec3) -> Mat3;

    /// `d B / d r_axis`.
    fn gradient_derivative(&self, r: &Vec3, axis: usize) -> Mat3;
}

/// C² tensor-product cutoff: 1 on the cube of half-width `plateau` around
/// `center`, decaying to 0 over `width` with a quintic smoothstep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cutoff {
    pub center: Vec3,
    pub plateau: f64,
    pub width: f64,
}

impl Cutoff {
    // (g, g', g'') along one axis
    fn axis_profile(&self, x: f64, c: f64) -> (f64, f64, f64) {
        let d = x - c;
        let t = (d.abs() - self.plateau) / self.width;
        if t <= 0.0 {
            return (1.0, 0.0, 0.0);
        }
        if t >= 1.0 {
            return (0.0, 0.0, 0.0);
        }
        let s = t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
        let ds = 30.0 * t * t * (t - 1.0) * (t - 1.0);
        let dds = 60.0 * t * (2.0 * t - 1.0) * (t - 1.0);
        let sign = d.signum();
        (1.0 - s, -ds * sign / self.width, -dds / (self.width * self.width))
    }

    fn profiles(&self, r: &Vec3) -> [(f64, f64, f64); 3] {
        [0, 1, 2].map(|a| self.axis_profile(r[a], self.center[a]))
    }

    pub fn value(&self, r: &Vec3) -> f64 {
        self.profiles(r).iter().map(|p| p.0).product()
    }

    pub fn gradient(&self, r: &Vec3) -> Vec3 {
        let p = self.profiles(r);
        Vec3::new(p[0].1 * p[1].0 * p[2].0, p[0].0 * p[1].1 * p[2].0, p[0].0 * p[1].0 * p[2].1)
    }

    pub fn hessian(&self, r: &Vec3) -> Mat3 {
        let p = self.profiles(r);
        Mat3::from_fn(|a, b| {
            (0..3)
                .map(|c| {
                    if c == a && c == b {
                        p[c].2
                    } else if c == a || c == b {
                        p[c].1
                    } else {
                        p[c].0
                    }
                })
                .product()
        })
    }
}

/// Named displacement templates accepted in run configs.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldTemplate {
    /// `b = e_axis` everywhere.
    ConstantShift { axis: usize },
    /// `b = e_axis * chi(r)` with a C² cutoff fixing the box boundary.
    CutoffShift { axis: usize, cutoff: Cutoff },
}

impl FieldTemplate {
    pub fn parse(name: &str, cutoff: Option<Cutoff>) -> Result<Self> {
        let (kind, axis) = name
            .rsplit_once('_')
            .ok_or_else(|| Error::Config(format!("unknown displacement template `{name}`")))?;
        let axis = match axis {
            "x" => 0,
            "y" => 1,
            "z" => 2,
            _ => return Err(Error::Config(format!("unknown axis in template `{name}`"))),
        };
        match kind {
            "constant_shift" => Ok(Self::ConstantShift { axis }),
            "cutoff_shift" => {
                let cutoff = cutoff.ok_or_else(|| {
                    Error::Config(format!("template `{name}` requires a cutoff specification"))
                })?;
                Ok(Self::CutoffShift { axis, cutoff })
            }
            _ => Err(Error::Config(format!("unknown displacement template `{name}`"))),
        }
    }
}

impl DisplacementField for FieldTemplate {
    fn value(&self, r: &Vec3) -> Vec3 {
        match self {
            Self::ConstantShift { axis } => unit(*axis),
            Self::CutoffShift { axis, cutoff } => unit(*axis) * cutoff.value(r),
        }
    }

    fn gradient(&self, r: &Vec3) -> Mat3 {
        match self {
            Self::ConstantShift { .. } => Mat3::zeros(),
            Self::CutoffShift { axis, cutoff } => unit(*axis) * cutoff.gradient(r).transpose(),
        }
    }

    fn gradient_derivative(&self, r: &Vec3, d: usize) -> Mat3 {
        match self {
            Self::ConstantShift { .. } => Mat3::zeros(),
            Self::CutoffShift { axis, cutoff } => {
                unit(*axis) * cutoff.hessian(r).column(d).transpose()
            }
        }
    }
}

pub fn unit(axis: usize) -> Vec3 {
    let mut e = Vec3::zeros();
    e[axis] = 1.0;
    e
}

#[derive(Clone, Debug)]
pub struct Mode {
    pub mu: f64,
    pub field: Arc<dyn DisplacementField>,
}

impl Mode {
    pub fn new(mu: f64, field: impl DisplacementField + 'static) -> Self {
        Self { mu, field: Arc::new(field) }
    }
}

/// `F(r; y) = r + sum_k sqrt(mu_k) b_k(r) y_k`.
#[derive(Clone, Debug, Default)]
pub struct DomainMap {
    modes: Vec<Mode>,
}

impl DomainMap {
    pub fn new(modes: Vec<Mode>) -> Result<Self> {
        for (k, m) in modes.iter().enumerate() {
            if !(m.mu >= 0.0) || !m.mu.is_finite() {
                return Err(Error::InvalidArgument(format!("mode {k}: mu must be finite and >= 0")));
            }
        }
        if modes.windows(2).any(|w| w[1].mu > w[0].mu) {
            return Err(Error::InvalidArgument("mode weights mu_k must be nonincreasing".into()));
        }
        Ok(Self { modes })
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    fn check_dim(&self, len: usize) {
        assert_eq!(len, self.modes.len(), "parameter vector length must equal the number of modes");
    }

    pub fn map_forward(&self, r: &Vec3, y: &[f64]) -> Vec3 {
        self.check_dim(y.len());
        self.modes
            .iter()
            .zip(y)
            .fold(*r, |acc, (m, &yk)| acc + m.field.value(r) * (m.mu.sqrt() * yk))
    }

    /// Complex parameters; returns the real and imaginary parts of `F(r; y)`.
    pub fn map_forward_complex(&self, r: &Vec3, y: &[Complex64]) -> (Vec3, Vec3) {
        self.check_dim(y.len());
        let mut re = *r;
        let mut im = Vec3::zeros();
        for (m, yk) in self.modes.iter().zip(y) {
            let b = m.field.value(r) * m.mu.sqrt();
            re += b * yk.re;
            im += b * yk.im;
        }
        (re, im)
    }

    /// `𝓑y(r) = sum_k sqrt(mu_k) B_k(r) y_k`.
    pub fn b_applied(&self, r: &Vec3, y: &[f64]) -> Mat3 {
        self.check_dim(y.len());
        self.modes
            .iter()
            .zip(y)
            .fold(Mat3::zeros(), |acc, (m, &yk)| acc + m.field.gradient(r) * (m.mu.sqrt() * yk))
    }

    /// `d(𝓑y)/d r_axis`.
    pub fn b_applied_derivative(&self, r: &Vec3, y: &[f64], axis: usize) -> Mat3 {
        self.check_dim(y.len());
        self.modes.iter().zip(y).fold(Mat3::zeros(), |acc, (m, &yk)| {
            acc + m.field.gradient_derivative(r, axis) * (m.mu.sqrt() * yk)
        })
    }

    pub fn jacobian(&self, r: &Vec3, y: &[f64]) -> Mat3 {
        Mat3::identity() + self.b_applied(r, y)
    }

    pub fn det_jacobian(&self, r: &Vec3, y: &[f64]) -> f64 {
        det3(&self.jacobian(r, y))
    }

    /// Largest `|b_k(r)|_2` per mode over a tensor sample of the box.
    pub fn sampled_field_sup(&self, domain: &ReferenceDomain, per_axis: usize) -> Vec<f64> {
        let pts = box_samples(domain, per_axis);
        self.modes
            .iter()
            .map(|m| pts.iter().map(|r| m.field.value(r).norm()).fold(0.0, f64::max))
            .collect()
    }

    /// Sampled `‖B_k‖_{C^1}` per mode: the max over derivative orders 0 and 1
    /// of the pointwise spectral norm. These are lower estimates of the sup.
    pub fn sampled_c1_norms(&self, domain: &ReferenceDomain, per_axis: usize) -> Vec<f64> {
        let pts = box_samples(domain, per_axis);
        self.modes
            .iter()
            .map(|m| {
                pts.iter()
                    .map(|r| {
                        let mut s = spectral_norm(&m.field.gradient(r));
                        for a in 0..3 {
                            s = s.max(spectral_norm(&m.field.gradient_derivative(r, a)));
                        }
                        s
                    })
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    pub fn b_norms(&self, domain: &ReferenceDomain, per_axis: usize) -> MapBoundsProfile {
        MapBoundsProfile {
            sqrt_mu: self.modes.iter().map(|m| m.mu.sqrt()).collect(),
            c1_norms: self.sampled_c1_norms(domain, per_axis),
        }
    }
}

/// Weighted norms `‖𝓑‖_p` of the map derivative family.
#[derive(Clone, Debug, PartialEq)]
pub struct MapBoundsProfile {
    pub sqrt_mu: Vec<f64>,
    pub c1_norms: Vec<f64>,
}

impl MapBoundsProfile {
    pub fn from_parts(sqrt_mu: Vec<f64>, c1_norms: Vec<f64>) -> Self {
        assert_eq!(sqrt_mu.len(), c1_norms.len());
        Self { sqrt_mu, c1_norms }
    }

    fn weighted(&self) -> impl Iterator<Item = f64> + '_ {
        self.sqrt_mu.iter().zip(&self.c1_norms).map(|(s, c)| s * c)
    }

    pub fn b_norm_1(&self) -> f64 {
        self.weighted().sum()
    }

    pub fn b_norm_inf(&self) -> f64 {
        self.weighted().fold(0.0, f64::max)
    }

    pub fn b_norm_p(&self, p: f64) -> f64 {
        assert!(p >= 1.0, "p must be >= 1");
        if p.is_infinite() {
            return self.b_norm_inf();
        }
        self.weighted().map(|t| t.powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssumptionReport {
    /// Lower bound on the dielectric coefficient.
    pub c1: f64,
    /// Sampled lower estimate of `det J` over `Γ × U`.
    pub c2: f64,
    pub kappa_ok: bool,
    pub b_norm_1: f64,
    /// `‖𝓑‖_1 < 1/4`.
    pub b_small: bool,
}

#[derive(Clone, Debug)]
pub struct AssumptionSampling {
    pub r_per_axis: usize,
    pub y_per_axis: usize,
    pub random_y: usize,
    pub norm_per_axis: usize,
    pub seed: u64,
}

impl Default for AssumptionSampling {
    fn default() -> Self {
        Self { r_per_axis: 17, y_per_axis: 5, random_y: 64, norm_per_axis: 64, seed: 7 }
    }
}

pub fn check_assumptions(
    domain: &ReferenceDomain,
    map: &DomainMap,
    coeffs: &PbeCoefficients,
    sampling: &AssumptionSampling,
) -> Result<AssumptionReport> {
    let c1 = coeffs.eps.iter().copied().fold(f64::INFINITY, f64::min);
    if !(c1 > 0.0) {
        return Err(Error::NonPositive("dielectric coefficient", c1));
    }
    let kappa_ok = coeffs.kappa2.iter().all(|&k| k >= 0.0);

    let n = map.dim();
    let mut ys = tensor_points(n, sampling.y_per_axis);
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    for _ in 0..sampling.random_y {
        ys.push((0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect());
    }
    let pts = box_samples(domain, sampling.r_per_axis);
    let mut c2 = f64::INFINITY;
    for r in &pts {
        for y in &ys {
            c2 = c2.min(map.det_jacobian(r, y));
        }
    }
    if !(c2 > 0.0) {
        return Err(Error::OrientationViolation { min_det: c2 });
    }
    let b_norm_1 = map.b_norms(domain, sampling.norm_per_axis).b_norm_1();
    Ok(AssumptionReport { c1, c2, kappa_ok, b_norm_1, b_small: b_norm_1 < 0.25 })
}

/// Tensor grid with `per_axis` equispaced values in [-1, 1] per dimension.
pub fn tensor_points(dim: usize, per_axis: usize) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = if per_axis <= 1 {
        vec![0.0]
    } else {
        (0..per_axis).map(|i| -1.0 + 2.0 * i as f64 / (per_axis - 1) as f64).collect()
    };
    let mut out = vec![Vec::with_capacity(dim)];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

pub fn box_samples(domain: &ReferenceDomain, per_axis: usize) -> Vec<Vec3> {
    let n = per_axis.max(2);
    let (lo, hi) = (domain.box_min(), domain.box_max());
    let coord = |a: usize, i: usize| lo[a] + (hi[a] - lo[a]) * i as f64 / (n - 1) as f64;
    let mut pts = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                pts.push(Vec3::new(coord(0, i), coord(1, j), coord(2, k)));
            }
        }
    }
    pts
}

/// Determinant by cofactor expansion along the first row.
pub fn det3(m: &Mat3) -> f64 {
    m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
        - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
        + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
}

pub fn spectral_norm(m: &Mat3) -> f64 {
    if m.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    m.singular_values().max()
}

pub fn smallest_singular_value(m: &Mat3) -> f64 {
    m.singular_values().min()
}
