//! Perturbation bounds for the pulled-back operator and the resulting
//! estimate of `M`, the sup of the residual map on the analytic ball.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{det3, spectral_norm, DomainMap, Mat3, ReferenceDomain, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundsInput {
    pub b1: f64,
    pub binf: f64,
    pub y0_inf: f64,
    pub y_inf: f64,
    pub eps_max: f64,
    pub kappa2_max: f64,
    pub c_max: f64,
    pub u0_norm: f64,
    pub u_norm: f64,
    pub n_f: usize,
    pub xi_l2: f64,
    pub xi_grad_l2: f64,
    pub mu_max: f64,
}

impl BoundsInput {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("b1", self.b1),
            ("binf", self.binf),
            ("y0_inf", self.y0_inf),
            ("y_inf", self.y_inf),
            ("eps_max", self.eps_max),
            ("kappa2_max", self.kappa2_max),
            ("u0_norm", self.u0_norm),
            ("u_norm", self.u_norm),
            ("xi_l2", self.xi_l2),
            ("xi_grad_l2", self.xi_grad_l2),
            ("mu_max", self.mu_max),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::NonPositive(name, v));
            }
        }
        if !(self.c_max > 0.0 && self.c_max.is_finite()) {
            return Err(Error::NonPositive("c_max", self.c_max));
        }
        if self.b1 >= 0.25 {
            return Err(Error::Hypothesis(format!("‖B‖₁ < 1/4 violated: ‖B‖₁ = {}", self.b1)));
        }
        if self.b1 > 0.0 && self.y_inf >= 1.0 / (4.0 * self.b1) - self.y0_inf {
            return Err(Error::Hypothesis(format!(
                "|y|∞ < 1/(4‖B‖₁) - |y⁰|∞ violated: {} >= {}",
                self.y_inf,
                1.0 / (4.0 * self.b1) - self.y0_inf
            )));
        }
        Ok(())
    }

    fn s0(&self) -> f64 {
        self.b1 * self.y0_inf
    }

    fn s(&self) -> f64 {
        self.b1 * (self.y0_inf + self.y_inf)
    }

    fn det_ratio_cubed(&self) -> f64 {
        ((1.0 - self.s0()) / (1.0 - self.s())).powi(3)
    }
}

pub const PROP_A_NAMES: [&str; 8] = [
    "inv_jacobian_y0",
    "inv_jacobian_y",
    "inv_perturbation",
    "det_jacobian_y0",
    "det_jacobian_y",
    "det_jacobian_y0_lip",
    "det_jacobian_y_lip",
    "det_perturbation",
];

/// The eight bounds, in [`PROP_A_NAMES`] order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropABounds(pub [f64; 8]);

impl PropABounds {
    pub fn inv_jacobian_y0(&self) -> f64 {
        self.0[0]
    }
    pub fn inv_jacobian_y(&self) -> f64 {
        self.0[1]
    }
    pub fn inv_perturbation(&self) -> f64 {
        self.0[2]
    }
    pub fn det_jacobian_y0(&self) -> f64 {
        self.0[3]
    }
    pub fn det_jacobian_y(&self) -> f64 {
        self.0[4]
    }
    pub fn det_jacobian_y0_lip(&self) -> f64 {
        self.0[5]
    }
    pub fn det_jacobian_y_lip(&self) -> f64 {
        self.0[6]
    }
    pub fn det_perturbation(&self) -> f64 {
        self.0[7]
    }
}

pub fn prop_a_bounds(input: &BoundsInput) -> Result<PropABounds> {
    input.validate()?;
    let (s0, s) = (input.s0(), input.s());
    Ok(PropABounds([
        1.0 / (1.0 - 4.0 * s0),
        1.0 / (1.0 - 4.0 * s),
        4.0 * input.b1 * input.y_inf / (1.0 - 4.0 * s),
        1.0 / (1.0 - s0).powi(3),
        1.0 / (1.0 - s).powi(3),
        4.0 / (1.0 - s0).powi(3),
        4.0 / (1.0 - s).powi(3),
        4.0 * (input.det_ratio_cubed() - 1.0),
    ]))
}

pub fn a_coeff(input: &BoundsInput) -> Result<f64> {
    let p = prop_a_bounds(input)?;
    Ok(p.inv_jacobian_y().powi(2) * p.det_jacobian_y_lip())
}

pub fn b_coeff(input: &BoundsInput) -> Result<f64> {
    let p = prop_a_bounds(input)?;
    let (t, d) = (p.inv_perturbation(), p.det_perturbation());
    let bracket = t * t * d + 2.0 * t * d + t * t + 2.0 * t + d;
    Ok(bracket * p.inv_jacobian_y0().powi(2) * p.det_jacobian_y0_lip())
}

/// `L²` bound on the change of the `sinh` reaction term.
pub fn nonlinear_term_bound(input: &BoundsInput) -> Result<f64> {
    input.validate()?;
    let c = input.c_max;
    let ratio3 = input.det_ratio_cubed();
    let first = 2.0 * (c * (input.u0_norm + 0.5 * input.u_norm)).cosh() * (c * 0.5 * input.u_norm).sinh() * ratio3;
    let second = (c * input.u_norm).sinh() / c * (ratio3 - 1.0);
    Ok(3f64.sqrt() * input.kappa2_max / (1.0 - input.s0()).powi(3) * (first + second))
}

/// `L²` bound on the change of the pulled-back charge density.
pub fn forcing_term_bound(input: &BoundsInput) -> Result<f64> {
    input.validate()?;
    let y = input.y_inf;
    Ok(input.n_f as f64
        * y
        * (6.0 * input.mu_max * input.xi_grad_l2 + 3.0 * input.xi_l2 * input.binf / (1.0 - input.b1 * y)))
}

/// Bound on the `L²` component of `F(y⁰ + y, u⁰ + u) - F(y⁰, u⁰)`. Trace
/// components are not included.
pub fn m_estimate(input: &BoundsInput) -> Result<f64> {
    let linear = 3f64.sqrt() * input.eps_max * (a_coeff(input)? * input.u_norm + b_coeff(input)? * input.u0_norm);
    Ok(linear + nonlinear_term_bound(input)? + forcing_term_bound(input)?)
}

/// One row of the bound ledger.
#[derive(Clone, Debug, PartialEq)]
pub struct LedgerRow {
    pub name: &'static str,
    pub value: f64,
}

pub fn ledger(input: &BoundsInput) -> Result<Vec<LedgerRow>> {
    let p = prop_a_bounds(input)?;
    let mut rows: Vec<LedgerRow> =
        PROP_A_NAMES.iter().zip(p.0).map(|(&name, value)| LedgerRow { name, value }).collect();
    rows.push(LedgerRow { name: "a_coeff", value: a_coeff(input)? });
    rows.push(LedgerRow { name: "b_coeff", value: b_coeff(input)? });
    rows.push(LedgerRow { name: "nonlinear_term", value: nonlinear_term_bound(input)? });
    rows.push(LedgerRow { name: "forcing_term", value: forcing_term_bound(input)? });
    rows.push(LedgerRow { name: "M_l2_component", value: m_estimate(input)? });
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub bound: &'static str,
    pub trial: usize,
    pub actual: f64,
    pub limit: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingReport {
    pub trials: usize,
    pub violations: Vec<Violation>,
    /// Largest `actual / bound` seen per bound; `0` when the bound is `0`.
    pub max_ratio: [f64; 8],
}

impl SamplingReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SamplingOptions {
    pub trials: usize,
    pub seed: u64,
    /// Multiplies every bound before comparison. `1.0` outside of checker self-tests.
    pub bound_scale: f64,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self { trials: 1000, seed: 11, bound_scale: 1.0 }
    }
}

fn inv(m: &Mat3) -> Mat3 {
    m.try_inverse().unwrap_or_else(|| Mat3::from_element(f64::INFINITY))
}

fn det_lip(map: &DomainMap, j: &Mat3, r: &Vec3, y: &[f64]) -> (f64, f64) {
    let d = det3(j);
    let ji = inv(j);
    let grad = (0..3).map(|a| (d * (ji * map.b_applied_derivative(r, y, a)).trace()).abs()).fold(0.0, f64::max);
    (d, grad)
}

/// Pointwise witnesses `[|J⁻¹(y⁰)|₂, |J⁻¹(y⁰+y)|₂, |(I+J⁻¹𝓑y)⁻¹ - I|₂, |det J(y⁰)|, |det J(y⁰+y)|,
/// max(|det|, |∇det|) at y⁰ and y⁰+y, max(|d - 1|, |∇d|)]` with `d = det(I + J⁻¹(y⁰)𝓑y)`.
pub fn pointwise_witnesses(map: &DomainMap, r: &Vec3, y0: &[f64], y: &[f64]) -> [f64; 8] {
    let y1: Vec<f64> = y0.iter().zip(y).map(|(a, b)| a + b).collect();
    let j0 = map.jacobian(r, y0);
    let j1 = map.jacobian(r, &y1);
    let j0i = inv(&j0);
    let pert = Mat3::identity() + j0i * map.b_applied(r, y);
    let (d0, g0) = det_lip(map, &j0, r, y0);
    let (d1, g1) = det_lip(map, &j1, r, &y1);
    let ratio = d1 / d0;
    let j1i = inv(&j1);
    let gd = (0..3)
        .map(|a| {
            let t1 = (j1i * map.b_applied_derivative(r, &y1, a)).trace();
            let t0 = (j0i * map.b_applied_derivative(r, y0, a)).trace();
            (ratio * (t1 - t0)).abs()
        })
        .fold(0.0, f64::max);
    [
        spectral_norm(&j0i),
        spectral_norm(&j1i),
        spectral_norm(&(inv(&pert) - Mat3::identity())),
        d0.abs(),
        d1.abs(),
        d0.abs().max(g0),
        d1.abs().max(g1),
        (ratio - 1.0).abs().max(gd),
    ]
}

/// Draws `(r, y⁰, y)` with `|y⁰|∞ <= y0_inf`, `|y|∞ <= y_inf` and checks
/// every pointwise witness against its bound. `input.b1` must dominate the
/// map's `‖𝓑‖₁`.
pub fn verify_bounds_by_sampling(
    domain: &ReferenceDomain,
    map: &DomainMap,
    input: &BoundsInput,
    opts: &SamplingOptions,
) -> Result<SamplingReport> {
    let bounds = prop_a_bounds(input)?;
    let (lo, hi) = (domain.box_min(), domain.box_max());
    let dim = map.dim();
    let per_trial: Vec<(usize, [f64; 8])> = (0..opts.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(t as u64);
            let r = Vec3::from_fn(|a, _| rng.gen_range(lo[a]..=hi[a]));
            let y0: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0) * input.y0_inf).collect();
            let y: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0) * input.y_inf).collect();
            (t, pointwise_witnesses(map, &r, &y0, &y))
        })
        .collect();
    let mut violations = Vec::new();
    let mut max_ratio = [0.0f64; 8];
    for (t, w) in per_trial {
        for k in 0..8 {
            let limit = bounds.0[k] * opts.bound_scale;
            // relative slack for roundoff in the witnesses
            if w[k] > limit * (1.0 + 1e-12) + 1e-14 {
                violations.push(Violation { bound: PROP_A_NAMES[k], trial: t, actual: w[k], limit });
            }
            if bounds.0[k] > 0.0 {
                max_ratio[k] = max_ratio[k].max(w[k] / bounds.0[k]);
            }
        }
    }
    Ok(SamplingReport { trials: opts.trials, violations, max_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn sample_input() -> BoundsInput {
        BoundsInput {
            b1: 0.1,
            binf: 0.1,
            y0_inf: 1.0,
            y_inf: 0.5,
            eps_max: 70.0,
            kappa2_max: 1.0,
            c_max: 2.0,
            u0_norm: 1.0,
            u_norm: 1.0,
            n_f: 3,
            xi_l2: 1.0,
            xi_grad_l2: 1.0,
            mu_max: 0.1,
        }
    }

    #[test]
    fn prop_a_examples() {
        let p = prop_a_bounds(&sample_input()).unwrap();
        assert_relative_eq!(p.inv_jacobian_y0(), 1.0 / 0.6, epsilon = 1e-14);
        assert_relative_eq!(p.inv_jacobian_y(), 2.5, epsilon = 1e-14);
        assert_relative_eq!(p.det_jacobian_y0(), 1.0 / 0.729, epsilon = 1e-14);
        let zero = prop_a_bounds(&BoundsInput { y_inf: 0.0, ..sample_input() }).unwrap();
        assert_eq!(zero.inv_perturbation(), 0.0);
        assert_eq!(zero.det_perturbation(), 0.0);
    }

    #[test]
    fn coefficient_examples() {
        assert_relative_eq!(a_coeff(&sample_input()).unwrap(), 6.25 * 4.0 / 0.85f64.powi(3), epsilon = 1e-12);
        assert_relative_eq!(a_coeff(&sample_input()).unwrap(), 40.7083, epsilon = 1e-4);
        assert_eq!(b_coeff(&BoundsInput { y_inf: 0.0, ..sample_input() }).unwrap(), 0.0);
    }

    #[test]
    fn hypotheses_are_named() {
        let e = prop_a_bounds(&BoundsInput { b1: 0.3, ..sample_input() }).unwrap_err();
        assert!(e.to_string().contains("1/4"));
        let e = prop_a_bounds(&BoundsInput { y_inf: 1.6, ..sample_input() }).unwrap_err();
        assert!(e.to_string().contains("|y|∞"));
    }

    #[test]
    fn vanishing_terms() {
        let base = sample_input();
        assert_eq!(nonlinear_term_bound(&BoundsInput { u_norm: 0.0, ..base }).unwrap(), 0.0);
        assert_eq!(nonlinear_term_bound(&BoundsInput { kappa2_max: 0.0, ..base }).unwrap(), 0.0);
        assert_eq!(forcing_term_bound(&BoundsInput { n_f: 0, ..base }).unwrap(), 0.0);
        assert_eq!(forcing_term_bound(&BoundsInput { y_inf: 0.0, ..base }).unwrap(), 0.0);
        let still = BoundsInput { y_inf: 0.0, u_norm: 0.0, ..base };
        assert_eq!(m_estimate(&still).unwrap(), 0.0);
    }

    #[test]
    fn identity_map_witnesses() {
        let map = DomainMap::identity();
        let w = pointwise_witnesses(&map, &Vec3::new(1.0, 2.0, 3.0), &[], &[]);
        assert_eq!(w, [1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0]);
    }
}
