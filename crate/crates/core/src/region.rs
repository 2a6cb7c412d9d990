//! Analyticity radius of the parameter-to-solution map and the sparse-grid
//! error bound it implies.

use std::f64::consts::{E, LN_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};

fn positive(name: &'static str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonPositive(name, v))
    }
}

/// Radius `Θ(M, a, R)` of the complex neighbourhood of `y⁰` on which the
/// solution map is analytic.
pub fn theta(m: f64, a: f64, r: f64) -> Result<f64> {
    let (m, a, r) = (positive("M", m)?, positive("a", a)?, positive("R", r)?);
    let x = a * m;
    let q = (x * (x + r)).sqrt();
    // rationalised form; the textbook one loses every digit once aM >> R
    let num = x * r.powi(3) * (x + r) * (2.0 * q + r + 3.0 * x);
    let den = (x + q) * (x + r + q) * q * (5.0 * x * x + 2.0 * x * r + r * r);
    Ok(num / den)
}

/// Bound `Ξ(M, a, R)` on the solution norm inside the analytic ball.
pub fn xi(m: f64, a: f64, r: f64) -> Result<f64> {
    let (m, a, r) = (positive("M", m)?, positive("a", a)?, positive("R", r)?);
    let x = a * m;
    Ok(r * r / (x + r + (x * (x + r)).sqrt()))
}

/// `σ* = log(√(Θ² + 1) + Θ)`.
pub fn sigma_star(theta: f64) -> f64 {
    theta.asinh()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionEstimate {
    pub m: f64,
    pub a: f64,
    pub r: f64,
    pub theta: f64,
    pub xi: f64,
    pub sigma_star: f64,
}

impl RegionEstimate {
    pub fn new(m: f64, a: f64, r: f64) -> Result<Self> {
        let t = theta(m, a, r)?;
        Ok(Self { m, a, r, theta: t, xi: xi(m, a, r)?, sigma_star: sigma_star(t) })
    }
}

/// `samples` equally spaced points on the Bernstein ellipse with parameter `sigma`.
pub fn polyellipse_boundary(sigma: f64, samples: usize) -> Vec<Complex64> {
    (0..samples)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / samples as f64;
            Complex64::new(sigma.cosh() * t.cos(), sigma.sinh() * t.sin())
        })
        .collect()
}

/// Distance from `z` to the segment `[-1, 1]`.
pub fn distance_to_segment(z: Complex64) -> f64 {
    let dx = (z.re.abs() - 1.0).max(0.0);
    dx.hypot(z.im)
}

/// Sampled `sup |ν|` over the product of `dim` ellipses with parameter
/// `sigma`, `samples` angles each. A lower estimate of `M̃(ν)`.
pub fn m_tilde<F>(mut nu: F, sigma: f64, dim: usize, samples: usize) -> Result<f64>
where
    F: FnMut(&[Complex64]) -> Result<Complex64>,
{
    if samples == 0 || dim == 0 {
        return Err(Error::InvalidArgument("m_tilde needs at least one sample and one dimension".into()));
    }
    let ring = polyellipse_boundary(sigma, samples);
    let mut idx = vec![0usize; dim];
    let mut z = vec![ring[0]; dim];
    let mut best = 0.0f64;
    loop {
        for n in 0..dim {
            z[n] = ring[idx[n]];
        }
        best = best.max(nu(&z)?.norm());
        let mut n = 0;
        while n < dim {
            idx[n] += 1;
            if idx[n] < samples {
                break;
            }
            idx[n] = 0;
            n += 1;
        }
        if n == dim {
            return Ok(best);
        }
    }
}

/// Constants of the sparse-grid error bound. `C(σ)` inside `C₁` is taken
/// equal to `C̃₂(σ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorBoundConstants {
    pub sigma: f64,
    pub c2_tilde: f64,
    pub delta_star: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub a_delta_sigma: f64,
    pub c1: f64,
    pub q: f64,
    pub n: usize,
    pub m_tilde: f64,
    /// Set when `C₁` was exactly 1 and had to be nudged by `1e-12`.
    pub c1_perturbed: bool,
}

pub const C1_NUDGE: f64 = 1e-12;

impl ErrorBoundConstants {
    pub fn new(sigma_star: f64, n: usize, m_tilde: f64) -> Result<Self> {
        positive("sigma_star", sigma_star)?;
        if n == 0 {
            return Err(Error::InvalidArgument("N must be at least 1".into()));
        }
        if !(m_tilde >= 0.0 && m_tilde.is_finite()) {
            return Err(Error::NonPositive("M_tilde", m_tilde));
        }
        let sigma = sigma_star / 2.0;
        let nf = n as f64;
        let log2n = (2.0 * nf).ln();
        let c2_tilde = 1.0 + (PI / (2.0 * sigma)).sqrt() / LN_2;
        let delta_star = (E * LN_2 - 1.0) / c2_tilde;
        let mu1 = sigma / (1.0 + log2n);
        let mu2 = LN_2 / (nf * (1.0 + log2n));
        let mu3 = sigma * delta_star * c2_tilde / (1.0 + 2.0 * log2n);
        let a_delta_sigma = a_delta_sigma(delta_star, sigma);
        let (c1, c1_perturbed) = nudge_unit(4.0 * m_tilde * c2_tilde * a_delta_sigma / (E * delta_star * sigma));
        let q = c1 / (sigma * delta_star * c2_tilde).exp() * c1.max(1.0).powi(n as i32) / (1.0 - c1).abs();
        Ok(Self { sigma, c2_tilde, delta_star, mu1, mu2, mu3, a_delta_sigma, c1, q, n, m_tilde, c1_perturbed })
    }

    pub fn subexponential(&self, eta: f64) -> f64 {
        let nf = self.n as f64;
        self.q * eta.powf(self.mu3) * (-nf * self.sigma / 2f64.powf(1.0 / nf) * eta.powf(self.mu2)).exp()
    }

    pub fn algebraic(&self, eta: f64) -> f64 {
        self.c1 * self.c1.max(1.0).powi(self.n as i32) / (1.0 - self.c1).abs() * eta.powf(-self.mu1)
    }
}

fn nudge_unit(c1: f64) -> (f64, bool) {
    if c1 == 1.0 {
        (c1 + C1_NUDGE, true)
    } else {
        (c1, false)
    }
}

pub fn a_delta_sigma(delta: f64, sigma: f64) -> f64 {
    let brace = 1.0 / (sigma * LN_2 * LN_2)
        + 1.0 / (LN_2 * (2.0 * sigma).sqrt())
        + 2.0 * (1.0 + (PI / (2.0 * sigma)).sqrt() / LN_2);
    (delta * sigma * brace).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    SubExponential,
    Algebraic,
}

impl Regime {
    /// Sub-exponential iff `w > N / log 2`.
    pub fn for_level(w: usize, n: usize) -> Self {
        if w as f64 > n as f64 / LN_2 {
            Regime::SubExponential
        } else {
            Regime::Algebraic
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::SubExponential => "subexponential",
            Regime::Algebraic => "algebraic",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorBound {
    pub constants: ErrorBoundConstants,
    pub w: usize,
    pub eta: usize,
    pub subexp_bound: f64,
    pub algebraic_bound: f64,
    pub regime: Regime,
}

impl ErrorBound {
    /// The bound that holds in this `w` regime.
    pub fn applicable(&self) -> f64 {
        match self.regime {
            Regime::SubExponential => self.subexp_bound,
            Regime::Algebraic => self.algebraic_bound,
        }
    }
}

pub fn error_bound(sigma_star: f64, n: usize, m_tilde: f64, w: usize, eta: usize) -> Result<ErrorBound> {
    let constants = ErrorBoundConstants::new(sigma_star, n, m_tilde)?;
    if eta == 0 {
        return Err(Error::InvalidArgument("knot count must be positive".into()));
    }
    let e = eta as f64;
    Ok(ErrorBound {
        constants,
        w,
        eta,
        subexp_bound: constants.subexponential(e),
        algebraic_bound: constants.algebraic(e),
        regime: Regime::for_level(w, n),
    })
}
