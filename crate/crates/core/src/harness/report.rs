use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::bounds::{ledger, m_estimate, verify_bounds_by_sampling, BoundsInput, SamplingOptions, SamplingReport};
use crate::error::{Error, Result};
use crate::pde::{
    algebra_constant_estimate, discrete_h_norm, inverse_operator_norm, newton_solve, CgSettings, Discretization,
    GridField,
};
use crate::region::{error_bound, m_tilde, ErrorBound, RegionEstimate};
use crate::smolyak::{SparseGridPlan, SurplusStore};

use super::config::{BoundsBlock, RunConfig};
use super::study::{solve_knot, StudySetup};

/// Solution and discretization at `y = 0`.
pub struct NominalSolve {
    pub disc: Discretization,
    pub u0: GridField,
}

pub fn nominal_solve(setup: &StudySetup) -> Result<NominalSolve> {
    let y0 = vec![0.0; setup.dim()];
    let disc = Discretization::new(&setup.domain, &setup.map, &setup.coeffs, &y0, &setup.grid)?;
    let u0 = newton_solve(&disc, &GridField::zeros(&setup.grid), &setup.newton)?.u;
    Ok(NominalSolve { disc, u0 })
}

/// `(‖ξ‖_{L²}, max_j ‖∂_j ξ‖_{L²})` of a normalised Gaussian of width `s` and charge `q`.
pub fn gaussian_l2_norms(q: f64, s: f64) -> (f64, f64) {
    let l2 = q.abs() * (4.0 * PI * s * s).powf(-0.75);
    (l2, l2 / (s * 2f64.sqrt()))
}

/// Completes a bounds block from the run. `u_norm` defaults to `default_u_norm`.
pub fn bounds_input(
    setup: &StudySetup,
    block: &BoundsBlock,
    default_u_norm: f64,
    nominal: Option<&NominalSolve>,
) -> Result<BoundsInput> {
    let profile = setup.map.b_norms(&setup.domain, 32);
    let width = setup.coeffs.effective_width(setup.grid.h());
    let qmax = setup.coeffs.charges.iter().map(|c| c.charge.abs()).fold(0.0, f64::max);
    let (xi_l2, xi_grad_l2) = gaussian_l2_norms(qmax, width);
    let needs_solve = block.u0_norm.is_none();
    let owned;
    let nominal = match nominal {
        Some(n) => Some(n),
        None if needs_solve => {
            owned = nominal_solve(setup)?;
            Some(&owned)
        }
        None => None,
    };
    let tags = setup.grid.tags(&setup.domain);
    let u0_norm = match block.u0_norm {
        Some(v) => v,
        None => discrete_h_norm(&nominal.expect("solved above").u0, &tags).total(),
    };
    let c_max = match block.c_max {
        Some(v) => v,
        None => algebra_constant_estimate(&setup.grid, &tags, block.algebra_trials, 7),
    };
    Ok(BoundsInput {
        b1: block.b1.unwrap_or_else(|| profile.b_norm_1()),
        binf: block.binf.unwrap_or_else(|| profile.b_norm_inf()),
        y0_inf: block.y0_inf,
        y_inf: block.y_inf.unwrap_or(1.0),
        eps_max: setup.coeffs.eps.iter().copied().fold(0.0, f64::max),
        kappa2_max: setup.coeffs.kappa2.iter().copied().fold(0.0, f64::max),
        c_max,
        u0_norm,
        u_norm: block.u_norm.unwrap_or(default_u_norm),
        n_f: setup.coeffs.charges.len(),
        xi_l2,
        xi_grad_l2,
        mu_max: profile.sqrt_mu.iter().copied().fold(0.0, f64::max),
    })
}

pub struct BoundsReport {
    pub input: BoundsInput,
    pub csv: String,
    pub sampling: Option<SamplingReport>,
}

pub fn bounds_report(cfg: &RunConfig) -> Result<BoundsReport> {
    let setup = StudySetup::from_config(cfg)?;
    let block = cfg.bounds.clone().unwrap_or_default();
    let default_u = cfg.region.as_ref().map_or(1.0, |r| r.r);
    let input = bounds_input(&setup, &block, default_u, None)?;
    let mut csv = String::from("name,value\n");
    let fields = [
        ("input.b1", input.b1),
        ("input.binf", input.binf),
        ("input.y0_inf", input.y0_inf),
        ("input.y_inf", input.y_inf),
        ("input.eps_max", input.eps_max),
        ("input.kappa2_max", input.kappa2_max),
        ("input.c_max", input.c_max),
        ("input.u0_norm", input.u0_norm),
        ("input.u_norm", input.u_norm),
        ("input.n_f", input.n_f as f64),
        ("input.xi_l2", input.xi_l2),
        ("input.xi_grad_l2", input.xi_grad_l2),
        ("input.mu_max", input.mu_max),
    ];
    for (k, v) in fields {
        let _ = writeln!(csv, "{k},{v:.10e}");
    }
    for row in ledger(&input)? {
        let _ = writeln!(csv, "{},{:.10e}", row.name, row.value);
    }
    csv.push_str("# M_l2_component covers the L2 part only; trace terms are not bounded\n");
    let opts = SamplingOptions { trials: block.samples, ..SamplingOptions::default() };
    let sampling = if block.samples > 0 {
        Some(verify_bounds_by_sampling(&setup.domain, &setup.map, &input, &opts)?)
    } else {
        None
    };
    Ok(BoundsReport { input, csv, sampling })
}

pub struct RegionReport {
    pub estimate: RegionEstimate,
    pub m_tilde: f64,
    pub m_from_bounds: bool,
    pub a_from_operator: bool,
    pub bounds: Vec<ErrorBound>,
    pub text: String,
}

fn interpolant_m_tilde(setup: &StudySetup, cfg: &RunConfig, level: usize, sigma: f64, angles: usize) -> Result<f64> {
    let plan = SparseGridPlan::build(cfg.rule(), level, setup.dim())?;
    let values: Vec<f64> =
        plan.knots().par_iter().map(|k| solve_knot(setup, &k.point()).map(|s| s.qoi)).collect::<Result<_>>()?;
    let mut store = SurplusStore::new();
    for (k, v) in plan.knots().iter().zip(values) {
        store.insert(k.clone(), v);
    }
    let interp = plan.bind(&store)?;
    m_tilde(|z: &[Complex64]| Ok(interp.eval_complex(z)), sigma, setup.dim(), angles)
}

pub fn region_report(cfg: &RunConfig) -> Result<RegionReport> {
    let block = cfg
        .region
        .clone()
        .ok_or_else(|| Error::Config("the region subcommand needs a [region] block".into()))?;
    let setup = StudySetup::from_config(cfg)?;
    let nominal = if block.m.is_none() || block.a.is_none() { Some(nominal_solve(&setup)?) } else { None };
    let m = match block.m {
        Some(m) => m,
        None => {
            let b = cfg.bounds.clone().unwrap_or_default();
            m_estimate(&bounds_input(&setup, &b, block.r, nominal.as_ref())?)?
        }
    };
    let a = match block.a {
        Some(a) => a,
        None => {
            let n = nominal.as_ref().expect("solved above");
            let cg = CgSettings { tol: 1e-8, ..cfg.newton_settings().cg };
            inverse_operator_norm(&n.disc, &n.u0, block.power_iterations, &cg)?
        }
    };
    let estimate = RegionEstimate::new(m, a, block.r)?;
    let mt = match block.m_tilde {
        Some(v) => v,
        None => interpolant_m_tilde(&setup, cfg, block.m_tilde_level, estimate.sigma_star, block.angles)?,
    };
    let levels = if block.levels.is_empty() { cfg.sparse_grid.levels.clone() } else { block.levels.clone() };
    let bounds = levels
        .iter()
        .map(|&w| {
            let eta = SparseGridPlan::build(cfg.rule(), w, setup.dim())?.knot_count();
            error_bound(estimate.sigma_star, setup.dim(), mt, w, eta)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut text = String::new();
    let kv = |t: &mut String, k: &str, v: f64| {
        let _ = writeln!(t, "{k},{v:.10e}");
    };
    text.push_str("name,value\n");
    kv(&mut text, "M", m);
    kv(&mut text, "a", a);
    kv(&mut text, "R", block.r);
    kv(&mut text, "theta", estimate.theta);
    kv(&mut text, "xi", estimate.xi);
    kv(&mut text, "sigma_star", estimate.sigma_star);
    kv(&mut text, "M_tilde", mt);
    if let Some(b) = bounds.first() {
        let c = &b.constants;
        for (k, v) in [
            ("sigma", c.sigma),
            ("c2_tilde", c.c2_tilde),
            ("delta_star", c.delta_star),
            ("mu1", c.mu1),
            ("mu2", c.mu2),
            ("mu3", c.mu3),
            ("a_delta_sigma", c.a_delta_sigma),
            ("C1", c.c1),
            ("Q", c.q),
        ] {
            kv(&mut text, k, v);
        }
        if c.c1_perturbed {
            text.push_str("# C1 was exactly 1 and was shifted by 1e-12\n");
        }
    }
    text.push_str("# C(sigma) in C1 is taken equal to c2_tilde\n");
    if block.m.is_none() {
        text.push_str("# M estimated from the L2 perturbation bounds; trace terms not included\n");
    }
    if block.a.is_none() {
        let _ = writeln!(text, "# a estimated by inverse power iteration on the h = {:.4} grid", setup.grid.h());
    }
    if block.m_tilde.is_none() {
        text.push_str("# M_tilde is a sampled lower estimate on the interpolant\n");
    }
    text.push_str("\nw,eta,regime,subexp_bound,algebraic_bound,applicable\n");
    for b in &bounds {
        let _ = writeln!(
            text,
            "{},{},{},{:.10e},{:.10e},{:.10e}",
            b.w,
            b.eta,
            b.regime.as_str(),
            b.subexp_bound,
            b.algebraic_bound,
            b.applicable()
        );
    }
    Ok(RegionReport {
        estimate,
        m_tilde: mt,
        m_from_bounds: block.m.is_none(),
        a_from_operator: block.a.is_none(),
        bounds,
        text,
    })
}
