use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{check_assumptions, AssumptionSampling, DomainMap, ReferenceDomain};
use crate::pde::{newton_solve, qoi_integral, Discretization, Grid, GridField, NewtonSettings, PbeCoefficients};
use crate::smolyak::{KnotKey, SparseGridPlan, SurplusStore};

use super::charges::{ingest_charges, shifted_charges};
use super::config::RunConfig;

/// Everything fixed across knots.
#[derive(Clone, Debug)]
pub struct StudySetup {
    pub domain: ReferenceDomain,
    pub map: DomainMap,
    pub coeffs: PbeCoefficients,
    pub grid: Grid,
    pub newton: NewtonSettings,
    pub alpha: Vec<f64>,
    pub margin: f64,
}

impl StudySetup {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let domain = cfg.domain()?;
        let mut coeffs = cfg.coefficients();
        coeffs.charges = ingest_charges(cfg)?.charges;
        Ok(Self {
            map: cfg.shift_map()?,
            grid: Grid::covering(&domain, cfg.grid.n)?,
            domain,
            coeffs,
            newton: cfg.newton_settings(),
            alpha: cfg.stochastic.alpha.clone(),
            margin: cfg.charges.margin,
        })
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }
}

#[derive(Clone, Debug)]
pub struct KnotSolve {
    pub u: GridField,
    /// `∫_{D(y)} u dx`, evaluated on the reference box as `∫ û det J`.
    pub qoi: f64,
    pub newton_steps: usize,
    pub residual_history: Vec<f64>,
    pub seconds: f64,
}

/// Solves the pulled-back NPBE at knot `y ∈ [-1, 1]^N`; the physical shift is
/// `sqrt(3) alpha_k y_k` per axis.
pub fn solve_knot(setup: &StudySetup, y: &[f64]) -> Result<KnotSolve> {
    let start = Instant::now();
    let big_y: Vec<f64> = y.iter().map(|v| 3f64.sqrt() * v).collect();
    // same checks as the physical shift even though the map moves the charges
    shifted_charges(&setup.coeffs.charges, &setup.alpha, &big_y, &setup.domain, setup.margin)?;
    let disc = Discretization::new(&setup.domain, &setup.map, &setup.coeffs, y, &setup.grid)?;
    let sol = newton_solve(&disc, &GridField::zeros(&setup.grid), &setup.newton)?;
    let weighted = GridField::from_values(
        &setup.grid,
        sol.u.values().iter().zip(&disc.det_j).map(|(u, d)| u * d).collect(),
    )?;
    Ok(KnotSolve {
        qoi: qoi_integral(&weighted),
        newton_steps: sol.steps,
        residual_history: sol.residual_history,
        u: sol.u,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRecord {
    pub w: usize,
    pub eta: usize,
    /// `None` when a knot of this level failed.
    pub qoi_mean: Option<f64>,
    pub error: Option<f64>,
    pub wall_time: Option<f64>,
    pub failed_knots: usize,
}

#[derive(Clone, Debug)]
pub struct StudyOutput {
    pub records: Vec<ConvergenceRecord>,
    pub reference_mean: f64,
    pub reference_eta: usize,
    pub store: SurplusStore,
    pub csv: String,
}

struct KnotOutcome {
    qoi: Option<f64>,
    seconds: f64,
}

pub fn run_study(cfg: &RunConfig) -> Result<StudyOutput> {
    let setup = StudySetup::from_config(cfg)?;
    let report = check_assumptions(&setup.domain, &setup.map, &setup.coeffs, &AssumptionSampling::default())?;
    if !report.b_small {
        warn!("‖B‖₁ = {:.4} is not below 1/4; the analyticity guarantee does not apply", report.b_norm_1);
    }
    let rule = cfg.rule();
    let dim = setup.dim();
    let mut levels: Vec<usize> = cfg.sparse_grid.levels.clone();
    levels.sort_unstable();
    levels.dedup();
    let plans: Vec<SparseGridPlan> =
        levels.iter().map(|&w| SparseGridPlan::build(rule, w, dim)).collect::<Result<_>>()?;
    let reference = SparseGridPlan::build(rule, cfg.sparse_grid.reference, dim)?;

    // nested plans share knots; every distinct knot is solved exactly once
    let all: BTreeSet<KnotKey> =
        plans.iter().chain(std::iter::once(&reference)).flat_map(|p| p.knots().iter().cloned()).collect();
    let all: Vec<KnotKey> = all.into_iter().collect();
    info!("{} distinct knots over {} levels plus reference {}", all.len(), levels.len(), cfg.sparse_grid.reference);

    let solve_all = || -> Vec<KnotOutcome> {
        all.par_iter()
            .map(|k| match solve_knot(&setup, &k.point()) {
                Ok(s) => KnotOutcome { qoi: Some(s.qoi), seconds: s.seconds },
                Err(e) => {
                    warn!("knot {k} failed: {e}");
                    KnotOutcome { qoi: None, seconds: 0.0 }
                }
            })
            .collect()
    };
    let outcomes = if cfg.solver.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.solver.threads)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(solve_all)
    } else {
        solve_all()
    };

    let mut store = SurplusStore::new();
    let mut seconds = BTreeMap::new();
    for (k, o) in all.iter().zip(&outcomes) {
        if let Some(q) = o.qoi {
            store.insert(k.clone(), q);
        }
        seconds.insert(k.clone(), o.seconds);
    }
    let reference_mean = reference.integrate(&store).map_err(|e| match e {
        Error::IncompleteStore(k) => Error::Config(format!("reference level has a failed knot ({k})")),
        other => other,
    })?;

    let records = plans
        .iter()
        .map(|plan| {
            let failed = plan.knots().iter().filter(|k| store.get(k).is_none()).count();
            let qoi_mean = if failed == 0 { plan.integrate(&store).ok() } else { None };
            let wall = cfg.output.record_wall_time.then(|| plan.knots().iter().map(|k| seconds[k]).sum::<f64>());
            ConvergenceRecord {
                w: plan.level(),
                eta: plan.knot_count(),
                qoi_mean,
                error: qoi_mean.map(|q| (reference_mean - q).abs()),
                wall_time: wall,
                failed_knots: failed,
            }
        })
        .collect::<Vec<_>>();
    let csv = records_csv(&records);
    Ok(StudyOutput { records, reference_mean, reference_eta: reference.knot_count(), store, csv })
}

pub const CSV_HEADER: &str = "w,eta,qoi_mean,error,wall_time_s";

pub fn records_csv(records: &[ConvergenceRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        let num = |v: Option<f64>| v.map(|x| format!("{x:.17e}"));
        let (q, e) = if r.failed_knots > 0 {
            ("failed".to_string(), "failed".to_string())
        } else {
            (num(r.qoi_mean).unwrap_or_default(), num(r.error).unwrap_or_default())
        };
        let t = r.wall_time.map(|t| format!("{t:.3}")).unwrap_or_default();
        let _ = writeln!(s, "{},{},{q},{e},{t}", r.w, r.eta);
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateFit {
    pub algebraic_slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub used: usize,
    /// Levels dropped for missing or nonpositive error.
    pub excluded: Vec<usize>,
}

/// Least-squares fit of `log error` against `log eta`.
pub fn fit_rate(records: &[ConvergenceRecord]) -> Result<RateFit> {
    let mut pts = Vec::new();
    let mut excluded = Vec::new();
    for r in records {
        match r.error {
            Some(e) if e > 0.0 && r.eta > 0 => pts.push(((r.eta as f64).ln(), e.ln())),
            _ => excluded.push(r.w),
        }
    }
    if pts.len() < 3 {
        return Err(Error::InvalidArgument(format!("rate fit needs 3 positive errors, have {}", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("rate fit needs distinct knot counts".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(RateFit { algebraic_slope: slope, intercept: my - slope * mx, r_squared, used: pts.len(), excluded })
}

/// Log-log line plot of error against knot count.
pub fn records_svg(records: &[ConvergenceRecord]) -> String {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| r.error.filter(|e| *e > 0.0).map(|e| ((r.eta as f64).log10(), e.log10())))
        .collect();
    let (w, h, pad) = (480.0, 360.0, 50.0);
    let mut s = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n");
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    if pts.is_empty() {
        s.push_str("</svg>\n");
        return s;
    }
    let span = |f: fn(&(f64, f64)) -> f64| {
        let lo = pts.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    };
    let (x0, x1) = span(|p| p.0);
    let (y0, y1) = span(|p| p.1);
    let px = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let _ = writeln!(
        s,
        "<line x1=\"{pad}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/><line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{}\" stroke=\"black\"/>",
        h - pad,
        w - pad,
        h - pad,
        h - pad
    );
    let line: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1))).collect();
    let _ = writeln!(s, "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{}\"/>", line.join(" "));
    for p in &pts {
        let _ = writeln!(s, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"steelblue\"/>", px(p.0), py(p.1));
    }
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">log10 knots</text>", w / 2.0, h - 12.0);
    let _ = writeln!(s, "<text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">log10 error</text>", h / 2.0, h / 2.0);
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(w: usize, eta: usize, e: f64) -> ConvergenceRecord {
        ConvergenceRecord { w, eta, qoi_mean: Some(0.0), error: Some(e), wall_time: None, failed_knots: 0 }
    }

    #[test]
    fn exact_power_law() {
        let recs: Vec<_> = [5usize, 13, 29, 65].iter().enumerate().map(|(i, &n)| rec(i + 1, n, (n as f64).powi(-2))).collect();
        let fit = fit_rate(&recs).unwrap();
        assert!((fit.algebraic_slope + 2.0).abs() < 1e-6);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_errors_and_exclusions() {
        let mut recs: Vec<_> = [5usize, 13, 29].iter().map(|&n| rec(1, n, 0.3)).collect();
        assert_eq!(fit_rate(&recs).unwrap().algebraic_slope, 0.0);
        recs.push(rec(9, 65, 0.0));
        assert_eq!(fit_rate(&recs).unwrap().excluded, vec![9]);
        recs.truncate(2);
        assert!(fit_rate(&recs).is_err());
    }

    #[test]
    fn csv_layout() {
        let mut r = rec(2, 13, 0.5);
        let mut failed = rec(3, 29, 0.0);
        failed.failed_knots = 1;
        r.wall_time = Some(1.25);
        let csv = records_csv(&[r, failed]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert!(lines[1].starts_with("2,13,") && lines[1].ends_with(",1.250"));
        assert_eq!(lines[2], "3,29,failed,failed,");
    }

    #[test]
    fn svg_is_well_formed() {
        let s = records_svg(&[rec(1, 5, 0.1), rec(2, 13, 0.01)]);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("polyline"));
    }
}
