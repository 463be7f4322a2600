use std::f64::consts::PI;
use std::time::Instant;

use rand::Rng;
use serde::Serialize;
use serde_json::json;

use super::config::{Experiment, LadderStep, RunConfig};
use super::record::{input_hash, payload_hash, Assertion, RunRecord, Table};
use crate::correlator::{correlation_e, default_window, fit_decay, heuristic_e, x_grid, CorrelatorOptions};
use crate::error::{Error, Result};
use crate::fermion_engine::{
    build_mollifiers, convergence_bound_check, epsilon_ladder, placement_check, torus_classes, toy_strong_coupling,
    xi_n, xi_torus_ladder, Grid1d, MollifierPair, Placement, ToyObservable,
};
use crate::gauge_form::{free_transverse_check, FormAssembler};
use crate::lie_core::{build_su_basis, d_g, log_thresholds, ls_slope, mass_matrix, mass_spectrum, singular_fraction_scan, PhiVector};
use crate::mode_space::{build_lattice, constrained_basis, default_kappa, BoxSpec};
use crate::perturbation_boson::{theta_n, DiscreteVertexModel};
use crate::seeds;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const DEFAULT_PROPAGATOR_LAMBDA: [f64; 4] = [PI, PI, 0.6 * PI, 0.6 * PI];
pub const DEFAULT_PROPAGATOR_KAPPA: f64 = 1.5;
pub const DEFAULT_GRID_POINTS: usize = 4096;
pub const DEFAULT_MOLLIFIER_CELLS: [usize; 4] = [64, 32, 16, 8];
pub const DEFAULT_FERMION_CELLS: [usize; 5] = [64, 32, 16, 8, 4];

struct Output {
    payload: serde_json::Value,
    assertions: Vec<Assertion>,
    tables: Vec<Table>,
    attachments: Vec<(String, Vec<u8>)>,
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::Internal(e.to_string()))
}

pub fn run(cfg: &RunConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let start = Instant::now();
    let out = match cfg.experiment {
        Experiment::MassScan => mass_scan(cfg)?,
        Experiment::Propagator => propagator(cfg)?,
        Experiment::Correlate => correlate(cfg)?,
        Experiment::FermionCheck => fermion_check(cfg)?,
        Experiment::MollifierCheck => mollifier_check(cfg)?,
        Experiment::ToyStrong => toy_strong(cfg)?,
    };
    Ok(RunRecord {
        config: cfg.clone(),
        code_version: CODE_VERSION.to_string(),
        wall_time_s: start.elapsed().as_secs_f64(),
        input_hash: input_hash(cfg)?,
        payload_hash: payload_hash(&out.payload)?,
        assertions: out.assertions,
        payload: out.payload,
        tables: out.tables,
        attachments: out.attachments,
    })
}

fn mass_scan(cfg: &RunConfig) -> Result<Output> {
    let lie = build_su_basis(cfg.group_n)?;
    let dg = d_g(&lie)?;
    let expected = 2 * cfg.group_n - 2;
    let samples = cfg.samples.unwrap_or(10_000);
    let [lo, hi] = cfg.fit_window.unwrap_or([1e-3, 1e-1]);
    let thresholds = log_thresholds(lo, hi, 13);
    let scan = singular_fraction_scan(&lie, samples, &thresholds, (lo, hi), cfg.seed)?;
    let spectrum = mass_spectrum(&mass_matrix(&lie, &PhiVector::canonical(lie.dim_g)));
    let mut table = Table::new("scan", &["threshold", "fraction"]);
    for (t, p) in &scan.table {
        table.push([format!("{t:e}"), format!("{p:e}")]);
    }
    Ok(Output {
        payload: json!({
            "n": cfg.group_n,
            "dim_g": lie.dim_g,
            "d_g": dg,
            "canonical_spectrum": spectrum.eigenvalues,
            "scan": to_value(&scan)?,
        }),
        assertions: vec![Assertion::new("d_g = 2n - 2", dg == expected, format!("d_g = {dg}, expected {expected}"))],
        tables: vec![table],
        attachments: Vec::new(),
    })
}

fn propagator(cfg: &RunConfig) -> Result<Output> {
    let lie = build_su_basis(cfg.group_n)?;
    let bx = BoxSpec::new(cfg.lambda.unwrap_or(DEFAULT_PROPAGATOR_LAMBDA))?;
    let lat = build_lattice(bx, cfg.kappa.unwrap_or(DEFAULT_PROPAGATOR_KAPPA))?;
    let basis = constrained_basis(&lat, lie.dim_g);
    let asm = FormAssembler::new(&lat, &basis, &lie)?;
    let draws = cfg.samples.unwrap_or(10);
    let mut table = Table::new("draws", &["draw", "mu", "sigma_min", "inverse_norm"]);
    let mut worst = f64::INFINITY;
    for s in 0..draws {
        let mut rng = seeds::stream(cfg.seed, "propagator-draw", s as u64);
        let phi = PhiVector::sample(lie.dim_g, &mut rng);
        let mu: f64 = rng.random_range(-10.0..10.0);
        let nd = asm.assemble(&phi, mu)?.nondegeneracy();
        worst = worst.min(nd.sigma_min);
        table.push([s.to_string(), format!("{mu:e}"), format!("{:e}", nd.sigma_min), format!("{:e}", nd.inverse_norm)]);
    }
    let free = asm.assemble(&PhiVector::zeros(lie.dim_g), cfg.mu)?.invert()?;
    let check = free_transverse_check(&free)?;
    let mut attachments = Vec::new();
    if cfg.dump {
        let mut bytes = Vec::new();
        free.dump(&mut bytes)?;
        attachments.push(("propagator.bin".to_string(), bytes));
    }
    let (a_dim, f_dim) = asm.dims();
    Ok(Output {
        payload: json!({
            "lattice": to_value(&lat.summary())?,
            "a_dim": a_dim,
            "f_dim": f_dim,
            "draws": draws,
            "min_sigma": worst,
            "free_check": to_value(&check)?,
            "free_residual": free.residual(),
        }),
        assertions: vec![
            Assertion::new("sigma_min > 1e-8", worst > 1e-8, format!("min sigma_min = {worst:e}")),
            Assertion::new(
                "free transverse propagator",
                check.max_rel_error < 1e-10,
                format!("max relative error {:e} over {} modes", check.max_rel_error, check.modes_checked),
            ),
        ],
        tables: vec![table],
        attachments,
    })
}

fn default_ladder() -> Result<Vec<LadderStep>> {
    [(2.0 * PI, 2), (3.0 * PI, 3)]
        .into_iter()
        .map(|(l, m)| Ok(LadderStep { lambda: l, kappa: default_kappa(&BoxSpec::cube(l)?, m) }))
        .collect()
}

fn correlate(cfg: &RunConfig) -> Result<Output> {
    let lie = build_su_basis(cfg.group_n)?;
    let ladder = match &cfg.ladder {
        Some(l) => l.clone(),
        None => default_ladder()?,
    };
    let samples = cfg.samples.unwrap_or(16);
    let mut table = Table::new("correlation", &["step", "lambda", "kappa", "x", "mean", "stderr", "heuristic"]);
    let mut steps = Vec::new();
    let mut fits: Vec<Option<(f64, f64)>> = Vec::new();
    for (k, step) in ladder.iter().enumerate() {
        let lat = build_lattice(BoxSpec::cube(step.lambda)?, step.kappa)?;
        let window = cfg.fit_window.map(|[a, b]| (a, b)).unwrap_or_else(|| default_window(&lat));
        let xs = x_grid(window.0, window.1, 8);
        let seed = seeds::derive_seed(cfg.seed, "correlate-step", k as u64);
        let est = correlation_e(&lat, &lie, cfg.mu, &xs, samples, seed, &CorrelatorOptions::default())?;
        let heur = heuristic_e(&lat, &lie, cfg.mu, &xs, samples, seed)?;
        for (j, x) in xs.iter().enumerate() {
            table.push([
                k.to_string(),
                format!("{:e}", step.lambda),
                format!("{:e}", step.kappa),
                format!("{x:e}"),
                format!("{:e}", est.mean[j]),
                format!("{:e}", est.stderr[j]),
                format!("{:e}", heur.mean[j]),
            ]);
        }
        let fit = fit_decay(&est, window);
        fits.push(fit.as_ref().ok().map(|f| (f.d_hat, f.d_hat_err)));
        steps.push(json!({
            "lambda": step.lambda,
            "kappa": step.kappa,
            "estimate": to_value(&est)?,
            "heuristic": to_value(&heur)?,
            "fit": match &fit { Ok(f) => to_value(f)?, Err(e) => json!({ "error": e.to_string() }) },
        }));
    }
    let stable = fits.windows(2).all(|w| match (w[0], w[1]) {
        (Some((a, ea)), Some((b, eb))) => (a - b).abs() <= 2.0 * (ea * ea + eb * eb).sqrt(),
        _ => false,
    });
    Ok(Output {
        payload: json!({ "mu": cfg.mu, "samples": samples, "steps": steps, "ladder_stable": stable }),
        assertions: Vec::new(),
        tables: vec![table],
        attachments: Vec::new(),
    })
}

fn mollifier_grid(cfg: &RunConfig) -> Result<Grid1d> {
    Grid1d::periodic(PI, cfg.grid_points.unwrap_or(DEFAULT_GRID_POINTS)).map_err(|e| Error::Config(format!("field `grid_points`: {e}")))
}

fn ladder_mollifiers(cfg: &RunConfig, grid: &Grid1d, default: &[usize]) -> Result<Vec<MollifierPair>> {
    let cells = cfg.epsilon_cells.clone().unwrap_or_else(|| default.to_vec());
    epsilon_ladder(grid, &cells)
        .into_iter()
        .map(|e| build_mollifiers(e, *grid).map_err(|err| Error::Config(format!("field `epsilon_cells`: {err}"))))
        .collect()
}

fn mollifier_check(cfg: &RunConfig) -> Result<Output> {
    let grid = mollifier_grid(cfg)?;
    let molls = ladder_mollifiers(cfg, &grid, &DEFAULT_MOLLIFIER_CELLS)?;
    let norms: Vec<_> = molls.iter().map(|m| m.norms()).collect();
    let mut table = Table::new(
        "norms",
        &["epsilon", "h", "delta_tilde_l1", "d_tilde_sup", "containment_exact", "g_l1", "g_l1_over_eps4", "delta_l2", "d_l2"],
    );
    for n in &norms {
        table.push([
            format!("{:e}", n.epsilon),
            format!("{:e}", n.h),
            format!("{:.17e}", n.delta_tilde_l1),
            format!("{:.17e}", n.d_tilde_sup),
            n.containment_exact.to_string(),
            format!("{:e}", n.g_l1),
            format!("{:e}", n.g_l1_over_eps4),
            format!("{:e}", n.delta_l2),
            format!("{:e}", n.d_l2),
        ]);
    }
    let l1_ok = norms.iter().all(|n| (n.delta_tilde_l1 - 1.0).abs() <= 1e-12);
    let sup_ok = norms.iter().all(|n| n.d_tilde_sup == 1.0);
    let cont_ok = norms.iter().all(|n| n.containment_exact);
    let ratios: Vec<f64> = norms.iter().map(|n| n.g_l1_over_eps4).collect();
    let drift = ratios.windows(2).map(|w| (w[1] / w[0] - 1.0).abs()).fold(0.0, f64::max);
    Ok(Output {
        payload: json!({ "grid": to_value(&grid)?, "norms": to_value(&norms)? }),
        assertions: vec![
            Assertion::new("||delta_tilde||_1 = 1", l1_ok, ""),
            Assertion::new("||D_tilde||_inf = 1", sup_ok, ""),
            Assertion::new("delta_tilde * D_tilde = delta_tilde", cont_ok, ""),
            Assertion::new("||g||_1 / eps^4 stable", drift <= 0.25, format!("max successive drift {drift:.3e}")),
        ],
        tables: vec![table],
        attachments: Vec::new(),
    })
}

/// Log-log slope of |Ξ₁²| against ε.
pub fn fitted_order(eps: &[f64], xi2_abs: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = eps.iter().zip(xi2_abs).filter(|(_, v)| **v > 0.0).map(|(e, v)| (e.ln(), v.ln())).collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    ls_slope(&pts)
}

fn fermion_check(cfg: &RunConfig) -> Result<Output> {
    if cfg.group_n != 2 {
        return Err(Error::Config(format!("field `group_n`: fermion-check supports su(2) only, got {}", cfg.group_n)));
    }
    let lie = build_su_basis(2)?;
    let grid = mollifier_grid(cfg)?;
    let molls = ladder_mollifiers(cfg, &grid, &DEFAULT_FERMION_CELLS)?;
    let model = DiscreteVertexModel::identity(&lie, 1, grid.length().powi(4));
    let theta1 = theta_n(&model, 1)?.value;
    let classes = torus_classes(&model)?;
    let ladder = xi_torus_ladder(&model, &molls)?;
    let mut table = Table::new("ladder", &["epsilon", "xi_re", "xi_im", "xi1_re", "xi2_re", "gap", "rel_gap"]);
    let mut gaps = Vec::new();
    for r in &ladder {
        let gap = (r.xi - theta1).norm();
        gaps.push(gap);
        table.push([
            format!("{:e}", r.epsilon),
            format!("{:e}", r.xi.re),
            format!("{:e}", r.xi.im),
            format!("{:e}", r.xi1.unwrap_or_default().re),
            format!("{:e}", r.xi2.unwrap_or_default().re),
            format!("{gap:e}"),
            format!("{:e}", gap / theta1.norm()),
        ]);
    }
    let eps: Vec<f64> = ladder.iter().map(|r| r.epsilon).collect();
    let xi2: Vec<f64> = ladder.iter().map(|r| r.xi2.unwrap_or_default().norm()).collect();
    let order = fitted_order(&eps, &xi2);
    let final_rel = gaps.last().copied().unwrap_or(f64::NAN) / theta1.norm();
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    let xi1_match = ladder.iter().all(|r| (r.xi1.unwrap_or_default() - theta1).norm() <= 1e-10 * theta1.norm());

    let finest = molls.last().ok_or_else(|| Error::Config("field `epsilon_cells`: empty".into()))?;
    let coincident: Vec<_> = (1..=2).map(|n| xi_n(&model, finest, n, Placement::Coincident)).collect::<Result<_>>()?;
    let conv = convergence_bound_check(&coincident)?;
    let torus_c = ladder.last().map(|r| r.xi.norm() * 12.0).unwrap_or(f64::NAN);
    let placements = placement_check(&model, finest, cfg.samples.unwrap_or(100), cfg.seed)?;

    Ok(Output {
        payload: json!({
            "theta1": to_value(&theta1)?,
            "classes": to_value(&classes)?,
            "ladder": to_value(&ladder)?,
            "fitted_order": order,
            "final_relative_gap": final_rel,
            "coincident": to_value(&coincident)?,
            "convergence": to_value(&conv)?,
            "torus_c": torus_c,
            "placement_check": to_value(&placements)?,
        }),
        assertions: vec![
            Assertion::new("xi1 = theta1", xi1_match, ""),
            Assertion::new("gap decreasing", decreasing, format!("{gaps:?}")),
            Assertion::new("final relative gap < 1e-3", final_rel < 1e-3, format!("{final_rel:e}")),
            Assertion::new("order of xi2 >= 3.5", order >= 3.5, format!("{order:.4}")),
            Assertion::new("convergence bound", conv.pass, conv.note.clone().unwrap_or_default()),
            Assertion::new(
                "pairing sum = Wick determinant",
                placements.max_rel_diff < 1e-9,
                format!("{:e}", placements.max_rel_diff),
            ),
            Assertion::new("Berezin factor bound", placements.max_bound_ratio <= 1.0, format!("{:e}", placements.max_bound_ratio)),
        ],
        tables: vec![table],
        attachments: Vec::new(),
    })
}

fn toy_strong(cfg: &RunConfig) -> Result<Output> {
    let lie = build_su_basis(cfg.group_n)?;
    let sizes: Vec<usize> = match cfg.points {
        Some(p) => vec![p],
        None => vec![1, 2],
    };
    let coupling = cfg.coupling.unwrap_or(1.0);
    let mut results = Vec::new();
    let mut assertions = Vec::new();
    for np in sizes {
        let model = DiscreteVertexModel::identity(&lie, np, 1.0);
        let obs = ToyObservable { i: 0, alpha: 1 % lie.dim_g, x: 0, j: 1, gamma: 2 % lie.dim_g, y: np - 1 };
        let r = toy_strong_coupling(&model, coupling, obs)?;
        assertions.push(Assertion::new(
            &format!("lowest order vanishes ({np} point)"),
            r.lowest_order.norm() == 0.0,
            format!("{}", r.lowest_order),
        ));
        results.push(r);
    }
    Ok(Output { payload: json!({ "results": to_value(&results)? }), assertions, tables: Vec::new(), attachments: Vec::new() })
}
