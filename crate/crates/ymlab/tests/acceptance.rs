//! Acceptance runner: one PASS/FAIL line per criterion.
//!
//! Exits 0 even when criteria fail so that the rest of the workspace tests
//! still run; set YMLAB_ACCEPTANCE_STRICT=1 to exit 1 on any FAIL.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ymlab::correlator::{correlation_e, default_window, fit_decay, x_grid, CorrelatorOptions, DecayFit};
use ymlab::fermion_engine::grassmann::{berezin_brute, berezin_wick, FieldKind, Generator, GeneratorSet, GrassmannPolynomial, C64};
use ymlab::fermion_engine::{
    build_mollifiers, convergence_bound_check, epsilon_ladder, placement_check, toy_strong_coupling, xi_n, xi_torus_ladder, Grid1d,
    Placement, ToyObservable,
};
use ymlab::gauge_form::{free_transverse_check, FormAssembler};
use ymlab::harness::commands::fitted_order;
use ymlab::lie_core::{build_su_basis, d_g, log_thresholds, mass_matrix, mass_spectrum, singular_fraction_scan, PhiVector};
use ymlab::mode_space::{build_lattice, constrained_basis, default_kappa, BoxSpec};
use ymlab::perturbation_boson::{theta_n, DiscreteVertexModel};
use ymlab::seeds;

struct Outcome {
    pass: bool,
    detail: String,
}

fn ok(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn c1() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in 2..=4 {
        let lie = build_su_basis(n).unwrap();
        worst = worst.max(lie.antisymmetry_residual()).max(lie.jacobi_residual());
    }
    ok(worst < 1e-12, format!("max residual {worst:.2e}"))
}

fn c2() -> Outcome {
    let got: Vec<usize> = (2..=4).map(|n| d_g(&build_su_basis(n).unwrap()).unwrap()).collect();
    ok(got == vec![2, 4, 6], format!("d_G(su(2..4)) = {got:?}, expected [2, 4, 6]"))
}

fn c3() -> Outcome {
    let lie = build_su_basis(2).unwrap();
    let mut ev = mass_spectrum(&mass_matrix(&lie, &PhiVector::canonical(3))).eigenvalues;
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let expect = [-1.0, -1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 2.0];
    let err = ev.iter().zip(expect).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ok(ev.len() == 9 && err < 1e-10, format!("max deviation {err:.2e}"))
}

fn c4() -> Outcome {
    let lie = build_su_basis(2).unwrap();
    let scan = singular_fraction_scan(&lie, 100_000, &log_thresholds(1e-3, 1e-1, 13), (1e-3, 1e-1), 4).unwrap();
    ok((scan.slope - 2.0).abs() <= 0.3, format!("slope {:.3} over {} thresholds (target 2.0 ± 0.3)", scan.slope, scan.points_in_fit))
}

fn c5() -> Outcome {
    let lie = build_su_basis(2).unwrap();
    let lat = build_lattice(BoxSpec::new([PI, PI, 0.6 * PI, 0.6 * PI]).unwrap(), 1.5).unwrap();
    let modes = lat.a_modes.len() + lat.f_modes.len();
    let basis = constrained_basis(&lat, lie.dim_g);
    let asm = FormAssembler::new(&lat, &basis, &lie).unwrap();
    let mut min_sigma = f64::INFINITY;
    for s in 0..100u64 {
        let mut rng = seeds::stream(5, "acceptance-nondegeneracy", s);
        let phi = PhiVector::sample(lie.dim_g, &mut rng);
        let mu: f64 = rng.random_range(-10.0..10.0);
        min_sigma = min_sigma.min(asm.assemble(&phi, mu).unwrap().nondegeneracy().sigma_min);
    }
    let mut worst_ratio: f64 = 0.0;
    let mut lowest_ratio = f64::INFINITY;
    for s in 0..10u64 {
        let mut rng = seeds::stream(5, "acceptance-uniformity", s);
        let phi = PhiVector::sample(lie.dim_g, &mut rng);
        let base = asm.assemble(&phi, 0.0).unwrap().nondegeneracy().inverse_norm;
        let top = [1.0, 10.0, 100.0]
            .iter()
            .map(|&mu| asm.assemble(&phi, mu).unwrap().nondegeneracy().inverse_norm)
            .fold(0.0, f64::max);
        worst_ratio = worst_ratio.max(top / base);
        lowest_ratio = lowest_ratio.min(top / base);
    }
    ok(
        modes <= 500 && min_sigma > 1e-8 && worst_ratio <= 2.0,
        format!(
            "{modes} modes, min sigma_min {min_sigma:.3e}, max_mu ||Q^-1|| / ||Q^-1(mu=0)|| in [{lowest_ratio:.3}, {worst_ratio:.3}] (upper bound 2)"
        ),
    )
}

fn c6() -> Outcome {
    let lie = build_su_basis(2).unwrap();
    let lat = build_lattice(BoxSpec::new([PI, PI, 0.6 * PI, 0.6 * PI]).unwrap(), 1.5).unwrap();
    let basis = constrained_basis(&lat, lie.dim_g);
    let asm = FormAssembler::new(&lat, &basis, &lie).unwrap();
    let props = asm.assemble(&PhiVector::zeros(lie.dim_g), 0.0).unwrap().invert().unwrap();
    let chk = free_transverse_check(&props).unwrap();
    ok(
        chk.modes_checked > 0 && chk.max_rel_error < 1e-10,
        format!("{} modes, max relative error {:.2e}", chk.modes_checked, chk.max_rel_error),
    )
}

fn c7() -> Outcome {
    let grid = Grid1d::periodic(PI, 4096).unwrap();
    let mut pass = true;
    let mut ratios = Vec::new();
    let mut worst_l1: f64 = 0.0;
    for eps in epsilon_ladder(&grid, &[64, 32, 16, 8]) {
        let n = build_mollifiers(eps, grid).unwrap().norms();
        worst_l1 = worst_l1.max((n.delta_tilde_l1 - 1.0).abs());
        pass &= (n.delta_tilde_l1 - 1.0).abs() <= 1e-12 && n.d_tilde_sup == 1.0 && n.containment_exact;
        ratios.push(n.g_l1_over_eps4);
    }
    let drift = ratios.windows(2).map(|w| (w[1] / w[0] - 1.0).abs()).fold(0.0, f64::max);
    ok(
        pass && drift <= 0.25,
        format!("| ||d~||_1 - 1 | <= {worst_l1:.1e}, sup and containment exact: {pass}, ||D~*d~||_1/eps^4 = {:.4} (drift {drift:.1e})", ratios[0]),
    )
}

fn c8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let mut nonzero = 0;
    for _ in 0..100 {
        let pairs = rng.random_range(1..=6usize);
        let mut gens = Vec::new();
        for barred in [false, true] {
            for k in 0..pairs {
                let kind = if k % 2 == 0 { FieldKind::H } else { FieldKind::Psi };
                gens.push(Generator { kind, barred, index: k / 2, point: 0 });
            }
        }
        let set = GeneratorSet::new(gens).unwrap();
        let n = set.len();
        let mut poly = GrassmannPolynomial::zero(n);
        for _ in 0..rng.random_range(1..20) {
            let deg = 2 * rng.random_range(0..=pairs);
            let mut ids: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                ids.swap(i, rng.random_range(0..=i));
            }
            ids.truncate(deg);
            poly = poly.add(&GrassmannPolynomial::monomial(n, &ids, C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))));
        }
        let a = berezin_brute(&poly, &set).unwrap();
        let b = berezin_wick(&poly, &set);
        if a.norm() > 0.0 {
            nonzero += 1;
        }
        worst = worst.max((a - b).norm());
    }
    ok(worst <= 1e-12, format!("max |brute - wick| {worst:.2e} ({nonzero} nonzero instances)"))
}

fn fermion_setup() -> (DiscreteVertexModel, Grid1d) {
    let lie = build_su_basis(2).unwrap();
    let grid = Grid1d::periodic(PI, 4096).unwrap();
    (DiscreteVertexModel::identity(&lie, 1, grid.length().powi(4)), grid)
}

fn c9() -> Outcome {
    let (model, grid) = fermion_setup();
    let theta = theta_n(&model, 1).unwrap().value;
    let molls: Vec<_> = epsilon_ladder(&grid, &[64, 32, 16, 8, 4]).into_iter().map(|e| build_mollifiers(e, grid).unwrap()).collect();
    let ladder = xi_torus_ladder(&model, &molls).unwrap();
    let gaps: Vec<f64> = ladder.iter().map(|r| (r.xi - theta).norm()).collect();
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    let rel = gaps.last().unwrap() / theta.norm();
    let eps: Vec<f64> = ladder.iter().map(|r| r.epsilon).collect();
    let xi2: Vec<f64> = ladder.iter().map(|r| r.xi2.unwrap().norm()).collect();
    let order = fitted_order(&eps, &xi2);
    let coincident = xi_n(&model, &molls[4], 1, Placement::Coincident).unwrap().xi;
    ok(
        decreasing && rel < 1e-3 && order >= 3.5,
        format!(
            "Theta_1 = {:.6e}, gaps decreasing: {decreasing}, final relative gap {rel:.2e}, order {order:.3}; coincident Xi_1 = {}",
            theta.re, coincident
        ),
    )
}

fn c10() -> Outcome {
    let (model, grid) = fermion_setup();
    let moll = build_mollifiers(epsilon_ladder(&grid, &[8])[0], grid).unwrap();
    let coincident: Vec<_> = (1..=2).map(|n| xi_n(&model, &moll, n, Placement::Coincident).unwrap()).collect();
    let conv = convergence_bound_check(&coincident).unwrap();
    let torus_c = xi_n(&model, &moll, 1, Placement::Torus).unwrap().xi.norm() * 12.0;
    let placements = placement_check(&model, &moll, 200, 10).unwrap();
    ok(
        conv.pass && placements.max_bound_ratio <= 1.0 && placements.nonzero_samples > 0,
        format!(
            "C = {:.3e} (degenerate: {}), |Xi_2| = {:.1e}; max |B|/bound = {:.2e} over {} factors; torus C = {torus_c:.4e}",
            conv.c,
            conv.degenerate,
            coincident[1].xi.norm(),
            placements.max_bound_ratio,
            placements.samples
        ),
    )
}

fn fit_at(l: f64, m: u32, mu: f64, samples: usize) -> (Result<DecayFit, String>, f64) {
    let lie = build_su_basis(2).unwrap();
    let bx = BoxSpec::cube(l).unwrap();
    let kappa = default_kappa(&bx, m);
    let lat = build_lattice(bx, kappa).unwrap();
    let w = default_window(&lat);
    let xs = x_grid(w.0, w.1, 12);
    let est = correlation_e(&lat, &lie, mu, &xs, samples, 11, &CorrelatorOptions::default()).unwrap();
    (fit_decay(&est, w).map_err(|e| e.to_string()), kappa)
}

fn show(f: &Result<DecayFit, String>) -> String {
    match f {
        Ok(f) => format!("{:.3} ± {:.3}", f.d_hat, f.d_hat_err),
        Err(e) => format!("refused ({e})"),
    }
}

fn c11() -> Outcome {
    let (base, kappa) = fit_at(16.0 * PI, 8, 0.0, 1);
    let (doubled, _) = fit_at(32.0 * PI, 16, 0.0, 1);
    let free_pass = match (&base, &doubled) {
        (Ok(a), Ok(b)) => a.d_hat.abs() <= 0.2 && b.d_hat.abs() < a.d_hat.abs(),
        _ => false,
    };
    let ladder: Vec<_> = [(2.0, 2), (3.0, 3), (4.0, 4)].iter().map(|&(l, m)| fit_at(l * PI, m, 1.0, 64).0).collect();
    let stable = ladder.windows(2).all(|w| match (&w[0], &w[1]) {
        (Ok(a), Ok(b)) => (a.d_hat - b.d_hat).abs() <= 2.0 * (a.d_hat_err.powi(2) + b.d_hat_err.powi(2)).sqrt(),
        _ => false,
    });
    ok(
        free_pass && stable,
        format!(
            "mu=0: d^(16pi, kappa={kappa:.3}) = {}, d^(32pi) = {}; mu=1 ladder: [{}] stable: {stable}",
            show(&base),
            show(&doubled),
            ladder.iter().map(show).collect::<Vec<_>>().join("; ")
        ),
    )
}

fn c12() -> Outcome {
    let lie = build_su_basis(2).unwrap();
    let mut vals = Vec::new();
    for np in [1, 2] {
        let model = DiscreteVertexModel::identity(&lie, np, 1.0);
        let r = toy_strong_coupling(&model, 1.0, ToyObservable { i: 0, alpha: 1, x: 0, j: 1, gamma: 2, y: np - 1 }).unwrap();
        vals.push(r.lowest_order);
    }
    ok(vals.iter().all(|v| *v == C64::new(0.0, 0.0)), format!("lowest-order values {vals:?}"))
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 12] = [
        (1, "Lie core exactness", Duration::from_secs(1), c1),
        (2, "d_G agreement", Duration::from_secs(1), c2),
        (3, "mass-matrix golden spectrum", Duration::from_secs(1), c3),
        (4, "singular-variety codimension", Duration::from_secs(60), c4),
        (5, "nondegeneracy scan", Duration::from_secs(300), c5),
        (6, "free propagator identity", Duration::from_secs(60), c6),
        (7, "mollifier identities", Duration::from_secs(60), c7),
        (8, "Berezin oracle equivalence", Duration::from_secs(60), c8),
        (9, "fermionization ladder", Duration::from_secs(600), c9),
        (10, "convergence bound", Duration::from_secs(1800), c10),
        (11, "free-field decay pipeline", Duration::from_secs(1800), c11),
        (12, "toy strong coupling", Duration::from_secs(60), c12),
    ];
    let mut failed = 0;
    for (id, name, budget, f) in criteria {
        let t = Instant::now();
        let out = f();
        let dt = t.elapsed();
        let pass = out.pass && dt < budget;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {} [{:.2} s, budget {} s]",
            if pass { "PASS" } else { "FAIL" },
            id,
            out.detail,
            dt.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 12 - failed);
    if failed > 0 && std::env::var("YMLAB_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
