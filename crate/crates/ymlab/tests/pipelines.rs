use std::f64::consts::PI;

use ymlab::fermion_engine::{build_mollifiers, xi_n, Grid1d, Placement};
use ymlab::gauge_form::FormAssembler;
use ymlab::harness::{run, Experiment, RunConfig};
use ymlab::lie_core::{build_su_basis, PhiVector};
use ymlab::mode_space::{build_lattice, constrained_basis, BoxSpec};
use ymlab::perturbation_boson::{tabulate_kernels, theta_n, theta_n_brute, DiscreteVertexModel};

#[test]
fn tabulated_propagator_feeds_boson_engine() {
    let lie = build_su_basis(2).unwrap();
    let lat = build_lattice(BoxSpec::new([PI, PI, 0.4 * PI, 0.4 * PI]).unwrap(), 1.2).unwrap();
    let basis = constrained_basis(&lat, lie.dim_g);
    let asm = FormAssembler::new(&lat, &basis, &lie).unwrap();
    let props = asm.assemble(&PhiVector::canonical(lie.dim_g), 0.7).unwrap().invert().unwrap();
    let model = tabulate_kernels(&props, &lie, vec![[0.1, 0.2, 0.3, 0.4]], 0.5);
    assert!(model.symmetry_residual() < 1e-10);
    let fast = theta_n(&model, 1).unwrap().value;
    let brute = theta_n_brute(&model, 1).unwrap();
    assert!((fast - brute).norm() <= 1e-9 * brute.norm().max(1.0), "{fast} {brute}");
}

#[test]
fn torus_and_boson_agree_on_shared_model() {
    let lie = build_su_basis(2).unwrap();
    let grid = Grid1d::periodic(PI, 512).unwrap();
    let model = DiscreteVertexModel::identity(&lie, 1, grid.length().powi(4));
    let moll = build_mollifiers(4.0 * grid.h * 4.0, grid).unwrap();
    let xi = xi_n(&model, &moll, 1, Placement::Torus).unwrap();
    let theta = theta_n(&model, 1).unwrap().value;
    assert!((xi.xi1.unwrap() - theta).norm() <= 1e-10 * theta.norm());
    assert!(xi.xi2.unwrap().norm() < 0.1 * theta.norm());
}

#[test]
fn records_are_deterministic() {
    for exp in [Experiment::MassScan, Experiment::ToyStrong, Experiment::MollifierCheck] {
        let mut cfg = RunConfig::new(exp);
        cfg.seed = 9;
        cfg.samples = Some(200);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a.payload_hash, b.payload_hash);
        assert_eq!(a.input_hash, b.input_hash);
        assert!(a.passed(), "{:?}", a.assertions);
    }
}
