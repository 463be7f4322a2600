//! Fermionic side: Grassmann algebra, mollifiers, the coefficients Ξ_n and
//! the strong-coupling toy.

pub mod grassmann;
pub mod mollifier;
pub mod toy;
pub mod xi;

pub use grassmann::{berezin_brute, berezin_wick, FieldKind, Generator, GeneratorSet, GrassmannPolynomial};
pub use mollifier::{build_mollifiers, epsilon_ladder, Grid1d, MollifierNorms, MollifierPair};
pub use toy::{toy_strong_coupling, ToyObservable, ToyResult};
pub use xi::{
    convergence_bound_check, placement_check, prefactor, torus_classes, xi_n, xi_torus_ladder, ConvergenceCheck,
    Placement, PlacementCheck, TorusClasses, XiResult,
};
