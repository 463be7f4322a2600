//! Fermionic perturbative coefficients Ξ_n on a one-point vertex model.
//!
//! The integrand is (2n vertex factors) × (3n kernel bilinears). Vertex
//! factors carry barred fields H̄, Ψ̄ (smeared by D_ε and δ_ε); kernel
//! endpoints carry plain fields H, Ψ (smeared by δ_ε). Plain/barred pairs
//! contract to D̃_ε and δ̃_ε.

use rand::Rng;
use serde::Serialize;

use super::grassmann::{
    berezin_brute, permutation_sign, wick_sequence, FieldKind, Generator, GeneratorSet, GrassmannPolynomial, C64,
};
use super::mollifier::MollifierPair;
use crate::error::{Error, Result};
use crate::perturbation_boson::{Block, DiscreteVertexModel};
use crate::seeds;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Placement {
    /// Vertices and kernel endpoints integrated over the periodic grid, with
    /// the model's constant kernel table.
    Torus,
    /// Every field at the model's single point.
    Coincident,
}

#[derive(Clone, Debug, Serialize)]
pub struct XiResult {
    pub n: usize,
    pub epsilon: f64,
    pub placement: Placement,
    pub xi: C64,
    /// Pairings in which every endpoint's H and Ψ meet the same vertex.
    pub xi1: Option<C64>,
    pub xi2: Option<C64>,
    pub evaluation: &'static str,
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// (−i/2)^{2n} / ((2n)!(3n)!)
pub fn prefactor(n: usize) -> C64 {
    C64::new(0.0, -0.5).powu(2 * n as u32) / (factorial(2 * n) * factorial(3 * n))
}

const SLOTS: usize = 3;

fn slot_is_f(global_slot: usize) -> bool {
    global_slot % SLOTS == 2
}

fn block(f: bool) -> Block {
    if f {
        Block::F
    } else {
        Block::A
    }
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for k in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(k);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Type-respecting bijections endpoint → global slot for n = 1.
struct Bijections {
    /// endpoint is F
    f_endpoint: [bool; 6],
    maps: Vec<[usize; 6]>,
}

fn type_assignments() -> Vec<Bijections> {
    let a_slots = [0usize, 1, 3, 4];
    let f_slots = [2usize, 5];
    let mut out = Vec::new();
    for f1 in 0..6 {
        for f2 in f1 + 1..6 {
            let mut f_endpoint = [false; 6];
            f_endpoint[f1] = true;
            f_endpoint[f2] = true;
            let a_ends: Vec<usize> = (0..6).filter(|e| !f_endpoint[*e]).collect();
            let f_ends = [f1, f2];
            let mut maps = Vec::new();
            for pa in permutations(&a_slots) {
                for pf in permutations(&f_slots) {
                    let mut m = [0usize; 6];
                    for (e, s) in a_ends.iter().zip(&pa) {
                        m[*e] = *s;
                    }
                    for (e, s) in f_ends.iter().zip(&pf) {
                        m[*e] = *s;
                    }
                    maps.push(m);
                }
            }
            out.push(Bijections { f_endpoint, maps });
        }
    }
    out
}

/// Sign of the 24-factor sequence (12 barred vertex fields, then 12 plain
/// endpoint fields) reordered to plain/barred pairs.
fn pairing_sign(sigma: &[usize; 6], tau: &[usize; 6]) -> f64 {
    let mut target = Vec::with_capacity(24);
    for e in 0..6 {
        target.push(12 + 2 * e);
        target.push(2 * sigma[e]);
        target.push(13 + 2 * e);
        target.push(2 * tau[e] + 1);
    }
    permutation_sign(&target)
}

/// Raw pairing sums for n = 1 split by k, the number of endpoints whose H and
/// Ψ contract with different vertices.
#[derive(Clone, Debug, Serialize)]
pub struct TorusClasses {
    pub sums: [C64; 7],
    pub pairings: usize,
}

pub fn torus_classes(model: &DiscreteVertexModel) -> Result<TorusClasses> {
    if model.n_points() != 1 {
        return Err(Error::InvalidParameter("torus placement needs a one-point model".into()));
    }
    let dg = model.dim_g;
    let vertex = model.vertex();
    let mut sums = [C64::new(0.0, 0.0); 7];
    let mut pairings = 0;
    for types in type_assignments() {
        let kb: Vec<(Block, Block)> =
            (0..3).map(|l| (block(types.f_endpoint[2 * l]), block(types.f_endpoint[2 * l + 1]))).collect();
        for sigma in &types.maps {
            for tau in &types.maps {
                pairings += 1;
                let sign = pairing_sign(sigma, tau);
                let k = (0..6).filter(|&e| sigma[e] / SLOTS != tau[e] / SLOTS).count();
                let mut acc = C64::new(0.0, 0.0);
                for t1 in vertex {
                    for t2 in vertex {
                        let lab = [t1.0, t1.1, t1.2, t2.0, t2.1, t2.2];
                        let mut legs = [0usize; 6];
                        for e in 0..6 {
                            legs[e] = (lab[sigma[e]] / dg) * dg + lab[tau[e]] % dg;
                        }
                        let mut v = C64::new(t1.3 * t2.3, 0.0);
                        for l in 0..3 {
                            v *= model.kernel(kb[l].0, kb[l].1, 0, 0, legs[2 * l], legs[2 * l + 1]);
                        }
                        acc += v;
                    }
                }
                sums[k] += acc * sign;
            }
        }
    }
    Ok(TorusClasses { sums, pairings })
}

fn torus_volume_check(model: &DiscreteVertexModel, moll: &MollifierPair) -> Result<f64> {
    let vol = moll.grid.length().powi(4);
    if (model.weight - vol).abs() > 1e-9 * vol {
        return Err(Error::InvalidParameter(format!(
            "torus placement needs model weight = grid volume {vol}, got {}",
            model.weight
        )));
    }
    Ok(vol)
}

/// Ξ₁ from precomputed classes: vertex pair integrated over the torus, each
/// endpoint integral giving the same-vertex overlap or g(z₀ − z₁).
pub fn xi_torus_from_classes(classes: &TorusClasses, model: &DiscreteVertexModel, moll: &MollifierPair) -> Result<XiResult> {
    let vol = torus_volume_check(model, moll)?;
    let same = moll.same_point_overlap_4d();
    let pref = prefactor(1);
    let mut xi1 = C64::new(0.0, 0.0);
    let mut xi2 = C64::new(0.0, 0.0);
    for (k, s) in classes.sums.iter().enumerate() {
        if k == 0 {
            xi1 += pref * *s * vol * vol * same.powi(6);
        } else {
            xi2 += pref * *s * vol * moll.g_moment_4d(k as u32) * same.powi(6 - k as i32);
        }
    }
    Ok(XiResult {
        n: 1,
        epsilon: moll.epsilon,
        placement: Placement::Torus,
        xi: xi1 + xi2,
        xi1: Some(xi1),
        xi2: Some(xi2),
        evaluation: "pairing-enumeration",
    })
}

fn plain(kind: FieldKind, index: usize, point: usize) -> Generator {
    Generator { kind, barred: false, index, point }
}

fn barred(kind: FieldKind, index: usize, point: usize) -> Generator {
    Generator { kind, barred: true, index, point }
}

/// V_F(z) = Σ V_{rst} (H̄Ψ̄)_r (H̄Ψ̄)_s (η̄ψ̄)_t.
pub(crate) fn vertex_poly(gens: &GeneratorSet, model: &DiscreteVertexModel, point: usize, coupling: C64) -> GrassmannPolynomial {
    let dg = model.dim_g;
    let n = gens.len();
    let mut p = GrassmannPolynomial::zero(n);
    for &(r0, r1, r2, v) in model.vertex() {
        let mut ids = Vec::with_capacity(6);
        for (s, r) in [r0, r1, r2].into_iter().enumerate() {
            let f = s == 2;
            ids.push(gens.id(barred(FieldKind::h_type(f), r / dg, point)));
            ids.push(gens.id(barred(FieldKind::psi_type(f), r % dg, point)));
        }
        p = p.add(&GrassmannPolynomial::monomial(n, &ids, coupling * v));
    }
    p
}

/// Σ C^{ab}(p,q)_{rc} (H^a Ψ^a)_r(p) (H^b Ψ^b)_c(q).
pub(crate) fn kernel_poly(gens: &GeneratorSet, model: &DiscreteVertexModel, p: usize, q: usize, coupling: C64) -> GrassmannPolynomial {
    let dg = model.dim_g;
    let n = gens.len();
    let d = model.leg_dim();
    let mut poly = GrassmannPolynomial::zero(n);
    for fa in [false, true] {
        for fb in [false, true] {
            for r in 0..d {
                for c in 0..d {
                    let k = model.kernel(block(fa), block(fb), p, q, r, c);
                    if k == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let ids = [
                        gens.id(plain(FieldKind::h_type(fa), r / dg, p)),
                        gens.id(plain(FieldKind::psi_type(fa), r % dg, p)),
                        gens.id(plain(FieldKind::h_type(fb), c / dg, q)),
                        gens.id(plain(FieldKind::psi_type(fb), c % dg, q)),
                    ];
                    poly = poly.add(&GrassmannPolynomial::monomial(n, &ids, coupling * k));
                }
            }
        }
    }
    poly
}

/// Everything at one point: ⟨H H̄⟩ = D̃(0) = 1, ⟨Ψ Ψ̄⟩ = δ̃(0); the product is
/// expanded and integrated by brute force.
fn xi_coincident(model: &DiscreteVertexModel, moll: &MollifierPair, n: usize) -> Result<XiResult> {
    if model.n_points() != 1 {
        return Err(Error::InvalidParameter("coincident placement needs a one-point model".into()));
    }
    let gens = GeneratorSet::fields(model.dim_g, 1)?;
    let w = model.weight;
    let one = C64::new(1.0, 0.0);
    let v = vertex_poly(&gens, model, 0, one);
    let k = kernel_poly(&gens, model, 0, 0, one);
    let integrand = v.pow(2 * n).mul(&k.pow(3 * n));
    let dt0 = MollifierPair::value_4d(&moll.delta_tilde, &moll.grid, [0; 4]);
    let dh0 = MollifierPair::value_4d(&moll.d_tilde, &moll.grid, [0; 4]);
    let weight = w.powi(8 * n as i32) * dt0.powi(6 * n as i32) * dh0.powi(6 * n as i32);
    let xi = prefactor(n) * weight * berezin_brute(&integrand, &gens)?;
    let (xi1, xi2) = if n == 1 {
        let cl = torus_classes(model)?;
        let x1 = prefactor(1) * weight * cl.sums[0];
        let x2 = prefactor(1) * weight * cl.sums[1..].iter().sum::<C64>();
        let scale = cl.sums.iter().map(|s| s.norm()).sum::<f64>() * prefactor(1).norm() * weight;
        if (x1 + x2 - xi).norm() > 1e-9 * scale.max(1e-300) {
            return Err(Error::Internal(format!("pairing split {} disagrees with brute value {xi}", x1 + x2)));
        }
        (Some(x1), Some(x2))
    } else {
        (None, None)
    };
    Ok(XiResult { n, epsilon: moll.epsilon, placement: Placement::Coincident, xi, xi1, xi2, evaluation: "brute" })
}

pub fn xi_n(model: &DiscreteVertexModel, moll: &MollifierPair, n: usize, placement: Placement) -> Result<XiResult> {
    if n == 0 {
        let one = C64::new(1.0, 0.0);
        return Ok(XiResult { n, epsilon: moll.epsilon, placement, xi: one, xi1: Some(one), xi2: Some(C64::new(0.0, 0.0)), evaluation: "trivial" });
    }
    match placement {
        Placement::Torus => {
            if n != 1 {
                return Err(Error::ComplexityGuard(format!("torus placement enumerates pairings only for n = 1, got {n}")));
            }
            xi_torus_from_classes(&torus_classes(model)?, model, moll)
        }
        Placement::Coincident => {
            if n > 2 {
                return Err(Error::ComplexityGuard(format!("coincident placement supports n ≤ 2, got {n}")));
            }
            xi_coincident(model, moll, n)
        }
    }
}

/// Ξ₁ along a mollifier ladder, reusing the pairing classes.
pub fn xi_torus_ladder(model: &DiscreteVertexModel, molls: &[MollifierPair]) -> Result<Vec<XiResult>> {
    let cl = torus_classes(model)?;
    molls.iter().map(|m| xi_torus_from_classes(&cl, model, m)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundEntry {
    pub n: usize,
    pub abs_xi: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceCheck {
    pub c: f64,
    pub entries: Vec<BoundEntry>,
    pub degenerate: bool,
    pub pass: bool,
    pub note: Option<String>,
}

/// |Ξ_n| ≤ Cⁿ/((2n)!(3n)!) with C calibrated from n = 1.
pub fn convergence_bound_check(results: &[XiResult]) -> Result<ConvergenceCheck> {
    let first = results
        .iter()
        .find(|r| r.n == 1)
        .ok_or_else(|| Error::InvalidParameter("convergence check needs the n = 1 coefficient".into()))?;
    let c = first.xi.norm() * factorial(2) * factorial(3);
    let degenerate = c == 0.0;
    let mut entries = Vec::new();
    for r in results.iter().filter(|r| r.n >= 1) {
        let bound = c.powi(r.n as i32) / (factorial(2 * r.n) * factorial(3 * r.n));
        let abs_xi = r.xi.norm();
        let pass = if degenerate { abs_xi == 0.0 } else { abs_xi <= bound * (1.0 + 1e-12) };
        entries.push(BoundEntry { n: r.n, abs_xi, bound, pass });
    }
    let note = degenerate.then(|| "C = 0: bound holds only if every higher coefficient vanishes".to_string());
    let pass = entries.iter().all(|e| e.pass);
    Ok(ConvergenceCheck { c, entries, degenerate, pass, note })
}

#[derive(Clone, Debug, Serialize)]
pub struct PlacementCheck {
    pub samples: usize,
    /// max |pairing sum − Wick determinant| / Σ|pairing terms|
    pub max_rel_diff: f64,
    /// max |B| / (||δ_ε||₂^18 ||D_ε||₂^6)
    pub max_bound_ratio: f64,
    pub nonzero_samples: usize,
}

/// Samples single n = 1 torus placements with fixed labels and compares the
/// pairing enumeration with the Wick determinant of the same 24-factor
/// product; also records the Gram bound |B| ≤ ||δ||₂^{18}||D||₂^{6}.
pub fn placement_check(model: &DiscreteVertexModel, moll: &MollifierPair, samples: usize, seed: u64) -> Result<PlacementCheck> {
    let dg = model.dim_g;
    let vertex = model.vertex();
    let assignments = type_assignments();
    let grid = moll.grid;
    let reach = ((0.5 * moll.epsilon / grid.h).floor() as i64).max(1);
    let bound = moll.l2_4d(&moll.delta).powi(18) * moll.l2_4d(&moll.d).powi(6);
    let mut max_rel_diff: f64 = 0.0;
    let mut max_bound_ratio: f64 = 0.0;
    let mut nonzero_samples = 0;
    for s in 0..samples {
        let mut rng = seeds::stream(seed, "fermion-placement", s as u64);
        let types = &assignments[rng.random_range(0..assignments.len())];
        let sigma0 = types.maps[rng.random_range(0..types.maps.len())];
        let tau0 = types.maps[rng.random_range(0..types.maps.len())];
        let t1 = vertex[rng.random_range(0..vertex.len())];
        let t2 = vertex[rng.random_range(0..vertex.len())];
        let lab = [t1.0, t1.1, t1.2, t2.0, t2.1, t2.2];
        let ih: Vec<usize> = (0..6).map(|e| lab[sigma0[e]] / dg).collect();
        let ap: Vec<usize> = (0..6).map(|e| lab[tau0[e]] % dg).collect();
        let z0: [i64; 4] = std::array::from_fn(|_| rng.random_range(0..grid.n as i64));
        // second vertex in the decay zone of D̃ so the H block is generic
        let z1: [i64; 4] = std::array::from_fn(|a| z0[a] + 5 * reach + rng.random_range(-reach / 2..=reach / 2));
        let zs = [z0, z1];
        let xs: Vec<[i64; 4]> = (0..6)
            .map(|e| {
                let zt = zs[tau0[e] / SLOTS];
                std::array::from_fn(|a| zt[a] + rng.random_range(-reach..=reach))
            })
            .collect();
        let diff = |x: [i64; 4], z: [i64; 4]| -> [i64; 4] { std::array::from_fn(|a| x[a] - z[a]) };
        let cov_h = |e: usize, g: usize| -> f64 {
            if types.f_endpoint[e] != slot_is_f(g) || ih[e] != lab[g] / dg {
                return 0.0;
            }
            MollifierPair::value_4d(&moll.d_tilde, &grid, diff(xs[e], zs[g / SLOTS]))
        };
        let cov_p = |e: usize, g: usize| -> f64 {
            if types.f_endpoint[e] != slot_is_f(g) || ap[e] != lab[g] % dg {
                return 0.0;
            }
            MollifierPair::value_4d(&moll.delta_tilde, &grid, diff(xs[e], zs[g / SLOTS]))
        };
        // factor k < 12: barred (slot k/2, sector k%2); k ≥ 12: plain (endpoint, sector)
        let is_barred: Vec<bool> = (0..24).map(|k| k < 12).collect();
        let det = wick_sequence(&is_barred, |p, b| {
            let (e, qp) = ((p - 12) / 2, (p - 12) % 2);
            let (g, qb) = (b / 2, b % 2);
            let v = match (qp, qb) {
                (0, 0) => cov_h(e, g),
                (1, 1) => cov_p(e, g),
                _ => 0.0,
            };
            C64::new(v, 0.0)
        });
        let mut sum = 0.0;
        let mut abs_sum = 0.0;
        for sigma in &types.maps {
            let hprod: f64 = (0..6).map(|e| cov_h(e, sigma[e])).product();
            if hprod == 0.0 {
                continue;
            }
            for tau in &types.maps {
                let pprod: f64 = (0..6).map(|e| cov_p(e, tau[e])).product();
                if pprod != 0.0 {
                    sum += pairing_sign(sigma, tau) * hprod * pprod;
                    abs_sum += (hprod * pprod).abs();
                }
            }
        }
        if det.norm() > 0.0 {
            nonzero_samples += 1;
        }
        if abs_sum > 0.0 {
            max_rel_diff = max_rel_diff.max((C64::new(sum, 0.0) - det).norm() / abs_sum);
        }
        max_bound_ratio = max_bound_ratio.max(det.norm() / bound);
    }
    Ok(PlacementCheck { samples, max_rel_diff, max_bound_ratio, nonzero_samples })
}
