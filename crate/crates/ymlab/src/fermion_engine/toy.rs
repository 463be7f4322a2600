//! Strong-coupling toy: unmollified fields on the model's points,
//!
//!   ∫ e^{β S₀ + S_I} H̄_i Ψ̄_α(x) H̄_j Ψ̄_γ(y),   S_I = K + λ Σ_z w V_F(z),
//!
//! expanded in β. S₀ = Σ X X̄ pairs plain with barred generators, K holds only
//! plain and V_F only barred generators, so each β-coefficient factorizes
//! into a plain top coefficient times a barred top coefficient.

use serde::Serialize;

use super::grassmann::{product_sign, FieldKind, Generator, GeneratorSet, GrassmannPolynomial, C64};
use super::xi::{kernel_poly, vertex_poly};
use crate::error::{Error, Result};
use crate::perturbation_boson::DiscreteVertexModel;

pub const TOY_MAX_POINTS: usize = 2;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ToyObservable {
    pub i: usize,
    pub alpha: usize,
    pub x: usize,
    pub j: usize,
    pub gamma: usize,
    pub y: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ToyResult {
    pub n_points: usize,
    pub generators: usize,
    pub lambda: f64,
    /// (b, coefficient of βᵇ in the numerator), normalized by the free integral
    pub numerator: Vec<(usize, C64)>,
    pub partition: Vec<(usize, C64)>,
    /// The β⁰ numerator coefficient.
    pub lowest_order: C64,
}

struct Sectors {
    gens: GeneratorSet,
    plain_mask: u64,
    barred_mask: u64,
    z0: C64,
}

impl Sectors {
    fn new(dim_g: usize, n_points: usize) -> Result<Self> {
        let gens = GeneratorSet::fields(dim_g, n_points)?;
        let plain_mask = gens.mask_where(|g| !g.barred);
        let barred_mask = gens.mask_where(|g| g.barred);
        // top coefficient of e^{S₀} = product of all X X̄ pairs
        let mut seq = Vec::new();
        for k in 0..gens.len() {
            if !gens.is_barred(k) {
                seq.push(k);
                seq.push(gens.partner(k));
            }
        }
        let z0 = GrassmannPolynomial::monomial(gens.len(), &seq, C64::new(1.0, 0.0)).coefficient(plain_mask | barred_mask);
        Ok(Sectors { gens, plain_mask, barred_mask, z0 })
    }
}

/// Lazily built powers Pᵏ/k!.
struct Powers {
    base: GrassmannPolynomial,
    cache: Vec<GrassmannPolynomial>,
}

impl Powers {
    fn new(base: GrassmannPolynomial) -> Self {
        let one = GrassmannPolynomial::one(base.n_gen);
        Powers { base, cache: vec![one] }
    }

    fn get(&mut self, k: usize) -> &GrassmannPolynomial {
        while self.cache.len() <= k {
            let m = self.cache.len();
            let next = self.cache[m - 1].mul(&self.base).scale(C64::new(1.0 / m as f64, 0.0));
            self.cache.push(next);
        }
        &self.cache[k]
    }
}

/// Coefficient of βᵇ in ∫ e^{βS₀} e^{K} e^{V} · obs, for b ∈ {0, 1}, where obs
/// is barred-only. The barred factor is evaluated first; the plain factor is
/// only expanded when the barred one is nonzero.
fn beta_coefficient(s: &Sectors, k: &mut Powers, v: &mut Powers, obs: &GrassmannPolynomial, b: usize, max_a: usize, max_c: usize) -> C64 {
    let n_plain = s.plain_mask.count_ones() as usize;
    // S₀ᵇ/b! supplies b complete pairs; b ≤ 1 here
    let removed: Vec<(u64, u64)> = match b {
        0 => vec![(0, 0)],
        1 => (0..s.gens.len())
            .filter(|&g| !s.gens.is_barred(g))
            .map(|g| (1u64 << g, 1u64 << s.gens.partner(g)))
            .collect(),
        _ => unreachable!(),
    };
    let mut total = C64::new(0.0, 0.0);
    for c in 0..=max_c {
        let barred_poly = v.get(c).mul(obs);
        if barred_poly.is_zero() {
            continue;
        }
        for &(pg, bg) in &removed {
            let bmask = s.barred_mask & !bg;
            let cb = barred_poly.coefficient(bmask);
            if cb == C64::new(0.0, 0.0) {
                continue;
            }
            let pmask = s.plain_mask & !pg;
            let plain_deg = n_plain - b;
            if !plain_deg.is_multiple_of(4) || plain_deg / 4 > max_a {
                continue;
            }
            let cp = k.get(plain_deg / 4).coefficient(pmask);
            if cp == C64::new(0.0, 0.0) {
                continue;
            }
            let pair = pg | bg;
            let pair_sign = if b == 1 { product_sign(pg, bg) } else { 1.0 };
            let sign = pair_sign * product_sign(pair, pmask) * product_sign(pair | pmask, bmask);
            total += cp * cb * sign;
        }
    }
    total / s.z0
}

pub fn toy_strong_coupling(model: &DiscreteVertexModel, lambda: f64, obs: ToyObservable) -> Result<ToyResult> {
    let np = model.n_points();
    if np == 0 || np > TOY_MAX_POINTS {
        return Err(Error::ComplexityGuard(format!("toy model supports 1..={TOY_MAX_POINTS} points, got {np}")));
    }
    if obs.i >= 3 || obs.j >= 3 || obs.alpha >= model.dim_g || obs.gamma >= model.dim_g || obs.x >= np || obs.y >= np {
        return Err(Error::InvalidParameter(format!("observable {obs:?} out of range")));
    }
    let s = Sectors::new(model.dim_g, np)?;
    let w = model.weight;
    let n = s.gens.len();
    let mut kpoly = GrassmannPolynomial::zero(n);
    for p in 0..np {
        for q in 0..np {
            kpoly = kpoly.add(&kernel_poly(&s.gens, model, p, q, C64::new(0.0, -0.5 * w * w)));
        }
    }
    let mut vpoly = GrassmannPolynomial::zero(n);
    for z in 0..np {
        vpoly = vpoly.add(&vertex_poly(&s.gens, model, z, C64::new(lambda * w, 0.0)));
    }
    let bar = |kind, index, point| s.gens.id(Generator { kind, barred: true, index, point });
    let o = GrassmannPolynomial::monomial(
        n,
        &[
            bar(FieldKind::H, obs.i, obs.x),
            bar(FieldKind::Psi, obs.alpha, obs.x),
            bar(FieldKind::H, obs.j, obs.y),
            bar(FieldKind::Psi, obs.gamma, obs.y),
        ],
        C64::new(1.0, 0.0),
    );
    let one = GrassmannPolynomial::one(n);
    let n_plain = s.plain_mask.count_ones() as usize;
    let n_barred = s.barred_mask.count_ones() as usize;
    let max_a = n_plain / 4;
    let max_c = n_barred / 6;
    let mut kp = Powers::new(kpoly);
    let mut vp = Powers::new(vpoly);
    let mut numerator = Vec::new();
    let mut partition = Vec::new();
    for b in 0..=1 {
        numerator.push((b, beta_coefficient(&s, &mut kp, &mut vp, &o, b, max_a, max_c)));
        partition.push((b, beta_coefficient(&s, &mut kp, &mut vp, &one, b, max_a, max_c)));
    }
    Ok(ToyResult { n_points: np, generators: n, lambda, lowest_order: numerator[0].1, numerator, partition })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie_core::build_su_basis;

    fn obs() -> ToyObservable {
        ToyObservable { i: 0, alpha: 1, x: 0, j: 1, gamma: 2, y: 0 }
    }

    #[test]
    fn lowest_order_vanishes_one_and_two_points() {
        let lie = build_su_basis(2).unwrap();
        for np in [1, 2] {
            let model = DiscreteVertexModel::identity(&lie, np, 0.7);
            let r = toy_strong_coupling(&model, 3.0, ToyObservable { y: np - 1, ..obs() }).unwrap();
            assert_eq!(r.generators, 24 * np);
            assert_eq!(r.lowest_order, C64::new(0.0, 0.0));
        }
    }

    #[test]
    fn full_expansion_agrees_at_one_point() {
        // independent: expand e^{K}·e^{V}·O fully and read the top coefficient
        let lie = build_su_basis(2).unwrap();
        let model = DiscreteVertexModel::identity(&lie, 1, 0.7);
        let s = Sectors::new(lie.dim_g, 1).unwrap();
        let n = s.gens.len();
        let k = kernel_poly(&s.gens, &model, 0, 0, C64::new(0.0, -0.5 * 0.49));
        let v = vertex_poly(&s.gens, &model, 0, C64::new(3.0 * 0.7, 0.0));
        let exp = |p: &GrassmannPolynomial| {
            let mut acc = GrassmannPolynomial::one(n);
            let mut term = GrassmannPolynomial::one(n);
            for m in 1..=12 {
                term = term.mul(p).scale(C64::new(1.0 / m as f64, 0.0));
                acc = acc.add(&term);
            }
            acc
        };
        let o = GrassmannPolynomial::monomial(
            n,
            &[
                (FieldKind::H, 2),
                (FieldKind::Psi, 2),
                (FieldKind::Eta, 0),
                (FieldKind::SmallPsi, 0),
                (FieldKind::Eta, 1),
                (FieldKind::SmallPsi, 1),
            ]
            .map(|(kind, index)| s.gens.id(Generator { kind, barred: true, index, point: 0 })),
            C64::new(1.0, 0.0),
        );
        let full = exp(&k).mul(&exp(&v)).mul(&o);
        let top = full.coefficient(s.plain_mask | s.barred_mask) / s.z0;
        let mut kp = Powers::new(k);
        let mut vp = Powers::new(v);
        let fact = beta_coefficient(&s, &mut kp, &mut vp, &o, 0, 3, 2);
        assert!(top.norm() > 0.0);
        assert!((top - fact).norm() < 1e-12 * top.norm(), "{top} {fact}");
    }

    #[test]
    fn guard_three_points() {
        let lie = build_su_basis(2).unwrap();
        let model = DiscreteVertexModel::identity(&lie, 3, 1.0);
        assert!(matches!(toy_strong_coupling(&model, 1.0, obs()), Err(Error::ComplexityGuard(_))));
    }
}
