//! Finite Grassmann algebra on ≤ 64 generators, Berezin integration by
//! brute expansion and by the fermionic Wick determinant.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{Complex, DMatrix};
use serde::Serialize;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

pub const MAX_GENERATORS: usize = 64;
pub const BRUTE_GUARD: usize = 24;

/// Sign of m_a · m_b relative to the ascending monomial m_a | m_b.
#[inline]
pub fn product_sign(a: u64, b: u64) -> f64 {
    let mut swaps = 0u32;
    let mut rest = b;
    while rest != 0 {
        let j = rest.trailing_zeros();
        // generators of a sitting above j have to cross it
        let above = if j >= 63 { 0 } else { a >> (j + 1) };
        swaps += above.count_ones();
        rest &= rest - 1;
    }
    if swaps.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Sparse polynomial: ascending-ordered monomials as bitmasks.
#[derive(Clone, Debug, PartialEq)]
pub struct GrassmannPolynomial {
    pub n_gen: usize,
    terms: BTreeMap<u64, C64>,
}

impl GrassmannPolynomial {
    pub fn zero(n_gen: usize) -> Self {
        assert!(n_gen <= MAX_GENERATORS);
        GrassmannPolynomial { n_gen, terms: BTreeMap::new() }
    }

    pub fn one(n_gen: usize) -> Self {
        Self::constant(n_gen, C64::new(1.0, 0.0))
    }

    pub fn constant(n_gen: usize, c: C64) -> Self {
        let mut p = Self::zero(n_gen);
        p.add_term(0, c);
        p
    }

    pub fn generator(n_gen: usize, g: usize) -> Self {
        assert!(g < n_gen);
        let mut p = Self::zero(n_gen);
        p.add_term(1u64 << g, C64::new(1.0, 0.0));
        p
    }

    /// Product of generators in the given order, times c.
    pub fn monomial(n_gen: usize, gens: &[usize], c: C64) -> Self {
        let mut mask = 0u64;
        let mut sign = 1.0;
        for &g in gens {
            let bit = 1u64 << g;
            if mask & bit != 0 {
                return Self::zero(n_gen);
            }
            sign *= product_sign(mask, bit);
            mask |= bit;
        }
        let mut p = Self::zero(n_gen);
        p.add_term(mask, c * sign);
        p
    }

    pub fn add_term(&mut self, mask: u64, c: C64) {
        if c == C64::new(0.0, 0.0) {
            return;
        }
        let e = self.terms.entry(mask).or_insert(C64::new(0.0, 0.0));
        *e += c;
        if *e == C64::new(0.0, 0.0) {
            self.terms.remove(&mask);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (u64, C64)> + '_ {
        self.terms.iter().map(|(m, c)| (*m, *c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, mask: u64) -> C64 {
        self.terms.get(&mask).copied().unwrap_or_default()
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut p = Self::zero(self.n_gen);
        for (m, c) in self.terms() {
            p.add_term(m, c * s);
        }
        p
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut p = self.clone();
        for (m, c) in other.terms() {
            p.add_term(m, c);
        }
        p
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut acc: HashMap<u64, C64> = HashMap::new();
        for (ma, ca) in self.terms() {
            for (mb, cb) in other.terms() {
                if ma & mb != 0 {
                    continue;
                }
                *acc.entry(ma | mb).or_default() += ca * cb * product_sign(ma, mb);
            }
        }
        let mut p = Self::zero(self.n_gen.max(other.n_gen));
        for (m, c) in acc {
            p.add_term(m, c);
        }
        p
    }

    pub fn pow(&self, k: usize) -> Self {
        let mut p = Self::one(self.n_gen);
        for _ in 0..k {
            p = p.mul(self);
            if p.is_zero() {
                break;
            }
        }
        p
    }

    /// Only the monomials of the given degree.
    pub fn homogeneous(&self, degree: u32) -> Self {
        let mut p = Self::zero(self.n_gen);
        for (m, c) in self.terms() {
            if m.count_ones() == degree {
                p.add_term(m, c);
            }
        }
        p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum FieldKind {
    /// H^A = H
    H,
    /// H^F = η
    Eta,
    /// Ψ^A = Ψ
    Psi,
    /// Ψ^F = ψ
    SmallPsi,
}

impl FieldKind {
    pub fn h_type(block_f: bool) -> Self {
        if block_f {
            FieldKind::Eta
        } else {
            FieldKind::H
        }
    }

    pub fn psi_type(block_f: bool) -> Self {
        if block_f {
            FieldKind::SmallPsi
        } else {
            FieldKind::Psi
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Generator {
    pub kind: FieldKind,
    pub barred: bool,
    pub index: usize,
    pub point: usize,
}

/// Labelled generators; plain and barred partners pair under S₀ = Σ X X̄.
#[derive(Clone, Debug)]
pub struct GeneratorSet {
    pub gens: Vec<Generator>,
    lookup: HashMap<Generator, usize>,
}

impl GeneratorSet {
    pub fn new(gens: Vec<Generator>) -> Result<Self> {
        if gens.len() > MAX_GENERATORS {
            return Err(Error::ComplexityGuard(format!("{} generators exceed {MAX_GENERATORS}", gens.len())));
        }
        let lookup: HashMap<Generator, usize> = gens.iter().enumerate().map(|(k, g)| (*g, k)).collect();
        if lookup.len() != gens.len() {
            return Err(Error::InvalidParameter("duplicate generator".into()));
        }
        for g in &gens {
            if !lookup.contains_key(&Generator { barred: !g.barred, ..*g }) {
                return Err(Error::InvalidParameter(format!("generator {g:?} has no partner")));
            }
        }
        Ok(GeneratorSet { gens, lookup })
    }

    /// All eight families H, η (index < 3) and Ψ, ψ (index < dim_g) at each point.
    pub fn fields(dim_g: usize, n_points: usize) -> Result<Self> {
        let mut gens = Vec::new();
        for point in 0..n_points {
            for barred in [false, true] {
                for (kind, count) in [(FieldKind::H, 3), (FieldKind::Eta, 3), (FieldKind::Psi, dim_g), (FieldKind::SmallPsi, dim_g)] {
                    for index in 0..count {
                        gens.push(Generator { kind, barred, index, point });
                    }
                }
            }
        }
        Self::new(gens)
    }

    pub fn len(&self) -> usize {
        self.gens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gens.is_empty()
    }

    pub fn id(&self, g: Generator) -> usize {
        self.lookup[&g]
    }

    pub fn partner(&self, id: usize) -> usize {
        let g = self.gens[id];
        self.lookup[&Generator { barred: !g.barred, ..g }]
    }

    pub fn is_barred(&self, id: usize) -> bool {
        self.gens[id].barred
    }

    pub fn mask_where(&self, f: impl Fn(&Generator) -> bool) -> u64 {
        self.gens.iter().enumerate().filter(|(_, g)| f(g)).fold(0u64, |m, (k, _)| m | (1u64 << k))
    }

    /// e^{S₀} = Π_g (1 + X_g X̄_g), expanded.
    pub fn free_weight(&self) -> GrassmannPolynomial {
        let n = self.len();
        let mut e = GrassmannPolynomial::one(n);
        for k in 0..n {
            if self.gens[k].barred {
                continue;
            }
            let pair = GrassmannPolynomial::monomial(n, &[k, self.partner(k)], C64::new(1.0, 0.0));
            e = e.mul(&GrassmannPolynomial::one(n).add(&pair));
        }
        e
    }
}

/// Normalized free Berezin integral by expanding e^{S₀}·poly and reading the
/// top coefficient.
pub fn berezin_brute(poly: &GrassmannPolynomial, gens: &GeneratorSet) -> Result<C64> {
    if gens.len() > BRUTE_GUARD {
        return Err(Error::ComplexityGuard(format!("berezin_brute supports ≤ {BRUTE_GUARD} generators, got {}", gens.len())));
    }
    let full = if gens.len() == 64 { u64::MAX } else { (1u64 << gens.len()) - 1 };
    let e = gens.free_weight();
    let z0 = e.coefficient(full);
    Ok(e.mul(poly).coefficient(full) / z0)
}

/// Parity of the permutation `perm` of 0..n.
pub fn permutation_sign(perm: &[usize]) -> f64 {
    let mut seen = vec![false; perm.len()];
    let mut transpositions = 0;
    for i in 0..perm.len() {
        if seen[i] {
            continue;
        }
        let mut j = i;
        let mut len = 0;
        while !seen[j] {
            seen[j] = true;
            j = perm[j];
            len += 1;
        }
        transpositions += len - 1;
    }
    if transpositions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

pub fn det(m: DMatrix<C64>) -> C64 {
    if m.nrows() == 0 {
        return C64::new(1.0, 0.0);
    }
    m.lu().determinant()
}

/// ⟨f_1 ⋯ f_k⟩ for a product of plain and barred factors in the given order,
/// with ⟨plain_i · barred_j⟩ = cov(i, j): reorder to p₁b₁p₂b₂⋯ and take the
/// determinant. Unbalanced products give 0.
pub fn wick_sequence<F>(barred: &[bool], cov: F) -> C64
where
    F: Fn(usize, usize) -> C64,
{
    let plains: Vec<usize> = (0..barred.len()).filter(|&k| !barred[k]).collect();
    let bars: Vec<usize> = (0..barred.len()).filter(|&k| barred[k]).collect();
    if plains.len() != bars.len() {
        return C64::new(0.0, 0.0);
    }
    let mut target = Vec::with_capacity(barred.len());
    for (p, b) in plains.iter().zip(&bars) {
        target.push(*p);
        target.push(*b);
    }
    let sign = permutation_sign(&target);
    let m = DMatrix::from_fn(plains.len(), bars.len(), |i, j| cov(plains[i], bars[j]));
    det(m) * sign
}

/// Wick evaluation of every monomial with ⟨X_g X̄_h⟩ = δ_{gh}.
pub fn berezin_wick(poly: &GrassmannPolynomial, gens: &GeneratorSet) -> C64 {
    let mut total = C64::new(0.0, 0.0);
    for (mask, c) in poly.terms() {
        let ids: Vec<usize> = (0..64).filter(|&k| mask >> k & 1 == 1).collect();
        let barred: Vec<bool> = ids.iter().map(|&g| gens.is_barred(g)).collect();
        let v = wick_sequence(&barred, |i, j| {
            if gens.partner(ids[i]) == ids[j] {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        total += c * v;
    }
    total
}
