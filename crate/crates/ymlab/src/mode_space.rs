//! Truncated real Fourier modes on T⁴, the axial-gauge hyperplane
//! constraints, and the exact d₀ / curl actions on mode coefficients.
//!
//! Coefficient layout for 𝔤⊗ℝ³-valued fields: index (t, i, α) ↦
//! (t·3 + i)·dim_g + α, with t a real trig function of the relevant mode set.
//! Only the trivial bundle is represented; winding sectors are not.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lie_core::levi_civita;

pub type Mode = [i32; 4];

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoxSpec {
    pub lambda: [f64; 4],
}

impl BoxSpec {
    pub fn new(lambda: [f64; 4]) -> Result<Self> {
        if lambda.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidParameter(format!("box half-periods must be positive, got {lambda:?}")));
        }
        Ok(BoxSpec { lambda })
    }

    pub fn cube(l: f64) -> Result<Self> {
        Self::new([l; 4])
    }

    pub fn volume(&self) -> f64 {
        self.lambda.iter().map(|l| 2.0 * l).product()
    }

    pub fn momentum(&self, n: &Mode) -> [f64; 4] {
        let mut p = [0.0; 4];
        for i in 0..4 {
            p[i] = PI * n[i] as f64 / self.lambda[i];
        }
        p
    }
}

/// κ = (m + ½)π / min Λᵢ; avoids every lattice πZ/Λᵢ when the Λᵢ are equal.
pub fn default_kappa(b: &BoxSpec, m: u32) -> f64 {
    let lmin = b.lambda.iter().cloned().fold(f64::INFINITY, f64::min);
    (m as f64 + 0.5) * PI / lmin
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TrigKind {
    Const,
    Cos,
    Sin,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrigFn {
    pub n: Mode,
    pub kind: TrigKind,
}

/// Orthonormal real trig functions for a negation-closed mode set: 1/√V for
/// n = 0, √(2/V) cos(p·x) and √(2/V) sin(p·x) for each lex-positive n.
#[derive(Clone, Debug)]
pub struct TrigSet {
    pub fns: Vec<TrigFn>,
    index: BTreeMap<(Mode, u8), usize>,
}

fn kind_tag(k: TrigKind) -> u8 {
    match k {
        TrigKind::Const => 0,
        TrigKind::Cos => 1,
        TrigKind::Sin => 2,
    }
}

pub fn lex_positive(n: &[i32]) -> bool {
    for &v in n {
        if v != 0 {
            return v > 0;
        }
    }
    false
}

#[cfg(test)]
fn negate(n: &Mode) -> Mode {
    [-n[0], -n[1], -n[2], -n[3]]
}

impl TrigSet {
    fn from_modes(modes: &[Mode]) -> Self {
        let mut fns = Vec::new();
        for n in modes {
            if *n == [0; 4] {
                fns.push(TrigFn { n: *n, kind: TrigKind::Const });
            } else if lex_positive(n) {
                fns.push(TrigFn { n: *n, kind: TrigKind::Cos });
                fns.push(TrigFn { n: *n, kind: TrigKind::Sin });
            }
        }
        let index = fns.iter().enumerate().map(|(k, t)| ((t.n, kind_tag(t.kind)), k)).collect();
        TrigSet { fns, index }
    }

    pub fn len(&self) -> usize {
        self.fns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fns.is_empty()
    }

    pub fn find(&self, n: Mode, kind: TrigKind) -> Option<usize> {
        self.index.get(&(n, kind_tag(kind))).copied()
    }

    pub fn eval(&self, b: &BoxSpec, t: usize, x: &[f64; 4]) -> f64 {
        let f = &self.fns[t];
        let v = b.volume();
        let p = b.momentum(&f.n);
        let ph: f64 = (0..4).map(|i| p[i] * x[i]).sum();
        match f.kind {
            TrigKind::Const => 1.0 / v.sqrt(),
            TrigKind::Cos => (2.0 / v).sqrt() * ph.cos(),
            TrigKind::Sin => (2.0 / v).sqrt() * ph.sin(),
        }
    }

    /// ∂/∂x_axis as a map t ↦ (t', factor); constants map to nothing.
    pub fn derivative(&self, b: &BoxSpec, axis: usize) -> Vec<Option<(usize, f64)>> {
        self.fns
            .iter()
            .map(|f| {
                let p = b.momentum(&f.n)[axis];
                match f.kind {
                    TrigKind::Const => None,
                    _ if f.n[axis] == 0 => None,
                    TrigKind::Cos => Some((self.find(f.n, TrigKind::Sin).unwrap(), -p)),
                    TrigKind::Sin => Some((self.find(f.n, TrigKind::Cos).unwrap(), p)),
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct ModeLattice {
    pub bx: BoxSpec,
    pub kappa: f64,
    pub a_modes: Vec<Mode>,
    pub f_modes: Vec<Mode>,
    pub a_trig: TrigSet,
    pub f_trig: TrigSet,
}

#[derive(Clone, Debug, Serialize)]
pub struct LatticeSummary {
    pub lambda: [f64; 4],
    pub kappa: f64,
    pub a_modes: usize,
    pub f_modes: usize,
}

fn window(b: &BoxSpec, cut: f64) -> Vec<Mode> {
    let mut r = [0i32; 4];
    for i in 0..4 {
        // largest n with π n / Λ < cut
        let m = (cut * b.lambda[i] / PI).ceil() as i32 - 1;
        r[i] = m.max(0);
    }
    let mut out = Vec::new();
    for a in -r[0]..=r[0] {
        for c in -r[1]..=r[1] {
            for d in -r[2]..=r[2] {
                for e in -r[3]..=r[3] {
                    let n = [a, c, d, e];
                    let p = b.momentum(&n);
                    if p.iter().all(|v| v.abs() < cut) {
                        out.push(n);
                    }
                }
            }
        }
    }
    out
}

pub fn build_lattice(bx: BoxSpec, kappa: f64) -> Result<ModeLattice> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidParameter(format!("kappa must be positive, got {kappa}")));
    }
    for (axis, &l) in bx.lambda.iter().enumerate() {
        let r = kappa * l / PI;
        if (r - r.round()).abs() < 1e-9 * r.max(1.0) {
            return Err(Error::ResonantCutoff { kappa, axis });
        }
    }
    let a_modes = window(&bx, kappa);
    let f_modes: Vec<Mode> = window(&bx, 2.0 * kappa).into_iter().filter(|n| *n != [0; 4]).collect();
    let a_trig = TrigSet::from_modes(&a_modes);
    let f_trig = TrigSet::from_modes(&f_modes);
    Ok(ModeLattice { bx, kappa, a_modes, f_modes, a_trig, f_trig })
}

impl ModeLattice {
    pub fn summary(&self) -> LatticeSummary {
        LatticeSummary {
            lambda: self.bx.lambda,
            kappa: self.kappa,
            a_modes: self.a_modes.len(),
            f_modes: self.f_modes.len(),
        }
    }

    pub fn a_coeff_len(&self, dim_g: usize) -> usize {
        3 * dim_g * self.a_trig.len()
    }

    pub fn f_coeff_len(&self, dim_g: usize) -> usize {
        3 * dim_g * self.f_trig.len()
    }
}

#[inline]
pub fn coeff_index(t: usize, i: usize, alpha: usize, dim_g: usize) -> usize {
    (t * 3 + i) * dim_g + alpha
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Space {
    A,
    F,
}

fn trig_of(lat: &ModeLattice, s: Space) -> &TrigSet {
    match s {
        Space::A => &lat.a_trig,
        Space::F => &lat.f_trig,
    }
}

fn check_len(lat: &ModeLattice, s: Space, dim_g: usize, v: &[f64]) -> Result<()> {
    let want = 3 * dim_g * trig_of(lat, s).len();
    if v.len() != want {
        return Err(Error::DimensionMismatch { expected: want, got: v.len() });
    }
    Ok(())
}

/// ∂/∂x₀ applied componentwise.
pub fn apply_d0(lat: &ModeLattice, space: Space, dim_g: usize, coeffs: &[f64]) -> Result<Vec<f64>> {
    check_len(lat, space, dim_g, coeffs)?;
    let trig = trig_of(lat, space);
    let der = trig.derivative(&lat.bx, 0);
    let mut out = vec![0.0; coeffs.len()];
    for (t, d) in der.iter().enumerate() {
        if let Some((t2, fac)) = d {
            for i in 0..3 {
                for a in 0..dim_g {
                    out[coeff_index(*t2, i, a, dim_g)] += fac * coeffs[coeff_index(t, i, a, dim_g)];
                }
            }
        }
    }
    Ok(out)
}

/// (∇×A)_i = Σ ε_{ijk} ∂_j A_k over spatial axes.
pub fn apply_curl(lat: &ModeLattice, space: Space, dim_g: usize, coeffs: &[f64]) -> Result<Vec<f64>> {
    check_len(lat, space, dim_g, coeffs)?;
    let trig = trig_of(lat, space);
    let ders: Vec<_> = (1..4).map(|ax| trig.derivative(&lat.bx, ax)).collect();
    let mut out = vec![0.0; coeffs.len()];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                let e = levi_civita(i, j, k);
                if e == 0.0 {
                    continue;
                }
                for (t, d) in ders[j].iter().enumerate() {
                    if let Some((t2, fac)) = d {
                        for a in 0..dim_g {
                            out[coeff_index(*t2, i, a, dim_g)] += e * fac * coeffs[coeff_index(t, k, a, dim_g)];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Matrix of (d₀ + ∇×) from A coefficients into F coefficients. Columns for
/// the constant A mode are zero (derivatives vanish there).
pub fn derivative_coupling(lat: &ModeLattice, dim_g: usize) -> DMatrix<f64> {
    let na = lat.a_coeff_len(dim_g);
    let nf = lat.f_coeff_len(dim_g);
    let mut l = DMatrix::zeros(nf, na);
    let b = &lat.bx;
    let map_t = |t: usize| -> Option<usize> {
        let f = lat.a_trig.fns[t];
        if f.kind == TrigKind::Const {
            None
        } else {
            lat.f_trig.find(f.n, f.kind)
        }
    };
    let d0 = lat.a_trig.derivative(b, 0);
    let ds: Vec<_> = (1..4).map(|ax| lat.a_trig.derivative(b, ax)).collect();
    for t in 0..lat.a_trig.len() {
        if let Some((t2, fac)) = d0[t] {
            let tf = map_t(t2).expect("a-mode outside f window");
            for i in 0..3 {
                for a in 0..dim_g {
                    l[(coeff_index(tf, i, a, dim_g), coeff_index(t, i, a, dim_g))] += fac;
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let e = levi_civita(i, j, k);
                    if e == 0.0 {
                        continue;
                    }
                    if let Some((t2, fac)) = ds[j][t] {
                        let tf = map_t(t2).expect("a-mode outside f window");
                        for a in 0..dim_g {
                            l[(coeff_index(tf, i, a, dim_g), coeff_index(t, k, a, dim_g))] += e * fac;
                        }
                    }
                }
            }
        }
    }
    l
}

/// One constraint row: coefficient positions with their weights.
#[derive(Clone, Debug)]
pub struct ConstraintRow {
    pub entries: Vec<(usize, f64)>,
}

/// Restriction of each A component to its gauge hyperplane, split into
/// spatial classes: component i (0-based) is restricted to x₀ = … = x_i = 0.
/// Each class contributes one cosine row and, unless the class is zero, one
/// sine row (sines of a nonzero restricted momentum do not vanish on the
/// hyperplane). Rows are tensored with the identity on 𝔤.
pub fn gauge_constraint_rows(lat: &ModeLattice, dim_g: usize) -> Vec<ConstraintRow> {
    let mut rows = Vec::new();
    for comp in 0..3 {
        // remaining coordinates after restriction
        let keep: Vec<usize> = ((comp + 1)..4).collect();
        let mut groups = BTreeMap::<(Vec<i32>, u8), Vec<(usize, f64)>>::new();
        for (t, f) in lat.a_trig.fns.iter().enumerate() {
            let m: Vec<i32> = keep.iter().map(|&ax| f.n[ax]).collect();
            let zero = m.iter().all(|&v| v == 0);
            let (canon, sign) = if zero || lex_positive(&m) { (m.clone(), 1.0) } else { (m.iter().map(|v| -v).collect(), -1.0) };
            match f.kind {
                // constant is 1/√V against √(2/V) for cos
                TrigKind::Const => groups.entry((canon, 0)).or_default().push((t, std::f64::consts::FRAC_1_SQRT_2)),
                TrigKind::Cos => groups.entry((canon, 0)).or_default().push((t, 1.0)),
                TrigKind::Sin => {
                    if !zero {
                        groups.entry((canon, 1)).or_default().push((t, sign));
                    }
                }
            }
        }
        for (_, members) in groups {
            for a in 0..dim_g {
                rows.push(ConstraintRow {
                    entries: members.iter().map(|&(t, s)| (coeff_index(t, comp, a, dim_g), s)).collect(),
                });
            }
        }
    }
    rows
}

pub fn constraint_matrix(lat: &ModeLattice, dim_g: usize) -> DMatrix<f64> {
    let rows = gauge_constraint_rows(lat, dim_g);
    let mut m = DMatrix::zeros(rows.len(), lat.a_coeff_len(dim_g));
    for (r, row) in rows.iter().enumerate() {
        for &(c, s) in &row.entries {
            m[(r, c)] = s;
        }
    }
    m
}

#[derive(Clone, Debug)]
pub struct FieldBasis {
    /// Columns: orthonormal basis of the constrained A space in coefficient space.
    pub a_basis: DMatrix<f64>,
    pub a_dim: usize,
    /// ℱ₀^κ uses the full trig basis, so its basis matrix is the identity.
    pub f_dim: usize,
    pub dim_g: usize,
}

impl FieldBasis {
    pub fn dims(&self) -> (usize, usize) {
        (self.a_dim, self.f_dim)
    }
}

pub fn constrained_basis(lat: &ModeLattice, dim_g: usize) -> FieldBasis {
    let n = lat.a_coeff_len(dim_g);
    let rows = gauge_constraint_rows(lat, dim_g);
    let mut covered = vec![false; n];
    let mut cols: Vec<Vec<(usize, f64)>> = Vec::new();
    for row in &rows {
        for &(c, _) in &row.entries {
            covered[c] = true;
        }
        // Helmert-type complement of the weight vector w
        let e = &row.entries;
        let mut sk = 0.0;
        for k in 1..e.len() {
            sk += e[k - 1].1 * e[k - 1].1;
            let wk = e[k].1;
            let norm = (sk + sk * sk / (wk * wk)).sqrt();
            let mut v = Vec::with_capacity(k + 1);
            for &(c, w) in &e[..k] {
                v.push((c, w / norm));
            }
            v.push((e[k].0, -sk / wk / norm));
            cols.push(v);
        }
    }
    for (c, &cov) in covered.iter().enumerate() {
        if !cov {
            cols.push(vec![(c, 1.0)]);
        }
    }
    // deterministic order: by smallest coefficient index touched
    cols.sort_by_key(|v| v.iter().map(|x| x.0).min().unwrap());
    let mut b = DMatrix::zeros(n, cols.len());
    for (j, v) in cols.iter().enumerate() {
        for &(c, x) in v {
            b[(c, j)] = x;
        }
    }
    FieldBasis { a_dim: cols.len(), a_basis: b, f_dim: lat.f_coeff_len(dim_g), dim_g }
}

pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    m.clone().singular_values().iter().filter(|&&s| s > tol).count()
}

/// Field value Σ_t c_(t,i,α) φ_t(x) as a 3 × dim_g array.
pub fn evaluate_field(lat: &ModeLattice, space: Space, dim_g: usize, coeffs: &[f64], x: &[f64; 4]) -> Vec<f64> {
    let trig = trig_of(lat, space);
    let mut out = vec![0.0; 3 * dim_g];
    for t in 0..trig.len() {
        let phi = trig.eval(&lat.bx, t, x);
        for i in 0..3 {
            for a in 0..dim_g {
                out[i * dim_g + a] += coeffs[coeff_index(t, i, a, dim_g)] * phi;
            }
        }
    }
    out
}

/// Spatial gradient ∇φ of a time-independent scalar φ = Σ_t c_t φ_t
/// (for each 𝔤 direction α independently), as A coefficients.
pub fn gradient_field(lat: &ModeLattice, dim_g: usize, scalar: &[(usize, usize, f64)]) -> Vec<f64> {
    let mut out = vec![0.0; lat.a_coeff_len(dim_g)];
    for ax in 1..4 {
        let d = lat.a_trig.derivative(&lat.bx, ax);
        for &(t, alpha, c) in scalar {
            if let Some((t2, fac)) = d[t] {
                out[coeff_index(t2, ax - 1, alpha, dim_g)] += fac * c;
            }
        }
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn to_dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
