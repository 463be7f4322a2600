//! su(n) structure constants, adjoint maps, the mass operator M(Φ) on
//! 𝔤⊗ℝ³, and the decay integer d_G.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

pub const KERNEL_TOL: f64 = 1e-8;

type CMat = DMatrix<Complex64>;

/// Orthonormal basis e_a = −iλ_a/2 of su(n) with metric ⟨X,Y⟩ = −2 tr(XY).
#[derive(Clone, Debug)]
pub struct LieBasis {
    pub n: usize,
    pub dim_g: usize,
    f: Vec<f64>,
    nonzero: Vec<(usize, usize, usize, f64)>,
    elems: Vec<CMat>,
}

impl LieBasis {
    #[inline]
    pub fn f(&self, a: usize, b: usize, c: usize) -> f64 {
        self.f[(a * self.dim_g + b) * self.dim_g + c]
    }

    /// Nonzero entries of f as (a, b, c, value).
    pub fn f_nonzero(&self) -> &[(usize, usize, usize, f64)] {
        &self.nonzero
    }

    pub fn element(&self, a: usize) -> &CMat {
        &self.elems[a]
    }

    /// Matrix of Σ x_a e_a.
    pub fn to_matrix(&self, x: &[f64]) -> CMat {
        let mut m = CMat::zeros(self.n, self.n);
        for (a, &xa) in x.iter().enumerate() {
            if xa != 0.0 {
                m += &self.elems[a] * Complex64::new(xa, 0.0);
            }
        }
        m
    }

    /// Coefficients x_a = ⟨X, e_a⟩ = −2 tr(X e_a).
    pub fn coefficients(&self, m: &CMat) -> Vec<f64> {
        self.elems
            .iter()
            .map(|e| (-2.0 * (m * e).trace()).re)
            .collect()
    }

    /// max |f_abc + f_bac|, |f_abc + f_acb|, |f_abc + f_cba|.
    pub fn antisymmetry_residual(&self) -> f64 {
        let d = self.dim_g;
        let mut r: f64 = 0.0;
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    let v = self.f(a, b, c);
                    r = r
                        .max((v + self.f(b, a, c)).abs())
                        .max((v + self.f(a, c, b)).abs())
                        .max((v + self.f(c, b, a)).abs());
                }
            }
        }
        r
    }

    pub fn jacobi_residual(&self) -> f64 {
        let d = self.dim_g;
        let mut r: f64 = 0.0;
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    for e in 0..d {
                        let mut s = 0.0;
                        for m in 0..d {
                            s += self.f(a, b, m) * self.f(m, c, e)
                                + self.f(b, c, m) * self.f(m, a, e)
                                + self.f(c, a, m) * self.f(m, b, e);
                        }
                        r = r.max(s.abs());
                    }
                }
            }
        }
        r
    }
}

pub fn levi_civita(i: usize, j: usize, k: usize) -> f64 {
    if i == j || j == k || i == k {
        return 0.0;
    }
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        _ => -1.0,
    }
}

fn gell_mann(n: usize) -> Vec<CMat> {
    let i = Complex64::i();
    let one = Complex64::new(1.0, 0.0);
    let mut out = Vec::with_capacity(n * n - 1);
    for j in 0..n {
        for k in (j + 1)..n {
            let mut s = CMat::zeros(n, n);
            s[(j, k)] = one;
            s[(k, j)] = one;
            out.push(s);
            let mut a = CMat::zeros(n, n);
            a[(j, k)] = -i;
            a[(k, j)] = i;
            out.push(a);
        }
    }
    for l in 1..n {
        let c = (2.0 / (l * (l + 1)) as f64).sqrt();
        let mut d = CMat::zeros(n, n);
        for m in 0..l {
            d[(m, m)] = Complex64::new(c, 0.0);
        }
        d[(l, l)] = Complex64::new(-(l as f64) * c, 0.0);
        out.push(d);
    }
    out
}

pub fn build_su_basis(n: usize) -> Result<LieBasis> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("su(n) needs n >= 2, got {n}")));
    }
    let half_i = Complex64::new(0.0, -0.5);
    let elems: Vec<CMat> = gell_mann(n).into_iter().map(|l| l * half_i).collect();
    let d = elems.len();
    let mut f = vec![0.0; d * d * d];
    let mut nonzero = Vec::new();
    for a in 0..d {
        for b in 0..d {
            let comm = &elems[a] * &elems[b] - &elems[b] * &elems[a];
            for c in 0..d {
                let mut v = (-2.0 * (&comm * &elems[c]).trace()).re;
                // entries are algebraic numbers like 1, 1/2, √3/2; drop rounding dust
                if v.abs() < 1e-14 {
                    v = 0.0;
                }
                f[(a * d + b) * d + c] = v;
                if v != 0.0 {
                    nonzero.push((a, b, c, v));
                }
            }
        }
    }
    Ok(LieBasis { n, dim_g: d, f, nonzero, elems })
}

/// (ad_x)_{γβ} = Σ_α x_α f_{αβγ}.
pub fn ad(basis: &LieBasis, x: &[f64]) -> DMatrix<f64> {
    let d = basis.dim_g;
    let mut m = DMatrix::zeros(d, d);
    for &(a, b, c, v) in basis.f_nonzero() {
        m[(c, b)] += x[a] * v;
    }
    m
}

pub fn centralizer_dim_tol(basis: &LieBasis, x: &[f64], tol: f64) -> usize {
    let m = ad(basis, x);
    let sv = m.singular_values();
    sv.iter().filter(|&&s| s <= tol).count()
}

pub fn centralizer_dim(basis: &LieBasis, x: &[f64]) -> usize {
    centralizer_dim_tol(basis, x, KERNEL_TOL)
}

/// δ₀ = i·diag(1, …, 1, −(n−1)): centralizer s(u(n−1)⊕u(1)).
pub fn delta0(basis: &LieBasis) -> Vec<f64> {
    let n = basis.n;
    let mut m = CMat::zeros(n, n);
    for k in 0..n - 1 {
        m[(k, k)] = Complex64::new(0.0, 1.0);
    }
    m[(n - 1, n - 1)] = Complex64::new(0.0, -((n - 1) as f64));
    basis.coefficients(&m)
}

pub fn d_g(basis: &LieBasis) -> Result<usize> {
    let x = delta0(basis);
    let cdim = centralizer_dim(basis, &x);
    let d = basis.dim_g - cdim;
    let closed = 2 * basis.n - 2;
    if d != closed {
        return Err(Error::Internal(format!(
            "constructed centralizer gives d_G = {d}, closed form 2n-2 = {closed}"
        )));
    }
    Ok(d)
}

/// Φ ∈ 𝔤⊗ℝ³ stored as a 3 × dim_g matrix; row i is Φ_i.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiVector {
    pub dim_g: usize,
    pub coeffs: Vec<[f64; 3]>,
}

impl PhiVector {
    pub fn zeros(dim_g: usize) -> Self {
        PhiVector { dim_g, coeffs: vec![[0.0; 3]; dim_g] }
    }

    /// From rows Φ_1, Φ_2, Φ_3.
    pub fn from_rows(rows: [&[f64]; 3]) -> Result<Self> {
        let d = rows[0].len();
        if rows[1].len() != d || rows[2].len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: rows[1].len().min(rows[2].len()) });
        }
        let mut p = Self::zeros(d);
        for (i, row) in rows.iter().enumerate() {
            for (a, &v) in row.iter().enumerate() {
                p.coeffs[a][i] = v;
            }
        }
        Ok(p)
    }

    /// Φ_i = e_i (needs dim_g ≥ 3).
    pub fn canonical(dim_g: usize) -> Self {
        let mut p = Self::zeros(dim_g);
        for i in 0..3.min(dim_g) {
            p.coeffs[i][i] = 1.0;
        }
        p
    }

    #[inline]
    pub fn get(&self, i: usize, alpha: usize) -> f64 {
        self.coeffs[alpha][i]
    }

    pub fn set(&mut self, i: usize, alpha: usize, v: f64) {
        self.coeffs[alpha][i] = v;
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.coeffs.iter().map(|c| c[i]).collect()
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().flat_map(|c| c.iter()).map(|v| v * v).sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut p = self.clone();
        for c in p.coeffs.iter_mut() {
            for v in c.iter_mut() {
                *v *= s;
            }
        }
        p
    }

    pub fn sample<R: rand::Rng + ?Sized>(dim_g: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(dim_g);
        for i in 0..3 {
            for a in 0..dim_g {
                let v: f64 = StandardNormal.sample(rng);
                p.coeffs[a][i] = v;
            }
        }
        p
    }
}

/// Real symmetric operator on 𝔤⊗ℝ³, index (i, α) ↦ i·dim_g + α.
#[derive(Clone, Debug)]
pub struct MassMatrix {
    pub m: DMatrix<f64>,
}

impl MassMatrix {
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }
}

pub fn mass_matrix(basis: &LieBasis, phi: &PhiVector) -> MassMatrix {
    let d = basis.dim_g;
    let mut m = DMatrix::zeros(3 * d, 3 * d);
    for &(a, b, c, v) in basis.f_nonzero() {
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    continue;
                }
                let k = 3 - i - j;
                let pk = phi.get(k, c);
                if pk != 0.0 {
                    m[(i * d + a, j * d + b)] += levi_civita(i, j, k) * v * pk;
                }
            }
        }
    }
    let mt = m.transpose();
    MassMatrix { m: (m + mt) * 0.5 }
}

/// Σ ε_{ijk} f_{αβγ} v^i_α w^j_β Φ^k_γ, by direct triple sum.
pub fn mass_bilinear(basis: &LieBasis, phi: &PhiVector, v: &[f64], w: &[f64]) -> f64 {
    let d = basis.dim_g;
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                let e = levi_civita(i, j, k);
                if e == 0.0 {
                    continue;
                }
                for a in 0..d {
                    for b in 0..d {
                        for c in 0..d {
                            s += e * basis.f(a, b, c) * v[i * d + a] * w[j * d + b] * phi.get(k, c);
                        }
                    }
                }
            }
        }
    }
    s
}

#[derive(Clone, Debug, Serialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eta: f64,
}

pub fn mass_spectrum(m: &MassMatrix) -> Spectrum {
    let eig = SymmetricEigen::new(m.m.clone());
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let eta = ev.iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
    Spectrum { eigenvalues: ev, eta: if eta.is_finite() { eta } else { 0.0 } }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanResult {
    pub samples: usize,
    pub table: Vec<(f64, f64)>,
    pub window: (f64, f64),
    pub slope: f64,
    pub points_in_fit: usize,
}

/// Empirical P[σ_min(M(Φ)) < t] over standard-Gaussian Φ and the
/// least-squares slope of log P against log t inside `window`.
pub fn singular_fraction_scan(
    basis: &LieBasis,
    sample_count: usize,
    thresholds: &[f64],
    window: (f64, f64),
    seed: u64,
) -> Result<ScanResult> {
    if thresholds.is_empty() {
        return Err(Error::InvalidParameter("empty threshold list".into()));
    }
    if sample_count == 0 {
        return Err(Error::InvalidParameter("sample_count must be positive".into()));
    }
    let sigmas: Vec<f64> = (0..sample_count as u64)
        .into_par_iter()
        .map(|s| {
            let mut rng = seeds::stream(seed, "singular-scan", s);
            let phi = PhiVector::sample(basis.dim_g, &mut rng);
            mass_spectrum(&mass_matrix(basis, &phi)).eta
        })
        .collect();
    let table: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&t| {
            let c = sigmas.iter().filter(|&&s| s < t).count();
            (t, c as f64 / sample_count as f64)
        })
        .collect();
    let pts: Vec<(f64, f64)> = table
        .iter()
        .filter(|(t, p)| *t >= window.0 && *t <= window.1 && *p > 0.0)
        .map(|(t, p)| (t.ln(), p.ln()))
        .collect();
    let slope = if pts.len() >= 2 { ls_slope(&pts) } else { f64::NAN };
    Ok(ScanResult { samples: sample_count, table, window, slope, points_in_fit: pts.len() })
}

pub fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

pub fn log_thresholds(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1).max(1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn su2_structure_constants() {
        let b = build_su_basis(2).unwrap();
        assert_eq!(b.dim_g, 3);
        assert!((b.f(0, 1, 2) - 1.0).abs() < 1e-15);
        assert!((b.f(1, 2, 0) - 1.0).abs() < 1e-15);
        assert!((b.f(1, 0, 2) + 1.0).abs() < 1e-15);
        assert_eq!(b.f(0, 0, 1), 0.0);
        assert!(b.antisymmetry_residual() < 1e-12);
        assert!(b.jacobi_residual() < 1e-12);
    }

    #[test]
    fn su3_su4_jacobi_and_antisymmetry() {
        for n in [3, 4] {
            let b = build_su_basis(n).unwrap();
            assert_eq!(b.dim_g, n * n - 1);
            assert!(b.antisymmetry_residual() < 1e-12);
            assert!(b.jacobi_residual() < 1e-12);
        }
    }

    #[test]
    fn basis_is_orthonormal() {
        let b = build_su_basis(3).unwrap();
        for a in 0..b.dim_g {
            for c in 0..b.dim_g {
                let g = (-2.0 * (b.element(a) * b.element(c)).trace()).re;
                let want = if a == c { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rejects_small_n() {
        assert!(matches!(build_su_basis(1), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn ad_of_e1_in_su2() {
        let b = build_su_basis(2).unwrap();
        let m = ad(&b, &[1.0, 0.0, 0.0]);
        // kernel is span{e1}
        let k = &m * nalgebra::DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!(k.norm() < 1e-15);
        assert_eq!(centralizer_dim(&b, &[1.0, 0.0, 0.0]), 1);
        let ev = m.complex_eigenvalues();
        let mut im: Vec<f64> = ev.iter().map(|z| z.im).collect();
        im.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((im[0] + 1.0).abs() < 1e-12 && im[1].abs() < 1e-12 && (im[2] - 1.0).abs() < 1e-12);
        assert!(ev.iter().all(|z| z.re.abs() < 1e-12));
    }

    #[test]
    fn ad_x_annihilates_x() {
        let b = build_su_basis(3).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..8).map(|_| StandardNormal.sample(&mut rng)).collect();
        let v = ad(&b, &x) * nalgebra::DVector::from_vec(x.clone());
        assert!(v.norm() < 1e-13);
        assert_eq!(ad(&b, &[0.0; 8]).norm(), 0.0);
    }

    #[test]
    fn centralizers() {
        let b2 = build_su_basis(2).unwrap();
        assert_eq!(centralizer_dim(&b2, &[0.0; 3]), 3);
        assert_eq!(centralizer_dim(&b2, &[0.3, -1.2, 0.7]), 1);
        let b3 = build_su_basis(3).unwrap();
        assert_eq!(centralizer_dim(&b3, &delta0(&b3)), 4);
    }

    #[test]
    fn d_g_matches_closed_form() {
        for n in 2..=4 {
            let b = build_su_basis(n).unwrap();
            assert_eq!(d_g(&b).unwrap(), 2 * n - 2);
        }
    }

    #[test]
    fn golden_su2_spectrum() {
        let b = build_su_basis(2).unwrap();
        let s = mass_spectrum(&mass_matrix(&b, &PhiVector::canonical(3)));
        let want = [-1.0, -1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 2.0];
        for (g, w) in s.eigenvalues.iter().zip(want.iter()) {
            assert!((g - w).abs() < 1e-10, "{:?}", s.eigenvalues);
        }
        assert!((s.eta - 1.0).abs() < 1e-10);
    }

    #[test]
    fn golden_closed_form_action() {
        // M v = δ_{iα} tr(v) − v^α_i for canonical su(2) Φ
        let b = build_su_basis(2).unwrap();
        let m = mass_matrix(&b, &PhiVector::canonical(3));
        let v: Vec<f64> = (0..9).map(|k| (k as f64 * 0.37).sin()).collect();
        let mv = &m.m * nalgebra::DVector::from_vec(v.clone());
        let tr = v[0] + v[4] + v[8];
        for i in 0..3 {
            for a in 0..3 {
                let want = if i == a { tr } else { 0.0 } - v[a * 3 + i];
                assert!((mv[i * 3 + a] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kernel_of_single_component_phi() {
        let b = build_su_basis(2).unwrap();
        let mut phi = PhiVector::zeros(3);
        phi.set(0, 0, 2.5);
        let s = mass_spectrum(&mass_matrix(&b, &phi));
        let zeros = s.eigenvalues.iter().filter(|v| v.abs() < 1e-10).count();
        assert_eq!(zeros, 5);
    }

    #[test]
    fn zero_phi() {
        let b = build_su_basis(3).unwrap();
        let m = mass_matrix(&b, &PhiVector::zeros(8));
        assert_eq!(m.m.norm(), 0.0);
        let s = mass_spectrum(&m);
        assert_eq!(s.eta, 0.0);
    }

    #[test]
    fn scan_edges() {
        let b = build_su_basis(2).unwrap();
        assert!(singular_fraction_scan(&b, 0, &[0.1], (0.0, 1.0), 1).is_err());
        assert!(singular_fraction_scan(&b, 10, &[], (0.0, 1.0), 1).is_err());
        let r = singular_fraction_scan(&b, 200, &[1e6], (0.0, 1e7), 1).unwrap();
        assert_eq!(r.table[0].1, 1.0);
    }

    #[test]
    fn eta_positive_for_random_phi() {
        let b = build_su_basis(2).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let phi = PhiVector::sample(3, &mut rng);
            assert!(mass_spectrum(&mass_matrix(&b, &phi)).eta > 0.0);
        }
    }
}
