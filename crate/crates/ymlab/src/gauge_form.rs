//! The free quadratic form on (constrained A) × F, its nondegeneracy, and the
//! propagator blocks.
//!
//! With z = (a, f) in the constrained A basis and the F trig basis the form
//! is zᵀQz where
//!   Q_FF = I,  Q_FA = −iL,  Q_AF = −iLᵀ,  Q_AA = −2iμ Bᵀ(I ⊗ M(Φ))B,
//! L = (d₀ + ∇×)·B. Eliminating F gives S = Q_AA + LᵀL and
//!   C^AA = S⁻¹,  C^AF = iS⁻¹Lᵀ,  C^FF = I − LS⁻¹Lᵀ.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lie_core::{mass_matrix, LieBasis, PhiVector};
use crate::mode_space::{coeff_index, derivative_coupling, FieldBasis, ModeLattice, TrigKind};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;

pub const SINGULAR_TOL: f64 = 1e-10;
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Largest reduced block (a_dim + rank L) for which invert computes σ_min by SVD.
pub const EXACT_SIGMA_MAX: usize = 600;

const I: C64 = C64 { re: 0.0, im: 1.0 };

fn to_complex(m: &DMatrix<f64>) -> CMat {
    m.map(|v| C64::new(v, 0.0))
}

fn split(c: &CMat) -> (DMatrix<f64>, DMatrix<f64>) {
    (c.map(|v| v.re), c.map(|v| v.im))
}

fn join(re: DMatrix<f64>, im: DMatrix<f64>) -> CMat {
    re.zip_map(&im, C64::new)
}

/// c·r with r real, as two real products.
fn mul_cr(c: &CMat, r: &DMatrix<f64>) -> CMat {
    let (a, b) = split(c);
    join(a * r, b * r)
}

fn mul_cc(x: &CMat, y: &CMat) -> CMat {
    let (a, b) = split(x);
    let (c, d) = split(y);
    join(&a * &c - &b * &d, &a * &d + &b * &c)
}

/// r·c with r real.
fn mul_rc(r: &DMatrix<f64>, c: &CMat) -> CMat {
    let (a, b) = split(c);
    join(r * a, r * b)
}

/// Φ- and μ-independent data shared by every form on one lattice.
#[derive(Clone, Debug)]
pub struct FormAssembler {
    pub lat: Arc<ModeLattice>,
    pub basis: Arc<FieldBasis>,
    lie: Arc<LieBasis>,
    /// L = (d₀ + ∇×)B, shape f_dim × a_dim.
    lb: Arc<DMatrix<f64>>,
    gram: Arc<CMat>,
    /// Coordinates of L in an orthonormal basis of its column range (rank × a_dim).
    range_coords: Arc<DMatrix<f64>>,
}

impl FormAssembler {
    pub fn new(lat: &ModeLattice, basis: &FieldBasis, lie: &LieBasis) -> Result<Self> {
        if basis.dim_g != lie.dim_g {
            return Err(Error::DimensionMismatch { expected: lie.dim_g, got: basis.dim_g });
        }
        let na = lat.a_coeff_len(lie.dim_g);
        if basis.a_basis.nrows() != na || basis.f_dim != lat.f_coeff_len(lie.dim_g) {
            return Err(Error::DimensionMismatch { expected: na, got: basis.a_basis.nrows() });
        }
        let lb = derivative_coupling(lat, lie.dim_g) * &basis.a_basis;
        let gram = lb.transpose() * &lb;
        // LᵀL = V Σ² Vᵀ, so L = U Σ Vᵀ has range coordinates Σ Vᵀ
        let range_coords = if gram.nrows() == 0 || lb.nrows() == 0 {
            DMatrix::zeros(0, lb.ncols())
        } else {
            let eig = nalgebra::SymmetricEigen::new(gram.clone());
            let emax = eig.eigenvalues.max().max(0.0);
            let keep: Vec<usize> =
                (0..eig.eigenvalues.len()).filter(|&k| eig.eigenvalues[k] > 1e-14 * emax.max(1.0)).collect();
            DMatrix::from_fn(keep.len(), lb.ncols(), |r, c| eig.eigenvalues[keep[r]].sqrt() * eig.eigenvectors[(c, keep[r])])
        };
        Ok(FormAssembler {
            lat: Arc::new(lat.clone()),
            basis: Arc::new(basis.clone()),
            lie: Arc::new(lie.clone()),
            lb: Arc::new(lb),
            gram: Arc::new(to_complex(&gram)),
            range_coords: Arc::new(range_coords),
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.basis.dims()
    }

    /// The real matrix L = (d₀ + ∇×)B.
    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.lb
    }

    /// Bᵀ(I ⊗ M(Φ))B.
    pub fn mass_overlap(&self, phi: &PhiVector) -> DMatrix<f64> {
        let dg = self.lie.dim_g;
        let m = mass_matrix(&self.lie, phi).m;
        let b = &self.basis.a_basis;
        let blk = 3 * dg;
        let nt = self.lat.a_trig.len();
        let mut mb = DMatrix::zeros(b.nrows(), b.ncols());
        for t in 0..nt {
            let rows = b.rows(t * blk, blk);
            mb.rows_mut(t * blk, blk).copy_from(&(&m * rows));
        }
        b.transpose() * mb
    }

    pub fn assemble(&self, phi: &PhiVector, mu: f64) -> Result<QuadraticForm> {
        if phi.dim_g != self.lie.dim_g {
            return Err(Error::DimensionMismatch { expected: self.lie.dim_g, got: phi.dim_g });
        }
        let q_aa = if mu == 0.0 {
            CMat::zeros(self.basis.a_dim, self.basis.a_dim)
        } else {
            self.mass_overlap(phi).map(|v| C64::new(0.0, -2.0 * mu * v))
        };
        Ok(QuadraticForm {
            a_dim: self.basis.a_dim,
            f_dim: self.basis.f_dim,
            q_aa,
            lb: self.lb.clone(),
            range_coords: self.range_coords.clone(),
            phi: phi.clone(),
            mu,
            asm: self.clone(),
        })
    }
}

pub fn assemble(lat: &ModeLattice, basis: &FieldBasis, lie: &LieBasis, phi: &PhiVector, mu: f64) -> Result<QuadraticForm> {
    FormAssembler::new(lat, basis, lie)?.assemble(phi, mu)
}

#[derive(Clone, Debug)]
pub struct QuadraticForm {
    pub a_dim: usize,
    pub f_dim: usize,
    pub q_aa: CMat,
    lb: Arc<DMatrix<f64>>,
    range_coords: Arc<DMatrix<f64>>,
    pub phi: PhiVector,
    pub mu: f64,
    asm: FormAssembler,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Nondegeneracy {
    pub sigma_min: f64,
    pub inverse_norm: f64,
}

impl QuadraticForm {
    pub fn size(&self) -> usize {
        self.a_dim + self.f_dim
    }

    /// Full matrix, A block first. Only for small forms.
    pub fn dense(&self) -> CMat {
        let (na, nf) = (self.a_dim, self.f_dim);
        let mut q = CMat::zeros(na + nf, na + nf);
        q.view_mut((0, 0), (na, na)).copy_from(&self.q_aa);
        let fa = self.lb.map(|v| -I * v);
        q.view_mut((na, 0), (nf, na)).copy_from(&fa);
        q.view_mut((0, na), (na, nf)).copy_from(&fa.transpose());
        for k in 0..nf {
            q[(na + k, na + k)] = C64::new(1.0, 0.0);
        }
        q
    }

    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.lb
    }

    /// σ_min of the full form. F directions outside the range of L decouple
    /// with singular value 1; the rest reduce to a (a_dim + rank) block.
    pub fn nondegeneracy(&self) -> Nondegeneracy {
        let r = self.range_coords.nrows();
        let na = self.a_dim;
        let mut sigma = if self.f_dim > r { 1.0f64 } else { f64::INFINITY };
        if na + r > 0 {
            let mut q = CMat::zeros(na + r, na + r);
            q.view_mut((0, 0), (na, na)).copy_from(&self.q_aa);
            let w = self.range_coords.map(|v| -I * v);
            q.view_mut((na, 0), (r, na)).copy_from(&w);
            q.view_mut((0, na), (na, r)).copy_from(&w.transpose());
            for k in 0..r {
                q[(na + k, na + k)] = C64::new(1.0, 0.0);
            }
            sigma = sigma.min(q.singular_values().min());
        }
        if !sigma.is_finite() {
            sigma = 0.0;
        }
        Nondegeneracy { sigma_min: sigma, inverse_norm: if sigma > 0.0 { 1.0 / sigma } else { f64::INFINITY } }
    }

    pub fn invert(&self) -> Result<PropagatorSet> {
        self.invert_with_tol(SINGULAR_TOL)
    }

    pub fn invert_with_tol(&self, tol: f64) -> Result<PropagatorSet> {
        // exact σ_min when the reduced block is small; otherwise LU failure and
        // the entry bound ||Q⁻¹||₂ ≥ max|C_ij| detect singular forms
        let exact = self.a_dim + self.range_coords.nrows() <= EXACT_SIGMA_MAX;
        let sigma_min = if exact { Some(self.nondegeneracy().sigma_min) } else { None };
        if let Some(sm) = sigma_min {
            if self.size() > 0 && sm <= tol {
                return Err(Error::SingularForm { sigma_min: sm });
            }
        }
        let s = &self.q_aa + &*self.asm.gram;
        let s_inv = if self.a_dim == 0 {
            CMat::zeros(0, 0)
        } else {
            s.lu().try_inverse().ok_or(Error::SingularForm { sigma_min: sigma_min.unwrap_or(0.0) })?
        };
        if sigma_min.is_none() {
            let big = s_inv.iter().fold(0.0f64, |a, v| a.max(v.norm()));
            if !big.is_finite() || big >= 1.0 / tol {
                return Err(Error::SingularForm { sigma_min: 1.0 / big });
            }
        }
        let c_af = mul_cr(&s_inv, &self.lb.transpose()).map(|v| I * v);
        Ok(PropagatorSet {
            a_dim: self.a_dim,
            f_dim: self.f_dim,
            c_aa: s_inv,
            c_af,
            lb: self.lb.clone(),
            q_aa: self.q_aa.clone(),
            phi: self.phi.clone(),
            mu: self.mu,
            sigma_min,
            lat: self.asm.lat.clone(),
            basis: self.asm.basis.clone(),
        })
    }

    /// F at stationarity for given A: ∂/∂f (zᵀQz) = 0 ⇒ f = −Q_FA a.
    pub fn stationary_f(&self, a: &DVector<C64>) -> DVector<C64> {
        to_complex(&self.lb) * a * I
    }
}

#[derive(Clone, Debug)]
pub struct PropagatorSet {
    pub a_dim: usize,
    pub f_dim: usize,
    pub c_aa: CMat,
    /// a_dim × f_dim; C^FA = C^AFᵀ.
    pub c_af: CMat,
    lb: Arc<DMatrix<f64>>,
    q_aa: CMat,
    pub phi: PhiVector,
    pub mu: f64,
    /// Exact σ_min of the form when it was computed during inversion.
    pub sigma_min: Option<f64>,
    lat: Arc<ModeLattice>,
    basis: Arc<FieldBasis>,
}

/// Position-space kernel blocks, each indexed (i·dim_g + α, j·dim_g + β).
#[derive(Clone, Debug)]
pub struct KernelBlocks {
    pub aa: CMat,
    pub af: CMat,
    pub fa: CMat,
    pub ff: CMat,
}

impl KernelBlocks {
    pub fn block(&self, a: usize, b: usize) -> &CMat {
        match (a, b) {
            (0, 0) => &self.aa,
            (0, _) => &self.af,
            (_, 0) => &self.fa,
            _ => &self.ff,
        }
    }
}

impl PropagatorSet {
    pub fn dim_g(&self) -> usize {
        self.basis.dim_g
    }

    /// C^FF = I − L S⁻¹ Lᵀ (dense, f_dim²).
    pub fn c_ff(&self) -> CMat {
        let mut c = -mul_rc(&self.lb, &mul_cr(&self.c_aa, &self.lb.transpose()));
        for k in 0..self.f_dim {
            c[(k, k)] += C64::new(1.0, 0.0);
        }
        c
    }

    /// max |Q·C − I| over all blocks.
    pub fn residual(&self) -> f64 {
        let (na, nf) = (self.a_dim, self.f_dim);
        if na + nf == 0 {
            return 0.0;
        }
        let mi = C64::new(0.0, -1.0);
        let lt = self.lb.transpose();
        let c_fa = self.c_af.transpose();
        let c_ff = self.c_ff();
        let mut r: f64 = 0.0;
        let amax = |m: &CMat| m.iter().fold(0.0f64, |acc, v| acc.max(v.norm()));
        if na > 0 {
            let mut aa = mul_cc(&self.q_aa, &self.c_aa) + mul_rc(&lt, &c_fa) * mi;
            for k in 0..na {
                aa[(k, k)] -= C64::new(1.0, 0.0);
            }
            r = r.max(amax(&aa));
            let af = mul_cc(&self.q_aa, &self.c_af) + mul_rc(&lt, &c_ff) * mi;
            r = r.max(amax(&af));
            let fa = mul_rc(&self.lb, &self.c_aa) * mi + &c_fa;
            r = r.max(amax(&fa));
        }
        let mut ff = mul_rc(&self.lb, &self.c_af) * mi + c_ff;
        for k in 0..nf {
            ff[(k, k)] -= C64::new(1.0, 0.0);
        }
        r.max(amax(&ff))
    }

    /// Rows (i, α) of the constrained A basis functions evaluated at x.
    fn eval_a(&self, x: &[f64; 4]) -> DMatrix<f64> {
        let dg = self.dim_g();
        let lat = &self.lat;
        let b = &self.basis.a_basis;
        let mut e = DMatrix::zeros(3 * dg, self.a_dim);
        for t in 0..lat.a_trig.len() {
            let phi = lat.a_trig.eval(&lat.bx, t, x);
            for i in 0..3 {
                for a in 0..dg {
                    let src = coeff_index(t, i, a, dg);
                    for k in 0..self.a_dim {
                        e[(i * dg + a, k)] += phi * b[(src, k)];
                    }
                }
            }
        }
        e
    }

    fn eval_f(&self, x: &[f64; 4]) -> DMatrix<f64> {
        let dg = self.dim_g();
        let lat = &self.lat;
        let mut e = DMatrix::zeros(3 * dg, self.f_dim);
        for t in 0..lat.f_trig.len() {
            let phi = lat.f_trig.eval(&lat.bx, t, x);
            for i in 0..3 {
                for a in 0..dg {
                    e[(i * dg + a, coeff_index(t, i, a, dg))] = phi;
                }
            }
        }
        e
    }

    pub fn kernel_at(&self, x: &[f64; 4], y: &[f64; 4]) -> KernelBlocks {
        let ax = self.eval_a(x);
        let ay = self.eval_a(y);
        let fx = self.eval_f(x);
        let fy = self.eval_f(y);
        let aa = mul_cr(&mul_rc(&ax, &self.c_aa), &ay.transpose());
        let af = mul_cr(&mul_rc(&ax, &self.c_af), &fy.transpose());
        let fa = mul_cr(&mul_rc(&fx, &self.c_af.transpose()), &ay.transpose());
        // C^FF = I − L S⁻¹ Lᵀ without materializing f_dim²
        let lx = &fx * &*self.lb;
        let ly = &fy * &*self.lb;
        let ff = to_complex(&(&fx * fy.transpose())) - mul_cr(&mul_rc(&lx, &self.c_aa), &ly.transpose());
        KernelBlocks { aa, af, fa, ff }
    }

    /// Max relative deviation of C^AA from the inverse of Δ_{μΦ} compressed to
    /// the constrained subspace, (Bᵀ Δ B)⁻¹, with Δ applied mode by mode.
    pub fn delta_inverse_check(&self, lie: &LieBasis) -> Result<f64> {
        if self.a_dim == 0 {
            return Ok(0.0);
        }
        let b = &self.basis.a_basis;
        let n = b.nrows();
        let mut db = CMat::zeros(n, self.a_dim);
        for k in 0..self.a_dim {
            let col: Vec<f64> = b.column(k).iter().copied().collect();
            let v = delta_mu_phi_apply(&self.lat, lie, &self.phi, self.mu, &col)?;
            db.set_column(k, &DVector::from_vec(v));
        }
        let comp = to_complex(&b.transpose()) * db;
        let inv = comp.lu().try_inverse().ok_or(Error::SingularForm { sigma_min: 0.0 })?;
        let scale = inv.iter().fold(0.0f64, |a, v| a.max(v.norm()));
        let dev = (&inv - &self.c_aa).iter().fold(0.0f64, |a, v| a.max(v.norm()));
        Ok(dev / scale.max(f64::MIN_POSITIVE))
    }

    /// Binary dump: magic, then little-endian u64 dims and f64 metadata,
    /// then c_aa, c_af, c_ff row-major as (re, im) pairs.
    pub fn dump<W: Write>(&self, w: &mut W) -> Result<()> {
        let dg = self.dim_g();
        w.write_all(DUMP_MAGIC)?;
        for v in [dg as u64, self.a_dim as u64, self.f_dim as u64] {
            w.write_all(&v.to_le_bytes())?;
        }
        let mut meta = vec![self.mu, self.lat.kappa];
        meta.extend_from_slice(&self.lat.bx.lambda);
        for i in 0..3 {
            for a in 0..dg {
                meta.push(self.phi.get(i, a));
            }
        }
        for v in meta {
            w.write_all(&v.to_le_bytes())?;
        }
        for m in [&self.c_aa, &self.c_af, &self.c_ff()] {
            write_cmat(w, m)?;
        }
        Ok(())
    }

    pub fn dump_to_file(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.dump(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

pub const DUMP_MAGIC: &[u8; 8] = b"YMPROP01";

fn write_cmat<W: Write>(w: &mut W, m: &CMat) -> Result<()> {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            w.write_all(&m[(r, c)].re.to_le_bytes())?;
            w.write_all(&m[(r, c)].im.to_le_bytes())?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct PropagatorDump {
    pub dim_g: usize,
    pub a_dim: usize,
    pub f_dim: usize,
    pub mu: f64,
    pub kappa: f64,
    pub lambda: [f64; 4],
    pub phi: Vec<f64>,
    pub c_aa: CMat,
    pub c_af: CMat,
    pub c_ff: CMat,
}

pub fn read_dump<R: Read>(r: &mut R) -> Result<PropagatorDump> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(Error::InvalidParameter("not a propagator dump".into()));
    }
    let mut b8 = [0u8; 8];
    let mut u = || -> Result<u64> {
        r.read_exact(&mut b8)?;
        Ok(u64::from_le_bytes(b8))
    };
    let dg = u()? as usize;
    let na = u()? as usize;
    let nf = u()? as usize;
    let mut f = || -> Result<f64> {
        r.read_exact(&mut b8)?;
        Ok(f64::from_le_bytes(b8))
    };
    let mu = f()?;
    let kappa = f()?;
    let mut lambda = [0.0; 4];
    for l in lambda.iter_mut() {
        *l = f()?;
    }
    let phi = (0..3 * dg).map(|_| f()).collect::<Result<Vec<_>>>()?;
    let mut read_m = |rows: usize, cols: usize| -> Result<CMat> {
        let mut m = CMat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                let re = f()?;
                let im = f()?;
                m[(i, j)] = C64::new(re, im);
            }
        }
        Ok(m)
    };
    let c_aa = read_m(na, na)?;
    let c_af = read_m(na, nf)?;
    let c_ff = read_m(nf, nf)?;
    Ok(PropagatorDump { dim_g: dg, a_dim: na, f_dim: nf, mu, kappa, lambda, phi, c_aa, c_af, c_ff })
}

/// Δ_{μΦ} = −d₀² + ∇×∇× − 2iμ(I ⊗ M(Φ)) on A trig coefficients.
pub fn delta_mu_phi_apply(lat: &ModeLattice, lie: &LieBasis, phi: &PhiVector, mu: f64, coeffs: &[f64]) -> Result<Vec<C64>> {
    use crate::mode_space::{apply_curl, apply_d0, Space};
    let dg = lie.dim_g;
    let d0 = apply_d0(lat, Space::A, dg, coeffs)?;
    let d00 = apply_d0(lat, Space::A, dg, &d0)?;
    let c = apply_curl(lat, Space::A, dg, coeffs)?;
    let cc = apply_curl(lat, Space::A, dg, &c)?;
    let mut out: Vec<C64> = d00.iter().zip(&cc).map(|(a, b)| C64::new(-a + b, 0.0)).collect();
    if mu != 0.0 {
        let m = mass_matrix(lie, phi).m;
        let blk = 3 * dg;
        for t in 0..lat.a_trig.len() {
            let v = DVector::from_column_slice(&coeffs[t * blk..(t + 1) * blk]);
            let mv = &m * v;
            for k in 0..blk {
                out[t * blk + k] += C64::new(0.0, -2.0 * mu * mv[k]);
            }
        }
    }
    Ok(out)
}

/// A transverse free test mode: sin(p₀x₀)·{cos|sin}(p⃗·x⃗)·ê with ê ⊥ p⃗, as
/// A trig coefficients (unnormalized), and its Δ₀ eigenvalue p₀² + |p⃗|².
#[derive(Clone, Debug)]
pub struct TransverseMode {
    pub n: [i32; 4],
    pub spatial_cos: bool,
    pub polarization: [f64; 3],
    pub coeffs: Vec<f64>,
    pub eigenvalue: f64,
}

fn transverse_polarizations(p: &[f64; 3]) -> Vec<[f64; 3]> {
    let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    let units = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    if norm == 0.0 {
        return units.to_vec();
    }
    let u = [p[0] / norm, p[1] / norm, p[2] / norm];
    let mut out: Vec<[f64; 3]> = Vec::new();
    for e in units {
        let mut v = e;
        let d = v[0] * u[0] + v[1] * u[1] + v[2] * u[2];
        for k in 0..3 {
            v[k] -= d * u[k];
        }
        for w in &out {
            let d = v[0] * w[0] + v[1] * w[1] + v[2] * w[2];
            for k in 0..3 {
                v[k] -= d * w[k];
            }
        }
        let nv = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if nv > 1e-6 {
            out.push([v[0] / nv, v[1] / nv, v[2] / nv]);
        }
        if out.len() == 2 {
            break;
        }
    }
    out
}

pub fn transverse_modes(lat: &ModeLattice, dim_g: usize, alpha: usize) -> Vec<TransverseMode> {
    let mut out = Vec::new();
    for n in &lat.a_modes {
        if n[0] <= 0 {
            continue;
        }
        let sp = [n[1], n[2], n[3]];
        // each unordered pair {n⃗, −n⃗} once
        if sp != [0, 0, 0] && !crate::mode_space::lex_positive(&sp) {
            continue;
        }
        let p = lat.bx.momentum(n);
        let pv = [p[1], p[2], p[3]];
        let ev = p.iter().map(|v| v * v).sum::<f64>();
        let m = [n[0], -n[1], -n[2], -n[3]];
        let kinds: &[bool] = if sp == [0, 0, 0] { &[true] } else { &[true, false] };
        for &spatial_cos in kinds {
            for e in transverse_polarizations(&pv) {
                let mut c = vec![0.0; lat.a_coeff_len(dim_g)];
                let mut add = |mode: [i32; 4], kind: TrigKind, s: f64| {
                    let t = lat.a_trig.find(mode, kind).unwrap();
                    for i in 0..3 {
                        c[coeff_index(t, i, alpha, dim_g)] += s * e[i];
                    }
                };
                if sp == [0, 0, 0] {
                    add(*n, TrigKind::Sin, 1.0);
                } else if spatial_cos {
                    // sin a cos b = ½[sin(a+b) + sin(a−b)]
                    add(*n, TrigKind::Sin, 1.0);
                    add(m, TrigKind::Sin, 1.0);
                } else {
                    // sin a sin b = ½[cos(a−b) − cos(a+b)]
                    add(m, TrigKind::Cos, 1.0);
                    add(*n, TrigKind::Cos, -1.0);
                }
                out.push(TransverseMode { n: *n, spatial_cos, polarization: e, coeffs: c, eigenvalue: ev });
            }
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct FreeCheck {
    pub modes_checked: usize,
    pub max_rel_error: f64,
}

/// At Φ = 0 every transverse test mode lies in the constrained space and is
/// an eigenvector of S; compare C^AA on it with 1/(p₀² + |p⃗|²).
pub fn free_transverse_check(props: &PropagatorSet) -> Result<FreeCheck> {
    let dg = props.dim_g();
    let b = &props.basis.a_basis;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for alpha in 0..dg {
        for tm in transverse_modes(&props.lat, dg, alpha) {
            let v = DVector::from_vec(tm.coeffs.clone());
            let beta = b.transpose() * &v;
            let back = b * &beta;
            if (back - &v).amax() > 1e-10 * v.amax() {
                return Err(Error::Internal(format!("transverse mode {:?} not in constrained space", tm.n)));
            }
            let bc = to_complex(&DMatrix::from_column_slice(beta.len(), 1, beta.as_slice()));
            let got = &props.c_aa * &bc;
            let want = 1.0 / tm.eigenvalue;
            for k in 0..beta.len() {
                let err = (got[k] - bc[k] * want).norm() / (beta.amax() * want);
                worst = worst.max(err);
            }
            count += 1;
        }
    }
    Ok(FreeCheck { modes_checked: count, max_rel_error: worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie_core::build_su_basis;
    use crate::mode_space::{build_lattice, constrained_basis, BoxSpec};
    use rand::SeedableRng;
    use std::f64::consts::PI;

    fn setup(lambda: [f64; 4], kappa: f64) -> (ModeLattice, FieldBasis, LieBasis) {
        let lat = build_lattice(BoxSpec::new(lambda).unwrap(), kappa).unwrap();
        let lie = build_su_basis(2).unwrap();
        let fb = constrained_basis(&lat, lie.dim_g);
        (lat, fb, lie)
    }

    fn small() -> (ModeLattice, FieldBasis, LieBasis) {
        setup([PI, PI, 0.4 * PI, 0.4 * PI], 1.2)
    }

    #[test]
    fn ff_only_form() {
        let (lat, fb, lie) = setup([PI; 4], 0.7);
        assert_eq!(fb.a_dim, 0);
        let q = assemble(&lat, &fb, &lie, &PhiVector::canonical(3), 2.0).unwrap();
        assert_eq!(q.dense(), CMat::identity(fb.f_dim, fb.f_dim));
        let nd = q.nondegeneracy();
        assert_eq!(nd.sigma_min, 1.0);
        let p = q.invert().unwrap();
        assert_eq!(p.c_ff(), CMat::identity(fb.f_dim, fb.f_dim));
    }

    #[test]
    fn ff_kernel_is_dirichlet() {
        let (lat, fb, lie) = setup([PI; 4], 0.7);
        let p = assemble(&lat, &fb, &lie, &PhiVector::zeros(3), 0.0).unwrap().invert().unwrap();
        let x = [0.3, -1.1, 2.0, 0.7];
        let y = [1.9, 0.4, -0.2, 2.5];
        let k = p.kernel_at(&x, &y);
        let v = lat.bx.volume();
        let d: f64 = (0..4).map(|i| 1.0 + 2.0 * (x[i] - y[i]).cos()).product::<f64>() - 1.0;
        for r in 0..9 {
            for c in 0..9 {
                let want = if r == c { d / v } else { 0.0 };
                assert!((k.ff[(r, c)] - C64::new(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn form_structure() {
        let (lat, fb, lie) = small();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let phi = PhiVector::sample(3, &mut rng);
        let q = assemble(&lat, &fb, &lie, &phi, 1.7).unwrap();
        let d = q.dense();
        assert!((&d - d.transpose()).iter().all(|v| v.norm() < 1e-12));
        // i·AF real, AA = i·(real symmetric)
        let na = q.a_dim;
        for r in 0..na {
            for c in 0..q.size() {
                let v = d[(r, c)];
                assert!(v.re.abs() < 1e-15);
            }
        }
        let q0 = assemble(&lat, &fb, &lie, &PhiVector::zeros(3), 1.7).unwrap();
        assert!(q0.q_aa.iter().all(|v| *v == C64::new(0.0, 0.0)));
        // linear in μΦ
        let q2 = assemble(&lat, &fb, &lie, &phi.scaled(0.5), 3.4).unwrap();
        assert!((&q.q_aa - &q2.q_aa).iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn reduced_sigma_matches_dense() {
        let (lat, fb, lie) = small();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let asm = FormAssembler::new(&lat, &fb, &lie).unwrap();
        for mu in [0.0, 0.8, -6.0] {
            let q = asm.assemble(&PhiVector::sample(3, &mut rng), mu).unwrap();
            let dense = q.dense().singular_values().min();
            let fast = q.nondegeneracy().sigma_min;
            assert!((dense - fast).abs() < 1e-10 * dense.max(1.0), "{dense} {fast}");
        }
    }

    #[test]
    fn inverse_matches_dense_and_residual() {
        let (lat, fb, lie) = small();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let q = assemble(&lat, &fb, &lie, &PhiVector::sample(3, &mut rng), 2.5).unwrap();
        let p = q.invert().unwrap();
        assert!(p.residual() < RESIDUAL_TOL);
        let inv = q.dense().lu().try_inverse().unwrap();
        let na = q.a_dim;
        assert!((inv.view((0, 0), (na, na)) - &p.c_aa).camax() < 1e-9);
        assert!((inv.view((0, na), (na, q.f_dim)) - &p.c_af).camax() < 1e-9);
        assert!((inv.view((na, na), (q.f_dim, q.f_dim)) - p.c_ff()).camax() < 1e-9);
    }

    #[test]
    fn free_transverse_modes() {
        let (lat, fb, lie) = setup([PI; 4], 1.5);
        let p = assemble(&lat, &fb, &lie, &PhiVector::zeros(3), 0.0).unwrap().invert().unwrap();
        let fc = free_transverse_check(&p).unwrap();
        assert!(fc.modes_checked > 0);
        assert!(fc.max_rel_error < 1e-10, "{fc:?}");
    }

    #[test]
    fn delta_on_constants_and_single_mode() {
        let (lat, _, lie) = setup([PI; 4], 1.5);
        let phi = PhiVector::canonical(3);
        let m = mass_matrix(&lie, &phi).m;
        let t0 = lat.a_trig.find([0; 4], TrigKind::Const).unwrap();
        let mut c = vec![0.0; lat.a_coeff_len(3)];
        for k in 0..9 {
            c[t0 * 9 + k] = (k as f64) - 3.0;
        }
        let out = delta_mu_phi_apply(&lat, &lie, &phi, 0.7, &c).unwrap();
        let v = DVector::from_column_slice(&c[t0 * 9..t0 * 9 + 9]);
        let mv = &m * v;
        for k in 0..9 {
            assert!((out[t0 * 9 + k] - C64::new(0.0, -1.4 * mv[k])).norm() < 1e-13);
        }
        for tm in transverse_modes(&lat, 3, 1) {
            let r = delta_mu_phi_apply(&lat, &lie, &phi, 0.0, &tm.coeffs).unwrap();
            for (a, b) in r.iter().zip(&tm.coeffs) {
                assert!((a.re - tm.eigenvalue * b).abs() < 1e-12 && a.im == 0.0);
            }
        }
    }

    #[test]
    fn compressed_delta_agrees() {
        let (lat, fb, lie) = small();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let p = assemble(&lat, &fb, &lie, &PhiVector::sample(3, &mut rng), 1.3).unwrap().invert().unwrap();
        assert!(p.delta_inverse_check(&lie).unwrap() < 1e-10);
    }

    #[test]
    fn fa_is_transposed_af() {
        let (lat, fb, lie) = small();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let p = assemble(&lat, &fb, &lie, &PhiVector::sample(3, &mut rng), 0.9).unwrap().invert().unwrap();
        let x = [0.2, 1.0, -0.5, 0.3];
        let y = [-1.2, 0.1, 0.9, 1.4];
        let kxy = p.kernel_at(&x, &y);
        let kyx = p.kernel_at(&y, &x);
        assert!((&kxy.fa - kyx.af.transpose()).camax() < 1e-12);
        assert!((&kxy.aa - kyx.aa.transpose()).camax() < 1e-12);
        assert!((&kxy.ff - kyx.ff.transpose()).camax() < 1e-12);
    }

    #[test]
    fn stationary_f_matches_operators() {
        use crate::mode_space::{apply_curl, apply_d0, Space};
        let (lat, fb, lie) = small();
        let q = assemble(&lat, &fb, &lie, &PhiVector::canonical(3), 1.0).unwrap();
        let a: Vec<f64> = (0..fb.a_dim).map(|k| (k as f64 * 0.37).sin()).collect();
        let coeffs = &fb.a_basis * DVector::from_vec(a.clone());
        let f = q.stationary_f(&DVector::from_iterator(a.len(), a.iter().map(|v| C64::new(*v, 0.0))));
        let d = apply_d0(&lat, Space::A, 3, coeffs.as_slice()).unwrap();
        let c = apply_curl(&lat, Space::A, 3, coeffs.as_slice()).unwrap();
        for (t, tf) in lat.a_trig.fns.iter().enumerate() {
            if tf.kind == TrigKind::Const {
                continue;
            }
            let tt = lat.f_trig.find(tf.n, tf.kind).unwrap();
            for k in 0..9 {
                let want = d[t * 9 + k] + c[t * 9 + k];
                assert!((f[tt * 9 + k] - C64::new(0.0, want)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn dump_round_trip() {
        let (lat, fb, lie) = setup([PI, PI, 0.6 * PI, 0.6 * PI], 1.2);
        let p = assemble(&lat, &fb, &lie, &PhiVector::canonical(3), 0.4).unwrap().invert().unwrap();
        let mut buf = Vec::new();
        p.dump(&mut buf).unwrap();
        let d = read_dump(&mut buf.as_slice()).unwrap();
        assert_eq!(d.c_aa, p.c_aa);
        assert_eq!(d.c_af, p.c_af);
        assert_eq!(d.a_dim, p.a_dim);
        assert_eq!(d.mu, 0.4);
        assert_eq!(d.phi[0], 1.0);
    }

    #[test]
    fn singular_form_reported() {
        let (lat, fb, lie) = small();
        let q = assemble(&lat, &fb, &lie, &PhiVector::zeros(3), 0.0).unwrap();
        assert!(matches!(q.invert_with_tol(1e6), Err(Error::SingularForm { .. })));
    }
}
