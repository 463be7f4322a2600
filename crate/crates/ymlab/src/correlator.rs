//! Φ-averaged two-point function of A³ along the (0,0,x,0) axis, the
//! flat-Laplacian heuristic kernel, and log-log decay fits.
//!
//! Δ_{μΦ} is inverted mode by mode on transverse polarizations:
//! D_T(p) = (p₀² + |p⃗|²) I − 2iμ M_TT(Φ), with all three polarizations when
//! p⃗ = 0. Each Φ is paired with −Φ, which turns the pair mean into the real
//! part of the kernel.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gauge_form::FormAssembler;
use crate::lie_core::{mass_matrix, LieBasis, PhiVector};
use crate::mode_space::{constrained_basis, LatticeSummary, ModeLattice};
use crate::seeds;

/// Spatial component of A (0-based) whose correlator is measured: A³.
pub const COMPONENT: usize = 2;
/// Torus axis carrying the separation: the third slot of (0,0,x,0).
pub const AXIS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum WorkingSpace {
    Transverse,
    GaugeConstrained,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CorrelatorOptions {
    pub working: WorkingSpace,
    /// Keep the constant mode when μ ≠ 0 (its real part is zero, but a
    /// singular M(Φ) still rejects the draw).
    pub include_constant: bool,
    /// Draws with σ_min(M) below this feed the conditional mean diagnostic.
    pub near_singular: f64,
    pub singular_tol: f64,
}

impl Default for CorrelatorOptions {
    fn default() -> Self {
        CorrelatorOptions { working: WorkingSpace::Transverse, include_constant: true, near_singular: 0.3, singular_tol: 1e-12 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrelationEstimate {
    pub x_values: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// mean × (2π)^{3·dim_g/2}: the unnormalized Gaussian integral.
    pub unnormalized_mean: Vec<f64>,
    pub gaussian_constant: f64,
    /// Accepted antithetic pairs.
    pub n_samples: usize,
    pub rejected: usize,
    pub seed: u64,
    pub mu: f64,
    pub lattice: LatticeSummary,
    pub near_singular_mean: Option<Vec<f64>>,
    pub near_singular_count: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    pub window: (f64, f64),
    pub points: usize,
    pub slope: f64,
    pub slope_err: f64,
    pub d_hat: f64,
    pub d_hat_err: f64,
}

pub fn sample_phi<R: rand::Rng + ?Sized>(lie: &LieBasis, rng: &mut R) -> PhiVector {
    PhiVector::sample(lie.dim_g, rng)
}

pub fn gaussian_constant(dim_g: usize) -> f64 {
    (2.0 * std::f64::consts::PI).powf(1.5 * dim_g as f64)
}

/// Fixed-order pairwise summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

struct SpatialClass {
    p: [f64; 3],
    /// polarization basis, 3 × k (k = 2, or 3 at p⃗ = 0)
    pol: DMatrix<f64>,
    /// p₀ values and their multiplicity-free list for this p⃗
    p0: Vec<f64>,
}

fn spatial_classes(lat: &ModeLattice) -> Vec<SpatialClass> {
    use std::collections::BTreeMap;
    let mut map: BTreeMap<[i32; 3], Vec<f64>> = BTreeMap::new();
    for n in &lat.a_modes {
        if *n == [0; 4] {
            continue;
        }
        let p = lat.bx.momentum(n);
        map.entry([n[1], n[2], n[3]]).or_default().push(p[0]);
    }
    map.into_iter()
        .map(|(sp, p0)| {
            let p = lat.bx.momentum(&[0, sp[0], sp[1], sp[2]]);
            let pv = [p[1], p[2], p[3]];
            let pol = transverse_basis(&pv);
            SpatialClass { p: pv, pol, p0 }
        })
        .collect()
}

fn transverse_basis(p: &[f64; 3]) -> DMatrix<f64> {
    let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    if norm == 0.0 {
        return DMatrix::identity(3, 3);
    }
    let u = nalgebra::Vector3::new(p[0] / norm, p[1] / norm, p[2] / norm);
    // least-aligned unit axis seeds the first transverse vector
    let k = (0..3).min_by(|&a, &b| u[a].abs().partial_cmp(&u[b].abs()).unwrap()).unwrap();
    let mut e = nalgebra::Vector3::zeros();
    e[k] = 1.0;
    let t1 = (e - u * u.dot(&e)).normalize();
    let t2 = u.cross(&t1);
    DMatrix::from_fn(3, 2, |r, c| if c == 0 { t1[r] } else { t2[r] })
}

/// Per draw: Σ_α Re K_{33,αα}(0, x) for each x; None if rejected.
struct DrawKernel {
    values: Vec<f64>,
    sigma_m: f64,
}

fn draw_transverse(
    lat: &ModeLattice,
    classes: &[SpatialClass],
    dg: usize,
    m: Option<&DMatrix<f64>>,
    mu: f64,
    xs: &[f64],
) -> Vec<f64> {
    let v = lat.bx.volume();
    let mut out = vec![0.0; xs.len()];
    for cl in classes {
        let k = cl.pol.ncols();
        let q2: f64 = cl.p.iter().map(|v| v * v).sum();
        // (weights w_j, eigenvalues λ_j) of M_TT seen from the (3, α) entries
        let (w, lam): (Vec<f64>, Vec<f64>) = match m {
            None => {
                let w3: f64 = (0..k).map(|c| cl.pol[(COMPONENT, c)].powi(2)).sum();
                (vec![w3 * dg as f64], vec![0.0])
            }
            Some(m) => {
                let mut tg = DMatrix::zeros(3 * dg, k * dg);
                for i in 0..3 {
                    for c in 0..k {
                        for a in 0..dg {
                            tg[(i * dg + a, c * dg + a)] = cl.pol[(i, c)];
                        }
                    }
                }
                let mtt = tg.transpose() * m * &tg;
                let eig = SymmetricEigen::new(mtt);
                let proj = &tg * &eig.eigenvectors;
                let w = (0..k * dg)
                    .map(|j| (0..dg).map(|a| proj[(COMPONENT * dg + a, j)].powi(2)).sum::<f64>())
                    .collect();
                (w, eig.eigenvalues.iter().copied().collect())
            }
        };
        let p2 = cl.p[AXIS - 1];
        for &p0 in &cl.p0 {
            let s = p0 * p0 + q2;
            let mut g = 0.0;
            for (wj, lj) in w.iter().zip(&lam) {
                g += wj * s / (s * s + 4.0 * mu * mu * lj * lj);
            }
            g /= v;
            for (o, x) in out.iter_mut().zip(xs) {
                *o += g * (p2 * x).cos();
            }
        }
    }
    out
}

fn estimate_from_draws(
    draws: Vec<Option<DrawKernel>>,
    xs: &[f64],
    dg: usize,
    mu: f64,
    seed: u64,
    lat: &ModeLattice,
    opts: &CorrelatorOptions,
) -> Result<CorrelationEstimate> {
    let rejected = draws.iter().filter(|d| d.is_none()).count();
    let ok: Vec<DrawKernel> = draws.into_iter().flatten().collect();
    if ok.is_empty() {
        return Err(Error::InvalidParameter("every draw was rejected".into()));
    }
    let n = ok.len();
    let mut mean = Vec::with_capacity(xs.len());
    let mut stderr = Vec::with_capacity(xs.len());
    for k in 0..xs.len() {
        let col: Vec<f64> = ok.iter().map(|d| d.values[k]).collect();
        let m = pairwise_sum(&col) / n as f64;
        let dev: Vec<f64> = col.iter().map(|v| (v - m) * (v - m)).collect();
        let var = if n > 1 { pairwise_sum(&dev) / (n - 1) as f64 } else { 0.0 };
        mean.push(m);
        stderr.push((var / n as f64).sqrt());
    }
    let near: Vec<&DrawKernel> = ok.iter().filter(|d| d.sigma_m < opts.near_singular).collect();
    let near_singular_mean = if near.is_empty() {
        None
    } else {
        Some((0..xs.len()).map(|k| pairwise_sum(&near.iter().map(|d| d.values[k]).collect::<Vec<_>>()) / near.len() as f64).collect())
    };
    let gc = gaussian_constant(dg);
    Ok(CorrelationEstimate {
        x_values: xs.to_vec(),
        unnormalized_mean: mean.iter().map(|m| m * gc).collect(),
        mean,
        stderr,
        gaussian_constant: gc,
        n_samples: n,
        rejected,
        seed,
        mu,
        lattice: lat.summary(),
        near_singular_count: near.len(),
        near_singular_mean,
    })
}

fn sigma_min_sym(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()))
}

pub fn correlation_e(
    lat: &ModeLattice,
    lie: &LieBasis,
    mu: f64,
    xs: &[f64],
    n_samples: usize,
    seed: u64,
    opts: &CorrelatorOptions,
) -> Result<CorrelationEstimate> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be ≥ 1".into()));
    }
    let dg = lie.dim_g;
    match opts.working {
        WorkingSpace::Transverse => {
            let classes = spatial_classes(lat);
            if mu == 0.0 {
                let v = draw_transverse(lat, &classes, dg, None, 0.0, xs);
                let draws = (0..n_samples).map(|_| Some(DrawKernel { values: v.clone(), sigma_m: f64::INFINITY })).collect();
                return estimate_from_draws(draws, xs, dg, mu, seed, lat, opts);
            }
            let draws: Vec<Option<DrawKernel>> = (0..n_samples)
                .into_par_iter()
                .map(|s| {
                    let mut rng = seeds::stream(seed, "correlator-phi", s as u64);
                    let phi = sample_phi(lie, &mut rng);
                    let m = mass_matrix(lie, &phi).m;
                    let sm = sigma_min_sym(&m);
                    if opts.include_constant && sm < opts.singular_tol {
                        return None;
                    }
                    // the constant mode adds Re((−2iμM)⁻¹) = 0
                    let values = draw_transverse(lat, &classes, dg, Some(&m), mu, xs);
                    Some(DrawKernel { values, sigma_m: sm })
                })
                .collect();
            estimate_from_draws(draws, xs, dg, mu, seed, lat, opts)
        }
        WorkingSpace::GaugeConstrained => {
            let fb = constrained_basis(lat, dg);
            let asm = FormAssembler::new(lat, &fb, lie)?;
            let draws: Vec<Option<DrawKernel>> = (0..n_samples)
                .into_par_iter()
                .map(|s| {
                    let mut rng = seeds::stream(seed, "correlator-phi", s as u64);
                    let phi = sample_phi(lie, &mut rng);
                    let sm = sigma_min_sym(&mass_matrix(lie, &phi).m);
                    let props = asm.assemble(&phi, mu).ok()?.invert().ok()?;
                    let origin = [0.0; 4];
                    let values = xs
                        .iter()
                        .map(|&x| {
                            let mut y = [0.0; 4];
                            y[AXIS] = x;
                            let k = props.kernel_at(&origin, &y).aa;
                            (0..dg).map(|a| k[(COMPONENT * dg + a, COMPONENT * dg + a)].re).sum()
                        })
                        .collect();
                    Some(DrawKernel { values, sigma_m: sm })
                })
                .collect();
            estimate_from_draws(draws, xs, dg, mu, seed, lat, opts)
        }
    }
}

/// ½ Σ_p (1/V) cos(p₂x) Σ_α [p²/(p⁴ + 4μ²M²)]_{(3α),(3α)} for one Φ.
pub fn heuristic_kernel(lat: &ModeLattice, lie: &LieBasis, phi: &PhiVector, mu: f64, xs: &[f64]) -> Vec<f64> {
    let dg = lie.dim_g;
    let eig = SymmetricEigen::new(mass_matrix(lie, phi).m);
    let w: Vec<f64> = (0..3 * dg)
        .map(|j| (0..dg).map(|a| eig.eigenvectors[(COMPONENT * dg + a, j)].powi(2)).sum())
        .collect();
    let v = lat.bx.volume();
    let mut out = vec![0.0; xs.len()];
    for n in &lat.a_modes {
        if *n == [0; 4] {
            continue;
        }
        let p = lat.bx.momentum(n);
        let s: f64 = p.iter().map(|v| v * v).sum();
        let g: f64 = w.iter().zip(eig.eigenvalues.iter()).map(|(wj, lj)| wj * s / (s * s + 4.0 * mu * mu * lj * lj)).sum::<f64>()
            * 0.5
            / v;
        for (o, x) in out.iter_mut().zip(xs) {
            *o += g * (p[AXIS] * x).cos();
        }
    }
    out
}

pub fn heuristic_e(lat: &ModeLattice, lie: &LieBasis, mu: f64, xs: &[f64], n_samples: usize, seed: u64) -> Result<CorrelationEstimate> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be ≥ 1".into()));
    }
    let draws: Vec<Option<DrawKernel>> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = seeds::stream(seed, "heuristic-phi", s as u64);
            let phi = sample_phi(lie, &mut rng);
            let sm = sigma_min_sym(&mass_matrix(lie, &phi).m);
            Some(DrawKernel { values: heuristic_kernel(lat, lie, &phi, mu, xs), sigma_m: sm })
        })
        .collect();
    estimate_from_draws(draws, xs, lie.dim_g, mu, seed, lat, &CorrelatorOptions::default())
}

pub fn fit_decay(est: &CorrelationEstimate, window: (f64, f64)) -> Result<DecayFit> {
    let (lo, hi) = window;
    let xmin = est.x_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let xmax = est.x_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lo < hi) || lo < xmin - 1e-12 || hi > xmax + 1e-12 || lo <= 0.0 {
        return Err(Error::FitDomain(format!("window [{lo}, {hi}] outside sampled range [{xmin}, {xmax}]")));
    }
    let idx: Vec<usize> = (0..est.x_values.len()).filter(|&k| est.x_values[k] >= lo && est.x_values[k] <= hi).collect();
    if idx.len() < 4 {
        return Err(Error::FitDomain(format!("{} points in window, need at least 4", idx.len())));
    }
    if let Some(&k) = idx.iter().find(|&&k| !(est.mean[k] > 0.0)) {
        return Err(Error::FitDomain(format!("nonpositive mean {} at x = {}", est.mean[k], est.x_values[k])));
    }
    let xs: Vec<f64> = idx.iter().map(|&k| est.x_values[k].ln()).collect();
    let ys: Vec<f64> = idx.iter().map(|&k| est.mean[k].ln()).collect();
    let weighted = idx.iter().all(|&k| est.stderr[k] > 0.0);
    let w: Vec<f64> = if weighted {
        idx.iter().map(|&k| (est.mean[k] / est.stderr[k]).powi(2)).collect()
    } else {
        vec![1.0; idx.len()]
    };
    let sw: f64 = w.iter().sum();
    let xb = xs.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let yb = ys.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(&w).map(|(x, w)| w * (x - xb).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).zip(&w).map(|((x, y), w)| w * (x - xb) * (y - yb)).sum();
    let slope = sxy / sxx;
    let slope_err = if weighted {
        (1.0 / sxx).sqrt()
    } else {
        let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - yb - slope * (x - xb)).powi(2)).sum();
        (rss / (xs.len() as f64 - 2.0) / sxx).sqrt()
    };
    Ok(DecayFit { window, points: idx.len(), slope, slope_err, d_hat: (-slope - 2.0) / 2.0, d_hat_err: slope_err / 2.0 })
}

/// Default fit window [Λ₂/10, Λ₂/4] along the separation axis.
pub fn default_window(lat: &ModeLattice) -> (f64, f64) {
    let l = lat.bx.lambda[AXIS];
    (l / 10.0, l / 4.0)
}

/// Evenly spaced separations covering [lo, hi] with `count` points.
pub fn x_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count).map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64).collect()
}
