//! Mollifiers δ_ε, D_ε on a periodic grid and their convolutions.
//!
//! All kernels are products over the four axes, so only 1d periodic tables
//! are stored; 4d norms are fourth powers of 1d norms.

use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};

fn bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - x * x)).exp()
    }
}

fn zeta_norm() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| {
        // trapezoid; spectrally accurate for a compactly supported smooth bump
        let n = 200_000;
        let h = 2.0 / n as f64;
        (0..=n).map(|k| bump(-1.0 + k as f64 * h)).sum::<f64>() * h
    })
}

/// ζ(x) ∝ exp(−1/(1−x²)) on (−1, 1) with unit integral.
pub fn zeta(x: f64) -> f64 {
    bump(x) / zeta_norm()
}

fn psi(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// Smooth step from 1 (t ≤ 0) to 0 (t ≥ 1).
fn step(t: f64) -> f64 {
    let a = psi(1.0 - t);
    let b = psi(t);
    a / (a + b)
}

/// Z(x) = 1 on |x| ≤ 1, smooth decay on 1 < |x| < 2, 0 beyond.
pub fn plateau(x: f64) -> f64 {
    let a = x.abs();
    if a <= 1.0 {
        1.0
    } else if a >= 2.0 {
        0.0
    } else {
        step(a - 1.0)
    }
}

/// Uniform periodic grid of n points with spacing h; offsets j ∈ (−n/2, n/2].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Grid1d {
    pub n: usize,
    pub h: f64,
}

impl Grid1d {
    pub fn new(n: usize, h: f64) -> Result<Self> {
        if n < 4 || !(h > 0.0) {
            return Err(Error::InvalidParameter(format!("grid needs n ≥ 4 and h > 0, got n = {n}, h = {h}")));
        }
        Ok(Grid1d { n, h })
    }

    /// Periodic grid on [−Λ, Λ).
    pub fn periodic(half_period: f64, n: usize) -> Result<Self> {
        Self::new(n, 2.0 * half_period / n as f64)
    }

    pub fn length(&self) -> f64 {
        self.n as f64 * self.h
    }

    /// Signed offset of table index k.
    pub fn offset(&self, k: usize) -> i64 {
        let k = k as i64;
        let n = self.n as i64;
        if k > n / 2 {
            k - n
        } else {
            k
        }
    }

    pub fn wrap(&self, j: i64) -> usize {
        j.rem_euclid(self.n as i64) as usize
    }
}

#[derive(Clone, Debug)]
pub struct MollifierPair {
    pub epsilon: f64,
    pub grid: Grid1d,
    /// 1d tables indexed by wrapped offset.
    pub delta: Vec<f64>,
    pub d: Vec<f64>,
    pub delta_tilde: Vec<f64>,
    pub d_tilde: Vec<f64>,
    /// D̃ ⋆ δ̃
    pub g: Vec<f64>,
}

/// Periodic (a ⋆ b)(j) = Σ_k h a(j − k) b(k), summing k over b's support in
/// ascending offset order.
fn convolve(grid: &Grid1d, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut support: Vec<i64> = (0..grid.n).filter(|&k| b[k] != 0.0).map(|k| grid.offset(k)).collect();
    support.sort();
    (0..grid.n)
        .map(|j| {
            let mut s = 0.0;
            for &k in &support {
                s += grid.h * b[grid.wrap(k)] * a[grid.wrap(j as i64 - k)];
            }
            s
        })
        .collect()
}

pub fn build_mollifiers(epsilon: f64, grid: Grid1d) -> Result<MollifierPair> {
    let cells = epsilon / (4.0 * grid.h);
    if !(cells >= 1.0 - 1e-9) || (cells - cells.round()).abs() > 1e-9 * cells {
        return Err(Error::InvalidParameter(format!(
            "epsilon = {epsilon} must be a positive multiple of 4h = {}",
            4.0 * grid.h
        )));
    }
    if 11.0 * epsilon >= grid.length() {
        return Err(Error::InvalidParameter(format!("epsilon = {epsilon} too large for period {}", grid.length())));
    }
    let h = grid.h;
    let n = grid.n;
    // δ_ε masses h·(2/ε)ζ(2x/ε), summed in ascending offset order to exactly 1
    let mut offs: Vec<i64> = (0..n).map(|k| grid.offset(k)).collect();
    offs.sort();
    let mut mass: Vec<(i64, f64)> = offs
        .iter()
        .map(|&j| (j, h * (2.0 / epsilon) * zeta(2.0 * j as f64 * h / epsilon)))
        .filter(|(_, m)| *m > 0.0)
        .collect();
    let raw: f64 = mass.iter().map(|x| x.1).sum();
    for m in mass.iter_mut() {
        m.1 /= raw;
    }
    let centre = mass.iter().position(|x| x.0 == 0).unwrap();
    for _ in 0..64 {
        let s: f64 = mass.iter().fold(0.0, |a, x| a + x.1);
        if s == 1.0 {
            break;
        }
        mass[centre].1 += 1.0 - s;
    }
    if mass.iter().fold(0.0, |a, x| a + x.1) != 1.0 {
        return Err(Error::Internal("could not normalize delta masses exactly".into()));
    }
    let mut delta = vec![0.0; n];
    for (j, m) in &mass {
        delta[grid.wrap(*j)] = m / h;
    }
    let d: Vec<f64> = (0..n).map(|k| plateau(grid.offset(k) as f64 * h / (2.0 * epsilon))).collect();
    // m_k · D summed in the normalization order: exactly 1 on the plateau
    let d_tilde: Vec<f64> = (0..n)
        .map(|j| {
            let mut s = 0.0;
            for (k, m) in &mass {
                s += m * d[grid.wrap(j as i64 - k)];
            }
            s
        })
        .collect();
    let delta_tilde: Vec<f64> = (0..n)
        .map(|j| {
            let mut s = 0.0;
            for (k, m) in &mass {
                s += m * delta[grid.wrap(j as i64 - k)];
            }
            s
        })
        .collect();
    let g = convolve(&grid, &d_tilde, &delta_tilde);
    Ok(MollifierPair { epsilon, grid, delta, d, delta_tilde, d_tilde, g })
}

#[derive(Clone, Debug, Serialize)]
pub struct MollifierNorms {
    pub epsilon: f64,
    pub h: f64,
    pub delta_tilde_l1: f64,
    pub d_tilde_sup: f64,
    pub containment_exact: bool,
    pub g_l1: f64,
    pub g_l1_over_eps4: f64,
    pub delta_l2: f64,
    pub d_l2: f64,
    pub nonnegative: bool,
}

impl MollifierPair {
    fn l1(&self, t: &[f64]) -> f64 {
        t.iter().map(|v| v.abs()).sum::<f64>() * self.grid.h
    }

    /// 4d ||·||₁ of a product kernel.
    pub fn l1_4d(&self, t: &[f64]) -> f64 {
        self.l1(t).powi(4)
    }

    pub fn l2_4d(&self, t: &[f64]) -> f64 {
        (t.iter().map(|v| v * v).sum::<f64>() * self.grid.h).powi(2)
    }

    pub fn sup_4d(&self, t: &[f64]) -> f64 {
        t.iter().fold(0.0f64, |a, v| a.max(v.abs())).powi(4)
    }

    /// δ̃·D̃ = δ̃ bit-exactly on the 1d table; the 4d statement follows since
    /// every 4d grid value is a product of 1d values.
    pub fn containment_exact(&self) -> bool {
        self.delta_tilde.iter().zip(&self.d_tilde).all(|(a, b)| a * b == *a)
    }

    /// Σ_j h g(j)^k, fourth power: ∫ g^k over the 4-torus grid.
    pub fn g_moment_4d(&self, k: u32) -> f64 {
        (self.g.iter().map(|v| v.powi(k as i32)).sum::<f64>() * self.grid.h).powi(4)
    }

    /// Σ_x h⁴ D̃(x)δ̃(x): the coincident-vertex endpoint integral.
    pub fn same_point_overlap_4d(&self) -> f64 {
        (self.d_tilde.iter().zip(&self.delta_tilde).map(|(a, b)| a * b).sum::<f64>() * self.grid.h).powi(4)
    }

    pub fn value_4d(table: &[f64], grid: &Grid1d, offset: [i64; 4]) -> f64 {
        offset.iter().map(|&j| table[grid.wrap(j)]).product()
    }

    pub fn norms(&self) -> MollifierNorms {
        let g_l1 = self.l1_4d(&self.g);
        MollifierNorms {
            epsilon: self.epsilon,
            h: self.grid.h,
            delta_tilde_l1: self.l1_4d(&self.delta_tilde),
            d_tilde_sup: self.sup_4d(&self.d_tilde),
            containment_exact: self.containment_exact(),
            g_l1,
            g_l1_over_eps4: g_l1 / self.epsilon.powi(4),
            delta_l2: self.l2_4d(&self.delta),
            d_l2: self.l2_4d(&self.d),
            nonnegative: self.delta_tilde.iter().chain(&self.d_tilde).all(|v| *v >= 0.0),
        }
    }
}

/// ε values 4h·m for the given multiples, on one grid.
pub fn epsilon_ladder(grid: &Grid1d, multiples: &[usize]) -> Vec<f64> {
    multiples.iter().map(|&m| 4.0 * grid.h * m as f64).collect()
}
