//! Bosonic perturbation coefficients Θₙ on a finite vertex point set.
//!
//! Θₙ is the λ^{2n} coefficient of exp(Σ C ∂∂) exp(iλ w Σ_z V·J J K) at zero
//! source, where the derivative operator sums over ordered pairs, so every
//! leg pairing carries 2C. Two engines: exhaustive leg-pairing enumeration
//! and brute polynomial differentiation.

use std::collections::HashMap;

use nalgebra::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gauge_form::PropagatorSet;
use crate::lie_core::{levi_civita, LieBasis};

pub type C64 = Complex<f64>;

/// Field block: A legs are J (vertex slots 0, 1), F legs are K (slot 2).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Block {
    A = 0,
    F = 1,
}

#[derive(Clone, Debug)]
pub struct DiscreteVertexModel {
    pub dim_g: usize,
    pub points: Vec<[f64; 4]>,
    /// Quadrature weight per point (uniform cell volume).
    pub weight: f64,
    /// C^{ab}(z_p, z_q)_{r,c}, flattened as [a][b][p][q][r][c], r, c = i·dim_g + α.
    kernels: Vec<C64>,
    /// Nonzero V_{rst} = ε_{ijk} f_{αβγ}.
    vertex: Vec<(usize, usize, usize, f64)>,
}

pub fn vertex_tensor(lie: &LieBasis) -> Vec<(usize, usize, usize, f64)> {
    let d = lie.dim_g;
    let mut out = Vec::new();
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                let e = levi_civita(i, j, k);
                if e == 0.0 {
                    continue;
                }
                for &(a, b, c, v) in lie.f_nonzero() {
                    out.push((i * d + a, j * d + b, k * d + c, e * v));
                }
            }
        }
    }
    out.sort_by_key(|x| (x.0, x.1, x.2));
    out
}

impl DiscreteVertexModel {
    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    /// Legs per field, 3·dim_g.
    pub fn leg_dim(&self) -> usize {
        3 * self.dim_g
    }

    fn offset(&self, a: Block, b: Block, p: usize, q: usize) -> usize {
        let n = self.n_points();
        let d = self.leg_dim();
        ((((a as usize) * 2 + b as usize) * n + p) * n + q) * d * d
    }

    pub fn kernel(&self, a: Block, b: Block, p: usize, q: usize, r: usize, c: usize) -> C64 {
        self.kernels[self.offset(a, b, p, q) + r * self.leg_dim() + c]
    }

    pub fn vertex(&self) -> &[(usize, usize, usize, f64)] {
        &self.vertex
    }

    /// Every block C^{ab}(z_p, z_q) = δ_{pq} δ_{rc}.
    pub fn identity(lie: &LieBasis, n_points: usize, weight: f64) -> Self {
        Self::from_fn(lie, (0..n_points).map(|k| [k as f64, 0.0, 0.0, 0.0]).collect(), weight, |_, _, p, q, r, c| {
            if p == q && r == c {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    pub fn from_fn<F>(lie: &LieBasis, points: Vec<[f64; 4]>, weight: f64, f: F) -> Self
    where
        F: Fn(Block, Block, usize, usize, usize, usize) -> C64,
    {
        let n = points.len();
        let d = 3 * lie.dim_g;
        let mut kernels = vec![C64::new(0.0, 0.0); 4 * n * n * d * d];
        for a in [Block::A, Block::F] {
            for b in [Block::A, Block::F] {
                for p in 0..n {
                    for q in 0..n {
                        let o = ((((a as usize) * 2 + b as usize) * n + p) * n + q) * d * d;
                        for r in 0..d {
                            for c in 0..d {
                                kernels[o + r * d + c] = f(a, b, p, q, r, c);
                            }
                        }
                    }
                }
            }
        }
        DiscreteVertexModel { dim_g: lie.dim_g, points, weight, kernels, vertex: vertex_tensor(lie) }
    }

    /// max |C^{ab}(p,q)_{rc} − C^{ba}(q,p)_{cr}|.
    pub fn symmetry_residual(&self) -> f64 {
        let n = self.n_points();
        let d = self.leg_dim();
        let mut worst: f64 = 0.0;
        for a in [Block::A, Block::F] {
            for b in [Block::A, Block::F] {
                for p in 0..n {
                    for q in 0..n {
                        for r in 0..d {
                            for c in 0..d {
                                worst = worst.max((self.kernel(a, b, p, q, r, c) - self.kernel(b, a, q, p, c, r)).norm());
                            }
                        }
                    }
                }
            }
        }
        worst
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut m = self.clone();
        for v in m.kernels.iter_mut() {
            *v *= s;
        }
        m
    }
}

/// Sample the propagator blocks at the given points.
pub fn tabulate_kernels(props: &PropagatorSet, lie: &LieBasis, points: Vec<[f64; 4]>, weight: f64) -> DiscreteVertexModel {
    let n = points.len();
    let mut tables = HashMap::new();
    for p in 0..n {
        for q in 0..n {
            tables.insert((p, q), props.kernel_at(&points[p], &points[q]));
        }
    }
    DiscreteVertexModel::from_fn(lie, points, weight, |a, b, p, q, r, c| tables[&(p, q)].block(a as usize, b as usize)[(r, c)])
}

#[derive(Clone, Debug, Serialize)]
pub struct WickResult {
    pub n: usize,
    pub value: C64,
    pub pairing_count: usize,
}

pub const MAX_ORDER: usize = 2;

/// All perfect matchings of 0..2m.
pub fn perfect_matchings(m2: usize) -> Vec<Vec<(usize, usize)>> {
    fn rec(rest: &[usize], cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if rest.is_empty() {
            out.push(cur.clone());
            return;
        }
        let a = rest[0];
        for k in 1..rest.len() {
            let mut r: Vec<usize> = rest[1..k].to_vec();
            r.extend_from_slice(&rest[k + 1..]);
            cur.push((a, rest[k]));
            rec(&r, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    let all: Vec<usize> = (0..m2).collect();
    rec(&all, &mut Vec::new(), &mut out);
    out
}

/// Dense tensor with one named leg per axis, every axis of size `dim`.
#[derive(Clone, Debug)]
struct Tensor {
    ids: Vec<usize>,
    data: Vec<C64>,
}

fn pow(d: usize, k: usize) -> usize {
    d.pow(k as u32)
}

impl Tensor {
    /// Multiply axis `ax` by matrix g (new[.. y ..] = Σ_x old[.. x ..] g[x][y]) and rename it.
    fn absorb(&mut self, ax: usize, g: &[C64], dim: usize, new_id: usize) {
        let rank = self.ids.len();
        let inner = pow(dim, rank - ax - 1);
        let outer = pow(dim, ax);
        let mut out = vec![C64::new(0.0, 0.0); self.data.len()];
        for o in 0..outer {
            for y in 0..dim {
                for x in 0..dim {
                    let gv = g[x * dim + y];
                    if gv == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let src = (o * dim + x) * inner;
                    let dst = (o * dim + y) * inner;
                    for k in 0..inner {
                        out[dst + k] += self.data[src + k] * gv;
                    }
                }
            }
        }
        self.data = out;
        self.ids[ax] = new_id;
    }

    /// Trace over axes carrying the same id.
    fn self_trace(&mut self, dim: usize) {
        loop {
            let rank = self.ids.len();
            let mut pair = None;
            'f: for i in 0..rank {
                for j in i + 1..rank {
                    if self.ids[i] == self.ids[j] {
                        pair = Some((i, j));
                        break 'f;
                    }
                }
            }
            let Some((i, j)) = pair else { return };
            let keep: Vec<usize> = (0..rank).filter(|&k| k != i && k != j).collect();
            let mut out = vec![C64::new(0.0, 0.0); pow(dim, keep.len())];
            let mut idx = vec![0usize; rank];
            for (lin, o) in out.iter_mut().enumerate() {
                let mut rem = lin;
                for &k in keep.iter().rev() {
                    idx[k] = rem % dim;
                    rem /= dim;
                }
                for t in 0..dim {
                    idx[i] = t;
                    idx[j] = t;
                    let mut src = 0;
                    for &v in &idx {
                        src = src * dim + v;
                    }
                    *o += self.data[src];
                }
            }
            self.ids = keep.iter().map(|&k| self.ids[k]).collect();
            self.data = out;
        }
    }

    fn contract(&self, other: &Tensor, dim: usize) -> Tensor {
        let shared: Vec<usize> = self.ids.iter().filter(|i| other.ids.contains(i)).copied().collect();
        let a_free: Vec<usize> = (0..self.ids.len()).filter(|&k| !shared.contains(&self.ids[k])).collect();
        let b_free: Vec<usize> = (0..other.ids.len()).filter(|&k| !shared.contains(&other.ids[k])).collect();
        let a_sh: Vec<usize> = shared.iter().map(|s| self.ids.iter().position(|x| x == s).unwrap()).collect();
        let b_sh: Vec<usize> = shared.iter().map(|s| other.ids.iter().position(|x| x == s).unwrap()).collect();
        let strides = |rank: usize| -> Vec<usize> { (0..rank).map(|k| pow(dim, rank - k - 1)).collect() };
        let sa = strides(self.ids.len());
        let sb = strides(other.ids.len());
        let nfa = pow(dim, a_free.len());
        let nfb = pow(dim, b_free.len());
        let nsh = pow(dim, shared.len());
        // offsets of each free/shared multi-index into a and b
        let offs = |axes: &[usize], st: &[usize], count: usize| -> Vec<usize> {
            (0..count)
                .map(|lin| {
                    let mut rem = lin;
                    let mut o = 0;
                    for &ax in axes.iter().rev() {
                        o += (rem % dim) * st[ax];
                        rem /= dim;
                    }
                    o
                })
                .collect()
        };
        let ofa = offs(&a_free, &sa, nfa);
        let ofb = offs(&b_free, &sb, nfb);
        let osa = offs(&a_sh, &sa, nsh);
        let osb = offs(&b_sh, &sb, nsh);
        let mut out = vec![C64::new(0.0, 0.0); nfa * nfb];
        for (i, &fa) in ofa.iter().enumerate() {
            for s in 0..nsh {
                let av = self.data[fa + osa[s]];
                if av == C64::new(0.0, 0.0) {
                    continue;
                }
                let row = &mut out[i * nfb..(i + 1) * nfb];
                for (j, &fb) in ofb.iter().enumerate() {
                    row[j] += av * other.data[fb + osb[s]];
                }
            }
        }
        let mut ids: Vec<usize> = a_free.iter().map(|&k| self.ids[k]).collect();
        ids.extend(b_free.iter().map(|&k| other.ids[k]));
        Tensor { ids, data: out }
    }
}

fn leg_block(slot: usize) -> Block {
    if slot == 2 {
        Block::F
    } else {
        Block::A
    }
}

/// Value of one leg matching for vertices placed at `place`.
fn matching_value(model: &DiscreteVertexModel, vt: &Tensor, place: &[usize], matching: &[(usize, usize)]) -> C64 {
    let d = model.leg_dim();
    let nv = place.len();
    let mut ts: Vec<Tensor> = (0..nv)
        .map(|v| Tensor { ids: vec![3 * v, 3 * v + 1, 3 * v + 2], data: vt.data.clone() })
        .collect();
    for &(l1, l2) in matching {
        let (v1, s1) = (l1 / 3, l1 % 3);
        let (v2, s2) = (l2 / 3, l2 % 3);
        let off = model.offset(leg_block(s1), leg_block(s2), place[v1], place[v2]);
        let g: Vec<C64> = model.kernels[off..off + d * d].iter().map(|v| v * 2.0).collect();
        let ax = ts[v1].ids.iter().position(|&x| x == l1).unwrap();
        ts[v1].absorb(ax, &g, d, l2);
    }
    for t in ts.iter_mut() {
        t.self_trace(d);
    }
    let mut acc = C64::new(1.0, 0.0);
    while !ts.is_empty() {
        if ts[0].ids.is_empty() {
            acc *= ts.remove(0).data[0];
            continue;
        }
        // partner sharing the most legs with the first tensor
        let (k, _) = ts
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, t)| (k, t.ids.iter().filter(|x| ts[0].ids.contains(x)).count()))
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .expect("open legs without partner");
        let b = ts.remove(k);
        let a = ts.remove(0);
        ts.insert(0, a.contract(&b, d));
    }
    acc
}

fn placements(n_points: usize, nv: usize) -> Vec<Vec<usize>> {
    let total = n_points.pow(nv as u32);
    (0..total)
        .map(|mut k| {
            let mut p = vec![0; nv];
            for slot in p.iter_mut().rev() {
                *slot = k % n_points;
                k /= n_points;
            }
            p
        })
        .collect()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

pub fn pairwise_sum_c(v: &[C64]) -> C64 {
    match v.len() {
        0 => C64::new(0.0, 0.0),
        1 => v[0],
        n => pairwise_sum_c(&v[..n / 2]) + pairwise_sum_c(&v[n / 2..]),
    }
}

pub fn theta_n(model: &DiscreteVertexModel, n: usize) -> Result<WickResult> {
    if n > MAX_ORDER {
        return Err(Error::ComplexityGuard(format!("theta_n supports n ≤ {MAX_ORDER}, got {n}")));
    }
    if n == 0 {
        return Ok(WickResult { n, value: C64::new(1.0, 0.0), pairing_count: 1 });
    }
    let d = model.leg_dim();
    let mut dense = vec![C64::new(0.0, 0.0); d * d * d];
    for &(a, b, c, v) in model.vertex() {
        dense[(a * d + b) * d + c] = C64::new(v, 0.0);
    }
    let vt = Tensor { ids: vec![], data: dense };
    let nv = 2 * n;
    let ms = perfect_matchings(3 * nv);
    let places = placements(model.n_points(), nv);
    let jobs: Vec<(usize, usize)> = (0..places.len()).flat_map(|p| (0..ms.len()).map(move |m| (p, m))).collect();
    let vals: Vec<C64> = jobs.par_iter().map(|&(p, m)| matching_value(model, &vt, &places[p], &ms[m])).collect();
    let pref = C64::new(0.0, model.weight).powu(nv as u32) / factorial(nv);
    Ok(WickResult { n, value: pairwise_sum_c(&vals) * pref, pairing_count: jobs.len() })
}

/// Independent oracle: expand (iw Σ_z V J J K)^{2n}/(2n)! as a polynomial and
/// apply D^{3n}/(3n)! with D = Σ_{u,v} G_{uv} ∂_u ∂_v over ordered pairs.
pub fn theta_n_brute(model: &DiscreteVertexModel, n: usize) -> Result<C64> {
    if n > 1 {
        return Err(Error::ComplexityGuard("brute polynomial oracle supports n ≤ 1".into()));
    }
    if n == 0 {
        return Ok(C64::new(1.0, 0.0));
    }
    let d = model.leg_dim();
    let np = model.n_points();
    let var = |p: usize, blk: Block, r: usize| -> u16 { (((p * 2) + blk as usize) * d + r) as u16 };
    type Poly = HashMap<Vec<u16>, C64>;
    let mut vtot: Poly = HashMap::new();
    for p in 0..np {
        for &(a, b, c, v) in model.vertex() {
            let mut mono = vec![var(p, Block::A, a), var(p, Block::A, b), var(p, Block::F, c)];
            mono.sort();
            *vtot.entry(mono).or_default() += C64::new(0.0, model.weight) * v;
        }
    }
    let mul = |x: &Poly, y: &Poly| -> Poly {
        let mut out: Poly = HashMap::new();
        for (mx, cx) in x {
            for (my, cy) in y {
                let mut m = mx.clone();
                m.extend_from_slice(my);
                m.sort();
                *out.entry(m).or_default() += cx * cy;
            }
        }
        out
    };
    let mut poly = vtot.clone();
    for _ in 1..2 * n {
        poly = mul(&poly, &vtot);
    }
    let decode = |u: usize| -> (usize, Block, usize) {
        let r = u % d;
        let pb = u / d;
        (pb / 2, if pb.is_multiple_of(2) { Block::A } else { Block::F }, r)
    };
    let g = |u: usize, v: usize| -> C64 {
        let (p, a, r) = decode(u);
        let (q, b, c) = decode(v);
        model.kernel(a, b, p, q, r, c)
    };
    for _ in 0..3 * n {
        let mut next: Poly = HashMap::new();
        for (mono, coef) in &poly {
            // exponents
            let mut distinct: Vec<(u16, usize)> = Vec::new();
            for &x in mono {
                match distinct.last_mut() {
                    Some((y, e)) if *y == x => *e += 1,
                    _ => distinct.push((x, 1)),
                }
            }
            for (iu, &(u, eu)) in distinct.iter().enumerate() {
                for (iv, &(v, ev)) in distinct.iter().enumerate() {
                    let factor = if iu == iv {
                        if eu < 2 {
                            continue;
                        }
                        (eu * (eu - 1)) as f64
                    } else {
                        (eu * ev) as f64
                    };
                    let gv = g(u as usize, v as usize);
                    if gv == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let mut m = mono.clone();
                    let pu = m.iter().position(|&x| x == u).unwrap();
                    m.remove(pu);
                    let pv = m.iter().position(|&x| x == v).unwrap();
                    m.remove(pv);
                    *next.entry(m).or_default() += coef * gv * factor;
                }
            }
        }
        poly = next;
    }
    let c = poly.get(&Vec::new()).copied().unwrap_or_default();
    Ok(c / (factorial(2 * n) * factorial(3 * n)))
}
