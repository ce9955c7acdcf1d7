//! First variations with respect to the potential: δM, δμ, δλ_k, δz_k and the
//! Jacobian of q ↦ (z_k).
//!
//! δM·M⁻¹ = ∫₀^T F δα F⁻¹ dt with δα = ½(δq ε₊ + δq̄ ε₋). The integrand is not
//! periodic (G(t+T) = M G(t) M⁻¹), so the trapezoid sum on the stored
//! trajectory is completed by Euler–Maclaurin endpoint terms; the derivatives
//! at t = T follow from those at t = 0 by conjugation with M, and those at 0
//! come from Taylor jets of F and F⁻¹.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::algebra::{dot, mat_vec, Mat2};
use crate::error::{Error, Result};
use crate::frame::Integrator;
use crate::potential::{derivatives_at_zero, dft_minus, dft_plus, Potential};
use crate::spectral::{mu_of, SpectralData};

/// Highest Taylor coefficient of G kept (enough for the h⁶ correction).
const JET: usize = 5;

/// Degenerate eigenvector normalization threshold, relative to |w||v|.
pub const DEGENERATE_TOL: f64 = 1e-8;

fn factorial(m: usize) -> f64 {
    (1..=m).map(|i| i as f64).product()
}

fn alpha_jet(qd: &[C64], lambda: C64) -> Vec<Mat2> {
    (0..=JET)
        .map(|m| {
            let qm = qd[m] / factorial(m);
            let diag = if m == 0 { C64::new(-lambda.im, lambda.re) * 0.5 } else { C64::default() };
            Mat2::new(diag, qm * 0.5, -qm.conj() * 0.5, -diag)
        })
        .collect()
}

/// Variation data of the monodromy at one λ, reusable across directions.
#[derive(Clone, Debug)]
pub struct VariationContext {
    pub lambda: C64,
    pub m: Mat2,
    pub m_inv: Mat2,
    pub mprime: Mat2,
    period: f64,
    n: usize,
    h: f64,
    // F ε₊ F⁻¹ and F ε₋ F⁻¹ at t_j, j = 0..=n
    a_grid: Vec<Mat2>,
    b_grid: Vec<Mat2>,
    a_jet: Vec<Mat2>,
    b_jet: Vec<Mat2>,
}

impl VariationContext {
    pub fn new(q: &Potential, lambda: C64) -> Result<Self> {
        Self::with_integrator(&Integrator::new(q), q, lambda)
    }

    pub fn with_integrator(integ: &Integrator, q: &Potential, lambda: C64) -> Result<Self> {
        let tr = integ.trajectory(lambda, true)?;
        let m = tr.frames[q.n];
        let mprime = tr.dframes.as_ref().expect("derivative requested")[q.n];
        let (ep, em) = (Mat2::eps_plus(), Mat2::eps_minus());
        let mut a_grid = Vec::with_capacity(q.n + 1);
        let mut b_grid = Vec::with_capacity(q.n + 1);
        for f in &tr.frames {
            let fi = f.adjugate();
            a_grid.push(*f * ep * fi);
            b_grid.push(*f * em * fi);
        }
        let al = alpha_jet(&q.derivatives_at_zero(JET), lambda);
        let mut fj = vec![Mat2::identity()];
        let mut fij = vec![Mat2::identity()];
        for mm in 0..JET {
            let mut s = Mat2::zero();
            let mut si = Mat2::zero();
            for i in 0..=mm {
                s += fj[i] * al[mm - i];
                si -= al[i] * fij[mm - i];
            }
            fj.push(s.scale_re(1.0 / (mm + 1) as f64));
            fij.push(si.scale_re(1.0 / (mm + 1) as f64));
        }
        let conj_jet = |x: &Mat2| -> Vec<Mat2> {
            (0..=JET)
                .map(|mm| {
                    let mut s = Mat2::zero();
                    for a in 0..=mm {
                        s += fj[a] * *x * fij[mm - a];
                    }
                    s
                })
                .collect()
        };
        Ok(VariationContext {
            lambda,
            m,
            m_inv: m.adjugate(),
            mprime,
            period: q.period,
            n: q.n,
            h: q.step(),
            a_jet: conj_jet(&ep),
            b_jet: conj_jet(&em),
            a_grid,
            b_grid,
        })
    }

    /// ∫₀^T G from the trapezoid sum `trap` and the Taylor coefficients of G at 0.
    fn em_complete(&self, trap: Mat2, jet: &[Mat2]) -> Mat2 {
        let h2 = self.h * self.h;
        let jump = |p: usize| {
            let x = jet[p].scale_re(factorial(p));
            self.m * x * self.m_inv - x
        };
        trap - jump(1).scale_re(h2 / 12.0) + jump(3).scale_re(h2 * h2 / 720.0)
            - jump(5).scale_re(h2 * h2 * h2 / 30240.0)
    }

    fn combine_jet(&self, da: &[C64], db: &[C64]) -> Vec<Mat2> {
        (0..=JET)
            .map(|mm| {
                let mut s = Mat2::zero();
                for a in 0..=mm {
                    s += self.a_jet[mm - a].scale(da[a]) + self.b_jet[mm - a].scale(db[a]);
                }
                s.scale_re(0.5)
            })
            .collect()
    }

    /// ∫ F δα F⁻¹ for grid samples δq (length n).
    pub fn delta_m_minv(&self, dq: &[C64]) -> Result<Mat2> {
        if dq.len() != self.n {
            return Err(Error::Domain(format!("direction has {} samples, grid has {}", dq.len(), self.n)));
        }
        let g = |j: usize| {
            let d = dq[j % self.n];
            (self.a_grid[j].scale(d) + self.b_grid[j].scale(d.conj())).scale_re(0.5)
        };
        let mut trap = Mat2::zero();
        for j in 0..self.n {
            trap += g(j);
        }
        trap = trap.scale_re(self.h) + (g(self.n) - g(0)).scale_re(0.5 * self.h);
        let d = derivatives_at_zero(&dft_plus(dq), self.period, JET);
        let da: Vec<C64> = d.iter().enumerate().map(|(m, z)| z / factorial(m)).collect();
        let db: Vec<C64> = da.iter().map(|z| z.conj()).collect();
        Ok(self.em_complete(trap, &self.combine_jet(&da, &db)))
    }

    /// δM for grid samples δq.
    pub fn delta_m(&self, dq: &[C64]) -> Result<Mat2> {
        Ok(self.delta_m_minv(dq)? * self.m)
    }

    /// δM for the directions e_k = e^{−2πikt/T}/T (dual to q̂(k)) and i·e_k,
    /// for k = −K..K, as `[re, im]` pairs.
    pub fn delta_m_modes(&self, k_max: usize) -> Vec<[Mat2; 2]> {
        let n = self.n;
        let t = self.period;
        let fft4 = |grid: &[Mat2], plus: bool| -> [Vec<C64>; 4] {
            std::array::from_fn(|e| {
                let col: Vec<C64> = grid[..n].iter().map(|x| x.0[e]).collect();
                if plus {
                    dft_plus(&col)
                } else {
                    dft_minus(&col)
                }
            })
        };
        let fa = fft4(&self.a_grid, false);
        let fb = fft4(&self.b_grid, true);
        let end_a = (self.a_grid[n] - self.a_grid[0]).scale_re(0.5 * self.h / t);
        let end_b = (self.b_grid[n] - self.b_grid[0]).scale_re(0.5 * self.h / t);
        (-(k_max as i64)..=k_max as i64)
            .map(|k| {
                let idx = k.rem_euclid(n as i64) as usize;
                let sa = Mat2(std::array::from_fn(|e| fa[e][idx])).scale_re(self.h / t) + end_a;
                let sb = Mat2(std::array::from_fn(|e| fb[e][idx])).scale_re(self.h / t) + end_b;
                let w = 2.0 * PI * k as f64 / t;
                let da: Vec<C64> =
                    (0..=JET).map(|a| C64::new(0.0, -w).powu(a as u32) / (factorial(a) * t)).collect();
                let db: Vec<C64> = da.iter().map(|z| z.conj()).collect();
                let zero = vec![C64::default(); JET + 1];
                // ∫ δq F ε₊ F⁻¹ and ∫ δq̄ F ε₋ F⁻¹ separately (without the ½)
                let pa = self.em_complete(sa.scale_re(0.5), &self.combine_jet(&da, &zero)).scale_re(2.0);
                let pb = self.em_complete(sb.scale_re(0.5), &self.combine_jet(&zero, &db)).scale_re(2.0);
                let re = (pa + pb).scale_re(0.5) * self.m;
                let im = (pa - pb).scale(C64::new(0.0, 0.5)) * self.m;
                [re, im]
            })
            .collect()
    }
}

pub fn delta_m(q: &Potential, lambda: C64, dq: &[C64]) -> Result<Mat2> {
    VariationContext::new(q, lambda)?.delta_m(dq)
}

/// Right and left eigenvectors v, w of M for μ (M v = μ v, wᵗM = μ wᵗ),
/// each in the better conditioned of its two algebraic forms.
pub fn eigenvectors(m: &Mat2, mu: C64) -> Result<([C64; 2], [C64; 2])> {
    let (a, b, c, d) = (m.a(), m.b(), m.c(), m.d());
    let v = if b.norm() + (mu - a).norm() >= c.norm() + (mu - d).norm() { [b, mu - a] } else { [mu - d, c] };
    let w = if c.norm() + (mu - a).norm() >= b.norm() + (mu - d).norm() { [c, mu - a] } else { [mu - d, b] };
    let nv = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    let nw = (w[0].norm_sqr() + w[1].norm_sqr()).sqrt();
    let wv = dot(w, v);
    // eigenvectors that vanish to round-off (M ≈ ±I) carry no direction
    let floor = 1e-12 * m.norm_inf().max(1.0);
    if !(wv.norm() >= DEGENERATE_TOL * nv * nw) || nv <= floor || nw <= floor {
        return Err(Error::DegenerateEigen);
    }
    Ok((v, w))
}

/// δμ = wᵗ δM v / (wᵗ v) (equivalently μ/(wᵗv)·∫ w(t)ᵗ δα v(t) dt).
pub fn delta_mu_from(m: &Mat2, dm: &Mat2, branch_sign: f64) -> Result<C64> {
    let mu = mu_of(m, branch_sign);
    let (v, w) = eigenvectors(m, mu)?;
    Ok(dot(w, mat_vec(dm, v)) / dot(w, v))
}

pub fn delta_mu(q: &Potential, lambda: C64, dq: &[C64], branch_sign: f64) -> Result<C64> {
    let ctx = VariationContext::new(q, lambda)?;
    delta_mu_from(&ctx.m, &ctx.delta_m(dq)?, branch_sign)
}

fn sign_k(k: i64) -> f64 {
    if k.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// (δλ_k, δz_k) from δM at λ_k.
pub fn zk_variation(ctx: &VariationContext, k: i64, dm: &Mat2) -> (C64, C64) {
    let mp = &ctx.mprime;
    let dl = -(dm.a() - dm.d()) / (mp.a() - mp.d());
    let dz = (dm.b() + mp.b() * dl) * (2.0 * sign_k(k));
    (dl, dz)
}

fn simple_context(q: &Potential, data: &SpectralData, k: i64) -> Result<VariationContext> {
    if k.unsigned_abs() as usize > data.k_max {
        return Err(Error::Domain(format!("index {k} outside computed range ±{}", data.k_max)));
    }
    let e = data.entry(k);
    if e.mult != 1 {
        return Err(Error::MultipleZero { index: k, mult: e.mult });
    }
    VariationContext::new(q, e.lambda)
}

pub fn delta_lambda_k(q: &Potential, data: &SpectralData, k: i64, dq: &[C64]) -> Result<C64> {
    let ctx = simple_context(q, data, k)?;
    let dm = ctx.delta_m(dq)?;
    Ok(zk_variation(&ctx, k, &dm).0)
}

pub fn delta_z_k(q: &Potential, data: &SpectralData, k: i64, dq: &[C64]) -> Result<C64> {
    let ctx = simple_context(q, data, k)?;
    let dm = ctx.delta_m(dq)?;
    Ok(zk_variation(&ctx, k, &dm).1)
}

/// Complex matrix J[r, c] = δz_{rows[r]} along directions[c].
pub fn jacobian_phi(q: &Potential, data: &SpectralData, rows: &[i64], directions: &[Vec<C64>]) -> Result<DMatrix<C64>> {
    let cols: Vec<Result<Vec<C64>>> = rows
        .par_iter()
        .map(|&k| {
            let ctx = simple_context(q, data, k)?;
            directions.iter().map(|d| Ok(zk_variation(&ctx, k, &ctx.delta_m(d)?).1)).collect()
        })
        .collect();
    let mut j = DMatrix::<C64>::zeros(rows.len(), directions.len());
    for (r, row) in cols.into_iter().enumerate() {
        for (c, v) in row?.into_iter().enumerate() {
            j[(r, c)] = v;
        }
    }
    Ok(j)
}

/// Real Jacobian of (Re z_k, Im z_k)_{k ∈ rows} with respect to
/// (Re q̂(m), Im q̂(m))_{m ∈ modes}. In these coordinates the ordinary
/// Fourier transform is the identity.
pub fn jacobian_phi_fourier(q: &Potential, data: &SpectralData, rows: &[i64], modes: &[i64]) -> Result<DMatrix<f64>> {
    let integ = Integrator::new(q);
    let kmax = modes.iter().map(|m| m.unsigned_abs() as usize).max().unwrap_or(0);
    let blocks: Vec<Result<Vec<[C64; 2]>>> = rows
        .par_iter()
        .map(|&k| {
            let e = data.entry(k);
            if e.mult != 1 {
                return Err(Error::MultipleZero { index: k, mult: e.mult });
            }
            let ctx = VariationContext::with_integrator(&integ, q, e.lambda)?;
            let dms = ctx.delta_m_modes(kmax);
            Ok(modes
                .iter()
                .map(|&m| {
                    let [dre, dim] = dms[(m + kmax as i64) as usize];
                    [zk_variation(&ctx, k, &dre).1, zk_variation(&ctx, k, &dim).1]
                })
                .collect())
        })
        .collect();
    let mut j = DMatrix::<f64>::zeros(2 * rows.len(), 2 * modes.len());
    for (r, row) in blocks.into_iter().enumerate() {
        for (c, [zr, zi]) in row?.into_iter().enumerate() {
            j[(2 * r, 2 * c)] = zr.re;
            j[(2 * r + 1, 2 * c)] = zr.im;
            j[(2 * r, 2 * c + 1)] = zi.re;
            j[(2 * r + 1, 2 * c + 1)] = zi.im;
        }
    }
    Ok(j)
}

/// Spectral norm of J − I.
pub fn fourier_deviation(j: &DMatrix<f64>) -> f64 {
    let d = j - DMatrix::<f64>::identity(j.nrows(), j.ncols());
    d.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Samples of the direction e^{−2πikt/T}/T (times `scale`).
pub fn fourier_direction(n: usize, period: f64, k: i64, scale: C64) -> Vec<C64> {
    (0..n)
        .map(|j| C64::from_polar(1.0 / period, -2.0 * PI * (k * j as i64) as f64 / n as f64) * scale)
        .collect()
}
