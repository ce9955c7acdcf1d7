//! Inversion of the perturbed Fourier map on a spectral slice, and the
//! closing-augmented variant producing closed finite-gap curves.
//!
//! Unknowns are the Fourier coefficients q̂(k), N < |k| ≤ K (K = `k_sol`),
//! stored as real pairs (Re, Im); the low band |k| ≤ N is frozen. The ordinary
//! Fourier transform serves as approximate Jacobian (z_k ≈ q̂(k)), with an
//! exact Newton step every few iterations or on stall.
//!
//! Closing is imposed in matrix form: M(λ) = ηI at the closing λ's (and
//! M'(θ)M(θ)⁻¹ = 0 for R³), each an su2-valued equation. At a closed potential
//! M = ±I is a branch point of μ, so the matrix form is the one with a regular
//! Jacobian; six band-limited directions f₁..f₆ carry it.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{su2_project_unchecked, Mat2};
use crate::error::{Error, Result};
use crate::frame::Integrator;
use crate::geometry::{check_closing, ClosingReport, Space};
use crate::potential::{inverse_fourier, FourierSeq, Potential};
use crate::spectral::{mu_of, spectral_data, LocateOptions, SpectralData};
use crate::variation::{delta_mu_from, fourier_deviation, jacobian_phi, jacobian_phi_fourier, VariationContext};

/// Deviation bound used when choosing the slice width N.
pub const SLICE_DEVIATION: f64 = 0.4;
/// Closing residual below which an input counts as coming from a closed curve.
pub const CLOSED_INPUT_TOL: f64 = 1e-6;
/// Number of real closing equations (two su2-valued conditions).
pub const CLOSING_DIM: usize = 6;
/// Step of the complex stencil for δM'.
const STENCIL: f64 = 1e-3;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Slice half-width; chosen automatically when absent.
    #[serde(rename = "N")]
    pub n_slice: Option<usize>,
    pub n_trunc: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub exact_jacobian_every: usize,
    pub damping_max: usize,
    /// Highest mode solved for (default n/4). Not part of the JSON schema.
    #[serde(skip)]
    pub k_sol: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            n_slice: None,
            n_trunc: 8,
            tol: 1e-10,
            max_iter: 30,
            exact_jacobian_every: 5,
            damping_max: 8,
            k_sol: None,
        }
    }
}

impl SolverConfig {
    pub fn from_json(text: &str) -> Result<SolverConfig> {
        let cfg: SolverConfig = serde_json::from_str(text)
            .map_err(|e| Error::parse(Some(e.line()), format!("solver config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Domain(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 || self.exact_jacobian_every == 0 {
            return Err(Error::Domain("max_iter and exact_jacobian_every must be positive".into()));
        }
        if let Some(n) = self.n_slice {
            if self.n_trunc < n {
                return Err(Error::Domain(format!("n_trunc = {} below slice width N = {n}", self.n_trunc)));
            }
        }
        Ok(())
    }

    pub fn k_sol_for(&self, q: &Potential) -> usize {
        self.k_sol.unwrap_or(q.n / 4)
    }
}

/// Potentials sharing q̂(k), |k| ≤ N, with q; optionally widened by directions.
#[derive(Clone, Debug)]
pub struct SliceSpec {
    pub base: Potential,
    pub n_slice: usize,
    pub frozen: FourierSeq,
    pub directions: Vec<Vec<C64>>,
}

impl SliceSpec {
    pub fn new(base: &Potential, n_slice: usize) -> Result<SliceSpec> {
        Ok(SliceSpec { base: base.clone(), n_slice, frozen: base.fourier(n_slice)?, directions: Vec::new() })
    }

    /// Adds directions, which must be band-limited to |k| ≤ N.
    pub fn with_directions(mut self, dirs: Vec<Vec<C64>>) -> Result<SliceSpec> {
        for (i, d) in dirs.iter().enumerate() {
            let p = self.base.with_samples(d.clone());
            let total = p.l2_norm();
            let low = p.fourier(self.n_slice)?.energy(p.period).sqrt();
            if total == 0.0 || (total * total - low * low).max(0.0).sqrt() > 1e-6 * total {
                return Err(Error::Domain(format!("direction {i} not band-limited to |k| <= {}", self.n_slice)));
            }
        }
        self.directions = dirs;
        Ok(self)
    }

    /// Largest deviation of q̂(k), |k| ≤ N, from the frozen values.
    pub fn slice_defect(&self, q: &Potential) -> Result<f64> {
        let f = q.fourier(self.n_slice)?;
        Ok(f.coeffs.iter().zip(&self.frozen.coeffs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClosingTarget {
    pub space: Space,
    /// ±1, read from the start potential and held fixed.
    pub eta: f64,
}

/// Desired z_k for N < |k| ≤ K, plus an optional closing condition.
#[derive(Clone, Debug)]
pub struct Target {
    pub tail: FourierSeq,
    pub closing: Option<ClosingTarget>,
}

impl Target {
    /// z_k of `data` for |k| ≤ n_trunc, 0 for n_trunc < |k| ≤ k_sol.
    pub fn truncation(data: &SpectralData, n_trunc: usize, k_sol: usize) -> Target {
        let mut tail = FourierSeq::zeros(k_sol);
        for k in -(k_sol as i64)..=k_sol as i64 {
            if k.unsigned_abs() as usize <= n_trunc.min(data.k_max) {
                tail.set(k, data.z(k));
            }
        }
        Target { tail, closing: None }
    }

    pub fn with_closing(mut self, closing: ClosingTarget) -> Target {
        self.closing = Some(closing);
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    #[serde(rename = "N")]
    pub n_slice: usize,
    pub n_trunc: usize,
    pub k_sol: usize,
    /// ‖Φ_N(q) − target‖_ℓ² per iterate (index 0 = start).
    pub residual_history: Vec<f64>,
    /// Closing residual per iterate (empty without closing).
    pub closing_history: Vec<f64>,
    /// Iterations that used the exact Jacobian.
    pub exact_steps: Vec<usize>,
    pub final_residual: f64,
    pub final_closing_residual: Option<f64>,
    /// Residual recomputed from scratch at the output.
    pub forward_check_residual: f64,
    pub slice_defect: f64,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub potential: Potential,
    pub data: SpectralData,
    pub report: SolveReport,
}

fn tail_indices(n_slice: usize, k_sol: usize) -> Vec<i64> {
    (-(k_sol as i64)..=k_sol as i64).filter(|k| k.unsigned_abs() as usize > n_slice).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn su2_vec(m: &Mat2) -> [f64; 3] {
    su2_project_unchecked(m).0
}

/// Closing λ's and derivative data of the matrix-form closing residual.
struct ClosingContext {
    space: Space,
    eta: f64,
    // S³: contexts at 1+θ, −1+θ. R³: at θ, then θ+ε, θ−ε, θ+iε, θ−iε.
    ctx: Vec<VariationContext>,
}

fn closing_lambdas(space: Space, theta: f64) -> Vec<C64> {
    match space {
        Space::S3 => vec![C64::new(1.0 + theta, 0.0), C64::new(-1.0 + theta, 0.0)],
        Space::R3 => vec![
            C64::new(theta, 0.0),
            C64::new(theta + STENCIL, 0.0),
            C64::new(theta - STENCIL, 0.0),
            C64::new(theta, STENCIL),
            C64::new(theta, -STENCIL),
        ],
    }
}

/// η = sign Re tr M at the first closing λ.
pub fn closing_sign(q: &Potential, space: Space) -> Result<f64> {
    let lam = closing_lambdas(space, q.theta)[0];
    let m = Integrator::new(q).monodromy_matrix(lam)?;
    Ok(if m.trace().re >= 0.0 { 1.0 } else { -1.0 })
}

impl ClosingContext {
    fn new(q: &Potential, space: Space, eta: f64) -> Result<Self> {
        let integ = Integrator::new(q);
        let ctx = closing_lambdas(space, q.theta)
            .par_iter()
            .map(|&l| VariationContext::with_integrator(&integ, q, l))
            .collect::<Result<Vec<_>>>()?;
        Ok(ClosingContext { space, eta, ctx })
    }

    fn residual(&self) -> [f64; CLOSING_DIM] {
        let mut r = [0.0; CLOSING_DIM];
        let (a, b) = match self.space {
            Space::S3 => (su2_vec(&self.ctx[0].m.scale_re(self.eta)), su2_vec(&self.ctx[1].m.scale_re(self.eta))),
            Space::R3 => {
                let c = &self.ctx[0];
                (su2_vec(&c.m.scale_re(self.eta)), su2_vec(&(c.mprime * c.m_inv)))
            }
        };
        r[..3].copy_from_slice(&a);
        r[3..].copy_from_slice(&b);
        r
    }

    /// Linearized residual from δM at each stored λ.
    fn linear(&self, dms: &[Mat2]) -> [f64; CLOSING_DIM] {
        let mut r = [0.0; CLOSING_DIM];
        let (a, b) = match self.space {
            Space::S3 => (su2_vec(&dms[0].scale_re(self.eta)), su2_vec(&dms[1].scale_re(self.eta))),
            Space::R3 => {
                let c = &self.ctx[0];
                let dmp = ((dms[1] - dms[2]) - (dms[3] - dms[4]).scale(C64::new(0.0, 1.0))).scale_re(0.25 / STENCIL);
                let d = dmp * c.m_inv - c.mprime * c.m_inv * dms[0] * c.m_inv;
                (su2_vec(&dms[0].scale_re(self.eta)), su2_vec(&d))
            }
        };
        r[..3].copy_from_slice(&a);
        r[3..].copy_from_slice(&b);
        r
    }

    fn along(&self, dq: &[C64]) -> Result<[f64; CLOSING_DIM]> {
        let dms = self.ctx.iter().map(|c| c.delta_m(dq)).collect::<Result<Vec<_>>>()?;
        Ok(self.linear(&dms))
    }

    /// Columns for (Re q̂(k), Im q̂(k)), k in `ks`.
    fn along_modes(&self, ks: &[i64], k_max: usize) -> DMatrix<f64> {
        let modes: Vec<Vec<[Mat2; 2]>> = self.ctx.par_iter().map(|c| c.delta_m_modes(k_max)).collect();
        let mut j = DMatrix::zeros(CLOSING_DIM, 2 * ks.len());
        for (c, &k) in ks.iter().enumerate() {
            let idx = (k + k_max as i64) as usize;
            for part in 0..2 {
                let dms: Vec<Mat2> = modes.iter().map(|m| m[idx][part]).collect();
                let col = self.linear(&dms);
                for r in 0..CLOSING_DIM {
                    j[(r, 2 * c + part)] = col[r];
                }
            }
        }
        j
    }

    fn along_all(&self, dirs: &[Vec<C64>]) -> Result<DMatrix<f64>> {
        let cols = dirs.par_iter().map(|d| self.along(d)).collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_fn(CLOSING_DIM, dirs.len(), |r, c| cols[c][r]))
    }
}

/// Matrix-form closing residual ‖(ηM − I, M'M⁻¹)‖ projected to su2 (R³) or
/// at both closing λ's (S³).
pub fn closing_residual(q: &Potential, space: Space, eta: f64) -> Result<f64> {
    Ok(norm(&ClosingContext::new(q, space, eta)?.residual()))
}

/// q of the form a·e^{ct} (for periodic q: zero or a single Fourier mode).
pub fn is_exponential(q: &Potential) -> bool {
    let spec = q.spectrum();
    let total: f64 = spec.iter().map(|z| z.norm_sqr()).sum();
    let top = spec.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
    total == 0.0 || total - top <= 1e-20 * total
}

fn band_modes(n: usize, period: f64, band: usize) -> Vec<Vec<C64>> {
    let mut out = Vec::new();
    for k in -(band as i64)..=band as i64 {
        for scale in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
            out.push(crate::variation::fourier_direction(n, period, k, scale));
        }
    }
    out
}

fn random_band_limited(rng: &mut ChaCha8Rng, n: usize, period: f64, band: usize) -> Vec<C64> {
    let mut c = FourierSeq::zeros(band);
    for k in -(band as i64)..=band as i64 {
        c.set(k, C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    }
    inverse_fourier(&c, n, period).expect("band below Nyquist").samples
}

fn candidates(q: &Potential, band: usize, n_random: usize, seed: u64) -> Vec<Vec<C64>> {
    let mut out = band_modes(q.n, q.period, band);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_random {
        out.push(random_band_limited(&mut rng, q.n, q.period, band));
    }
    out
}

fn min_singular(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().copied().fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug)]
pub struct ClosingDirections {
    pub directions: Vec<Vec<C64>>,
    /// The closing-derivative matrix along the directions.
    pub matrix: DMatrix<C64>,
    pub min_singular: f64,
}

fn rank_threshold(m: &DMatrix<f64>) -> f64 {
    1e-8 * m.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-300)
}

/// Two band-limited directions making the 2×2 matrix of μ-variations at the
/// closing conditions (δμ(1+θ), δμ(−1+θ) for S³; δμ(θ), δμ'(θ) for R³)
/// best conditioned. μ must be a simple eigenvalue there (q not yet closed).
pub fn choose_closing_directions(q: &Potential, space: Space, band: usize, seed: u64) -> Result<ClosingDirections> {
    if is_exponential(q) {
        return Err(Error::Domain("closing directions undefined for q = a*exp(ct) (zero or a single Fourier mode)".into()));
    }
    let integ = Integrator::new(q);
    let th = q.theta;
    let eps = 1e-4;
    let lams: Vec<f64> = match space {
        Space::S3 => vec![1.0 + th, -1.0 + th],
        Space::R3 => vec![th, th + eps, th - eps],
    };
    let ctx = lams
        .par_iter()
        .map(|&l| VariationContext::with_integrator(&integ, q, C64::new(l, 0.0)))
        .collect::<Result<Vec<_>>>()?;
    // branch continuation for the stencil points
    let mu0 = mu_of(&ctx[0].m, 1.0);
    let sign_near = |m: &Mat2| if (mu_of(m, 1.0) - mu0).norm() <= (mu_of(m, -1.0) - mu0).norm() { 1.0 } else { -1.0 };
    let cands = candidates(q, band, 8, seed);
    let rows: Vec<[C64; 2]> = cands
        .par_iter()
        .map(|d| -> Result<[C64; 2]> {
            let dmu = |c: &VariationContext, s: f64| -> Result<C64> { delta_mu_from(&c.m, &c.delta_m(d)?, s) };
            match space {
                Space::S3 => Ok([dmu(&ctx[0], 1.0)?, dmu(&ctx[1], 1.0)?]),
                Space::R3 => {
                    let (sp, sm) = (sign_near(&ctx[1].m), sign_near(&ctx[2].m));
                    Ok([dmu(&ctx[0], 1.0)?, (dmu(&ctx[1], sp)? - dmu(&ctx[2], sm)?) / (2.0 * eps)])
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for i in 0..cands.len() {
        for j in i + 1..cands.len() {
            let m = DMatrix::from_row_slice(2, 2, &[rows[i][0], rows[j][0], rows[i][1], rows[j][1]]);
            let s = m.singular_values().min();
            if s > best.0 {
                best = (s, i, j);
            }
        }
    }
    let (s, i, j) = best;
    let matrix = DMatrix::from_row_slice(2, 2, &[rows[i][0], rows[j][0], rows[i][1], rows[j][1]]);
    let scale = matrix.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if !(s > 1e-8 * scale) || s == 0.0 {
        return Err(Error::Domain(format!("all candidate direction pairs rank-deficient (best singular value {s:.3e})")));
    }
    Ok(ClosingDirections { directions: vec![cands[i].clone(), cands[j].clone()], matrix, min_singular: s })
}

/// Six band-limited directions spanning the matrix-form closing equations,
/// chosen greedily for the best-conditioned 6×6 derivative.
pub fn choose_matrix_closing_directions(
    q: &Potential,
    space: Space,
    band: usize,
    seed: u64,
) -> Result<ClosingDirections> {
    if is_exponential(q) {
        return Err(Error::Domain("closing directions undefined for q = a*exp(ct) (zero or a single Fourier mode)".into()));
    }
    let eta = closing_sign(q, space)?;
    let cc = ClosingContext::new(q, space, eta)?;
    let cands = candidates(q, band, 8, seed);
    let all = cc.along_all(&cands)?;
    let mut chosen: Vec<usize> = Vec::new();
    for _ in 0..CLOSING_DIM {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for c in 0..cands.len() {
            if chosen.contains(&c) {
                continue;
            }
            let mut cols = chosen.clone();
            cols.push(c);
            let s = min_singular(&all.select_columns(cols.iter()));
            if s > best.0 {
                best = (s, c);
            }
        }
        chosen.push(best.1);
    }
    let sub = all.select_columns(chosen.iter());
    let s = min_singular(&sub);
    if !(s > rank_threshold(&all)) {
        return Err(Error::Domain(format!("closing directions degenerate (best singular value {s:.3e})")));
    }
    Ok(ClosingDirections {
        directions: chosen.iter().map(|&c| cands[c].clone()).collect(),
        matrix: sub.map(|x| C64::new(x, 0.0)),
        min_singular: s,
    })
}

/// Smallest N ≥ `n_min` at which the finite section N < |k| ≤ max(4N, N+2) of
/// the Jacobian is within [`SLICE_DEVIATION`] of the identity.
pub fn select_slice_width(q: &Potential, data: &SpectralData, n_min: usize) -> Result<(usize, f64)> {
    let multiple = data.entries.iter().filter(|e| e.mult > 1).map(|e| e.k.unsigned_abs() as usize).max();
    let start = n_min.max(multiple.unwrap_or(0));
    let mut last = f64::NAN;
    for n in start..=data.k_max / 2 {
        let hi = (4 * n).max(n + 2).min(data.k_max);
        let ks = tail_indices(n, hi);
        if ks.is_empty() {
            break;
        }
        let dev = fourier_deviation(&jacobian_phi_fourier(q, data, &ks, &ks)?);
        last = dev;
        if dev < SLICE_DEVIATION {
            return Ok((n, dev));
        }
    }
    Err(Error::Resolution(format!(
        "no slice width N <= {} with Jacobian deviation < {SLICE_DEVIATION} (last {last:.3})",
        data.k_max / 2
    )))
}

struct State {
    q: Potential,
    data: SpectralData,
    rt: Vec<f64>,
    closing: Option<(ClosingContext, [f64; CLOSING_DIM])>,
}

impl State {
    fn tail_norm(&self) -> f64 {
        norm(&self.rt)
    }

    fn closing_norm(&self) -> f64 {
        self.closing.as_ref().map_or(0.0, |(_, r)| norm(r))
    }

    fn merit(&self) -> f64 {
        self.tail_norm().hypot(self.closing_norm())
    }
}

struct Problem<'a> {
    slice: &'a SliceSpec,
    target: &'a Target,
    ks: Vec<i64>,
    k_sol: usize,
}

impl Problem<'_> {
    fn evaluate(&self, q: Potential, warm: Option<&SpectralData>) -> Result<State> {
        let data = spectral_data(&q, self.k_sol, &LocateOptions::default(), warm)?;
        let mut rt = Vec::with_capacity(2 * self.ks.len());
        for &k in &self.ks {
            let r = self.target.tail.get(k) - data.z(k);
            rt.push(r.re);
            rt.push(r.im);
        }
        let closing = match self.target.closing {
            Some(ct) => {
                let cc = ClosingContext::new(&q, ct.space, ct.eta)?;
                let r = cc.residual();
                Some((cc, r))
            }
            None => None,
        };
        Ok(State { q, data, rt, closing })
    }

    fn apply(&self, q: &Potential, dt: &[f64], ds: &[f64], scale: f64) -> Result<Potential> {
        let mut c = FourierSeq::zeros(self.k_sol);
        for (i, &k) in self.ks.iter().enumerate() {
            c.set(k, C64::new(dt[2 * i], dt[2 * i + 1]) * scale);
        }
        let add = inverse_fourier(&c, q.n, q.period)?;
        let mut samples: Vec<C64> = q.samples.iter().zip(&add.samples).map(|(a, b)| a + b).collect();
        for (d, s) in self.slice.directions.iter().zip(ds) {
            samples.iter_mut().zip(d).for_each(|(x, y)| *x += y * (s * scale));
        }
        Ok(q.with_samples(samples))
    }

    /// Step (δt, δs): Fourier preconditioner on the tail, exact closing block.
    fn step(&self, st: &State, exact: bool) -> Result<(Vec<f64>, Vec<f64>)> {
        let m = self.ks.len();
        let nd = self.slice.directions.len();
        let rt = DVector::from_column_slice(&st.rt);
        let Some((cc, rc)) = st.closing.as_ref() else {
            if !exact {
                return Ok((st.rt.clone(), Vec::new()));
            }
            let j = jacobian_phi_fourier(&st.q, &st.data, &self.ks, &self.ks)?;
            let dt = j.lu().solve(&rt).ok_or_else(|| Error::Domain("singular Jacobian".into()))?;
            return Ok((dt.as_slice().to_vec(), Vec::new()));
        };
        let rc = DVector::from_row_slice(&rc.map(|x| -x));
        let j_ct = cc.along_modes(&self.ks, self.k_sol);
        let j_cf = cc.along_all(&self.slice.directions)?;
        if !exact {
            let dt = rt.clone();
            let rhs = &rc - &j_ct * &dt;
            let ds = j_cf.lu().solve(&rhs).ok_or_else(|| Error::Domain("closing block singular".into()))?;
            return Ok((dt.as_slice().to_vec(), ds.as_slice().to_vec()));
        }
        let j_tt = jacobian_phi_fourier(&st.q, &st.data, &self.ks, &self.ks)?;
        let j_tf_c = jacobian_phi(&st.q, &st.data, &self.ks, &self.slice.directions)?;
        let dim = 2 * m + nd;
        let mut j = DMatrix::<f64>::zeros(dim, dim);
        j.view_mut((0, 0), (2 * m, 2 * m)).copy_from(&j_tt);
        for r in 0..m {
            for c in 0..nd {
                j[(2 * r, 2 * m + c)] = j_tf_c[(r, c)].re;
                j[(2 * r + 1, 2 * m + c)] = j_tf_c[(r, c)].im;
            }
        }
        j.view_mut((2 * m, 0), (CLOSING_DIM, 2 * m)).copy_from(&j_ct);
        j.view_mut((2 * m, 2 * m), (CLOSING_DIM, nd)).copy_from(&j_cf);
        let mut rhs = DVector::zeros(dim);
        rhs.rows_mut(0, 2 * m).copy_from(&rt);
        rhs.rows_mut(2 * m, CLOSING_DIM).copy_from(&rc);
        let x = j.lu().solve(&rhs).ok_or_else(|| Error::Domain("singular augmented Jacobian".into()))?;
        Ok((x.rows(0, 2 * m).as_slice().to_vec(), x.rows(2 * m, nd).as_slice().to_vec()))
    }
}

fn solve(slice: &SliceSpec, target: &Target, cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    let q0 = &slice.base;
    let k_sol = target.tail.k_max;
    if k_sol + 1 > q0.n / 2 || k_sol <= slice.n_slice {
        return Err(Error::Domain(format!(
            "solve range K = {k_sol} must satisfy N = {} < K <= n/2 - 1 = {}",
            slice.n_slice,
            q0.n / 2 - 1
        )));
    }
    if let Some(ct) = target.closing {
        if slice.directions.len() != CLOSING_DIM {
            return Err(Error::Domain(format!("closing needs {CLOSING_DIM} directions, got {}", slice.directions.len())));
        }
        if ct.eta.abs() != 1.0 {
            return Err(Error::Domain("closing value must be +1 or -1".into()));
        }
    }
    let prob = Problem { slice, target, ks: tail_indices(slice.n_slice, k_sol), k_sol };
    let mut st = prob.evaluate(q0.clone(), None)?;
    let mut hist = vec![st.tail_norm()];
    let mut chist = if target.closing.is_some() { vec![st.closing_norm()] } else { Vec::new() };
    let mut exact_steps = Vec::new();
    let mut stalled = false;
    let mut it = 0;
    let done = |s: &State| s.tail_norm() < cfg.tol && s.closing_norm() < cfg.tol;
    while !done(&st) {
        if it >= cfg.max_iter {
            return Err(Error::Divergence {
                message: format!("no convergence in {} iterations", cfg.max_iter),
                residual: st.merit(),
            });
        }
        it += 1;
        let mut exact = stalled || it % cfg.exact_jacobian_every == 0;
        let next = loop {
            let (dt, ds) = prob.step(&st, exact)?;
            let mut scale = 1.0;
            let mut accepted = None;
            for _ in 0..=cfg.damping_max {
                if let Ok(trial) = prob.apply(&st.q, &dt, &ds, scale).and_then(|q| prob.evaluate(q, Some(&st.data))) {
                    if trial.merit() < st.merit() {
                        accepted = Some(trial);
                        break;
                    }
                }
                scale *= 0.5;
            }
            match accepted {
                Some(t) => break t,
                None if !exact => exact = true,
                None => {
                    return Err(Error::Divergence {
                        message: "target outside local neighborhood; increase n or reduce perturbation".into(),
                        residual: st.merit(),
                    })
                }
            }
        };
        if exact {
            exact_steps.push(it);
        }
        stalled = next.merit() > 0.5 * st.merit();
        st = next;
        hist.push(st.tail_norm());
        if target.closing.is_some() {
            chist.push(st.closing_norm());
        }
    }
    let fresh = prob.evaluate(st.q.clone(), None)?;
    let report = SolveReport {
        converged: true,
        iterations: it,
        n_slice: slice.n_slice,
        n_trunc: 0,
        k_sol,
        final_residual: st.tail_norm(),
        final_closing_residual: target.closing.map(|_| st.closing_norm()),
        forward_check_residual: fresh.merit(),
        slice_defect: if slice.directions.is_empty() { slice.slice_defect(&st.q)? } else { 0.0 },
        residual_history: hist,
        closing_history: chist,
        exact_steps,
    };
    Ok(Solution { potential: st.q, data: st.data, report })
}

/// Quasi-Newton inversion of Φ_N on the slice (no closing).
pub fn solve_phi(slice: &SliceSpec, target: &Target, cfg: &SolverConfig) -> Result<Solution> {
    if target.closing.is_some() || !slice.directions.is_empty() {
        return Err(Error::Domain("solve_phi takes a plain slice and tail target".into()));
    }
    solve(slice, target, cfg)
}

/// Inversion of the augmented map (tail, closing) on slice ⊕ span(directions).
pub fn solve_psi(slice: &SliceSpec, target: &Target, cfg: &SolverConfig) -> Result<Solution> {
    if target.closing.is_none() {
        return Err(Error::Domain("solve_psi needs a closing target".into()));
    }
    solve(slice, target, cfg)
}

/// Minimum-norm Gauss–Newton on the closing equations alone, moving q within
/// the band |k| ≤ `band`: a nearby closed potential with the same θ.
pub fn close_potential(q: &Potential, space: Space, band: usize, tol: f64, max_iter: usize) -> Result<Potential> {
    let eta = closing_sign(q, space)?;
    let dirs = band_modes(q.n, q.period, band);
    let mut q = q.clone();
    let mut cc = ClosingContext::new(&q, space, eta)?;
    let mut r = cc.residual();
    for _ in 0..max_iter {
        if norm(&r) < tol {
            return Ok(q);
        }
        let j = cc.along_all(&dirs)?;
        let ds = j
            .svd(true, true)
            .solve(&DVector::from_row_slice(&r.map(|x| -x)), 1e-12)
            .map_err(|e| Error::Domain(format!("closing least squares: {e}")))?;
        let mut scale = 1.0;
        let mut ok = false;
        for _ in 0..9 {
            let mut s = q.samples.clone();
            for (d, c) in dirs.iter().zip(ds.iter()) {
                s.iter_mut().zip(d).for_each(|(x, y)| *x += y * (c * scale));
            }
            let trial = q.with_samples(s);
            let tc = ClosingContext::new(&trial, space, eta)?;
            let tr = tc.residual();
            if norm(&tr) < norm(&r) {
                (q, cc, r, ok) = (trial, tc, tr, true);
                break;
            }
            scale *= 0.5;
        }
        if !ok {
            break;
        }
    }
    if norm(&r) < tol {
        Ok(q)
    } else {
        Err(Error::Divergence { message: "closing projection did not converge".into(), residual: norm(&r) })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Approximation {
    #[serde(skip)]
    pub potential: Potential,
    pub report: SolveReport,
    pub theta: f64,
    pub l2_distance: f64,
    pub space: Option<Space>,
    /// Why closing was not imposed, if it was not.
    pub closing_skipped: Option<String>,
    pub closing: Option<ClosingReport>,
    pub directions_min_singular: Option<f64>,
}

/// Finite-gap approximant of q: tail of the perturbed Fourier coefficients cut
/// at n_trunc; closing preserved when `space` is given and q is closed there.
pub fn approximate(q: &Potential, space: Option<Space>, cfg: &SolverConfig, seed: u64) -> Result<Approximation> {
    cfg.validate()?;
    let k_sol = cfg.k_sol_for(q);
    let data = spectral_data(q, k_sol, &LocateOptions::default(), None)?;
    let mut closing_skipped = None;
    let closing_space = match space {
        Some(sp) => {
            // inputs ingested from closed curves close to the ingest accuracy
            let rep = check_closing(q, sp, CLOSED_INPUT_TOL)?;
            if !rep.closed {
                closing_skipped = Some(format!(
                    "potential not closed in {} (matrix residual {:.3e}); closing skipped",
                    sp.name(),
                    rep.matrix_residual.max(rep.matrix_prime_residual)
                ));
                None
            } else if is_exponential(q) {
                closing_skipped = Some("single-mode potential; closing directions undefined, closing skipped".into());
                None
            } else {
                Some(sp)
            }
        }
        None => None,
    };
    let n_min = if closing_space.is_some() { 2 } else { 0 };
    let n_slice = match cfg.n_slice {
        Some(n) => n.max(n_min),
        None => select_slice_width(q, &data, n_min)?.0,
    };
    if cfg.n_trunc < n_slice {
        return Err(Error::Domain(format!("n_trunc = {} below slice width N = {n_slice}", cfg.n_trunc)));
    }
    let mut target = Target::truncation(&data, cfg.n_trunc, k_sol);
    let mut slice = SliceSpec::new(q, n_slice)?;
    let mut min_sv = None;
    if let Some(sp) = closing_space {
        let dirs = choose_matrix_closing_directions(q, sp, n_slice, seed)?;
        min_sv = Some(dirs.min_singular);
        slice = slice.with_directions(dirs.directions)?;
        target = target.with_closing(ClosingTarget { space: sp, eta: closing_sign(q, sp)? });
    }
    let mut sol = if closing_space.is_some() { solve_psi(&slice, &target, cfg)? } else { solve_phi(&slice, &target, cfg)? };
    sol.report.n_trunc = cfg.n_trunc;
    let l2_distance = sol.potential.l2_distance(q)?;
    let closing = match space {
        Some(sp) => Some(check_closing(&sol.potential, sp, 1e-7)?),
        None => None,
    };
    Ok(Approximation {
        theta: sol.potential.theta,
        potential: sol.potential,
        report: sol.report,
        l2_distance,
        space,
        closing_skipped,
        closing,
        directions_min_singular: min_sv,
    })
}

/// A smooth test potential with geometrically decaying modes.
pub fn smooth_test_potential(n: usize, period: f64, amplitude: f64, decay: f64, k_max: usize, seed: u64) -> Result<Potential> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = FourierSeq::zeros(k_max);
    for k in -(k_max as i64)..=k_max as i64 {
        let a = amplitude * decay.powi(k.abs() as i32) * period;
        c.set(k, C64::from_polar(a * rng.gen_range(0.5..1.0), rng.gen_range(0.0..2.0 * PI)));
    }
    inverse_fourier(&c, n, period)
}
