//! Curves ↔ potentials.
//!
//! Reconstruction: γ = 2F'F⁻¹ at λ = θ (R³, with R³ ≅ su2) or
//! γ = F(·,1+θ)F(·,−1+θ)⁻¹ (S³ ≅ SU2). Ingestion: a parallel (Bishop) frame is
//! transported along the sampled curve, the natural curvatures give
//! raw q = k₁ + ik₂, and regauging splits off θ.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::algebra::{quaternion_to_su2, su2_project_unchecked, su2_to_quaternion, Mat2, Su2Vector};
use crate::error::{Error, Result};
use crate::frame::Integrator;
use crate::io::fmt_f64;
use crate::potential::{dft_minus, dft_plus, regauge, signed_index, Potential};
use crate::spectral::{mu_of, mu_prime_of};

/// Tolerance on |speed − 1| accepted by [`ingest`].
pub const SPEED_TOL: f64 = 1e-3;
/// Tolerance on |γ| − 1 for S³ samples.
pub const SPHERE_TOL: f64 = 1e-9;
/// Default tolerance of the closing verdict.
pub const CLOSING_TOL: f64 = 1e-7;
/// Frame transport substeps per sample interval in [`ingest`].
const SUB: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Space {
    R3,
    S3,
}

impl Space {
    pub fn dim(self) -> usize {
        match self {
            Space::R3 => 3,
            Space::S3 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Space::R3 => "r3",
            Space::S3 => "s3",
        }
    }
}

impl std::str::FromStr for Space {
    type Err = Error;
    fn from_str(s: &str) -> Result<Space> {
        match s.to_ascii_lowercase().as_str() {
            "r3" => Ok(Space::R3),
            "s3" => Ok(Space::S3),
            _ => Err(Error::Domain(format!("unknown space '{s}' (expected r3 or s3)"))),
        }
    }
}

/// Uniformly sampled curve, t_j = jT/n, j < n (the endpoint t = T is implicit).
#[derive(Clone, Debug, PartialEq)]
pub struct CurveSamples {
    pub space: Space,
    pub period: f64,
    /// R³: su2 coordinates (x, y, z); S³: unit quaternion (q0, q1, q2, q3).
    pub points: Vec<Vec<f64>>,
    pub tangents: Option<Vec<Vec<f64>>>,
}

impl CurveSamples {
    pub fn new(space: Space, period: f64, points: Vec<Vec<f64>>) -> Result<Self> {
        if points.len() < 8 {
            return Err(Error::Domain(format!("curve needs at least 8 samples, got {}", points.len())));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::Domain(format!("curve length must be positive, got {period}")));
        }
        if let Some(p) = points.iter().find(|p| p.len() != space.dim() || p.iter().any(|x| !x.is_finite())) {
            return Err(Error::Domain(format!("bad point {p:?} for space {}", space.name())));
        }
        Ok(CurveSamples { space, period, points, tangents: None })
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn step(&self) -> f64 {
        self.period / self.n() as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n()).map(|j| j as f64 * self.step()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# T={}", fmt_f64(self.period));
        s.push_str(match self.space {
            Space::R3 => "t,x,y,z\n",
            Space::S3 => "t,q0,q1,q2,q3\n",
        });
        for (j, p) in self.points.iter().enumerate() {
            s.push_str(&fmt_f64(j as f64 * self.step()));
            for x in p {
                s.push(',');
                s.push_str(&fmt_f64(*x));
            }
            s.push('\n');
        }
        s
    }

    /// Parse `t,x,y,z` (R³) or `t,q0,q1,q2,q3` (S³) CSV. Comment lines start
    /// with `#`; `# T=<value>` sets the length. A final row repeating the first
    /// point (closed polygon convention) is dropped.
    pub fn from_csv(text: &str) -> Result<CurveSamples> {
        let mut space = None;
        let mut period_meta = None;
        let mut times = Vec::new();
        let mut points: Vec<Vec<f64>> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = Some(i + 1);
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("T=") {
                    period_meta =
                        Some(v.trim().parse::<f64>().map_err(|e| Error::parse(lineno, format!("bad T: {e}")))?);
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let Some(sp) = space else {
                space = Some(match fields.as_slice() {
                    ["t", "x", "y", "z"] => Space::R3,
                    ["t", "q0", "q1", "q2", "q3"] => Space::S3,
                    _ => return Err(Error::parse(lineno, "expected header 't,x,y,z' or 't,q0,q1,q2,q3'")),
                });
                continue;
            };
            if fields.len() != sp.dim() + 1 {
                return Err(Error::parse(lineno, format!("expected {} fields, found {}", sp.dim() + 1, fields.len())));
            }
            let vals = fields
                .iter()
                .map(|f| f.parse::<f64>().map_err(|e| Error::parse(lineno, format!("'{f}': {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::parse(lineno, "non-finite value"));
            }
            times.push(vals[0]);
            points.push(vals[1..].to_vec());
        }
        let space = space.ok_or_else(|| Error::parse(None, "empty curve file"))?;
        if points.len() < 3 {
            return Err(Error::parse(None, "too few samples"));
        }
        let last = points.len() - 1;
        let dup = points[last].iter().zip(&points[0]).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        let period = if dup {
            points.pop();
            let t_end = times.pop().expect("non-empty");
            period_meta.unwrap_or(t_end - times[0])
        } else {
            let n = points.len() as f64;
            period_meta.unwrap_or((times[last] - times[0]) * n / (n - 1.0))
        };
        let n = points.len();
        let h = period / n as f64;
        for (j, t) in times.iter().enumerate() {
            if (t - times[0] - j as f64 * h).abs() > 1e-6 * period {
                return Err(Error::parse(None, format!("sample {j}: times must be uniform with step T/n")));
            }
        }
        CurveSamples::new(space, period, points).map_err(|e| Error::parse(None, e.to_string()))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Derivative of order `order` of the trigonometric interpolant of periodic
/// samples `x`, evaluated at t_j + s·h. The Nyquist mode is treated as
/// cos(πnt/T) and only kept for order 0.
fn spectral_eval(x: &[f64], period: f64, order: u32, s: f64) -> Vec<f64> {
    let n = x.len();
    let col: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
    let mut spec = dft_plus(&col);
    for (k, v) in spec.iter_mut().enumerate() {
        let ks = signed_index(k, n);
        if 2 * ks.unsigned_abs() as usize == n {
            *v *= if order == 0 { (PI * s).cos() } else { 0.0 };
            continue;
        }
        let w = C64::new(0.0, -2.0 * PI * ks as f64 / period);
        *v *= w.powu(order) * C64::from_polar(1.0, -2.0 * PI * ks as f64 * s / n as f64);
    }
    dft_minus(&spec).into_iter().map(|z| z.re / n as f64).collect()
}

/// Per-sample vectors of a derivative field.
fn field(curve: &CurveSamples, order: u32, s: f64) -> Vec<Vec<f64>> {
    let d = curve.space.dim();
    let cols: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let x: Vec<f64> = curve.points.iter().map(|p| p[i]).collect();
            spectral_eval(&x, curve.period, order, s)
        })
        .collect();
    (0..curve.n()).map(|j| (0..d).map(|i| cols[i][j]).collect()).collect()
}

/// Unit tangent T and dT/dt from γ', γ''.
fn tangent_data(g1: &[f64], g2: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let sp = norm(g1);
    let t: Vec<f64> = g1.iter().map(|x| x / sp).collect();
    let tg = dot(&t, g2);
    let tp: Vec<f64> = g2.iter().zip(&t).map(|(a, b)| (a - b * tg) / sp).collect();
    (t, tp)
}

/// Ω = T'Tᵀ − TT'ᵀ, the generator of the parallel frame (E' = ΩE). In S³ it
/// also moves the position column, since T'·γ = −1.
fn generator(t: &[f64], tp: &[f64]) -> DMatrix<f64> {
    let d = t.len();
    DMatrix::from_fn(d, d, |i, j| tp[i] * t[j] - t[i] * tp[j])
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = norm(v);
    v.iter_mut().for_each(|x| *x /= n);
    n
}

/// Gram–Schmidt of `v` against `basis`.
fn orthogonalize(v: &[f64], basis: &[&[f64]]) -> Vec<f64> {
    let mut w = v.to_vec();
    for b in basis {
        let c = dot(&w, b);
        w.iter_mut().zip(b.iter()).for_each(|(x, y)| *x -= c * y);
    }
    w
}

/// A unit vector orthogonal to `basis`, from the coordinate axis least aligned with it.
fn complete(basis: &[&[f64]], d: usize) -> Vec<f64> {
    let mut best = Vec::new();
    let mut best_n = -1.0;
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        let w = orthogonalize(&orthogonalize(&e, basis), basis);
        let n = norm(&w);
        if n > best_n {
            best_n = n;
            best = w;
        }
    }
    normalize(&mut best);
    best
}

fn det(m: &DMatrix<f64>) -> f64 {
    m.clone().lu().determinant()
}

/// Complex curvature of a closed unit-speed curve, regauged to a periodic potential.
pub fn ingest(curve: &CurveSamples) -> Result<Potential> {
    let n = curve.n();
    if n % 2 != 0 {
        return Err(Error::Domain(format!("ingest needs an even number of samples, got {n}")));
    }
    let d = curve.space.dim();
    if curve.space == Space::S3 {
        if let Some((j, p)) = curve.points.iter().enumerate().find(|(_, p)| (norm(p) - 1.0).abs() > SPHERE_TOL) {
            return Err(Error::Domain(format!("S3 sample {j} has norm {} (not unit)", norm(p))));
        }
    }
    // closure: the wrap-around chord must look like the others
    let chord = |a: &[f64], b: &[f64]| norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>());
    let chords: Vec<f64> = (0..n).map(|j| chord(&curve.points[(j + 1) % n], &curve.points[j])).collect();
    let max_inner = chords[..n - 1].iter().cloned().fold(0.0, f64::max);
    let min_inner = chords[..n - 1].iter().cloned().fold(f64::INFINITY, f64::min);
    if min_inner <= 1e-14 * curve.period {
        return Err(Error::Domain("degenerate (zero-length) segment in curve".into()));
    }
    if chords[n - 1] > 1.5 * max_inner + 1e-12 {
        return Err(Error::Domain(format!(
            "curve not closed (gap {:.3e} vs largest step {:.3e})",
            chords[n - 1], max_inner
        )));
    }
    let g1 = field(curve, 1, 0.0);
    let speeds: Vec<f64> = g1.iter().map(|v| norm(v)).collect();
    if let Some((j, s)) = speeds.iter().enumerate().find(|(_, s)| (*s - 1.0).abs() > SPEED_TOL) {
        return Err(Error::Domain(format!("curve not unit speed: |gamma'| = {s:.6} at sample {j}")));
    }

    let h = curve.step();
    let c = 3f64.sqrt() / 6.0;
    let stage = |s: f64| -> Vec<DMatrix<f64>> {
        field(curve, 1, s)
            .iter()
            .zip(field(curve, 2, s))
            .map(|(a, b)| {
                let (t, tp) = tangent_data(a, &b);
                generator(&t, &tp)
            })
            .collect()
    };
    // Magnus-4 on SUB substeps per cell
    let stages: Vec<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> = (0..SUB)
        .map(|i| {
            let base = i as f64 / SUB as f64;
            (stage(base + (0.5 - c) / SUB as f64), stage(base + (0.5 + c) / SUB as f64))
        })
        .collect();
    let g2 = field(curve, 2, 0.0);
    let td: Vec<(Vec<f64>, Vec<f64>)> = g1.iter().zip(&g2).map(|(a, b)| tangent_data(a, b)).collect();

    // initial frame: columns (T, U1, U2) in R³, (γ, T, U1, U2) in S³, U1 along the curvature vector
    let (t0, tp0) = &td[0];
    let gamma0 = &curve.points[0];
    let mut cols: Vec<Vec<f64>> = Vec::new();
    if curve.space == Space::S3 {
        cols.push(gamma0.clone());
    }
    let mut t0n = orthogonalize(t0, &cols.iter().map(|v| v.as_slice()).collect::<Vec<_>>());
    normalize(&mut t0n);
    cols.push(t0n);
    let basis: Vec<&[f64]> = cols.iter().map(|v| v.as_slice()).collect();
    let mut u1 = orthogonalize(tp0, &basis);
    if norm(&u1) < 1e-8 {
        u1 = complete(&basis, d);
    } else {
        normalize(&mut u1);
    }
    cols.push(u1);
    let basis: Vec<&[f64]> = cols.iter().map(|v| v.as_slice()).collect();
    cols.push(complete(&basis, d));
    let mut e = DMatrix::from_fn(d, d, |i, j| cols[j][i]);
    if det(&e) < 0.0 {
        e.column_mut(d - 1).neg_mut();
    }

    let (iu1, iu2) = (d - 2, d - 1);
    let mut raw = Vec::with_capacity(2 * n + 1);
    let curv = |j: usize, e: &DMatrix<f64>| {
        let (_, tp) = &td[j % n];
        let sp = speeds[j % n];
        let k1: f64 = (0..d).map(|i| tp[i] * e[(i, iu1)]).sum::<f64>() / sp;
        let k2: f64 = (0..d).map(|i| tp[i] * e[(i, iu2)]).sum::<f64>() / sp;
        C64::new(k1, k2)
    };
    raw.push(curv(0, &e));
    let hs = h / SUB as f64;
    let s3h2 = 3f64.sqrt() * hs * hs / 12.0;
    for j in 0..2 * n {
        for (o1, o2) in &stages {
            let (a1, a2) = (&o1[j % n], &o2[j % n]);
            let phi = (a1 + a2) * (0.5 * hs) + (a2 * a1 - a1 * a2) * s3h2;
            e = phi.exp() * e;
        }
        raw.push(curv(j + 1, &e));
    }
    regauge(&raw, n, curve.period)
}

/// Curve of a potential by the Sym formula, together with the closing data of
/// the reconstruction.
pub fn reconstruct(q: &Potential, space: Space) -> Result<CurveSamples> {
    Ok(reconstruct_full(q, space)?.0)
}

/// Reconstruction plus the endpoint gap |γ(T) − γ(0)|.
pub fn reconstruct_full(q: &Potential, space: Space) -> Result<(CurveSamples, f64)> {
    let integ = Integrator::new(q);
    let n = q.n;
    let theta = q.theta;
    match space {
        Space::R3 => {
            let tr = integ.trajectory(C64::new(theta, 0.0), true)?;
            let df = tr.dframes.as_ref().expect("derivative requested");
            let pos = |j: usize| su2_project_unchecked(&(df[j] * tr.frames[j].adjugate()).scale_re(2.0));
            let points = (0..n).map(|j| pos(j).0.to_vec()).collect();
            let tangents = (0..n)
                .map(|j| su2_project_unchecked(&(tr.frames[j] * Mat2::eps() * tr.frames[j].adjugate())).0.to_vec())
                .collect();
            let gap = Su2Vector(std::array::from_fn(|i| pos(n).0[i] - pos(0).0[i])).norm();
            let mut c = CurveSamples::new(space, q.period, points)?;
            c.tangents = Some(tangents);
            Ok((c, gap))
        }
        Space::S3 => {
            let (tp, tm) = rayon::join(
                || integ.trajectory(C64::new(1.0 + theta, 0.0), false),
                || integ.trajectory(C64::new(-1.0 + theta, 0.0), false),
            );
            let (tp, tm) = (tp?, tm?);
            let pos = |j: usize| su2_to_quaternion(&(tp.frames[j] * tm.frames[j].adjugate()));
            let points = (0..n).map(|j| pos(j).to_vec()).collect();
            let tangents = (0..n)
                .map(|j| su2_to_quaternion(&(tp.frames[j] * Mat2::eps() * tm.frames[j].adjugate())).to_vec())
                .collect();
            let (a, b) = (pos(n), pos(0));
            let gap = (0..4).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt();
            let mut c = CurveSamples::new(space, q.period, points)?;
            c.tangents = Some(tangents);
            Ok((c, gap))
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ClosingReport {
    pub space: Space,
    pub theta: f64,
    /// λ values at which the conditions are evaluated.
    pub lambdas: Vec<f64>,
    /// μ on both branches at each λ, as [re, im].
    pub mu: Vec<[[f64; 2]; 2]>,
    /// R³ only: μ'(θ) (branch mean at a branch point).
    pub mu_prime: Option<[f64; 2]>,
    /// The sign η with μ ≈ η.
    pub eta: f64,
    /// max |μ − η| over branches and λ values.
    pub mu_residual: f64,
    /// |μ'(θ)| (R³), 0 for S³.
    pub mu_prime_residual: f64,
    /// max ‖M − ηI‖ over the λ values.
    pub matrix_residual: f64,
    /// ‖M'(θ)‖ (R³), 0 for S³.
    pub matrix_prime_residual: f64,
    pub endpoint_gap: f64,
    pub frame_gap: f64,
    pub tol: f64,
    pub closed: bool,
}

/// μ-form and matrix-form closing conditions, reported side by side.
pub fn check_closing(q: &Potential, space: Space, tol: f64) -> Result<ClosingReport> {
    let integ = Integrator::new(q);
    let lambdas: Vec<f64> = match space {
        Space::R3 => vec![q.theta],
        Space::S3 => vec![1.0 + q.theta, -1.0 + q.theta],
    };
    let monos = lambdas
        .iter()
        .map(|&l| integ.monodromy(C64::new(l, 0.0)))
        .collect::<Result<Vec<_>>>()?;
    let eta = if monos[0].trace().re >= 0.0 { 1.0 } else { -1.0 };
    let mut mu = Vec::new();
    let mut mu_residual: f64 = 0.0;
    let mut matrix_residual: f64 = 0.0;
    for mo in &monos {
        let (p, m) = (mu_of(&mo.m, 1.0), mu_of(&mo.m, -1.0));
        mu.push([[p.re, p.im], [m.re, m.im]]);
        mu_residual = mu_residual.max((p - eta).norm()).max((m - eta).norm());
        matrix_residual = matrix_residual.max((mo.m - Mat2::identity().scale_re(eta)).norm_inf());
    }
    let (mu_prime, mu_prime_residual, matrix_prime_residual) = match space {
        Space::R3 => {
            let mp = mu_prime_of(&monos[0], 1.0);
            let mm = mu_prime_of(&monos[0], -1.0);
            (Some([mp.re, mp.im]), mp.norm().max(mm.norm()), monos[0].mprime.norm_inf())
        }
        Space::S3 => (None, 0.0, 0.0),
    };
    let (_, endpoint_gap) = match space {
        Space::R3 => {
            let g = su2_project_unchecked(&(monos[0].mprime * monos[0].m.adjugate()).scale_re(2.0));
            ((), g.norm())
        }
        Space::S3 => {
            let g = su2_to_quaternion(&(monos[0].m * monos[1].m.adjugate()));
            ((), ((g[0] - 1.0).powi(2) + g[1] * g[1] + g[2] * g[2] + g[3] * g[3]).sqrt())
        }
    };
    let closed = mu_residual < tol && mu_prime_residual < tol && matrix_residual < tol && matrix_prime_residual < tol;
    Ok(ClosingReport {
        space,
        theta: q.theta,
        lambdas,
        mu,
        mu_prime,
        eta,
        mu_residual,
        mu_prime_residual,
        matrix_residual,
        matrix_prime_residual,
        endpoint_gap,
        frame_gap: matrix_residual,
        tol,
        closed,
    })
}

/// Best proper rigid motion of `moving` onto `fixed` (Kabsch): rotation plus
/// translation in R³, an SO(4) rotation in S³.
pub fn align(fixed: &CurveSamples, moving: &CurveSamples) -> Result<CurveSamples> {
    same_grid(fixed, moving)?;
    let d = fixed.space.dim();
    let n = fixed.n();
    let centroid = |c: &CurveSamples| -> Vec<f64> {
        if c.space == Space::S3 {
            return vec![0.0; d];
        }
        (0..d).map(|i| c.points.iter().map(|p| p[i]).sum::<f64>() / n as f64).collect()
    };
    let (cf, cm) = (centroid(fixed), centroid(moving));
    let mut h = DMatrix::<f64>::zeros(d, d);
    for (p, q) in moving.points.iter().zip(&fixed.points) {
        for i in 0..d {
            for j in 0..d {
                h[(i, j)] += (p[i] - cm[i]) * (q[j] - cf[j]);
            }
        }
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let v = vt.transpose();
    let mut s = DMatrix::<f64>::identity(d, d);
    if det(&(&v * u.transpose())) < 0.0 {
        s[(d - 1, d - 1)] = -1.0;
    }
    let r = v * s * u.transpose();
    let points = moving
        .points
        .iter()
        .map(|p| (0..d).map(|i| (0..d).map(|j| r[(i, j)] * (p[j] - cm[j])).sum::<f64>() + cf[i]).collect())
        .collect();
    Ok(CurveSamples { space: moving.space, period: moving.period, points, tangents: None })
}

fn same_grid(a: &CurveSamples, b: &CurveSamples) -> Result<()> {
    if a.space != b.space {
        return Err(Error::Domain("curves live in different spaces".into()));
    }
    if a.n() != b.n() || (a.period - b.period).abs() > 1e-9 * a.period {
        return Err(Error::Domain(format!(
            "curves on different grids (n = {} vs {}, T = {} vs {})",
            a.n(),
            b.n(),
            a.period,
            b.period
        )));
    }
    Ok(())
}

/// Discrete W^{k,2} distance, (Σ_{i≤k} ‖Dⁱ(c₁ − c₂)‖²_{L²})^{1/2}, with periodic
/// second-order central differences D; optionally after aligning c₂ onto c₁.
pub fn sobolev_distance(c1: &CurveSamples, c2: &CurveSamples, order: usize, aligned: bool) -> Result<f64> {
    same_grid(c1, c2)?;
    if order > 2 {
        return Err(Error::Domain(format!("Sobolev order {order} not supported (0, 1, 2)")));
    }
    let c2 = if aligned { align(c1, c2)? } else { c2.clone() };
    let n = c1.n();
    let d = c1.space.dim();
    let h = c1.step();
    let diff: Vec<Vec<f64>> = c1.points.iter().zip(&c2.points).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect()).collect();
    let l2 = |f: &dyn Fn(usize, usize) -> f64| -> f64 {
        let mut s = 0.0;
        for j in 0..n {
            for i in 0..d {
                s += f(j, i).powi(2);
            }
        }
        s * h
    };
    let mut total = l2(&|j, i| diff[j][i]);
    if order >= 1 {
        total += l2(&|j, i| (diff[(j + 1) % n][i] - diff[(j + n - 1) % n][i]) / (2.0 * h));
    }
    if order >= 2 {
        total += l2(&|j, i| (diff[(j + 1) % n][i] - 2.0 * diff[j][i] + diff[(j + n - 1) % n][i]) / (h * h));
    }
    Ok(total.sqrt())
}

/// Trigonometric interpolant of periodic samples and its derivative at a point.
fn interp(spec: &[C64], period: f64, t: f64) -> (f64, f64) {
    let n = spec.len();
    let (mut v, mut d) = (0.0, 0.0);
    for (k, c) in spec.iter().enumerate() {
        let ks = signed_index(k, n);
        if 2 * ks.unsigned_abs() as usize == n {
            continue;
        }
        let w = -2.0 * PI * ks as f64 / period;
        let e = c * C64::from_polar(1.0, w * t);
        v += e.re;
        d += (e * C64::new(0.0, w)).re;
    }
    (v / n as f64, d / n as f64)
}

/// Resample a smooth closed curve uniformly in arc length (m points); the
/// result has T equal to the curve length. S³ curves stay on the sphere.
pub fn reparametrize_by_arclength(curve: &CurveSamples, m: usize) -> Result<CurveSamples> {
    let n = curve.n();
    let d = curve.space.dim();
    let specs: Vec<Vec<C64>> = (0..d)
        .map(|i| dft_plus(&curve.points.iter().map(|p| C64::new(p[i], 0.0)).collect::<Vec<_>>()))
        .collect();
    let speed: Vec<f64> = field(curve, 1, 0.0).iter().map(|v| norm(v)).collect();
    if speed.iter().any(|&v| v < 1e-12) {
        return Err(Error::Domain("curve has a stationary point; arc length undefined".into()));
    }
    // s(t) = L t / T + periodic part, from the Fourier series of the speed
    let sspec = dft_plus(&speed.iter().map(|&v| C64::new(v, 0.0)).collect::<Vec<_>>());
    let t_len = curve.period;
    let length = sspec[0].re / n as f64 * t_len;
    let arc = |t: f64| -> (f64, f64) {
        let mut s = sspec[0].re / n as f64 * t;
        let mut v = sspec[0].re / n as f64;
        for (k, c) in sspec.iter().enumerate().skip(1) {
            let ks = signed_index(k, n);
            if 2 * ks.unsigned_abs() as usize == n {
                continue;
            }
            let w = -2.0 * PI * ks as f64 / t_len;
            let e = c * C64::from_polar(1.0, w * t) / n as f64;
            s += (e / C64::new(0.0, w)).re - (c / n as f64 / C64::new(0.0, w)).re;
            v += e.re;
        }
        (s, v)
    };
    let mut points = Vec::with_capacity(m);
    let mut t = 0.0;
    for j in 0..m {
        let target = length * j as f64 / m as f64;
        for _ in 0..50 {
            let (s, v) = arc(t);
            let dt = (s - target) / v;
            t -= dt;
            if dt.abs() < 1e-15 * t_len {
                break;
            }
        }
        let mut p: Vec<f64> = specs.iter().map(|sp| interp(sp, t_len, t).0).collect();
        if curve.space == Space::S3 {
            normalize(&mut p);
        }
        points.push(p);
    }
    CurveSamples::new(curve.space, length, points)
}

/// Closed curve near the R³ curve of q: the endpoint drift t·(γ(T) − γ(0))/T is
/// removed, the result resampled by arc length, and ingested again.
pub fn close_by_drift(q: &Potential) -> Result<(CurveSamples, Potential)> {
    let integ = Integrator::new(q);
    let mono = integ.monodromy(C64::new(q.theta, 0.0))?;
    let gap = su2_project_unchecked(&(mono.mprime * mono.m.adjugate()).scale_re(2.0));
    let curve = reconstruct(q, Space::R3)?;
    let h = curve.step() / curve.period;
    let points = curve
        .points
        .iter()
        .enumerate()
        .map(|(j, p)| (0..3).map(|i| p[i] - j as f64 * h * gap.0[i]).collect())
        .collect();
    let open = CurveSamples::new(Space::R3, curve.period, points)?;
    let closed = reparametrize_by_arclength(&open, q.n)?;
    let p = ingest(&closed)?;
    Ok((closed, p))
}

/// Unit circle in R³ (T = 2π, radius 1) sampled at n points.
pub fn circle_r3(n: usize) -> CurveSamples {
    let t = 2.0 * PI;
    let pts = (0..n).map(|j| {
        let s = t * j as f64 / n as f64;
        vec![s.cos(), s.sin(), 0.0]
    });
    CurveSamples::new(Space::R3, t, pts.collect()).expect("valid circle")
}

/// Great circle (cos t, sin t, 0, 0) in S³.
pub fn great_circle_s3(n: usize) -> CurveSamples {
    let t = 2.0 * PI;
    let pts = (0..n).map(|j| {
        let s = t * j as f64 / n as f64;
        vec![s.cos(), s.sin(), 0.0, 0.0]
    });
    CurveSamples::new(Space::S3, t, pts.collect()).expect("valid great circle")
}

/// (p, q) torus knot (r e^{ipωt}, r e^{iqωt}) on the Clifford torus in S³,
/// r = 1/√2, parametrized by arc length.
pub fn torus_knot_s3(p: i32, q: i32, n: usize) -> CurveSamples {
    let r = 0.5f64.sqrt();
    let omega = 1.0 / (0.5 * (p * p + q * q) as f64).sqrt();
    let t = 2.0 * PI / omega;
    let pts = (0..n).map(|j| {
        let s = omega * t * j as f64 / n as f64;
        let (a, b) = (p as f64 * s, q as f64 * s);
        vec![r * a.cos(), r * a.sin(), r * b.cos(), r * b.sin()]
    });
    CurveSamples::new(Space::S3, t, pts.collect()).expect("valid torus knot")
}

/// S³ point as an SU2 matrix.
pub fn s3_point(p: &[f64]) -> Mat2 {
    quaternion_to_su2(&[p[0], p[1], p[2], p[3]])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn max_speed_defect(curve: &CurveSamples) -> f64 {
        field(curve, 1, 0.0).iter().map(|v| (norm(v) - 1.0).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn vacuum_r3_is_a_line() {
        let q = Potential::zero(32, 3.0).unwrap();
        let c = reconstruct(&q, Space::R3).unwrap();
        for (j, p) in c.points.iter().enumerate() {
            let t = j as f64 * c.step();
            assert!((p[0] - t).abs() < 1e-12 && p[1].abs() < 1e-12 && p[2].abs() < 1e-12);
        }
    }

    #[test]
    fn constant_r3_is_a_unit_circle() {
        let q = Potential::from_fn(64, 2.0 * PI, 0.0, |_| c(1.0, 0.0)).unwrap();
        let (curve, gap) = reconstruct_full(&q, Space::R3).unwrap();
        assert!(gap < 1e-8);
        let cen: Vec<f64> = (0..3).map(|i| curve.points.iter().map(|p| p[i]).sum::<f64>() / 64.0).collect();
        for p in &curve.points {
            let r = norm(&p.iter().zip(&cen).map(|(a, b)| a - b).collect::<Vec<_>>());
            assert!((r - 1.0).abs() < 1e-10);
        }
        assert!(max_speed_defect(&curve) < 1e-6);
    }

    #[test]
    fn s3_reconstruction_on_sphere() {
        let q = Potential::from_fn(128, 2.5, 0.3, |t| c(0.4 * t.cos(), 0.2)).unwrap();
        let curve = reconstruct(&q, Space::S3).unwrap();
        for p in &curve.points {
            assert!((norm(p) - 1.0).abs() < 1e-9);
        }
        let tg = curve.tangents.as_ref().unwrap();
        assert!(tg.iter().all(|v| (norm(v) - 1.0).abs() < 1e-9));
    }

    #[test]
    fn ingest_circle() {
        let q = ingest(&circle_r3(128)).unwrap();
        assert!(q.theta.abs() < 1e-9);
        for z in &q.samples {
            assert!((z - 1.0).norm() < 1e-9, "{z}");
        }
    }

    #[test]
    fn ingest_great_circle() {
        let q = ingest(&great_circle_s3(64)).unwrap();
        assert!(q.theta.abs() < 1e-9);
        assert!(q.samples.iter().all(|z| z.norm() < 1e-9));
    }

    #[test]
    fn ingest_rejects_open_and_slow() {
        let seg = CurveSamples::new(Space::R3, 1.0, (0..32).map(|j| vec![j as f64 / 32.0, 0.0, 0.0]).collect()).unwrap();
        let err = ingest(&seg).unwrap_err();
        assert!(err.to_string().contains("not closed"), "{err}");
        let mut big = circle_r3(64);
        big.points.iter_mut().for_each(|p| p.iter_mut().for_each(|x| *x *= 1.1));
        assert!(ingest(&big).unwrap_err().to_string().contains("unit speed"));
    }

    fn curve_round_trip(curve: &CurveSamples) -> (Potential, f64, f64) {
        let q = ingest(curve).unwrap();
        let back = reconstruct(&q, curve.space).unwrap();
        let d = sobolev_distance(curve, &back, 2, true).unwrap();
        let q2 = ingest(&back).unwrap();
        let (dq, _) = q2.l2_distance_mod_phase(&q).unwrap();
        assert!((q2.theta - q.theta).abs() < 1e-9);
        (q, d, dq)
    }

    #[test]
    fn round_trip_torus_knot() {
        let (q, d, dq) = curve_round_trip(&torus_knot_s3(2, 3, 256));
        assert!(d < 1e-5 && dq < 1e-6, "{d} {dq}");
        // constant curvature and torsion: a constant potential
        let m = q.samples.iter().sum::<C64>() / q.n as f64;
        assert!(q.samples.iter().all(|z| (z - m).norm() < 1e-8));
        assert!(q.theta.abs() > 1e-3);
    }

    #[test]
    fn round_trip_circles() {
        let (_, d, dq) = curve_round_trip(&circle_r3(128));
        assert!(d < 1e-8 && dq < 1e-8, "{d} {dq}");
        let (_, d, dq) = curve_round_trip(&great_circle_s3(128));
        assert!(d < 1e-8 && dq < 1e-8, "{d} {dq}");
    }

    #[test]
    fn arclength_reparametrization() {
        // ellipse-like closed curve with non-uniform speed
        let n = 256;
        let pts = (0..n)
            .map(|j| {
                let u = 2.0 * PI * j as f64 / n as f64;
                vec![2.0 * u.cos(), u.sin(), 0.3 * (2.0 * u).sin()]
            })
            .collect();
        let c = CurveSamples::new(Space::R3, 2.0 * PI, pts).unwrap();
        let r = reparametrize_by_arclength(&c, 256).unwrap();
        assert!(max_speed_defect(&r) < 1e-9, "{}", max_speed_defect(&r));
        let circ = reparametrize_by_arclength(&circle_r3(64), 64).unwrap();
        assert!((circ.period - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn closing_examples() {
        let vac = Potential::zero(32, 2.0 * PI).unwrap();
        let r = check_closing(&vac, Space::S3, CLOSING_TOL).unwrap();
        assert!(r.closed && r.eta == -1.0);
        let one = Potential::from_fn(64, 2.0 * PI, 0.0, |_| c(1.0, 0.0)).unwrap();
        let r = check_closing(&one, Space::R3, CLOSING_TOL).unwrap();
        assert!(r.closed && r.eta == -1.0, "{r:?}");
        assert!(r.matrix_prime_residual < 1e-10);
        let short = Potential::from_fn(64, 3.0, 0.0, |_| c(1.0, 0.0)).unwrap();
        let r = check_closing(&short, Space::R3, CLOSING_TOL).unwrap();
        assert!(!r.closed);
        assert!(r.mu_residual > 1e-3 && r.matrix_residual > 1e-3);
    }

    #[test]
    fn sobolev_basics() {
        let a = circle_r3(64);
        assert_eq!(sobolev_distance(&a, &a, 2, false).unwrap(), 0.0);
        // rotated + translated copy
        let (ca, sa) = (0.3f64.cos(), 0.3f64.sin());
        let moved = CurveSamples::new(
            Space::R3,
            a.period,
            a.points.iter().map(|p| vec![ca * p[0] - sa * p[2] + 1.0, p[1] - 2.0, sa * p[0] + ca * p[2]]).collect(),
        )
        .unwrap();
        assert!(sobolev_distance(&a, &moved, 2, false).unwrap() > 1.0);
        assert!(sobolev_distance(&a, &moved, 2, true).unwrap() < 1e-9);
        let k = torus_knot_s3(2, 3, 64);
        assert!(sobolev_distance(&k, &great_circle_s3(32), 0, false).is_err());
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let k = torus_knot_s3(2, 3, 32);
        let back = CurveSamples::from_csv(&k.to_csv()).unwrap();
        assert_eq!(back.points, k.points);
        assert!((back.period - k.period).abs() < 1e-15 * k.period);
        let bad = "t,x,y,z\n0,1,0,0\n0.1,1,zz,0\n";
        match CurveSamples::from_csv(bad) {
            Err(Error::Parse { line: Some(3), .. }) => {}
            other => panic!("{other:?}"),
        }
        // duplicate endpoint dropped, T inferred
        let mut s = String::from("t,x,y,z\n");
        for j in 0..=16 {
            let t = 2.0 * PI * j as f64 / 16.0;
            s += &format!("{t},{},{},0\n", t.cos(), t.sin());
        }
        let c = CurveSamples::from_csv(&s).unwrap();
        assert_eq!(c.n(), 16);
        assert!((c.period - 2.0 * PI).abs() < 1e-12);
    }
}
