//! Floquet data of a periodic potential: Δ = tr M, μ, the zeros λ_k of a − d,
//! the perturbed Fourier coefficients z_k = 2(−1)^k b(λ_k), and asymptotic
//! diagnostics comparing M with the vacuum monodromy.
//!
//! Zeros with |k| ≤ K_central are found together from contour moments of
//! (a−d)'/(a−d) on a circle between lattice points; the rest one by one by
//! Newton's method from λ_{k,0} = 2πk/T.

use std::cmp::Ordering;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::Mat2;
use crate::error::{Error, Result};
use crate::frame::{vacuum_frame, Integrator, Monodromy};
use crate::potential::Potential;

/// λ_{k,0} = 2πk/T
pub fn lattice_point(k: i64, period: f64) -> f64 {
    2.0 * PI * k as f64 / period
}

/// Δ(λ) = tr M(λ)
pub fn trace_delta(q: &Potential, lambda: C64) -> Result<C64> {
    Ok(Integrator::new(q).monodromy_matrix(lambda)?.trace())
}

/// μ = ½(Δ + s·√(Δ²−4)), s = sign of `branch_sign`.
pub fn mu(q: &Potential, lambda: C64, branch_sign: f64) -> Result<C64> {
    Ok(mu_of(&Integrator::new(q).monodromy_matrix(lambda)?, branch_sign))
}

/// Eigenvalue of a unimodular matrix on the branch selected by `branch_sign`.
pub fn mu_of(m: &Mat2, branch_sign: f64) -> C64 {
    let amd = m.a() - m.d();
    let root = (amd * amd + m.b() * m.c() * 4.0).sqrt();
    let s = if branch_sign < 0.0 { -1.0 } else { 1.0 };
    (m.trace() + root * s) * 0.5
}

/// dμ/dλ along the branch `branch_sign`. At a branch point (Δ² = 4) the two
/// branches meet and the mean Δ'/2 is returned.
pub fn mu_prime_of(mono: &Monodromy, branch_sign: f64) -> C64 {
    let disc = mono.discriminant();
    let dp = mono.trace_prime();
    let scale = 1.0 + mono.m.norm_inf().powi(2);
    if disc.norm() <= 1e-14 * scale {
        return dp * 0.5;
    }
    let amd = mono.a_minus_d();
    let ddisc = amd * mono.a_minus_d_prime() * 2.0
        + (mono.mprime.b() * mono.m.c() + mono.m.b() * mono.mprime.c()) * 4.0;
    let s = if branch_sign < 0.0 { -1.0 } else { 1.0 };
    (dp + ddisc / disc.sqrt() * (0.5 * s)) * 0.5
}

/// K_central: smallest K with λ_{K,0} > 2(‖q‖_{L²} + 1).
pub fn default_k_central(q: &Potential) -> usize {
    k_central_for(q.l2_norm(), q.period)
}

fn k_central_for(l2: f64, period: f64) -> usize {
    let bound = 2.0 * (l2 + 1.0);
    let mut k = 1usize;
    while lattice_point(k as i64, period) <= bound {
        k += 1;
    }
    k
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralEntry {
    pub k: i64,
    pub lambda: C64,
    /// Multiplicity of the zero λ_k (indices of a multiple zero share it).
    pub mult: usize,
    pub z: C64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralData {
    pub period: f64,
    pub theta: f64,
    pub k_central: usize,
    pub k_max: usize,
    /// Entries for k = −k_max..=k_max in order.
    pub entries: Vec<SpectralEntry>,
}

#[derive(Serialize, Deserialize)]
struct EntryJson {
    k: i64,
    lambda: [f64; 2],
    mult: usize,
    z: [f64; 2],
}

#[derive(Serialize, Deserialize)]
struct SpectrumJson {
    #[serde(rename = "T")]
    t: f64,
    theta: f64,
    #[serde(rename = "K_central")]
    k_central: usize,
    entries: Vec<EntryJson>,
}

impl SpectralData {
    pub fn entry(&self, k: i64) -> &SpectralEntry {
        assert!(k.unsigned_abs() as usize <= self.k_max, "index {k} outside ±{}", self.k_max);
        &self.entries[(k + self.k_max as i64) as usize]
    }

    pub fn lambda(&self, k: i64) -> C64 {
        self.entry(k).lambda
    }

    pub fn z(&self, k: i64) -> C64 {
        self.entry(k).z
    }

    pub fn max_abs_z(&self) -> f64 {
        self.entries.iter().map(|e| e.z.norm()).fold(0.0, f64::max)
    }

    /// Total multiplicity of the entries with |k| ≤ K_central.
    pub fn central_count(&self) -> usize {
        let kc = self.k_central as i64;
        self.entries.iter().filter(|e| e.k.abs() <= kc).count()
    }

    pub fn to_json(&self) -> String {
        let js = SpectrumJson {
            t: self.period,
            theta: self.theta,
            k_central: self.k_central,
            entries: self
                .entries
                .iter()
                .map(|e| EntryJson {
                    k: e.k,
                    lambda: [e.lambda.re, e.lambda.im],
                    mult: e.mult,
                    z: [e.z.re, e.z.im],
                })
                .collect(),
        };
        crate::io::to_json_string(&js)
    }

    pub fn from_json(text: &str) -> Result<SpectralData> {
        let js: SpectrumJson =
            serde_json::from_str(text).map_err(|e| Error::parse(Some(e.line()), format!("spectrum JSON: {e}")))?;
        let k_max = js.entries.iter().map(|e| e.k.unsigned_abs() as usize).max().unwrap_or(0);
        let mut entries: Vec<SpectralEntry> = js
            .entries
            .into_iter()
            .map(|e| SpectralEntry {
                k: e.k,
                lambda: C64::new(e.lambda[0], e.lambda[1]),
                mult: e.mult,
                z: C64::new(e.z[0], e.z[1]),
            })
            .collect();
        entries.sort_by_key(|e| e.k);
        if entries.len() != 2 * k_max + 1 || entries.iter().enumerate().any(|(i, e)| e.k != i as i64 - k_max as i64) {
            return Err(Error::parse(None, "spectrum JSON: entries must cover k = -K..K exactly once"));
        }
        Ok(SpectralData { period: js.t, theta: js.theta, k_central: js.k_central, k_max, entries })
    }
}

/// Tuning of the zero search.
#[derive(Clone, Debug)]
pub struct LocateOptions {
    /// Override of the central block half-width.
    pub k_central: Option<usize>,
    pub newton_max_iter: usize,
}

impl Default for LocateOptions {
    fn default() -> Self {
        LocateOptions { k_central: None, newton_max_iter: 50 }
    }
}

fn a_minus_d(integ: &Integrator, lambda: C64) -> Result<(C64, C64, Monodromy)> {
    let m = integ.monodromy(lambda)?;
    Ok((m.a_minus_d(), m.a_minus_d_prime(), m))
}

/// Newton on a − d from `seed`, damped by step halving whenever |a − d| grows.
/// Gives up (None) if the iterate leaves the disk |λ − center| < radius.
fn newton_zero(integ: &Integrator, seed: C64, center: C64, radius: f64, max_iter: usize) -> Option<Monodromy> {
    let (mut lam, mut f, mut fp, mut mono) = match a_minus_d(integ, seed) {
        Ok((f, fp, m)) => (seed, f, fp, m),
        Err(_) => return None,
    };
    let scale = lam.norm().max(1.0);
    for _ in 0..max_iter {
        if f == C64::default() {
            return Some(mono);
        }
        let step = f / fp;
        if !step.is_finite() {
            return None;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..12 {
            let cand = lam - step * t;
            if (cand - center).norm() >= radius {
                t *= 0.5;
                continue;
            }
            let Ok((fc, fpc, mc)) = a_minus_d(integ, cand) else { return None };
            if fc.norm() <= f.norm() || (step * t).norm() <= 1e-9 * scale {
                accepted = Some((cand, fc, fpc, mc));
                break;
            }
            t *= 0.5;
        }
        let (cand, fc, fpc, mc) = accepted?;
        let moved = (cand - lam).norm();
        lam = cand;
        f = fc;
        fp = fpc;
        mono = mc;
        if moved <= 1e-13 * scale {
            break;
        }
    }
    // converged: Newton step negligible at the final point
    if (f / fp).norm() <= 1e-10 * scale {
        Some(mono)
    } else {
        None
    }
}

/// Undamped Newton polish returning the last iterate; stops when the step
/// stops shrinking (round-off floor near a multiple zero) and falls back to
/// the seed if the iterate wanders more than `limit`.
fn polish(integ: &Integrator, z0: C64, limit: f64, iters: usize) -> C64 {
    let mut z = z0;
    let mut last = f64::INFINITY;
    for _ in 0..iters {
        let Ok((f, fp, _)) = a_minus_d(integ, z) else { break };
        let step = f / fp;
        if !step.is_finite() || step.norm() >= last {
            break;
        }
        last = step.norm();
        z -= step;
        if last <= 1e-14 * z.norm().max(1.0) {
            break;
        }
    }
    if (z - z0).norm() < limit {
        z
    } else {
        z0
    }
}

/// Contour moments (1/2πi)∮ λ^p f'/f dλ, p = 0..=pmax, on |λ − c| = r, with P
/// trapezoid nodes; returned for the shifted/scaled variable (λ − c)/r.
fn contour_moments(integ: &Integrator, c: C64, r: f64, nodes: usize, pmax: usize) -> Result<Vec<C64>> {
    let vals: Vec<Result<(C64, C64)>> = (0..nodes)
        .into_par_iter()
        .map(|j| {
            let u = C64::from_polar(1.0, 2.0 * PI * j as f64 / nodes as f64);
            let (f, fp, _) = a_minus_d(integ, c + u * r)?;
            if f.norm() == 0.0 || !(fp / f).is_finite() {
                return Err(Error::Resolution("zero of a-d on the counting contour".into()));
            }
            Ok((u, fp / f * r))
        })
        .collect();
    let mut s = vec![C64::default(); pmax + 1];
    for v in vals {
        let (u, g) = v?;
        let mut w = u * g;
        for sp in s.iter_mut() {
            *sp += w;
            w *= u;
        }
    }
    let inv = 1.0 / nodes as f64;
    s.iter_mut().for_each(|z| *z *= inv);
    Ok(s)
}

/// Roots of the monic polynomial with power sums s_1..s_m (Newton identities
/// and companion-matrix eigenvalues).
fn roots_from_power_sums(s: &[C64], m: usize) -> Result<Vec<C64>> {
    let mut e = vec![C64::default(); m + 1];
    e[0] = C64::new(1.0, 0.0);
    for k in 1..=m {
        let mut acc = C64::default();
        for i in 1..=k {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            acc += e[k - i] * s[i] * sign;
        }
        e[k] = acc / k as f64;
    }
    if m == 1 {
        return Ok(vec![e[1]]);
    }
    // z^m − e1 z^{m−1} + e2 z^{m−2} − …
    let mut comp = DMatrix::<C64>::zeros(m, m);
    for i in 1..m {
        comp[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    for k in 1..=m {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        comp[(0, k - 1)] = e[k] * sign;
    }
    let ev = comp
        .eigenvalues()
        .ok_or_else(|| Error::Resolution("central block eigenvalue extraction failed".into()))?;
    Ok(ev.iter().copied().collect())
}

fn cmp_lambda(a: &C64, b: &C64, tol: f64) -> Ordering {
    if (a.re - b.re).abs() > tol {
        a.re.partial_cmp(&b.re).unwrap_or(Ordering::Equal)
    } else {
        a.im.partial_cmp(&b.im).unwrap_or(Ordering::Equal)
    }
}

/// Zeros of a − d inside |λ| < (2π/T)(K + ½), as (location, multiplicity)
/// sorted by real then imaginary part.
fn central_block(integ: &Integrator, kc: usize) -> Result<Vec<(C64, usize)>> {
    let period = integ.period;
    let spacing = 2.0 * PI / period;
    let m = 2 * kc + 1;
    let r = spacing * (kc as f64 + 0.5);
    let nodes = (64 * m).next_power_of_two().max(256);
    let s = contour_moments(integ, C64::default(), r, nodes, m)?;
    let count = s[0].re;
    if (count - m as f64).abs() > 0.25 || s[0].im.abs() > 0.25 {
        return Err(Error::Resolution(format!(
            "winding count {count:.3} of a-d on |lambda| = {r:.4} differs from {m}"
        )));
    }
    let seeds: Vec<C64> = roots_from_power_sums(&s, m)?.into_iter().map(|z| z * r).collect();

    // polish each seed; keep the polished value only if it stayed close
    let cluster_tol = 1e-3 * spacing;
    let polished: Vec<C64> = seeds
        .par_iter()
        .map(|&z0| polish(integ, z0, 0.1 * spacing, 40))
        .collect();

    // single-linkage clustering
    let mut label: Vec<usize> = (0..m).collect();
    for i in 0..m {
        for j in 0..i {
            if (polished[i] - polished[j]).norm() < cluster_tol {
                let (li, lj) = (label[i], label[j]);
                label.iter_mut().filter(|l| **l == li).for_each(|l| *l = lj);
            }
        }
    }
    let mut groups: Vec<(usize, Vec<C64>)> = Vec::new();
    for (i, &l) in label.iter().enumerate() {
        match groups.iter_mut().find(|g| g.0 == l) {
            Some(g) => g.1.push(polished[i]),
            None => groups.push((l, vec![polished[i]])),
        }
    }
    let centers: Vec<C64> = groups
        .iter()
        .map(|g| g.1.iter().sum::<C64>() / g.1.len() as f64)
        .collect();

    let mut out = Vec::with_capacity(groups.len());
    for (gi, g) in groups.iter().enumerate() {
        let mult = g.1.len();
        let c = centers[gi];
        let nearest = centers
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != gi)
            .map(|(_, z)| (z - c).norm())
            .fold(f64::INFINITY, f64::min);
        let rho = (0.4 * nearest).min(0.25 * spacing).max(4.0 * cluster_tol);
        let mut loc = c;
        if let Ok(sl) = contour_moments(integ, c, rho, 64, 1) {
            if (sl[0].re - mult as f64).abs() < 0.25 {
                loc = c + sl[1] / sl[0] * rho;
            }
        }
        if mult == 1 {
            if let Some(mono) = newton_zero(integ, loc, loc, rho, 20) {
                loc = mono.lambda;
            }
        }
        out.push((loc, mult));
    }
    out.sort_by(|a, b| cmp_lambda(&a.0, &b.0, 1e-9 * spacing));
    Ok(out)
}

/// Zero of a − d near λ_{k,0} for a tail index.
fn tail_zero(integ: &Integrator, k: i64, seed: Option<C64>, max_iter: usize) -> Result<Monodromy> {
    let center = C64::new(lattice_point(k, integ.period), 0.0);
    let delta = PI / integ.period;
    let start = seed.unwrap_or(center);
    if let Some(mono) = newton_zero(integ, start, center, delta, max_iter) {
        return Ok(mono);
    }
    for rho in [0.5 * delta, delta] {
        let s = contour_moments(integ, center, rho, 64, 1)?;
        if (s[0].re - 1.0).abs() < 0.25 {
            let guess = center + s[1] / s[0] * rho;
            if let Some(mono) = newton_zero(integ, guess, center, rho, max_iter) {
                return Ok(mono);
            }
            return a_minus_d(integ, guess).map(|x| x.2);
        }
    }
    Err(Error::Resolution(format!("no isolated zero of a-d found near lambda_{{{k},0}}")))
}

fn sign_k(k: i64) -> f64 {
    if k.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

fn check_range(integ: &Integrator, k_max: usize) -> Result<()> {
    let top = lattice_point(k_max as i64, integ.period) + PI / integ.period;
    if top > integ.lambda_max {
        return Err(Error::Resolution(format!(
            "K = {k_max} needs |lambda| up to {top:.3}, beyond the bound {:.3}",
            integ.lambda_max
        )));
    }
    Ok(())
}

/// λ_k for |k| ≤ K (with z left at 0).
pub fn locate_lambda_k(q: &Potential, k_max: usize) -> Result<SpectralData> {
    let mut data = spectral_data(q, k_max, &LocateOptions::default(), None)?;
    data.entries.iter_mut().for_each(|e| e.z = C64::default());
    Ok(data)
}

/// λ_k and z_k = 2(−1)^k b(λ_k) for |k| ≤ K.
pub fn perturbed_fourier(q: &Potential, k_max: usize) -> Result<SpectralData> {
    spectral_data(q, k_max, &LocateOptions::default(), None)
}

/// As [`perturbed_fourier`], seeding the tail Newton iterations from `warm`
/// (a nearby potential's data) when given.
pub fn spectral_data(
    q: &Potential,
    k_max: usize,
    opts: &LocateOptions,
    warm: Option<&SpectralData>,
) -> Result<SpectralData> {
    let integ = Integrator::new(q);
    spectral_data_with(&integ, q.theta, k_max, opts, warm)
}

pub(crate) fn spectral_data_with(
    integ: &Integrator,
    theta: f64,
    k_max: usize,
    opts: &LocateOptions,
    warm: Option<&SpectralData>,
) -> Result<SpectralData> {
    let kc = match opts.k_central {
        Some(k) => k,
        None => k_central_for(integ.l2_norm, integ.period),
    };
    let k_max = k_max.max(kc);
    check_range(integ, k_max)?;

    let central = central_block(integ, kc)?;
    let mut entries = Vec::with_capacity(2 * k_max + 1);
    let mut idx = -(kc as i64);
    let mut central_entries = Vec::new();
    for (lam, mult) in &central {
        for _ in 0..*mult {
            central_entries.push((idx, *lam, *mult));
            idx += 1;
        }
    }
    let central_z: Vec<Result<SpectralEntry>> = central_entries
        .par_iter()
        .map(|&(k, lam, mult)| {
            let m = integ.monodromy_matrix(lam)?;
            Ok(SpectralEntry { k, lambda: lam, mult, z: m.b() * (2.0 * sign_k(k)) })
        })
        .collect();

    let tail_ks: Vec<i64> = (-(k_max as i64)..=k_max as i64).filter(|k| k.unsigned_abs() as usize > kc).collect();
    let tail: Vec<Result<SpectralEntry>> = tail_ks
        .par_iter()
        .map(|&k| {
            let seed = warm
                .filter(|w| k.unsigned_abs() as usize <= w.k_max && k.unsigned_abs() as usize > w.k_central)
                .map(|w| w.lambda(k));
            let mono = tail_zero(integ, k, seed, opts.newton_max_iter)?;
            Ok(SpectralEntry { k, lambda: mono.lambda, mult: 1, z: mono.m.b() * (2.0 * sign_k(k)) })
        })
        .collect();

    let mut tail_iter = tail.into_iter();
    let mut central_iter = central_z.into_iter();
    for k in -(k_max as i64)..=k_max as i64 {
        let e = if k.unsigned_abs() as usize > kc { tail_iter.next() } else { central_iter.next() };
        entries.push(e.expect("entry count")?);
    }
    Ok(SpectralData { period: integ.period, theta, k_central: kc, k_max, entries })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiniteGapVerdict {
    pub finite_gap: bool,
    /// Largest |k| with |z_k| ≥ tol (0 when none).
    pub k0: usize,
    pub tol: f64,
    pub gap_indices: Vec<i64>,
}

/// Default verdict tolerance: 1e−6 relative to max|z_k| plus 1e−10.
pub fn default_gap_tol(data: &SpectralData) -> f64 {
    1e-6 * data.max_abs_z() + 1e-10
}

/// Finite gap iff every |z_k| with K₀ < |k| ≤ K lies below `tol`, where the
/// reported K₀ (largest index still above tol) must leave at least the upper
/// half of the computed range empty.
pub fn is_finite_gap(data: &SpectralData, tol: Option<f64>) -> FiniteGapVerdict {
    let tol = tol.unwrap_or_else(|| default_gap_tol(data));
    let gap_indices: Vec<i64> = data.entries.iter().filter(|e| e.z.norm() >= tol).map(|e| e.k).collect();
    let k0 = gap_indices.iter().map(|k| k.unsigned_abs() as usize).max().unwrap_or(0);
    FiniteGapVerdict { finite_gap: 2 * k0 <= data.k_max, k0, tol, gap_indices }
}

#[derive(Clone, Debug, Serialize)]
pub struct AsymptoticReport {
    pub k_max: usize,
    /// (k, d_k) with d_k = ‖M(λ_{k,0}) − (−1)^k I‖ (max row sum).
    pub d: Vec<(i64, f64)>,
    /// (m, (Σ_{|k|≤m} d_k²)^{1/2})
    pub partial_l2: Vec<(usize, f64)>,
    /// (λ, ‖M − M₀‖/‖M₀‖)
    pub ratios: Vec<([f64; 2], f64)>,
}

impl AsymptoticReport {
    /// ℓ² norm of d over k_lo < |k| ≤ k_max relative to the full ℓ² norm.
    pub fn tail_fraction(&self, k_lo: usize) -> f64 {
        let total: f64 = self.d.iter().map(|(_, v)| v * v).sum();
        if total == 0.0 {
            return 0.0;
        }
        let tail: f64 = self.d.iter().filter(|(k, _)| k.unsigned_abs() as usize > k_lo).map(|(_, v)| v * v).sum();
        (tail / total).sqrt()
    }

    pub fn partial_sum(&self, m: usize) -> f64 {
        self.partial_l2.iter().find(|(mm, _)| *mm == m).map(|x| x.1).unwrap_or(f64::NAN)
    }
}

/// ‖M(λ) − M₀(λ)‖/‖M₀(λ)‖
pub fn monodromy_ratio(integ: &Integrator, lambda: C64) -> Result<f64> {
    let m = integ.monodromy_matrix(lambda)?;
    let m0 = vacuum_frame(integ.period, lambda);
    Ok((m - m0).norm_inf() / m0.norm_inf())
}

/// Default λ sample for the ratio diagnostic: 10·2^i and 10·2^i + 2i up to half the resolution bound.
pub fn default_ratio_grid(integ: &Integrator) -> Vec<C64> {
    let mut out = Vec::new();
    let mut x = 10.0;
    while x <= 0.5 * integ.lambda_max {
        out.push(C64::new(x, 0.0));
        out.push(C64::new(x, 2.0));
        x *= 2.0;
    }
    out
}

pub fn asymptotic_diagnostics(q: &Potential, k_max: usize, ratio_lambdas: Option<&[C64]>) -> Result<AsymptoticReport> {
    let integ = Integrator::new(q);
    check_range(&integ, k_max)?;
    let ks: Vec<i64> = (-(k_max as i64)..=k_max as i64).collect();
    let d: Vec<Result<(i64, f64)>> = ks
        .par_iter()
        .map(|&k| {
            let m = integ.monodromy_matrix(C64::new(lattice_point(k, q.period), 0.0))?;
            Ok((k, (m - Mat2::identity().scale_re(sign_k(k))).norm_inf()))
        })
        .collect();
    let d: Vec<(i64, f64)> = d.into_iter().collect::<Result<_>>()?;
    let mut partial_l2 = Vec::with_capacity(k_max + 1);
    let mut acc = 0.0;
    for m in 0..=k_max {
        for (k, v) in &d {
            if k.unsigned_abs() as usize == m {
                acc += v * v;
            }
        }
        partial_l2.push((m, acc.sqrt()));
    }
    let grid = match ratio_lambdas {
        Some(g) => g.to_vec(),
        None => default_ratio_grid(&integ),
    };
    let ratios = grid
        .iter()
        .map(|&l| Ok(([l.re, l.im], monodromy_ratio(&integ, l)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(AsymptoticReport { k_max, d, partial_l2, ratios })
}

/// Runtime check of the structural identities of the monodromy.
#[derive(Clone, Debug, Serialize)]
pub struct InvariantReport {
    /// max |det M − 1| / (1 + ‖M‖²)
    pub det_defect: f64,
    /// max ‖MM* − I‖ over the real λ sampled.
    pub unitarity_defect: f64,
    /// max |μ₊μ₋ − 1| / (1 + |μ₊||μ₋|)
    pub mu_product_defect: f64,
    /// max |Δ(λ̄) − conj Δ(λ)| / (1 + |Δ(λ)|)
    pub conjugation_defect: f64,
    /// Zeros of a − d inside the central contour: expected 2K+1, found.
    pub winding_expected: usize,
    pub winding_found: usize,
    pub tol: f64,
    pub passed: bool,
}

/// Default λ sample: real points across the central block and off-axis points.
pub fn invariant_lambdas(q: &Potential) -> Vec<C64> {
    let scale = lattice_point(default_k_central(q) as i64, q.period);
    let mut out = Vec::new();
    for i in -4..=4 {
        let x = scale * i as f64 / 4.0 + 0.1;
        out.push(C64::new(x, 0.0));
        out.push(C64::new(x, 0.5 * (i as f64).abs() / q.period + 0.3));
    }
    out
}

pub fn structural_invariants(q: &Potential, lambdas: &[C64], tol: f64) -> Result<InvariantReport> {
    let integ = Integrator::new(q);
    let rows = lambdas
        .par_iter()
        .map(|&l| -> Result<[f64; 4]> {
            let m = integ.monodromy_matrix(l)?;
            let mc = integ.monodromy_matrix(l.conj())?;
            let nm = m.norm_inf();
            let det = (m.det() - 1.0).norm() / (1.0 + nm * nm);
            let unit = if l.im == 0.0 { m.unitarity_defect() } else { 0.0 };
            let (mp, mm) = (mu_of(&m, 1.0), mu_of(&m, -1.0));
            let mu = (mp * mm - 1.0).norm() / (1.0 + mp.norm() * mm.norm());
            let conj = (mc.trace() - m.trace().conj()).norm() / (1.0 + m.trace().norm());
            Ok([det, unit, mu, conj])
        })
        .collect::<Result<Vec<_>>>()?;
    let worst = |i: usize| rows.iter().map(|r| r[i]).fold(0.0, f64::max);
    let kc = default_k_central(q);
    let data = spectral_data_with(&integ, q.theta, kc, &LocateOptions::default(), None)?;
    let found: usize = data.entries.iter().filter(|e| e.k.unsigned_abs() as usize <= kc).count();
    let (det_defect, unitarity_defect, mu_product_defect, conjugation_defect) = (worst(0), worst(1), worst(2), worst(3));
    let passed = det_defect < tol
        && unitarity_defect < tol
        && mu_product_defect < tol
        && conjugation_defect < tol
        && found == 2 * kc + 1;
    Ok(InvariantReport {
        det_defect,
        unitarity_defect,
        mu_product_defect,
        conjugation_defect,
        winding_expected: 2 * kc + 1,
        winding_found: found,
        tol,
        passed,
    })
}
