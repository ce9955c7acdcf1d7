//! Periodic complex-curvature potentials on a uniform grid, their Fourier
//! coefficients q̂(k) = ∫₀^T q(t) e^{+2πikt/T} dt, and the regauging that turns
//! a quasi-periodic curvature into a periodic potential plus torsion shift θ.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// Q_k = Σ_j x_j e^{+2πijk/n}
pub(crate) fn dft_plus(x: &[C64]) -> Vec<C64> {
    let mut buf = x.to_vec();
    plan(x.len(), true).process(&mut buf);
    buf
}

/// x_j = Σ_k Q_k e^{−2πijk/n} (unnormalized)
pub(crate) fn dft_minus(x: &[C64]) -> Vec<C64> {
    let mut buf = x.to_vec();
    plan(x.len(), false).process(&mut buf);
    buf
}

/// Signed frequency of DFT bin `k` on an n-point grid (Nyquist reported as n/2).
#[inline]
pub(crate) fn signed_index(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    pub n: usize,
    /// Period T (arc length).
    pub period: f64,
    /// Torsion shift θ; the spectral parameter of the periodic potential is λ̃ = λ + θ.
    pub theta: f64,
    pub samples: Vec<C64>,
}

#[derive(Serialize, Deserialize)]
struct PotentialJson {
    n: usize,
    #[serde(rename = "T")]
    t: f64,
    theta: f64,
    samples: Vec<[f64; 2]>,
}

impl Potential {
    pub fn new(samples: Vec<C64>, period: f64, theta: f64) -> Result<Self> {
        let n = samples.len();
        if n < 8 || n % 2 != 0 {
            return Err(Error::Domain(format!("grid size must be even and >= 8, got {n}")));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::Domain(format!("period must be positive, got {period}")));
        }
        if !theta.is_finite() || samples.iter().any(|z| !z.is_finite()) {
            return Err(Error::Domain("non-finite potential data".into()));
        }
        Ok(Potential { n, period, theta, samples })
    }

    pub fn from_fn(n: usize, period: f64, theta: f64, f: impl Fn(f64) -> C64) -> Result<Self> {
        let h = period / n as f64;
        Potential::new((0..n).map(|j| f(j as f64 * h)).collect(), period, theta)
    }

    pub fn zero(n: usize, period: f64) -> Result<Self> {
        Potential::new(vec![C64::default(); n], period, 0.0)
    }

    #[inline]
    pub fn step(&self) -> f64 {
        self.period / self.n as f64
    }

    pub fn times(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.n).map(|j| j as f64 * h).collect()
    }

    pub fn same_grid(&self, other: &Potential) -> bool {
        self.n == other.n && (self.period - other.period).abs() <= 1e-12 * self.period
    }

    pub fn l2_norm(&self) -> f64 {
        (self.step() * self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt()
    }

    pub fn l2_distance(&self, other: &Potential) -> Result<f64> {
        if !self.same_grid(other) {
            return Err(Error::Domain("l2_distance: grid mismatch".into()));
        }
        let s: f64 = self.samples.iter().zip(&other.samples).map(|(a, b)| (a - b).norm_sqr()).sum();
        Ok((self.step() * s).sqrt())
    }

    /// min over constant phases φ of ‖q₁ − e^{iφ} q₂‖; returns (distance, φ).
    pub fn l2_distance_mod_phase(&self, other: &Potential) -> Result<(f64, f64)> {
        if !self.same_grid(other) {
            return Err(Error::Domain("l2_distance: grid mismatch".into()));
        }
        let ip: C64 = self.samples.iter().zip(&other.samples).map(|(a, b)| a * b.conj()).sum();
        let phi = if ip.norm() > 0.0 { ip.arg() } else { 0.0 };
        let rot = C64::from_polar(1.0, phi);
        let s: f64 = self.samples.iter().zip(&other.samples).map(|(a, b)| (a - rot * b).norm_sqr()).sum();
        Ok(((self.step() * s).sqrt(), phi))
    }

    /// DFT bins Q_k with q̂(k) = h·Q_{k mod n}.
    pub(crate) fn spectrum(&self) -> Vec<C64> {
        dft_plus(&self.samples)
    }

    pub fn fourier(&self, k_max: usize) -> Result<FourierSeq> {
        if self.n < 2 || k_max + 1 > self.n / 2 {
            return Err(Error::Domain(format!(
                "fourier: K = {k_max} out of range for n = {} (need K <= n/2 - 1)",
                self.n
            )));
        }
        let spec = self.spectrum();
        let h = self.step();
        let coeffs = (-(k_max as i64)..=k_max as i64)
            .map(|k| spec[k.rem_euclid(self.n as i64) as usize] * h)
            .collect();
        Ok(FourierSeq { k_max, coeffs })
    }

    /// Samples of the band-limited interpolant at t_j + s·h.
    pub fn shifted(&self, s: f64) -> Vec<C64> {
        let n = self.n;
        let mut spec = self.spectrum();
        for (k, v) in spec.iter_mut().enumerate() {
            let ks = signed_index(k, n);
            if 2 * ks.unsigned_abs() as usize == n {
                *v *= (PI * s).cos();
            } else {
                *v *= C64::from_polar(1.0, -2.0 * PI * ks as f64 * s / n as f64);
            }
        }
        let mut out = dft_minus(&spec);
        let inv = 1.0 / n as f64;
        out.iter_mut().for_each(|z| *z *= inv);
        out
    }

    /// q^{(m)}(0) for m = 0..=order from the band-limited interpolant.
    pub fn derivatives_at_zero(&self, order: usize) -> Vec<C64> {
        derivatives_at_zero(&self.spectrum(), self.period, order)
    }

    /// Spectral resampling onto a grid of size `m` (zero padding / truncation).
    pub fn resample(&self, m: usize) -> Result<Potential> {
        if m == self.n {
            return Ok(self.clone());
        }
        let spec = self.spectrum();
        let mut out = vec![C64::default(); m];
        let kmax = (self.n.min(m) / 2) as i64;
        for k in -kmax..=kmax {
            let mut v = spec[k.rem_euclid(self.n as i64) as usize];
            if 2 * k.unsigned_abs() as usize == self.n.min(m) {
                v *= 0.5;
            }
            out[k.rem_euclid(m as i64) as usize] += v;
        }
        let scale = 1.0 / self.n as f64;
        let samples = dft_minus(&out).into_iter().map(|z| z * scale).collect();
        Potential::new(samples, self.period, self.theta)
    }

    pub fn with_samples(&self, samples: Vec<C64>) -> Potential {
        Potential { n: self.n, period: self.period, theta: self.theta, samples }
    }

    /// Undo the regauging: raw(t) = e^{iθt} q(t) on the grid.
    pub fn unregauge(&self) -> Vec<C64> {
        let h = self.step();
        self.samples
            .iter()
            .enumerate()
            .map(|(j, q)| q * C64::from_polar(1.0, self.theta * j as f64 * h))
            .collect()
    }

    pub fn to_json(&self) -> String {
        let js = PotentialJson {
            n: self.n,
            t: self.period,
            theta: self.theta,
            samples: self.samples.iter().map(|z| [z.re, z.im]).collect(),
        };
        crate::io::to_json_string(&js)
    }

    pub fn from_json(text: &str) -> Result<Potential> {
        let js: PotentialJson = serde_json::from_str(text)
            .map_err(|e| Error::parse(Some(e.line()), format!("potential JSON: {e}")))?;
        if js.samples.len() != js.n {
            return Err(Error::parse(None, format!("potential JSON: n = {} but {} samples", js.n, js.samples.len())));
        }
        let samples = js.samples.iter().map(|p| C64::new(p[0], p[1])).collect();
        Potential::new(samples, js.t, js.theta).map_err(|e| Error::parse(None, e.to_string()))
    }
}

pub(crate) fn derivatives_at_zero(spec: &[C64], period: f64, order: usize) -> Vec<C64> {
    let n = spec.len();
    let inv = 1.0 / n as f64;
    (0..=order)
        .map(|m| {
            let mut s = C64::default();
            for (k, v) in spec.iter().enumerate() {
                let ks = signed_index(k, n);
                if 2 * ks.unsigned_abs() as usize == n {
                    // Nyquist mode enters as cos(πnt/T)
                    if m % 2 == 0 {
                        let w = PI * n as f64 / period;
                        let sign = if (m / 2) % 2 == 0 { 1.0 } else { -1.0 };
                        s += v * sign * w.powi(m as i32);
                    }
                } else {
                    let w = C64::new(0.0, -2.0 * PI * ks as f64 / period);
                    s += v * w.powi(m as i32);
                }
            }
            s * inv
        })
        .collect()
}

/// Fourier coefficients q̂(k) for k = −K..K.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierSeq {
    pub k_max: usize,
    pub coeffs: Vec<C64>,
}

impl FourierSeq {
    pub fn zeros(k_max: usize) -> Self {
        FourierSeq { k_max, coeffs: vec![C64::default(); 2 * k_max + 1] }
    }

    pub fn get(&self, k: i64) -> C64 {
        if k.unsigned_abs() as usize > self.k_max {
            return C64::default();
        }
        self.coeffs[(k + self.k_max as i64) as usize]
    }

    pub fn set(&mut self, k: i64, v: C64) {
        assert!(k.unsigned_abs() as usize <= self.k_max, "index {k} outside ±{}", self.k_max);
        self.coeffs[(k + self.k_max as i64) as usize] = v;
    }

    pub fn indices(&self) -> impl Iterator<Item = i64> {
        let k = self.k_max as i64;
        -k..=k
    }

    /// Σ|q̂(k)|²/T
    pub fn energy(&self, period: f64) -> f64 {
        self.coeffs.iter().map(|z| z.norm_sqr()).sum::<f64>() / period
    }
}

/// q_j = (1/T) Σ_k q̂(k) e^{−2πikt_j/T}; θ of the result is 0.
pub fn inverse_fourier(c: &FourierSeq, n: usize, period: f64) -> Result<Potential> {
    if c.k_max + 1 > n / 2 {
        return Err(Error::Domain(format!("inverse_fourier: K = {} needs n >= {}", c.k_max, 2 * c.k_max + 2)));
    }
    let mut spec = vec![C64::default(); n];
    for k in c.indices() {
        spec[k.rem_euclid(n as i64) as usize] += c.get(k);
    }
    let scale = 1.0 / period;
    let samples = dft_minus(&spec).into_iter().map(|z| z * scale).collect();
    Potential::new(samples, period, 0.0)
}

/// Default tolerance on the periodicity defect of the regauged samples.
pub const REGAUGE_TOL: f64 = 1e-6;

/// Extract θ from raw(t+T) = e^{iθT} raw(t) and return the periodic q̃ = e^{−iθt} raw.
///
/// `raw` holds samples at t_j = jT/n for j = 0..len with len > n. θT is first
/// taken in (−π, π]; the 2π/T branch is then fixed by centering the spectrum of
/// q̃ (the representative whose Fourier mass is closest to k = 0).
pub fn regauge(raw: &[C64], n: usize, period: f64) -> Result<Potential> {
    regauge_with_tol(raw, n, period, REGAUGE_TOL)
}

pub fn regauge_with_tol(raw: &[C64], n: usize, period: f64, tol: f64) -> Result<Potential> {
    if raw.len() <= n {
        return Err(Error::Domain(format!(
            "regauge: need samples beyond one period ({} <= {n})",
            raw.len()
        )));
    }
    let amax = raw.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let h = period / n as f64;
    if amax == 0.0 {
        return Potential::new(vec![C64::default(); n], period, 0.0);
    }
    let mut acc = C64::default();
    for j in 0..raw.len() - n {
        let (a, b) = (raw[j], raw[j + n]);
        if a.norm() > 0.01 * amax && b.norm() > 0.01 * amax {
            let r = b * a.conj();
            acc += r / r.norm();
        }
    }
    let theta0 = if acc.norm() > 0.0 { acc.arg() / period } else { 0.0 };
    let base: Vec<C64> = (0..n)
        .map(|j| raw[j] * C64::from_polar(1.0, -theta0 * j as f64 * h))
        .collect();

    let spec = dft_plus(&base);
    let (mut wsum, mut ksum) = (0.0, 0.0);
    for (k, v) in spec.iter().enumerate() {
        let ks = signed_index(k, n);
        if 2 * ks.unsigned_abs() as usize == n {
            continue;
        }
        // q̂(k) ∝ Q_k with Q_k = Σ q_j e^{+2πijk/n}
        wsum += v.norm_sqr();
        ksum += ks as f64 * v.norm_sqr();
    }
    let m = if wsum > 0.0 { -(ksum / wsum).round() as i64 } else { 0 };
    let theta = theta0 + 2.0 * PI * m as f64 / period;

    let samples: Vec<C64> = (0..n)
        .map(|j| raw[j] * C64::from_polar(1.0, -theta * j as f64 * h))
        .collect();
    let defect = (0..raw.len() - n)
        .map(|j| {
            let shifted = raw[j + n] * C64::from_polar(1.0, -theta * (j + n) as f64 * h);
            (shifted - samples[j % n]).norm()
        })
        .fold(0.0, f64::max);
    if defect > tol * amax {
        return Err(Error::Domain(format!(
            "regauge: periodicity defect {:.3e} exceeds tolerance (input does not span one full period)",
            defect / amax
        )));
    }
    Potential::new(samples, period, theta)
}
