//! Extended frame dF/dt = F·α, F(0) = I, with α = ½(λε + qε₊ + q̄ε₋), its
//! λ-derivative and the monodromy M(λ) = F(T, λ).
//!
//! Each grid cell is advanced by an exact exponential of a Magnus exponent
//! built from band-limited samples of q inside the cell. `Gauss4` (two Gauss
//! nodes plus the commutator term) is the default; `Midpoint` is the
//! second-order exponential midpoint rule. Both keep det F = 1 and, for real
//! λ, F ∈ SU2 to round-off, and both are exact for constant q. F' is carried by
//! the exact derivative of each cell exponential, so it is the λ-derivative of
//! the discrete F.

use num_complex::Complex64 as C64;

use crate::algebra::{exp_traceless_unchecked, exp_traceless_with_derivative, Mat2};
use crate::error::{Error, Result};
use crate::potential::Potential;

/// Default resolution guard factor: |λ| ≤ factor·n/T.
pub const LAMBDA_MAX_FACTOR: f64 = 10.0;

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Scheme {
    Midpoint,
    #[default]
    Gauss4,
}

/// α = ½(λε + qε₊ + q̄ε₋)
#[inline]
pub fn alpha(q: C64, lambda: C64) -> Mat2 {
    let il = C64::new(-lambda.im, lambda.re) * 0.5; // iλ/2
    Mat2::new(il, q * 0.5, -q.conj() * 0.5, -il)
}

/// α at grid sample j.
pub fn alpha_at(q: &Potential, j: usize, lambda: C64) -> Mat2 {
    alpha(q.samples[j], lambda)
}

#[derive(Clone, Debug)]
pub struct FrameTrajectory {
    pub lambda: C64,
    /// t_j = jT/n, j = 0..=n
    pub times: Vec<f64>,
    pub frames: Vec<Mat2>,
    pub dframes: Option<Vec<Mat2>>,
}

#[derive(Clone, Copy, Debug)]
pub struct Monodromy {
    pub lambda: C64,
    pub m: Mat2,
    pub mprime: Mat2,
}

impl Monodromy {
    /// Δ = tr M
    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    pub fn trace_prime(&self) -> C64 {
        self.mprime.trace()
    }

    /// a − d
    pub fn a_minus_d(&self) -> C64 {
        self.m.a() - self.m.d()
    }

    pub fn a_minus_d_prime(&self) -> C64 {
        self.mprime.a() - self.mprime.d()
    }

    /// Δ² − 4 evaluated as (a−d)² + 4bc, which avoids cancellation near Δ = ±2.
    pub fn discriminant(&self) -> C64 {
        let amd = self.a_minus_d();
        amd * amd + self.m.b() * self.m.c() * 4.0
    }
}

/// Precomputed cell data for repeated integrations of one potential.
#[derive(Clone, Debug)]
pub struct Integrator {
    pub n: usize,
    pub period: f64,
    pub scheme: Scheme,
    pub lambda_max: f64,
    /// ‖q‖_{L²} of the potential the integrator was built from.
    pub l2_norm: f64,
    h: f64,
    // per cell: q at the stage nodes (one node for Midpoint, two for Gauss4)
    nodes: Vec<[C64; 2]>,
}

impl Integrator {
    pub fn new(q: &Potential) -> Self {
        Self::with_scheme(q, Scheme::default())
    }

    pub fn with_scheme(q: &Potential, scheme: Scheme) -> Self {
        let nodes = match scheme {
            Scheme::Midpoint => q.shifted(0.5).into_iter().map(|z| [z, z]).collect(),
            Scheme::Gauss4 => {
                let c = SQRT3 / 6.0;
                let a = q.shifted(0.5 - c);
                let b = q.shifted(0.5 + c);
                a.into_iter().zip(b).map(|(x, y)| [x, y]).collect()
            }
        };
        Integrator {
            n: q.n,
            period: q.period,
            scheme,
            lambda_max: LAMBDA_MAX_FACTOR * q.n as f64 / q.period,
            l2_norm: q.l2_norm(),
            h: q.step(),
            nodes,
        }
    }

    pub fn with_lambda_max(mut self, lambda_max: f64) -> Self {
        self.lambda_max = lambda_max;
        self
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn check_lambda(&self, lambda: C64) -> Result<()> {
        if !lambda.is_finite() {
            return Err(Error::Domain("non-finite spectral parameter".into()));
        }
        if lambda.norm() > self.lambda_max {
            return Err(Error::Resolution(format!(
                "|lambda| = {:.4} exceeds the resolution bound {:.4} = 10 n/T of this grid",
                lambda.norm(),
                self.lambda_max
            )));
        }
        Ok(())
    }

    /// Magnus exponent of cell j and its λ-derivative.
    #[inline]
    fn cell(&self, j: usize, lambda: C64) -> (Mat2, Mat2) {
        let h = self.h;
        let half_eps = Mat2::eps().scale_re(0.5);
        match self.scheme {
            Scheme::Midpoint => (alpha(self.nodes[j][0], lambda).scale_re(h), half_eps.scale_re(h)),
            Scheme::Gauss4 => {
                let [q1, q2] = self.nodes[j];
                let a1 = alpha(q1, lambda);
                let a2 = alpha(q2, lambda);
                let c = SQRT3 / 12.0 * h * h;
                let omega = (a1 + a2).scale_re(0.5 * h) + a1.commutator(&a2).scale_re(c);
                let domega = half_eps.scale_re(h)
                    + (half_eps.commutator(&a2) + a1.commutator(&half_eps)).scale_re(c);
                (omega, domega)
            }
        }
    }

    /// Exponential of cell j at λ (no derivative).
    #[inline]
    pub(crate) fn cell_exp(&self, j: usize, lambda: C64) -> Mat2 {
        exp_traceless_unchecked(&self.cell(j, lambda).0)
    }

    pub fn monodromy(&self, lambda: C64) -> Result<Monodromy> {
        self.check_lambda(lambda)?;
        let mut f = Mat2::identity();
        let mut fp = Mat2::zero();
        for j in 0..self.n {
            let (om, dom) = self.cell(j, lambda);
            let (e, d) = exp_traceless_with_derivative(&om, &dom);
            fp = fp * e + f * d;
            f = f * e;
        }
        Ok(Monodromy { lambda, m: f, mprime: fp })
    }

    /// M(λ) without the derivative.
    pub fn monodromy_matrix(&self, lambda: C64) -> Result<Mat2> {
        self.check_lambda(lambda)?;
        let mut f = Mat2::identity();
        for j in 0..self.n {
            f = f * self.cell_exp(j, lambda);
        }
        Ok(f)
    }

    pub fn trajectory(&self, lambda: C64, with_derivative: bool) -> Result<FrameTrajectory> {
        self.check_lambda(lambda)?;
        let mut frames = Vec::with_capacity(self.n + 1);
        let mut dframes = with_derivative.then(|| Vec::with_capacity(self.n + 1));
        let mut f = Mat2::identity();
        let mut fp = Mat2::zero();
        frames.push(f);
        if let Some(d) = dframes.as_mut() {
            d.push(fp);
        }
        for j in 0..self.n {
            let (om, dom) = self.cell(j, lambda);
            if let Some(dv) = dframes.as_mut() {
                let (e, d) = exp_traceless_with_derivative(&om, &dom);
                fp = fp * e + f * d;
                f = f * e;
                dv.push(fp);
            } else {
                f = f * exp_traceless_unchecked(&om);
            }
            frames.push(f);
        }
        let times = (0..=self.n).map(|j| j as f64 * self.h).collect();
        Ok(FrameTrajectory { lambda, times, frames, dframes })
    }
}

pub fn integrate_frame(q: &Potential, lambda: C64, with_derivative: bool) -> Result<FrameTrajectory> {
    Integrator::new(q).trajectory(lambda, with_derivative)
}

pub fn monodromy(q: &Potential, lambda: C64) -> Result<Monodromy> {
    Integrator::new(q).monodromy(lambda)
}

/// Vacuum frame exp(½λtε).
pub fn vacuum_frame(t: f64, lambda: C64) -> Mat2 {
    let z = C64::new(0.0, 0.5) * lambda * t;
    Mat2::new(z.exp(), C64::default(), C64::default(), (-z).exp())
}

/// Refinement factor of the quadrature grid used by [`picard_series`].
const PICARD_REFINE: usize = 8;

/// Truncated Picard series I + Σ_{m=1}^{n_terms} ∫…∫ α(t₁)…α(t_m) (t₁<…<t_m),
/// each iterated integral by fourth-order cumulative quadrature on a refined grid.
///
/// Refuses when the remainder bound L^{n+1}/(n+1)!·e^L, L = ∫‖α‖, exceeds `tol`.
pub fn picard_series(q: &Potential, lambda: C64, n_terms: usize, tol: f64) -> Result<Mat2> {
    let fine = q.resample(q.n * PICARD_REFINE)?;
    let m = fine.n;
    let h = fine.step();
    let alphas: Vec<Mat2> = (0..=m).map(|i| alpha(fine.samples[i % m], lambda)).collect();
    let l1: f64 = h * (alphas.iter().map(|a| a.norm_spectral()).sum::<f64>()
        - 0.5 * (alphas[0].norm_spectral() + alphas[m].norm_spectral()));
    let mut bound = l1.exp();
    for k in 1..=n_terms + 1 {
        bound *= l1 / k as f64;
    }
    if !(bound <= tol) {
        return Err(Error::Domain(format!(
            "picard_series: remainder bound {bound:.3e} above tolerance {tol:.1e} with {n_terms} terms"
        )));
    }
    let mut term: Vec<Mat2> = vec![Mat2::identity(); m + 1];
    let mut sum = Mat2::identity();
    for _ in 0..n_terms {
        let g: Vec<Mat2> = term.iter().zip(&alphas).map(|(p, a)| *p * *a).collect();
        let mut next = vec![Mat2::zero(); m + 1];
        for i in 0..m {
            // fourth-order cumulative rule from the cubic through four neighbours
            let w = h / 24.0;
            let inc = if i == 0 {
                (g[0].scale_re(9.0) + g[1].scale_re(19.0) - g[2].scale_re(5.0) + g[3]).scale_re(w)
            } else if i == m - 1 {
                (g[m - 3] - g[m - 2].scale_re(5.0) + g[m - 1].scale_re(19.0) + g[m].scale_re(9.0)).scale_re(w)
            } else {
                (g[i].scale_re(13.0) + g[i + 1].scale_re(13.0) - g[i - 1] - g[i + 2]).scale_re(w)
            };
            next[i + 1] = next[i] + inc;
        }
        sum += next[m];
        term = next;
    }
    Ok(sum)
}
