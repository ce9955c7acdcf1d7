//! 2×2 complex matrices, the ε-basis of sl2(C) and the identification su2 ≅ R³.
//!
//! Basis: ε = diag(i, −i), ε₊ = [[0,1],[0,0]], ε₋ = [[0,0],[−1,0]].
//! The orthonormal su2 basis is {ε, ε₊+ε₋, i(ε₊−ε₋)} with ⟨X,Y⟩ = −½ tr(XY).

use num_complex::Complex64 as C64;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::error::{Error, Result};

/// Absolute tolerance on |tr A| accepted by [`exp_traceless`].
pub const TRACE_TOL: f64 = 1e-12;

/// Tolerance on the Hermitian part accepted by [`su2_project`].
pub const HERMITIAN_TOL: f64 = 1e-9;

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Complex 2×2 matrix, row-major `[a, b, c, d]`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Mat2(pub [C64; 4]);

impl Mat2 {
    pub const fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Mat2([a, b, c, d])
    }

    pub const fn zero() -> Self {
        Mat2([ZERO; 4])
    }

    pub const fn identity() -> Self {
        Mat2([ONE, ZERO, ZERO, ONE])
    }

    pub fn scalar(s: C64) -> Self {
        Mat2([s, ZERO, ZERO, s])
    }

    /// ε = diag(i, −i)
    pub const fn eps() -> Self {
        Mat2([I, ZERO, ZERO, C64 { re: 0.0, im: -1.0 }])
    }

    /// ε₊ = [[0,1],[0,0]]
    pub const fn eps_plus() -> Self {
        Mat2([ZERO, ONE, ZERO, ZERO])
    }

    /// ε₋ = [[0,0],[−1,0]]
    pub const fn eps_minus() -> Self {
        Mat2([ZERO, ZERO, C64 { re: -1.0, im: 0.0 }, ZERO])
    }

    #[inline]
    pub fn a(&self) -> C64 {
        self.0[0]
    }
    #[inline]
    pub fn b(&self) -> C64 {
        self.0[1]
    }
    #[inline]
    pub fn c(&self) -> C64 {
        self.0[2]
    }
    #[inline]
    pub fn d(&self) -> C64 {
        self.0[3]
    }

    #[inline]
    pub fn det(&self) -> C64 {
        self.0[0] * self.0[3] - self.0[1] * self.0[2]
    }

    #[inline]
    pub fn trace(&self) -> C64 {
        self.0[0] + self.0[3]
    }

    /// Adjugate; equals the inverse for unimodular matrices.
    #[inline]
    pub fn adjugate(&self) -> Self {
        let [a, b, c, d] = self.0;
        Mat2([d, -b, -c, a])
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.det();
        if det.norm() == 0.0 || !det.is_finite() {
            return Err(Error::Domain("singular 2x2 matrix".into()));
        }
        Ok(self.adjugate().scale(det.inv()))
    }

    #[inline]
    pub fn transpose(&self) -> Self {
        let [a, b, c, d] = self.0;
        Mat2([a, c, b, d])
    }

    #[inline]
    pub fn conj(&self) -> Self {
        let [a, b, c, d] = self.0;
        Mat2([a.conj(), b.conj(), c.conj(), d.conj()])
    }

    /// Conjugate transpose.
    #[inline]
    pub fn adjoint(&self) -> Self {
        self.conj().transpose()
    }

    #[inline]
    pub fn scale(&self, s: C64) -> Self {
        let [a, b, c, d] = self.0;
        Mat2([a * s, b * s, c * s, d * s])
    }

    #[inline]
    pub fn scale_re(&self, s: f64) -> Self {
        let [a, b, c, d] = self.0;
        Mat2([a * s, b * s, c * s, d * s])
    }

    #[inline]
    pub fn commutator(&self, other: &Self) -> Self {
        *self * *other - *other * *self
    }

    /// Max absolute row sum (the norm |·| used for monodromy estimates).
    pub fn norm_inf(&self) -> f64 {
        let [a, b, c, d] = self.0;
        (a.norm() + b.norm()).max(c.norm() + d.norm())
    }

    pub fn norm_frobenius(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest singular value.
    pub fn norm_spectral(&self) -> f64 {
        let f2 = self.0.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let dt = self.det().norm();
        let disc = (f2 * f2 - 4.0 * dt * dt).max(0.0).sqrt();
        ((f2 + disc) / 2.0).sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (0..4).map(|i| (self.0[i] - other.0[i]).norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.is_finite())
    }

    /// ⟨X,Y⟩ = −½ tr(XY)
    pub fn inner(&self, other: &Self) -> C64 {
        -(*self * *other).trace() * 0.5
    }

    /// Distance of `self` from SU2: ‖X̄ᵗX − I‖ plus |det − 1|.
    pub fn unitarity_defect(&self) -> f64 {
        (self.adjoint() * *self).max_abs_diff(&Mat2::identity()) + (self.det() - 1.0).norm()
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    #[inline]
    fn add(self, o: Mat2) -> Mat2 {
        Mat2([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2], self.0[3] + o.0[3]])
    }
}

impl AddAssign for Mat2 {
    #[inline]
    fn add_assign(&mut self, o: Mat2) {
        for i in 0..4 {
            self.0[i] += o.0[i];
        }
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    #[inline]
    fn sub(self, o: Mat2) -> Mat2 {
        Mat2([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2], self.0[3] - o.0[3]])
    }
}

impl SubAssign for Mat2 {
    #[inline]
    fn sub_assign(&mut self, o: Mat2) {
        for i in 0..4 {
            self.0[i] -= o.0[i];
        }
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    #[inline]
    fn neg(self) -> Mat2 {
        Mat2([-self.0[0], -self.0[1], -self.0[2], -self.0[3]])
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    #[inline]
    fn mul(self, o: Mat2) -> Mat2 {
        let [a, b, c, d] = self.0;
        let [e, f, g, h] = o.0;
        Mat2([a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h])
    }
}

impl MulAssign for Mat2 {
    #[inline]
    fn mul_assign(&mut self, o: Mat2) {
        *self = *self * o;
    }
}

impl Mul<C64> for Mat2 {
    type Output = Mat2;
    #[inline]
    fn mul(self, s: C64) -> Mat2 {
        self.scale(s)
    }
}

impl Mul<f64> for Mat2 {
    type Output = Mat2;
    #[inline]
    fn mul(self, s: f64) -> Mat2 {
        self.scale_re(s)
    }
}

/// Matrix times column vector.
#[inline]
pub fn mat_vec(m: &Mat2, v: [C64; 2]) -> [C64; 2] {
    [m.0[0] * v[0] + m.0[1] * v[1], m.0[2] * v[0] + m.0[3] * v[1]]
}

#[inline]
pub fn dot(u: [C64; 2], v: [C64; 2]) -> C64 {
    u[0] * v[0] + u[1] * v[1]
}

// sinh(s)/s and (s cosh s − sinh s)/s³ as functions of s², so the branch of
// s = √(−det A) never matters.
#[inline]
fn sinhc_and_cosh(s2: C64) -> (C64, C64) {
    let s = s2.sqrt();
    if s.norm() < 1e-3 {
        // degree-8 Taylor polynomial of sinh(s)/s and cosh(s)
        let sinhc = ONE
            + s2 * (1.0 / 6.0 + s2 * (1.0 / 120.0 + s2 * (1.0 / 5040.0 + s2 * (1.0 / 362880.0))));
        let cosh = ONE + s2 * (0.5 + s2 * (1.0 / 24.0 + s2 * (1.0 / 720.0 + s2 * (1.0 / 40320.0))));
        (sinhc, cosh)
    } else {
        (s.sinh() / s, s.cosh())
    }
}

#[inline]
fn dsinhc_over_s(s2: C64) -> C64 {
    // (s cosh s − sinh s)/s³ = Σ_{k≥1} 2k s^{2k−2}/(2k+1)!
    let s = s2.sqrt();
    if s.norm() < 0.2 {
        let mut term = ONE;
        let mut sum = ZERO;
        let mut fact = 6.0; // (2k+1)! for k = 1
        for k in 1..12 {
            sum += term * (2.0 * k as f64 / fact);
            term *= s2;
            fact *= (2 * k + 2) as f64 * (2 * k + 3) as f64;
        }
        sum
    } else {
        (s * s.cosh() - s.sinh()) / (s2 * s)
    }
}

/// exp(A) for traceless A: cosh(s)·I + (sinh(s)/s)·A with s = √(−det A).
pub fn exp_traceless(a: &Mat2) -> Result<Mat2> {
    if a.trace().norm() > TRACE_TOL {
        return Err(Error::Domain(format!(
            "exp_traceless: |tr A| = {:.3e} exceeds {:.0e}",
            a.trace().norm(),
            TRACE_TOL
        )));
    }
    Ok(exp_traceless_unchecked(a))
}

/// [`exp_traceless`] without the trace gate; callers construct A traceless.
#[inline]
pub fn exp_traceless_unchecked(a: &Mat2) -> Mat2 {
    let s2 = -a.det();
    let (sc, ch) = sinhc_and_cosh(s2);
    let [p, q, r, t] = a.0;
    Mat2([ch + sc * p, sc * q, sc * r, ch + sc * t])
}

/// exp(A) together with its Fréchet derivative in direction B (both traceless).
///
/// With s² = −det A = ½tr(A²): d(s²) = tr(AB), and
/// dE = sinhc·½tr(AB)·I + g·½tr(AB)·A + sinhc·B, g = (s cosh s − sinh s)/s³.
#[inline]
pub fn exp_traceless_with_derivative(a: &Mat2, b: &Mat2) -> (Mat2, Mat2) {
    let s2 = -a.det();
    let (sc, ch) = sinhc_and_cosh(s2);
    let g = dsinhc_over_s(s2);
    let half_tr = (*a * *b).trace() * 0.5;
    let e = Mat2([ch + sc * a.0[0], sc * a.0[1], sc * a.0[2], ch + sc * a.0[3]]);
    let k0 = sc * half_tr;
    let k1 = g * half_tr;
    let d = Mat2([
        k0 + k1 * a.0[0] + sc * b.0[0],
        k1 * a.0[1] + sc * b.0[1],
        k1 * a.0[2] + sc * b.0[2],
        k0 + k1 * a.0[3] + sc * b.0[3],
    ]);
    (e, d)
}

/// Coordinates w.r.t. the orthonormal su2 basis {ε, ε₊+ε₋, i(ε₊−ε₋)}.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Su2Vector(pub [f64; 3]);

impl Su2Vector {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, o: &Su2Vector) -> f64 {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }
}

/// x ↦ x₁ε + x₂(ε₊+ε₋) + x₃·i(ε₊−ε₋) = [[i x₁, x₂ + i x₃], [−x₂ + i x₃, −i x₁]].
pub fn su2_embed(x: &Su2Vector) -> Mat2 {
    let [x1, x2, x3] = x.0;
    Mat2([
        C64::new(0.0, x1),
        C64::new(x2, x3),
        C64::new(-x2, x3),
        C64::new(0.0, -x1),
    ])
}

/// Inverse of [`su2_embed`]; rejects matrices that are not trace-free skew-Hermitian.
pub fn su2_project(m: &Mat2) -> Result<Su2Vector> {
    let herm = (*m + m.adjoint()).scale_re(0.5);
    let scale = 1.0 + m.norm_frobenius();
    let defect = herm.norm_frobenius().max(m.trace().norm());
    if defect > HERMITIAN_TOL * scale {
        return Err(Error::Domain(format!(
            "su2_project: matrix is not trace-free skew-Hermitian (defect {defect:.3e})"
        )));
    }
    Ok(su2_project_unchecked(m))
}

/// Orthogonal projection onto su2, no gate.
pub fn su2_project_unchecked(m: &Mat2) -> Su2Vector {
    let [a, b, c, d] = m.0;
    let x1 = 0.5 * (a.im - d.im);
    let x2 = 0.5 * (b.re - c.re);
    let x3 = 0.5 * (b.im + c.im);
    Su2Vector([x1, x2, x3])
}

/// SU2 element [[a, b], [−b̄, ā]] ↦ unit quaternion (Re a, Im a, Re b, Im b).
pub fn su2_to_quaternion(m: &Mat2) -> [f64; 4] {
    let a = 0.5 * (m.a() + m.d().conj());
    let b = 0.5 * (m.b() - m.c().conj());
    [a.re, a.im, b.re, b.im]
}

pub fn quaternion_to_su2(q: &[f64; 4]) -> Mat2 {
    let a = C64::new(q[0], q[1]);
    let b = C64::new(q[2], q[3]);
    Mat2([a, b, -b.conj(), a.conj()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    // Independent oracle: truncated Taylor series with scaling and squaring.
    fn expm_oracle(a: &Mat2) -> Mat2 {
        let norm = a.norm_frobenius();
        let mut sq = 0;
        while norm / 2f64.powi(sq) > 0.25 {
            sq += 1;
        }
        let b = a.scale_re(1.0 / 2f64.powi(sq));
        let mut term = Mat2::identity();
        let mut sum = Mat2::identity();
        for k in 1..30 {
            term = (term * b).scale_re(1.0 / k as f64);
            sum += term;
        }
        for _ in 0..sq {
            sum = sum * sum;
        }
        sum
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let e = exp_traceless(&Mat2::zero()).unwrap();
        assert_eq!(e, Mat2::identity());
    }

    #[test]
    fn vacuum_lattice_point_gives_minus_identity() {
        let t = 3.7;
        let lambda = 2.0 * PI / t;
        let e = exp_traceless(&Mat2::eps().scale_re(0.5 * lambda * t)).unwrap();
        assert!(e.max_abs_diff(&(-Mat2::identity())) < 1e-14);
    }

    #[test]
    fn matches_scaling_and_squaring_oracle() {
        let samples = [
            Mat2::new(c(0.3, -1.1), c(0.7, 0.2), c(-1.3, 0.4), c(-0.3, 1.1)),
            Mat2::new(c(1.2, 0.0), c(0.0, 0.9), c(0.5, -0.5), c(-1.2, 0.0)),
            Mat2::new(c(0.0, 0.0), c(1e-5, 0.0), c(0.0, 2e-5), c(0.0, 0.0)),
            Mat2::new(c(-0.9, 0.6), c(1.0, 1.0), c(-0.2, 0.1), c(0.9, -0.6)),
        ];
        for a in samples {
            let e = exp_traceless(&a).unwrap();
            let o = expm_oracle(&a);
            assert!(e.max_abs_diff(&o) < 1e-12, "{:?}", e.max_abs_diff(&o));
        }
    }

    #[test]
    fn branch_of_square_root_is_irrelevant() {
        let a = Mat2::new(c(0.4, 0.3), c(1.1, -0.2), c(0.3, 0.8), c(-0.4, -0.3));
        let s2 = -a.det();
        let s = s2.sqrt();
        let plus = Mat2::scalar(s.cosh()) + a.scale(s.sinh() / s);
        let minus = Mat2::scalar((-s).cosh()) + a.scale((-s).sinh() / (-s));
        assert!(plus.max_abs_diff(&minus) < 1e-15);
    }

    #[test]
    fn small_argument_series_is_continuous() {
        for &eps in &[9.9e-4, 1.0e-3, 1.01e-3] {
            let a = Mat2::eps().scale_re(eps);
            let e = exp_traceless(&a).unwrap();
            let exact = Mat2::new(c(eps.cos(), eps.sin()), C64::default(), C64::default(), c(eps.cos(), -eps.sin()));
            assert!(e.max_abs_diff(&exact) < 1e-16 * 4.0);
        }
    }

    #[test]
    fn trace_gate() {
        assert!(exp_traceless(&Mat2::identity()).is_err());
    }

    #[test]
    fn frechet_derivative_matches_difference_quotient() {
        let a = Mat2::new(c(0.4, 0.3), c(1.1, -0.2), c(0.3, 0.8), c(-0.4, -0.3));
        let b = Mat2::new(c(-0.2, 0.5), c(0.1, 0.3), c(0.7, -0.1), c(0.2, -0.5));
        let (_, d) = exp_traceless_with_derivative(&a, &b);
        let h = 1e-6;
        let fd = (exp_traceless_unchecked(&(a + b.scale_re(h))) - exp_traceless_unchecked(&(a - b.scale_re(h))))
            .scale_re(0.5 / h);
        assert!(d.max_abs_diff(&fd) < 1e-9);
        // tiny argument: series branches
        let a = a.scale_re(1e-4);
        let (_, d) = exp_traceless_with_derivative(&a, &b);
        let fd = (exp_traceless_unchecked(&(a + b.scale_re(h))) - exp_traceless_unchecked(&(a - b.scale_re(h))))
            .scale_re(0.5 / h);
        assert!(d.max_abs_diff(&fd) < 1e-9);
    }

    #[test]
    fn commutator_table() {
        let (e, p, m) = (Mat2::eps(), Mat2::eps_plus(), Mat2::eps_minus());
        let two_i = c(0.0, 2.0);
        assert_eq!(m.commutator(&e), m.scale(two_i));
        assert_eq!(e.commutator(&p), p.scale(two_i));
        assert_eq!(p.commutator(&m), e.scale(c(0.0, 1.0)));
    }

    #[test]
    fn su2_basis_and_round_trip() {
        assert_eq!(su2_embed(&Su2Vector([1.0, 0.0, 0.0])), Mat2::eps());
        let x = Su2Vector([0.3, -1.2, 2.0]);
        let y = su2_project(&su2_embed(&x)).unwrap();
        for i in 0..3 {
            assert!((x.0[i] - y.0[i]).abs() < 1e-14);
        }
        let e1 = su2_embed(&Su2Vector([1.0, 0.0, 0.0]));
        let e2 = su2_embed(&Su2Vector([0.0, 1.0, 0.0]));
        assert!(e1.inner(&e2).norm() < 1e-15);
        let n = su2_embed(&x).det().sqrt();
        assert!((n.re - x.norm()).abs() < 1e-14 && n.im.abs() < 1e-14);
    }

    #[test]
    fn su2_project_rejects_hermitian() {
        let h = Mat2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0));
        assert!(su2_project(&h).is_err());
    }

    #[test]
    fn quaternion_round_trip() {
        let q = [0.5, -0.5, 0.5, 0.5];
        let m = quaternion_to_su2(&q);
        assert!((m.det() - 1.0).norm() < 1e-15);
        assert_eq!(su2_to_quaternion(&m), q);
    }
}
