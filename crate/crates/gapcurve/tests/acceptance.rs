//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on failure.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use gapcurve::algebra::Mat2;
use gapcurve::frame::{vacuum_frame, Integrator};
use gapcurve::geometry::{
    check_closing, circle_r3, close_by_drift, great_circle_s3, ingest, reconstruct, reconstruct_full, sobolev_distance, torus_knot_s3,
    CurveSamples, Space,
};
use gapcurve::inverse::{approximate, smooth_test_potential, solve_phi, SliceSpec, SolverConfig, Target};
use gapcurve::potential::Potential;
use gapcurve::spectral::{
    asymptotic_diagnostics, invariant_lambdas, is_finite_gap, lattice_point, mu, perturbed_fourier,
    spectral_data, structural_invariants, LocateOptions,
};
use gapcurve::variation::{delta_lambda_k, delta_m, delta_mu, delta_z_k, jacobian_phi_fourier};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let t = 2.0 * PI;
    let q = Potential::zero(64, t).map_err(|e| e.to_string())?;
    let integ = Integrator::new(&q);
    let mut lams: Vec<C64> = (-20..=20).map(|l| c(l as f64, 0.0)).collect();
    lams.extend([c(0.0, 5.0), c(0.0, -5.0), c(3.0, 4.0)]);
    let mut err: f64 = 0.0;
    for &l in &lams {
        let m = integ.monodromy_matrix(l).map_err(|e| e.to_string())?;
        let m0 = vacuum_frame(t, l);
        for i in 0..4 {
            // entries reach e^{5π}; the error is measured relative to entries above 1
            err = err.max((m.0[i] - m0.0[i]).norm() / m0.0[i].norm().max(1.0));
        }
    }
    let mut lattice: f64 = 0.0;
    for k in -20i64..=20 {
        let m = integ.monodromy_matrix(c(lattice_point(k, t), 0.0)).map_err(|e| e.to_string())?;
        let s = if k % 2 == 0 { 1.0 } else { -1.0 };
        lattice = lattice.max((m - Mat2::identity().scale_re(s)).norm_inf());
    }
    let el = t0.elapsed();
    check(
        err < 1e-10 && lattice < 1e-10 && within(el, 1.0),
        format!("max entry error {err:.2e}, lattice error {lattice:.2e}, {:.3}s", el.as_secs_f64()),
    )
}

fn criterion_2() -> Outcome {
    let t = 2.0 * PI;
    let q = Potential::from_fn(256, t, 0.0, |_| c(1.0, 0.0)).map_err(|e| e.to_string())?;
    let integ = Integrator::new(&q);
    let mut tr_err: f64 = 0.0;
    for i in 0..100 {
        let l = -20.0 + 40.0 * i as f64 / 99.0;
        let m = integ.monodromy_matrix(c(l, 0.0)).map_err(|e| e.to_string())?;
        let exact = 2.0 * (PI * (l * l + 1.0).sqrt()).cos();
        tr_err = tr_err.max((m.trace() - exact).norm());
    }
    let data = perturbed_fourier(&q, 15).map_err(|e| e.to_string())?;
    let mut lk_err: f64 = 0.0;
    for k in (2i64..=15).flat_map(|k| [k, -k]) {
        let exact = (k as f64).signum() * ((k * k - 1) as f64).sqrt();
        lk_err = lk_err.max((data.lambda(k) - exact).norm());
    }
    let at_zero: usize = data.entries.iter().filter(|e| e.lambda.norm() < 1e-6).count();
    let mult0 = data.entries.iter().find(|e| e.lambda.norm() < 1e-6).map_or(0, |e| e.mult);
    let zmax = data.max_abs_z();
    let verdict = is_finite_gap(&data, None);
    check(
        tr_err < 1e-8 && lk_err < 1e-7 && at_zero == 3 && mult0 == 3 && zmax < 1e-8 && verdict.finite_gap,
        format!(
            "trace error {tr_err:.2e}, lambda_k error {lk_err:.2e}, multiplicity at 0 = {mult0} ({at_zero} indices), max|z| {zmax:.2e}, finite gap {}",
            verdict.finite_gap
        ),
    )
}

fn criterion_3() -> Outcome {
    let t0 = Instant::now();
    let q = Potential::from_fn(256, 1.0, 0.0, |t| {
        C64::from_polar(0.3, 2.0 * PI * t) + C64::from_polar(0.1, -4.0 * PI * t)
    })
    .map_err(|e| e.to_string())?;
    let k = 32;
    let lams = [c(10.0, 0.0), c(100.0, 0.0), c(100.0, 2.0)];
    let rep = asymptotic_diagnostics(&q, 2 * k, Some(&lams)).map_err(|e| e.to_string())?;
    let frac = rep.tail_fraction(k);
    let (r10, r100, r100i) = (rep.ratios[0].1, rep.ratios[1].1, rep.ratios[2].1);
    let el = t0.elapsed();
    check(
        frac < 0.05 && r100 < r10 && r100i < r10 && within(el, 30.0),
        format!(
            "tail fraction {frac:.2e}; ratio at 10: {r10:.3e}, 100: {r100:.3e}, 100+2i: {r100i:.3e}; {:.2}s",
            el.as_secs_f64()
        ),
    )
}

fn rel(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn shifted(q: &Potential, dq: &[C64], s: f64) -> Potential {
    q.with_samples(q.samples.iter().zip(dq).map(|(a, b)| a + b * s).collect())
}

fn criterion_4() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let h = 1e-5;
    let mut worst = [0.0f64; 4];
    let mut ratios = Vec::new();
    for case in 0..20u64 {
        let period = rng.gen_range(1.0..3.0);
        let q = smooth_test_potential(512, period, rng.gen_range(0.2..0.8), 0.5, 6, 100 + case).map_err(|e| e.to_string())?;
        let dq = smooth_test_potential(512, period, 1.0, 0.7, 12, 900 + case).map_err(|e| e.to_string())?.samples;
        let lam = c(rng.gen_range(-6.0..6.0), rng.gen_range(-1.0..1.0));
        // δM
        let dm = delta_m(&q, lam, &dq).map_err(|e| e.to_string())?;
        let mp = Integrator::new(&shifted(&q, &dq, h)).monodromy_matrix(lam).map_err(|e| e.to_string())?;
        let mm = Integrator::new(&shifted(&q, &dq, -h)).monodromy_matrix(lam).map_err(|e| e.to_string())?;
        let fd = (mp - mm).scale_re(0.5 / h);
        worst[0] = worst[0].max((dm - fd).norm_inf() / fd.norm_inf());
        // δμ on the branch continued from q
        let dmu = delta_mu(&q, lam, &dq, 1.0).map_err(|e| e.to_string())?;
        let mu0 = mu(&q, lam, 1.0).map_err(|e| e.to_string())?;
        let near = |p: &Potential| -> Result<C64, String> {
            let a = mu(p, lam, 1.0).map_err(|e| e.to_string())?;
            let b = mu(p, lam, -1.0).map_err(|e| e.to_string())?;
            Ok(if (a - mu0).norm() <= (b - mu0).norm() { a } else { b })
        };
        let fd_mu = (near(&shifted(&q, &dq, h))? - near(&shifted(&q, &dq, -h))?) / (2.0 * h);
        worst[1] = worst[1].max(rel(dmu, fd_mu));
        // δλ_k, δz_k at a simple zero outside the central block
        let data = perturbed_fourier(&q, 0).map_err(|e| e.to_string())?;
        let kc = data.k_central as i64;
        let k = if case % 2 == 0 { kc + 1 + (case as i64 % 3) } else { -(kc + 1 + (case as i64 % 3)) };
        let kmax = k.unsigned_abs() as usize;
        let data = perturbed_fourier(&q, kmax).map_err(|e| e.to_string())?;
        let dl = delta_lambda_k(&q, &data, k, &dq).map_err(|e| e.to_string())?;
        let dz = delta_z_k(&q, &data, k, &dq).map_err(|e| e.to_string())?;
        let opts = LocateOptions { k_central: Some(data.k_central), ..LocateOptions::default() };
        let at = |s: f64| spectral_data(&shifted(&q, &dq, s), kmax, &opts, Some(&data)).map_err(|e| e.to_string());
        let (dp, dmn) = (at(h)?, at(-h)?);
        worst[2] = worst[2].max(rel(dl, (dp.lambda(k) - dmn.lambda(k)) / (2.0 * h)));
        worst[3] = worst[3].max(rel(dz, (dp.z(k) - dmn.z(k)) / (2.0 * h)));
        if case < 3 {
            // Richardson: the central-difference error falls by 4 when the step halves
            let big = 2e-2;
            let e = |s: f64| -> Result<f64, String> {
                let a = at(s)?;
                let b = at(-s)?;
                Ok(((a.z(k) - b.z(k)) / (2.0 * s) - dz).norm())
            };
            ratios.push(e(big)? / e(big / 2.0)?);
        }
    }
    let el = t0.elapsed();
    let rich_ok = ratios.iter().all(|r| (3.5..=4.5).contains(r));
    check(
        worst.iter().all(|w| *w < 1e-5) && rich_ok && within(el, 60.0),
        format!(
            "max rel error dM {:.1e}, dmu {:.1e}, dlambda {:.1e}, dz {:.1e}; Richardson ratios {:?}; {:.1}s",
            worst[0],
            worst[1],
            worst[2],
            worst[3],
            ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>(),
            el.as_secs_f64()
        ),
    )
}

fn criterion_5() -> Outcome {
    let q = Potential::zero(128, 2.0 * PI).map_err(|e| e.to_string())?;
    let data = perturbed_fourier(&q, 10).map_err(|e| e.to_string())?;
    let ks: Vec<i64> = (-10..=10).collect();
    let j = jacobian_phi_fourier(&q, &data, &ks, &ks).map_err(|e| e.to_string())?;
    let dev = (j - nalgebra::DMatrix::<f64>::identity(42, 42)).abs().max();
    check(dev < 1e-10, format!("max |J - I| entry {dev:.2e} over |k| <= 10"))
}

fn criterion_6() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let mut q = smooth_test_potential(256, 1.0, 1.0, 0.6, 8, 40 + seed).map_err(|e| e.to_string())?;
        let s = 0.3 / q.l2_norm();
        q = q.with_samples(q.samples.iter().map(|z| z * s).collect());
        let data = perturbed_fourier(&q, 32).map_err(|e| e.to_string())?;
        let n = data.k_central;
        let ks: Vec<i64> = (-32i64..=32).filter(|k| k.unsigned_abs() as usize > n).collect();
        let j = jacobian_phi_fourier(&q, &data, &ks, &ks).map_err(|e| e.to_string())?;
        worst = worst.max(gapcurve::variation::fourier_deviation(&j));
    }
    check(worst < 0.5, format!("max ||J - F|| on the tail block {worst:.3e} over 5 potentials with ||q|| = 0.3"))
}

fn criterion_7() -> Outcome {
    let t0 = Instant::now();
    let q = smooth_test_potential(256, 1.0, 0.3, 0.6, 40, 77).map_err(|e| e.to_string())?;
    let k_sol = 64;
    let data = perturbed_fourier(&q, k_sol).map_err(|e| e.to_string())?;
    let (n_slice, dev) = gapcurve::inverse::select_slice_width(&q, &data, 0).map_err(|e| e.to_string())?;
    let cfg = SolverConfig { n_slice: Some(n_slice), k_sol: Some(k_sol), tol: 1e-9, ..SolverConfig::default() };
    let mut dists = Vec::new();
    let mut ok = true;
    let mut notes = Vec::new();
    for n in [6, 10, 16] {
        let target = Target::truncation(&data, n, k_sol);
        let slice = SliceSpec::new(&q, n_slice).map_err(|e| e.to_string())?;
        match solve_phi(&slice, &target, &cfg) {
            Ok(sol) => {
                let r = &sol.report;
                ok &= r.iterations <= 30 && r.final_residual < 1e-8 && r.forward_check_residual < 1e-8;
                let d = sol.potential.l2_distance(&q).map_err(|e| e.to_string())?;
                notes.push(format!("n={n}: {} it, res {:.1e}, dist {:.3e}", r.iterations, r.final_residual, d));
                dists.push(d);
            }
            Err(e) => {
                ok = false;
                notes.push(format!("n={n}: {e}"));
            }
        }
    }
    let monotone = dists.windows(2).all(|w| w[1] <= w[0]);
    let el = t0.elapsed();
    check(
        ok && monotone && within(el, 300.0),
        format!("N = {n_slice} (deviation {dev:.2}); {}; {:.1}s", notes.join("; "), el.as_secs_f64()),
    )
}

// The curve of 1 + 0.05cos(t) has an endpoint gap; it is closed geometrically and ingested.
fn perturbed_circle_curve() -> Result<(CurveSamples, Potential), String> {
    let q0 = Potential::from_fn(256, 2.0 * PI, 0.0, |t| c(1.0 + 0.05 * t.cos(), 0.0)).map_err(|e| e.to_string())?;
    close_by_drift(&q0).map_err(|e| e.to_string())
}

fn perturbed_circle_closed() -> Result<Potential, String> {
    Ok(perturbed_circle_curve()?.1)
}

fn criterion_8() -> Outcome {
    let t0 = Instant::now();
    let (gamma, q) = perturbed_circle_curve()?;
    let mut ok = check_closing(&q, Space::R3, 1e-7).map_err(|e| e.to_string())?.closed;
    let mut notes = Vec::new();
    let mut dists = Vec::new();
    for n in [4, 8, 12] {
        let cfg = SolverConfig { n_trunc: n, k_sol: Some(64), tol: 1e-10, ..SolverConfig::default() };
        let a = match approximate(&q, Some(Space::R3), &cfg, 1) {
            Ok(a) => a,
            Err(e) => {
                ok = false;
                notes.push(format!("n={n}: {e}"));
                continue;
            }
        };
        let cr = a.closing.as_ref().ok_or("no closing report")?;
        let (curve, gap) = reconstruct_full(&a.potential, Space::R3).map_err(|e| e.to_string())?;
        let z = perturbed_fourier(&a.potential, 64).map_err(|e| e.to_string())?;
        let fg = is_finite_gap(&z, Some(1e-6)).finite_gap;
        let d = sobolev_distance(&gamma, &curve, 2, false).map_err(|e| e.to_string())?;
        ok &= a.closing_skipped.is_none()
            && cr.mu_residual < 1e-7
            && cr.mu_prime_residual < 1e-7
            && gap < 1e-6
            && a.theta == q.theta
            && fg;
        notes.push(format!(
            "n={n}: |mu-eta| {:.1e}, |mu'| {:.1e}, gap {gap:.1e}, finite gap {fg}, W22 {d:.3e}",
            cr.mu_residual, cr.mu_prime_residual
        ));
        dists.push(d);
    }
    let decreasing = dists.len() == 3 && dists.windows(2).all(|w| w[1] < w[0]);
    check(ok && decreasing, format!("{}; {:.1}s", notes.join("; "), t0.elapsed().as_secs_f64()))
}

fn curve_round_trip(curve: &CurveSamples) -> Result<(f64, f64), String> {
    let q = ingest(curve).map_err(|e| e.to_string())?;
    let back = reconstruct(&q, curve.space).map_err(|e| e.to_string())?;
    let d = sobolev_distance(curve, &back, 2, true).map_err(|e| e.to_string())?;
    let q2 = ingest(&back).map_err(|e| e.to_string())?;
    let (dq, _) = q2.l2_distance_mod_phase(&q).map_err(|e| e.to_string())?;
    Ok((d, dq))
}

fn criterion_9() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, curve) in [
        ("circle", circle_r3(256)),
        ("(2,3) torus knot", torus_knot_s3(2, 3, 256)),
        ("great circle", great_circle_s3(256)),
    ] {
        let (d, dq) = curve_round_trip(&curve)?;
        ok &= d < 1e-5 && dq < 1e-6;
        notes.push(format!("{name}: W22 {d:.1e}, potential {dq:.1e}"));
    }
    // a closed potential that is not finite gap to begin with
    let q = perturbed_circle_closed()?;
    let back = ingest(&reconstruct(&q, Space::R3).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let (dq, _) = back.l2_distance_mod_phase(&q).map_err(|e| e.to_string())?;
    ok &= dq < 1e-6 && (back.theta - q.theta).abs() < 1e-9;
    notes.push(format!("closed perturbed circle: potential {dq:.1e}"));
    check(ok, notes.join("; "))
}

fn criterion_10() -> Outcome {
    let t = 2.0 * PI;
    let f = |n: usize, per: f64, th: f64, g: &dyn Fn(f64) -> C64| Potential::from_fn(n, per, th, g).map_err(|e| e.to_string());
    let corpus: Vec<(&str, Potential)> = vec![
        ("vacuum", Potential::zero(128, t).map_err(|e| e.to_string())?),
        ("constant 1", f(128, t, 0.0, &|_| c(1.0, 0.0))?),
        ("constant 1, T = 3", f(128, 3.0, 0.0, &|_| c(1.0, 0.0))?),
        ("near-triple zero", f(128, t, 0.0, &|s| c(1.0 + 1e-6 * s.cos(), 0.0))?),
        ("near vacuum", f(128, t, 0.0, &|s| c(1e-8 * s.sin(), 1e-8))?),
        ("single mode", f(128, 1.0, 0.0, &|s| C64::from_polar(0.7, -6.0 * PI * s))?),
        ("smooth small", smooth_test_potential(256, 1.0, 0.2, 0.6, 10, 5).map_err(|e| e.to_string())?),
        ("smooth large", smooth_test_potential(256, 2.0, 1.5, 0.6, 10, 6).map_err(|e| e.to_string())?),
        ("closed perturbed circle", perturbed_circle_closed()?),
        ("torus knot", ingest(&torus_knot_s3(2, 3, 256)).map_err(|e| e.to_string())?),
    ];
    let mut bad = Vec::new();
    let mut worst = [0.0f64; 4];
    for (name, q) in &corpus {
        let r = structural_invariants(q, &invariant_lambdas(q), 1e-10).map_err(|e| format!("{name}: {e}"))?;
        worst[0] = worst[0].max(r.det_defect);
        worst[1] = worst[1].max(r.unitarity_defect);
        worst[2] = worst[2].max(r.mu_product_defect);
        worst[3] = worst[3].max(r.conjugation_defect);
        if !r.passed {
            bad.push(format!("{name}: {r:?}"));
        }
    }
    check(
        bad.is_empty(),
        format!(
            "{} potentials; det {:.1e}, unitarity {:.1e}, mu product {:.1e}, conjugation {:.1e}, winding conserved{}",
            corpus.len(),
            worst[0],
            worst[1],
            worst[2],
            worst[3],
            if bad.is_empty() { String::new() } else { format!("; violations: {}", bad.join(" | ")) }
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("vacuum exactness", criterion_1),
        ("constant-potential oracle", criterion_2),
        ("asymptotic diagnostics", criterion_3),
        ("variations vs finite differences", criterion_4),
        ("vacuum Jacobian identity", criterion_5),
        ("Jacobian contraction", criterion_6),
        ("inversion round trip", criterion_7),
        ("closed finite-gap construction", criterion_8),
        ("geometry round trips", criterion_9),
        ("structural invariants", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:2} {tag} {name}: {detail}", i + 1);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
