//! Seeded problem generators used by the verification suites, sweeps and
//! benches: commuting families with controlled growth sign, certified
//! semilinear problems with exact Lipschitz/growth constants, and
//! deliberately broken systems for the assumption checker.
//!
//! The commuting families share one orthogonal eigenframe and keep every
//! eigenvalue of `E + B_k` at modulus >= 1, which makes the closed-form
//! kernel bounds rigorous for window products.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::flow::{VolterraArg, VolterraProblem};
use crate::kernel::{bound_report, KernelVariant};
use crate::schedule::{Impulse, ImpulseSchedule};
use crate::semigroup::estimate_growth;
use crate::system::SystemSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaClass {
    Negative,
    Zero,
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BrokenKind {
    /// rho fails to commute with an impulse matrix (A3).
    NonCommutingRho,
    /// The gap operator is exactly singular (A4).
    SingularGap,
    /// The second-window offsets violate d_{k+m} = rho d_k (A2).
    WrongExtension,
}

/// Random orthogonal frame via QR of a Gaussian-ish matrix.
fn random_frame(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    loop {
        let m = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let qr = m.qr();
        let q = qr.q();
        if q.determinant().abs() > 0.5 {
            return q;
        }
    }
}

fn in_frame(frame: &DMatrix<f64>, diag: &[f64]) -> DMatrix<f64> {
    let d = DMatrix::from_diagonal(&DVector::from_row_slice(diag));
    frame * d * frame.transpose()
}

struct Family {
    n: usize,
    frame: DMatrix<f64>,
    omega: f64,
    a: DMatrix<f64>,
    schedule: ImpulseSchedule,
    /// diagonal of rho in the shared frame
    rho_diag: Vec<f64>,
}

/// Commuting family: A, every B_k and rho diagonal in one orthogonal frame;
/// |1 + b_{k,j}| >= 1 and the gap eigenvalues bounded away from zero.
fn build_family(rng: &mut ChaCha8Rng, gamma: GammaClass, positive_rho: bool) -> Family {
    let n = rng.gen_range(1..=3);
    let frame = random_frame(rng, n);
    let omega = rng.gen_range(0.8..1.5);
    let a_diag: Vec<f64> = match gamma {
        GammaClass::Negative => (0..n).map(|_| rng.gen_range(-1.4..-0.1)).collect(),
        GammaClass::Zero => vec![0.0; n],
        GammaClass::Positive => {
            let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.9)).collect();
            v[0] = rng.gen_range(0.1..0.9);
            v
        }
    };
    let a = if matches!(gamma, GammaClass::Zero) {
        DMatrix::zeros(n, n)
    } else {
        in_frame(&frame, &a_diag)
    };

    let m = rng.gen_range(1..=3);
    let mut taus: Vec<f64> = Vec::new();
    while taus.len() < m {
        let tau = rng.gen_range(0.1 * omega..0.9 * omega);
        if taus.iter().all(|&t| (t - tau).abs() > 0.06 * omega) {
            taus.push(tau);
        }
    }
    taus.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut b_diags = Vec::new();
    let mut impulses = Vec::new();
    for &tau in &taus {
        let bd: Vec<f64> = (0..n)
            .map(|_| {
                let mag = rng.gen_range(1.0..1.4);
                let sign = if positive_rho || rng.gen_bool(0.85) {
                    1.0
                } else {
                    -1.0
                };
                sign * mag - 1.0
            })
            .collect();
        let d_raw = DVector::from_fn(n, |_, _| rng.gen_range(-0.5..0.5));
        impulses.push(Impulse {
            tau,
            b: in_frame(&frame, &bd),
            d: d_raw,
        });
        b_diags.push(bd);
    }

    // rho eigenvalues offset from the monodromy eigenvalues
    let mut rho_diag = Vec::with_capacity(n);
    for j in 0..n {
        let mono: f64 = (a_diag[j] * omega).exp()
            * b_diags.iter().map(|bd| 1.0 + bd[j]).product::<f64>();
        let r = if positive_rho {
            let mut r = mono + rng.gen_range(0.35..1.2);
            if r <= 0.15 {
                r = mono.abs().max(0.2) + rng.gen_range(0.35..1.2);
            }
            r
        } else {
            let delta = rng.gen_range(0.35..1.2) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let r = mono + delta;
            if r.abs() < 0.15 {
                mono + delta.signum() * 1.3
            } else {
                r
            }
        };
        rho_diag.push(r);
    }
    let rho = in_frame(&frame, &rho_diag);
    let schedule = ImpulseSchedule::new(omega, rho, impulses).expect("valid generated schedule");
    Family {
        n,
        frame,
        omega,
        a,
        schedule,
        rho_diag,
    }
}

/// Random commuting linear system with smooth forcing, for kernel and bound
/// verification. The forcing restriction to `[0, omega]` is what the
/// periodic solvers consume.
pub fn commuting_linear(seed: u64, gamma: GammaClass) -> SystemSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fam = build_family(&mut rng, gamma, false);
    let n = fam.n;
    let omega = fam.omega;
    let v0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let v1 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let v2 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let forcing = move |t: f64| -> DVector<f64> {
        let w = 2.0 * std::f64::consts::PI * t / omega;
        &v0 + &v1 * w.sin() + &v2 * (2.0 * w).cos()
    };
    SystemSpec::linear(fam.a, fam.schedule, Arc::new(forcing)).expect("valid corpus system")
}

/// Certified semilinear problem with an affine right-hand side
/// `f(t, y, z) = h(t) (P y + Q z) + w(t)` and Volterra kernel
/// `g(t, s, y) = k(t) G y`, all operators in the shared frame, with exact
/// supplied Lipschitz and growth constants. The coupling is scaled so that
/// `L C2 = target` (and `beta C2 = target` as well for this family).
pub fn affine_certified(seed: u64, target_lc2: f64) -> SystemSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = match seed % 3 {
        0 => GammaClass::Negative,
        1 => GammaClass::Zero,
        _ => GammaClass::Positive,
    };
    let fam = build_family(&mut rng, gamma, true);
    let n = fam.n;
    let omega = fam.omega;

    let growth = estimate_growth(&fam.a, 2.0 * omega, 32).expect("growth estimate");
    let probe = SystemSpec::homogeneous(fam.a.clone(), fam.schedule.clone()).expect("probe");
    let c2 = bound_report(&probe, &growth, KernelVariant::General)
        .expect("bounds")
        .c2;

    // unit-norm shapes in the shared frame, then one scale for the coupling
    let h_amp = 0.3;
    let max_h = 1.0 + h_amp;
    let p_hat: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let q_hat: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm_p = p_hat.iter().cloned().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-3);
    let norm_q = q_hat.iter().cloned().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-3);
    let sigma = target_lc2 / (max_h * 1.25 * c2);
    let p_mat = in_frame(&fam.frame, &p_hat.iter().map(|x| x / norm_p * sigma).collect::<Vec<_>>());
    let q_mat = in_frame(&fam.frame, &q_hat.iter().map(|x| x / norm_q * sigma).collect::<Vec<_>>());

    // omega L_g = 0.25 exactly; the s-profile is omega-periodic with zero
    // mean, so the inner integral int_0^t g ds is itself (omega,rho)-compatible
    let l_g = 0.25 / omega;
    let g_hat: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
    let g_mat = in_frame(&fam.frame, &g_hat.iter().map(|x| x * l_g).collect::<Vec<_>>());

    // (omega, rho)-periodic inhomogeneity w(t) = rho^{t/omega} w0 p(t)
    let frame = fam.frame.clone();
    let rho_diag = fam.rho_diag.clone();
    let w0 = DVector::from_fn(n, |_, _| rng.gen_range(-0.5..0.5));
    let rho_pow = move |t: f64| -> DMatrix<f64> {
        let diag: Vec<f64> = rho_diag.iter().map(|r| r.powf(t)).collect();
        in_frame(&frame, &diag)
    };
    let w_fn = {
        let rho_pow = rho_pow.clone();
        let w0 = w0.clone();
        move |t: f64| -> DVector<f64> {
            let p = 1.0 + 0.4 * (2.0 * std::f64::consts::PI * t / omega).sin();
            rho_pow(t / omega) * &w0 * p
        }
    };

    let lipschitz_f = max_h * sigma;
    let beta = max_h * (sigma + sigma * omega * l_g);
    let mut alpha = 0.0f64;
    for i in 0..=512 {
        alpha = alpha.max(w_fn(omega * i as f64 / 512.0).norm());
    }

    let f = {
        let w_fn = w_fn.clone();
        let p_mat = p_mat.clone();
        let q_mat = q_mat.clone();
        move |t: f64, y: &DVector<f64>, z: &DVector<f64>| -> DVector<f64> {
            let h = 1.0 + h_amp * (2.0 * std::f64::consts::PI * t / omega).sin();
            (&p_mat * y + &q_mat * z) * h + w_fn(t)
        }
    };
    let g = {
        let g_mat = g_mat.clone();
        move |_t: f64, s: f64, y: &DVector<f64>| -> DVector<f64> {
            let c = (2.0 * std::f64::consts::PI * s / omega).cos();
            &g_mat * y * c
        }
    };
    let problem = VolterraProblem {
        f: Arc::new(f),
        g: Arc::new(g),
        lipschitz_f: Some(lipschitz_f),
        lipschitz_g: Some(l_g),
        alpha: Some(alpha),
        beta: Some(beta),
        nu_max: 1e4,
        arg: VolterraArg::AtT,
    };
    SystemSpec::semilinear(fam.a, fam.schedule, problem).expect("valid corpus system")
}

/// Certified sinusoidal nonlinearity `f = eps sin.(y) + w(t)` with ordinary
/// periodicity (`rho = I`); genuinely nonlinear with exact `L_f = eps`.
pub fn sine_certified(seed: u64, target_lc2: f64) -> SystemSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=2);
    let frame = random_frame(&mut rng, n);
    let omega = rng.gen_range(0.9..1.3);
    let a_diag: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.2..-0.3)).collect();
    let a = in_frame(&frame, &a_diag);
    let tau = rng.gen_range(0.3 * omega..0.7 * omega);
    let b_diag: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.4)).collect();
    let impulses = vec![Impulse {
        tau,
        b: in_frame(&frame, &b_diag),
        d: DVector::from_fn(n, |_, _| rng.gen_range(-0.4..0.4)),
    }];
    let schedule =
        ImpulseSchedule::new(omega, DMatrix::identity(n, n), impulses).expect("schedule");

    let growth = estimate_growth(&a, 2.0 * omega, 32).expect("growth");
    let probe = SystemSpec::homogeneous(a.clone(), schedule.clone()).expect("probe");
    let c2 = bound_report(&probe, &growth, KernelVariant::General)
        .expect("bounds")
        .c2;
    let eps = target_lc2 / c2;

    let w0 = DVector::from_fn(n, |_, _| rng.gen_range(-0.8..0.8));
    let w1 = DVector::from_fn(n, |_, _| rng.gen_range(-0.8..0.8));
    let alpha_w = {
        let mut worst = 0.0f64;
        for i in 0..=512 {
            let t = omega * i as f64 / 512.0;
            let v = &w0 + &w1 * (2.0 * std::f64::consts::PI * t / omega).sin();
            worst = worst.max(v.norm());
        }
        worst
    };
    let f = move |t: f64, y: &DVector<f64>, _z: &DVector<f64>| -> DVector<f64> {
        let w = 2.0 * std::f64::consts::PI * t / omega;
        DVector::from_fn(y.len(), |i, _| eps * y[i].sin() + w0[i] + w1[i] * w.sin())
    };
    let problem = VolterraProblem {
        f: Arc::new(f),
        g: Arc::new(|_t: f64, _s: f64, y: &DVector<f64>| DVector::zeros(y.len())),
        lipschitz_f: Some(eps),
        lipschitz_g: Some(0.0),
        alpha: Some(alpha_w + eps * (n as f64).sqrt()),
        beta: Some(0.0),
        nu_max: 1e4,
        arg: VolterraArg::AtT,
    };
    SystemSpec::semilinear(a, schedule, problem).expect("valid corpus system")
}

/// Systems with one deliberately broken standing assumption.
pub fn broken_system(seed: u64, kind: BrokenKind) -> SystemSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        BrokenKind::NonCommutingRho => {
            // diagonal B, scalar-multiple A, upper-triangular rho: only (A3) breaks
            let b = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.5]);
            let shear = rng.gen_range(0.5..1.5);
            let rho = DMatrix::from_row_slice(2, 2, &[2.2, shear, 0.0, 3.1]);
            let sched = ImpulseSchedule::new(
                1.0,
                rho,
                vec![Impulse {
                    tau: rng.gen_range(0.3..0.7),
                    b,
                    d: DVector::from_vec(vec![0.3, -0.2]),
                }],
            )
            .unwrap();
            let a = DMatrix::identity(2, 2) * rng.gen_range(-0.4..0.4);
            SystemSpec::homogeneous(a, sched).unwrap()
        }
        BrokenKind::SingularGap => {
            let a: f64 = rng.gen_range(-0.5..0.5);
            let b: f64 = rng.gen_range(0.2..0.8);
            let omega = 1.0;
            // rho exactly equals the monodromy factor
            let rho = (a * omega).exp() * (1.0 + b);
            let sched = ImpulseSchedule::new(
                omega,
                DMatrix::from_element(1, 1, rho),
                vec![Impulse {
                    tau: 0.5,
                    b: DMatrix::from_element(1, 1, b),
                    d: DVector::from_element(1, 0.4),
                }],
            )
            .unwrap();
            SystemSpec::homogeneous(DMatrix::from_element(1, 1, a), sched).unwrap()
        }
        BrokenKind::WrongExtension => {
            let rho = 2.0;
            let tau = rng.gen_range(0.3..0.7);
            let d = rng.gen_range(0.3..0.9);
            let base = Impulse {
                tau,
                b: DMatrix::from_element(1, 1, 0.5),
                d: DVector::from_element(1, d),
            };
            let sched = ImpulseSchedule::new(
                1.0,
                DMatrix::from_element(1, 1, rho),
                vec![base.clone()],
            )
            .unwrap()
            .with_second_window(vec![Impulse {
                tau: tau + 1.0,
                b: base.b.clone(),
                // rule requires rho * d
                d: DVector::from_element(1, rho * d + 0.5),
            }])
            .unwrap();
            SystemSpec::homogeneous(DMatrix::zeros(1, 1), sched).unwrap()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verifier::{check_assumptions, AssumptionStatus};

    #[test]
    fn commuting_family_really_commutes() {
        for seed in 0..8 {
            let sys = commuting_linear(seed, GammaClass::Negative);
            for (name, check) in sys.commutation_residuals(1e-10).unwrap() {
                assert!(check.commutes, "seed {seed}: {name} residual {}", check.residual);
            }
            assert!(sys.monodromy().is_ok(), "seed {seed}");
        }
    }

    #[test]
    fn affine_certified_hits_target() {
        for (i, target) in [0.3, 0.6, 0.9].iter().enumerate() {
            let sys = affine_certified(100 + i as u64, *target);
            let cert = crate::solver::contraction_certificate(&sys, 100.0, 1).unwrap();
            assert!((cert.lc2 - target).abs() < 1e-8, "lc2 = {}", cert.lc2);
            assert!(cert.contraction_ok);
        }
    }

    #[test]
    fn broken_systems_flag_expected_assumption() {
        let cases = [
            (BrokenKind::NonCommutingRho, "A3"),
            (BrokenKind::SingularGap, "A4"),
            (BrokenKind::WrongExtension, "A2"),
        ];
        for (kind, id) in cases {
            let sys = broken_system(7, kind);
            let report = check_assumptions(&sys, 1e-8, 48, 3);
            assert_eq!(
                report.entry(id).unwrap().status,
                AssumptionStatus::Fail,
                "{kind:?} should fail {id}"
            );
            for other in report.entries.iter().filter(|e| e.id != id) {
                assert_ne!(
                    other.status,
                    AssumptionStatus::Fail,
                    "{kind:?} unexpectedly failed {}",
                    other.id
                );
            }
        }
    }
}
