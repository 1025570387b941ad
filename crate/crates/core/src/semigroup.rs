//! Dense matrix algebra for the semigroup `T(t) = exp(A t)`: matrix
//! exponentials, growth-bound estimation `|T(t)| <= M exp(gamma t)`,
//! commutation checks and inversion of the monodromy-type gap operator.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Operator 2-norm (largest singular value).
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Smallest singular value.
pub fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.min()
}

/// Logarithmic 2-norm: largest eigenvalue of (A + A^T)/2.
///
/// Gives the rigorous bound |exp(A t)|_2 <= exp(mu t) for all t >= 0.
pub fn log_norm(a: &DMatrix<f64>) -> Result<f64> {
    check_square(a, "log_norm input")?;
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    eig.eigenvalues
        .iter()
        .cloned()
        .fold(None::<f64>, |acc, x| Some(acc.map_or(x, |m| m.max(x))))
        .ok_or(Error::EigenFailure)
}

/// Largest real part over the spectrum of `a`.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> Result<f64> {
    check_square(a, "spectral_abscissa input")?;
    let eigs = a.clone().complex_eigenvalues();
    eigs.iter()
        .map(|z| z.re)
        .fold(None::<f64>, |acc, x| Some(acc.map_or(x, |m| m.max(x))))
        .ok_or(Error::EigenFailure)
}

fn check_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NonSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { what: what.into() });
    }
    Ok(())
}

// Pade coefficient tables for the diagonal approximants of orders 3..13
// (Higham, "The scaling and squaring method revisited", 2005).
const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE_9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539398330063230e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068;
const THETA_13: f64 = 5.371920351148152;

fn pade_uv(a: &DMatrix<f64>, powers: &[&DMatrix<f64>], b: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut u_inner = DMatrix::<f64>::zeros(n, n);
    let mut v = DMatrix::<f64>::zeros(n, n);
    // powers = [I, A2, A4, ...]; odd coefficients build U = A * sum, even build V.
    for (k, pw) in powers.iter().enumerate() {
        u_inner += *pw * b[2 * k + 1];
        v += *pw * b[2 * k];
    }
    (a * u_inner, v)
}

/// Matrix exponential `exp(A t)` by scaling and squaring with diagonal Pade
/// approximants up to order 13.
///
/// `expm(a, 0.0, tol)` returns the identity exactly. `tol` is the requested
/// relative accuracy; the method delivers close to machine precision for
/// well-conditioned inputs, so any `tol > 1e-15` is honoured.
pub fn expm(a: &DMatrix<f64>, t: f64, tol: f64) -> Result<DMatrix<f64>> {
    check_square(a, "expm input")?;
    if !t.is_finite() || t < 0.0 {
        return Err(Error::NonFinite {
            what: format!("expm time argument {t}"),
        });
    }
    if tol <= 0.0 {
        return Err(Error::NonFinite {
            what: format!("expm tolerance {tol}"),
        });
    }
    let n = a.nrows();
    if t == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }
    Ok(expm_raw(&(a * t)))
}

/// exp(M) for a square matrix; the caller guarantees finiteness.
fn expm_raw(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let norm1 = m
        .column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);

    let m2 = m * m;
    let (u, v, squarings) = if norm1 <= THETA_3 {
        let (u, v) = pade_uv(m, &[&eye, &m2], &PADE_3);
        (u, v, 0u32)
    } else if norm1 <= THETA_5 {
        let m4 = &m2 * &m2;
        let (u, v) = pade_uv(m, &[&eye, &m2, &m4], &PADE_5);
        (u, v, 0)
    } else if norm1 <= THETA_7 {
        let m4 = &m2 * &m2;
        let m6 = &m4 * &m2;
        let (u, v) = pade_uv(m, &[&eye, &m2, &m4, &m6], &PADE_7);
        (u, v, 0)
    } else if norm1 <= THETA_9 {
        let m4 = &m2 * &m2;
        let m6 = &m4 * &m2;
        let m8 = &m6 * &m2;
        let (u, v) = pade_uv(m, &[&eye, &m2, &m4, &m6, &m8], &PADE_9);
        (u, v, 0)
    } else {
        let squarings = (norm1 / THETA_13).log2().ceil().max(0.0) as u32;
        let scale = 2f64.powi(-(squarings as i32));
        let ms = m * scale;
        let ms2 = &ms * &ms;
        let ms4 = &ms2 * &ms2;
        let ms6 = &ms4 * &ms2;
        // Order-13 splitting: U = A [A6 (b13 A6 + b11 A4 + b9 A2) + b7 A6 + b5 A4 + b3 A2 + b1 I]
        let b = &PADE_13;
        let w1 = &ms6 * b[13] + &ms4 * b[11] + &ms2 * b[9];
        let w2 = &ms6 * b[7] + &ms4 * b[5] + &ms2 * b[3] + &eye * b[1];
        let u = &ms * (&ms6 * w1 + w2);
        let z1 = &ms6 * b[12] + &ms4 * b[10] + &ms2 * b[8];
        let v = &ms6 * z1 + &ms6 * b[6] + &ms4 * b[4] + &ms2 * b[2] + &eye * b[0];
        (u, v, squarings)
    };

    let numer = &u + &v;
    let denom = &v - &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN));
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

/// How the growth estimate (M, gamma) was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthMethod {
    /// gamma = logarithmic 2-norm of A, M = 1 (rigorous for the 2-norm).
    LogarithmicNorm,
    /// gamma = spectral abscissa, M fitted on the validation grid.
    Sampled,
}

/// A pair (M, gamma) with `|T(t)| <= M exp(gamma t)` on the validation grid.
#[derive(Debug, Clone, Serialize)]
pub struct GrowthEstimate {
    pub m: f64,
    pub gamma: f64,
    pub method: GrowthMethod,
    /// Largest observed |T(t)| exp(-gamma t) / M over the grid.
    pub grid_ratio: f64,
}

const GROWTH_TOL: f64 = 1e-9;

/// Estimate (M, gamma) for |exp(A t)| <= M exp(gamma t) on `[0, horizon]`.
pub fn estimate_growth(a: &DMatrix<f64>, horizon: f64, grid_size: usize) -> Result<GrowthEstimate> {
    estimate_growth_with(a, horizon, grid_size, GrowthMethod::LogarithmicNorm)
}

pub fn estimate_growth_with(
    a: &DMatrix<f64>,
    horizon: f64,
    grid_size: usize,
    method: GrowthMethod,
) -> Result<GrowthEstimate> {
    check_square(a, "estimate_growth input")?;
    if !(horizon > 0.0) || grid_size == 0 {
        return Err(Error::NonFinite {
            what: format!("estimate_growth horizon {horizon} / grid {grid_size}"),
        });
    }
    let (gamma, mut m) = match method {
        GrowthMethod::LogarithmicNorm => (log_norm(a)?, 1.0),
        GrowthMethod::Sampled => (spectral_abscissa(a)?, 1.0),
    };
    let mut worst = 0.0f64;
    for i in 0..=grid_size {
        let t = horizon * i as f64 / grid_size as f64;
        let tt = expm(a, t, 1e-13)?;
        let ratio = op_norm(&tt) / (gamma * t).exp();
        worst = worst.max(ratio);
    }
    match method {
        GrowthMethod::LogarithmicNorm => {
            // The log-norm bound is rigorous; the grid can only exceed M = 1 by rounding.
            if worst > m * (1.0 + GROWTH_TOL) {
                return Err(Error::EigenFailure);
            }
        }
        GrowthMethod::Sampled => {
            m = worst.max(1.0);
        }
    }
    Ok(GrowthEstimate {
        m,
        gamma,
        method,
        grid_ratio: worst / m,
    })
}

/// Result of a commutation check between two operators.
#[derive(Debug, Clone, Copy)]
pub struct CommuteCheck {
    pub commutes: bool,
    /// |PQ - QP| / max(1, |P| |Q|).
    pub residual: f64,
}

/// Check whether `PQ = QP` up to `tol` in the scaled 2-norm.
///
/// Checking `AB = BA` suffices for `T(t)B = B T(t)` since `T(t)` is a power
/// series in `A`.
pub fn check_commute(p: &DMatrix<f64>, q: &DMatrix<f64>, tol: f64) -> Result<CommuteCheck> {
    check_square(p, "check_commute first operand")?;
    check_square(q, "check_commute second operand")?;
    if p.nrows() != q.nrows() {
        return Err(Error::DimensionMismatch {
            what: "check_commute operands".into(),
            expected: p.nrows(),
            found: q.nrows(),
        });
    }
    let comm = p * q - q * p;
    let scale = (op_norm(p) * op_norm(q)).max(1.0);
    let residual = op_norm(&comm) / scale;
    Ok(CommuteCheck {
        commutes: residual <= tol,
        residual,
    })
}

/// Inverse of the monodromy-type gap `rho - T(omega) prod(E + B_k)` with a
/// condition-number estimate.
#[derive(Debug, Clone)]
pub struct MonodromyGap {
    pub gap: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    /// 2-norm condition number sigma_max / sigma_min.
    pub cond: f64,
    /// Set when cond exceeds 1/sqrt(machine epsilon).
    pub ill_conditioned: bool,
}

/// Invert `rho - T(omega) * prod_impulses`, failing with `SingularGap` when
/// the gap is singular to working precision (an (A4) violation).
pub fn invert_monodromy_gap(
    rho: &DMatrix<f64>,
    t_omega: &DMatrix<f64>,
    prod_impulses: &DMatrix<f64>,
) -> Result<MonodromyGap> {
    check_square(rho, "rho")?;
    check_square(t_omega, "T(omega)")?;
    check_square(prod_impulses, "impulse product")?;
    let n = rho.nrows();
    if t_omega.nrows() != n || prod_impulses.nrows() != n {
        return Err(Error::DimensionMismatch {
            what: "invert_monodromy_gap operands".into(),
            expected: n,
            found: t_omega.nrows().max(prod_impulses.nrows()),
        });
    }
    let mono = t_omega * prod_impulses;
    let gap = rho - &mono;
    let svd = gap.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    // injectivity is judged relative to the size of the operators whose
    // difference the gap is; a tiny well-conditioned gap is still singular
    // to working precision
    let scale = smax.max(op_norm(rho)).max(op_norm(&mono)).max(f64::MIN_POSITIVE);
    let cond = if smin > 0.0 { scale / smin } else { f64::INFINITY };
    if smin <= scale * (n as f64) * f64::EPSILON * 10.0 {
        return Err(Error::SingularGap { cond });
    }
    let inverse = gap
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::SingularGap { cond })?;
    Ok(MonodromyGap {
        gap,
        inverse,
        cond,
        ill_conditioned: cond > 1.0 / f64::EPSILON.sqrt(),
    })
}
