//! Forward evolution of linear and semilinear impulsive systems. These
//! integrators are the direct-simulation oracle for everything downstream:
//! exact `exp(A h)` propagation between impulses, composite Gauss-Legendre
//! quadrature for forcing terms, exact jump application at impulse times.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{panels, GaussLegendre, QuadratureConfig};
use crate::schedule::ImpulseSchedule;
use crate::semigroup::expm;
use crate::trajectory::{JumpRecord, PiecewiseTrajectory, Segment};

pub type ForcingFn = dyn Fn(f64) -> DVector<f64> + Send + Sync;
pub type SemilinearFn = dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync;
pub type VolterraKernelFn = dyn Fn(f64, f64, &DVector<f64>) -> DVector<f64> + Send + Sync;

/// Which state enters the inner Volterra integrand `g(t, s, .)`.
///
/// The equation is written with the current state, `g(t, s, y(t))`; that is
/// the default. `AtS` provides the conventional memory integral
/// `g(t, s, y(s))` instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VolterraArg {
    #[default]
    AtT,
    AtS,
}

/// The semilinear right-hand side `f(t, y, z)` with Volterra term
/// `z = int_0^t g(t, s, .) ds`, plus the constants used for certification.
#[derive(Clone)]
pub struct VolterraProblem {
    pub f: Arc<SemilinearFn>,
    pub g: Arc<VolterraKernelFn>,
    /// Lipschitz constant of f in its last two arguments on the nu-ball.
    pub lipschitz_f: Option<f64>,
    /// Lipschitz constant of g in its state argument on the nu-ball.
    pub lipschitz_g: Option<f64>,
    /// Affine growth constants: |f| <= alpha + beta |y|.
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    /// Largest state norm the callables are trusted on.
    pub nu_max: f64,
    pub arg: VolterraArg,
}

impl std::fmt::Debug for VolterraProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VolterraProblem")
            .field("lipschitz_f", &self.lipschitz_f)
            .field("lipschitz_g", &self.lipschitz_g)
            .field("alpha", &self.alpha)
            .field("beta", &self.beta)
            .field("nu_max", &self.nu_max)
            .field("arg", &self.arg)
            .finish()
    }
}

impl VolterraProblem {
    pub fn new(f: Arc<SemilinearFn>, g: Arc<VolterraKernelFn>) -> Self {
        VolterraProblem {
            f,
            g,
            lipschitz_f: None,
            lipschitz_g: None,
            alpha: None,
            beta: None,
            nu_max: 1e6,
            arg: VolterraArg::AtT,
        }
    }
}

/// Step-size control for the semilinear integrator.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepConfig {
    /// Target (maximal) step.
    pub h: f64,
    /// Per-step acceptance tolerance on the embedded midpoint/Euler pair.
    pub tol: f64,
    pub max_halvings: u32,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            h: 1e-3,
            tol: 1e-10,
            max_halvings: 40,
        }
    }
}

/// Breakpoint plan: contiguous smooth pieces of `[t0, t1]` separated by
/// extended impulse times, each carrying the impulse index that closes it.
pub(crate) struct SegmentPlan {
    pub start: f64,
    pub end: f64,
    pub end_impulse: Option<usize>,
}

pub(crate) fn plan_segments(
    schedule: &ImpulseSchedule,
    t0: f64,
    t1: f64,
) -> Result<Vec<SegmentPlan>> {
    if t1 < t0 {
        return Err(Error::ReversedInterval { s: t0, t: t1 });
    }
    let idx = schedule.window_indices(t0, t1)?;
    let mut out = Vec::with_capacity(idx.len() + 1);
    let mut cursor = t0;
    for k in idx {
        let tau = schedule.tau_ext(k);
        out.push(SegmentPlan {
            start: cursor,
            end: tau,
            end_impulse: Some(k),
        });
        cursor = tau;
    }
    out.push(SegmentPlan {
        start: cursor,
        end: t1,
        end_impulse: None,
    });
    Ok(out)
}

/// Inner Volterra integral `z(t) = int_0^t g(t, s, .) ds`, with panels split
/// at impulse times. Under `AtT` only the current state is needed; under
/// `AtS` the history is read through `lookup`.
pub fn volterra_integral(
    problem: &VolterraProblem,
    schedule: &ImpulseSchedule,
    gl: &GaussLegendre,
    quad: &QuadratureConfig,
    t: f64,
    y_t: &DVector<f64>,
    lookup: &dyn Fn(f64) -> DVector<f64>,
) -> Result<DVector<f64>> {
    let n = y_t.len();
    let mut z = DVector::zeros(n);
    if t <= 0.0 {
        return Ok(z);
    }
    let max_w = schedule.omega() * quad.max_panel_fraction;
    let cuts: Vec<f64> = schedule
        .window_indices(0.0, t)?
        .into_iter()
        .map(|k| schedule.tau_ext(k))
        .collect();
    for (a, b) in panels(0.0, t, &cuts, max_w)? {
        for (s, w) in gl.mapped(a, b) {
            let val = match problem.arg {
                VolterraArg::AtT => (problem.g)(t, s, y_t),
                VolterraArg::AtS => {
                    let ys = lookup(s);
                    (problem.g)(t, s, &ys)
                }
            };
            z.axpy(w, &val, 1.0);
        }
    }
    Ok(z)
}

fn ensure_finite(v: &DVector<f64>, t: f64) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteState { t });
    }
    Ok(())
}

/// Forward evolution of the forced linear impulsive system
/// `y' = A y + f(t)`, jumps `Delta y = B_k y + d_k`, from `y(0) = y0`.
pub fn evolve_linear(
    a: &DMatrix<f64>,
    schedule: &ImpulseSchedule,
    y0: &DVector<f64>,
    forcing: &dyn Fn(f64) -> DVector<f64>,
    t_end: f64,
    quad: &QuadratureConfig,
) -> Result<PiecewiseTrajectory> {
    evolve_linear_from(a, schedule, 0.0, y0, forcing, t_end, quad)
}

/// Same as [`evolve_linear`] but starting at `t_start`.
pub fn evolve_linear_from(
    a: &DMatrix<f64>,
    schedule: &ImpulseSchedule,
    t_start: f64,
    y_start: &DVector<f64>,
    forcing: &dyn Fn(f64) -> DVector<f64>,
    t_end: f64,
    quad: &QuadratureConfig,
) -> Result<PiecewiseTrajectory> {
    let n = y_start.len();
    let gl = GaussLegendre::new(quad.nodes_per_panel);
    let max_w = schedule.omega() * quad.max_panel_fraction;
    let mut segments = Vec::new();
    let mut jumps = Vec::new();
    let mut anchor = y_start.clone();

    for plan in plan_segments(schedule, t_start, t_end)? {
        let mut times = vec![plan.start];
        let mut values = vec![anchor.clone()];
        let mut breaks = vec![0usize];
        if plan.end > plan.start {
            for (pa, pb) in panels(plan.start, plan.end, &[], max_w)? {
                let y_pa = values.last().unwrap().clone();
                let mut states: Vec<(f64, DVector<f64>)> = Vec::new();
                for (x, _) in gl.mapped(pa, pb) {
                    states.push((x, linear_state(a, &y_pa, pa, x, forcing, &gl)?));
                }
                states.push((pb, linear_state(a, &y_pa, pa, pb, forcing, &gl)?));
                for (x, y) in states {
                    ensure_finite(&y, x)?;
                    times.push(x);
                    values.push(y);
                }
                breaks.push(times.len() - 1);
            }
        }
        let left = values.last().unwrap().clone();
        segments.push(Segment {
            start: plan.start,
            end: plan.end,
            times,
            values,
            breaks,
        });
        anchor = match plan.end_impulse {
            Some(k) => {
                let right = &left + schedule.b_ext(k) * &left + schedule.d_ext(k);
                jumps.push(JumpRecord {
                    time: plan.end,
                    impulse_index: k,
                    left,
                    right: right.clone(),
                });
                right
            }
            None => left,
        };
    }
    Ok(PiecewiseTrajectory {
        dim: n,
        segments,
        jumps,
    })
}

/// Variation-of-constants state within a smooth piece:
/// `T(x - pa) y_pa + int_pa^x T(x - s) f(s) ds` with single-panel quadrature.
fn linear_state(
    a: &DMatrix<f64>,
    y_pa: &DVector<f64>,
    pa: f64,
    x: f64,
    forcing: &dyn Fn(f64) -> DVector<f64>,
    gl: &GaussLegendre,
) -> Result<DVector<f64>> {
    let mut y = expm(a, x - pa, 1e-13)? * y_pa;
    if x > pa {
        for (s, w) in gl.mapped(pa, x) {
            let fv = forcing(s);
            y.axpy(w, &(expm(a, x - s, 1e-13)? * fv), 1.0);
        }
    }
    Ok(y)
}

/// Forward evolution of the semilinear system
/// `y' = A y + f(t, y, int_0^t g(t, s, y(t)) ds)` by exponential
/// midpoint stepping with an embedded exponential Euler error estimate.
pub fn evolve_semilinear(
    a: &DMatrix<f64>,
    schedule: &ImpulseSchedule,
    problem: &VolterraProblem,
    y0: &DVector<f64>,
    t_end: f64,
    step: &StepConfig,
) -> Result<PiecewiseTrajectory> {
    evolve_semilinear_from(a, schedule, problem, 0.0, y0, t_end, step, &[])
}

/// Semilinear evolution starting at `t_start`; `history` supplies the state
/// on `[0, t_start]` for the Volterra memory under the `AtS` convention.
#[allow(clippy::too_many_arguments)]
pub fn evolve_semilinear_from(
    a: &DMatrix<f64>,
    schedule: &ImpulseSchedule,
    problem: &VolterraProblem,
    t_start: f64,
    y_start: &DVector<f64>,
    t_end: f64,
    step: &StepConfig,
    history: &[Segment],
) -> Result<PiecewiseTrajectory> {
    if !(step.h > 0.0) {
        return Err(Error::StepFailure { t: t_start });
    }
    let n = y_start.len();
    let gl = GaussLegendre::new(QuadratureConfig::default().nodes_per_panel);
    let quad = QuadratureConfig::default();
    let mut exp_cache: HashMap<u64, (DMatrix<f64>, DMatrix<f64>)> = HashMap::new();
    let mut cached = |h: f64| -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if let Some(pair) = exp_cache.get(&h.to_bits()) {
            return Ok(pair.clone());
        }
        let pair = (expm(a, h, 1e-13)?, expm(a, 0.5 * h, 1e-13)?);
        exp_cache.insert(h.to_bits(), pair.clone());
        Ok(pair)
    };

    let mut segments: Vec<Segment> = history.to_vec();
    let history_len = segments.len();
    let mut jumps = Vec::new();
    let mut anchor = y_start.clone();

    for plan in plan_segments(schedule, t_start, t_end)? {
        let mut times = vec![plan.start];
        let mut values = vec![anchor.clone()];
        let mut t = plan.start;
        let mut h = step.h.min((plan.end - plan.start).max(step.h * 1e-9));
        while t < plan.end {
            h = h.min(plan.end - t);
            let y = values.last().unwrap().clone();
            let mut halvings = 0u32;
            // exponential midpoint step with step-doubling Richardson
            // extrapolation; the coarse/fine difference is the error estimate
            let accepted = loop {
                let midpoint = |t0: f64,
                                y0: &DVector<f64>,
                                hh: f64,
                                cache: &mut dyn FnMut(f64) -> Result<(DMatrix<f64>, DMatrix<f64>)>|
                 -> Result<DVector<f64>> {
                    let (e_full, e_half) = cache(hh)?;
                    let lookup =
                        |s: f64| -> DVector<f64> { partial_value(&segments, &times, &values, s) };
                    let z0 = volterra_integral(problem, schedule, &gl, &quad, t0, y0, &lookup)?;
                    let f0 = (problem.f)(t0, y0, &z0);
                    let y_half = &e_half * (y0 + &f0 * (0.5 * hh));
                    let t_half = t0 + 0.5 * hh;
                    let bridge = |s: f64| -> DVector<f64> {
                        if s <= t0 {
                            partial_value(&segments, &times, &values, s)
                        } else {
                            let w = ((s - t0) / (0.5 * hh)).min(1.0);
                            y0 * (1.0 - w) + &y_half * w
                        }
                    };
                    let z_half =
                        volterra_integral(problem, schedule, &gl, &quad, t_half, &y_half, &bridge)?;
                    let f_half = (problem.f)(t_half, &y_half, &z_half);
                    Ok(&e_full * y0 + &e_half * &f_half * hh)
                };
                let y_coarse = midpoint(t, &y, h, &mut cached)?;
                let y_mid = midpoint(t, &y, 0.5 * h, &mut cached)?;
                let y_fine = midpoint(t + 0.5 * h, &y_mid, 0.5 * h, &mut cached)?;
                let diff = (&y_fine - &y_coarse).norm();
                let err = diff / (1.0 + y_fine.norm());
                if !err.is_finite() {
                    return Err(Error::NonFiniteState { t });
                }
                if err <= step.tol {
                    break &y_fine + (&y_fine - &y_coarse) / 3.0;
                }
                halvings += 1;
                if halvings > step.max_halvings {
                    return Err(Error::StepFailure { t });
                }
                h *= 0.5;
            };
            let y_next = accepted;
            ensure_finite(&y_next, t + h)?;
            t += h;
            times.push(t);
            values.push(y_next);
        }
        let left = values.last().unwrap().clone();
        segments.push(Segment::plain(plan.start, plan.end, times, values));
        anchor = match plan.end_impulse {
            Some(k) => {
                let right = &left + schedule.b_ext(k) * &left + schedule.d_ext(k);
                jumps.push(JumpRecord {
                    time: plan.end,
                    impulse_index: k,
                    left,
                    right: right.clone(),
                });
                right
            }
            None => left,
        };
    }
    Ok(PiecewiseTrajectory {
        dim: n,
        segments: segments.split_off(history_len),
        jumps,
    })
}

/// Value lookup over completed segments plus the partially built one.
fn partial_value(
    done: &[Segment],
    cur_times: &[f64],
    cur_values: &[DVector<f64>],
    s: f64,
) -> DVector<f64> {
    if let Some(first) = cur_times.first() {
        if s >= *first {
            let seg = Segment::plain(
                *first,
                *cur_times.last().unwrap(),
                cur_times.to_vec(),
                cur_values.to_vec(),
            );
            return seg.value(s.min(seg.end));
        }
    }
    for seg in done.iter().rev() {
        if s > seg.start || (seg.start == 0.0 && s <= 0.0) {
            return seg.value(s.max(seg.start).min(seg.end));
        }
    }
    cur_values
        .first()
        .cloned()
        .unwrap_or_else(|| DVector::zeros(0))
}

/// Sup over the sample grid of `|y(t + omega) - rho y(t)| / (1 + |y(t)|)`,
/// comparing like limits at impulse times. The trajectory must cover
/// `[0, 2 omega]`.
pub fn periodicity_residual(
    traj: &PiecewiseTrajectory,
    rho: &DMatrix<f64>,
    omega: f64,
) -> Result<f64> {
    let slack = 1e-9 * (1.0 + omega);
    if traj.start() > slack || traj.end() < 2.0 * omega - slack {
        return Err(Error::ShortTrajectory {
            need_start: 0.0,
            need_end: 2.0 * omega,
            got_start: traj.start(),
            got_end: traj.end(),
        });
    }
    let mut worst = 0.0f64;
    for seg in &traj.segments {
        if seg.start > omega {
            break;
        }
        for (t, v) in seg.times.iter().zip(&seg.values) {
            if *t > omega + slack {
                continue;
            }
            let shifted = (*t + omega).min(traj.end());
            let w = if *t == seg.start {
                traj.right_limit(shifted)?
            } else {
                traj.value(shifted)?
            };
            let r = (&w - rho * v).norm() / (1.0 + v.norm());
            worst = worst.max(r);
        }
    }
    Ok(worst)
}

/// Closed-form state of the forced linear impulsive flow:
/// `T(t) P_(0,t) y0 + int_0^t T(t-s) P_(s,t) f(s) ds
///  + sum_{0 < tau_k < t} T(t-tau_k) P_(tau_k,t) d_k`,
/// with `P_(a,b)` the ordered transition product. Under the standing
/// commutation assumptions this equals the simulated flow.
pub fn transition_formula_state(
    a: &DMatrix<f64>,
    schedule: &ImpulseSchedule,
    y0: &DVector<f64>,
    forcing: Option<&dyn Fn(f64) -> DVector<f64>>,
    t: f64,
    quad: &QuadratureConfig,
) -> Result<DVector<f64>> {
    let mut y = expm(a, t, 1e-13)? * schedule.transition_product(0.0, t)? * y0;
    let (integral, impulse) = forced_terms(a, schedule, forcing, t, quad)?;
    y += integral + impulse;
    Ok(y)
}

/// The forcing integral and impulse sum of the closed-form flow at time `t`.
pub fn forced_terms(
    a: &DMatrix<f64>,
    schedule: &ImpulseSchedule,
    forcing: Option<&dyn Fn(f64) -> DVector<f64>>,
    t: f64,
    quad: &QuadratureConfig,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = schedule.dim();
    let gl = GaussLegendre::new(quad.nodes_per_panel);
    let max_w = schedule.omega() * quad.max_panel_fraction;
    let mut integral = DVector::<f64>::zeros(n);
    if let Some(f) = forcing {
        if t > 0.0 {
            let cuts: Vec<f64> = schedule
                .window_indices(0.0, t)?
                .into_iter()
                .map(|k| schedule.tau_ext(k))
                .collect();
            for (pa, pb) in panels(0.0, t, &cuts, max_w)? {
                // the impulse window (s, t) is constant inside a panel
                let prod = schedule.transition_product(0.5 * (pa + pb), t)?;
                for (s, w) in gl.mapped(pa, pb) {
                    let v = expm(a, t - s, 1e-13)? * &prod * f(s);
                    integral.axpy(w, &v, 1.0);
                }
            }
        }
    }
    let mut impulse = DVector::<f64>::zeros(n);
    for k in schedule.window_indices(0.0, t)? {
        let tau = schedule.tau_ext(k);
        let prod = schedule.transition_product(tau, t)?;
        impulse += expm(a, t - tau, 1e-13)? * prod * schedule.d_ext(k);
    }
    Ok((integral, impulse))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::Impulse;
    use approx::assert_relative_eq;

    fn scalar_schedule(omega: f64, rho: f64, imps: &[(f64, f64, f64)]) -> ImpulseSchedule {
        let impulses = imps
            .iter()
            .map(|&(tau, b, d)| Impulse {
                tau,
                b: DMatrix::from_element(1, 1, b),
                d: DVector::from_element(1, d),
            })
            .collect();
        ImpulseSchedule::new(omega, DMatrix::from_element(1, 1, rho), impulses).unwrap()
    }

    fn zero_forcing(n: usize) -> Box<ForcingFn> {
        Box::new(move |_t| DVector::zeros(n))
    }

    #[test]
    fn constant_state_without_dynamics() {
        let a = DMatrix::zeros(2, 2);
        let sched = ImpulseSchedule::new(1.0, DMatrix::identity(2, 2), vec![]).unwrap();
        let y0 = DVector::from_vec(vec![1.5, -2.0]);
        let traj = evolve_linear(
            &a,
            &sched,
            &y0,
            &*zero_forcing(2),
            2.0,
            &QuadratureConfig::default(),
        )
        .unwrap();
        for t in [0.0, 0.7, 1.3, 2.0] {
            assert_relative_eq!((traj.value(t).unwrap() - &y0).norm(), 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn scalar_impulse_jump() {
        // a = 0, impulse (0.5, b=1, d=1), y0 = 1: y = 1 then 3.
        let a = DMatrix::zeros(1, 1);
        let sched = scalar_schedule(1.0, 2.0, &[(0.5, 1.0, 1.0)]);
        let y0 = DVector::from_element(1, 1.0);
        let traj = evolve_linear(
            &a,
            &sched,
            &y0,
            &*zero_forcing(1),
            1.0,
            &QuadratureConfig::default(),
        )
        .unwrap();
        assert_relative_eq!(traj.value(0.25).unwrap()[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(traj.value(0.5).unwrap()[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(traj.right_limit(0.5).unwrap()[0], 3.0, epsilon = 1e-14);
        assert_relative_eq!(traj.value(1.0).unwrap()[0], 3.0, epsilon = 1e-14);
        let (resid, _) = traj.max_jump_residual(&sched);
        assert!(resid <= 1e-15);
    }

    #[test]
    fn scalar_pure_exponential() {
        let a = DMatrix::from_element(1, 1, 1.0);
        let sched = scalar_schedule(1.0, 2.0, &[]);
        let y0 = DVector::from_element(1, 1.0);
        let t_end = 2f64.ln();
        let traj = evolve_linear(
            &a,
            &sched,
            &y0,
            &*zero_forcing(1),
            t_end,
            &QuadratureConfig::default(),
        )
        .unwrap();
        assert_relative_eq!(traj.value(t_end).unwrap()[0], 2.0, max_relative = 1e-12);
    }

    #[test]
    fn forced_linear_matches_closed_form() {
        // y' = -y + sin(t), y(0) = 0.3, closed form via integrating factor.
        let a = DMatrix::from_element(1, 1, -1.0);
        let sched = scalar_schedule(1.0, 2.0, &[]);
        let y0 = DVector::from_element(1, 0.3);
        let forcing = |t: f64| DVector::from_element(1, t.sin());
        let traj = evolve_linear(&a, &sched, &y0, &forcing, 1.5, &QuadratureConfig::default())
            .unwrap();
        let exact = |t: f64| {
            // y = c e^{-t} + (sin t - cos t)/2, c = 0.3 + 1/2
            0.8 * (-t).exp() + (t.sin() - t.cos()) / 2.0
        };
        for t in [0.3, 0.8, 1.5] {
            assert_relative_eq!(traj.value(t).unwrap()[0], exact(t), max_relative = 1e-11);
        }
    }

    #[test]
    fn formula_state_matches_simulation_for_commuting_system() {
        let a = DMatrix::from_element(1, 1, 0.4);
        let sched = scalar_schedule(1.0, 2.0, &[(0.3, 0.5, 0.8), (0.7, -0.25, 0.1)]);
        let y0 = DVector::from_element(1, 1.1);
        let forcing = |t: f64| DVector::from_element(1, 0.5 + t);
        let quad = QuadratureConfig::default();
        let traj = evolve_linear(&a, &sched, &y0, &forcing, 1.0, &quad).unwrap();
        for t in [0.2, 0.5, 0.9, 1.0] {
            let formula = transition_formula_state(&a, &sched, &y0, Some(&forcing), t, &quad)
                .unwrap();
            assert_relative_eq!(traj.value(t).unwrap()[0], formula[0], max_relative = 1e-10);
        }
    }

    #[test]
    fn semilinear_zero_f_matches_linear() {
        let a = DMatrix::from_row_slice(2, 2, &[-0.5, 0.2, 0.0, -1.0]);
        let sched = ImpulseSchedule::new(
            1.0,
            DMatrix::identity(2, 2),
            vec![Impulse {
                tau: 0.4,
                b: DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.2]),
                d: DVector::from_vec(vec![1.0, -0.5]),
            }],
        )
        .unwrap();
        let y0 = DVector::from_vec(vec![1.0, 2.0]);
        let problem = VolterraProblem::new(
            Arc::new(|_t: f64, _y: &DVector<f64>, _z: &DVector<f64>| DVector::zeros(2)),
            Arc::new(|_t: f64, _s: f64, _y: &DVector<f64>| DVector::zeros(2)),
        );
        let lin = evolve_linear(
            &a,
            &sched,
            &y0,
            &*zero_forcing(2),
            1.0,
            &QuadratureConfig::default(),
        )
        .unwrap();
        let semi = evolve_semilinear(
            &a,
            &sched,
            &problem,
            &y0,
            1.0,
            &StepConfig {
                h: 0.01,
                tol: 1e-10,
                max_halvings: 30,
            },
        )
        .unwrap();
        for t in [0.2, 0.4, 0.75, 1.0] {
            let d = (lin.value(t).unwrap() - semi.value(t).unwrap()).norm();
            assert!(d < 1e-9, "deviation {d} at t = {t}");
        }
    }

    #[test]
    fn semilinear_volterra_closed_form() {
        // a = 0, g = y(t), f = lambda z  =>  y' = lambda t y, y = exp(lambda t^2/2).
        let lambda = 2.0 * 2f64.ln();
        let a = DMatrix::zeros(1, 1);
        let sched = scalar_schedule(1.0, 2.0, &[]);
        let problem = VolterraProblem::new(
            Arc::new(move |_t: f64, _y: &DVector<f64>, z: &DVector<f64>| z * lambda),
            Arc::new(|_t: f64, _s: f64, y: &DVector<f64>| y.clone()),
        );
        let y0 = DVector::from_element(1, 1.0);
        let traj = evolve_semilinear(
            &a,
            &sched,
            &problem,
            &y0,
            1.0,
            &StepConfig {
                h: 5e-4,
                tol: 1e-8,
                max_halvings: 30,
            },
        )
        .unwrap();
        let val = traj.value(1.0).unwrap()[0];
        assert_relative_eq!(val, 2.0, max_relative = 1e-8);
        // zero impulse leaves the solution unchanged
        let sched2 = scalar_schedule(1.0, 2.0, &[(0.5, 0.0, 0.0)]);
        let traj2 = evolve_semilinear(
            &a,
            &sched2,
            &problem,
            &y0,
            1.0,
            &StepConfig {
                h: 5e-4,
                tol: 1e-8,
                max_halvings: 30,
            },
        )
        .unwrap();
        assert_relative_eq!(traj2.value(1.0).unwrap()[0], val, max_relative = 1e-7);
    }

    #[test]
    fn semilinear_memory_convention_closed_form() {
        // a = 0, g = y(s), f = lambda z under the at_s convention:
        // y'' = lambda y with y(0) = 1, y'(0) = 0, so y(t) = cosh(sqrt(lambda) t).
        let lambda = 1.7;
        let a = DMatrix::zeros(1, 1);
        let sched = scalar_schedule(1.0, 2.0, &[]);
        let mut problem = VolterraProblem::new(
            Arc::new(move |_t: f64, _y: &DVector<f64>, z: &DVector<f64>| z * lambda),
            Arc::new(|_t: f64, _s: f64, y: &DVector<f64>| y.clone()),
        );
        problem.arg = VolterraArg::AtS;
        let y0 = DVector::from_element(1, 1.0);
        let traj = evolve_semilinear(
            &a,
            &sched,
            &problem,
            &y0,
            1.0,
            &StepConfig {
                h: 1e-3,
                tol: 1e-10,
                max_halvings: 30,
            },
        )
        .unwrap();
        let expect = (lambda.sqrt() * 1.0f64).cosh();
        assert_relative_eq!(traj.value(1.0).unwrap()[0], expect, max_relative = 1e-7);
        // the at_t convention solves a different equation (y' = lambda t y)
        problem.arg = VolterraArg::AtT;
        let traj_t = evolve_semilinear(
            &a,
            &sched,
            &problem,
            &y0,
            1.0,
            &StepConfig {
                h: 1e-3,
                tol: 1e-10,
                max_halvings: 30,
            },
        )
        .unwrap();
        assert_relative_eq!(
            traj_t.value(1.0).unwrap()[0],
            (lambda / 2.0f64).exp(),
            max_relative = 1e-7
        );
    }

    #[test]
    fn periodicity_residual_cases() {
        let quad = QuadratureConfig::default();
        // exact (1,2)-periodic scalar: y = exp(t ln 2)
        let a = DMatrix::from_element(1, 1, 2f64.ln());
        let sched = scalar_schedule(1.0, 2.0, &[]);
        let y0 = DVector::from_element(1, 1.0);
        let traj = evolve_linear(&a, &sched, &y0, &*zero_forcing(1), 2.0, &quad).unwrap();
        let rho = DMatrix::from_element(1, 1, 2.0);
        assert!(periodicity_residual(&traj, &rho, 1.0).unwrap() < 1e-11);

        // constant trajectory with rho = I
        let traj_c = evolve_linear(
            &DMatrix::zeros(1, 1),
            &sched,
            &DVector::from_element(1, 4.0),
            &*zero_forcing(1),
            2.0,
            &quad,
        )
        .unwrap();
        assert!(periodicity_residual(&traj_c, &DMatrix::identity(1, 1), 1.0).unwrap() < 1e-14);

        // y = e^t against rho = 2: sup |e^{t+1} - 2 e^t| / (1 + e^t)
        let a1 = DMatrix::from_element(1, 1, 1.0);
        let traj_e = evolve_linear(&a1, &sched, &y0, &*zero_forcing(1), 2.0, &quad).unwrap();
        let got = periodicity_residual(&traj_e, &rho, 1.0).unwrap();
        let expect = (std::f64::consts::E - 2.0) * std::f64::consts::E
            / (1.0 + std::f64::consts::E);
        assert_relative_eq!(got, expect, max_relative = 1e-6);

        // short trajectory rejected
        let short = evolve_linear(&a1, &sched, &y0, &*zero_forcing(1), 1.5, &quad).unwrap();
        assert!(matches!(
            periodicity_residual(&short, &rho, 1.0),
            Err(Error::ShortTrajectory { .. })
        ));
    }

    #[test]
    fn flow_composition_restart() {
        let a = DMatrix::from_row_slice(2, 2, &[0.1, 0.3, -0.2, -0.4]);
        let sched = ImpulseSchedule::new(
            1.0,
            DMatrix::identity(2, 2),
            vec![Impulse {
                tau: 0.6,
                b: DMatrix::from_row_slice(2, 2, &[0.2, 0.0, 0.1, -0.1]),
                d: DVector::from_vec(vec![0.4, 0.2]),
            }],
        )
        .unwrap();
        let y0 = DVector::from_vec(vec![1.0, -1.0]);
        let forcing = |t: f64| DVector::from_vec(vec![t.cos(), 0.3 * t]);
        let quad = QuadratureConfig::default();
        let full = evolve_linear(&a, &sched, &y0, &forcing, 1.8, &quad).unwrap();
        let part1 = evolve_linear(&a, &sched, &y0, &forcing, 0.9, &quad).unwrap();
        let restart = evolve_linear_from(
            &a,
            &sched,
            0.9,
            &part1.right_limit(0.9).unwrap(),
            &forcing,
            1.8,
            &quad,
        )
        .unwrap();
        for t in [1.0, 1.4, 1.8] {
            let d = (full.value(t).unwrap() - restart.value(t).unwrap()).norm();
            assert!(d < 1e-11, "composition deviation {d} at t = {t}");
        }
    }
}
