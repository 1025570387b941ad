//! The Green-type kernel `H(t, tau)` of the periodic boundary-value
//! construction, in its general and commuting forms, together with the
//! closed-form bounds `C1`, `C1'`, `C2`, `C2'` and their numeric left-hand
//! sides.
//!
//! Writing `P(a,b)` for the ordered transition product over impulses in
//! `(a, b)` and `G = rho - T(omega) P(0,omega)`, the general kernel is
//!
//! ```text
//! H(t,tau) = (T(t) P(0,t) G^-1 T(omega-t) P(t,omega) + E) T(t-tau) P(tau,t)   0 < tau < t
//! H(t,tau) =  T(t) P(0,t) G^-1 T(omega-tau) P(tau,omega)                      t <= tau < omega
//! ```
//!
//! and under the extra hypothesis `G^-1 T(t) = T(t) G^-1` the commuting form is
//!
//! ```text
//! H(t,tau) = rho G^-1 T(t-tau) P(tau,t)                  0 < tau < t
//! H(t,tau) = T(t+omega-tau) P(0,t) P(tau,omega) G^-1     t <= tau < omega
//! ```

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quad::{panels, GaussLegendre, QuadratureConfig};
use crate::semigroup::{expm, op_norm, MonodromyGap};
use crate::system::SystemSpec;

/// Which side of the diagonal `tau = t` an evaluation sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelBranch {
    /// `0 < tau < t`
    Before,
    /// `t <= tau < omega`
    After,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelVariant {
    General,
    Commuting,
}

#[derive(Debug, Clone)]
pub struct KernelEvaluation {
    pub t: f64,
    pub tau: f64,
    pub branch: KernelBranch,
    pub variant: KernelVariant,
    pub value: DMatrix<f64>,
}

/// Precomputed pieces shared by kernel evaluations on one system.
pub struct KernelContext<'a> {
    pub sys: &'a SystemSpec,
    pub gap: MonodromyGap,
    /// Tolerance for the commuting-form hypothesis check.
    pub commuting_tol: f64,
}

impl<'a> KernelContext<'a> {
    pub fn new(sys: &'a SystemSpec) -> Result<Self> {
        Ok(KernelContext {
            sys,
            gap: sys.monodromy()?,
            commuting_tol: 1e-8,
        })
    }

    fn clamp_args(&self, t: f64, tau: f64) -> Result<(f64, f64)> {
        let omega = self.sys.omega();
        let slack = 1e-9 * (1.0 + omega);
        if !(-slack..=omega + slack).contains(&t) || !(-slack..=omega + slack).contains(&tau) {
            return Err(Error::InvalidSystem {
                reason: format!(
                    "kernel arguments t = {t}, tau = {tau} outside [0, {omega}] x (0, {omega})"
                ),
            });
        }
        Ok((t.clamp(0.0, omega), tau.clamp(0.0, omega)))
    }

    pub fn eval_general(&self, t: f64, tau: f64) -> Result<KernelEvaluation> {
        let (t, tau) = self.clamp_args(t, tau)?;
        let a = &self.sys.a;
        let sched = &self.sys.schedule;
        let omega = self.sys.omega();
        let n = self.sys.dim();
        let value = if tau < t {
            // the (t, omega) window keeps an impulse sitting exactly at t, so
            // evaluation at an impulse time yields the left limit in t
            let head = expm(a, t, 1e-13)?
                * sched.transition_product(0.0, t)?
                * &self.gap.inverse
                * expm(a, omega - t, 1e-13)?
                * product_from(&self.sys.schedule, t)
                + DMatrix::<f64>::identity(n, n);
            head * expm(a, t - tau, 1e-13)? * sched.transition_product(tau, t)?
        } else {
            expm(a, t, 1e-13)?
                * sched.transition_product(0.0, t)?
                * &self.gap.inverse
                * expm(a, omega - tau, 1e-13)?
                * sched.transition_product(tau, omega)?
        };
        Ok(KernelEvaluation {
            t,
            tau,
            branch: if tau < t {
                KernelBranch::Before
            } else {
                KernelBranch::After
            },
            variant: KernelVariant::General,
            value,
        })
    }

    pub fn eval_commuting(&self, t: f64, tau: f64) -> Result<KernelEvaluation> {
        let (t, tau) = self.clamp_args(t, tau)?;
        let a = &self.sys.a;
        let sched = &self.sys.schedule;
        let omega = self.sys.omega();
        // hypothesis: the gap inverse commutes with T(t)
        let tt = expm(a, t, 1e-13)?;
        let comm = &self.gap.inverse * &tt - &tt * &self.gap.inverse;
        let resid = op_norm(&comm) / (op_norm(&self.gap.inverse) * op_norm(&tt)).max(1.0);
        if resid > self.commuting_tol {
            return Err(Error::CommutationViolation { residual: resid, t });
        }
        let value = if tau < t {
            self.sys.rho()
                * &self.gap.inverse
                * expm(a, t - tau, 1e-13)?
                * sched.transition_product(tau, t)?
        } else {
            expm(a, t + omega - tau, 1e-13)?
                * sched.transition_product(0.0, t)?
                * sched.transition_product(tau, omega)?
                * &self.gap.inverse
        };
        Ok(KernelEvaluation {
            t,
            tau,
            branch: if tau < t {
                KernelBranch::Before
            } else {
                KernelBranch::After
            },
            variant: KernelVariant::Commuting,
            value,
        })
    }

    pub fn eval(&self, variant: KernelVariant, t: f64, tau: f64) -> Result<KernelEvaluation> {
        match variant {
            KernelVariant::General => self.eval_general(t, tau),
            KernelVariant::Commuting => self.eval_commuting(t, tau),
        }
    }
}

/// Factor tables for repeated kernel evaluation over many `(t, tau)` pairs.
///
/// Uses the exact split `T(t - tau) = exp(A t) exp(-A tau)` plus per-segment
/// transition products so each additional evaluation costs only matrix
/// multiplications; all matrix exponentials are cached by argument.
pub struct KernelFactors<'a> {
    pub ctx: KernelContext<'a>,
    neg_a: DMatrix<f64>,
    /// p0t[s] = ordered product over impulses with index < s.
    p0t: Vec<DMatrix<f64>>,
    /// ptom[s] = ordered product over impulses with index >= s.
    ptom: Vec<DMatrix<f64>>,
    /// pair[i][j] = ordered product over impulse indices in [i, j).
    pair: Vec<Vec<DMatrix<f64>>>,
    exp_pos: HashMap<u64, DMatrix<f64>>,
    exp_neg: HashMap<u64, DMatrix<f64>>,
}

/// Per-`t` head matrices for fast evaluation of `H(t, .)`.
pub struct KernelRow {
    pub t: f64,
    variant: KernelVariant,
    /// left segment index of t: #{tau_k < t}
    left_seg: usize,
    /// general: W(t) exp(A t); commuting: rho G^-1 exp(A t)
    before_head: DMatrix<f64>,
    /// general: T(t) P(0,t) G^-1; commuting: exp(A t)
    after_head: DMatrix<f64>,
}

impl<'a> KernelFactors<'a> {
    pub fn new(sys: &'a SystemSpec) -> Result<Self> {
        let ctx = KernelContext::new(sys)?;
        let m = sys.schedule.len();
        let n = sys.dim();
        let eye = DMatrix::<f64>::identity(n, n);
        let imps = sys.schedule.in_window();
        let mut p0t = vec![eye.clone()];
        for imp in imps {
            let factor = &eye + &imp.b;
            p0t.push(&factor * p0t.last().unwrap());
        }
        let mut ptom = vec![eye.clone(); m + 1];
        for s in (0..m).rev() {
            let factor = &eye + &imps[s].b;
            ptom[s] = &ptom[s + 1] * factor;
        }
        let mut pair = vec![vec![eye.clone(); m + 1]; m + 1];
        for i in 0..=m {
            for j in i + 1..=m {
                let factor = &eye + &imps[j - 1].b;
                pair[i][j] = &factor * &pair[i][j - 1];
            }
        }
        Ok(KernelFactors {
            ctx,
            neg_a: -&sys.a,
            p0t,
            ptom,
            pair,
            exp_pos: HashMap::new(),
            exp_neg: HashMap::new(),
        })
    }

    /// #{tau_k < x}: index of the segment whose left-open window ends at x.
    pub fn left_seg(&self, x: f64) -> usize {
        self.ctx
            .sys
            .schedule
            .in_window()
            .iter()
            .take_while(|imp| imp.tau < x)
            .count()
    }

    /// #{tau_k <= x}: first impulse index strictly to the right of x.
    fn right_start(&self, x: f64) -> usize {
        self.ctx
            .sys
            .schedule
            .in_window()
            .iter()
            .take_while(|imp| imp.tau <= x)
            .count()
    }

    fn exp_at(&mut self, t: f64) -> Result<DMatrix<f64>> {
        if let Some(m) = self.exp_pos.get(&t.to_bits()) {
            return Ok(m.clone());
        }
        let m = expm(&self.ctx.sys.a, t, 1e-13)?;
        self.exp_pos.insert(t.to_bits(), m.clone());
        Ok(m)
    }

    fn exp_neg_at(&mut self, t: f64) -> Result<DMatrix<f64>> {
        if let Some(m) = self.exp_neg.get(&t.to_bits()) {
            return Ok(m.clone());
        }
        let m = expm(&self.neg_a, t, 1e-13)?;
        self.exp_neg.insert(t.to_bits(), m.clone());
        Ok(m)
    }

    pub fn row(&mut self, variant: KernelVariant, t: f64) -> Result<KernelRow> {
        let omega = self.ctx.sys.omega();
        let t = t.clamp(0.0, omega);
        let lt = self.left_seg(t);
        let e_t = self.exp_at(t)?;
        let n = self.ctx.sys.dim();
        match variant {
            KernelVariant::General => {
                // ptom[lt] keeps an impulse sitting exactly at t: the left
                // limit in t, consistent with the PC-space value convention
                let v = &e_t * &self.p0t[lt] * &self.ctx.gap.inverse;
                let w = &v * self.exp_at(omega - t)? * &self.ptom[lt]
                    + DMatrix::<f64>::identity(n, n);
                Ok(KernelRow {
                    t,
                    variant,
                    left_seg: lt,
                    before_head: &w * &e_t,
                    after_head: v,
                })
            }
            KernelVariant::Commuting => {
                let comm = &self.ctx.gap.inverse * &e_t - &e_t * &self.ctx.gap.inverse;
                let resid = op_norm(&comm)
                    / (op_norm(&self.ctx.gap.inverse) * op_norm(&e_t)).max(1.0);
                if resid > self.ctx.commuting_tol {
                    return Err(Error::CommutationViolation { residual: resid, t });
                }
                Ok(KernelRow {
                    t,
                    variant,
                    left_seg: lt,
                    before_head: self.ctx.sys.rho() * &self.ctx.gap.inverse * &e_t,
                    after_head: e_t,
                })
            }
        }
    }

    /// `H(t, tau)` through the factor tables; same value as the direct
    /// evaluators up to rounding.
    pub fn eval(&mut self, row: &KernelRow, tau: f64) -> Result<DMatrix<f64>> {
        let omega = self.ctx.sys.omega();
        let tau = tau.clamp(0.0, omega);
        if tau < row.t {
            let i = self.right_start(tau);
            let shift = self.exp_neg_at(tau)?;
            Ok(&row.before_head * shift * &self.pair[i][row.left_seg])
        } else {
            let i = self.right_start(tau);
            match row.variant {
                KernelVariant::General => {
                    Ok(&row.after_head * self.exp_at(omega - tau)? * &self.ptom[i])
                }
                KernelVariant::Commuting => Ok(&row.after_head
                    * self.exp_at(omega - tau)?
                    * &self.p0t[row.left_seg]
                    * &self.ptom[i]
                    * &self.ctx.gap.inverse),
            }
        }
    }
}

/// Numeric left-hand sides `int_0^omega |H(t,.)| dtau` and
/// `sum_i |H(t,tau_i)| |d_i|` for every `t` in `ts`, with shared factor
/// tables across the grid.
pub fn kernel_grid_lhs(
    sys: &SystemSpec,
    ts: &[f64],
    quad: &QuadratureConfig,
    variant: KernelVariant,
) -> Result<Vec<(f64, f64)>> {
    let omega = sys.omega();
    let gl = GaussLegendre::new(quad.nodes_per_panel);
    let base_cuts: Vec<f64> = sys.schedule.in_window().iter().map(|i| i.tau).collect();
    let mut factors = KernelFactors::new(sys)?;
    let mut out = Vec::with_capacity(ts.len());
    for &t in ts {
        let row = factors.row(variant, t)?;
        let mut cuts = base_cuts.clone();
        cuts.push(t);
        let mut integral = 0.0;
        for (a, b) in panels(0.0, omega, &cuts, omega * quad.max_panel_fraction)? {
            for (tau, w) in gl.mapped(a, b) {
                integral += w * op_norm(&factors.eval(&row, tau)?);
            }
        }
        let mut sum = 0.0;
        for imp in sys.schedule.in_window() {
            sum += op_norm(&factors.eval(&row, imp.tau)?) * imp.d.norm();
        }
        out.push((integral, sum));
    }
    Ok(out)
}

/// Ordered product of `(E + B_k)` over the in-period impulses with
/// `tau_k >= t`: the left limit in `t` of the window product over `(t, omega)`.
fn product_from(schedule: &crate::schedule::ImpulseSchedule, t: f64) -> DMatrix<f64> {
    let n = schedule.dim();
    let mut prod = DMatrix::<f64>::identity(n, n);
    for imp in schedule.in_window() {
        if imp.tau >= t {
            let factor = DMatrix::<f64>::identity(n, n) + &imp.b;
            prod = factor * prod;
        }
    }
    prod
}

/// General Green-type kernel `H(t, tau)`.
pub fn kernel_h(sys: &SystemSpec, t: f64, tau: f64) -> Result<KernelEvaluation> {
    KernelContext::new(sys)?.eval_general(t, tau)
}

/// Commuting-form kernel; requires `G^-1 T(t) = T(t) G^-1`.
pub fn kernel_h_commuting(sys: &SystemSpec, t: f64, tau: f64) -> Result<KernelEvaluation> {
    KernelContext::new(sys)?.eval_commuting(t, tau)
}

/// `int_0^omega |H(t, tau)| dtau` by composite quadrature with panels split
/// at the impulse times and at the kernel diagonal `tau = t`.
pub fn kernel_integral_numeric(
    sys: &SystemSpec,
    t: f64,
    quad: &QuadratureConfig,
    variant: KernelVariant,
) -> Result<f64> {
    let ctx = KernelContext::new(sys)?;
    kernel_integral_numeric_ctx(&ctx, t, quad, variant)
}

pub fn kernel_integral_numeric_ctx(
    ctx: &KernelContext<'_>,
    t: f64,
    quad: &QuadratureConfig,
    variant: KernelVariant,
) -> Result<f64> {
    let omega = ctx.sys.omega();
    let gl = GaussLegendre::new(quad.nodes_per_panel);
    let mut cuts: Vec<f64> = ctx.sys.schedule.in_window().iter().map(|i| i.tau).collect();
    cuts.push(t);
    let mut total = 0.0;
    for (a, b) in panels(0.0, omega, &cuts, omega * quad.max_panel_fraction)? {
        for (tau, w) in gl.mapped(a, b) {
            total += w * op_norm(&ctx.eval(variant, t, tau)?.value);
        }
    }
    Ok(total)
}

/// `sum_i |H(t, tau_i)| |d_i|` over the in-period impulses: the uniformly
/// valid left-hand side that dominates both displayed readings of the
/// impulse-sum bound.
pub fn kernel_sum_numeric(sys: &SystemSpec, t: f64, variant: KernelVariant) -> Result<f64> {
    let ctx = KernelContext::new(sys)?;
    kernel_sum_numeric_ctx(&ctx, t, variant)
}

pub fn kernel_sum_numeric_ctx(
    ctx: &KernelContext<'_>,
    t: f64,
    variant: KernelVariant,
) -> Result<f64> {
    let mut total = 0.0;
    for imp in ctx.sys.schedule.in_window() {
        total += op_norm(&ctx.eval(variant, t, imp.tau)?.value) * imp.d.norm();
    }
    Ok(total)
}

/// Sign branch used by the impulse-sum bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum C1Branch {
    Pos,
    NonPos,
}

/// Sign branch used by the kernel-integral bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum C2Branch {
    NonZero,
    Zero,
}

/// Everything the closed-form bound expressions read; recomputing from this
/// echo reproduces the bounds exactly.
#[derive(Debug, Clone, Serialize)]
pub struct BoundInputs {
    pub m: f64,
    pub gamma: f64,
    pub omega: f64,
    /// |prod (E + B_k)| over one period.
    pub prod_norm: f64,
    /// |(prod (E + B_k))^2|.
    pub prod_sq_norm: f64,
    /// |G^-1|.
    pub gap_inv_norm: f64,
    /// |rho|; stands in for the undefined `|T|` factor of the commuting
    /// bounds, the only reading under which their derivation closes.
    pub rho_norm: f64,
    /// `sum_i |d_i|`.
    pub sum_d: f64,
    /// `sum_i exp(gamma (omega - tau_i)) |d_i|`.
    pub sum_d_weighted: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub variant: KernelVariant,
    pub c1: f64,
    /// The proof chain's tighter constant (`exp(gamma omega)` in place of
    /// `exp(2 gamma omega)`); equals `c1` outside the gamma > 0 general case.
    pub c1_tight: f64,
    pub c1_branch: C1Branch,
    pub c2: f64,
    /// Literal transcription of the stated gamma != 0 expression, which
    /// drops the `max{., 1}` guard and undershoots for gamma < 0; kept for
    /// reference, `c2` is the valid bound.
    pub c2_literal: f64,
    pub c2_branch: C2Branch,
    pub inputs: BoundInputs,
}

/// Pure evaluation of the closed-form bound expressions from their inputs.
pub fn evaluate_bounds(variant: KernelVariant, inputs: &BoundInputs) -> BoundReport {
    let BoundInputs {
        m,
        gamma,
        omega,
        prod_norm,
        prod_sq_norm,
        gap_inv_norm,
        rho_norm,
        sum_d,
        sum_d_weighted,
    } = *inputs;
    let egw = (gamma * omega).exp();
    // (exp(gamma omega) - 1) / gamma, continuous at gamma = 0
    let phi = if gamma == 0.0 {
        omega
    } else {
        (gamma * omega).exp_m1() / gamma
    };
    let c1_branch = if gamma > 0.0 {
        C1Branch::Pos
    } else {
        C1Branch::NonPos
    };
    let c2_branch = if gamma != 0.0 {
        C2Branch::NonZero
    } else {
        C2Branch::Zero
    };
    let (c1, c1_tight, c2, c2_literal) = match variant {
        KernelVariant::General => {
            let (c1, c1_tight) = if gamma > 0.0 {
                let base = m * prod_sq_norm.max(1.0) * (m * gap_inv_norm + 1.0) * sum_d_weighted;
                (
                    base * (2.0 * gamma * omega).exp().max(1.0),
                    base * egw.max(1.0),
                )
            } else {
                let c = m * prod_sq_norm.max(1.0) * (m * gap_inv_norm + 1.0) * sum_d;
                (c, c)
            };
            let c2 = (m * prod_sq_norm.max(1.0) * gap_inv_norm * egw.max(1.0) + prod_norm.max(1.0))
                * m
                * phi;
            let c2_literal = if gamma != 0.0 {
                (m * prod_sq_norm.max(1.0) * gap_inv_norm * egw + prod_norm.max(1.0)) * m * phi
            } else {
                c2
            };
            (c1, c1_tight, c2, c2_literal)
        }
        KernelVariant::Commuting => {
            let c1 = if gamma > 0.0 {
                m * gap_inv_norm * prod_norm.max(1.0) * rho_norm.max(egw) * sum_d_weighted
            } else {
                m * gap_inv_norm * prod_norm.max(1.0) * rho_norm.max(1.0) * sum_d
            };
            let c2 = m * gap_inv_norm * prod_norm.max(1.0) * rho_norm.max(1.0) * phi;
            (c1, c1, c2, c2)
        }
    };
    BoundReport {
        variant,
        c1,
        c1_tight,
        c1_branch,
        c2,
        c2_literal,
        c2_branch,
        inputs: inputs.clone(),
    }
}

fn bound_inputs(sys: &SystemSpec, growth: &crate::semigroup::GrowthEstimate) -> Result<BoundInputs> {
    let omega = sys.omega();
    let gap = sys.monodromy()?;
    let prod = sys.schedule.transition_product(0.0, omega)?;
    let prod_sq = &prod * &prod;
    let mut sum_d = 0.0;
    let mut sum_dw = 0.0;
    for imp in sys.schedule.in_window() {
        let nd = imp.d.norm();
        sum_d += nd;
        sum_dw += (growth.gamma * (omega - imp.tau)).exp() * nd;
    }
    Ok(BoundInputs {
        m: growth.m,
        gamma: growth.gamma,
        omega,
        prod_norm: op_norm(&prod),
        prod_sq_norm: op_norm(&prod_sq),
        gap_inv_norm: op_norm(&gap.inverse),
        rho_norm: op_norm(sys.rho()),
        sum_d,
        sum_d_weighted: sum_dw,
    })
}

/// Closed-form bounds for the general kernel.
pub fn bound_report(
    sys: &SystemSpec,
    growth: &crate::semigroup::GrowthEstimate,
    variant: KernelVariant,
) -> Result<BoundReport> {
    Ok(evaluate_bounds(variant, &bound_inputs(sys, growth)?))
}

pub fn bound_c1(sys: &SystemSpec, growth: &crate::semigroup::GrowthEstimate) -> Result<BoundReport> {
    bound_report(sys, growth, KernelVariant::General)
}

pub fn bound_c2(sys: &SystemSpec, growth: &crate::semigroup::GrowthEstimate) -> Result<BoundReport> {
    bound_report(sys, growth, KernelVariant::General)
}

pub fn bound_c1_commuting(
    sys: &SystemSpec,
    growth: &crate::semigroup::GrowthEstimate,
) -> Result<BoundReport> {
    bound_report(sys, growth, KernelVariant::Commuting)
}

pub fn bound_c2_commuting(
    sys: &SystemSpec,
    growth: &crate::semigroup::GrowthEstimate,
) -> Result<BoundReport> {
    bound_report(sys, growth, KernelVariant::Commuting)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{Impulse, ImpulseSchedule};
    use crate::semigroup::estimate_growth;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn scalar_sys(a: f64, rho: f64, omega: f64, imps: &[(f64, f64, f64)]) -> SystemSpec {
        let impulses = imps
            .iter()
            .map(|&(tau, b, d)| Impulse {
                tau,
                b: DMatrix::from_element(1, 1, b),
                d: DVector::from_element(1, d),
            })
            .collect();
        let sched =
            ImpulseSchedule::new(omega, DMatrix::from_element(1, 1, rho), impulses).unwrap();
        SystemSpec::homogeneous(DMatrix::from_element(1, 1, a), sched).unwrap()
    }

    #[test]
    fn scalar_kernel_branches() {
        // A = 0, no impulses, rho = 2, omega = 1: H = 2 before, 1 after.
        let sys = scalar_sys(0.0, 2.0, 1.0, &[]);
        let before = kernel_h(&sys, 0.7, 0.3).unwrap();
        assert_eq!(before.branch, KernelBranch::Before);
        assert_relative_eq!(before.value[(0, 0)], 2.0, max_relative = 1e-13);
        let after = kernel_h(&sys, 0.3, 0.7).unwrap();
        assert_eq!(after.branch, KernelBranch::After);
        assert_relative_eq!(after.value[(0, 0)], 1.0, max_relative = 1e-13);
        // diagonal tau = t sits on the after branch
        let diag = kernel_h(&sys, 0.5, 0.5).unwrap();
        assert_eq!(diag.branch, KernelBranch::After);
    }

    #[test]
    fn scalar_commuting_matches_general() {
        let sys = scalar_sys(0.0, 2.0, 1.0, &[]);
        for &(t, tau) in &[(0.7, 0.3), (0.3, 0.7), (0.9, 0.45)] {
            let g = kernel_h(&sys, t, tau).unwrap();
            let c = kernel_h_commuting(&sys, t, tau).unwrap();
            assert_relative_eq!(g.value[(0, 0)], c.value[(0, 0)], max_relative = 1e-12);
        }
    }

    #[test]
    fn singular_gap_detected() {
        let sys = scalar_sys(0.0, 1.0, 1.0, &[]);
        assert!(matches!(
            kernel_h(&sys, 0.5, 0.3),
            Err(Error::SingularGap { .. })
        ));
    }

    #[test]
    fn kernel_integral_scalar() {
        // int_0^1 |H(t, tau)| dtau = 2 t + (1 - t) = 1 + t; at t = 0.5 this is 1.5.
        let sys = scalar_sys(0.0, 2.0, 1.0, &[]);
        let quad = QuadratureConfig::default();
        let t = 0.5;
        let val = kernel_integral_numeric(&sys, t, &quad, KernelVariant::General).unwrap();
        assert_relative_eq!(val, 1.5, max_relative = 1e-13);
        // t = 0: only the after branch is active
        let val0 = kernel_integral_numeric(&sys, 0.0, &quad, KernelVariant::General).unwrap();
        assert_relative_eq!(val0, 1.0, max_relative = 1e-13);
    }

    #[test]
    fn kernel_sum_empty_schedule_is_zero() {
        let sys = scalar_sys(0.0, 2.0, 1.0, &[]);
        assert_eq!(
            kernel_sum_numeric(&sys, 0.5, KernelVariant::General).unwrap(),
            0.0
        );
    }

    #[test]
    fn bound_c1_scalar_example() {
        // a = 0 (gamma = 0 branch), rho = 3, impulse (b = 1, d = 1):
        // C1 = 1 * max{4,1} * (1*1 + 1) * 1 = 8.
        let sys = scalar_sys(0.0, 3.0, 1.0, &[(0.5, 1.0, 1.0)]);
        let growth = estimate_growth(&sys.a, 2.0, 16).unwrap();
        let rep = bound_c1(&sys, &growth).unwrap();
        assert_eq!(rep.c1_branch, C1Branch::NonPos);
        assert_relative_eq!(rep.c1, 8.0, max_relative = 1e-13);
        // the numeric impulse sum stays below the bound
        for i in 0..=16 {
            let t = i as f64 / 16.0;
            let s = kernel_sum_numeric(&sys, t, KernelVariant::General).unwrap();
            assert!(s <= rep.c1 * (1.0 + 1e-12), "sum {s} exceeds C1 at t = {t}");
        }
        // empty schedule: C1 = 0
        let sys0 = scalar_sys(0.0, 2.0, 1.0, &[]);
        let rep0 = bound_c1(&sys0, &estimate_growth(&sys0.a, 2.0, 8).unwrap()).unwrap();
        assert_eq!(rep0.c1, 0.0);
    }

    #[test]
    fn bound_c2_scalar_example() {
        // gamma = 0: C2 = (1*1*1 + 1) * 1 * 1 = 2, attained by max_t int |H|.
        let sys = scalar_sys(0.0, 2.0, 1.0, &[]);
        let growth = estimate_growth(&sys.a, 2.0, 16).unwrap();
        let rep = bound_c2(&sys, &growth).unwrap();
        assert_eq!(rep.c2_branch, C2Branch::Zero);
        assert_eq!(rep.c2, 2.0);
        let quad = QuadratureConfig::default();
        let max_num = (0..=64)
            .map(|i| {
                kernel_integral_numeric(&sys, i as f64 / 64.0, &quad, KernelVariant::General)
                    .unwrap()
            })
            .fold(0.0, f64::max);
        assert_relative_eq!(max_num, 2.0, max_relative = 1e-12);
        assert!(max_num <= rep.c2 * (1.0 + 1e-12));
    }

    #[test]
    fn bound_c2_gamma_branch_continuity() {
        for sign in [1.0, -1.0] {
            let eps = sign * 1e-8;
            let sys_eps = scalar_sys(eps, 2.0, 1.0, &[]);
            let sys_zero = scalar_sys(0.0, 2.0, 1.0, &[]);
            let g_eps = estimate_growth(&sys_eps.a, 2.0, 8).unwrap();
            let g_zero = estimate_growth(&sys_zero.a, 2.0, 8).unwrap();
            let c_eps = bound_report(&sys_eps, &g_eps, KernelVariant::General).unwrap();
            let c_zero = bound_report(&sys_zero, &g_zero, KernelVariant::General).unwrap();
            assert_eq!(c_eps.c2_branch, C2Branch::NonZero);
            assert_eq!(c_zero.c2_branch, C2Branch::Zero);
            assert!((c_eps.c2 - c_zero.c2).abs() <= 1e-6 * c_zero.c2);
        }
    }

    #[test]
    fn bound_recompute_is_exact() {
        let sys = scalar_sys(-0.3, 2.5, 1.2, &[(0.4, 0.5, 0.7), (0.9, -0.2, 0.1)]);
        let growth = estimate_growth(&sys.a, 2.4, 16).unwrap();
        for variant in [KernelVariant::General, KernelVariant::Commuting] {
            let rep = bound_report(&sys, &growth, variant).unwrap();
            let again = evaluate_bounds(variant, &rep.inputs);
            assert_eq!(rep.c1, again.c1);
            assert_eq!(rep.c2, again.c2);
            assert_eq!(rep.c1_tight, again.c1_tight);
            assert_eq!(rep.c2_literal, again.c2_literal);
        }
    }

    #[test]
    fn commuting_bounds_scalar() {
        // rho = 3, b = 1, d = 1, gamma = 0:
        // C1' = 1 * 1 * max{2,1} * max{3,1} * 1 = 6.
        let sys = scalar_sys(0.0, 3.0, 1.0, &[(0.5, 1.0, 1.0)]);
        let growth = estimate_growth(&sys.a, 2.0, 8).unwrap();
        let rep = bound_c1_commuting(&sys, &growth).unwrap();
        assert_relative_eq!(rep.c1, 6.0, max_relative = 1e-13);
        for i in 0..=16 {
            let t = i as f64 / 16.0;
            let s = kernel_sum_numeric(&sys, t, KernelVariant::Commuting).unwrap();
            assert!(s <= rep.c1 * (1.0 + 1e-12));
        }
    }
}
