//! Periodic solvers: the direct linear solve through the boundary equation
//! `y(omega) = rho y(0)`, the fixed-point operator
//! `(Ry)(t) = int_0^omega H(t,tau) f(tau, y(tau), z(tau)) dtau + sum_i H(t,tau_i) d_i`,
//! Picard iteration with a contraction certificate, and the invariant-ball
//! existence check.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{evolve_linear, forced_terms, volterra_integral, VolterraProblem};
use crate::kernel::{bound_report, BoundReport, KernelFactors, KernelVariant};
use crate::quad::{GaussLegendre, QuadratureConfig};
use crate::semigroup::{estimate_growth, GrowthEstimate};
use crate::system::SystemSpec;
use crate::trajectory::{JumpRecord, PiecewiseTrajectory, Segment};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PicardConfig {
    /// Sup-grid distance between successive iterates at which to stop.
    pub tol: f64,
    pub max_iter: usize,
    /// Base number of quadrature panels per impulse-free segment.
    pub grid: usize,
    pub quad: QuadratureConfig,
    /// Grid doublings allowed when successive refinements disagree.
    pub max_grid_refinements: u32,
    pub seed: u64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        PicardConfig {
            tol: 1e-10,
            max_iter: 80,
            grid: 4,
            quad: QuadratureConfig::default(),
            max_grid_refinements: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ConvergenceLog {
    /// Sup-grid distances d_n between successive iterates (final grid level).
    pub distances: Vec<f64>,
    /// Empirical rates d_{n+1} / d_n.
    pub rates: Vec<f64>,
    pub iterations: usize,
    /// Panels per segment at each refinement level tried.
    pub grid_levels: Vec<usize>,
    /// Distance between the last two refinement levels, when more than one ran.
    pub grid_agreement: Option<f64>,
    /// Largest iterate sup-norm seen (nu-ball monitoring).
    pub sup_norm_max: f64,
    pub converged: bool,
}

#[derive(Debug)]
pub struct PicardSolution {
    pub trajectory: PiecewiseTrajectory,
    pub log: ConvergenceLog,
}

/// One canonical quadrature node of the solver grid.
struct TauNode {
    tau: f64,
    weight: f64,
    /// Global panel index; the output point living in this panel replaces the
    /// panel by a split pair around its own t.
    panel: usize,
}

struct OutputPoint {
    t: f64,
    /// Canonical panel containing t strictly inside, if any.
    diag_panel: Option<usize>,
    /// H(t, tau_j) per canonical node (skipped for nodes of `diag_panel`).
    h_canonical: Vec<DMatrix<f64>>,
    /// Fresh nodes (tau, weight, H) of the split panel around t.
    diag: Vec<(f64, f64, DMatrix<f64>)>,
    /// sum_i H(t, tau_i) d_i
    impulse_term: DVector<f64>,
}

struct GridSegment {
    start: f64,
    end: f64,
    end_impulse: Option<usize>,
    /// start, Gauss nodes and panel boundaries, end
    times: Vec<f64>,
    /// interpolation-cell boundaries (indices of panel edges in `times`)
    breaks: Vec<usize>,
}

/// Precomputed application of the operator R on a fixed solver grid. The
/// kernel matrices depend only on the system, so repeated applications cost
/// one right-hand-side sweep plus weighted sums.
pub struct PicardWorkspace<'a> {
    sys: &'a SystemSpec,
    quad: QuadratureConfig,
    gl: GaussLegendre,
    segments: Vec<GridSegment>,
    tau_nodes: Vec<TauNode>,
    outputs: Vec<OutputPoint>,
}

impl<'a> PicardWorkspace<'a> {
    pub fn new(sys: &'a SystemSpec, panels_per_segment: usize, quad: QuadratureConfig) -> Result<Self> {
        let omega = sys.omega();
        let gl = GaussLegendre::new(quad.nodes_per_panel);
        let mut factors = KernelFactors::new(sys)?;

        // segment/panel layout
        let mut bounds = vec![0.0];
        for imp in sys.schedule.in_window() {
            bounds.push(imp.tau);
        }
        bounds.push(omega);
        let mut segments = Vec::new();
        let mut panels: Vec<(f64, f64)> = Vec::new();
        for s in 0..bounds.len() - 1 {
            let (a, b) = (bounds[s], bounds[s + 1]);
            let mut times = vec![a];
            let mut breaks = vec![0usize];
            for p in 0..panels_per_segment {
                let pa = a + (b - a) * p as f64 / panels_per_segment as f64;
                let pb = if p + 1 == panels_per_segment {
                    b
                } else {
                    a + (b - a) * (p + 1) as f64 / panels_per_segment as f64
                };
                panels.push((pa, pb));
                times.extend(gl.mapped(pa, pb).map(|(x, _)| x));
                times.push(pb);
                breaks.push(times.len() - 1);
            }
            segments.push(GridSegment {
                start: a,
                end: b,
                end_impulse: if s + 1 < bounds.len() - 1 {
                    Some(s)
                } else {
                    None
                },
                times,
                breaks,
            });
        }

        let mut tau_nodes = Vec::new();
        for (pi, &(pa, pb)) in panels.iter().enumerate() {
            for (tau, w) in gl.mapped(pa, pb) {
                tau_nodes.push(TauNode {
                    tau,
                    weight: w,
                    panel: pi,
                });
            }
        }

        // output points: t = 0, all interior nodes, all segment ends
        let mut outputs = Vec::new();
        for (si, seg) in segments.iter().enumerate() {
            for (ti, &t) in seg.times.iter().enumerate() {
                if ti == 0 && si > 0 {
                    continue; // right limits come from the jump identity
                }
                let row = factors.row(KernelVariant::General, t)?;
                let diag_panel = panels
                    .iter()
                    .position(|&(pa, pb)| t > pa && t < pb);
                let mut h_canonical = Vec::with_capacity(tau_nodes.len());
                for node in &tau_nodes {
                    if Some(node.panel) == diag_panel {
                        h_canonical.push(DMatrix::zeros(0, 0));
                    } else {
                        h_canonical.push(factors.eval(&row, node.tau)?);
                    }
                }
                let mut diag = Vec::new();
                if let Some(pi) = diag_panel {
                    let (pa, pb) = panels[pi];
                    for (half_a, half_b) in [(pa, t), (t, pb)] {
                        for (tau, w) in gl.mapped(half_a, half_b) {
                            diag.push((tau, w, factors.eval(&row, tau)?));
                        }
                    }
                }
                let mut impulse_term = DVector::<f64>::zeros(sys.dim());
                for imp in sys.schedule.in_window() {
                    impulse_term += factors.eval(&row, imp.tau)? * &imp.d;
                }
                outputs.push(OutputPoint {
                    t,
                    diag_panel,
                    h_canonical,
                    diag,
                    impulse_term,
                });
            }
        }

        Ok(PicardWorkspace {
            sys,
            quad,
            gl,
            segments,
            tau_nodes,
            outputs,
        })
    }

    /// The all-zero trajectory on this grid (initial Picard iterate).
    pub fn zero_trajectory(&self) -> PiecewiseTrajectory {
        let n = self.sys.dim();
        let segments = self
            .segments
            .iter()
            .map(|g| Segment {
                start: g.start,
                end: g.end,
                times: g.times.clone(),
                values: vec![DVector::zeros(n); g.times.len()],
                breaks: g.breaks.clone(),
            })
            .collect();
        PiecewiseTrajectory {
            dim: n,
            segments,
            jumps: Vec::new(),
        }
    }

    /// Trajectory sampled on this grid from a smooth state-valued function.
    pub fn trajectory_from_fn(
        &self,
        f: &dyn Fn(f64) -> DVector<f64>,
    ) -> PiecewiseTrajectory {
        let segments = self
            .segments
            .iter()
            .map(|g| Segment {
                start: g.start,
                end: g.end,
                times: g.times.clone(),
                values: g.times.iter().map(|&t| f(t)).collect(),
                breaks: g.breaks.clone(),
            })
            .collect();
        PiecewiseTrajectory {
            dim: self.sys.dim(),
            segments,
            jumps: Vec::new(),
        }
    }

    /// Right-hand side `f(t, y(t), z(t))` (semilinear) or `f(t)` (linear).
    fn rhs(&self, t: f64, y: &PiecewiseTrajectory) -> Result<DVector<f64>> {
        match (&self.sys.problem, &self.sys.forcing) {
            (Some(problem), _) => {
                let y_t = y.value(t)?;
                let lookup = |s: f64| -> DVector<f64> {
                    y.value(s.clamp(y.start(), y.end())).unwrap_or_else(|_| {
                        DVector::zeros(self.sys.dim())
                    })
                };
                let z = volterra_integral(
                    problem,
                    &self.sys.schedule,
                    &self.gl,
                    &self.quad,
                    t,
                    &y_t,
                    &lookup,
                )?;
                Ok((problem.f)(t, &y_t, &z))
            }
            (None, Some(forcing)) => Ok(forcing(t)),
            (None, None) => Ok(DVector::zeros(self.sys.dim())),
        }
    }

    /// One application of R to the trajectory `y`.
    pub fn apply(&self, y: &PiecewiseTrajectory) -> Result<PiecewiseTrajectory> {
        let n = self.sys.dim();
        // right-hand side at the canonical nodes, shared by all outputs
        let mut f_nodes = Vec::with_capacity(self.tau_nodes.len());
        for node in &self.tau_nodes {
            f_nodes.push(self.rhs(node.tau, y)?);
        }

        let mut out_values: Vec<DVector<f64>> = Vec::with_capacity(self.outputs.len());
        for out in &self.outputs {
            let mut acc = out.impulse_term.clone();
            for (j, node) in self.tau_nodes.iter().enumerate() {
                if Some(node.panel) == out.diag_panel {
                    continue;
                }
                acc.gemv(node.weight, &out.h_canonical[j], &f_nodes[j], 1.0);
            }
            for (tau, w, h) in &out.diag {
                let fv = self.rhs(*tau, y)?;
                acc.gemv(*w, h, &fv, 1.0);
            }
            if acc.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteState { t: out.t });
            }
            out_values.push(acc);
        }

        // assemble: outputs run [t0, nodes, end] for segment 0 and
        // [nodes, end] afterwards; starts of later segments come from jumps
        let mut segments = Vec::with_capacity(self.segments.len());
        let mut jumps = Vec::new();
        let mut cursor = 0usize;
        let mut carry: Option<DVector<f64>> = None;
        for (si, g) in self.segments.iter().enumerate() {
            let mut values = Vec::with_capacity(g.times.len());
            if si == 0 {
                values.push(out_values[cursor].clone());
                cursor += 1;
            } else {
                values.push(carry.take().expect("jump carry"));
            }
            for _ in 1..g.times.len() {
                values.push(out_values[cursor].clone());
                cursor += 1;
            }
            let left = values.last().unwrap().clone();
            if let Some(k) = g.end_impulse {
                let right =
                    &left + self.sys.schedule.b_ext(k) * &left + self.sys.schedule.d_ext(k);
                jumps.push(JumpRecord {
                    time: g.end,
                    impulse_index: k,
                    left,
                    right: right.clone(),
                });
                carry = Some(right);
            }
            segments.push(Segment {
                start: g.start,
                end: g.end,
                times: g.times.clone(),
                values,
                breaks: g.breaks.clone(),
            });
        }
        Ok(PiecewiseTrajectory {
            dim: n,
            segments,
            jumps,
        })
    }
}

/// Solve the forced linear problem through the boundary equation:
/// `y0 = G^-1 (int_0^omega T(omega-s) P_(s,omega) f(s) ds + sum_i T(omega-tau_i) P_(tau_i,omega) d_i)`,
/// then propagate from `y0` by direct simulation.
pub fn solve_linear_periodic(
    sys: &SystemSpec,
    quad: &QuadratureConfig,
) -> Result<PiecewiseTrajectory> {
    let forcing = sys.forcing.as_ref().ok_or_else(|| Error::InvalidSystem {
        reason: "solve_linear_periodic needs a linear system with forcing".into(),
    })?;
    let gap = sys.monodromy()?;
    let (integral, impulse) = forced_terms(
        &sys.a,
        &sys.schedule,
        Some(&**forcing),
        sys.omega(),
        quad,
    )?;
    let y0 = &gap.inverse * (integral + impulse);
    evolve_linear(&sys.a, &sys.schedule, &y0, &**forcing, sys.omega(), quad)
}

/// One application of the fixed-point operator R, sampled on the solver grid.
pub fn picard_apply(
    sys: &SystemSpec,
    y: &PiecewiseTrajectory,
    cfg: &PicardConfig,
) -> Result<PiecewiseTrajectory> {
    PicardWorkspace::new(sys, cfg.grid, cfg.quad)?.apply(y)
}

/// Picard iteration `y^0 = 0`, `y^{n+1} = R y^n`, with grid refinement until
/// two successive refinements agree within `tol / 4`.
pub fn solve_semilinear_picard(sys: &SystemSpec, cfg: &PicardConfig) -> Result<PicardSolution> {
    solve_picard_from(sys, cfg, None)
}

/// Same iteration from a caller-supplied initial trajectory.
pub fn solve_picard_from(
    sys: &SystemSpec,
    cfg: &PicardConfig,
    initial: Option<&PiecewiseTrajectory>,
) -> Result<PicardSolution> {
    let mut log = ConvergenceLog::default();
    let mut previous: Option<PiecewiseTrajectory> = None;
    let mut result: Option<PiecewiseTrajectory> = None;

    for level in 0..=cfg.max_grid_refinements {
        let panels = cfg.grid << level;
        log.grid_levels.push(panels);
        let ws = PicardWorkspace::new(sys, panels, cfg.quad)?;
        let mut y = match initial {
            Some(t0) => t0.clone(),
            None => ws.zero_trajectory(),
        };
        log.distances.clear();
        log.rates.clear();
        let mut converged = false;
        for it in 0..cfg.max_iter {
            let y_next = ws.apply(&y)?;
            let d = y_next.sup_distance(&y)?;
            if let Some(prev_d) = log.distances.last() {
                if *prev_d > 0.0 {
                    log.rates.push(d / prev_d);
                }
            }
            log.distances.push(d);
            log.sup_norm_max = log.sup_norm_max.max(y_next.sup_norm());
            y = y_next;
            log.iterations = it + 1;
            if d <= cfg.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            log.converged = false;
            let last = log.distances.last().copied().unwrap_or(f64::NAN);
            return Err(Error::NoConvergence {
                iterations: log.iterations,
                last_distance: last,
                log: Box::new(log),
            });
        }
        log.converged = true;
        if let Some(prev) = &previous {
            let agreement = prev.sup_distance(&y)?;
            log.grid_agreement = Some(agreement);
            if agreement <= cfg.tol / 4.0 {
                result = Some(y);
                break;
            }
        }
        previous = Some(y.clone());
        result = Some(y);
    }
    Ok(PicardSolution {
        trajectory: result.expect("at least one grid level runs"),
        log,
    })
}

/// Contraction and existence certificate for the fixed-point operator.
#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub m: f64,
    pub gamma: f64,
    pub c1: f64,
    pub c2: f64,
    pub bounds: BoundReport,
    pub bounds_commuting: BoundReport,
    /// Ball radius used for the Lipschitz constants.
    pub nu: f64,
    pub lipschitz_f: f64,
    pub lipschitz_g: f64,
    pub lipschitz_supplied: bool,
    /// Combined constant L = L_f (1 + omega L_g).
    pub l: f64,
    /// The literal parameterisation L = L_f + M1 L_g with M1 = omega L_f.
    pub m1: f64,
    pub lc2: f64,
    pub contraction_ok: bool,
    /// max_t |f(t, 0, int_0^t g(t,s,0) ds)| on [0, omega].
    pub f_zero_norm: f64,
    /// (|f|_0 C2 + C1) / (1 - L C2) when the contraction holds.
    pub norm_bound: Option<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub alpha_beta_supplied: bool,
    pub beta_c2: f64,
    pub schauder_ok: bool,
    /// (alpha C2 + C1) / (1 - beta C2) when the ball condition holds.
    pub ball_radius: Option<f64>,
    /// Whether the certified norm bound fits inside the nu-ball the
    /// Lipschitz constants were taken on.
    pub nu_consistent: bool,
}

fn random_in_ball(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> DVector<f64> {
    let dir = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let norm = dir.norm();
    if norm == 0.0 {
        return DVector::zeros(n);
    }
    let r: f64 = rng.gen_range(0.0..radius);
    dir * (r / norm)
}

/// Operator-norm estimate of a Jacobian by central differences.
fn jacobian_norm(
    f: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
    scale: f64,
) -> f64 {
    let n = x.len();
    let h = 1e-5 * scale.max(1.0);
    let fx_dim = f(x).len();
    let mut jac = DMatrix::<f64>::zeros(fx_dim, n);
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (f(&xp) - f(&xm)) / (2.0 * h);
        jac.set_column(j, &col);
    }
    crate::semigroup::op_norm(&jac)
}

struct LipschitzEstimate {
    l_f: f64,
    l_g: f64,
}

fn estimate_lipschitz(
    sys: &SystemSpec,
    problem: &VolterraProblem,
    nu: f64,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<LipschitzEstimate> {
    let n = sys.dim();
    let omega = sys.omega();
    let mut max_f_half = 0.0f64;
    let mut max_f = 0.0f64;
    let mut max_g_half = 0.0f64;
    let mut max_g = 0.0f64;
    for i in 0..samples {
        let t = rng.gen_range(0.0..omega);
        let y = random_in_ball(rng, n, nu);
        let z = random_in_ball(rng, n, nu);
        let fy = |v: &DVector<f64>| (problem.f)(t, v, &z);
        let fz = |v: &DVector<f64>| (problem.f)(t, &y, v);
        let local = jacobian_norm(&fy, &y, nu).max(jacobian_norm(&fz, &z, nu));
        max_f = max_f.max(local);
        let s = rng.gen_range(0.0..=t);
        let gy = |v: &DVector<f64>| (problem.g)(t, s, v);
        let local_g = jacobian_norm(&gy, &y, nu);
        max_g = max_g.max(local_g);
        if i + 1 == samples / 2 {
            max_f_half = max_f;
            max_g_half = max_g;
        }
    }
    // estimates must have stabilised over the second half of the samples
    for (half, full) in [(max_f_half, max_f), (max_g_half, max_g)] {
        if full > 0.0 && half > 0.0 && full / half > 1.5 {
            return Err(Error::LipschitzEstimateUnstable {
                spread: (full / half - 1.0) * 100.0,
            });
        }
    }
    Ok(LipschitzEstimate {
        l_f: 1.5 * max_f,
        l_g: 1.5 * max_g,
    })
}

/// Assemble the certificate: growth pair, closed-form bounds, Lipschitz
/// data, contraction and invariant-ball verdicts.
pub fn contraction_certificate(sys: &SystemSpec, nu: f64, seed: u64) -> Result<Certificate> {
    let omega = sys.omega();
    let growth = estimate_growth(&sys.a, 2.0 * omega, 64)?;
    certificate_with_growth(sys, nu, seed, &growth)
}

pub fn certificate_with_growth(
    sys: &SystemSpec,
    nu: f64,
    seed: u64,
    growth: &GrowthEstimate,
) -> Result<Certificate> {
    let omega = sys.omega();
    let bounds = bound_report(sys, growth, KernelVariant::General)?;
    let bounds_commuting = bound_report(sys, growth, KernelVariant::Commuting)?;
    let c1 = bounds.c1;
    let c2 = bounds.c2;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gl = GaussLegendre::new(8);
    let quad = QuadratureConfig::default();
    let zero = DVector::<f64>::zeros(sys.dim());
    let zero_lookup = |_s: f64| DVector::<f64>::zeros(sys.dim());

    let (l_f, l_g, lipschitz_supplied) = match &sys.problem {
        Some(problem) => match (problem.lipschitz_f, problem.lipschitz_g) {
            (Some(lf), Some(lg)) => (lf, lg, true),
            _ => {
                let est = estimate_lipschitz(sys, problem, nu, 200, &mut rng)?;
                (
                    problem.lipschitz_f.unwrap_or(est.l_f),
                    problem.lipschitz_g.unwrap_or(est.l_g),
                    false,
                )
            }
        },
        None => (0.0, 0.0, true),
    };
    let l = l_f * (1.0 + omega * l_g);
    let m1 = omega * l_f;

    // |f|_0 over a dense grid
    let mut f_zero_norm = 0.0f64;
    let grid_pts = 512;
    for i in 0..=grid_pts {
        let t = omega * i as f64 / grid_pts as f64;
        let value = match (&sys.problem, &sys.forcing) {
            (Some(problem), _) => {
                let z0 = volterra_integral(
                    problem,
                    &sys.schedule,
                    &gl,
                    &quad,
                    t,
                    &zero,
                    &zero_lookup,
                )?;
                (problem.f)(t, &zero, &z0)
            }
            (None, Some(forcing)) => forcing(t),
            (None, None) => zero.clone(),
        };
        f_zero_norm = f_zero_norm.max(value.norm());
    }

    let lc2 = l * c2;
    let contraction_ok = lc2 < 1.0;
    let norm_bound = contraction_ok.then(|| (f_zero_norm * c2 + c1) / (1.0 - lc2));

    let (alpha, beta, alpha_beta_supplied) = match &sys.problem {
        Some(problem) => match (problem.alpha, problem.beta) {
            (Some(a), Some(b)) => (a, b, true),
            _ => {
                // least-squares fit of |f| <= alpha + beta |y| over samples
                let mut pts = Vec::new();
                for _ in 0..200 {
                    let t = rng.gen_range(0.0..omega);
                    let y = random_in_ball(&mut rng, sys.dim(), nu);
                    let z = volterra_integral(
                        problem,
                        &sys.schedule,
                        &gl,
                        &quad,
                        t,
                        &y,
                        &|_s| y.clone(),
                    )?;
                    pts.push((y.norm(), (problem.f)(t, &y, &z).norm()));
                }
                let (a, b) = fit_affine_envelope(&pts);
                (a, b, false)
            }
        },
        None => (f_zero_norm, 0.0, true),
    };
    let beta_c2 = beta * c2;
    let schauder_ok = beta_c2 < 1.0;
    let ball_radius = schauder_ok.then(|| (alpha * c2 + c1) / (1.0 - beta_c2));
    let nu_consistent = matches!(norm_bound, Some(b) if b <= nu);

    Ok(Certificate {
        m: growth.m,
        gamma: growth.gamma,
        c1,
        c2,
        bounds,
        bounds_commuting,
        nu,
        lipschitz_f: l_f,
        lipschitz_g: l_g,
        lipschitz_supplied,
        l,
        m1,
        lc2,
        contraction_ok,
        f_zero_norm,
        norm_bound,
        alpha,
        beta,
        alpha_beta_supplied,
        beta_c2,
        schauder_ok,
        ball_radius,
        nu_consistent,
    })
}

/// Least-squares affine envelope through (|y|, |f|) samples, clamped
/// nonnegative and shifted up so every sample satisfies it.
pub fn fit_affine_envelope(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    let mut beta = if denom.abs() > 1e-12 {
        ((n * sxy - sx * sy) / denom).max(0.0)
    } else {
        0.0
    };
    let mut alpha = ((sy - beta * sx) / n).max(0.0);
    // lift to an envelope
    let deficit = pts
        .iter()
        .map(|&(x, y)| y - (alpha + beta * x))
        .fold(0.0f64, f64::max);
    alpha += deficit.max(0.0);
    if !alpha.is_finite() || !beta.is_finite() {
        alpha = f64::INFINITY;
        beta = f64::INFINITY;
    }
    (alpha, beta)
}

#[derive(Debug, Clone, Serialize)]
pub struct BallCheckReport {
    /// Invariant-ball radius l = (alpha C2 + C1) / (1 - beta C2).
    pub radius: f64,
    pub samples: usize,
    pub violations: usize,
    /// max over samples of |R y| / l.
    pub max_ratio: f64,
    pub passed: bool,
}

/// Empirically verify `R(B_l) ⊆ B_l` on random trajectories with sup-norm
/// at most `l`.
pub fn existence_ball(
    sys: &SystemSpec,
    cert: &Certificate,
    samples: usize,
    cfg: &PicardConfig,
) -> Result<BallCheckReport> {
    let radius = cert.ball_radius.ok_or_else(|| Error::InvalidSystem {
        reason: format!(
            "existence ball requires beta C2 < 1 (got beta C2 = {})",
            cert.beta_c2
        ),
    })?;
    let ws = PicardWorkspace::new(sys, cfg.grid, cfg.quad)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_ba11);
    let omega = sys.omega();
    let n = sys.dim();
    let tol = 1e-9;
    let mut violations = 0usize;
    let mut max_ratio = 0.0f64;
    for _ in 0..samples {
        // smooth random trajectory scaled to sup-norm <= radius
        let c: Vec<DVector<f64>> = (0..4).map(|_| random_in_ball(&mut rng, n, 1.0)).collect();
        let shape = {
            let c = c.clone();
            move |t: f64| -> DVector<f64> {
                let w = 2.0 * std::f64::consts::PI * t / omega;
                &c[0] + &c[1] * w.sin() + &c[2] * w.cos() + &c[3] * (2.0 * w).sin()
            }
        };
        let target: f64 = rng.gen_range(0.0..0.995 * radius);
        let unscaled = ws.trajectory_from_fn(&shape);
        let sup = unscaled.sup_norm();
        let scale = if sup > 0.0 { target / sup } else { 0.0 };
        let traj = ws.trajectory_from_fn(&|t| shape(t) * scale);
        let image = ws.apply(&traj)?;
        let norm = image.sup_norm();
        max_ratio = max_ratio.max(norm / radius);
        if norm > radius * (1.0 + tol) {
            violations += 1;
        }
    }
    Ok(BallCheckReport {
        radius,
        samples,
        violations,
        max_ratio,
        passed: violations == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{Impulse, ImpulseSchedule};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn scalar_linear(
        a: f64,
        rho: f64,
        omega: f64,
        imps: &[(f64, f64, f64)],
        forcing: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> SystemSpec {
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
        SystemSpec::linear(
            DMatrix::from_element(1, 1, a),
            sched,
            Arc::new(move |t| DVector::from_element(1, forcing(t))),
        )
        .unwrap()
    }

    #[test]
    fn linear_periodic_forced_closed_form() {
        // a = 0, rho = 2, omega = 1, f = 1  =>  y(t) = 1 + t.
        let sys = scalar_linear(0.0, 2.0, 1.0, &[], |_| 1.0);
        let traj = solve_linear_periodic(&sys, &QuadratureConfig::default()).unwrap();
        for t in [0.0, 0.25, 0.6, 1.0] {
            assert_relative_eq!(traj.value(t).unwrap()[0], 1.0 + t, max_relative = 1e-11);
        }
        assert_relative_eq!(
            traj.final_left()[0],
            2.0 * traj.initial()[0],
            max_relative = 1e-11
        );
    }

    #[test]
    fn linear_periodic_impulse_closed_form() {
        // a = 0, rho = 3, impulse (0.5, b = 1, d = 1), f = 0:
        // y0 = d/(rho - 1 - b) = 1, y = 1 on [0, .5], 3 on (.5, 1].
        let sys = scalar_linear(0.0, 3.0, 1.0, &[(0.5, 1.0, 1.0)], |_| 0.0);
        let traj = solve_linear_periodic(&sys, &QuadratureConfig::default()).unwrap();
        assert_relative_eq!(traj.initial()[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(traj.value(0.3).unwrap()[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(traj.value(0.9).unwrap()[0], 3.0, max_relative = 1e-12);
        assert_relative_eq!(traj.final_left()[0], 3.0, max_relative = 1e-12);
    }

    #[test]
    fn linear_periodic_trivial_solution() {
        let sys = scalar_linear(0.0, 2.0, 1.0, &[(0.5, 0.5, 0.0)], |_| 0.0);
        let traj = solve_linear_periodic(&sys, &QuadratureConfig::default()).unwrap();
        assert!(traj.sup_norm() < 1e-13);
    }

    #[test]
    fn picard_apply_matches_linear_solver_for_constant_f() {
        let sys = scalar_linear(0.0, 2.0, 1.0, &[], |_| 1.0);
        let cfg = PicardConfig::default();
        let ws = PicardWorkspace::new(&sys, cfg.grid, cfg.quad).unwrap();
        let any = ws.zero_trajectory();
        let ry = ws.apply(&any).unwrap();
        let direct = solve_linear_periodic(&sys, &cfg.quad).unwrap();
        for t in [0.0, 0.3, 0.7, 1.0] {
            assert_relative_eq!(
                ry.value(t).unwrap()[0],
                direct.value(t).unwrap()[0],
                max_relative = 1e-10
            );
        }
        // R is constant in y for linear systems
        let ry2 = ws.apply(&ry).unwrap();
        assert!(ry2.sup_distance(&ry).unwrap() < 1e-12);
    }

    #[test]
    fn picard_fixed_point_self_consistency() {
        // y(t) = 1 + t is the fixed point for the rho = 2 forced problem.
        let sys = scalar_linear(0.0, 2.0, 1.0, &[], |_| 1.0);
        let ws = PicardWorkspace::new(&sys, 4, QuadratureConfig::default()).unwrap();
        let fixed = ws.trajectory_from_fn(&|t| DVector::from_element(1, 1.0 + t));
        let image = ws.apply(&fixed).unwrap();
        assert!(image.sup_distance(&fixed).unwrap() < 1e-11);
    }

    #[test]
    fn workspace_kernel_matches_direct_eval() {
        use crate::kernel::kernel_h;
        let sys = scalar_linear(0.4, 2.5, 1.0, &[(0.3, 0.5, 0.7), (0.8, -0.25, 0.2)], |_| 0.0);
        let mut factors = KernelFactors::new(&sys).unwrap();
        for &t in &[0.1, 0.3, 0.55, 0.9, 1.0] {
            let row = factors.row(KernelVariant::General, t).unwrap();
            for &tau in &[0.05, 0.3, 0.45, 0.8, 0.95] {
                let fast = factors.eval(&row, tau).unwrap();
                let direct = kernel_h(&sys, t, tau).unwrap().value;
                assert!(
                    crate::semigroup::op_norm(&(&fast - &direct)) < 1e-11,
                    "mismatch at t={t}, tau={tau}"
                );
            }
        }
    }

    #[test]
    fn picard_converges_on_contractive_sine() {
        // rho = I, a = -1, f = eps sin(y) + 1, certified contraction.
        let sched = ImpulseSchedule::new(1.0, DMatrix::identity(1, 1), vec![]).unwrap();
        let eps = 0.2;
        let problem = VolterraProblem {
            f: Arc::new(move |_t: f64, y: &DVector<f64>, _z: &DVector<f64>| {
                DVector::from_element(1, eps * y[0].sin() + 1.0)
            }),
            g: Arc::new(|_t: f64, _s: f64, _y: &DVector<f64>| DVector::zeros(1)),
            lipschitz_f: Some(eps),
            lipschitz_g: Some(0.0),
            alpha: Some(1.0 + eps),
            beta: Some(0.0),
            nu_max: 50.0,
            arg: Default::default(),
        };
        let sys = SystemSpec::semilinear(DMatrix::from_element(1, 1, -1.0), sched, problem)
            .unwrap();
        let cfg = PicardConfig::default();
        let sol = solve_semilinear_picard(&sys, &cfg).unwrap();
        assert!(sol.log.converged);
        // fixed-point residual
        let ws = PicardWorkspace::new(&sys, cfg.grid, cfg.quad).unwrap();
        let image = ws.apply(&sol.trajectory).unwrap();
        assert!(image.sup_distance(&sol.trajectory).unwrap() <= 10.0 * cfg.tol);
        // boundary identity y(omega) = rho y(0)
        let y0 = sol.trajectory.initial();
        let yw = sol.trajectory.final_left();
        assert!((yw - y0).norm() <= 1e-9 * (1.0 + y0.norm()));
        // certificate accepts and bounds the solution
        let cert = contraction_certificate(&sys, 10.0, 7).unwrap();
        assert!(cert.contraction_ok);
        let bound = cert.norm_bound.unwrap();
        assert!(sol.trajectory.sup_norm() <= bound * 1.01);
    }

    #[test]
    fn certificate_zero_nonlinearity() {
        let sched = ImpulseSchedule::new(
            1.0,
            DMatrix::from_element(1, 1, 3.0),
            vec![Impulse {
                tau: 0.5,
                b: DMatrix::from_element(1, 1, 1.0),
                d: DVector::from_element(1, 1.0),
            }],
        )
        .unwrap();
        let problem = VolterraProblem {
            f: Arc::new(|_t: f64, _y: &DVector<f64>, _z: &DVector<f64>| DVector::zeros(1)),
            g: Arc::new(|_t: f64, _s: f64, _y: &DVector<f64>| DVector::zeros(1)),
            lipschitz_f: Some(0.0),
            lipschitz_g: Some(0.0),
            alpha: Some(0.0),
            beta: Some(0.0),
            nu_max: 10.0,
            arg: Default::default(),
        };
        let sys =
            SystemSpec::semilinear(DMatrix::zeros(1, 1), sched, problem).unwrap();
        let cert = contraction_certificate(&sys, 5.0, 3).unwrap();
        assert!(cert.contraction_ok);
        assert_eq!(cert.l, 0.0);
        assert_eq!(cert.f_zero_norm, 0.0);
        // norm bound reduces to C1
        assert_relative_eq!(cert.norm_bound.unwrap(), cert.c1, max_relative = 1e-13);
        // f == 0, alpha = beta = 0: ball radius = C1 and R maps into it
        assert!(cert.schauder_ok);
        assert_relative_eq!(cert.ball_radius.unwrap(), cert.c1, max_relative = 1e-13);
        let report = existence_ball(&sys, &cert, 20, &PicardConfig::default()).unwrap();
        assert!(report.passed, "violations: {}", report.violations);
    }

    #[test]
    fn existence_ball_rejected_without_schauder() {
        let sched = ImpulseSchedule::new(1.0, DMatrix::from_element(1, 1, 2.0), vec![]).unwrap();
        let problem = VolterraProblem {
            f: Arc::new(|_t: f64, y: &DVector<f64>, _z: &DVector<f64>| y.clone()),
            g: Arc::new(|_t: f64, _s: f64, _y: &DVector<f64>| DVector::zeros(1)),
            lipschitz_f: Some(1.0),
            lipschitz_g: Some(0.0),
            alpha: Some(0.0),
            beta: Some(1.0),
            nu_max: 10.0,
            arg: Default::default(),
        };
        let sys = SystemSpec::semilinear(DMatrix::zeros(1, 1), sched, problem).unwrap();
        let cert = contraction_certificate(&sys, 5.0, 3).unwrap();
        // beta C2 = 1 * 2 = 2 >= 1
        assert!(!cert.schauder_ok);
        assert!(existence_ball(&sys, &cert, 5, &PicardConfig::default()).is_err());
    }
}
