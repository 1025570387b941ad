//! Problem configuration: versioned JSON schema, validation, and lowering
//! into a `SystemSpec`.

use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use orps_core::{
    Impulse, ImpulseSchedule, PicardConfig, QuadratureConfig, StepConfig, SystemSpec, VolterraArg,
    VolterraProblem,
};

use crate::expr;

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub schema: u64,
    #[serde(default)]
    pub name: String,
    pub dimension: usize,
    /// Generator A, row-major.
    pub a: Vec<Vec<f64>>,
    pub omega: f64,
    pub rho: Vec<Vec<f64>>,
    /// Scalar multiplier applied to rho (sweepable knob).
    #[serde(default = "one")]
    pub rho_scale: f64,
    #[serde(default)]
    pub impulses: Vec<ImpulseConfig>,
    pub nonlinearity: Nonlinearity,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

fn one() -> f64 {
    1.0
}

fn default_nu() -> f64 {
    100.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImpulseConfig {
    pub tau: f64,
    pub b: Vec<Vec<f64>>,
    pub d: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Nonlinearity {
    /// Linear problem with explicit forcing, one expression per component.
    None { forcing: Vec<String> },
    /// Named nonlinearity with scalar parameters.
    Builtin {
        name: String,
        #[serde(default)]
        params: serde_json::Map<String, serde_json::Value>,
    },
    /// Coefficient tensors: f = f_const + F_y y + F_z z (+ quadratic),
    /// g = g_const + G_y y.
    Polynomial {
        #[serde(default)]
        f_const: Vec<f64>,
        #[serde(default)]
        f_y: Vec<Vec<f64>>,
        #[serde(default)]
        f_z: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        f_yy: Option<Vec<Vec<Vec<f64>>>>,
        #[serde(default)]
        g_const: Vec<f64>,
        #[serde(default)]
        g_y: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lipschitz_f: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lipschitz_g: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Quadrature panels per impulse-free segment.
    pub grid: usize,
    pub quad_nodes: usize,
    pub volterra_arg: VolterraArg,
    pub max_grid_refinements: u32,
    pub step_h: f64,
    pub step_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-10,
            max_iter: 80,
            grid: 4,
            quad_nodes: 8,
            volterra_arg: VolterraArg::AtT,
            max_grid_refinements: 2,
            step_h: 1e-3,
            step_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub params: Vec<SweepParam>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepParam {
    /// JSON pointer into the config, e.g. "/nonlinearity/params/eps".
    pub pointer: String,
    pub values: Vec<f64>,
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ProblemConfig = serde_json::from_str(text).context("config parse")?;
        if cfg.schema != SCHEMA_VERSION {
            bail!("unsupported schema version {} (expected {SCHEMA_VERSION})", cfg.schema);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dimension;
        if n == 0 {
            bail!("dimension must be positive");
        }
        check_matrix("a", &self.a, n)?;
        check_matrix("rho", &self.rho, n)?;
        if !(self.omega > 0.0) {
            bail!("omega must be positive, got {}", self.omega);
        }
        for (k, imp) in self.impulses.iter().enumerate() {
            check_matrix(&format!("impulses[{k}].b"), &imp.b, n)?;
            if imp.d.len() != n {
                bail!("impulses[{k}].d must have {n} entries");
            }
        }
        match &self.nonlinearity {
            Nonlinearity::None { forcing } => {
                if forcing.len() != n {
                    bail!("nonlinearity.forcing needs {n} expressions, got {}", forcing.len());
                }
                for (i, src) in forcing.iter().enumerate() {
                    let e = expr::parse(src, n)
                        .with_context(|| format!("nonlinearity.forcing[{i}]"))?;
                    if e.uses_state() {
                        bail!("nonlinearity.forcing[{i}] must depend on t only");
                    }
                }
            }
            Nonlinearity::Builtin { name, .. } => {
                if !matches!(name.as_str(), "sin" | "volterra_linear") {
                    bail!("unknown builtin nonlinearity {name:?}");
                }
            }
            Nonlinearity::Polynomial { f_y, f_z, g_y, .. } => {
                for (what, m) in [("f_y", f_y), ("f_z", f_z), ("g_y", g_y)] {
                    if !m.is_empty() {
                        check_matrix(what, m, n)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn rho_matrix(&self) -> DMatrix<f64> {
        to_matrix(&self.rho) * self.rho_scale
    }

    /// Lower the configuration into a system specification.
    pub fn build_system(&self) -> Result<SystemSpec> {
        let n = self.dimension;
        let a = to_matrix(&self.a);
        let impulses: Vec<Impulse> = self
            .impulses
            .iter()
            .map(|imp| Impulse {
                tau: imp.tau,
                b: to_matrix(&imp.b),
                d: DVector::from_row_slice(&imp.d),
            })
            .collect();
        let schedule = ImpulseSchedule::new(self.omega, self.rho_matrix(), impulses)
            .map_err(|e| anyhow!("schedule: {e}"))?;
        match &self.nonlinearity {
            Nonlinearity::None { forcing } => {
                let exprs: Vec<expr::Expr> = forcing
                    .iter()
                    .map(|src| expr::parse(src, n))
                    .collect::<Result<_>>()?;
                let f = move |t: f64| -> DVector<f64> {
                    DVector::from_fn(exprs.len(), |i, _| exprs[i].eval(t, &[], &[]))
                };
                SystemSpec::linear(a, schedule, Arc::new(f)).map_err(|e| anyhow!("{e}"))
            }
            Nonlinearity::Builtin { name, params } => {
                let problem = self.builtin_problem(name, params)?;
                SystemSpec::semilinear(a, schedule, problem).map_err(|e| anyhow!("{e}"))
            }
            Nonlinearity::Polynomial {
                f_const,
                f_y,
                f_z,
                f_yy,
                g_const,
                g_y,
                lipschitz_f,
                lipschitz_g,
                alpha,
                beta,
            } => {
                let n = self.dimension;
                let fc = vec_or_zero(f_const, n);
                let fy = mat_or_zero(f_y, n);
                let fz = mat_or_zero(f_z, n);
                let fyy = f_yy.clone();
                let gc = vec_or_zero(g_const, n);
                let gy = mat_or_zero(g_y, n);
                let f = move |_t: f64, y: &DVector<f64>, z: &DVector<f64>| -> DVector<f64> {
                    let mut out = &fc + &fy * y + &fz * z;
                    if let Some(q) = &fyy {
                        for i in 0..out.len() {
                            let mut acc = 0.0;
                            for (j, row) in q[i].iter().enumerate() {
                                for (k, c) in row.iter().enumerate() {
                                    acc += c * y[j] * y[k];
                                }
                            }
                            out[i] += acc;
                        }
                    }
                    out
                };
                let g = move |_t: f64, _s: f64, y: &DVector<f64>| -> DVector<f64> { &gc + &gy * y };
                let mut problem = VolterraProblem::new(Arc::new(f), Arc::new(g));
                problem.lipschitz_f = *lipschitz_f;
                problem.lipschitz_g = *lipschitz_g;
                problem.alpha = *alpha;
                problem.beta = *beta;
                problem.nu_max = self.nu;
                problem.arg = self.solver.volterra_arg;
                SystemSpec::semilinear(a, schedule, problem).map_err(|e| anyhow!("{e}"))
            }
        }
    }

    fn builtin_problem(
        &self,
        name: &str,
        params: &serde_json::Map<String, serde_json::Value>,
    ) -> Result<VolterraProblem> {
        let n = self.dimension;
        let get = |key: &str, default: f64| -> f64 {
            params.get(key).and_then(|v| v.as_f64()).unwrap_or(default)
        };
        match name {
            // f_i = eps sin(y_i) + offset_i, g = 0
            "sin" => {
                let eps = get("eps", 0.1);
                let offset: Vec<f64> = params
                    .get("offset")
                    .and_then(|v| v.as_array())
                    .map(|a| a.iter().filter_map(|x| x.as_f64()).collect())
                    .unwrap_or_else(|| vec![0.0; n]);
                if offset.len() != n {
                    bail!("builtin sin: offset needs {n} entries");
                }
                let off = DVector::from_row_slice(&offset);
                let off_norm = off.norm();
                let f = move |_t: f64, y: &DVector<f64>, _z: &DVector<f64>| -> DVector<f64> {
                    DVector::from_fn(y.len(), |i, _| eps * y[i].sin() + off[i])
                };
                let mut problem = VolterraProblem::new(
                    Arc::new(f),
                    Arc::new(|_t: f64, _s: f64, y: &DVector<f64>| DVector::zeros(y.len())),
                );
                problem.lipschitz_f = Some(eps.abs());
                problem.lipschitz_g = Some(0.0);
                problem.alpha = Some(off_norm + eps.abs() * (n as f64).sqrt());
                problem.beta = Some(0.0);
                problem.nu_max = self.nu;
                problem.arg = self.solver.volterra_arg;
                Ok(problem)
            }
            // f = lambda z with the zero-mean periodic kernel
            // g(t, s, y) = cos(2 pi s / omega) y, so the memory integral is
            // itself (omega, rho)-compatible
            "volterra_linear" => {
                let lambda = get("lambda", 0.1);
                let omega = self.omega;
                let f = move |_t: f64, _y: &DVector<f64>, z: &DVector<f64>| -> DVector<f64> {
                    z * lambda
                };
                let g = move |_t: f64, s: f64, y: &DVector<f64>| -> DVector<f64> {
                    y * (2.0 * std::f64::consts::PI * s / omega).cos()
                };
                let mut problem = VolterraProblem::new(Arc::new(f), Arc::new(g));
                problem.lipschitz_f = Some(lambda.abs());
                problem.lipschitz_g = Some(1.0);
                problem.alpha = Some(0.0);
                problem.beta = Some(lambda.abs() * self.omega / (2.0 * std::f64::consts::PI));
                problem.nu_max = self.nu;
                problem.arg = self.solver.volterra_arg;
                Ok(problem)
            }
            _ => bail!("unknown builtin nonlinearity {name:?}"),
        }
    }

    pub fn picard_config(&self) -> PicardConfig {
        PicardConfig {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            grid: self.solver.grid,
            quad: QuadratureConfig {
                nodes_per_panel: self.solver.quad_nodes,
                max_panel_fraction: 0.25,
            },
            max_grid_refinements: self.solver.max_grid_refinements,
            seed: self.seed,
        }
    }

    pub fn step_config(&self) -> StepConfig {
        StepConfig {
            h: self.solver.step_h,
            tol: self.solver.step_tol,
            max_halvings: 40,
        }
    }
}

fn check_matrix(what: &str, m: &[Vec<f64>], n: usize) -> Result<()> {
    if m.len() != n || m.iter().any(|row| row.len() != n) {
        bail!("{what} must be a {n}x{n} row-major matrix");
    }
    if m.iter().flatten().any(|x| !x.is_finite()) {
        bail!("{what} contains non-finite entries");
    }
    Ok(())
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

fn vec_or_zero(v: &[f64], n: usize) -> DVector<f64> {
    if v.is_empty() {
        DVector::zeros(n)
    } else {
        DVector::from_row_slice(v)
    }
}

fn mat_or_zero(m: &[Vec<f64>], n: usize) -> DMatrix<f64> {
    if m.is_empty() {
        DMatrix::zeros(n, n)
    } else {
        to_matrix(m)
    }
}
