//! The full problem instance: generator, impulse schedule, periodicity
//! operator, and either an explicit forcing (linear case) or a semilinear
//! Volterra right-hand side.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::flow::{ForcingFn, VolterraProblem};
use crate::schedule::ImpulseSchedule;
use crate::semigroup::{check_commute, expm, invert_monodromy_gap, CommuteCheck, MonodromyGap};

#[derive(Clone)]
pub struct SystemSpec {
    pub a: DMatrix<f64>,
    pub schedule: ImpulseSchedule,
    /// Semilinear right-hand side; absent for linear problems.
    pub problem: Option<VolterraProblem>,
    /// Explicit forcing of the linear problem; only its restriction to
    /// `[0, omega]` is used, the rest follows from the periodic extension.
    pub forcing: Option<Arc<ForcingFn>>,
}

impl std::fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SystemSpec")
            .field("dim", &self.dim())
            .field("omega", &self.omega())
            .field("impulses", &self.schedule.len())
            .field("semilinear", &self.problem.is_some())
            .finish()
    }
}

impl SystemSpec {
    fn check_generator(a: &DMatrix<f64>, schedule: &ImpulseSchedule) -> Result<()> {
        if a.nrows() != a.ncols() {
            return Err(Error::NonSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "generator A".into(),
            });
        }
        if a.nrows() != schedule.dim() {
            return Err(Error::DimensionMismatch {
                what: "generator A vs schedule".into(),
                expected: schedule.dim(),
                found: a.nrows(),
            });
        }
        Ok(())
    }

    /// Linear problem `y' = A y + f(t)`.
    pub fn linear(
        a: DMatrix<f64>,
        schedule: ImpulseSchedule,
        forcing: Arc<ForcingFn>,
    ) -> Result<Self> {
        Self::check_generator(&a, &schedule)?;
        let probe = forcing(0.5 * schedule.omega());
        if probe.len() != schedule.dim() {
            return Err(Error::DimensionMismatch {
                what: "forcing output".into(),
                expected: schedule.dim(),
                found: probe.len(),
            });
        }
        Ok(SystemSpec {
            a,
            schedule,
            problem: None,
            forcing: Some(forcing),
        })
    }

    /// Homogeneous linear problem `y' = A y`.
    pub fn homogeneous(a: DMatrix<f64>, schedule: ImpulseSchedule) -> Result<Self> {
        let n = schedule.dim();
        Self::linear(a, schedule, Arc::new(move |_t| DVector::zeros(n)))
    }

    /// Semilinear problem `y' = A y + f(t, y, int_0^t g(t,s,y(t)) ds)`.
    pub fn semilinear(
        a: DMatrix<f64>,
        schedule: ImpulseSchedule,
        problem: VolterraProblem,
    ) -> Result<Self> {
        Self::check_generator(&a, &schedule)?;
        let n = schedule.dim();
        let zero = DVector::zeros(n);
        let gp = (problem.g)(0.5 * schedule.omega(), 0.25 * schedule.omega(), &zero);
        if gp.len() != n {
            return Err(Error::DimensionMismatch {
                what: "Volterra kernel g output".into(),
                expected: n,
                found: gp.len(),
            });
        }
        let fp = (problem.f)(0.5 * schedule.omega(), &zero, &zero);
        if fp.len() != n {
            return Err(Error::DimensionMismatch {
                what: "nonlinearity f output".into(),
                expected: n,
                found: fp.len(),
            });
        }
        Ok(SystemSpec {
            a,
            schedule,
            problem: Some(problem),
            forcing: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.schedule.dim()
    }

    pub fn omega(&self) -> f64 {
        self.schedule.omega()
    }

    pub fn rho(&self) -> &DMatrix<f64> {
        self.schedule.rho()
    }

    pub fn is_linear(&self) -> bool {
        self.problem.is_none()
    }

    /// `T(omega)`.
    pub fn t_omega(&self) -> Result<DMatrix<f64>> {
        expm(&self.a, self.omega(), 1e-13)
    }

    /// The gap operator `rho - T(omega) prod (E + B_k)` with its inverse.
    pub fn monodromy(&self) -> Result<MonodromyGap> {
        let t_omega = self.t_omega()?;
        let prod = self.schedule.transition_product(0.0, self.omega())?;
        invert_monodromy_gap(self.rho(), &t_omega, &prod)
    }

    /// Commutation residuals for the pairs required by the standing
    /// assumptions: (A, B_k) and (rho, A), (rho, B_k).
    pub fn commutation_residuals(&self, tol: f64) -> Result<Vec<(String, CommuteCheck)>> {
        let mut out = Vec::new();
        for (k, imp) in self.schedule.in_window().iter().enumerate() {
            out.push((
                format!("A vs B_{}", k + 1),
                check_commute(&self.a, &imp.b, tol)?,
            ));
        }
        out.push((
            "rho vs A".to_string(),
            check_commute(self.rho(), &self.a, tol)?,
        ));
        for (k, imp) in self.schedule.in_window().iter().enumerate() {
            out.push((
                format!("rho vs B_{}", k + 1),
                check_commute(self.rho(), &imp.b, tol)?,
            ));
        }
        Ok(out)
    }

    /// Linear forcing extended beyond `[0, omega]` by the periodicity rule
    /// `f(t + omega) = rho f(t)`.
    pub fn extended_forcing(&self, t: f64) -> Result<DVector<f64>> {
        let f = self.forcing.as_ref().ok_or_else(|| Error::InvalidSystem {
            reason: "extended_forcing requires a linear system".into(),
        })?;
        let omega = self.omega();
        let mut s = t;
        let mut wraps = 0u32;
        while s > omega {
            s -= omega;
            wraps += 1;
        }
        let mut v = f(s);
        for _ in 0..wraps {
            v = self.rho() * v;
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::Impulse;
    use approx::assert_relative_eq;

    #[test]
    fn dimension_checks() {
        let sched = ImpulseSchedule::new(1.0, DMatrix::identity(2, 2), vec![]).unwrap();
        let bad = DMatrix::<f64>::zeros(3, 3);
        assert!(SystemSpec::homogeneous(bad, sched.clone()).is_err());
        let ok = SystemSpec::homogeneous(DMatrix::zeros(2, 2), sched).unwrap();
        assert_eq!(ok.dim(), 2);
    }

    #[test]
    fn forcing_extension_applies_rho() {
        let sched = ImpulseSchedule::new(1.0, DMatrix::from_element(1, 1, 2.0), vec![]).unwrap();
        let sys = SystemSpec::linear(
            DMatrix::zeros(1, 1),
            sched,
            Arc::new(|t| DVector::from_element(1, 1.0 + t)),
        )
        .unwrap();
        assert_relative_eq!(sys.extended_forcing(0.5).unwrap()[0], 1.5);
        assert_relative_eq!(sys.extended_forcing(1.5).unwrap()[0], 3.0); // 2 * (1 + 0.5)
    }

    #[test]
    fn commutation_residuals_flag_noncommuting_rho() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let rho = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let sched = ImpulseSchedule::new(
            1.0,
            rho,
            vec![Impulse {
                tau: 0.5,
                b,
                d: DVector::zeros(2),
            }],
        )
        .unwrap();
        let sys = SystemSpec::homogeneous(DMatrix::identity(2, 2) * 0.3, sched).unwrap();
        let res = sys.commutation_residuals(1e-10).unwrap();
        let rho_b = res.iter().find(|(n, _)| n == "rho vs B_1").unwrap();
        assert!(!rho_b.1.commutes);
        let a_b = res.iter().find(|(n, _)| n == "A vs B_1").unwrap();
        assert!(a_b.1.commutes);
    }
}
