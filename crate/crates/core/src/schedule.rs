//! Impulse schedule bookkeeping: the in-period impulse triples
//! `(tau_k, B_k, d_k)`, the periodic extension rule
//! `tau_{k+m} = tau_k + omega`, `B_{k+m} = B_k`, `d_{k+m} = rho d_k`,
//! the counting function `i(s, t)` and ordered transition products.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One impulse triple: at time `tau` the state jumps by `B y + d`.
#[derive(Debug, Clone)]
pub struct Impulse {
    pub tau: f64,
    pub b: DMatrix<f64>,
    pub d: DVector<f64>,
}

/// The m in-period impulses together with the periodicity operator used by
/// the extension rule. Impulse times live strictly inside `(0, omega)`;
/// impulses at 0 or omega are rejected to avoid double counting under the
/// periodic extension.
#[derive(Debug, Clone)]
pub struct ImpulseSchedule {
    omega: f64,
    rho: DMatrix<f64>,
    impulses: Vec<Impulse>,
    /// Explicit impulses for the window `(omega, 2 omega)`. When absent the
    /// extension rule generates them. Supplying values that differ from the
    /// rule models a broken extension; the verifier flags it.
    second_window: Option<Vec<Impulse>>,
}

impl ImpulseSchedule {
    pub fn new(omega: f64, rho: DMatrix<f64>, impulses: Vec<Impulse>) -> Result<Self> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::InvalidSchedule {
                reason: format!("period omega = {omega} must be positive and finite"),
            });
        }
        if rho.nrows() != rho.ncols() {
            return Err(Error::NonSquare {
                rows: rho.nrows(),
                cols: rho.ncols(),
            });
        }
        let n = rho.nrows();
        let mut prev = 0.0;
        for (k, imp) in impulses.iter().enumerate() {
            if !(imp.tau > 0.0 && imp.tau < omega) {
                return Err(Error::InvalidSchedule {
                    reason: format!(
                        "impulse {k} at tau = {} must lie strictly inside (0, {omega})",
                        imp.tau
                    ),
                });
            }
            if imp.tau <= prev {
                return Err(Error::InvalidSchedule {
                    reason: format!("impulse times must be strictly increasing (index {k})"),
                });
            }
            prev = imp.tau;
            if imp.b.nrows() != n || imp.b.ncols() != n {
                return Err(Error::DimensionMismatch {
                    what: format!("impulse {k} matrix B"),
                    expected: n,
                    found: imp.b.nrows(),
                });
            }
            if imp.d.len() != n {
                return Err(Error::DimensionMismatch {
                    what: format!("impulse {k} offset d"),
                    expected: n,
                    found: imp.d.len(),
                });
            }
            if imp.b.iter().any(|x| !x.is_finite()) || imp.d.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    what: format!("impulse {k}"),
                });
            }
        }
        Ok(ImpulseSchedule {
            omega,
            rho,
            impulses,
            second_window: None,
        })
    }

    /// Override the impulses of the window `(omega, 2 omega)`.
    pub fn with_second_window(mut self, impulses: Vec<Impulse>) -> Result<Self> {
        if impulses.len() != self.impulses.len() {
            return Err(Error::InvalidSchedule {
                reason: format!(
                    "second window must hold {} impulses, got {}",
                    self.impulses.len(),
                    impulses.len()
                ),
            });
        }
        let mut prev = self.omega;
        for (k, imp) in impulses.iter().enumerate() {
            if !(imp.tau > self.omega && imp.tau < 2.0 * self.omega) || imp.tau <= prev {
                return Err(Error::InvalidSchedule {
                    reason: format!(
                        "second-window impulse {k} at tau = {} out of order or outside (omega, 2 omega)",
                        imp.tau
                    ),
                });
            }
            prev = imp.tau;
        }
        self.second_window = Some(impulses);
        Ok(self)
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn rho(&self) -> &DMatrix<f64> {
        &self.rho
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    /// Number of impulses per period, m = i(0, omega).
    pub fn len(&self) -> usize {
        self.impulses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.impulses.is_empty()
    }

    /// The in-period impulses.
    pub fn in_window(&self) -> &[Impulse] {
        &self.impulses
    }

    pub fn has_extension_override(&self) -> bool {
        self.second_window.is_some()
    }

    /// Extended impulse time for the 0-based index `k` of the extended
    /// sequence.
    pub fn tau_ext(&self, k: usize) -> f64 {
        let m = self.impulses.len();
        let (window, i) = (k / m, k % m);
        if window == 1 {
            if let Some(sw) = &self.second_window {
                return sw[i].tau;
            }
        }
        self.impulses[i].tau + window as f64 * self.omega
    }

    /// Extended jump matrix for index `k`.
    pub fn b_ext(&self, k: usize) -> &DMatrix<f64> {
        let m = self.impulses.len();
        let (window, i) = (k / m, k % m);
        if window == 1 {
            if let Some(sw) = &self.second_window {
                return &sw[i].b;
            }
        }
        &self.impulses[i].b
    }

    /// Extended offset `d` for index `k`: `rho^j d_i` under the extension
    /// rule, or the explicit override in the second window.
    pub fn d_ext(&self, k: usize) -> DVector<f64> {
        let m = self.impulses.len();
        let (window, i) = (k / m, k % m);
        if window == 1 {
            if let Some(sw) = &self.second_window {
                return sw[i].d.clone();
            }
        }
        let mut d = self.impulses[i].d.clone();
        for _ in 0..window {
            d = &self.rho * d;
        }
        d
    }

    /// Extended indices k with `s < tau_k < t` (strict on both ends), in
    /// ascending order.
    pub fn window_indices(&self, s: f64, t: f64) -> Result<Vec<usize>> {
        if s > t {
            return Err(Error::ReversedInterval { s, t });
        }
        let m = self.impulses.len();
        if m == 0 || s == t {
            return Ok(Vec::new());
        }
        let first_window = (s / self.omega).floor().max(0.0) as usize;
        let last_window = (t / self.omega).floor().max(0.0) as usize;
        let mut out = Vec::new();
        for w in first_window..=last_window {
            for i in 0..m {
                let k = w * m + i;
                let tau = self.tau_ext(k);
                if tau > s && tau < t {
                    out.push(k);
                }
            }
        }
        Ok(out)
    }

    /// The counting function i(s, t): number of impulse times strictly
    /// between s and t, using the periodic extension beyond omega.
    pub fn impulse_count(&self, s: f64, t: f64) -> Result<usize> {
        Ok(self.window_indices(s, t)?.len())
    }

    /// Ordered product of `(E + B_k)` over impulses with `s < tau_k < t`,
    /// later impulses applied on the left. Identity for empty windows.
    pub fn transition_product(&self, s: f64, t: f64) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let mut prod = DMatrix::<f64>::identity(n, n);
        for k in self.window_indices(s, t)? {
            let factor = DMatrix::<f64>::identity(n, n) + self.b_ext(k);
            prod = factor * prod;
        }
        Ok(prod)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_schedule(omega: f64, rho: f64, taus: &[(f64, f64, f64)]) -> ImpulseSchedule {
        let impulses = taus
            .iter()
            .map(|&(tau, b, d)| Impulse {
                tau,
                b: DMatrix::from_element(1, 1, b),
                d: DVector::from_element(1, d),
            })
            .collect();
        ImpulseSchedule::new(omega, DMatrix::from_element(1, 1, rho), impulses).unwrap()
    }

    #[test]
    fn count_basic_and_convention() {
        let s = scalar_schedule(1.0, 2.0, &[(0.5, 1.0, 1.0)]);
        assert_eq!(s.impulse_count(0.0, 1.0).unwrap(), 1);
        // tau = 0.5 excluded by the strict inequality
        assert_eq!(s.impulse_count(0.5, 1.0).unwrap(), 0);
        assert_eq!(s.impulse_count(0.0, 0.5).unwrap(), 0);
    }

    #[test]
    fn count_extended() {
        let s = scalar_schedule(1.0, 2.0, &[(0.5, 1.0, 1.0)]);
        // impulses at 0.5 and 1.5 inside (0, 2.25)
        assert_eq!(s.impulse_count(0.0, 2.25).unwrap(), 2);
        assert_eq!(s.tau_ext(1), 1.5);
        assert_eq!(s.d_ext(1)[0], 2.0); // rho * d
        assert_eq!(s.d_ext(2)[0], 4.0); // rho^2 * d
    }

    #[test]
    fn count_additivity_with_boundary_impulse() {
        let s = scalar_schedule(1.0, 2.0, &[(0.25, 0.0, 0.0), (0.5, 0.0, 0.0), (0.75, 0.0, 0.0)]);
        // i(s,t) + i(t,u) + [t impulse] = i(s,u) for t an impulse time
        let lhs = s.impulse_count(0.0, 0.5).unwrap() + s.impulse_count(0.5, 1.0).unwrap() + 1;
        assert_eq!(lhs, s.impulse_count(0.0, 1.0).unwrap());
    }

    #[test]
    fn reversed_interval_rejected() {
        let s = scalar_schedule(1.0, 2.0, &[(0.5, 1.0, 1.0)]);
        assert!(matches!(
            s.impulse_count(1.0, 0.5),
            Err(Error::ReversedInterval { .. })
        ));
    }

    #[test]
    fn boundary_impulses_rejected() {
        let rho = DMatrix::from_element(1, 1, 2.0);
        let at_zero = vec![Impulse {
            tau: 0.0,
            b: DMatrix::from_element(1, 1, 0.0),
            d: DVector::from_element(1, 0.0),
        }];
        assert!(ImpulseSchedule::new(1.0, rho.clone(), at_zero).is_err());
        let at_omega = vec![Impulse {
            tau: 1.0,
            b: DMatrix::from_element(1, 1, 0.0),
            d: DVector::from_element(1, 0.0),
        }];
        assert!(ImpulseSchedule::new(1.0, rho, at_omega).is_err());
    }

    #[test]
    fn product_empty_and_scalar() {
        let s = scalar_schedule(1.0, 2.0, &[(0.5, 0.5, 0.0)]);
        let id = s.transition_product(0.6, 0.9).unwrap();
        assert_eq!(id[(0, 0)], 1.0);
        let p = s.transition_product(0.0, 1.0).unwrap();
        assert_relative_eq!(p[(0, 0)], 1.5);
    }

    #[test]
    fn product_order_later_on_left() {
        let b1 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b2 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let sched = ImpulseSchedule::new(
            1.0,
            DMatrix::identity(2, 2),
            vec![
                Impulse {
                    tau: 0.3,
                    b: b1.clone(),
                    d: DVector::zeros(2),
                },
                Impulse {
                    tau: 0.6,
                    b: b2.clone(),
                    d: DVector::zeros(2),
                },
            ],
        )
        .unwrap();
        let id = DMatrix::<f64>::identity(2, 2);
        let expect = (&id + &b2) * (&id + &b1);
        let got = sched.transition_product(0.0, 1.0).unwrap();
        assert_eq!(got, expect);
    }

    #[test]
    fn second_window_override() {
        let s = scalar_schedule(1.0, 2.0, &[(0.5, 1.0, 1.0)]);
        let broken = s
            .clone()
            .with_second_window(vec![Impulse {
                tau: 1.5,
                b: DMatrix::from_element(1, 1, 1.0),
                d: DVector::from_element(1, 7.0),
            }])
            .unwrap();
        assert_eq!(broken.d_ext(1)[0], 7.0);
        assert_eq!(s.d_ext(1)[0], 2.0);
    }
}
