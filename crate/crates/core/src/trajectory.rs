//! Left-continuous piecewise trajectories with stored left/right limits at
//! impulse times. The value stored at an impulse time is the limit from
//! below; the right limit after the jump starts the next segment.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Samples of a smooth piece between two impulse times (or the interval
/// ends). `times[0] == start` carries the right limit at `start`;
/// `times.last() == end` carries the left limit at `end`.
///
/// `breaks` marks interpolation cells: sorted indices into `times` whose
/// consecutive pairs bound one quadrature panel each. Interpolation stays
/// inside a cell, where Gauss nodes plus endpoints form a well-conditioned
/// stencil. Trajectories without panel structure use the trivial cell
/// `[0, len - 1]` and a sliding local stencil.
#[derive(Debug, Clone)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub times: Vec<f64>,
    pub values: Vec<DVector<f64>>,
    pub breaks: Vec<usize>,
}

impl Segment {
    /// Segment without panel structure (e.g. time-stepper output).
    pub fn plain(start: f64, end: f64, times: Vec<f64>, values: Vec<DVector<f64>>) -> Self {
        let breaks = vec![0, times.len().saturating_sub(1)];
        Segment {
            start,
            end,
            times,
            values,
            breaks,
        }
    }

    fn locate(&self, t: f64) -> usize {
        match self
            .times
            .binary_search_by(|x| x.partial_cmp(&t).unwrap())
        {
            Ok(i) => i,
            Err(i) => i,
        }
    }

    /// Inclusive index range of the interpolation stencil for `t`.
    fn stencil_range(&self, t: f64, max_len: usize) -> (usize, usize) {
        let n = self.times.len();
        let (mut lo, mut hi) = (0, n - 1);
        if self.breaks.len() >= 2 {
            let k = self
                .breaks
                .partition_point(|&i| self.times[i] < t)
                .saturating_sub(1)
                .min(self.breaks.len() - 2);
            lo = self.breaks[k];
            hi = self.breaks[k + 1];
        }
        if hi - lo + 1 > max_len {
            let pos = self.locate(t).clamp(lo, hi);
            let half = max_len / 2;
            let s = pos.saturating_sub(half).clamp(lo, hi + 1 - max_len);
            return (s, s + max_len - 1);
        }
        (lo, hi)
    }

    /// Polynomial interpolation within the cell containing `t`. Exact sample
    /// hits return the stored value.
    pub fn value(&self, t: f64) -> DVector<f64> {
        let n = self.times.len();
        debug_assert!(n >= 1);
        if let Ok(i) = self
            .times
            .binary_search_by(|x| x.partial_cmp(&t).unwrap())
        {
            return self.values[i].clone();
        }
        if n == 1 {
            return self.values[0].clone();
        }
        let (lo, hi) = self.stencil_range(t, 12);
        lagrange_value(&self.times[lo..=hi], &self.values[lo..=hi], t)
    }

    /// Derivative of the local interpolant at `t`, used for ODE residuals.
    /// Panel cells use their full stencil; plain segments use a sliding
    /// window of `fallback_stencil` points.
    pub fn derivative(&self, t: f64, fallback_stencil: usize) -> DVector<f64> {
        let n = self.times.len();
        if n < 2 {
            return DVector::zeros(self.values[0].len());
        }
        let max_len = if self.breaks.len() > 2 {
            12
        } else {
            fallback_stencil.max(2).min(n)
        };
        let (lo, hi) = self.stencil_range(t, max_len);
        lagrange_derivative(&self.times[lo..=hi], &self.values[lo..=hi], t)
    }
}

/// Plain Lagrange interpolation on a small stencil.
pub fn lagrange_value(xs: &[f64], ys: &[DVector<f64>], t: f64) -> DVector<f64> {
    let k = xs.len();
    let mut out = DVector::zeros(ys[0].len());
    for i in 0..k {
        let mut li = 1.0;
        for j in 0..k {
            if j != i {
                li *= (t - xs[j]) / (xs[i] - xs[j]);
            }
        }
        out += &ys[i] * li;
    }
    out
}

/// Derivative of the Lagrange interpolant at `t`.
pub fn lagrange_derivative(xs: &[f64], ys: &[DVector<f64>], t: f64) -> DVector<f64> {
    let k = xs.len();
    let mut out = DVector::zeros(ys[0].len());
    for i in 0..k {
        // d/dt prod_{j != i} (t - x_j)/(x_i - x_j)
        let mut dli = 0.0;
        for p in 0..k {
            if p == i {
                continue;
            }
            let mut term = 1.0 / (xs[i] - xs[p]);
            for j in 0..k {
                if j != i && j != p {
                    term *= (t - xs[j]) / (xs[i] - xs[j]);
                }
            }
            dli += term;
        }
        out += &ys[i] * dli;
    }
    out
}

/// Jump bookkeeping at an impulse time.
#[derive(Debug, Clone)]
pub struct JumpRecord {
    pub time: f64,
    /// Index into the extended impulse sequence.
    pub impulse_index: usize,
    pub left: DVector<f64>,
    pub right: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct PiecewiseTrajectory {
    pub dim: usize,
    pub segments: Vec<Segment>,
    pub jumps: Vec<JumpRecord>,
}

impl PiecewiseTrajectory {
    pub fn start(&self) -> f64 {
        self.segments.first().map_or(0.0, |s| s.start)
    }

    pub fn end(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.end)
    }

    pub fn initial(&self) -> &DVector<f64> {
        &self.segments[0].values[0]
    }

    /// Left limit at the final time.
    pub fn final_left(&self) -> &DVector<f64> {
        let seg = self.segments.last().unwrap();
        seg.values.last().unwrap()
    }

    fn segment_for(&self, t: f64) -> Result<&Segment> {
        let (start, end) = (self.start(), self.end());
        let slack = 1e-12 * (1.0 + end.abs());
        if t < start - slack || t > end + slack {
            return Err(Error::ShortTrajectory {
                need_start: t,
                need_end: t,
                got_start: start,
                got_end: end,
            });
        }
        // left continuity: the segment with start < t <= end
        let idx = self
            .segments
            .partition_point(|s| s.end < t)
            .min(self.segments.len() - 1);
        Ok(&self.segments[idx])
    }

    /// Left-continuous value at `t`: at an impulse time this is the limit
    /// from below.
    pub fn value(&self, t: f64) -> Result<DVector<f64>> {
        Ok(self.segment_for(t)?.value(t))
    }

    /// Right limit at `t`; differs from `value` only at impulse times.
    pub fn right_limit(&self, t: f64) -> Result<DVector<f64>> {
        for j in &self.jumps {
            if j.time == t {
                return Ok(j.right.clone());
            }
        }
        self.value(t)
    }

    /// All stored sample times (ascending, segment boundaries included once
    /// per segment).
    pub fn sample_times(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for s in &self.segments {
            out.extend_from_slice(&s.times);
        }
        out
    }

    /// Sup over stored samples of the euclidean norm.
    pub fn sup_norm(&self) -> f64 {
        self.segments
            .iter()
            .flat_map(|s| s.values.iter())
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    /// Sup over stored samples of `|self - other|`, with `other` evaluated by
    /// interpolation at this trajectory's sample times.
    pub fn sup_distance(&self, other: &PiecewiseTrajectory) -> Result<f64> {
        let mut worst = 0.0f64;
        for seg in &self.segments {
            for (t, v) in seg.times.iter().zip(&seg.values) {
                // compare like limits: segment starts are right limits
                let w = if *t == seg.start {
                    other.right_limit(*t)?
                } else {
                    other.value(*t)?
                };
                worst = worst.max((v - w).norm());
            }
        }
        Ok(worst)
    }

    /// Largest violation of the jump identity
    /// `right - left = B left + d` over the recorded jumps.
    pub fn max_jump_residual(
        &self,
        schedule: &crate::schedule::ImpulseSchedule,
    ) -> (f64, Option<usize>) {
        let mut worst = 0.0f64;
        let mut worst_idx = None;
        for j in &self.jumps {
            let expect = &j.left + schedule.b_ext(j.impulse_index) * &j.left
                + schedule.d_ext(j.impulse_index);
            let r = (&j.right - expect).norm() / (1.0 + j.left.norm());
            if r > worst {
                worst = r;
                worst_idx = Some(j.impulse_index);
            }
        }
        (worst, worst_idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn seg_from_fn(start: f64, end: f64, k: usize, f: impl Fn(f64) -> f64) -> Segment {
        let times: Vec<f64> = (0..=k)
            .map(|i| start + (end - start) * i as f64 / k as f64)
            .collect();
        let values = times
            .iter()
            .map(|&t| DVector::from_element(1, f(t)))
            .collect();
        Segment::plain(start, end, times, values)
    }

    #[test]
    fn interpolation_reproduces_polynomial() {
        let f = |t: f64| 1.0 + 2.0 * t - 0.5 * t * t + t * t * t;
        let seg = seg_from_fn(0.0, 1.0, 12, f);
        for &t in &[0.05, 0.33, 0.77, 0.99] {
            assert_relative_eq!(seg.value(t)[0], f(t), max_relative = 1e-12);
        }
        let df = |t: f64| 2.0 - t + 3.0 * t * t;
        for &t in &[0.2, 0.5, 0.9] {
            assert_relative_eq!(seg.derivative(t, 5)[0], df(t), max_relative = 1e-10);
        }
    }

    #[test]
    fn left_continuity_at_jump() {
        let s1 = seg_from_fn(0.0, 0.5, 4, |_| 1.0);
        let s2 = seg_from_fn(0.5, 1.0, 4, |_| 3.0);
        let traj = PiecewiseTrajectory {
            dim: 1,
            segments: vec![s1, s2],
            jumps: vec![JumpRecord {
                time: 0.5,
                impulse_index: 0,
                left: DVector::from_element(1, 1.0),
                right: DVector::from_element(1, 3.0),
            }],
        };
        assert_eq!(traj.value(0.5).unwrap()[0], 1.0);
        assert_eq!(traj.right_limit(0.5).unwrap()[0], 3.0);
        assert_eq!(traj.value(0.75).unwrap()[0], 3.0);
        assert_eq!(traj.value(0.0).unwrap()[0], 1.0);
    }

    #[test]
    fn out_of_range_is_error() {
        let traj = PiecewiseTrajectory {
            dim: 1,
            segments: vec![seg_from_fn(0.0, 1.0, 4, |t| t)],
            jumps: vec![],
        };
        assert!(traj.value(1.5).is_err());
    }
}
