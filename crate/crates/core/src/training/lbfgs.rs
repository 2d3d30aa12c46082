//! Limited-memory BFGS with backtracking (Armijo) line search.

use std::collections::VecDeque;

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iters: usize,
    /// Stop when the gradient norm falls below this.
    pub grad_tol: f64,
    /// Stop after this many consecutive iterations whose relative decrease
    /// of the objective is below `stall_tol`.
    pub stall_iters: usize,
    pub stall_tol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 10,
            max_iters: 5000,
            grad_tol: 1e-8,
            stall_iters: 20,
            stall_tol: 1e-12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    MaxIterations,
    Stalled,
    LineSearchFailed,
    NonFiniteStart,
}

#[derive(Clone, Debug)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iters: usize,
    pub reason: StopReason,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimize `f`, which returns the value and gradient at a point. Values
/// that are not finite are treated as `+inf` and rejected by the line
/// search. `on_iter(k, x, f)` is called after every accepted step.
pub fn minimize<F, C>(mut f: F, x0: Vec<f64>, opts: &LbfgsOptions, mut on_iter: C) -> LbfgsResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
    C: FnMut(usize, &[f64], f64),
{
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    if !fx.is_finite() || g.len() != x.len() {
        return LbfgsResult {
            x,
            f: fx,
            iters: 0,
            reason: StopReason::NonFiniteStart,
        };
    }
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut stall = 0;
    let mut iters = 0;
    let reason = loop {
        if dot(&g, &g).sqrt() < opts.grad_tol {
            break StopReason::GradientTolerance;
        }
        if iters >= opts.max_iters {
            break StopReason::MaxIterations;
        }

        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, y, rho) in mem.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = mem.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|qi| *qi *= gamma);
        }
        for ((s, y, rho), a) in mem.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut d: Vec<f64> = q.into_iter().map(|v| -v).collect();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            mem.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }

        let mut t = if mem.is_empty() {
            (1.0 / dot(&g, &g).sqrt()).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            let (fn_, gn) = f(&xn);
            if fn_.is_finite() && gn.len() == x.len() && fn_ <= fx + 1e-4 * t * slope {
                accepted = Some((xn, fn_, gn));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            if mem.is_empty() {
                break StopReason::LineSearchFailed;
            }
            mem.clear();
            continue;
        };

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if mem.len() == opts.memory {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }
        let decrease = fx - fn_;
        if decrease <= opts.stall_tol * fx.abs() {
            stall += 1;
        } else {
            stall = 0;
        }
        x = xn;
        fx = fn_;
        g = gn;
        iters += 1;
        on_iter(iters, &x, fx);
        if stall >= opts.stall_iters {
            break StopReason::Stalled;
        }
    };
    LbfgsResult {
        x,
        f: fx,
        iters,
        reason,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            (v, g)
        };
        let r = minimize(f, vec![-1.2, 1.0], &LbfgsOptions::default(), |_, _, _| {});
        assert_eq!(r.reason, StopReason::GradientTolerance);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn quadratic_is_monotone() {
        let diag: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let f = |x: &[f64]| {
            let v = x.iter().zip(&diag).map(|(xi, di)| 0.5 * di * xi * xi).sum();
            (v, x.iter().zip(&diag).map(|(xi, di)| di * xi).collect())
        };
        let mut last = f64::INFINITY;
        let r = minimize(f, vec![1.0; 20], &LbfgsOptions::default(), |_, _, fx| {
            assert!(fx <= last);
            last = fx;
        });
        assert!(r.f < 1e-14);
    }

    #[test]
    fn infeasible_region_is_avoided() {
        // -ln(x) + x has its minimum at 1 and is infinite for x <= 0
        let f = |x: &[f64]| {
            if x[0] <= 0.0 {
                (f64::INFINITY, vec![])
            } else {
                (x[0] - x[0].ln(), vec![1.0 - 1.0 / x[0]])
            }
        };
        let r = minimize(f, vec![0.01], &LbfgsOptions::default(), |_, _, _| {});
        assert!((r.x[0] - 1.0).abs() < 1e-6);
        let bad = minimize(|_: &[f64]| (f64::NAN, vec![0.0]), vec![0.0], &LbfgsOptions::default(), |_, _, _| {});
        assert_eq!(bad.reason, StopReason::NonFiniteStart);
    }
}
