//! Confirmation risk under the no-adaptation assumption: the random-walk
//! reorganisation bound `p(K, T)` and its combination with the
//! negative-binomial tail of unseen malicious blocks.

use alloc::collections::BTreeMap;

use super::special::nb_tail;
use super::ConfirmError;

/// Series truncation threshold on the geometric tail bound.
pub const SERIES_TOL: f64 = 1e-12;
/// Term budget before a series is declared non-convergent.
pub const MAX_TERMS: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiskQuery {
    /// Upper bound on honest blocks generated since `b.parent`.
    pub m: u64,
    /// Lower bound on the subtree-weight advantage of `b`.
    pub n: u64,
    /// Assumption horizon in blocks.
    pub theta: u64,
    /// Tail split point.
    pub t: u64,
    pub beta: f64,
    pub eta_w: u64,
}

impl RiskQuery {
    pub fn validate(&self) -> Result<(), ConfirmError> {
        if !(0.0..0.5).contains(&self.beta) {
            return Err(ConfirmError::Domain("beta must lie in [0, 0.5)"));
        }
        if self.t > self.theta {
            return Err(ConfirmError::Domain("t must not exceed theta"));
        }
        if self.eta_w == 0 {
            return Err(ConfirmError::Domain("eta_w must be positive"));
        }
        Ok(())
    }
}

fn log_sum_exp3(a: f64, b: f64, c: f64) -> f64 {
    let m = a.max(b).max(c);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + libm::log(libm::exp(a - m) + libm::exp(b - m) + libm::exp(c - m))
}

fn ln_or_neg_inf(x: f64) -> f64 {
    if x > 0.0 {
        libm::log(x)
    } else {
        f64::NEG_INFINITY
    }
}

/// `ln g1(s)`, the log moment generating function of a ±1 step that is +1
/// with probability β.
pub fn ln_g1(s: f64, beta: f64) -> f64 {
    log_sum_exp3(ln_or_neg_inf(beta) + s, ln_or_neg_inf(1.0 - beta) - s, f64::NEG_INFINITY)
}

/// `ln g2(s)`: the step is 0 with probability `1 − 1/η_w`, otherwise ±η_w
/// with the same sign split as `g1`.
pub fn ln_g2(s: f64, beta: f64, eta_w: u64) -> f64 {
    let w = eta_w as f64;
    let lw = libm::log(w);
    log_sum_exp3(
        ln_or_neg_inf((w - 1.0) / w),
        ln_or_neg_inf(beta) + s * w - lw,
        ln_or_neg_inf(1.0 - beta) - s * w - lw,
    )
}

/// `(g1(s), g2(s))`.
pub fn g_funcs(s: f64, beta: f64, eta_w: u64) -> (f64, f64) {
    (libm::exp(ln_g1(s, beta)), libm::exp(ln_g2(s, beta, eta_w)))
}

/// Log of the `i`-th series term at a fixed `s`.
pub fn ln_term_at(i: u64, s: f64, gap: i64, theta_tilde: u64, beta: f64, eta_w: u64) -> f64 {
    let k1 = i.min(theta_tilde) as f64;
    let k2 = i.saturating_sub(theta_tilde) as f64;
    let mut v = -s * gap as f64;
    if k1 > 0.0 {
        v += k1 * ln_g1(s, beta);
    }
    if k2 > 0.0 {
        v += k2 * ln_g2(s, beta, eta_w);
    }
    v
}

/// Closed-form minimiser of `i·ln g1(s) − s·gap` for `0 < gap < i`.
fn g1_argmin(i: u64, gap: i64, beta: f64) -> f64 {
    let r = gap as f64 / i as f64;
    0.5 * libm::log((1.0 - beta) * (1.0 + r) / (beta * (1.0 - r)))
}

/// Golden-section minimum of a convex function on `[lo, hi]`.
pub fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
        if hi - lo <= 1e-15 * hi.abs().max(1e-300) {
            break;
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Brackets and minimises a convex function of `s > 0` that tends to +∞,
/// starting the bracket search from `start`.
fn min_over_s(f: impl Fn(f64) -> f64, start: f64) -> (f64, f64) {
    let mut hi = start.max(1e-9);
    let mut fh = f(hi);
    loop {
        let next = hi * 2.0;
        let fn_ = f(next);
        if !(fn_ < fh) || next > 1e6 {
            hi = next;
            break;
        }
        hi = next;
        fh = fn_;
    }
    let (s, v) = golden_min(&f, 0.0, hi, 200);
    let f0 = f(0.0);
    if f0 <= v {
        (0.0, f0)
    } else {
        (s, v)
    }
}

/// Log of `min_s term_i(s)` together with the minimiser.
pub fn min_ln_term(i: u64, gap: i64, theta_tilde: u64, beta: f64, eta_w: u64, warm: f64) -> (f64, f64) {
    if beta == 0.0 {
        // Every step moves down: the walk can never climb `gap > 0`.
        return (f64::NEG_INFINITY, f64::INFINITY);
    }
    if i <= theta_tilde {
        let g = gap;
        if (g as u64) > i {
            return (f64::NEG_INFINITY, f64::INFINITY);
        }
        if g as u64 == i {
            return (i as f64 * libm::log(beta), f64::INFINITY);
        }
        let s = g1_argmin(i, g, beta);
        return (ln_term_at(i, s, g, theta_tilde, beta, eta_w), s);
    }
    let f = |s: f64| ln_term_at(i, s, gap, theta_tilde, beta, eta_w);
    let (s, v) = min_over_s(f, warm);
    (v, s)
}

/// Bound on `Σ_{j>θ̃} term_j` evaluated at a single `s`, minimised over `s`.
fn ln_phase2_tail(gap: i64, theta_tilde: u64, beta: f64, eta_w: u64) -> f64 {
    let w = eta_w as f64;
    // g2(s) < 1 exactly on 0 < s < ln((1−β)/β)/η_w.
    let s_max = libm::log((1.0 - beta) / beta) / w;
    let h = |s: f64| {
        let lg2 = ln_g2(s, beta, eta_w);
        if lg2 >= 0.0 {
            return f64::INFINITY;
        }
        theta_tilde as f64 * ln_g1(s, beta) - s * gap as f64 + lg2 - libm::log(-libm::expm1(lg2))
    };
    golden_min(h, 0.0, s_max, 200).1
}

/// `p(K, T)`: bound on the probability that an advantage of `n − K` is ever
/// overturned once the first `T` of `θ` blocks are treated pessimistically.
pub fn partial_risk(k: u64, t: u64, q: &RiskQuery) -> Result<f64, ConfirmError> {
    q.validate()?;
    if k >= q.n {
        return Ok(1.0);
    }
    let gap = (q.n - k) as i64;
    let theta_tilde = q.theta.saturating_sub(t);
    partial_risk_gap(gap, theta_tilde, q.beta, q.eta_w)
}

fn partial_risk_gap(gap: i64, theta_tilde: u64, beta: f64, eta_w: u64) -> Result<f64, ConfirmError> {
    if beta == 0.0 {
        return Ok(0.0);
    }
    let mut total = 0.0f64;
    let mut terms = 0u64;
    let start = (gap as u64).max(1);
    let mut i = theta_tilde + 1;
    if start <= theta_tilde {
        i = start;
        let tail2 = libm::exp(ln_phase2_tail(gap, theta_tilde, beta, eta_w));
        while i <= theta_tilde {
            let (lt, s) = min_ln_term(i, gap, theta_tilde, beta, eta_w, 1.0);
            let term = libm::exp(lt);
            total += term;
            if total >= 1.0 {
                return Ok(1.0);
            }
            if s.is_finite() {
                let lr = ln_g1(s, beta);
                if lr < 0.0 {
                    let r = libm::exp(lr);
                    let tail1 = term * r / (1.0 - r);
                    if tail1 + tail2 < SERIES_TOL {
                        return Ok((total + tail1 + tail2).min(1.0));
                    }
                }
            }
            terms += 1;
            if terms > MAX_TERMS {
                return Err(ConfirmError::NonConvergent);
            }
            i += 1;
        }
    }
    let mut warm = 1.0 / eta_w as f64;
    loop {
        let (lt, s) = min_ln_term(i, gap, theta_tilde, beta, eta_w, warm);
        let term = libm::exp(lt);
        total += term;
        if total >= 1.0 {
            return Ok(1.0);
        }
        if s.is_finite() && s > 0.0 {
            warm = s;
            let lr = ln_g2(s, beta, eta_w);
            if lr < 0.0 {
                let r = libm::exp(lr);
                let tail = term * r / -libm::expm1(lr);
                if tail < SERIES_TOL {
                    return Ok((total + tail).min(1.0));
                }
            }
        }
        terms += 1;
        if terms > MAX_TERMS {
            return Err(ConfirmError::NonConvergent);
        }
        i += 1;
    }
}

/// Memoises `p(K, t)` by `(n − K, θ − t)` for fixed `(β, η_w)`.
#[derive(Clone, Debug)]
pub struct RiskCache {
    beta: f64,
    eta_w: u64,
    table: BTreeMap<(i64, u64), f64>,
}

impl RiskCache {
    pub fn new(beta: f64, eta_w: u64) -> RiskCache {
        RiskCache { beta, eta_w, table: BTreeMap::new() }
    }

    fn partial(&mut self, k: u64, t: u64, q: &RiskQuery) -> Result<f64, ConfirmError> {
        if k >= q.n {
            return Ok(1.0);
        }
        if q.beta != self.beta || q.eta_w != self.eta_w {
            return partial_risk(k, t, q);
        }
        let key = ((q.n - k) as i64, q.theta.saturating_sub(t));
        if let Some(&v) = self.table.get(&key) {
            return Ok(v);
        }
        let v = partial_risk_gap(key.0, key.1, q.beta, q.eta_w)?;
        self.table.insert(key, v);
        Ok(v)
    }

    /// Same value as [`confirmation_risk`], reusing cached series.
    pub fn confirmation_risk(&mut self, q: &RiskQuery) -> Result<f64, ConfirmError> {
        q.validate()?;
        let succ = q.m + 1;
        let first = nb_tail(q.t as i64 - q.m as i64 + 1, succ, q.beta)?;
        let mut risk = first + self.partial(0, q.t, q)?;
        if risk >= 1.0 {
            return Ok(1.0);
        }
        for k in 0..q.n {
            let tail = nb_tail(k as i64, succ, q.beta)?;
            if tail * (q.n - k) as f64 <= 1e-18 {
                risk += tail * (q.n - k) as f64;
                break;
            }
            risk += tail * self.partial(k, q.t, q)?;
            if risk >= 1.0 {
                return Ok(1.0);
            }
        }
        Ok(risk.clamp(0.0, 1.0))
    }
}

/// `I_β(t−m+1, m+1) + p(0,t) + Σ_{k<n} I_β(k, m+1)·p(k,t)`, clamped to `[0, 1]`.
pub fn confirmation_risk(q: &RiskQuery) -> Result<f64, ConfirmError> {
    RiskCache::new(q.beta, q.eta_w).confirmation_risk(q)
}
