//! Bounds on the probability that an adversary triggers adaptive weights
//! under `b.parent` before the assumption horizon.

use alloc::vec::Vec;

use super::special::{binom_sf, nb_tail};
use super::ConfirmError;

/// One slice of `Chain(b.parent)`: the timer-height gap of its oldest block
/// and the pessimistic `(m, l, w)` over its blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slice {
    /// `MaxTH(b.parent) − TH(a.parent)` for the oldest block `a` of the slice.
    pub gap: i64,
    /// Largest honest-block count between `a.parent` and `b.parent`.
    pub m: u64,
    /// Largest honest weight that may join the siblings of `a`.
    pub l: u64,
    /// Smallest known subtree weight of `a` in `b.parent`'s past.
    pub w: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BreakQuery {
    pub theta: u64,
    pub eta_t: u64,
    pub eta_b: u64,
    pub eta_a: u64,
    pub eta_w: u64,
    pub beta: f64,
    pub slices: Vec<Slice>,
    /// Allowance for timer heights hidden by the adversary at `b.parent`.
    pub z_gap: i64,
}

/// `Pr[Bin(θ, 1/η_t) ≥ η_b − (gap + z_gap)]`: enough timer blocks appear
/// before the horizon to make `a.parent` old.
pub fn e1_bound(gap: i64, bq: &BreakQuery) -> Result<f64, ConfirmError> {
    let need = bq.eta_b as i64 - (gap + bq.z_gap);
    binom_sf(need, bq.theta, 1.0 / bq.eta_t.max(1) as f64)
}

/// `min_t ((η_w − 1 + e^{tη_w})/η_w)^n · e^{−tρ}`: the chance that `n`
/// adaptively weighted blocks of unit mean reach total weight `ρ > 0`.
pub fn y_bound(n: u64, rho: i64, eta_w: u64) -> f64 {
    if rho <= 0 {
        return 1.0;
    }
    let w = eta_w as f64;
    let nf = n as f64;
    let cap = nf * w;
    let r = rho as f64;
    if r > cap {
        return 0.0;
    }
    if r == cap {
        return libm::exp(-nf * libm::log(w));
    }
    let a = r / w;
    let x = libm::log(a * (w - 1.0) / (nf - a));
    if !(x > 0.0) {
        return 1.0;
    }
    let ln = nf * (libm::log(w - 1.0 + libm::exp(x)) - libm::log(w)) - x * a;
    libm::exp(ln).min(1.0)
}

struct E2 {
    succ: u64,
    theta: u64,
    beta: f64,
    rho: i64,
    eta_w: u64,
}

impl E2 {
    fn eval(&self, n1: u64, n2: u64) -> Result<f64, ConfirmError> {
        let a = nb_tail(n1 as i64, self.succ, self.beta)?;
        let b = binom_sf(n2 as i64, self.theta, self.beta)?;
        Ok((a + b + y_bound(n1 + n2, self.rho, self.eta_w)).min(1.0))
    }

    fn upper1(&self) -> u64 {
        let m = self.succ as f64;
        let q = 1.0 - self.beta;
        let mean = m * self.beta / q;
        let sd = libm::sqrt(m * self.beta) / q;
        (mean + 60.0 * sd + 60.0) as u64
    }

    fn upper2(&self) -> u64 {
        self.theta + 1
    }

    /// Integer minimisation along one coordinate: ternary narrowing followed
    /// by a local scan.
    fn line_min(&self, f: &dyn Fn(u64) -> Result<f64, ConfirmError>, hi: u64) -> Result<(u64, f64), ConfirmError> {
        let (mut lo, mut hi) = (0u64, hi);
        while hi - lo > 8 {
            let a = lo + (hi - lo) / 3;
            let b = hi - (hi - lo) / 3;
            if f(a)? <= f(b)? {
                hi = b;
            } else {
                lo = a;
            }
        }
        let mut best = (lo, f(lo)?);
        for x in lo + 1..=hi {
            let v = f(x)?;
            if v < best.1 {
                best = (x, v);
            }
        }
        Ok(best)
    }

    fn minimise(&self) -> Result<f64, ConfirmError> {
        let (u1, u2) = (self.upper1(), self.upper2());
        let mut best = (0u64, 0u64, f64::INFINITY);
        for i in 0..10u64 {
            for j in 0..10u64 {
                let (n1, n2) = (u1 * i / 9, u2 * j / 9);
                let v = self.eval(n1, n2)?;
                if v < best.2 {
                    best = (n1, n2, v);
                }
            }
        }
        for _ in 0..32 {
            let (a, va) = self.line_min(&|x| self.eval(x, best.1), u1)?;
            let (b, vb) = self.line_min(&|y| self.eval(a, y), u2)?;
            let next = if vb <= va { (a, b, vb) } else { (a, best.1, va) };
            if next.2 < best.2 {
                best = next;
            } else {
                break;
            }
        }
        Ok(best.2)
    }

    fn quick(&self) -> Result<f64, ConfirmError> {
        let m = self.succ as f64;
        let q = 1.0 - self.beta;
        let n1 = (m * self.beta / q + 12.0 * libm::sqrt(m * self.beta) / q + 12.0) as u64;
        let t = self.theta as f64;
        let n2 = ((t * self.beta + 12.0 * libm::sqrt(t * self.beta * q) + 12.0) as u64).min(self.theta + 1);
        self.eval(n1, n2)
    }
}

/// `min_{n1,n2} Pr[N1 ≥ n1] + Pr[N2 ≥ n2] + Y(n1+n2, w − η_a − l)` with
/// `N1 ~ NB(m+1)` malicious blocks before `b.parent` and `N2 ~ Bin(θ, β)`
/// after it. Returns 1 when `w − η_a − l ≤ 0`.
pub fn e2_bound(slice: (u64, u64, u64), bq: &BreakQuery) -> Result<f64, ConfirmError> {
    match e2_problem(slice, bq)? {
        None => Ok(1.0),
        Some(p) => p.minimise(),
    }
}

fn e2_problem((m, l, w): (u64, u64, u64), bq: &BreakQuery) -> Result<Option<E2>, ConfirmError> {
    if !(0.0..0.5).contains(&bq.beta) {
        return Err(ConfirmError::Domain("beta must lie in [0, 0.5)"));
    }
    let rho = w as i64 - bq.eta_a as i64 - l as i64;
    if rho <= 0 {
        return Ok(None);
    }
    Ok(Some(E2 { succ: m + 1, theta: bq.theta, beta: bq.beta, rho, eta_w: bq.eta_w }))
}

/// Below this, a slice's quick `E2` bound is accepted without refinement.
const QUICK_ACCEPT: f64 = 1e-30;
/// Below this, a slice's `E1` bound makes the `E2` computation pointless.
const E1_NEGLIGIBLE: f64 = 1e-14;

/// Cheap upper bound on a slice's term, and whether refining it could
/// lower the value.
fn slice_cheap(s: &Slice, bq: &BreakQuery) -> Result<(f64, Option<(f64, E2)>), ConfirmError> {
    let e1 = e1_bound(s.gap, bq)?;
    if e1 < E1_NEGLIGIBLE {
        return Ok((e1, None));
    }
    match e2_problem((s.m, s.l, s.w), bq)? {
        None => Ok((e1, None)),
        Some(p) => {
            let quick = p.quick()?;
            if quick < QUICK_ACCEPT {
                Ok((e1.min(quick), None))
            } else {
                Ok((e1.min(quick), Some((e1, p))))
            }
        }
    }
}

fn slice_refined(e1: f64, p: &E2) -> Result<f64, ConfirmError> {
    let quick = p.quick()?;
    Ok(e1.min(quick.min(p.minimise()?)))
}

/// `Σ_slices min{E1(oldest), E2(max m, max l, min w)}`, clamped to `[0, 1]`.
pub fn assumption_break_risk(bq: &BreakQuery) -> Result<f64, ConfirmError> {
    let mut total = 0.0;
    for s in &bq.slices {
        let v = match slice_cheap(s, bq)? {
            (v, None) => v,
            (_, Some((e1, p))) => slice_refined(e1, &p)?,
        };
        total += v;
        if total >= 1.0 {
            return Ok(1.0);
        }
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Decides `assumption_break_risk(bq) ≤ budget` while running the `E2`
/// minimisation only for as many slices as the decision needs, largest
/// cheap bounds first. Returns the decision and an upper bound on the
/// risk; the bound is the full sum whenever the decision is negative.
pub fn break_risk_within(bq: &BreakQuery, budget: f64) -> Result<(bool, f64), ConfirmError> {
    let mut vals = Vec::with_capacity(bq.slices.len());
    let mut open = Vec::new();
    for s in &bq.slices {
        let (v, refine) = slice_cheap(s, bq)?;
        if let Some(r) = refine {
            open.push((vals.len(), r));
        }
        vals.push(v);
    }
    let sum = |vals: &[f64]| vals.iter().sum::<f64>().clamp(0.0, 1.0);
    let mut total = sum(&vals);
    if total <= budget {
        return Ok((true, total));
    }
    open.sort_by(|a, b| vals[b.0].total_cmp(&vals[a.0]));
    for (i, (e1, p)) in &open {
        vals[*i] = slice_refined(*e1, p)?;
        total = sum(&vals);
        if total <= budget {
            return Ok((true, total));
        }
    }
    Ok((false, total))
}
