//! Regularized incomplete beta function and the binomial and negative
//! binomial tails expressed through it.

use super::ConfirmError;

const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;
const CF_MAX_ITER: usize = 1_000_000;

pub fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

/// Lentz evaluation of the continued fraction for `I_x(a, b)`.
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> Result<f64, ConfirmError> {
    if !(0.0..=1.0).contains(&x) || !(a > 0.0) || !(b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(ConfirmError::Domain("reg_inc_beta needs 0 <= x <= 1 and positive finite a, b"));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front = a * libm::log(x) + b * libm::log1p(-x) - ln_beta(a, b);
    let v = if x < (a + 1.0) / (a + b + 2.0) {
        libm::exp(ln_front) * beta_cf(x, a, b) / a
    } else {
        1.0 - libm::exp(ln_front) * beta_cf(1.0 - x, b, a) / b
    };
    Ok(v.clamp(0.0, 1.0))
}

/// `Pr[Bin(n, p) ≥ k]`.
pub fn binom_sf(k: i64, n: u64, p: f64) -> Result<f64, ConfirmError> {
    check_prob(p)?;
    if k <= 0 {
        return Ok(1.0);
    }
    if k as u64 > n || p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    reg_inc_beta(p, k as f64, (n - k as u64 + 1) as f64)
}

/// `Pr[Bin(n, p) ≤ k]`.
pub fn binom_cdf(k: i64, n: u64, p: f64) -> Result<f64, ConfirmError> {
    Ok(1.0 - binom_sf(k + 1, n, p)?).map(|v| v.clamp(0.0, 1.0))
}

/// `Pr[K′ ≥ k]` where `K′` counts failures of probability `p` before the
/// `successes`-th success: `I_p(k, successes)`.
pub fn nb_tail(k: i64, successes: u64, p: f64) -> Result<f64, ConfirmError> {
    check_prob(p)?;
    if k <= 0 {
        return Ok(1.0);
    }
    if successes == 0 {
        return Err(ConfirmError::Domain("negative binomial needs at least one success"));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    reg_inc_beta(p, k as f64, successes as f64)
}

fn check_prob(p: f64) -> Result<(), ConfirmError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(ConfirmError::Domain("probability outside [0, 1]"))
    }
}
