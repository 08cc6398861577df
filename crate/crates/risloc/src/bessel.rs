//! Integer-order Bessel functions of the first kind.
//!
//! Small arguments use the ascending power series; larger arguments use
//! Miller's backward recurrence normalized with `J_0 + 2 sum_k J_{2k} = 1`,
//! which stays accurate for every order at once. Both branches give well
//! under 1e-10 absolute error across the supported range.

use crate::error::{Error, Result};

/// Largest supported order magnitude.
pub const MAX_ORDER: i32 = 64;
/// Largest supported argument magnitude.
pub const MAX_ARGUMENT: f64 = 1e4;

/// Crossover between the power series and backward recurrence.
const SERIES_LIMIT: f64 = 12.0;

/// J_n(x) for integer order. Supports `|n| <= 64` and `|x| <= 1e4`;
/// orders or arguments beyond that return an unsupported-range error.
pub fn bessel_j(n: i32, x: f64) -> Result<f64> {
    if n.unsigned_abs() > MAX_ORDER as u32 {
        return Err(Error::UnsupportedRange(format!(
            "order |{n}| exceeds the supported maximum {MAX_ORDER}"
        )));
    }
    if !x.is_finite() || x.abs() > MAX_ARGUMENT {
        return Err(Error::UnsupportedRange(format!(
            "argument {x} outside the supported range |x| <= {MAX_ARGUMENT}"
        )));
    }
    // Reflection identities: J_{-n}(x) = (-1)^n J_n(x) = J_n(-x).
    let mut sign = 1.0;
    let nn = if n < 0 {
        if n % 2 != 0 {
            sign = -sign;
        }
        -n
    } else {
        n
    } as usize;
    let xx = if x < 0.0 {
        if nn % 2 != 0 {
            sign = -sign;
        }
        -x
    } else {
        x
    };
    let value = if xx < SERIES_LIMIT { series(nn, xx) } else { miller(nn, xx) };
    Ok(sign * value)
}

/// J_0(x) .. J_{n_max}(x) in one pass; the backward recurrence produces the
/// whole sequence at the cost of one evaluation.
pub fn bessel_j_sequence(n_max: usize, x: f64) -> Result<Vec<f64>> {
    if n_max > MAX_ORDER as usize {
        return Err(Error::UnsupportedRange(format!(
            "order {n_max} exceeds the supported maximum {MAX_ORDER}"
        )));
    }
    if !x.is_finite() || x.abs() > MAX_ARGUMENT {
        return Err(Error::UnsupportedRange(format!(
            "argument {x} outside the supported range |x| <= {MAX_ARGUMENT}"
        )));
    }
    let xx = x.abs();
    let mut out = if xx < SERIES_LIMIT {
        (0..=n_max).map(|n| series(n, xx)).collect::<Vec<f64>>()
    } else {
        miller_sequence(n_max, xx)
    };
    if x < 0.0 {
        for (n, v) in out.iter_mut().enumerate() {
            if n % 2 != 0 {
                *v = -*v;
            }
        }
    }
    Ok(out)
}

/// Ascending series sum_k (-1)^k (x/2)^{n+2k} / (k! (n+k)!).
fn series(n: usize, x: f64) -> f64 {
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let half = x / 2.0;
    let mut term = 1.0f64;
    for i in 1..=n {
        term *= half / i as f64;
    }
    let mut sum = term;
    let q = half * half;
    for k in 1..200 {
        term *= -q / (k as f64 * (n + k) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-30) {
            break;
        }
    }
    sum
}

fn miller(n: usize, x: f64) -> f64 {
    miller_sequence(n, x)[n]
}

/// Backward recurrence from a high starting order, normalized with the
/// even-order sum identity J_0 + 2 sum_k J_{2k} = 1. Returns J_0 .. J_{n_max}.
fn miller_sequence(n_max: usize, x: f64) -> Vec<f64> {
    let nu = (n_max as f64).max(x);
    let start = {
        let m = (nu + 12.0 * nu.sqrt() + 24.0).ceil() as usize;
        m + (m & 1) // even
    };
    let mut out = vec![0.0f64; n_max + 1];
    let mut jp = 0.0f64; // order k + 2
    let mut jc = 1e-300f64; // order k + 1
    let mut even_sum = 0.0f64;
    for k in (0..=start).rev() {
        let jm = (2.0 * (k as f64 + 1.0) / x) * jc - jp;
        jp = jc;
        jc = jm;
        // jc now holds J_k.
        if k % 2 == 0 {
            even_sum += if k == 0 { jc } else { 2.0 * jc };
        }
        if k <= n_max {
            out[k] = jc;
        }
        if jc.abs() > 1e250 {
            jp /= 1e250;
            jc /= 1e250;
            even_sum /= 1e250;
            for v in out.iter_mut() {
                *v /= 1e250;
            }
        }
    }
    for v in out.iter_mut() {
        *v /= even_sum;
    }
    out
}
