//! Cylindrical Bessel functions of orders 0 and 1 for real arguments, and the
//! second-kind Hankel functions built from them.
//!
//! Evaluation uses three bands:
//!
//! * `x <= 8`: ascending power series (Neumann form for `Y`).
//! * `8 < x <= 25`: Miller backward recurrence for `J_n`, normalized with
//!   `J_0 + 2 sum J_2k = 1`, and Neumann expansions of `Y_0`, `Y_1` in terms of
//!   the recurred `J_n`.
//! * `x > 25`: Hankel asymptotic expansion, summed until the terms stop
//!   decreasing or fall below machine precision.
//!
//! Absolute accuracy is better than `1e-12` for `J` and `1e-10` for `Y` on
//! `[1e-6, 50]`.

use std::f64::consts::{FRAC_2_PI, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const SERIES_LIMIT: f64 = 8.0;
const RECURRENCE_LIMIT: f64 = 25.0;

/// Bessel function order. Only orders 0 and 1 are needed by the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Order {
    Zero,
    One,
}

impl Order {
    pub fn as_u32(self) -> u32 {
        match self {
            Order::Zero => 0,
            Order::One => 1,
        }
    }
}

impl TryFrom<u32> for Order {
    type Error = Error;

    fn try_from(n: u32) -> Result<Self> {
        match n {
            0 => Ok(Order::Zero),
            1 => Ok(Order::One),
            _ => Err(Error::Domain(format!("Bessel order {n} is not supported (0 or 1)"))),
        }
    }
}

/// `J_order(x)` for `x >= 0`.
pub fn bessel_j(order: Order, x: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("bessel_j requires finite x >= 0, got {x}")));
    }
    Ok(match order {
        Order::Zero => j0(x),
        Order::One => j1(x),
    })
}

/// `Y_order(x)` for `x > 0`.
pub fn bessel_y(order: Order, x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("bessel_y requires finite x > 0, got {x}")));
    }
    Ok(match order {
        Order::Zero => y0(x),
        Order::One => y1(x),
    })
}

/// `H^(2)_order(x) = J_order(x) - j Y_order(x)` for `x > 0`.
pub fn hankel2(order: Order, x: f64) -> Result<Complex64> {
    let y = bessel_y(order, x)?;
    let j = bessel_j(order, x)?;
    Ok(Complex64::new(j, -y))
}

/// Unchecked `H^(2)_0(x)`; caller guarantees `x > 0`.
#[inline]
pub(crate) fn h0(x: f64) -> Complex64 {
    let (j, y) = jy0(x);
    Complex64::new(j, -y)
}

/// Unchecked `H^(2)_1(x)`; caller guarantees `x > 0`.
#[inline]
pub(crate) fn h1(x: f64) -> Complex64 {
    let (j, y) = jy1(x);
    Complex64::new(j, -y)
}

pub(crate) fn j0(x: f64) -> f64 {
    if x <= SERIES_LIMIT {
        series_j(0, x)
    } else if x <= RECURRENCE_LIMIT {
        MillerTable::new(x).j0
    } else {
        asymptotic(0, x).0
    }
}

pub(crate) fn j1(x: f64) -> f64 {
    if x <= SERIES_LIMIT {
        series_j(1, x)
    } else if x <= RECURRENCE_LIMIT {
        MillerTable::new(x).j1
    } else {
        asymptotic(1, x).0
    }
}

pub(crate) fn y0(x: f64) -> f64 {
    jy0(x).1
}

pub(crate) fn y1(x: f64) -> f64 {
    jy1(x).1
}

fn jy0(x: f64) -> (f64, f64) {
    if x <= SERIES_LIMIT {
        let j = series_j(0, x);
        (j, series_y0(x, j))
    } else if x <= RECURRENCE_LIMIT {
        let t = MillerTable::new(x);
        (t.j0, t.y0)
    } else {
        asymptotic(0, x)
    }
}

fn jy1(x: f64) -> (f64, f64) {
    if x <= SERIES_LIMIT {
        let j = series_j(1, x);
        (j, series_y1(x, j))
    } else if x <= RECURRENCE_LIMIT {
        let t = MillerTable::new(x);
        (t.j1, t.y1)
    } else {
        asymptotic(1, x)
    }
}

/// `J_n(x) = (x/2)^n sum_k (-x^2/4)^k / (k! (k+n)!)`.
fn series_j(n: u32, x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = if n == 0 { 1.0 } else { 0.5 * x };
    let mut sum = term;
    for k in 1..200 {
        let kf = k as f64;
        term *= q / (kf * (kf + n as f64));
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// `Y_0(x) = (2/pi)(ln(x/2) + gamma) J_0(x) + (2/pi) sum_{k>=1} (-1)^{k+1} H_k (x^2/4)^k / (k!)^2`.
fn series_y0(x: f64, j0: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut harmonic = 0.0;
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        term *= -q / (kf * kf);
        harmonic += 1.0 / kf;
        let contrib = -term * harmonic;
        sum += contrib;
        if contrib.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    FRAC_2_PI * (((0.5 * x).ln() + EULER_GAMMA) * j0 + sum)
}

/// `Y_1(x) = -2/(pi x) + (2/pi) ln(x/2) J_1(x)
///          - (x/2pi) sum_k (psi(k+1) + psi(k+2)) (-x^2/4)^k / (k! (k+1)!)`.
fn series_y1(x: f64, j1: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 1.0;
    // psi(1) + psi(2) = -2 gamma + 1
    let mut psi_sum = 1.0 - 2.0 * EULER_GAMMA;
    let mut sum = psi_sum;
    for k in 1..200 {
        let kf = k as f64;
        term *= q / (kf * (kf + 1.0));
        psi_sum += 1.0 / kf + 1.0 / (kf + 1.0);
        let contrib = term * psi_sum;
        sum += contrib;
        if contrib.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    -FRAC_2_PI / x + FRAC_2_PI * (0.5 * x).ln() * j1 - x / (2.0 * PI) * sum
}

/// Orders 0 and 1 obtained together from one backward recurrence.
struct MillerTable {
    j0: f64,
    j1: f64,
    y0: f64,
    y1: f64,
}

impl MillerTable {
    fn new(x: f64) -> Self {
        // Start well above x so J_start is negligible; keep it even so the
        // normalization sum lines up with the even orders.
        let mut start = (1.4 * x + 40.0) as usize;
        start += start % 2;
        let mut values = vec![0.0; start + 2];
        values[start] = 1e-30;
        for n in (1..=start).rev() {
            values[n - 1] = 2.0 * n as f64 / x * values[n] - values[n + 1];
            if values[n - 1].abs() > 1e250 {
                for v in values.iter_mut().skip(n - 1) {
                    *v *= 1e-250;
                }
            }
        }
        let norm = values[0] + 2.0 * values.iter().skip(2).step_by(2).sum::<f64>();
        for v in values.iter_mut() {
            *v /= norm;
        }

        let log_term = (0.5 * x).ln() + EULER_GAMMA;
        // (pi/2) Y_0 = L J_0 - 2 sum_{k>=1} (-1)^k J_2k / k
        let mut y0_sum = 0.0;
        // (pi/2) Y_1 = L J_1 - J_0 / x + sum_{k>=1} (-1)^k (J_{2k-1} - J_{2k+1}) / k
        let mut y1_sum = 0.0;
        let mut sign = -1.0;
        for k in 1..=start / 2 {
            let kf = k as f64;
            y0_sum += sign * values[2 * k] / kf;
            y1_sum += sign * (values[2 * k - 1] - values[2 * k + 1]) / kf;
            sign = -sign;
        }
        let (j0, j1) = (values[0], values[1]);
        MillerTable {
            j0,
            j1,
            y0: FRAC_2_PI * (log_term * j0 - 2.0 * y0_sum),
            y1: FRAC_2_PI * (log_term * j1 - j0 / x + y1_sum),
        }
    }
}

/// Hankel large-argument expansion, returning `(J_n(x), Y_n(x))`.
fn asymptotic(n: u32, x: f64) -> (f64, f64) {
    let mu = 4.0 * (n * n) as f64;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        term *= (mu - odd * odd) / (k as f64 * 8.0 * x);
        if term.abs() >= last || term.abs() < 1e-17 {
            break;
        }
        last = term.abs();
        // a_k / x^k alternates between Q (odd k) and P (even k) with sign (-1)^floor(k/2)
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
    }
    let chi = x - (0.5 * n as f64 + 0.25) * PI;
    let scale = (FRAC_2_PI / x).sqrt();
    let (s, c) = chi.sin_cos();
    (scale * (p * c - q * s), scale * (p * s + q * c))
}
