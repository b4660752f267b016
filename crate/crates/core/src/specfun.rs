//! Bessel functions of integer order on the real and imaginary axes.
//!
//! The modified functions `I_m` and `K_m` are returned as [`ScaledValue`]s so
//! that matrix entries built from very large or very small arguments keep
//! their full relative precision: `I_m(x)` grows like `e^x` and `K_m(x)`
//! decays like `e^-x`, and with large orders `K_m` at small argument easily
//! exceeds the `f64` range.
//!
//! Algorithms:
//! - `K_0`, `K_1`: power series for `x <= 2`, Steed's continued fraction
//!   (scaled by `e^x`) above.
//! - `K_m`: upward recurrence carried on the ratios `K_{m+1}/K_m`.
//! - `I_m`: the ratio `I_{m+1}/I_m` from its continued fraction at a high
//!   starting order, backward ratio recurrence down to `m = 0`, and the
//!   Wronskian `I_m K_{m+1} + I_{m+1} K_m = 1/x` for normalisation.
//! - `J_m`: Miller backward recurrence normalised by `J_0 + 2 sum J_2k = 1`,
//!   and `Y_0` from the Neumann series over the same sequence.

use std::f64::consts::{FRAC_2_PI, LN_2, PI};
use std::ops::{Add, Div, Mul, Neg, Sub};

use thiserror::Error;

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const MAX_MODIFIED_ORDER: usize = 200;
const MAX_MODIFIED_ARG: f64 = 1.0e4;
const MIN_K_ARG: f64 = 1.0e-12;
const MAX_J_ORDER: usize = 60;
const MAX_J_ARG: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecFunError {
    #[error("{function}: order {order} / argument {x} outside the supported domain")]
    Domain {
        function: &'static str,
        order: usize,
        x: f64,
    },
    #[error("{function}: continued fraction failed to converge at x = {x}")]
    NoConvergence { function: &'static str, x: f64 },
}

/// A real number stored as `mantissa * e^log_scale`.
///
/// After normalisation `|mantissa|` lies in `[1, 2)` (or the value is an
/// exact zero) and `log_scale` is an integer multiple of `ln 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledValue {
    mantissa: f64,
    log_scale: f64,
}

impl ScaledValue {
    pub const ZERO: ScaledValue = ScaledValue {
        mantissa: 0.0,
        log_scale: 0.0,
    };

    pub fn new(mantissa: f64, log_scale: f64) -> Self {
        if mantissa == 0.0 || !mantissa.is_finite() || !log_scale.is_finite() {
            if mantissa == 0.0 {
                return Self::ZERO;
            }
            return ScaledValue {
                mantissa,
                log_scale,
            };
        }
        let (frac, exp) = frexp(mantissa);
        ScaledValue {
            mantissa: frac,
            log_scale: log_scale + exp as f64 * LN_2,
        }
    }

    pub fn from_f64(v: f64) -> Self {
        Self::new(v, 0.0)
    }

    /// Builds a value from `sign * e^ln_abs`.
    pub fn from_ln(ln_abs: f64, sign: f64) -> Self {
        if ln_abs == f64::NEG_INFINITY || sign == 0.0 {
            return Self::ZERO;
        }
        let k = (ln_abs / LN_2).floor();
        let rest = ln_abs - k * LN_2;
        Self::new(sign.signum() * rest.exp(), k * LN_2)
    }

    pub fn mantissa(&self) -> f64 {
        self.mantissa
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa == 0.0
    }

    /// Natural log of the magnitude (`-inf` for zero).
    pub fn ln_abs(&self) -> f64 {
        if self.is_zero() {
            f64::NEG_INFINITY
        } else {
            self.mantissa.abs().ln() + self.log_scale
        }
    }

    pub fn signum(&self) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            self.mantissa.signum()
        }
    }

    /// Plain `f64` value; may overflow to infinity or underflow to zero.
    pub fn value(&self) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            self.mantissa * self.log_scale.exp()
        }
    }

    /// `self * e^shift` as a plain `f64`.
    pub fn value_shifted(&self, shift: f64) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            self.mantissa * (self.log_scale + shift).exp()
        }
    }

    pub fn scale(self, factor: f64) -> Self {
        Self::new(self.mantissa * factor, self.log_scale)
    }

    pub fn recip(self) -> Self {
        Self::new(1.0 / self.mantissa, -self.log_scale)
    }
}

impl Mul for ScaledValue {
    type Output = ScaledValue;
    fn mul(self, rhs: Self) -> Self {
        if self.is_zero() || rhs.is_zero() {
            return Self::ZERO;
        }
        ScaledValue::new(self.mantissa * rhs.mantissa, self.log_scale + rhs.log_scale)
    }
}

impl Div for ScaledValue {
    type Output = ScaledValue;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Self) -> Self {
        self * rhs.recip()
    }
}

impl Add for ScaledValue {
    type Output = ScaledValue;
    fn add(self, rhs: Self) -> Self {
        if self.is_zero() {
            return rhs;
        }
        if rhs.is_zero() {
            return self;
        }
        let (big, small) = if self.log_scale >= rhs.log_scale {
            (self, rhs)
        } else {
            (rhs, self)
        };
        let shifted = small.mantissa * (small.log_scale - big.log_scale).exp();
        ScaledValue::new(big.mantissa + shifted, big.log_scale)
    }
}

impl Neg for ScaledValue {
    type Output = ScaledValue;
    fn neg(self) -> Self {
        ScaledValue {
            mantissa: -self.mantissa,
            log_scale: self.log_scale,
        }
    }
}

impl Sub for ScaledValue {
    type Output = ScaledValue;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

/// Splits a finite nonzero `v` into `frac * 2^exp` with `|frac|` in `[1, 2)`.
fn frexp(v: f64) -> (f64, i32) {
    const EXP_MASK: u64 = 0x7ff << 52;
    let bits = v.to_bits();
    let e = ((bits & EXP_MASK) >> 52) as i32;
    if e == 0 {
        // subnormal: lift into the normal range first
        let (f, k) = frexp(v * 2f64.powi(64));
        return (f, k - 64);
    }
    (f64::from_bits((bits & !EXP_MASK) | (1023u64 << 52)), e - 1023)
}

/// `I_m(x)`, `K_m(x)` for all orders `0..=max_order` at one argument,
/// together with their derivatives.
#[derive(Debug, Clone)]
pub struct ModifiedBessel {
    x: f64,
    i: Vec<ScaledValue>,
    k: Vec<ScaledValue>,
}

impl ModifiedBessel {
    /// Evaluates the order sequence. Only `x > 0` is required here; the
    /// public single-value wrappers apply the tighter documented domain.
    pub fn new(max_order: usize, x: f64) -> Result<Self, SpecFunError> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(SpecFunError::Domain {
                function: "ModifiedBessel",
                order: max_order,
                x,
            });
        }
        // one order beyond the request for the derivative recurrences
        let top = max_order + 1;

        let (k0s, k1s) = k01_scaled(x)?;
        let mut k = Vec::with_capacity(top + 1);
        let mut ratio = Vec::with_capacity(top + 1);
        k.push(ScaledValue::new(k0s, -x));
        let mut r = k1s / k0s;
        for m in 0..=top {
            if m > 0 {
                r = 1.0 / r + 2.0 * m as f64 / x;
            }
            ratio.push(r);
            if m < top {
                let next = k[m].scale(r);
                k.push(next);
            }
        }

        let start = top.max(x.ceil() as usize) + 16;
        let mut f = i_ratio_cf(start, x)?;
        for m in (top + 1..=start).rev() {
            f = 1.0 / (2.0 * m as f64 / x + f);
        }
        let mut f_seq = vec![0.0; top + 1];
        f_seq[top] = f;
        for m in (1..=top).rev() {
            f_seq[m - 1] = 1.0 / (2.0 * m as f64 / x + f_seq[m]);
        }

        let i = (0..=top)
            .map(|m| {
                let denom = x * (ratio[m] + f_seq[m]);
                k[m].recip().scale(1.0 / denom)
            })
            .collect();

        Ok(ModifiedBessel { x, i, k })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn max_order(&self) -> usize {
        self.i.len() - 2
    }

    pub fn i(&self, m: usize) -> ScaledValue {
        self.i[m]
    }

    pub fn k(&self, m: usize) -> ScaledValue {
        self.k[m]
    }

    /// `I'_m = (I_{m-1} + I_{m+1}) / 2`, with `I'_0 = I_1`.
    pub fn di(&self, m: usize) -> ScaledValue {
        if m == 0 {
            self.i[1]
        } else {
            (self.i[m - 1] + self.i[m + 1]).scale(0.5)
        }
    }

    /// `K'_m = -(K_{m-1} + K_{m+1}) / 2`, with `K'_0 = -K_1`.
    pub fn dk(&self, m: usize) -> ScaledValue {
        if m == 0 {
            -self.k[1]
        } else {
            -(self.k[m - 1] + self.k[m + 1]).scale(0.5)
        }
    }
}

/// `(e^x K_0(x), e^x K_1(x))`.
fn k01_scaled(x: f64) -> Result<(f64, f64), SpecFunError> {
    if x <= 2.0 {
        let (k0, k1) = k01_series(x);
        let ex = x.exp();
        return Ok((k0 * ex, k1 * ex));
    }
    // Steed's method, order zero
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    let mut converged = false;
    for i in 1..10_000 {
        a -= 2.0 * i as f64;
        c = -a * c / (i as f64 + 1.0);
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < 1.0e-17 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SpecFunError::NoConvergence {
            function: "K0/K1",
            x,
        });
    }
    h *= a1;
    let k0 = (PI / (2.0 * x)).sqrt() / s;
    let k1 = k0 * (x + 0.5 - h) / x;
    Ok((k0, k1))
}

/// Unscaled `K_0`, `K_1` by their logarithmic power series (`x <= 2`).
fn k01_series(x: f64) -> (f64, f64) {
    let q = 0.25 * x * x;
    let ln_half = (0.5 * x).ln();

    // K_0 = -ln(x/2) I_0 + sum psi(k+1) q^k / (k!)^2
    // K_1 = 1/x + ln(x/2) I_1 - (x/4) sum (psi(k+1) + psi(k+2)) q^k / (k! (k+1)!)
    let mut i0 = 0.0;
    let mut i1 = 0.0;
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut t0 = 1.0; // q^k / (k!)^2
    let mut t1 = 1.0; // q^k / (k! (k+1)!)
    let mut psi = -EULER_GAMMA; // psi(k+1)
    for k in 0..60 {
        let kf = k as f64;
        let psi_next = psi + 1.0 / (kf + 1.0);
        i0 += t0;
        i1 += t1;
        s0 += psi * t0;
        s1 += (psi + psi_next) * t1;
        if t0 < 1e-18 * i0 {
            break;
        }
        t0 *= q / ((kf + 1.0) * (kf + 1.0));
        t1 *= q / ((kf + 1.0) * (kf + 2.0));
        psi = psi_next;
    }
    let i1 = 0.5 * x * i1;
    let k0 = -ln_half * i0 + s0;
    let k1 = 1.0 / x + ln_half * i1 - 0.25 * x * s1;
    (k0, k1)
}

/// `I_{n+1}(x) / I_n(x)` by modified Lentz on its continued fraction.
fn i_ratio_cf(n: usize, x: f64) -> Result<f64, SpecFunError> {
    const TINY: f64 = 1.0e-300;
    let mut f = TINY;
    let mut c = f;
    let mut d = 0.0;
    for k in 1..200_000 {
        let b = 2.0 * (n + k) as f64 / x;
        d += b;
        if d == 0.0 {
            d = TINY;
        }
        c = b + 1.0 / c;
        if c == 0.0 {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1.0e-16 {
            return Ok(f);
        }
    }
    Err(SpecFunError::NoConvergence {
        function: "I ratio",
        x,
    })
}

fn check_modified(function: &'static str, m: usize, x: f64) -> Result<(), SpecFunError> {
    if m > MAX_MODIFIED_ORDER || !(x > 0.0) || x > MAX_MODIFIED_ARG {
        return Err(SpecFunError::Domain {
            function,
            order: m,
            x,
        });
    }
    Ok(())
}

/// `I_m(x)` for `0 <= m <= 200`, `0 < x <= 1e4`.
pub fn bessel_i_scaled(m: usize, x: f64) -> Result<ScaledValue, SpecFunError> {
    check_modified("bessel_I", m, x)?;
    Ok(ModifiedBessel::new(m, x)?.i(m))
}

/// `K_m(x)` for `0 <= m <= 200`, `1e-12 <= x <= 1e4`. Below `1e-12` the
/// logarithmic (or power) singularity is reported as a domain error.
pub fn bessel_k_scaled(m: usize, x: f64) -> Result<ScaledValue, SpecFunError> {
    check_modified("bessel_K", m, x)?;
    if x < MIN_K_ARG {
        return Err(SpecFunError::Domain {
            function: "bessel_K",
            order: m,
            x,
        });
    }
    Ok(ModifiedBessel::new(m, x)?.k(m))
}

/// `(I'_m(x), K'_m(x))` on the same domain as [`bessel_k_scaled`].
pub fn bessel_derivatives(m: usize, x: f64) -> Result<(ScaledValue, ScaledValue), SpecFunError> {
    check_modified("bessel_derivatives", m, x)?;
    if x < MIN_K_ARG {
        return Err(SpecFunError::Domain {
            function: "bessel_derivatives",
            order: m,
            x,
        });
    }
    let seq = ModifiedBessel::new(m, x)?;
    Ok((seq.di(m), seq.dk(m)))
}

/// `J_0(x), ..., J_n(x)` with `n >= max_order`, by Miller's algorithm.
/// The returned vector is long enough for the Neumann series of `Y_0`.
pub fn bessel_j_sequence(max_order: usize, x: f64) -> Result<Vec<f64>, SpecFunError> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(SpecFunError::Domain {
            function: "bessel_J",
            order: max_order,
            x,
        });
    }
    let reach = max_order.max(x.ceil() as usize) as f64;
    let mut start = (reach + 20.0 + 10.0 * reach.cbrt()).ceil() as usize;
    start += start % 2;

    let mut vals = vec![0.0; start + 1];
    let mut above = 0.0;
    let mut cur = 1.0e-30;
    vals[start] = cur;
    let mut norm = if start.is_multiple_of(2) { 2.0 * cur } else { 0.0 };
    for n in (1..=start).rev() {
        let below = 2.0 * n as f64 / x * cur - above;
        above = cur;
        cur = below;
        vals[n - 1] = cur;
        if n - 1 == 0 {
            norm += cur;
        } else if (n - 1) % 2 == 0 {
            norm += 2.0 * cur;
        }
        if cur.abs() > 1.0e250 {
            for v in vals[n - 1..].iter_mut() {
                *v *= 1.0e-250;
            }
            above *= 1.0e-250;
            cur *= 1.0e-250;
            norm *= 1.0e-250;
        }
    }
    for v in vals.iter_mut() {
        *v /= norm;
    }
    Ok(vals)
}

/// `J_m(x)` for `0 <= m <= 60`, `0 < x <= 100`.
pub fn bessel_j(m: usize, x: f64) -> Result<f64, SpecFunError> {
    if m > MAX_J_ORDER || !(x > 0.0) || x > MAX_J_ARG {
        return Err(SpecFunError::Domain {
            function: "bessel_J",
            order: m,
            x,
        });
    }
    Ok(bessel_j_sequence(m, x)?[m])
}

/// `Y_0(x)` from a Miller sequence produced by [`bessel_j_sequence`].
pub fn bessel_y0_from_sequence(x: f64, j: &[f64]) -> f64 {
    let mut series = 0.0;
    let mut sign = -1.0;
    for k in 1..j.len() / 2 {
        series += sign * j[2 * k] / k as f64;
        sign = -sign;
    }
    FRAC_2_PI * (((0.5 * x).ln() + EULER_GAMMA) * j[0] - 2.0 * series)
}

/// `Y_0(x)` for `0 < x <= 100`.
pub fn bessel_y0(x: f64) -> Result<f64, SpecFunError> {
    if !(x > 0.0) || x > MAX_J_ARG {
        return Err(SpecFunError::Domain {
            function: "bessel_Y0",
            order: 0,
            x,
        });
    }
    let j = bessel_j_sequence(0, x)?;
    Ok(bessel_y0_from_sequence(x, &j))
}
