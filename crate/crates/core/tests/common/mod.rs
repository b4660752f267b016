#![allow(dead_code)]

use casimir_core::specfun::{bessel_i_scaled, bessel_k_scaled};
use std::f64::consts::PI;

/// Per-mode concentric energy, `|m| <= 40`, trapezoid rule in `t = ln y`.
pub fn concentric_oracle(a: f64, b: f64) -> f64 {
    let h = 0.005;
    let mut sum = 0.0;
    let mut t: f64 = -25.0;
    while t < 4.5 {
        let y = t.exp();
        let mut lq = 0.0;
        for m in -40i64..=40 {
            let k = m.unsigned_abs() as usize;
            let r = bessel_i_scaled(k, y * a).unwrap() * bessel_k_scaled(k, y * b).unwrap()
                / (bessel_i_scaled(k, y * b).unwrap() * bessel_k_scaled(k, y * a).unwrap());
            lq += (-r.value()).ln_1p();
        }
        sum += h * y * y * lq;
        t += h;
    }
    sum / (4.0 * PI)
}

/// `concentric_oracle(1.0, 2.0)`, frozen.
pub const CONCENTRIC_A1_B2: f64 = -6.207399165297e-2;

/// `ln I_m(x)` from the power series, summed relative to its largest term.
pub fn ln_bessel_i_series(m: usize, x: f64) -> f64 {
    let q = 2.0 * (0.5 * x).ln();
    let mut ln_t = m as f64 * (0.5 * x).ln() - (1..=m).map(|j| (j as f64).ln()).sum::<f64>();
    let mut terms = vec![ln_t];
    let mut k = 0usize;
    loop {
        k += 1;
        ln_t += q - (k as f64).ln() - ((k + m) as f64).ln();
        terms.push(ln_t);
        let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if ln_t < top - 40.0 && ln_t < terms[terms.len() - 2] {
            break;
        }
    }
    let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
}
