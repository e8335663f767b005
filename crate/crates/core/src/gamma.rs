//! Gamma function on (0, 2) by the Lanczos approximation.

use std::f64::consts::PI;

use crate::error::{Error, Result};

// g = 7, n = 9
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos(z: f64) -> f64 {
    if z < 0.5 {
        // reflection
        PI / ((PI * z).sin() * lanczos(1.0 - z))
    } else {
        let z = z - 1.0;
        let mut x = LANCZOS_COEF[0];
        for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
            x += c / (z + i as f64);
        }
        let t = z + LANCZOS_G + 0.5;
        (2.0 * PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * x
    }
}

/// `Γ(z)` for `0 < z < 2`.
pub fn gamma(z: f64) -> Result<f64> {
    if z > 0.0 && z < 2.0 {
        Ok(lanczos(z))
    } else {
        Err(Error::DomainError(z))
    }
}
