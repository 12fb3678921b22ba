use serde::{Deserialize, Serialize};

/// Fixed-point multiplier `mantissa * 2^-(31 + shift)` with the mantissa
/// normalized to `[2^30, 2^31)`.
///
/// A negative `shift` scales up; [`FixedMultiplier::below_one`] rejects those,
/// which is what conv/fully-connected requantization requires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedMultiplier {
    pub mantissa: i32,
    pub shift: i32,
}

impl FixedMultiplier {
    /// Normalizes any positive finite `value`.
    pub fn from_real(value: f64) -> Self {
        assert!(value > 0.0 && value.is_finite(), "multiplier must be positive and finite, got {value}");
        // value = frac * 2^exp with frac in [0.5, 1)
        let mut exp = value.log2().floor() as i32 + 1;
        let mut frac = value / 2f64.powi(exp);
        // log2 can be off by one ulp around powers of two
        if frac >= 1.0 {
            frac /= 2.0;
            exp += 1;
        } else if frac < 0.5 {
            frac *= 2.0;
            exp -= 1;
        }
        let mut mantissa = (frac * (1u64 << 31) as f64).round() as i64;
        if mantissa == 1i64 << 31 {
            mantissa /= 2;
            exp += 1;
        }
        FixedMultiplier { mantissa: mantissa as i32, shift: -exp }
    }

    /// Like [`from_real`](Self::from_real) but only for values in `(0, 1)`;
    /// returns `None` when the value is 1 or more.
    pub fn below_one(value: f64) -> Option<Self> {
        let m = Self::from_real(value);
        (m.shift >= 0).then_some(m)
    }

    pub fn to_f64(self) -> f64 {
        self.mantissa as f64 * 2f64.powi(-31 - self.shift)
    }

    /// `round(x * value)` with ties away from zero, in pure integer arithmetic.
    #[inline]
    pub fn apply(self, x: i64) -> i64 {
        let prod = x as i128 * self.mantissa as i128;
        let total = 31 + self.shift;
        if total <= 0 {
            return (prod << (-total)) as i64;
        }
        let half = 1i128 << (total - 1);
        let mag = (prod.abs() + half) >> total;
        (if prod < 0 { -mag } else { mag }) as i64
    }
}

/// Rounding right shift with ties away from zero.
#[inline]
pub(crate) fn rounding_shift(x: i64, bits: u32) -> i64 {
    if bits == 0 {
        return x;
    }
    let half = 1i64 << (bits - 1);
    let mag = (x.abs() + half) >> bits;
    if x < 0 {
        -mag
    } else {
        mag
    }
}
