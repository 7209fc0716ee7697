//! Paired sign test and summary statistics over per-sample similarities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which hypothesis the paired differences favour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Hyp1,
    Hyp2,
    None,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Hyp1 => "hyp1",
            Direction::Hyp2 => "hyp2",
            Direction::None => "none",
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTestResult {
    pub n_pos: usize,
    pub n_neg: usize,
    pub n_zero: usize,
    pub p_value: f64,
    pub direction: Direction,
}

/// Two-sided exact sign test. Zero differences are discarded.
pub fn sign_test(diffs: &[f64]) -> Result<SignTestResult> {
    if diffs.is_empty() {
        return Err(Error::InvalidInput(
            "sign test needs at least one difference".into(),
        ));
    }
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidInput(
            "sign test input contains a non-finite value".into(),
        ));
    }
    let n_pos = diffs.iter().filter(|&&d| d > 0.0).count();
    let n_neg = diffs.iter().filter(|&&d| d < 0.0).count();
    let n_zero = diffs.len() - n_pos - n_neg;
    if n_pos + n_neg == 0 {
        return Err(Error::DegenerateTest);
    }
    let direction = match n_pos.cmp(&n_neg) {
        std::cmp::Ordering::Greater => Direction::Hyp1,
        std::cmp::Ordering::Less => Direction::Hyp2,
        std::cmp::Ordering::Equal => Direction::None,
    };
    Ok(SignTestResult {
        n_pos,
        n_neg,
        n_zero,
        p_value: two_sided_sign_p(n_pos.max(n_neg) as u64, (n_pos + n_neg) as u64),
        direction,
    })
}

/// `min(1, 2 * P(X >= k))` for `X ~ Binomial(n, 1/2)`.
pub fn two_sided_sign_p(k: u64, n: u64) -> f64 {
    (2.0 * binomial_upper_tail_half(k, n)).min(1.0)
}

/// `P(X >= k)` for `X ~ Binomial(n, 1/2)`.
///
/// Terms `C(n, i)` are built by exact-ratio recurrence and summed in
/// double-double arithmetic, so the result is within about one ulp of the
/// exact rational value. Partial sums are rescaled by powers of two to stay
/// in range for large `n`.
pub fn binomial_upper_tail_half(k: u64, n: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    const RESCALE_AT: f64 = 1e250;
    const RESCALE_EXP: i32 = -800;

    let mut term = DoubleDouble::from(1.0);
    let mut tail = DoubleDouble::from(0.0);
    let mut scale_exp: i64 = 0;
    for i in 0..=n {
        if i >= k {
            tail = tail.add(term);
        }
        if i == n {
            break;
        }
        term = term.mul_f64((n - i) as f64).div_f64((i + 1) as f64);
        if term.hi > RESCALE_AT {
            term = term.scale(RESCALE_EXP);
            tail = tail.scale(RESCALE_EXP);
            scale_exp -= RESCALE_EXP as i64;
        }
    }
    // tail * 2^(scale_exp - n), applied in steps that cannot overflow.
    let mut exp = scale_exp - n as i64;
    let mut value = tail.hi + tail.lo;
    while exp != 0 {
        let step = exp.clamp(-1000, 1000);
        value *= 2f64.powi(step as i32);
        exp -= step;
    }
    value.min(1.0)
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl From<f64> for DoubleDouble {
    fn from(hi: f64) -> Self {
        DoubleDouble { hi, lo: 0.0 }
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl DoubleDouble {
    fn add(self, other: DoubleDouble) -> DoubleDouble {
        let (s, e) = two_sum(self.hi, other.hi);
        let (t, f) = two_sum(self.lo, other.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        DoubleDouble { hi, lo }
    }

    fn mul_f64(self, b: f64) -> DoubleDouble {
        let p = self.hi * b;
        let err = self.hi.mul_add(b, -p);
        let (hi, lo) = quick_two_sum(p, err + self.lo * b);
        DoubleDouble { hi, lo }
    }

    fn div_f64(self, b: f64) -> DoubleDouble {
        let q1 = self.hi / b;
        // remainder self - q1 * b, computed exactly for the high part
        let p = q1 * b;
        let p_err = q1.mul_add(b, -p);
        let (s, e) = two_sum(self.hi, -p);
        let r = (s + (e - p_err)) + self.lo;
        let q2 = r / b;
        let (hi, lo) = quick_two_sum(q1, q2);
        DoubleDouble { hi, lo }
    }

    fn scale(self, exp: i32) -> DoubleDouble {
        let f = 2f64.powi(exp);
        DoubleDouble {
            hi: self.hi * f,
            lo: self.lo * f,
        }
    }
}

/// Means of two paired similarity vectors plus the sign test on `s1 - s2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean_s1: f64,
    pub mean_s2: f64,
    pub sign_test: SignTestResult,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn summarize(s1: &[f64], s2: &[f64]) -> Result<Summary> {
    if s1.len() != s2.len() {
        return Err(Error::DimensionMismatch {
            expected: s1.len(),
            found: s2.len(),
        });
    }
    if s1.is_empty() {
        return Err(Error::InvalidInput("cannot summarize empty vectors".into()));
    }
    let diffs: Vec<f64> = s1.iter().zip(s2).map(|(a, b)| a - b).collect();
    Ok(Summary {
        mean_s1: mean(s1),
        mean_s2: mean(s2),
        sign_test: sign_test(&diffs)?,
    })
}
