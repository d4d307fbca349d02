use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval on the extended real line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    #[serde(with = "extended_real")]
    pub lo: f64,
    #[serde(with = "extended_real")]
    pub hi: f64,
}

impl Interval {
    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            lo: self.lo * factor,
            hi: self.hi * factor,
        }
    }
}

/// JSON has no infinities; they are written as the strings "-inf" / "inf".
pub(crate) mod extended_real {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                _ => Err(serde::de::Error::custom(format!("bad number `{s}`"))),
            },
        }
    }
}

/// Highest posterior density interval: the shortest window of sorted draws
/// containing `ceil(mass * n)` of them.
///
/// Draws at −∞ are allowed. When their share exceeds `1 - mass` the interval
/// is `(−∞, q)` with `q` the `mass`-quantile of the finite draws.
pub fn hpd_interval(draws: &[f64], mass: f64) -> Result<Interval> {
    if draws.is_empty() {
        return Err(Error::InsufficientDraws(
            "empty input to hpd_interval".into(),
        ));
    }
    if draws.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidParameters("NaN draw in hpd_interval".into()));
    }
    if !(mass > 0.0 && mass <= 1.0) {
        return Err(Error::InvalidParameters(format!(
            "mass {mass} outside (0, 1]"
        )));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let n_neg_inf = sorted
        .iter()
        .take_while(|v| **v == f64::NEG_INFINITY)
        .count();
    if n_neg_inf as f64 / n as f64 > 1.0 - mass {
        let finite = &sorted[n_neg_inf..];
        let hi = if finite.is_empty() {
            f64::NEG_INFINITY
        } else {
            crate::stats::sorted_quantile(finite, mass)
        };
        return Ok(Interval {
            lo: f64::NEG_INFINITY,
            hi,
        });
    }
    let m = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let mut best = (f64::INFINITY, 0);
    for i in 0..=n - m {
        let w = sorted[i + m - 1] - sorted[i];
        if w < best.0 {
            best = (w, i);
        }
    }
    let i = best.1;
    Ok(Interval {
        lo: sorted[i],
        hi: sorted[i + m - 1],
    })
}
