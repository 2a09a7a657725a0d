//! Small numeric helpers shared across modules.

/// Neumaier compensated summation.
///
/// Aggregation results must not depend on record order at the precision we
/// export (15 significant digits), so every reduction over records goes
/// through this accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

pub fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().collect::<CompensatedSum>().total()
}

pub fn mean(values: &[f64]) -> f64 {
    sum(values.iter().copied()) / values.len() as f64
}

/// Sample variance (n - 1 denominator).
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    sum(values.iter().map(|v| (v - m) * (v - m))) / (values.len() as f64 - 1.0)
}

pub fn std_dev(values: &[f64]) -> f64 {
    variance(values).sqrt()
}

/// True when every value is bitwise equal to the first.
pub fn is_constant(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] == w[1])
}

/// Pearson correlation. Returns `None` when either input has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "pearson: length mismatch");
    if a.len() < 2 || is_constant(a) || is_constant(b) {
        return None;
    }
    let ma = mean(a);
    let mb = mean(b);
    let sab = sum(a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)));
    let saa = sum(a.iter().map(|x| (x - ma) * (x - ma)));
    let sbb = sum(b.iter().map(|y| (y - mb) * (y - mb)));
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Affine map of `values` onto [-1, +1]: min goes to -1 and max to +1 exactly.
/// Returns `None` for constant input.
pub fn min_max_to_unit_interval(values: &[f64]) -> Option<Vec<f64>> {
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !(max > min) {
        return None;
    }
    let range = max - min;
    Some(
        values
            .iter()
            .map(|&v| {
                if v == min {
                    -1.0
                } else if v == max {
                    1.0
                } else {
                    (2.0 * (v - min) / range - 1.0).clamp(-1.0, 1.0)
                }
            })
            .collect(),
    )
}
