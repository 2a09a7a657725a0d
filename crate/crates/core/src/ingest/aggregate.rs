//! Weighted per-unit reductions over micro records.
//!
//! Every reduction is a per-unit sum computed with compensated summation, so
//! units can be processed in parallel and record order does not change the
//! exported digits.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::condition::{Condition, Cuts};
use super::records::MicroRecord;
use super::IngestError;
use crate::stats::CompensatedSum;

/// One unit's aggregated value. `value` is `None` when the denominator
/// weight is zero (the unit is then handled by the missing-unit policy).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitAggregate {
    pub value: Option<f64>,
    pub denominator: f64,
}

pub type PerUnit = BTreeMap<String, UnitAggregate>;

fn group_by_unit(records: &[MicroRecord]) -> BTreeMap<&str, Vec<&MicroRecord>> {
    let mut groups: BTreeMap<&str, Vec<&MicroRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.unit_id.as_str()).or_default().push(r);
    }
    groups
}

fn per_unit<F>(records: &[MicroRecord], f: F) -> PerUnit
where
    F: Fn(&[&MicroRecord]) -> UnitAggregate + Sync,
{
    let groups: Vec<(&str, Vec<&MicroRecord>)> = group_by_unit(records).into_iter().collect();
    groups
        .par_iter()
        .map(|(unit, recs)| ((*unit).to_owned(), f(recs)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// 100 × weighted share of denominator records that also match `predicate`.
pub fn aggregate_percentage(
    records: &[MicroRecord],
    predicate: &Condition,
    denominator: &Condition,
    cuts: &Cuts,
) -> PerUnit {
    per_unit(records, |recs| {
        let mut num = CompensatedSum::new();
        let mut den = CompensatedSum::new();
        for r in recs {
            if denominator.eval(r, cuts) {
                den.add(r.weight);
                if predicate.eval(r, cuts) {
                    num.add(r.weight);
                }
            }
        }
        let den = den.total();
        UnitAggregate {
            value: (den > 0.0).then(|| (100.0 * num.total() / den).clamp(0.0, 100.0)),
            denominator: den,
        }
    })
}

/// Σ(w·x)/Σw over records with a numeric `attribute` that match `filter`.
pub fn aggregate_weighted_mean(
    records: &[MicroRecord],
    attribute: &str,
    filter: &Condition,
    cuts: &Cuts,
) -> PerUnit {
    per_unit(records, |recs| {
        let mut wx = CompensatedSum::new();
        let mut w = CompensatedSum::new();
        for r in recs {
            if let Some(x) = r.number(attribute) {
                if filter.eval(r, cuts) {
                    wx.add(r.weight * x);
                    w.add(r.weight);
                }
            }
        }
        let w = w.total();
        UnitAggregate {
            value: (w > 0.0).then(|| wx.total() / w),
            denominator: w,
        }
    })
}

/// Index of Concentration at the Extremes:
/// (Σw top − Σw bottom) / Σw universe, counting only universe records.
///
/// Fails if any record satisfies both `top` and `bottom`.
pub fn compute_ice(
    records: &[MicroRecord],
    top: &Condition,
    bottom: &Condition,
    universe: &Condition,
    cuts: &Cuts,
) -> Result<PerUnit, IngestError> {
    if let Some(r) = records
        .iter()
        .find(|r| top.eval(r, cuts) && bottom.eval(r, cuts))
    {
        return Err(IngestError::Config(format!(
            "ICE top and bottom conditions overlap (a record in unit `{}` matches both)",
            r.unit_id
        )));
    }
    Ok(per_unit(records, |recs| {
        let mut t = CompensatedSum::new();
        let mut b = CompensatedSum::new();
        let mut u = CompensatedSum::new();
        for r in recs {
            if universe.eval(r, cuts) {
                u.add(r.weight);
                if top.eval(r, cuts) {
                    t.add(r.weight);
                } else if bottom.eval(r, cuts) {
                    b.add(r.weight);
                }
            }
        }
        let u = u.total();
        UnitAggregate {
            value: (u > 0.0).then(|| ((t.total() - b.total()) / u).clamp(-1.0, 1.0)),
            denominator: u,
        }
    }))
}

/// Weighted quantile with linear interpolation, `p` in [0, 1].
///
/// Each record of weight `w` counts as `w` copies of its value; the quantile
/// sits at position `(W - 1)·p` of that expanded sorted sample, with `W` the
/// total weight, and is linearly interpolated between neighbouring
/// positions. For unit weights this is the usual "linear" sample quantile,
/// and integer weights are equivalent to duplicating records.
///
/// Panics on empty input.
pub fn weighted_quantile(values: &[(f64, f64)], p: f64) -> f64 {
    assert!(!values.is_empty(), "weighted_quantile of empty input");
    let mut sorted: Vec<(f64, f64)> = values.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cumulative = Vec::with_capacity(sorted.len());
    let mut acc = CompensatedSum::new();
    for &(_, w) in &sorted {
        acc.add(w);
        cumulative.push(acc.total());
    }
    let total = acc.total();
    let last = (total - 1.0).max(0.0);
    let h = (last * p.clamp(0.0, 1.0)).clamp(0.0, last);

    // Value occupying expanded position t (0-based).
    let value_at = |t: f64| -> f64 {
        let i = cumulative.partition_point(|&c| c <= t);
        sorted[i.min(sorted.len() - 1)].0
    };
    let lo = h.floor();
    let frac = h - lo;
    let v_lo = value_at(lo);
    if frac == 0.0 {
        return v_lo;
    }
    let v_hi = value_at((lo + 1.0).min(last.max(lo)));
    v_lo + frac * (v_hi - v_lo)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Thresholds {
    pub lower: f64,
    pub upper: f64,
    pub warning: Option<String>,
}

/// Region-wide weighted percentile cut points for an ICE attribute.
/// Percentiles are given on the 0–100 scale.
pub fn derive_ice_thresholds(
    records: &[MicroRecord],
    attribute: &str,
    lower_pct: f64,
    upper_pct: f64,
) -> Result<Thresholds, IngestError> {
    let values: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| r.number(attribute).map(|x| (x, r.weight)))
        .collect();
    if values.is_empty() {
        return Err(IngestError::NoValues(attribute.to_owned()));
    }
    let lower = weighted_quantile(&values, lower_pct / 100.0);
    let upper = weighted_quantile(&values, upper_pct / 100.0);
    let warning = (lower == upper).then(|| {
        format!("attribute `{attribute}` has a degenerate distribution: P{lower_pct} = P{upper_pct} = {lower}")
    });
    Ok(Thresholds {
        lower,
        upper,
        warning,
    })
}
