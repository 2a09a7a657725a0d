use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{SpatialError, SpatialWeights};
use crate::stats;

/// Default number of permutation replicates.
pub const DEFAULT_PERMUTATIONS: usize = 999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Alternative {
    /// Count replicates at least as far as the observed value in the
    /// direction of its sign.
    #[default]
    TowardObserved,
    /// Count replicates at least as far from the null expectation
    /// `-1/(n-1)` in either direction.
    TwoSided,
}

impl std::str::FromStr for Alternative {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "one_sided" | "toward_observed" => Ok(Self::TowardObserved),
            "two_sided" => Ok(Self::TwoSided),
            other => Err(format!("unknown alternative `{other}` (expected one_sided or two_sided)")),
        }
    }
}

impl std::fmt::Display for Alternative {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::TowardObserved => "one_sided",
            Self::TwoSided => "two_sided",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoranConfig {
    pub permutations: usize,
    /// Required when `permutations > 0`.
    pub seed: Option<u64>,
    pub alternative: Alternative,
}

impl Default for MoranConfig {
    fn default() -> Self {
        Self {
            permutations: DEFAULT_PERMUTATIONS,
            seed: None,
            alternative: Alternative::default(),
        }
    }
}

impl MoranConfig {
    pub fn seeded(seed: u64) -> Self {
        Self {
            seed: Some(seed),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoranResult {
    pub i: f64,
    /// `None` when no permutations were requested.
    pub pseudo_p: Option<f64>,
    pub permutations: usize,
    /// Units entering the statistic (isolated units are left out).
    pub n_used: usize,
    pub excluded: Vec<String>,
    pub warnings: Vec<String>,
}

/// Directed links `(i, j, w_ij)`.
fn links(w: &SpatialWeights) -> Vec<(usize, usize, f64)> {
    (0..w.n_units())
        .flat_map(|i| w.neighbors(i).iter().map(move |&j| (i, j, w.weight(i, j))))
        .collect()
}

fn cross_product(z: &[f64], links: &[(usize, usize, f64)]) -> f64 {
    stats::sum(links.iter().map(|&(i, j, w)| w * z[i] * z[j]))
}

/// Moran's I of `values` over `weights`, without inference or exclusion
/// of isolated units.
pub fn morans_i_statistic(values: &[f64], weights: &SpatialWeights) -> Result<f64, SpatialError> {
    let n = values.len();
    if n != weights.n_units() {
        return Err(SpatialError::Shape(format!(
            "{n} values for {} weighted units",
            weights.n_units()
        )));
    }
    let m = stats::mean(values);
    let z: Vec<f64> = values.iter().map(|v| v - m).collect();
    let ss = stats::sum(z.iter().map(|v| v * v));
    if !(ss > 0.0) || stats::is_constant(values) {
        return Err(SpatialError::ZeroVariance);
    }
    let s0 = weights.s0();
    if s0 == 0.0 {
        return Err(SpatialError::NoLinks);
    }
    Ok(n as f64 / s0 * cross_product(&z, &links(weights)) / ss)
}

/// Moran's I with a seeded permutation test.
///
/// Replicate `r` shuffles with a ChaCha stream derived from `(seed, r)`, so
/// the p-value does not depend on the number of threads.
pub fn morans_i(values: &[f64], weights: &SpatialWeights, config: &MoranConfig) -> Result<MoranResult, SpatialError> {
    if values.len() != weights.n_units() {
        return Err(SpatialError::Shape(format!(
            "{} values for {} weighted units",
            values.len(),
            weights.n_units()
        )));
    }
    let mut warnings = Vec::new();
    let isolated = weights.isolated();
    let (values, weights, excluded) = if isolated.is_empty() {
        (values.to_vec(), weights.clone(), Vec::new())
    } else {
        let keep: Vec<usize> = (0..values.len()).filter(|i| isolated.binary_search(i).is_err()).collect();
        let ids = weights.isolated_ids();
        warnings.push(format!("isolated units excluded from Moran's I: {}", ids.join(", ")));
        (keep.iter().map(|&i| values[i]).collect(), weights.subset(&keep), ids)
    };
    let n = values.len();
    if n < 4 {
        return Err(SpatialError::TooFewUnits { needed: 4, got: n });
    }
    let observed = morans_i_statistic(&values, &weights)?;
    if config.permutations == 0 {
        return Ok(MoranResult {
            i: observed,
            pseudo_p: None,
            permutations: 0,
            n_used: n,
            excluded,
            warnings,
        });
    }
    let seed = config.seed.ok_or(SpatialError::MissingSeed)?;

    let m = stats::mean(&values);
    let z: Vec<f64> = values.iter().map(|v| v - m).collect();
    let ss = stats::sum(z.iter().map(|v| v * v));
    let scale = n as f64 / weights.s0() / ss;
    let links = links(&weights);
    let replicates: Vec<f64> = (0..config.permutations)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let mut zp = z.clone();
            zp.shuffle(&mut rng);
            scale * cross_product(&zp, &links)
        })
        .collect();

    // Ties with the observed value that differ only by summation order
    // still count as "at least as extreme".
    let eps = 1e-12 * observed.abs().max(1.0);
    let expected = -1.0 / (n as f64 - 1.0);
    let extreme = replicates
        .iter()
        .filter(|&&v| match config.alternative {
            Alternative::TowardObserved if observed >= 0.0 => v >= observed - eps,
            Alternative::TowardObserved => v <= observed + eps,
            Alternative::TwoSided => (v - expected).abs() >= (observed - expected).abs() - eps,
        })
        .count();
    Ok(MoranResult {
        i: observed,
        pseudo_p: Some((extreme as f64 + 1.0) / (config.permutations as f64 + 1.0)),
        permutations: config.permutations,
        n_used: n,
        excluded,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> SpatialWeights {
        let ids = (0..n).map(|i| i.to_string()).collect();
        let nb = (0..n)
            .map(|i| {
                let mut v = Vec::new();
                if i > 0 {
                    v.push(i - 1);
                }
                if i + 1 < n {
                    v.push(i + 1);
                }
                v
            })
            .collect();
        SpatialWeights::from_neighbors(ids, nb).unwrap()
    }

    #[test]
    fn alternating_path_is_minus_one() {
        let i = morans_i_statistic(&[1.0, -1.0, 1.0, -1.0], &path(4)).unwrap();
        assert!((i + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_field_is_an_error() {
        assert!(matches!(
            morans_i_statistic(&[2.0; 5], &path(5)),
            Err(SpatialError::ZeroVariance)
        ));
    }

    #[test]
    fn trend_on_path_is_significant() {
        let v: Vec<f64> = (0..60).map(f64::from).collect();
        let r = morans_i(&v, &path(60), &MoranConfig::seeded(7)).unwrap();
        assert!(r.i > 0.0);
        assert!(r.pseudo_p.unwrap() <= 0.05);
        assert!(r.pseudo_p.unwrap() >= 1.0 / 1000.0);
    }

    #[test]
    fn seed_is_required_for_permutations() {
        let v = [1.0, 2.0, 3.0, 5.0];
        let cfg = MoranConfig::default();
        assert!(matches!(morans_i(&v, &path(4), &cfg), Err(SpatialError::MissingSeed)));
        let cfg = MoranConfig {
            permutations: 0,
            ..cfg
        };
        assert!(morans_i(&v, &path(4), &cfg).unwrap().pseudo_p.is_none());
    }

    #[test]
    fn isolated_units_are_excluded() {
        let ids = (0..6).map(|i| i.to_string()).collect();
        let nb = vec![vec![1], vec![0, 2], vec![1, 3], vec![2, 4], vec![3], vec![]];
        let w = SpatialWeights::from_neighbors(ids, nb).unwrap();
        let v = [1.0, 2.0, 3.0, 4.0, 5.0, 100.0];
        let r = morans_i(&v, &w, &MoranConfig::seeded(1)).unwrap();
        assert_eq!(r.excluded, vec!["5".to_owned()]);
        assert_eq!(r.n_used, 5);
        assert_eq!(r.warnings.len(), 1);
        let direct = morans_i_statistic(&v[..5], &path(5)).unwrap();
        assert_eq!(r.i, direct);
    }

    #[test]
    fn row_standardized_path() {
        let w = path(4).row_standardize();
        let i = morans_i_statistic(&[1.0, -1.0, 1.0, -1.0], &w).unwrap();
        assert!((i + 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_sided_p_is_bounded_and_reproducible() {
        let v: Vec<f64> = (0..30).map(|i| ((i * 7919) % 31) as f64).collect();
        let cfg = MoranConfig {
            alternative: Alternative::TwoSided,
            ..MoranConfig::seeded(3)
        };
        let a = morans_i(&v, &path(30), &cfg).unwrap();
        let b = morans_i(&v, &path(30), &cfg).unwrap();
        assert_eq!(a, b);
        let p = a.pseudo_p.unwrap();
        assert!((1.0 / 1000.0..=1.0).contains(&p));
    }
}
