use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::moran::{morans_i, MoranConfig};
use super::{SpatialError, SpatialWeights};
use crate::linalg;
use crate::stats::{self, CompensatedSum};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Ols,
    Gwr,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ols => "ols",
            Self::Gwr => "gwr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    /// `(1 - (d/h)^2)^2` for `d < h`, zero beyond.
    #[default]
    AdaptiveBisquare,
    /// Weight one for `d <= h`. With `k = n` every local fit is the global
    /// OLS fit; meant for diagnostics.
    Uniform,
}

impl std::str::FromStr for Kernel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "adaptive_bisquare" => Ok(Self::AdaptiveBisquare),
            "uniform" => Ok(Self::Uniform),
            other => Err(format!("unknown kernel `{other}` (expected adaptive_bisquare or uniform)")),
        }
    }
}

impl std::fmt::Display for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::AdaptiveBisquare => "adaptive_bisquare",
            Self::Uniform => "uniform",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GwrConfig {
    /// Neighbors inside the bandwidth, counting the unit itself.
    pub neighbor_count: usize,
    pub kernel: Kernel,
}

impl GwrConfig {
    pub fn new(neighbor_count: usize) -> Self {
        Self {
            neighbor_count,
            kernel: Kernel::AdaptiveBisquare,
        }
    }
}

/// Predictors in the simple regressions (one slope).
const PREDICTORS: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialFit {
    pub model: ModelKind,
    pub observed: Vec<f64>,
    /// `[intercept, slope]`: a single pair for OLS, one per unit for GWR.
    pub coefficients: Vec<[f64; 2]>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub standardized_residuals: Vec<f64>,
    /// Per-unit bandwidths (GWR only).
    pub bandwidths: Vec<f64>,
    pub hat_trace: f64,
    pub rss: f64,
    pub r2: f64,
    pub r2_global_adjusted: f64,
    pub aicc: f64,
    pub moran_i: Option<f64>,
    pub moran_p: Option<f64>,
    pub warnings: Vec<String>,
}

impl SpatialFit {
    /// Coefficients in effect at unit `i`.
    pub fn coefficients_at(&self, i: usize) -> [f64; 2] {
        match self.model {
            ModelKind::Ols => self.coefficients[0],
            ModelKind::Gwr => self.coefficients[i],
        }
    }

    /// Attaches Moran's I of the standardized residuals.
    pub fn attach_moran(&mut self, weights: &SpatialWeights, config: &MoranConfig) -> Result<(), SpatialError> {
        let r = morans_i(&self.standardized_residuals, weights, config)?;
        self.moran_i = Some(r.i);
        self.moran_p = r.pseudo_p;
        self.warnings.extend(r.warnings);
        Ok(())
    }
}

/// Corrected Akaike criterion for a Gaussian linear smoother with hat trace
/// `tr_s`: `2n ln(sigma) + n ln(2 pi) + n (n + tr_s) / (n - 2 - tr_s)` with
/// `sigma^2 = rss / n`.
pub fn aicc(n: usize, rss: f64, tr_s: f64) -> Result<f64, SpatialError> {
    let nf = n as f64;
    let denom = nf - 2.0 - tr_s;
    if !(denom > 0.0) {
        return Err(SpatialError::TooFlexible { n, hat_trace: tr_s });
    }
    let sigma = (rss / nf).sqrt();
    Ok(2.0 * nf * sigma.ln() + nf * (2.0 * std::f64::consts::PI).ln() + nf * (nf + tr_s) / denom)
}

/// `1 - (rss / (n - tr_s)) / (tss / (n - 1))`.
pub fn adjusted_r2(rss: f64, tss: f64, n: usize, tr_s: f64) -> f64 {
    let nf = n as f64;
    1.0 - (rss / (nf - tr_s)) / (tss / (nf - 1.0))
}

fn standardize_residuals(residuals: &[f64]) -> Vec<f64> {
    let sd = stats::std_dev(residuals);
    if sd > 0.0 {
        residuals.iter().map(|r| r / sd).collect()
    } else {
        residuals.to_vec()
    }
}

fn check_inputs(y: &[f64], x: &[f64], min_n: usize) -> Result<(), SpatialError> {
    if y.len() != x.len() {
        return Err(SpatialError::Shape(format!("{} outcomes for {} predictor values", y.len(), x.len())));
    }
    if y.len() < min_n {
        return Err(SpatialError::TooFewUnits {
            needed: min_n,
            got: y.len(),
        });
    }
    if y.iter().chain(x).any(|v| !v.is_finite()) {
        return Err(SpatialError::NonFinite);
    }
    if stats::is_constant(x) {
        return Err(SpatialError::ConstantPredictor);
    }
    Ok(())
}

fn finish(
    model: ModelKind,
    y: &[f64],
    coefficients: Vec<[f64; 2]>,
    fitted: Vec<f64>,
    bandwidths: Vec<f64>,
    hat_trace: f64,
    mut warnings: Vec<String>,
) -> Result<SpatialFit, SpatialError> {
    let n = y.len();
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(o, f)| o - f).collect();
    let rss = stats::sum(residuals.iter().map(|r| r * r));
    let my = stats::mean(y);
    let tss = stats::sum(y.iter().map(|v| (v - my) * (v - my)));
    let aicc = match (model, aicc(n, rss, hat_trace)) {
        (_, Ok(v)) => v,
        (ModelKind::Ols, Err(_)) => {
            warnings.push(format!("AICc is undefined for OLS with {n} units"));
            f64::NAN
        }
        (ModelKind::Gwr, Err(e)) => return Err(e),
    };
    Ok(SpatialFit {
        model,
        observed: y.to_vec(),
        coefficients,
        standardized_residuals: standardize_residuals(&residuals),
        fitted,
        residuals,
        bandwidths,
        hat_trace,
        rss,
        r2: 1.0 - rss / tss,
        r2_global_adjusted: adjusted_r2(rss, tss, n, hat_trace),
        aicc,
        moran_i: None,
        moran_p: None,
        warnings,
    })
}

/// Ordinary least squares of `y` on `x` with intercept.
///
/// With fewer than five units the corrected criterion is undefined and
/// reported as NaN.
pub fn ols_simple(y: &[f64], x: &[f64]) -> Result<SpatialFit, SpatialError> {
    check_inputs(y, x, 3)?;
    let (mx, my) = (stats::mean(x), stats::mean(y));
    let mut sxy = CompensatedSum::new();
    let mut sxx = CompensatedSum::new();
    for (a, b) in x.iter().zip(y) {
        sxy.add((a - mx) * (b - my));
        sxx.add((a - mx) * (a - mx));
    }
    let slope = sxy.total() / sxx.total();
    let intercept = my - slope * mx;
    let fitted = x.iter().map(|v| intercept + slope * v).collect();
    finish(
        ModelKind::Ols,
        y,
        vec![[intercept, slope]],
        fitted,
        Vec::new(),
        (PREDICTORS + 1) as f64,
        Vec::new(),
    )
}

/// Relative size of the nudge applied to duplicate coordinates.
pub const JITTER_SCALE: f64 = 1e-9;

/// Moves every repeat of an already seen coordinate by `JITTER_SCALE` of the
/// bounding-box diagonal in a direction drawn from a fixed-seed stream keyed
/// by the unit index. Returns the adjusted coordinates and the moved units.
pub fn jitter_duplicates(coords: &[[f64; 2]]) -> (Vec<[f64; 2]>, Vec<usize>) {
    let bits = |p: &[f64; 2]| (p[0].to_bits(), p[1].to_bits());
    let mut seen = std::collections::HashSet::new();
    let dup: Vec<usize> = (0..coords.len()).filter(|&i| !seen.insert(bits(&coords[i]))).collect();
    if dup.is_empty() {
        return (coords.to_vec(), dup);
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in coords {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let diag = (hi[0] - lo[0]).hypot(hi[1] - lo[1]);
    let step = JITTER_SCALE * if diag > 0.0 { diag } else { 1.0 };
    let mut out = coords.to_vec();
    let mut taken = std::collections::HashSet::new();
    for p in coords {
        taken.insert(bits(p));
    }
    for &i in &dup {
        let mut rng = ChaCha8Rng::seed_from_u64(0x6a17);
        rng.set_stream(i as u64);
        loop {
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let p = [coords[i][0] + step * theta.cos(), coords[i][1] + step * theta.sin()];
            if taken.insert(bits(&p)) {
                out[i] = p;
                break;
            }
        }
    }
    (out, dup)
}

struct LocalFit {
    beta: [f64; 2],
    hat: f64,
    bandwidth: f64,
}

fn local_fit(i: usize, y: &[f64], x: &[f64], coords: &[[f64; 2]], config: &GwrConfig) -> Result<LocalFit, SpatialError> {
    let n = y.len();
    let dist: Vec<f64> = coords
        .iter()
        .map(|c| (c[0] - coords[i][0]).hypot(c[1] - coords[i][1]))
        .collect();
    let mut sorted = dist.clone();
    let k = config.neighbor_count;
    let (_, &mut h, _) = sorted.select_nth_unstable_by(k - 1, f64::total_cmp);
    let mut sums = [CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new()];
    let mut rhs = [CompensatedSum::new(), CompensatedSum::new()];
    let mut support_x: Option<(f64, bool)> = None;
    for j in 0..n {
        let w = match config.kernel {
            Kernel::AdaptiveBisquare if dist[j] < h => {
                let u = dist[j] / h;
                (1.0 - u * u).powi(2)
            }
            Kernel::Uniform if dist[j] <= h => 1.0,
            _ => 0.0,
        };
        if w == 0.0 {
            continue;
        }
        support_x = match support_x {
            None => Some((x[j], false)),
            Some((x0, varies)) => Some((x0, varies || x[j] != x0)),
        };
        sums[0].add(w);
        sums[1].add(w * x[j]);
        sums[2].add(w * x[j] * x[j]);
        rhs[0].add(w * y[j]);
        rhs[1].add(w * x[j] * y[j]);
    }
    let singular = || SpatialError::SingularLocalDesign { unit: i };
    if !matches!(support_x, Some((_, true))) {
        return Err(singular());
    }
    let a = [[sums[0].total(), sums[1].total()], [sums[1].total(), sums[2].total()]];
    let inv = linalg::inverse_2x2(a).ok_or_else(singular)?;
    let b = [rhs[0].total(), rhs[1].total()];
    let beta = [
        inv[0][0] * b[0] + inv[0][1] * b[1],
        inv[1][0] * b[0] + inv[1][1] * b[1],
    ];
    // S_ii = x_i' (X'WX)^-1 x_i w_ii with x_i = (1, x[i]) and w_ii = 1.
    let xi = [1.0, x[i]];
    let hat = xi[0] * (inv[0][0] * xi[0] + inv[0][1] * xi[1]) + xi[1] * (inv[1][0] * xi[0] + inv[1][1] * xi[1]);
    Ok(LocalFit { beta, hat, bandwidth: h })
}

/// Geographically weighted regression of `y` on `x` with an adaptive
/// kernel whose bandwidth at each unit is the distance to its
/// `neighbor_count`-th nearest unit (the unit itself counts as the first).
pub fn gwr_fit(y: &[f64], x: &[f64], coordinates: &[[f64; 2]], config: &GwrConfig) -> Result<SpatialFit, SpatialError> {
    check_inputs(y, x, 3)?;
    let n = y.len();
    if coordinates.len() != n {
        return Err(SpatialError::Shape(format!("{} coordinates for {n} units", coordinates.len())));
    }
    if coordinates.iter().flatten().any(|v| !v.is_finite()) {
        return Err(SpatialError::NonFinite);
    }
    let k = config.neighbor_count;
    if k < PREDICTORS + 2 || k > n {
        return Err(SpatialError::InvalidConfig(format!(
            "neighbor_count must lie in [{}, {n}], got {k}",
            PREDICTORS + 2
        )));
    }
    let mut warnings = Vec::new();
    let (coords, moved) = jitter_duplicates(coordinates);
    if !moved.is_empty() {
        warnings.push(format!(
            "{} duplicate coordinates perturbed by {JITTER_SCALE:e} of the extent (unit indices {:?})",
            moved.len(),
            moved
        ));
    }
    let locals: Vec<LocalFit> = (0..n)
        .into_par_iter()
        .map(|i| local_fit(i, y, x, &coords, config))
        .collect::<Result<_, _>>()?;
    let fitted = locals.iter().zip(x).map(|(l, v)| l.beta[0] + l.beta[1] * v).collect();
    let hat_trace = stats::sum(locals.iter().map(|l| l.hat));
    finish(
        ModelKind::Gwr,
        y,
        locals.iter().map(|l| l.beta).collect(),
        fitted,
        locals.iter().map(|l| l.bandwidth).collect(),
        hat_trace,
        warnings,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelRow {
    pub indicator: String,
    pub model: ModelKind,
    pub adjusted_r2: f64,
    pub aicc: f64,
    pub moran_i: Option<f64>,
    pub moran_p: Option<f64>,
    /// Lowest AICc in the comparison.
    pub best: bool,
    /// Residual Moran's p below the significance level.
    pub dependence: bool,
}

/// Significance level for flagging residual spatial dependence.
pub const DEPENDENCE_LEVEL: f64 = 0.05;

/// Ranks fits of the same outcome by ascending AICc and flags residual
/// spatial dependence.
pub fn compare_models(fits: &[(String, &SpatialFit)]) -> Result<Vec<ModelRow>, SpatialError> {
    if let Some((_, first)) = fits.first() {
        if let Some((name, _)) = fits.iter().find(|(_, f)| f.observed != first.observed) {
            return Err(SpatialError::MixedOutcomes(name.clone()));
        }
    }
    let mut rows: Vec<ModelRow> = fits
        .iter()
        .map(|(name, f)| ModelRow {
            indicator: name.clone(),
            model: f.model,
            adjusted_r2: f.r2_global_adjusted,
            aicc: f.aicc,
            moran_i: f.moran_i,
            moran_p: f.moran_p,
            best: false,
            dependence: f.moran_p.is_some_and(|p| p < DEPENDENCE_LEVEL),
        })
        .collect();
    rows.sort_by(|a, b| match (a.aicc.is_nan(), b.aicc.is_nan()) {
        (false, false) => a.aicc.total_cmp(&b.aicc),
        (x, y) => x.cmp(&y),
    });
    if let Some(r) = rows.first_mut() {
        r.best = true;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_coords(n: usize) -> Vec<[f64; 2]> {
        (0..n).map(|i| [i as f64, (i % 3) as f64 * 0.5]).collect()
    }

    #[test]
    fn ols_exact_line() {
        let x: Vec<f64> = (0..8).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let f = ols_simple(&y, &x).unwrap();
        let [a, b] = f.coefficients[0];
        assert!((a - 1.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12);
        assert!(f.residuals.iter().all(|r| r.abs() < 1e-12));
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ols_scaling_y() {
        let x = [1.0, 2.0, 4.0, 3.0, 7.0, 5.0];
        let y = [2.0, 1.0, 5.0, 3.5, 6.0, 4.0];
        let y10: Vec<f64> = y.iter().map(|v| 10.0 * v).collect();
        let a = ols_simple(&y, &x).unwrap();
        let b = ols_simple(&y10, &x).unwrap();
        assert!((b.coefficients[0][1] - 10.0 * a.coefficients[0][1]).abs() < 1e-12);
        for (r, s) in a.residuals.iter().zip(&b.residuals) {
            assert!((s - 10.0 * r).abs() < 1e-11);
        }
        assert!((a.r2 - b.r2).abs() < 1e-12);
    }

    #[test]
    fn ols_rejects_constant_x() {
        assert!(matches!(
            ols_simple(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]),
            Err(SpatialError::ConstantPredictor)
        ));
    }

    #[test]
    fn ols_aicc_matches_hand_value() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y = [1.1, 1.9, 3.2, 3.9, 5.3, 5.8];
        let f = ols_simple(&y, &x).unwrap();
        let n = 6.0;
        let expect = n * (f.rss / n).ln() + n * (2.0 * std::f64::consts::PI).ln() + n * (n + 2.0) / (n - 4.0);
        assert!((f.aicc - expect).abs() < 1e-12);
        let std_sd = stats::std_dev(&f.standardized_residuals);
        assert!((std_sd - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gwr_uniform_full_support_is_ols() {
        let n = 30;
        let x: Vec<f64> = (0..n).map(|i| ((i * 37) % 11) as f64).collect();
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| 0.5 * v + (i % 4) as f64).collect();
        let cfg = GwrConfig {
            neighbor_count: n,
            kernel: Kernel::Uniform,
        };
        let g = gwr_fit(&y, &x, &line_coords(n), &cfg).unwrap();
        let o = ols_simple(&y, &x).unwrap();
        for c in &g.coefficients {
            assert!((c[0] - o.coefficients[0][0]).abs() < 1e-9);
            assert!((c[1] - o.coefficients[0][1]).abs() < 1e-9);
        }
        assert!((g.hat_trace - 2.0).abs() < 1e-9);
        assert!((g.aicc - o.aicc).abs() < 1e-9);
    }

    #[test]
    fn gwr_singular_local_design_names_unit() {
        let n = 10;
        let x: Vec<f64> = (0..n).map(|i| if i < 5 { 1.0 } else { i as f64 }).collect();
        let y: Vec<f64> = (0..n).map(f64::from).collect();
        let coords: Vec<[f64; 2]> = (0..n).map(|i| [i as f64, 0.0]).collect();
        let err = gwr_fit(&y, &x, &coords, &GwrConfig::new(3)).unwrap_err();
        assert!(matches!(err, SpatialError::SingularLocalDesign { unit } if unit < 5));
    }

    #[test]
    fn gwr_rejects_bad_neighbor_count() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!(gwr_fit(&x, &x, &line_coords(4), &GwrConfig::new(2)).is_err());
        assert!(gwr_fit(&x, &x, &line_coords(4), &GwrConfig::new(5)).is_err());
    }

    #[test]
    fn jitter_moves_only_repeats() {
        let c = vec![[0.0, 0.0], [1.0, 1.0], [0.0, 0.0], [0.0, 0.0]];
        let (j, moved) = jitter_duplicates(&c);
        assert_eq!(moved, vec![2, 3]);
        assert_eq!(j[0], c[0]);
        assert_ne!(j[2], j[3]);
        let d = (j[2][0]).hypot(j[2][1]);
        assert!((d - 2f64.sqrt() * 1e-9).abs() < 1e-18);
        assert_eq!(jitter_duplicates(&c).0, j);
    }

    #[test]
    fn ranking_and_flags() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let mut a = ols_simple(&y, &x).unwrap();
        let mut b = a.clone();
        a.aicc = -524.0;
        b.aicc = -4702.75;
        a.moran_p = Some(0.014);
        let rows = compare_models(&[("a".into(), &a), ("b".into(), &b)]).unwrap();
        assert_eq!(rows[0].indicator, "b");
        assert!(rows[0].best && !rows[1].best);
        assert!(rows[1].dependence && !rows[0].dependence);

        let mut c = a.clone();
        c.observed[0] += 1.0;
        assert!(matches!(
            compare_models(&[("a".into(), &a), ("c".into(), &c)]),
            Err(SpatialError::MixedOutcomes(n)) if n == "c"
        ));
    }
}
