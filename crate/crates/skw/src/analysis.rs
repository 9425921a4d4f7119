//! Statistical layer: difference curves between empirical exit CDFs and the
//! harmonic CDF, and the three tests built on them.
//!
//! The object under study is diff(theta) = F(theta) - H(theta). If the exit
//! law converges to harmonic measure with a first-order correction
//! proportional to the lattice spacing, then diff shrinks linearly in the
//! spacing (collapse test), its overall size per table is domain-independent
//! in ratio (ratio test), and its shape per domain is table-independent after
//! normalization (shape test).

use crate::engine::{EcdfAccumulator, EngineError, RunConfig};
use crate::geometry::Domain;
use crate::harmonic::{ConformalMap, MapError};
use crate::transition::TransitionTable;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("need at least two curves")]
    NeedTwo,
    #[error("curves incompatible: {0}")]
    Incompatible(String),
    #[error("lattice spacings must be pairwise distinct")]
    DuplicateDelta,
    #[error("curve has zero L1 norm")]
    ZeroNorm,
    #[error("ratio tests require symmetric tables: {0}")]
    AsymmetricTable(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("map: {0}")]
    Map(#[from] MapError),
}

/// F - H on the bin-edge grid, with per-point binomial standard errors.
#[derive(Debug, Clone, Serialize)]
pub struct DifferenceCurve {
    pub domain: Domain,
    pub table: TransitionTable,
    pub delta: f64,
    /// Exit count behind the ECDF.
    pub n: u64,
    pub theta: Vec<f64>,
    pub f: Vec<f64>,
    pub h: Vec<f64>,
    pub diff: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Difference curve of one run. The grid is the accumulator's bin edges
/// including both endpoints, so diff(0) = diff(2*pi) = 0 exactly.
pub fn difference_curve(
    acc: &EcdfAccumulator,
    cfg: &RunConfig,
) -> Result<DifferenceCurve, AnalysisError> {
    if acc.n_bins != cfg.n_bins {
        return Err(AnalysisError::Incompatible(format!(
            "accumulator has {} bins, config {}",
            acc.n_bins, cfg.n_bins
        )));
    }
    let theta = EcdfAccumulator::bin_edges(acc.n_bins);
    let f = acc.ecdf(&theta)?;
    let map = ConformalMap::new(&cfg.domain)?;
    let h = theta
        .iter()
        .map(|&t| map.harmonic_cdf(t))
        .collect::<Result<Vec<_>, _>>()?;
    let n = acc.exits();
    let diff: Vec<f64> = f.iter().zip(&h).map(|(a, b)| a - b).collect();
    let sigma = f
        .iter()
        .map(|&p| (p * (1.0 - p) / n as f64).sqrt())
        .collect();
    Ok(DifferenceCurve {
        domain: cfg.domain,
        table: cfg.table,
        delta: cfg.delta,
        n,
        theta,
        f,
        h,
        diff,
        sigma,
    })
}

/// Pointwise two-standard-deviation envelope around the difference curve.
pub fn error_band(curve: &DifferenceCurve) -> Vec<f64> {
    curve.sigma.iter().map(|s| 2.0 * s).collect()
}

/// Trapezoidal integral of |values| over the grid.
pub fn l1_trapezoid(theta: &[f64], values: &[f64]) -> f64 {
    let mut sum = 0.0;
    for k in 1..theta.len() {
        sum += (theta[k] - theta[k - 1]) * (values[k].abs() + values[k - 1].abs()) / 2.0;
    }
    sum
}

/// L1 norm of the difference curve.
pub fn l1_norm(curve: &DifferenceCurve) -> f64 {
    l1_trapezoid(&curve.theta, &curve.diff)
}

#[derive(Debug, Clone, Serialize)]
pub struct CollapseReport {
    pub delta_ref: f64,
    /// Per curve, in input order: delta_ref / delta.
    pub factors: Vec<f64>,
    pub max_discrepancy: f64,
    /// Grid parameter where the maximum was attained.
    pub worst_theta: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Maximum standardized discrepancy between scaled curve pairs: for each grid
/// point and each pair, |s_i d_i - s_j d_j| over the combined two-sigma
/// envelope sqrt((s_i 2 sigma_i)^2 + (s_j 2 sigma_j)^2). Points where the
/// envelope vanishes (both CDFs saturated at 0 or 1) carry no statistical
/// resolution and are skipped.
fn max_standardized_discrepancy(curves: &[&DifferenceCurve], scales: &[f64]) -> (f64, f64) {
    let mut worst = (0.0f64, 0.0f64);
    let n_pts = curves[0].theta.len();
    for i in 0..curves.len() {
        for j in (i + 1)..curves.len() {
            for k in 0..n_pts {
                let num = (scales[i] * curves[i].diff[k] - scales[j] * curves[j].diff[k]).abs();
                let ei = 2.0 * scales[i] * curves[i].sigma[k];
                let ej = 2.0 * scales[j] * curves[j].sigma[k];
                let den = (ei * ei + ej * ej).sqrt();
                if den == 0.0 {
                    continue;
                }
                let d = num / den;
                if d > worst.0 {
                    worst = (d, curves[0].theta[k]);
                }
            }
        }
    }
    worst
}

fn check_common_grid(curves: &[&DifferenceCurve]) -> Result<(), AnalysisError> {
    if curves.len() < 2 {
        return Err(AnalysisError::NeedTwo);
    }
    let first = &curves[0].theta;
    for c in &curves[1..] {
        if c.theta != *first {
            return Err(AnalysisError::Incompatible("theta grids differ".into()));
        }
    }
    Ok(())
}

pub const DEFAULT_COLLAPSE_THRESHOLD: f64 = 3.0;

/// First-order collapse test: scale each curve by delta_ref/delta (delta_ref
/// the smallest spacing present) and measure how far the scaled curves sit
/// from one another in units of their combined error envelopes. If the
/// deviation from harmonic measure is proportional to the spacing, the scaled
/// curves agree within noise.
pub fn rescale_and_collapse(
    curves: &[&DifferenceCurve],
    threshold: f64,
) -> Result<CollapseReport, AnalysisError> {
    check_common_grid(curves)?;
    for c in &curves[1..] {
        if c.domain != curves[0].domain {
            return Err(AnalysisError::Incompatible("domains differ".into()));
        }
        if c.table != curves[0].table {
            return Err(AnalysisError::Incompatible("tables differ".into()));
        }
    }
    for i in 0..curves.len() {
        for j in (i + 1)..curves.len() {
            if curves[i].delta == curves[j].delta {
                return Err(AnalysisError::DuplicateDelta);
            }
        }
    }
    let delta_ref = curves
        .iter()
        .map(|c| c.delta)
        .fold(f64::INFINITY, f64::min);
    let factors: Vec<f64> = curves.iter().map(|c| delta_ref / c.delta).collect();
    let (max_discrepancy, worst_theta) = max_standardized_discrepancy(curves, &factors);
    Ok(CollapseReport {
        delta_ref,
        factors,
        max_discrepancy,
        worst_theta,
        threshold,
        pass: max_discrepancy <= threshold,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ShapeReport {
    /// L1 norm of each curve, in input order.
    pub norms: Vec<f64>,
    pub max_discrepancy: f64,
    pub worst_theta: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Shape test: divide each curve by its own L1 norm and compare the
/// normalized curves pointwise in standardized units. Curves of one domain
/// under different symmetric tables should match (one shape per domain, only
/// the scale differs); curves of different domains should not.
pub fn shape_universality_test(
    curves: &[&DifferenceCurve],
    threshold: f64,
) -> Result<ShapeReport, AnalysisError> {
    check_common_grid(curves)?;
    for c in &curves[1..] {
        if c.delta != curves[0].delta {
            return Err(AnalysisError::Incompatible(
                "shape comparison requires equal spacings".into(),
            ));
        }
    }
    let norms: Vec<f64> = curves.iter().map(|c| l1_norm(c)).collect();
    if norms.iter().any(|&n| n == 0.0) {
        return Err(AnalysisError::ZeroNorm);
    }
    let scales: Vec<f64> = norms.iter().map(|n| 1.0 / n).collect();
    let (max_discrepancy, worst_theta) = max_standardized_discrepancy(curves, &scales);
    Ok(ShapeReport {
        norms,
        max_discrepancy,
        worst_theta,
        threshold,
        pass: max_discrepancy <= threshold,
    })
}

/// One domain's worth of input to the ratio test: runs of two tables on the
/// same domain.
pub struct RatioCell<'a> {
    pub cfg_x: &'a RunConfig,
    pub acc_x: &'a EcdfAccumulator,
    pub cfg_y: &'a RunConfig,
    pub acc_y: &'a EcdfAccumulator,
}

#[derive(Debug, Clone, Serialize)]
pub struct RatioInterval {
    pub domain: String,
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RatioReport {
    pub intervals: Vec<RatioInterval>,
    pub n_boot: usize,
    /// All domains' intervals share a common point.
    pub pass: bool,
}

pub const DEFAULT_BOOTSTRAP_REPLICATES: usize = 1000;

/// Multinomial resample of a histogram, by sequential conditional binomials.
fn resample_counts(counts: &[u64], exits: u64, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let mut out = vec![0u64; counts.len()];
    let mut remaining_n = exits;
    let mut remaining_p = 1.0f64;
    let mut last_nonzero = 0usize;
    for (k, &c) in counts.iter().enumerate() {
        if c == 0 || remaining_n == 0 {
            continue;
        }
        last_nonzero = k;
        let p = c as f64 / exits as f64;
        let frac = (p / remaining_p).clamp(0.0, 1.0);
        let draw = if frac >= 1.0 {
            remaining_n
        } else {
            Binomial::new(remaining_n, frac).unwrap().sample(rng)
        };
        out[k] = draw;
        remaining_n -= draw;
        remaining_p -= p;
    }
    // Floating-point drift can leave a few samples unassigned.
    out[last_nonzero] += remaining_n;
    out
}

/// L1 norm of |F - H| for a histogram against precomputed H at the edges.
fn l1_of_counts(counts: &[u64], exits: u64, theta: &[f64], h: &[f64]) -> f64 {
    let inv = 1.0 / exits as f64;
    let mut cum = 0u64;
    let mut prev = (0.0f64 - h[0]).abs();
    let mut sum = 0.0;
    for k in 1..theta.len() {
        cum += counts[k - 1];
        let v = (cum as f64 * inv - h[k]).abs();
        sum += (theta[k] - theta[k - 1]) * (v + prev) / 2.0;
        prev = v;
    }
    sum
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// Ratio test over prepared accumulators: per domain, the ratio of L1 norms
/// of the two tables' difference curves, with bootstrap 95% intervals from
/// multinomial resampling of the bin counts. The test passes when the
/// domains' intervals overlap, as they must if each table's deviation scale
/// is a per-table constant times a per-domain profile.
pub fn ratio_test_from_accumulators(
    cells: &[RatioCell],
    n_boot: usize,
    boot_seed: u64,
) -> Result<RatioReport, AnalysisError> {
    if cells.is_empty() {
        return Err(AnalysisError::NeedTwo);
    }
    let delta0 = cells[0].cfg_x.delta;
    for cell in cells {
        if cell.cfg_x.domain != cell.cfg_y.domain {
            return Err(AnalysisError::Incompatible(
                "both tables of one cell must run on the same domain".into(),
            ));
        }
        for cfg in [cell.cfg_x, cell.cfg_y] {
            if !cfg.table.is_symmetric() {
                return Err(AnalysisError::AsymmetricTable(cfg.table.label()));
            }
            if cfg.delta != delta0 {
                return Err(AnalysisError::Incompatible(
                    "all runs must share one spacing".into(),
                ));
            }
        }
        if cell.acc_x.n_bins != cell.acc_y.n_bins {
            return Err(AnalysisError::Incompatible("bin counts differ".into()));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(boot_seed);
    let mut intervals = Vec::with_capacity(cells.len());
    for cell in cells {
        let theta = EcdfAccumulator::bin_edges(cell.acc_x.n_bins);
        let map = ConformalMap::new(&cell.cfg_x.domain)?;
        let h = theta
            .iter()
            .map(|&t| map.harmonic_cdf(t))
            .collect::<Result<Vec<_>, _>>()?;
        let (ex, ey) = (cell.acc_x.exits(), cell.acc_y.exits());
        if ex == 0 || ey == 0 {
            return Err(AnalysisError::Engine(EngineError::Empty));
        }
        let lx = l1_of_counts(&cell.acc_x.bin_counts, ex, &theta, &h);
        let ly = l1_of_counts(&cell.acc_y.bin_counts, ey, &theta, &h);
        if ly == 0.0 || lx == 0.0 {
            return Err(AnalysisError::ZeroNorm);
        }
        let mut ratios = Vec::with_capacity(n_boot);
        for _ in 0..n_boot {
            let rx = resample_counts(&cell.acc_x.bin_counts, ex, &mut rng);
            let ry = resample_counts(&cell.acc_y.bin_counts, ey, &mut rng);
            let bx = l1_of_counts(&rx, ex, &theta, &h);
            let by = l1_of_counts(&ry, ey, &theta, &h);
            if by > 0.0 {
                ratios.push(bx / by);
            }
        }
        ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
        intervals.push(RatioInterval {
            domain: cell.cfg_x.domain.label(),
            estimate: lx / ly,
            lo: percentile(&ratios, 0.025),
            hi: percentile(&ratios, 0.975),
        });
    }

    let lo_max = intervals.iter().map(|i| i.lo).fold(f64::MIN, f64::max);
    let hi_min = intervals.iter().map(|i| i.hi).fold(f64::MAX, f64::min);
    Ok(RatioReport {
        pass: lo_max <= hi_min,
        n_boot,
        intervals,
    })
}

fn domain_seed(master: u64, k: u64) -> u64 {
    // One fixed stream per domain index; the two tables of a domain reuse it,
    // so identical tables produce identical runs and a ratio of exactly 1.
    let mut s = master ^ (k + 1).wrapping_mul(0xD1B54A32D192ED03);
    s ^= s >> 27;
    s = s.wrapping_mul(0x94D049BB133111EB);
    s ^ (s >> 31)
}

/// Run both tables on every domain and ratio-test the results. Cells share
/// one spacing and sample count; each domain gets its own seed, common to the
/// two tables.
#[allow(clippy::too_many_arguments)]
pub fn cross_domain_ratio_test(
    table_x: &TransitionTable,
    table_y: &TransitionTable,
    domains: &[Domain],
    delta: f64,
    n_samples: u64,
    n_bins: usize,
    master_seed: u64,
    n_workers: usize,
    n_boot: usize,
) -> Result<RatioReport, AnalysisError> {
    for t in [table_x, table_y] {
        if !t.is_symmetric() {
            return Err(AnalysisError::AsymmetricTable(t.label()));
        }
    }
    let mut runs: Vec<(RunConfig, EcdfAccumulator, RunConfig, EcdfAccumulator)> =
        Vec::with_capacity(domains.len());
    for (k, &domain) in domains.iter().enumerate() {
        let seed = domain_seed(master_seed, k as u64);
        let mk = |table: &TransitionTable| RunConfig {
            domain,
            table: *table,
            delta,
            n_samples,
            n_bins,
            master_seed: seed,
            n_workers,
        };
        let cfg_x = mk(table_x);
        let cfg_y = mk(table_y);
        let acc_x = crate::engine::run_experiment(&cfg_x)?;
        let acc_y = crate::engine::run_experiment(&cfg_y)?;
        runs.push((cfg_x, acc_x, cfg_y, acc_y));
    }
    let cells: Vec<RatioCell> = runs
        .iter()
        .map(|(cx, ax, cy, ay)| RatioCell {
            cfg_x: cx,
            acc_x: ax,
            cfg_y: cy,
            acc_y: ay,
        })
        .collect();
    ratio_test_from_accumulators(&cells, n_boot, domain_seed(master_seed, 0xB007))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DiskDomain, StripDomain};
    use crate::transition::uniform_table;
    use rand::Rng;
    use std::f64::consts::TAU;

    fn d1() -> Domain {
        Domain::Disk(DiskDomain::new(0.3, -0.25, 1.0).unwrap())
    }

    fn d2() -> Domain {
        Domain::Strip(StripDomain::new(0.6, -0.4).unwrap())
    }

    fn cfg_for(domain: Domain, n_bins: usize, n: u64) -> RunConfig {
        RunConfig {
            domain,
            table: uniform_table(),
            delta: 0.01,
            n_samples: n,
            n_bins,
            master_seed: 7,
            n_workers: 0,
        }
    }

    /// Accumulator with counts drawn exactly from the harmonic CDF.
    fn synthetic_acc(domain: &Domain, n: u64, n_bins: usize, seed: u64) -> EcdfAccumulator {
        let map = ConformalMap::new(domain).unwrap();
        let mut acc = EcdfAccumulator::new(n_bins);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n {
            acc.record(map.sample_boundary_parameter(rng.gen::<f64>()));
        }
        acc
    }

    /// Hand-built curve with the given diff values and constant sigma.
    fn curve_with(diff: Vec<f64>, sigma: f64, delta: f64) -> DifferenceCurve {
        let n = diff.len();
        let theta: Vec<f64> = (0..n).map(|k| TAU * k as f64 / (n - 1) as f64).collect();
        DifferenceCurve {
            domain: d1(),
            table: uniform_table(),
            delta,
            n: 1000,
            f: diff.clone(),
            h: vec![0.0; n],
            sigma: vec![sigma; n],
            theta,
            diff,
        }
    }

    #[test]
    fn difference_curve_endpoints_and_band() {
        let cfg = cfg_for(d1(), 100, 20_000);
        let acc = synthetic_acc(&cfg.domain, cfg.n_samples, cfg.n_bins, 3);
        let c = difference_curve(&acc, &cfg).unwrap();
        assert_eq!(c.diff[0], 0.0);
        assert_eq!(*c.diff.last().unwrap(), 0.0);
        assert_eq!(c.sigma[0], 0.0);
        let band = error_band(&c);
        for (b, s) in band.iter().zip(&c.sigma) {
            assert_eq!(*b, 2.0 * s);
        }
        // Band at F = 0.5 with n = 10^6 is exactly 0.001.
        let mut half = c.clone();
        half.n = 1_000_000;
        half.f[1] = 0.5;
        half.sigma[1] = (0.5 * 0.5 / 1e6f64).sqrt();
        assert!((error_band(&half)[1] - 0.001).abs() < 1e-15);
    }

    /// Synthetic data from H: the curve should sit inside a KS-scale band.
    #[test]
    fn synthetic_curves_sit_inside_four_sigma() {
        let cfg = cfg_for(d1(), 100, 20_000);
        let mut hits = 0;
        for rep in 0..100 {
            let acc = synthetic_acc(&cfg.domain, cfg.n_samples, cfg.n_bins, 1000 + rep);
            let c = difference_curve(&acc, &cfg).unwrap();
            let max_diff = c.diff.iter().fold(0.0f64, |m, d| m.max(d.abs()));
            let max_sigma = c.sigma.iter().fold(0.0f64, |m, s| m.max(*s));
            if max_diff <= 4.0 * max_sigma {
                hits += 1;
            }
        }
        assert!(hits >= 95, "only {hits}/100 inside the 4 sigma band");
    }

    #[test]
    fn l1_norm_basics() {
        let zero = curve_with(vec![0.0; 11], 0.0, 0.01);
        assert_eq!(l1_norm(&zero), 0.0);
        // Constant c over [0, 2*pi] integrates to 2*pi*c.
        let c = curve_with(vec![0.25; 11], 0.0, 0.01);
        assert!((l1_norm(&c) - TAU * 0.25).abs() < 1e-12);
        // Quadrature refinement: halving the spacing moves a smooth integral
        // by well under 1%.
        let smooth = |n: usize| {
            let diff: Vec<f64> = (0..n)
                .map(|k| (TAU * k as f64 / (n - 1) as f64).sin() * 0.01)
                .collect();
            l1_norm(&curve_with(diff, 0.0, 0.01))
        };
        let coarse = smooth(101);
        let fine = smooth(201);
        assert!((coarse - fine).abs() / fine < 0.01);
    }

    #[test]
    fn constructed_collapse_is_exact() {
        // A first-order-perfect pair: the finer-spacing curve is half the
        // coarser one, so scaling by delta_ref/delta aligns them exactly.
        let base: Vec<f64> = (0..51)
            .map(|k| (TAU * k as f64 / 50.0).sin() * 0.01)
            .collect();
        let halved: Vec<f64> = base.iter().map(|v| v / 2.0).collect();
        let coarse = curve_with(base, 1e-4, 0.01);
        let fine = curve_with(halved, 1e-4, 0.005);
        let report = rescale_and_collapse(&[&coarse, &fine], 3.0).unwrap();
        assert_eq!(report.delta_ref, 0.005);
        assert_eq!(report.factors, vec![0.5, 1.0]);
        assert_eq!(report.max_discrepancy, 0.0);
        assert!(report.pass);
    }

    #[test]
    fn collapse_validation() {
        let a = curve_with(vec![0.01; 11], 1e-4, 0.01);
        let b = curve_with(vec![0.01; 11], 1e-4, 0.01);
        assert!(matches!(
            rescale_and_collapse(&[&a, &b], 3.0),
            Err(AnalysisError::DuplicateDelta)
        ));
        assert!(matches!(
            rescale_and_collapse(&[&a], 3.0),
            Err(AnalysisError::NeedTwo)
        ));
        let mut c = curve_with(vec![0.01; 12], 1e-4, 0.005);
        c.theta = (0..12).map(|k| TAU * k as f64 / 11.0).collect();
        assert!(matches!(
            rescale_and_collapse(&[&a, &c], 3.0),
            Err(AnalysisError::Incompatible(_))
        ));
        let mut other_table = curve_with(vec![0.01; 11], 1e-4, 0.005);
        other_table.table.a1 = 0.5;
        other_table.table.a2 = 0.25;
        other_table.table.a3 = 0.25;
        assert!(matches!(
            rescale_and_collapse(&[&a, &other_table], 3.0),
            Err(AnalysisError::Incompatible(_))
        ));
    }

    /// The standardized discrepancy is scale-free: multiplying every curve by
    /// one positive factor, or relabeling which spacing is the reference,
    /// leaves it unchanged.
    #[test]
    fn collapse_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d_a: Vec<f64> = (0..41).map(|_| rng.gen::<f64>() * 0.01).collect();
        let d_b: Vec<f64> = (0..41).map(|_| rng.gen::<f64>() * 0.005).collect();
        let a = curve_with(d_a.clone(), 2e-4, 0.01);
        let b = curve_with(d_b.clone(), 1e-4, 0.005);
        let r1 = rescale_and_collapse(&[&a, &b], 3.0).unwrap();

        let scale = 3.7;
        let a2 = curve_with(d_a.iter().map(|v| v * scale).collect(), 2e-4 * scale, 0.01);
        let b2 = curve_with(d_b.iter().map(|v| v * scale).collect(), 1e-4 * scale, 0.005);
        let r2 = rescale_and_collapse(&[&a2, &b2], 3.0).unwrap();
        assert!((r1.max_discrepancy - r2.max_discrepancy).abs() < 1e-9);

        // Positive rescaling never moves a zero crossing.
        for (orig, scaled) in d_a.iter().zip(a2.diff.iter()) {
            assert_eq!(*orig == 0.0, *scaled == 0.0);
            assert_eq!(orig.signum(), scaled.signum());
        }
    }

    #[test]
    fn zero_envelope_points_are_skipped() {
        // Saturated endpoints have sigma 0 on both curves; they must not
        // produce infinite discrepancies.
        let mut a = curve_with(vec![0.01; 11], 1e-4, 0.01);
        let mut b = curve_with(vec![0.02; 11], 1e-4, 0.005);
        a.sigma[0] = 0.0;
        b.sigma[0] = 0.0;
        a.diff[0] = 0.0;
        b.diff[0] = 0.001; // degenerate disagreement with no resolution
        let report = rescale_and_collapse(&[&a, &b], 3.0).unwrap();
        assert!(report.max_discrepancy.is_finite());
    }

    #[test]
    fn shape_test_normalizes_scale_away() {
        let base: Vec<f64> = (0..51)
            .map(|k| (TAU * k as f64 / 50.0).sin() * 0.01)
            .collect();
        let tripled: Vec<f64> = base.iter().map(|v| v * 3.0).collect();
        let a = curve_with(base, 1e-4, 0.01);
        let mut b = curve_with(tripled, 3e-4, 0.01);
        b.table.a1 = 0.5;
        b.table.a2 = 0.25;
        b.table.a3 = 0.25;
        let report = shape_universality_test(&[&a, &b], 3.0).unwrap();
        assert!(report.max_discrepancy < 1e-9);
        assert!(report.pass);
        assert!((report.norms[1] / report.norms[0] - 3.0).abs() < 1e-9);

        let zero = curve_with(vec![0.0; 51], 1e-4, 0.01);
        assert!(matches!(
            shape_universality_test(&[&a, &zero], 3.0),
            Err(AnalysisError::ZeroNorm)
        ));
        let coarser = curve_with(vec![0.01; 51], 1e-4, 0.02);
        assert!(matches!(
            shape_universality_test(&[&a, &coarser], 3.0),
            Err(AnalysisError::Incompatible(_))
        ));
    }

    #[test]
    fn resampling_preserves_totals() {
        let counts = vec![0, 5, 100, 0, 40, 3, 0, 852];
        let exits: u64 = counts.iter().sum();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut mean2 = 0.0;
        for _ in 0..200 {
            let r = resample_counts(&counts, exits, &mut rng);
            assert_eq!(r.iter().sum::<u64>(), exits);
            assert_eq!(r[0], 0);
            assert_eq!(r[3], 0);
            mean2 += r[2] as f64;
        }
        mean2 /= 200.0;
        // Mean of a multinomial coordinate is its expected count.
        let sd2 = (100.0f64 * (1.0 - 100.0 / exits as f64)).sqrt();
        assert!((mean2 - 100.0).abs() < 4.0 * sd2 / (200.0f64).sqrt());
    }

    /// Identical tables with shared seeds give a ratio of exactly one, and
    /// intervals that trivially overlap.
    #[test]
    fn identical_tables_ratio_is_one() {
        let t = TransitionTable {
            a1: 0.5,
            a2: 0.25,
            a3: 0.25,
            ..uniform_table()
        };
        let report = cross_domain_ratio_test(
            &t,
            &t,
            &[d1(), d2()],
            0.04,
            20_000,
            200,
            99,
            0,
            200,
        )
        .unwrap();
        assert_eq!(report.intervals.len(), 2);
        for iv in &report.intervals {
            assert_eq!(iv.estimate, 1.0);
            assert!(iv.lo <= 1.0 && 1.0 <= iv.hi);
        }
        assert!(report.pass);
    }

    #[test]
    fn ratio_test_rejects_asymmetric_tables() {
        let mut asym = uniform_table();
        asym.b1 = 0.55;
        asym.b2 = 0.45;
        let err = cross_domain_ratio_test(
            &asym,
            &uniform_table(),
            &[d1()],
            0.04,
            1000,
            50,
            1,
            0,
            100,
        );
        assert!(matches!(err, Err(AnalysisError::AsymmetricTable(_))));
    }

    /// Bootstrap interval behavior on synthetic data: the interval for the
    /// ratio of two independent same-law runs should cover 1.
    #[test]
    fn bootstrap_interval_covers_unity_for_same_law() {
        let cfg = cfg_for(d1(), 100, 30_000);
        let ax = synthetic_acc(&cfg.domain, cfg.n_samples, cfg.n_bins, 21);
        let ay = synthetic_acc(&cfg.domain, cfg.n_samples, cfg.n_bins, 22);
        let cells = [RatioCell {
            cfg_x: &cfg,
            acc_x: &ax,
            cfg_y: &cfg,
            acc_y: &ay,
        }];
        let report = ratio_test_from_accumulators(&cells, 400, 7).unwrap();
        let iv = &report.intervals[0];
        // Same law on both sides: the truth is 1, and both runs' L1 norms are
        // pure noise of the same size, so the interval must be wide enough to
        // reach 1 from the estimate.
        assert!(iv.lo < iv.hi);
        assert!(iv.lo < 1.4 && iv.hi > 0.7, "implausible interval {iv:?}");
    }
}
