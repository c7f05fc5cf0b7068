//! Log-normal degree fits and the regression-based investigation partition.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};

use super::{AtlasError, ClusterCount};
use crate::embedding::Side;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogNormalFit {
    /// Mean of the log values.
    pub mu: f64,
    /// Maximum-likelihood (1/n) standard deviation of the log values.
    pub sigma: f64,
    /// Kolmogorov–Smirnov distance between the sample and the fitted CDF.
    pub ks_distance: f64,
    pub n: usize,
    /// Non-positive values removed before fitting.
    pub filtered: usize,
}

pub const MIN_LOGNORMAL_SAMPLES: usize = 10;

pub fn fit_lognormal(values: &[f64]) -> Result<LogNormalFit, AtlasError> {
    let positive: Vec<f64> = values.iter().copied().filter(|&v| v > 0.0).collect();
    let filtered = values.len() - positive.len();
    if positive.len() < MIN_LOGNORMAL_SAMPLES {
        return Err(AtlasError::InsufficientData { needed: MIN_LOGNORMAL_SAMPLES, got: positive.len() });
    }
    let n = positive.len() as f64;
    let logs: Vec<f64> = positive.iter().map(|v| v.ln()).collect();
    let (mu, sigma) = if logs.iter().all(|&l| l == logs[0]) {
        (logs[0], 0.0)
    } else {
        let mu = logs.iter().sum::<f64>() / n;
        (mu, (logs.iter().map(|l| (l - mu).powi(2)).sum::<f64>() / n).sqrt())
    };

    let mut sorted = logs;
    sorted.sort_by(f64::total_cmp);
    let ks_distance = if sigma > 0.0 {
        let z = Normal::new(mu, sigma).expect("sigma is positive");
        sorted
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let f = z.cdf(l);
                (f - i as f64 / n).max((i + 1) as f64 / n - f)
            })
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    Ok(LogNormalFit { mu, sigma, ks_distance, n: positive.len(), filtered })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionClass {
    Well,
    Under,
    Excluded,
}

impl fmt::Display for PartitionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PartitionClass::Well => "well",
            PartitionClass::Under => "under",
            PartitionClass::Excluded => "excluded",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionRow {
    pub cluster: u32,
    pub label: String,
    pub total: f64,
    pub ai4science: f64,
    pub fitted: f64,
    pub lower: f64,
    pub upper: f64,
    pub class: PartitionClass,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvestigationPartition {
    pub side: Side,
    pub slope: f64,
    pub intercept: f64,
    pub through_origin: bool,
    pub residual_df: usize,
    pub t_quantile: f64,
    pub rows: Vec<PartitionRow>,
}

impl InvestigationPartition {
    pub fn of_class(&self, class: PartitionClass) -> BTreeSet<u32> {
        self.rows.iter().filter(|r| r.class == class).map(|r| r.cluster).collect()
    }

    pub fn well(&self) -> BTreeSet<u32> {
        self.of_class(PartitionClass::Well)
    }

    pub fn under(&self) -> BTreeSet<u32> {
        self.of_class(PartitionClass::Under)
    }

    pub fn excluded(&self) -> BTreeSet<u32> {
        self.of_class(PartitionClass::Excluded)
    }

    pub fn class_of(&self, cluster: u32) -> Option<PartitionClass> {
        self.rows.iter().find(|r| r.cluster == cluster).map(|r| r.class)
    }

    /// Tabular report: cluster_id, label, total, ai4sci, class, fitted, lower, upper.
    pub fn to_tsv(&self) -> String {
        use crate::io::fmt_f64;
        let mut out = format!(
            "# side={} slope={} intercept={} through_origin={} df={} t={}\n",
            self.side,
            fmt_f64(self.slope),
            fmt_f64(self.intercept),
            self.through_origin,
            self.residual_df,
            fmt_f64(self.t_quantile)
        );
        out.push_str("cluster_id\tlabel\ttotal\tai4sci\tclass\tfitted\tlower\tupper\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.cluster,
                r.label,
                fmt_f64(r.total),
                fmt_f64(r.ai4science),
                r.class,
                fmt_f64(r.fitted),
                fmt_f64(r.lower),
                fmt_f64(r.upper)
            ));
        }
        out
    }
}

/// Two-sided 97.5% Student-t quantile, polished with Newton steps on the CDF.
fn t_quantile_975(df: f64) -> f64 {
    let t = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    let mut x = t.inverse_cdf(0.975);
    for _ in 0..4 {
        let step = (t.cdf(x) - 0.975) / t.pdf(x);
        if !step.is_finite() {
            break;
        }
        x -= step;
    }
    x
}

/// OLS of AI4Science count on total count, with a pointwise 95% confidence band for
/// the mean response. Points above the band are well investigated, below it under
/// investigated, inside it excluded. Band edges get a relative slack of 1e-9 so
/// points on a perfect fit stay inside.
pub fn partition_investigation(
    side: Side,
    counts: &[ClusterCount],
    through_origin: bool,
) -> Result<InvestigationPartition, AtlasError> {
    let rows: Vec<(u32, String, f64, f64)> =
        counts.iter().map(|c| (c.cluster, c.label.clone(), c.total as f64, c.ai4science as f64)).collect();
    partition_points(side, &rows, through_origin)
}

/// As [`partition_investigation`] on raw `(cluster, label, x, y)` points.
pub fn partition_points(
    side: Side,
    points: &[(u32, String, f64, f64)],
    through_origin: bool,
) -> Result<InvestigationPartition, AtlasError> {
    let n = points.len();
    if n < 3 {
        return Err(AtlasError::InsufficientData { needed: 3, got: n });
    }
    let nf = n as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.2).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.3).collect();
    let (slope, intercept, df, se_at): (f64, f64, usize, Box<dyn Fn(f64, f64) -> f64>) = if through_origin {
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        if sxx == 0.0 {
            return Err(AtlasError::DegenerateRegression);
        }
        let slope = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / sxx;
        (slope, 0.0, n - 1, Box::new(move |s, x0| s * x0.abs() / sxx.sqrt()))
    } else {
        let mx = xs.iter().sum::<f64>() / nf;
        let my = ys.iter().sum::<f64>() / nf;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        if sxx == 0.0 {
            return Err(AtlasError::DegenerateRegression);
        }
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let slope = sxy / sxx;
        (slope, my - slope * mx, n - 2, Box::new(move |s, x0| s * (1.0 / nf + (x0 - mx).powi(2) / sxx).sqrt()))
    };
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - (intercept + slope * x)).powi(2)).sum();
    let s = (sse / df as f64).sqrt();
    let t = t_quantile_975(df as f64);
    let rows = points
        .iter()
        .map(|(cluster, label, x, y)| {
            let fitted = intercept + slope * x;
            let half = t * se_at(s, *x);
            let (lower, upper) = (fitted - half, fitted + half);
            let slack = 1e-9 * (y.abs() + fitted.abs());
            let class = if *y > upper + slack {
                PartitionClass::Well
            } else if *y < lower - slack {
                PartitionClass::Under
            } else {
                PartitionClass::Excluded
            };
            PartitionRow { cluster: *cluster, label: label.clone(), total: *x, ai4science: *y, fitted, lower, upper, class }
        })
        .collect();
    Ok(InvestigationPartition { side, slope, intercept, through_origin, residual_df: df, t_quantile: t, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> Vec<(u32, String, f64, f64)> {
        v.iter().enumerate().map(|(i, &(x, y))| (i as u32, format!("c{i}"), x, y)).collect()
    }

    #[test]
    fn point_mass() {
        let f = fit_lognormal(&[7.0; 12]).unwrap();
        assert!((f.mu - 7f64.ln()).abs() < 1e-15);
        assert_eq!(f.sigma, 0.0);
    }

    #[test]
    fn closed_form_and_filtering() {
        let d = [1.0, 2.0, 2.0, 3.0, 5.0, 8.0, 13.0, 0.0, 21.0, 34.0, 55.0, 4.0];
        let f = fit_lognormal(&d).unwrap();
        assert_eq!((f.n, f.filtered), (11, 1));
        let logs: Vec<f64> = d.iter().filter(|&&x| x > 0.0).map(|x: &f64| x.ln()).collect();
        let mu = logs.iter().sum::<f64>() / 11.0;
        let var = logs.iter().map(|l| (l - mu) * (l - mu)).sum::<f64>() / 11.0;
        assert!((f.mu - mu).abs() < 1e-9 && (f.sigma - var.sqrt()).abs() < 1e-9);
        assert!(f.ks_distance > 0.0 && f.ks_distance < 1.0);
        assert!(fit_lognormal(&[1.0; 9]).is_err());
    }

    #[test]
    fn t_quantile_matches_tables() {
        // Reference values from scipy.stats.t.ppf(0.975, df).
        assert!((t_quantile_975(1.0) - 12.706_204_736_432_095).abs() < 1e-9);
        assert!((t_quantile_975(28.0) - 2.048_407_141_795_244).abs() < 1e-9);
    }

    #[test]
    fn perfect_line_all_excluded() {
        let p = partition_points(Side::Problem, &pts(&[(10.0, 1.0), (20.0, 2.0), (30.0, 3.0), (70.0, 7.0)]), false).unwrap();
        assert!(p.rows.iter().all(|r| r.class == PartitionClass::Excluded));
        assert!((p.slope - 0.1).abs() < 1e-12);
    }

    #[test]
    fn planted_outlier_is_under() {
        let mut v: Vec<(f64, f64)> = (1..=20).map(|i| (i as f64 * 10.0, i as f64 + if i % 2 == 0 { 0.3 } else { -0.3 })).collect();
        v.push((150.0, 0.0));
        let p = partition_points(Side::Method, &pts(&v), false).unwrap();
        assert_eq!(p.class_of(20), Some(PartitionClass::Under));
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            partition_points(Side::Problem, &pts(&[(5.0, 1.0), (5.0, 2.0), (5.0, 3.0)]), false),
            Err(AtlasError::DegenerateRegression)
        ));
        assert!(partition_points(Side::Problem, &pts(&[(1.0, 1.0), (2.0, 2.0)]), false).is_err());
    }
}
