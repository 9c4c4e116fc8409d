use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{check_pair, AnalysisError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    /// `√[(1/N)Σ(y−ŷ)² / Σŷ²]`.
    pub rrmse: f64,
    pub r_squared: f64,
    pub sample_count: usize,
}

pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64, AnalysisError> {
    check_pair(actual, predicted, 1)?;
    Ok(actual.iter().zip(predicted).map(|(a, p)| (a - p).abs()).sum::<f64>() / actual.len() as f64)
}

pub fn mse(actual: &[f64], predicted: &[f64]) -> Result<f64, AnalysisError> {
    check_pair(actual, predicted, 1)?;
    Ok(sse(actual, predicted) / actual.len() as f64)
}

fn sse(actual: &[f64], predicted: &[f64]) -> f64 {
    actual.iter().zip(predicted).map(|(a, p)| (a - p) * (a - p)).sum()
}

pub fn rrmse(actual: &[f64], predicted: &[f64]) -> Result<f64, AnalysisError> {
    let m = mse(actual, predicted)?;
    let energy: f64 = predicted.iter().map(|p| p * p).sum();
    if energy == 0.0 {
        return Err(AnalysisError::ZeroPredictions);
    }
    Ok((m / energy).sqrt())
}

pub fn r_squared(actual: &[f64], predicted: &[f64]) -> Result<f64, AnalysisError> {
    check_pair(actual, predicted, 1)?;
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
    if ss_tot == 0.0 {
        return Err(AnalysisError::ConstantActuals);
    }
    Ok(1.0 - sse(actual, predicted) / ss_tot)
}

pub fn metrics(actual: &[f64], predicted: &[f64]) -> Result<MetricReport, AnalysisError> {
    let mse = mse(actual, predicted)?;
    Ok(MetricReport {
        mae: mae(actual, predicted)?,
        mse,
        rmse: mse.sqrt(),
        rrmse: rrmse(actual, predicted)?,
        r_squared: r_squared(actual, predicted)?,
        sample_count: actual.len(),
    })
}

/// Pearson product-moment correlation with population sums.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    check_pair(x, y, 2)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(AnalysisError::ConstantInput("x".into()));
    }
    if syy == 0.0 {
        return Err(AnalysisError::ConstantInput("y".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub const CORRELATION_VARIABLES: [&str; 5] = [
    "ideal_irradiance",
    "irradiance",
    "ambient_temp",
    "module_temp",
    "cloud_cover",
];

/// Aligned columns of a cleaned dataset.
#[derive(Debug, Clone, Copy)]
pub struct CorrelationColumns<'a> {
    pub ideal_irradiance: &'a [f64],
    pub irradiance: &'a [f64],
    pub ambient_temp: &'a [f64],
    pub module_temp: &'a [f64],
    pub cloud_cover: &'a [f64],
    pub generation: &'a [f64],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub variable: String,
    pub coefficient: f64,
}

/// Correlation of each weather variable with generation.
pub fn correlation_table(cols: &CorrelationColumns<'_>) -> Result<Vec<CorrelationEntry>, AnalysisError> {
    let inputs = [
        cols.ideal_irradiance,
        cols.irradiance,
        cols.ambient_temp,
        cols.module_temp,
        cols.cloud_cover,
    ];
    CORRELATION_VARIABLES
        .iter()
        .zip(inputs)
        .map(|(name, x)| {
            let coefficient = pearson(x, cols.generation).map_err(|e| match e {
                AnalysisError::ConstantInput(w) if w == "x" => AnalysisError::ConstantInput((*name).into()),
                AnalysisError::ConstantInput(_) => AnalysisError::ConstantInput("generation".into()),
                other => other,
            })?;
            Ok(CorrelationEntry {
                variable: (*name).into(),
                coefficient,
            })
        })
        .collect()
}

pub fn write_correlation_csv<W: Write>(out: W, table: &[CorrelationEntry]) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["variable", "correlation_with_generation"])?;
    for e in table {
        w.write_record([e.variable.clone(), e.coefficient.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_case() {
        let m = metrics(&[1.0, 2.0], &[2.0, 2.0]).unwrap();
        assert_eq!(m.mae, 0.5);
        assert_eq!(m.mse, 0.5);
        assert_eq!(m.rmse, 0.5f64.sqrt());
        assert_eq!(m.rrmse, 0.25);
        assert_eq!(m.r_squared, -1.0);
        assert_eq!(m.sample_count, 2);
    }

    #[test]
    fn perfect_prediction() {
        let y = [3.0, 1.0, 4.0, 1.0, 5.0];
        let m = metrics(&y, &y).unwrap();
        assert_eq!((m.mae, m.mse, m.rmse, m.rrmse, m.r_squared), (0.0, 0.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert_eq!(rrmse(&[1.0, 2.0], &[0.0, 0.0]), Err(AnalysisError::ZeroPredictions));
        assert!(metrics(&[], &[]).is_err());
        assert!(matches!(mae(&[1.0], &[1.0, 2.0]), Err(AnalysisError::LengthMismatch { .. })));
        assert_eq!(r_squared(&[2.0, 2.0], &[1.0, 3.0]), Err(AnalysisError::ConstantActuals));
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let up: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
        let down: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &up).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&x, &down).unwrap() + 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(AnalysisError::ConstantInput(_))));
    }

    #[test]
    fn table_has_five_rows_in_order() {
        let ideal = [100.0, 400.0, 800.0, 600.0, 200.0];
        let irr = [90.0, 300.0, 700.0, 500.0, 150.0];
        let gen: Vec<f64> = irr.iter().map(|v| 1.2 * v).collect();
        let amb = [70.0, 75.0, 82.0, 80.0, 74.0];
        let module = [72.0, 85.0, 110.0, 100.0, 78.0];
        let cloud = [50.0, 30.0, 5.0, 10.0, 60.0];
        let t = correlation_table(&CorrelationColumns {
            ideal_irradiance: &ideal,
            irradiance: &irr,
            ambient_temp: &amb,
            module_temp: &module,
            cloud_cover: &cloud,
            generation: &gen,
        })
        .unwrap();
        let names: Vec<&str> = t.iter().map(|e| e.variable.as_str()).collect();
        assert_eq!(names, CORRELATION_VARIABLES);
        assert!((t[1].coefficient - 1.0).abs() < 1e-12);
        assert!(t[4].coefficient < 0.0);

        let mut buf = Vec::new();
        write_correlation_csv(&mut buf, &t).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 6);
    }

    proptest! {
        #[test]
        fn pearson_symmetric_and_affine(
            pts in prop::collection::vec((-100f64..100.0, -100f64..100.0), 3..40),
            a in prop::sample::select(vec![-3.0, -0.5, 0.25, 2.0]),
            b in -10f64..10.0,
        ) {
            let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
            if let (Ok(xy), Ok(yx)) = (pearson(&x, &y), pearson(&y, &x)) {
                prop_assert!((xy - yx).abs() < 1e-12);
                let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
                let r = pearson(&ax, &y).unwrap();
                prop_assert!((r - a.signum() * xy).abs() < 1e-9);
                prop_assert!((-1.0..=1.0).contains(&xy));
            }
        }

        #[test]
        fn mae_bounded_by_rmse(pts in prop::collection::vec((-1e3f64..1e3, 1f64..1e3), 1..60)) {
            let a: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let p: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let m = mae(&a, &p).unwrap();
            let rmse = mse(&a, &p).unwrap().sqrt();
            prop_assert!(m <= rmse * (1.0 + 1e-12) + 1e-12);
            if let Ok(r2) = r_squared(&a, &p) {
                prop_assert!(r2 <= 1.0);
            }
        }
    }
}
