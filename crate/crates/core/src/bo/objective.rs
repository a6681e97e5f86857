//! Benchmark objectives: closed-form synthetic functions and tabular tables.

use std::collections::HashMap;
use std::f64::consts::{E, PI};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ObjectiveError {
    #[error("point {point:?} outside bounds {bounds:?}")]
    OutOfBounds { point: Vec<f64>, bounds: Vec<(f64, f64)> },
    #[error("expected {expected} coordinates, got {found}")]
    Dimension { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    Ackley2d,
    Rastrigin2d,
    Griewank2d,
    Levy2d,
}

impl SyntheticKind {
    pub const ALL: [SyntheticKind; 4] = [
        SyntheticKind::Ackley2d,
        SyntheticKind::Rastrigin2d,
        SyntheticKind::Griewank2d,
        SyntheticKind::Levy2d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::Ackley2d => "Ackley 2D",
            SyntheticKind::Rastrigin2d => "Rastrigin 2D",
            SyntheticKind::Griewank2d => "Griewank 2D",
            SyntheticKind::Levy2d => "Levy 2D",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticObjective {
    pub kind: SyntheticKind,
    pub bounds: Vec<(f64, f64)>,
    pub optimum_value: f64,
    pub optimum_location: Vec<f64>,
}

impl SyntheticObjective {
    pub fn new(kind: SyntheticKind) -> Self {
        let (half, opt) = match kind {
            SyntheticKind::Ackley2d => (32.768, 0.0),
            SyntheticKind::Rastrigin2d => (5.12, 0.0),
            SyntheticKind::Griewank2d => (600.0, 0.0),
            SyntheticKind::Levy2d => (10.0, 1.0),
        };
        Self {
            kind,
            bounds: vec![(-half, half); 2],
            optimum_value: 0.0,
            optimum_location: vec![opt; 2],
        }
    }
}

pub fn eval_synthetic(objective: &SyntheticObjective, x: &[f64]) -> Result<f64, ObjectiveError> {
    if x.len() != objective.bounds.len() {
        return Err(ObjectiveError::Dimension {
            expected: objective.bounds.len(),
            found: x.len(),
        });
    }
    if x.iter().zip(&objective.bounds).any(|(v, (lo, hi))| !(lo..=hi).contains(&v)) {
        return Err(ObjectiveError::OutOfBounds {
            point: x.to_vec(),
            bounds: objective.bounds.clone(),
        });
    }
    Ok(match objective.kind {
        SyntheticKind::Ackley2d => ackley(x),
        SyntheticKind::Rastrigin2d => rastrigin(x),
        SyntheticKind::Griewank2d => griewank(x),
        SyntheticKind::Levy2d => levy(x),
    })
}

fn ackley(x: &[f64]) -> f64 {
    let (a, b, c) = (20.0, 0.2, 2.0 * PI);
    let d = x.len() as f64;
    let sq = x.iter().map(|v| v * v).sum::<f64>() / d;
    let cs = x.iter().map(|v| (c * v).cos()).sum::<f64>() / d;
    -a * (-b * sq.sqrt()).exp() - cs.exp() + a + E
}

fn rastrigin(x: &[f64]) -> f64 {
    10.0 * x.len() as f64 + x.iter().map(|v| v * v - 10.0 * (2.0 * PI * v).cos()).sum::<f64>()
}

fn griewank(x: &[f64]) -> f64 {
    let sum = x.iter().map(|v| v * v).sum::<f64>() / 4000.0;
    let prod: f64 = x
        .iter()
        .enumerate()
        .map(|(i, v)| (v / ((i + 1) as f64).sqrt()).cos())
        .product();
    1.0 + sum - prod
}

fn levy(x: &[f64]) -> f64 {
    let w: Vec<f64> = x.iter().map(|v| 1.0 + (v - 1.0) / 4.0).collect();
    let d = w.len();
    let head = (PI * w[0]).sin().powi(2);
    let mid: f64 = w[..d - 1]
        .iter()
        .map(|wi| (wi - 1.0).powi(2) * (1.0 + 10.0 * (PI * wi + 1.0).sin().powi(2)))
        .sum();
    let wd = w[d - 1];
    let tail = (wd - 1.0).powi(2) * (1.0 + (2.0 * PI * wd).sin().powi(2));
    head + mid + tail
}

#[derive(Debug, Error)]
pub enum TabularError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("header is missing column '{0}'")]
    MissingColumn(String),
    #[error("header needs at least one parameter column between 'id' and 'objective'")]
    NoParameters,
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("row {row} repeats the configuration of row {first}")]
    Duplicate { row: usize, first: usize },
    #[error("table has no rows")]
    Empty,
}

/// A finite set of configurations with precomputed objective values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularBenchmark {
    pub name: String,
    pub param_names: Vec<String>,
    pub ids: Vec<String>,
    pub configurations: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub best_value: f64,
}

/// Reads `id,<params...>,objective` rows. Row numbers in errors count the
/// header as row 1.
pub fn load_tabular(path: impl AsRef<Path>) -> Result<TabularBenchmark, TabularError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| TabularError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let name = path
        .file_stem()
        .map_or_else(|| "tabular".to_string(), |s| s.to_string_lossy().into_owned());
    parse_tabular(&name, &text)
}

pub fn parse_tabular(name: &str, text: &str) -> Result<TabularBenchmark, TabularError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| TabularError::Row {
            row: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if header.first().map(String::as_str) != Some("id") {
        return Err(TabularError::MissingColumn("id".into()));
    }
    if header.last().map(String::as_str) != Some("objective") || header.len() < 2 {
        return Err(TabularError::MissingColumn("objective".into()));
    }
    if header.len() < 3 {
        return Err(TabularError::NoParameters);
    }
    let param_names = header[1..header.len() - 1].to_vec();

    let mut ids = Vec::new();
    let mut configurations: Vec<Vec<f64>> = Vec::new();
    let mut values = Vec::new();
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| TabularError::Row {
            row,
            message: e.to_string(),
        })?;
        if record.len() != header.len() {
            return Err(TabularError::Row {
                row,
                message: format!("{} fields, expected {}", record.len(), header.len()),
            });
        }
        let parse = |col: usize| -> Result<f64, TabularError> {
            let raw = &record[col];
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| TabularError::Row {
                    row,
                    message: format!("column '{}': '{raw}' is not a finite number", header[col]),
                })
        };
        let config = (1..header.len() - 1).map(parse).collect::<Result<Vec<_>, _>>()?;
        let value = parse(header.len() - 1)?;
        let key: Vec<u64> = config.iter().map(|v| v.to_bits()).collect();
        if let Some(&first) = seen.get(&key) {
            return Err(TabularError::Duplicate { row, first });
        }
        seen.insert(key, row);
        ids.push(record[0].to_string());
        configurations.push(config);
        values.push(value);
    }
    if values.is_empty() {
        return Err(TabularError::Empty);
    }
    let best_value = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(TabularBenchmark {
        name: name.to_string(),
        param_names,
        ids,
        configurations,
        values,
        best_value,
    })
}

impl TabularBenchmark {
    /// Per-column min/max for mapping configurations into the unit cube.
    pub fn column_ranges(&self) -> Vec<(f64, f64)> {
        (0..self.param_names.len())
            .map(|c| {
                self.configurations.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), row| {
                    (lo.min(row[c]), hi.max(row[c]))
                })
            })
            .collect()
    }
}

/// The objective a BO run minimizes.
#[derive(Debug, Clone, PartialEq)]
pub enum BoObjective {
    Synthetic(SyntheticObjective),
    Tabular(TabularBenchmark),
}

impl BoObjective {
    pub fn name(&self) -> String {
        match self {
            BoObjective::Synthetic(s) => s.kind.name().to_string(),
            BoObjective::Tabular(t) => t.name.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            BoObjective::Synthetic(s) => s.bounds.len(),
            BoObjective::Tabular(t) => t.param_names.len(),
        }
    }

    /// Known optimum (synthetic) or table minimum (tabular).
    pub fn optimum(&self) -> f64 {
        match self {
            BoObjective::Synthetic(s) => s.optimum_value,
            BoObjective::Tabular(t) => t.best_value,
        }
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        match self {
            BoObjective::Synthetic(s) => s.bounds.clone(),
            BoObjective::Tabular(t) => t.column_ranges(),
        }
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        self.bounds()
            .iter()
            .zip(x)
            .map(|((lo, hi), v)| if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 })
            .collect()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        self.bounds()
            .iter()
            .zip(u)
            .map(|((lo, hi), v)| (lo + v * (hi - lo)).clamp(*lo, *hi))
            .collect()
    }

    /// Objective value at a point given in original coordinates. Tabular
    /// points must match a table row exactly.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64, ObjectiveError> {
        match self {
            BoObjective::Synthetic(s) => eval_synthetic(s, x),
            BoObjective::Tabular(t) => t
                .configurations
                .iter()
                .position(|c| c.as_slice() == x)
                .map(|i| t.values[i])
                .ok_or_else(|| ObjectiveError::OutOfBounds {
                    point: x.to_vec(),
                    bounds: t.column_ranges(),
                }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optima_are_zero() {
        for kind in SyntheticKind::ALL {
            let obj = SyntheticObjective::new(kind);
            let v = eval_synthetic(&obj, &obj.optimum_location).unwrap();
            assert!((v - obj.optimum_value).abs() < 1e-12, "{kind:?} -> {v}");
        }
    }

    #[test]
    fn reference_values() {
        // Independent spot checks computed by hand from the textbook forms.
        let r = SyntheticObjective::new(SyntheticKind::Rastrigin2d);
        assert!((eval_synthetic(&r, &[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        let g = SyntheticObjective::new(SyntheticKind::Griewank2d);
        let expected = 1.0 + (4.0 + 9.0) / 4000.0 - 2f64.cos() * (3.0 / 2f64.sqrt()).cos();
        assert!((eval_synthetic(&g, &[2.0, 3.0]).unwrap() - expected).abs() < 1e-12);
        let a = SyntheticObjective::new(SyntheticKind::Ackley2d);
        let expected = -20.0 * (-0.2f64).exp() - (2.0 * PI).cos().exp() + 20.0 + E;
        assert!((eval_synthetic(&a, &[1.0, 1.0]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn out_of_bounds_rejected() {
        let r = SyntheticObjective::new(SyntheticKind::Rastrigin2d);
        assert!(matches!(eval_synthetic(&r, &[6.0, 0.0]), Err(ObjectiveError::OutOfBounds { .. })));
        assert!(matches!(eval_synthetic(&r, &[0.0]), Err(ObjectiveError::Dimension { .. })));
    }

    #[test]
    fn tabular_best_value() {
        let t = parse_tabular("t", "id,lr,depth,objective\na,0.1,2,0.5\nb,0.2,3,0.2\nc,0.3,4,0.9\n").unwrap();
        assert_eq!(t.best_value, 0.2);
        assert_eq!(t.param_names, vec!["lr", "depth"]);
        let obj = BoObjective::Tabular(t);
        assert_eq!(obj.evaluate(&[0.3, 4.0]).unwrap(), 0.9);
        assert!(obj.evaluate(&[0.3, 5.0]).is_err());
    }

    #[test]
    fn tabular_duplicates_rejected() {
        let err = parse_tabular("t", "id,x,objective\na,1,0.5\nb,1,0.4\n").unwrap_err();
        assert!(matches!(err, TabularError::Duplicate { row: 3, first: 2 }));
    }

    #[test]
    fn tabular_header_mismatch_names_column() {
        let err = parse_tabular("t", "id,x,score\na,1,0.5\n").unwrap_err();
        assert_eq!(err.to_string(), "header is missing column 'objective'");
        let err = parse_tabular("t", "key,x,objective\na,1,0.5\n").unwrap_err();
        assert!(err.to_string().contains("'id'"));
    }

    #[test]
    fn tabular_bad_row_reports_number() {
        let err = parse_tabular("t", "id,x,objective\na,1,0.5\nb,oops,0.4\n").unwrap_err();
        assert!(matches!(err, TabularError::Row { row: 3, .. }), "{err}");
    }

    #[test]
    fn unit_mapping_round_trips() {
        let obj = BoObjective::Synthetic(SyntheticObjective::new(SyntheticKind::Levy2d));
        let x = vec![-3.5, 7.25];
        let back = obj.from_unit(&obj.to_unit(&x));
        assert!(back.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}
