//! Trajectories: simulation from a model, price ingestion and log returns.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::model::{ArLatentModel, ModelError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("parse error at row {row}, column {column}: {value:?}")]
    Parse {
        row: usize,
        column: usize,
        value: String,
    },
    #[error("row {row} has {got} fields, expected {expected}")]
    Ragged {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("non-positive price at row {row}, column {column}")]
    NonPositivePrice { row: usize, column: usize },
    #[error("series in column {column} starts with a missing value")]
    LeadingMissing { column: usize },
    #[error("dates are not strictly increasing at row {row}")]
    UnorderedDates { row: usize },
    #[error("no data rows")]
    Empty,
    #[error("sample count must be at least 1")]
    ZeroLength,
    #[error("non-finite sample at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
}

/// `N × n` sample path, one row per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    samples: DMatrix<f64>,
    seed: Option<u64>,
    labels: Option<Vec<String>>,
}

impl Trajectory {
    pub fn new(samples: DMatrix<f64>) -> Result<Self, DataError> {
        if samples.nrows() == 0 || samples.ncols() == 0 {
            return Err(DataError::ZeroLength);
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            let (row, column) = (pos % samples.nrows(), pos / samples.nrows());
            return Err(DataError::NonFinite { row, column });
        }
        Ok(Self {
            samples,
            seed: None,
            labels: None,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Row labels written as the first CSV column (dates for returns).
    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        debug_assert_eq!(labels.len(), self.samples.nrows());
        self.labels = Some(labels);
        self
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    /// CSV with a label column and `y0..y{n-1}` headers; `comments` are
    /// written first as `# ` lines.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<(), DataError> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.dim()).map(|i| format!("y{i}")));
        w.write_record(&header)?;
        for (t, row) in self.samples.row_iter().enumerate() {
            let mut rec = vec![match &self.labels {
                Some(labels) => labels[t].clone(),
                None => t.to_string(),
            }];
            rec.extend(row.iter().map(|v| format!("{v:e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Inverse of [`Trajectory::write_csv`]; the first column is a label.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(input);
        let width = rdr.headers()?.len();
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 1;
            if rec.len() != width {
                return Err(DataError::Ragged {
                    row,
                    got: rec.len(),
                    expected: width,
                });
            }
            labels.push(rec[0].to_string());
            for (column, field) in rec.iter().enumerate().skip(1) {
                let v: f64 = field.parse().map_err(|_| DataError::Parse {
                    row,
                    column,
                    value: field.to_string(),
                })?;
                values.push(v);
            }
        }
        if labels.is_empty() || width < 2 {
            return Err(DataError::Empty);
        }
        let samples = DMatrix::from_row_slice(labels.len(), width - 1, &values);
        Ok(Self::new(samples)?.with_labels(labels))
    }
}

/// Simulate `N` steps from zero initial conditions.
pub fn simulate(m: &ArLatentModel, n_samples: usize, seed: u64) -> Result<Trajectory, DataError> {
    simulate_with_burn_in(m, n_samples, seed, 0)
}

/// Simulate `burn_in + N` steps and discard the first `burn_in`.
pub fn simulate_with_burn_in(
    m: &ArLatentModel,
    n_samples: usize,
    seed: u64,
    burn_in: usize,
) -> Result<Trajectory, DataError> {
    if n_samples == 0 {
        return Err(DataError::ZeroLength);
    }
    m.check_stable()?;
    let (n, l, p1, p2) = (m.n(), m.l(), m.p1(), m.p2());
    let total = burn_in + n_samples;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let ar: Vec<DMatrix<f64>> = (1..=p1).map(|j| m.ar_coeff(j)).collect();
    let taps: Vec<DMatrix<f64>> = (0..=p2).map(|k| m.latent_coeff(k)).collect();

    let mut y = DMatrix::<f64>::zeros(total, n);
    let mut x = DMatrix::<f64>::zeros(total, l);
    for t in 0..total {
        for i in 0..l {
            x[(t, i)] = rng.sample(StandardNormal);
        }
        let mut v = DVector::<f64>::from_fn(n, |_, _| rng.sample(StandardNormal));
        for (k, w) in taps.iter().enumerate() {
            if t >= k && l > 0 {
                v += w * x.row(t - k).transpose();
            }
        }
        for (j, a) in ar.iter().enumerate() {
            if t > j {
                v -= a * y.row(t - j - 1).transpose();
            }
        }
        y.row_mut(t).copy_from(&v.transpose());
    }
    let samples = y.rows(burn_in, n_samples).into_owned();
    Ok(Trajectory::new(samples)?.with_seed(seed))
}

/// Price table with possibly missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    pub dates: Vec<String>,
    pub names: Vec<String>,
    /// Row-major, `None` marks a missing cell.
    pub prices: Vec<Vec<Option<f64>>>,
}

impl PricePanel {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }
}

fn is_missing(field: &str) -> bool {
    matches!(field, "" | "NA" | "NaN" | "nan" | "null" | "-")
}

/// Read a price CSV: header of series names, first column dates.
/// Rows and columns in errors are 1-based data coordinates.
pub fn load_csv(path: impl AsRef<Path>) -> Result<PricePanel, DataError> {
    read_prices(std::fs::File::open(path)?)
}

pub fn read_prices<R: Read>(input: R) -> Result<PricePanel, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(DataError::Empty);
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut dates = Vec::new();
    let mut prices = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != header.len() {
            return Err(DataError::Ragged {
                row,
                got: rec.len(),
                expected: header.len(),
            });
        }
        let date = rec[0].to_string();
        if let Some(prev) = dates.last() {
            if date <= *prev {
                return Err(DataError::UnorderedDates { row });
            }
        }
        dates.push(date);
        let cells = rec
            .iter()
            .enumerate()
            .skip(1)
            .map(|(column, field)| {
                if is_missing(field) {
                    return Ok(None);
                }
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(Some)
                    .ok_or_else(|| DataError::Parse {
                        row,
                        column,
                        value: field.to_string(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        prices.push(cells);
    }
    if dates.is_empty() {
        return Err(DataError::Empty);
    }
    Ok(PricePanel {
        dates,
        names,
        prices,
    })
}

/// `r(t) = 100 [ln p(t) − ln p(t−1)]` after forward-filling missing prices;
/// filled cells give a zero return.
pub fn log_returns(p: &PricePanel) -> Result<Trajectory, DataError> {
    let rows = p.len();
    let n = p.width();
    if rows < 2 || n == 0 {
        return Err(DataError::Empty);
    }
    let mut last: Vec<f64> = Vec::with_capacity(n);
    for (c, cell) in p.prices[0].iter().enumerate() {
        match cell {
            None => return Err(DataError::LeadingMissing { column: c + 1 }),
            Some(v) if *v <= 0.0 => return Err(DataError::NonPositivePrice { row: 1, column: c + 1 }),
            Some(v) => last.push(v.ln()),
        }
    }
    let mut out = DMatrix::zeros(rows - 1, n);
    for t in 1..rows {
        for c in 0..n {
            if let Some(v) = p.prices[t][c] {
                if v <= 0.0 {
                    return Err(DataError::NonPositivePrice { row: t + 1, column: c + 1 });
                }
                let lv = v.ln();
                out[(t - 1, c)] = 100.0 * (lv - last[c]);
                last[c] = lv;
            }
        }
    }
    Ok(Trajectory::new(out)?.with_labels(p.dates[1..].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel(rows: Vec<Vec<Option<f64>>>) -> PricePanel {
        PricePanel {
            dates: (0..rows.len()).map(|i| format!("2018-01-{:02}", i + 1)).collect(),
            names: (0..rows[0].len()).map(|i| format!("s{i}")).collect(),
            prices: rows,
        }
    }

    #[test]
    fn unit_log_return() {
        let p = panel(vec![vec![Some(100.0)], vec![Some(100.0 * 0.01_f64.exp())]]);
        let r = log_returns(&p).unwrap();
        assert!((r.samples()[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_price_gives_zero_returns() {
        let p = panel(vec![vec![Some(100.0)], vec![None], vec![Some(100.0)]]);
        let r = log_returns(&p).unwrap();
        assert_eq!(r.samples().as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn leading_missing_is_error() {
        let p = panel(vec![vec![None], vec![Some(1.0)]]);
        assert!(matches!(log_returns(&p), Err(DataError::LeadingMissing { column: 1 })));
    }

    #[test]
    fn non_positive_price_is_error() {
        let p = panel(vec![vec![Some(1.0)], vec![Some(0.0)]]);
        assert!(matches!(log_returns(&p), Err(DataError::NonPositivePrice { row: 2, column: 1 })));
    }

    #[test]
    fn csv_with_missing_and_malformed_cells() {
        let ok = "date,a,b\n2018-01-02,1.0,\n2018-01-03,2.0,3.0\n";
        let p = read_prices(ok.as_bytes()).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.width(), 2);
        assert_eq!(p.prices[0][1], None);

        let bad = "date,a\n2018-01-01,1\n2018-01-02,1\n2018-01-03,1\n2018-01-04,1\n2018-01-05,x1\n";
        match read_prices(bad.as_bytes()) {
            Err(DataError::Parse { row, column, .. }) => assert_eq!((row, column), (5, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unordered_dates_rejected() {
        let bad = "date,a\n2018-01-02,1\n2018-01-01,1\n";
        assert!(matches!(read_prices(bad.as_bytes()), Err(DataError::UnorderedDates { row: 2 })));
    }

    #[test]
    fn simulation_is_deterministic() {
        let m = ArLatentModel::example_one();
        let a = simulate(&m, 200, 7).unwrap();
        let b = simulate(&m, 200, 7).unwrap();
        let c = simulate(&m, 200, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.samples(), c.samples());
        assert_eq!(a.seed(), Some(7));
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let m = ArLatentModel::example_one();
        let a = simulate(&m, 20, 1).unwrap();
        let mut buf = Vec::new();
        a.write_csv(&mut buf, &["seed 1".to_string()]).unwrap();
        let b = Trajectory::read_csv(buf.as_slice()).unwrap();
        assert!((a.samples() - b.samples()).norm() < 1e-12 * a.samples().norm());
    }
}
