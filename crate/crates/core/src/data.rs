//! Ordinal care-level data: observations, datasets, count tables, CSV ingestion
//! and predictor standardization.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, Term};

/// Number of levels assumed when a file carries no `K=` directive.
pub const DEFAULT_LEVELS: usize = 4;

/// An ordinal level of care, 0-based (0 = self-care ... K-1 = highest level).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CareLevel(u8);

impl CareLevel {
    /// Returns `None` when `value >= k`.
    pub fn new(value: usize, k: usize) -> Option<Self> {
        (value < k && value <= u8::MAX as usize).then_some(CareLevel(value as u8))
    }

    #[inline]
    pub fn get(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }
}

impl fmt::Display for CareLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One patient: intended action before the call, the nurse's recommendation,
/// and the action finally taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Observation {
    pub intended: CareLevel,
    pub recommended: CareLevel,
    pub outcome: CareLevel,
}

impl Observation {
    pub fn new(intended: CareLevel, recommended: CareLevel, outcome: CareLevel) -> Self {
        Self {
            intended,
            recommended,
            outcome,
        }
    }
}

/// Which field of an observation to tabulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Intended,
    Recommended,
    Outcome,
}

/// A validated, non-empty collection of observations over `k` care levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    k: usize,
    observations: Vec<Observation>,
}

impl Dataset {
    pub fn new(k: usize, observations: Vec<Observation>) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidLevelCount(k));
        }
        if observations.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for (i, o) in observations.iter().enumerate() {
            for (name, lvl) in [
                ("intended", o.intended),
                ("recommended", o.recommended),
                ("final", o.outcome),
            ] {
                if lvl.get() >= k {
                    return Err(Error::LevelOutOfRange {
                        row: i as u64 + 1,
                        column: name.into(),
                        value: lvl.get() as i64,
                        max: k - 1,
                    });
                }
            }
        }
        Ok(Self { k, observations })
    }

    /// Builds a dataset from raw `(intended, recommended, final)` triples.
    pub fn from_triples(k: usize, triples: &[(usize, usize, usize)]) -> Result<Self> {
        let mut obs = Vec::with_capacity(triples.len());
        for (i, &(a, b, c)) in triples.iter().enumerate() {
            let lvl = |v: usize, column: &str| {
                CareLevel::new(v, k).ok_or_else(|| Error::LevelOutOfRange {
                    row: i as u64 + 1,
                    column: column.into(),
                    value: v as i64,
                    max: k.saturating_sub(1),
                })
            };
            obs.push(Observation::new(
                lvl(a, "intended")?,
                lvl(b, "recommended")?,
                lvl(c, "final")?,
            ));
        }
        Self::new(k, obs)
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.observations.len()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn outcomes(&self) -> Vec<usize> {
        self.observations.iter().map(|o| o.outcome.get()).collect()
    }

    pub fn count_table(&self) -> CountTable {
        CountTable::from_dataset(self)
    }
}

/// Per-level counts along one axis; always sums to `data.n()`.
pub fn marginals(data: &Dataset, axis: Axis) -> Vec<u64> {
    let mut out = vec![0u64; data.k()];
    for o in data.observations() {
        let lvl = match axis {
            Axis::Intended => o.intended,
            Axis::Recommended => o.recommended,
            Axis::Outcome => o.outcome,
        };
        out[lvl.get()] += 1;
    }
    out
}

/// Dense K×K×K table of counts indexed by (intended, recommended, final).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTable {
    k: usize,
    counts: Vec<u64>,
}

impl CountTable {
    pub fn zeros(k: usize) -> Self {
        Self {
            k,
            counts: vec![0; k * k * k],
        }
    }

    pub fn from_counts(k: usize, counts: Vec<u64>) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidLevelCount(k));
        }
        if counts.len() != k * k * k {
            return Err(Error::DimensionMismatch(format!(
                "count table for K={k} needs {} cells, got {}",
                k * k * k,
                counts.len()
            )));
        }
        Ok(Self { k, counts })
    }

    pub fn from_dataset(data: &Dataset) -> Self {
        let mut t = Self::zeros(data.k());
        for o in data.observations() {
            *t.get_mut(o.intended.get(), o.recommended.get(), o.outcome.get()) += 1;
        }
        t
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    fn index(&self, intended: usize, recommended: usize, outcome: usize) -> usize {
        (intended * self.k + recommended) * self.k + outcome
    }

    pub fn get(&self, intended: usize, recommended: usize, outcome: usize) -> u64 {
        self.counts[self.index(intended, recommended, outcome)]
    }

    pub fn get_mut(&mut self, intended: usize, recommended: usize, outcome: usize) -> &mut u64 {
        let i = self.index(intended, recommended, outcome);
        &mut self.counts[i]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Iterates `(intended, recommended, final, count)` in lexicographic order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, usize, u64)> + '_ {
        let k = self.k;
        (0..k * k * k).map(move |i| (i / (k * k), (i / k) % k, i % k, self.counts[i]))
    }

    /// Expands each cell into `count` identical observations, cells in lexicographic order.
    pub fn to_dataset(&self) -> Result<Dataset> {
        let k = self.k;
        let mut obs = Vec::with_capacity(self.total() as usize);
        for (a, b, c, n) in self.cells() {
            let o = Observation::new(CareLevel(a as u8), CareLevel(b as u8), CareLevel(c as u8));
            obs.extend(std::iter::repeat_n(o, n as usize));
        }
        Dataset::new(k, obs)
    }
}

/// On-disk layout of a dataset CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    /// One row per patient: `intended,recommended,final`.
    Long,
    /// One row per cell: `intended,recommended,final,count`.
    CountTable,
}

impl DataFormat {
    /// Chooses `CountTable` when the header has a `count` column.
    pub fn detect(path: impl AsRef<Path>) -> Result<Self> {
        let text = read_to_string(path.as_ref())?;
        let (clean, _) = strip_directives(&text)?;
        let header = clean.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
        Ok(if header.split(',').any(|c| c.trim() == "count") {
            DataFormat::CountTable
        } else {
            DataFormat::Long
        })
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Strips `#` comments line by line (keeping line numbering) and extracts a `K=<n>` directive.
fn strip_directives(text: &str) -> Result<(String, usize)> {
    let mut k = DEFAULT_LEVELS;
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let (code, comment) = match line.find('#') {
            Some(pos) => (&line[..pos], Some(&line[pos + 1..])),
            None => (line, None),
        };
        if let Some(comment) = comment {
            for tok in comment.split(|c: char| c.is_whitespace() || c == ',') {
                if let Some(v) = tok.strip_prefix("K=") {
                    k = v
                        .parse()
                        .map_err(|_| Error::InvalidSpec(format!("bad K directive `{tok}`")))?;
                }
            }
        }
        out.push_str(code.trim_end());
        out.push('\n');
    }
    if k < 2 {
        return Err(Error::InvalidLevelCount(k));
    }
    Ok((out, k))
}

/// Loads and validates a dataset CSV.
///
/// Count-table rows with count `c` expand to `c` consecutive identical
/// observations; row order follows the file.
pub fn load_dataset(path: impl AsRef<Path>, format: DataFormat) -> Result<Dataset> {
    let text = read_to_string(path.as_ref())?;
    parse_dataset(&text, format)
}

/// Parses dataset CSV text; see [`load_dataset`].
pub fn parse_dataset(text: &str, format: DataFormat) -> Result<Dataset> {
    let (clean, k) = strip_directives(text)?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(clean.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let idx = [col("intended")?, col("recommended")?, col("final")?];
    let count_idx = match format {
        DataFormat::CountTable => Some(col("count")?),
        DataFormat::Long => None,
    };

    let mut obs = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize, name: &str| -> Result<i64> {
            let raw = rec
                .get(i)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
            raw.parse::<i64>().map_err(|_| Error::NotInteger {
                row,
                column: name.to_string(),
                value: raw.to_string(),
            })
        };
        let mut levels = [CareLevel(0); 3];
        for (slot, (&i, name)) in
            levels
                .iter_mut()
                .zip(idx.iter().zip(["intended", "recommended", "final"]))
        {
            let v = field(i, name)?;
            *slot = usize::try_from(v)
                .ok()
                .and_then(|v| CareLevel::new(v, k))
                .ok_or_else(|| Error::LevelOutOfRange {
                    row,
                    column: name.to_string(),
                    value: v,
                    max: k - 1,
                })?;
        }
        let count = match count_idx {
            Some(ci) => {
                let c = field(ci, "count")?;
                if c < 0 {
                    return Err(Error::NegativeCount { row, value: c });
                }
                c as usize
            }
            None => 1,
        };
        let o = Observation::new(levels[0], levels[1], levels[2]);
        obs.extend(std::iter::repeat_n(o, count));
    }
    Dataset::new(k, obs)
}

/// Writes a count-format CSV (all K³ cells, with a `# K=` directive line).
pub fn write_count_table(path: impl AsRef<Path>, table: &CountTable) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, count_table_csv(table)).map_err(|e| Error::io(path, e))
}

pub fn count_table_csv(table: &CountTable) -> String {
    let mut s = format!("# K={}\nintended,recommended,final,count\n", table.k());
    for (a, b, c, n) in table.cells() {
        s.push_str(&format!("{a},{b},{c},{n}\n"));
    }
    s
}

/// Row-major predictor matrix; column 0 is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    terms: Vec<Term>,
    rows: usize,
    values: Vec<f64>,
}

impl DesignMatrix {
    /// Raw (unscaled) predictors for each observation.
    pub fn raw(data: &Dataset, terms: &[Term]) -> Self {
        let cols = terms.len() + 1;
        let mut values = Vec::with_capacity(data.n() * cols);
        for o in data.observations() {
            values.push(1.0);
            values.extend(
                terms
                    .iter()
                    .map(|t| t.eval(o.intended.as_f64(), o.recommended.as_f64())),
            );
        }
        Self {
            terms: terms.to_vec(),
            rows: data.n(),
            values,
        }
    }

    pub fn from_rows(terms: &[Term], rows: &[Vec<f64>]) -> Result<Self> {
        let cols = terms.len() + 1;
        let mut values = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "row has {} columns, expected {cols}",
                    r.len()
                )));
            }
            values.extend_from_slice(r);
        }
        Ok(Self {
            terms: terms.to_vec(),
            rows: rows.len(),
            values,
        })
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.terms.len() + 1
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.ncols();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i)[j]).collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ncols() + j]
    }
}

/// Per-column mean and sample standard deviation of the non-intercept predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub terms: Vec<Term>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl StandardizationStats {
    /// Stats that leave predictors unchanged.
    pub fn identity(terms: &[Term]) -> Self {
        Self {
            terms: terms.to_vec(),
            means: vec![0.0; terms.len()],
            sds: vec![1.0; terms.len()],
        }
    }

    pub fn from_raw(raw: &DesignMatrix) -> Result<Self> {
        let n = raw.nrows() as f64;
        let mut means = Vec::with_capacity(raw.terms().len());
        let mut sds = Vec::with_capacity(raw.terms().len());
        for (j, term) in raw.terms().iter().enumerate() {
            let col = raw.column(j + 1);
            let m = col.iter().sum::<f64>() / n;
            let ss = col.iter().map(|v| (v - m).powi(2)).sum::<f64>();
            let sd = if raw.nrows() > 1 {
                (ss / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            if !(sd > 1e-12 * m.abs().max(1.0)) {
                return Err(Error::DegenerateColumn(term.to_string()));
            }
            means.push(m);
            sds.push(sd);
        }
        Ok(Self {
            terms: raw.terms().to_vec(),
            means,
            sds,
        })
    }

    /// Standardized predictor values (without intercept) at a design point.
    pub fn features(&self, x1: f64, x2: f64) -> impl Iterator<Item = f64> + '_ {
        self.terms
            .iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(move |(t, (m, s))| (t.eval(x1, x2) - m) / s)
    }

    fn check(&self, m: &DesignMatrix) -> Result<()> {
        if m.terms() != self.terms.as_slice() {
            return Err(Error::DimensionMismatch(
                "design matrix terms differ from standardization terms".into(),
            ));
        }
        Ok(())
    }

    pub fn standardize(&self, raw: &DesignMatrix) -> Result<DesignMatrix> {
        self.check(raw)?;
        let mut out = raw.clone();
        let c = out.ncols();
        for i in 0..out.rows {
            for j in 1..c {
                let v = &mut out.values[i * c + j];
                *v = (*v - self.means[j - 1]) / self.sds[j - 1];
            }
        }
        Ok(out)
    }

    pub fn unstandardize(&self, scaled: &DesignMatrix) -> Result<DesignMatrix> {
        self.check(scaled)?;
        let mut out = scaled.clone();
        let c = out.ncols();
        for i in 0..out.rows {
            for j in 1..c {
                let v = &mut out.values[i * c + j];
                *v = *v * self.sds[j - 1] + self.means[j - 1];
            }
        }
        Ok(out)
    }
}

/// Builds the standardized design matrix for `spec` from raw level values.
///
/// Squares and products are formed on the raw levels first and then scaled
/// as columns in their own right; the intercept stays at 1.
pub fn build_design_matrix(
    data: &Dataset,
    spec: &ModelSpec,
) -> Result<(DesignMatrix, StandardizationStats)> {
    let raw = DesignMatrix::raw(data, spec.terms());
    let stats = StandardizationStats::from_raw(&raw)?;
    let scaled = stats.standardize(&raw)?;
    Ok((scaled, stats))
}

/// Distinct `(intended, recommended)` design points with outcome counts.
///
/// Likelihood evaluations run over these cells instead of individual rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignCells {
    pub k: usize,
    pub points: Vec<(CareLevel, CareLevel)>,
    /// `counts[c * k + y]` = observations at point `c` with outcome `y`.
    pub counts: Vec<u64>,
}

impl DesignCells {
    pub fn from_dataset(data: &Dataset) -> Self {
        let k = data.k();
        let table = data.count_table();
        let mut points = Vec::new();
        let mut counts = Vec::new();
        for a in 0..k {
            for b in 0..k {
                let row: Vec<u64> = (0..k).map(|y| table.get(a, b, y)).collect();
                if row.iter().any(|&c| c > 0) {
                    points.push((CareLevel(a as u8), CareLevel(b as u8)));
                    counts.extend(row);
                }
            }
        }
        Self { k, points, counts }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn counts_at(&self, cell: usize) -> &[u64] {
        &self.counts[cell * self.k..(cell + 1) * self.k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SigmaStructure;
    use proptest::prelude::*;

    fn spec(terms: Vec<Term>) -> ModelSpec {
        ModelSpec::new(terms, SigmaStructure::Common, false, 4).unwrap()
    }

    #[test]
    fn single_cell_expands() {
        let d = parse_dataset(
            "intended,recommended,final,count\n0,0,0,5\n",
            DataFormat::CountTable,
        )
        .unwrap();
        assert_eq!(d.n(), 5);
        assert_eq!(d.k(), 4);
        assert!(d.observations().iter().all(|o| (
            o.intended.get(),
            o.recommended.get(),
            o.outcome.get()
        ) == (0, 0, 0)));
    }

    #[test]
    fn out_of_range_names_row() {
        let err = parse_dataset(
            "intended,recommended,final\n0,1,2\n1,4,0\n",
            DataFormat::Long,
        )
        .unwrap_err();
        match err {
            Error::LevelOutOfRange {
                row, column, value, ..
            } => {
                assert_eq!(row, 3);
                assert_eq!(column, "recommended");
                assert_eq!(value, 4);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn k_directive_and_errors() {
        let d = parse_dataset(
            "# K=5\nintended,recommended,final\n4,4,4\n",
            DataFormat::Long,
        )
        .unwrap();
        assert_eq!(d.k(), 5);
        let d = parse_dataset(
            "intended,recommended,final # K=3\n2,2,2\n",
            DataFormat::Long,
        )
        .unwrap();
        assert_eq!(d.k(), 3);

        assert!(matches!(
            parse_dataset("intended,final\n0,0\n", DataFormat::Long),
            Err(Error::MissingColumn(c)) if c == "recommended"
        ));
        assert!(matches!(
            parse_dataset("intended,recommended,final\n0,x,0\n", DataFormat::Long),
            Err(Error::NotInteger { row: 2, .. })
        ));
        assert!(matches!(
            parse_dataset(
                "intended,recommended,final,count\n0,0,0,0\n",
                DataFormat::CountTable
            ),
            Err(Error::EmptyDataset)
        ));
        assert!(matches!(
            parse_dataset(
                "intended,recommended,final,count\n0,0,0,-1\n",
                DataFormat::CountTable
            ),
            Err(Error::NegativeCount { row: 2, value: -1 })
        ));
        assert!(matches!(
            parse_dataset("intended,recommended,final\n", DataFormat::Long),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn rows_keep_file_order() {
        let d = parse_dataset(
            "intended,recommended,final,count\n3,2,1,2\n0,0,0,1\n",
            DataFormat::CountTable,
        )
        .unwrap();
        let t: Vec<_> = d
            .observations()
            .iter()
            .map(|o| (o.intended.get(), o.recommended.get(), o.outcome.get()))
            .collect();
        assert_eq!(t, vec![(3, 2, 1), (3, 2, 1), (0, 0, 0)]);
    }

    #[test]
    fn marginals_single_and_sum() {
        let d = Dataset::from_triples(4, &[(1, 2, 3)]).unwrap();
        assert_eq!(marginals(&d, Axis::Recommended), vec![0, 0, 1, 0]);
        assert_eq!(marginals(&d, Axis::Outcome), vec![0, 0, 0, 1]);
        assert_eq!(marginals(&d, Axis::Intended), vec![0, 1, 0, 0]);
    }

    #[test]
    fn unit_column_is_standard() {
        let d = Dataset::from_triples(4, &[(0, 0, 0), (1, 1, 0), (2, 2, 0), (3, 3, 0)]).unwrap();
        let (m, stats) = build_design_matrix(&d, &spec(vec![Term::X2, Term::X2Sq])).unwrap();
        let col = m.column(1);
        let mean = col.iter().sum::<f64>() / 4.0;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
        assert!(mean.abs() < 1e-12);
        assert!((sd - 1.0).abs() < 1e-12);
        // raw x2^2 column is {0,1,4,9}
        let raw = stats.unstandardize(&m).unwrap();
        assert_eq!(raw.column(2), vec![0.0, 1.0, 4.0, 9.0]);
        assert!(m.column(0).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn constant_column_rejected() {
        let d = Dataset::from_triples(4, &[(2, 0, 0), (2, 1, 0), (2, 3, 1)]).unwrap();
        let err = build_design_matrix(&d, &spec(vec![Term::X1, Term::X2])).unwrap_err();
        assert!(matches!(err, Error::DegenerateColumn(t) if t == "x1"));
    }

    #[test]
    fn design_cells_aggregate() {
        let d = Dataset::from_triples(4, &[(0, 1, 2), (0, 1, 2), (0, 1, 0), (3, 3, 3)]).unwrap();
        let cells = DesignCells::from_dataset(&d);
        assert_eq!(cells.len(), 2);
        assert_eq!(cells.counts_at(0), &[1, 0, 2, 0]);
        assert_eq!(cells.counts_at(1), &[0, 0, 0, 1]);
    }

    fn table_strategy() -> impl Strategy<Value = (usize, Vec<u64>)> {
        (2usize..=4).prop_flat_map(|k| {
            (
                Just(k),
                prop::collection::vec(0u64..4, k * k * k)
                    .prop_filter("non-empty", |v| v.iter().sum::<u64>() > 0),
            )
        })
    }

    proptest! {
        #[test]
        fn count_table_round_trip((k, counts) in table_strategy()) {
            let t = CountTable::from_counts(k, counts).unwrap();
            let d = t.to_dataset().unwrap();
            prop_assert_eq!(d.n() as u64, t.total());
            prop_assert_eq!(CountTable::from_dataset(&d), t.clone());
            let reparsed = parse_dataset(&count_table_csv(&t), DataFormat::CountTable).unwrap();
            prop_assert_eq!(reparsed, d);
        }

        #[test]
        fn standardize_round_trip(rows in prop::collection::vec((0usize..4, 0usize..4), 3..40)) {
            let triples: Vec<_> = rows.iter().map(|&(a, b)| (a, b, 0)).collect();
            let d = Dataset::from_triples(4, &triples).unwrap();
            let terms = Term::ALL.to_vec();
            let raw = DesignMatrix::raw(&d, &terms);
            let Ok(stats) = StandardizationStats::from_raw(&raw) else { return Ok(()); };
            let scaled = stats.standardize(&raw).unwrap();
            for j in 1..scaled.ncols() {
                let col = scaled.column(j);
                let n = col.len() as f64;
                let m = col.iter().sum::<f64>() / n;
                let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                prop_assert!(m.abs() < 1e-10);
                prop_assert!((sd - 1.0).abs() < 1e-10);
            }
            let back = stats.unstandardize(&scaled).unwrap();
            for i in 0..raw.nrows() {
                for j in 0..raw.ncols() {
                    let (a, b) = (raw.get(i, j), back.get(i, j));
                    prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
                }
            }
        }
    }
}
