//! Tabular loading, OOD labeling rules, the 2D toy generator and
//! stratified train/test splits.

use std::collections::HashSet;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::select_rows;
use crate::stats::{box_muller, quantile, seeded_rng};

/// A parsed numeric table with one column designated as the label.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub column_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub label_column: usize,
    /// Where the table came from, carried into dataset provenance.
    pub source: String,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.column_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn column(&self, idx: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[idx]).collect()
    }

    /// Writes the table as comma-separated values with a header row.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.column_names).map_err(csv_to_io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(csv_to_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_to_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Reads a comma-delimited UTF-8 file with a mandatory header row.
///
/// Every cell must parse as a real number; empty cells are rejected rather
/// than imputed.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<RawTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    parse_csv(file, path, label_column)
}

pub fn parse_csv<R: Read>(reader: R, path: &Path, label_column: &str) -> Result<RawTable> {
    let malformed = |reason: String| Error::MalformedFile {
        path: path.to_path_buf(),
        reason,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| malformed(e.to_string()))?.clone();
    let column_names: Vec<String> = headers.iter().map(str::to_string).collect();
    if column_names.is_empty() || column_names.iter().all(String::is_empty) {
        return Err(malformed("missing header row".into()));
    }
    let mut seen = HashSet::new();
    for name in &column_names {
        if !seen.insert(name.as_str()) {
            return Err(malformed(format!("duplicate column name `{name}`")));
        }
    }
    let n_cols = column_names.len();
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| malformed(e.to_string()))?;
        // Line numbers are 1-based and the header is line 1.
        let line = i + 2;
        if record.len() != n_cols {
            return Err(malformed(format!(
                "line {line} has {} fields, header has {n_cols}",
                record.len()
            )));
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                if cell.is_empty() {
                    return Err(malformed(format!(
                        "line {line}, column `{}`: missing value",
                        column_names[j]
                    )));
                }
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        malformed(format!(
                            "line {line}, column `{}`: `{cell}` is not a number",
                            column_names[j]
                        ))
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let label_column = column_names
        .iter()
        .position(|c| c == label_column)
        .ok_or_else(|| Error::MissingColumn(label_column.to_string()))?;
    Ok(RawTable {
        column_names,
        rows,
        label_column,
        source: path.display().to_string(),
    })
}

/// How rows of a table are marked out-of-distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum OodRule {
    /// Rows whose label equals the value are OOD.
    ClassEquals(f64),
    /// Rows whose value in the column exceeds its upper quartile are OOD.
    ColumnAboveUpperQuartile(String),
    /// Rows whose value in the column equals the value are OOD.
    ColumnEqualsValue { column: String, value: f64 },
}

impl fmt::Display for OodRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OodRule::ClassEquals(v) => write!(f, "class_equals:{v}"),
            OodRule::ColumnAboveUpperQuartile(c) => write!(f, "above_upper_quartile:{c}"),
            OodRule::ColumnEqualsValue { column, value } => {
                write!(f, "column_equals:{column}={value}")
            }
        }
    }
}

impl FromStr for OodRule {
    type Err = Error;

    /// Accepts `class_equals:V`, `above_upper_quartile:COL` and
    /// `column_equals:COL=V`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Config(format!(
                "bad OOD rule `{s}`; expected class_equals:V, above_upper_quartile:COL or column_equals:COL=V"
            ))
        };
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        let arg = arg.trim();
        match kind.trim() {
            "class_equals" => arg.parse().map(OodRule::ClassEquals).map_err(|_| bad()),
            "above_upper_quartile" if !arg.is_empty() => {
                Ok(OodRule::ColumnAboveUpperQuartile(arg.to_string()))
            }
            "column_equals" => {
                let (column, value) = arg.split_once('=').ok_or_else(bad)?;
                let value = value.trim().parse().map_err(|_| bad())?;
                Ok(OodRule::ColumnEqualsValue {
                    column: column.trim().to_string(),
                    value,
                })
            }
            _ => Err(bad()),
        }
    }
}

impl From<OodRule> for String {
    fn from(rule: OodRule) -> Self {
        rule.to_string()
    }
}

impl TryFrom<String> for OodRule {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Feature matrix in raw units with ID class labels and OOD flags.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: DMatrix<f64>,
    /// Contiguous ID class id; always `Some` for ID rows. OOD rows keep their
    /// class when it is one of the ID classes (column-based rules).
    pub class_label: Vec<Option<usize>>,
    pub ood_flag: Vec<bool>,
    pub feature_names: Vec<String>,
    pub provenance: String,
    pub n_classes: usize,
}

impl LabeledDataset {
    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn id_indices(&self) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| !self.ood_flag[i]).collect()
    }

    pub fn ood_indices(&self) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.ood_flag[i]).collect()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.features.row(i).iter().copied().collect()
    }

    /// Feature matrix and class ids of the ID rows.
    pub fn id_data(&self) -> (DMatrix<f64>, Vec<usize>) {
        let idx = self.id_indices();
        let labels = idx
            .iter()
            .map(|&i| self.class_label[i].expect("ID rows carry a class label"))
            .collect();
        (select_rows(&self.features, &idx), labels)
    }

    pub fn ood_data(&self) -> DMatrix<f64> {
        select_rows(&self.features, &self.ood_indices())
    }

    /// Sub-dataset with the given rows, in the order given.
    pub fn select(&self, rows: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: select_rows(&self.features, rows),
            class_label: rows.iter().map(|&i| self.class_label[i]).collect(),
            ood_flag: rows.iter().map(|&i| self.ood_flag[i]).collect(),
            feature_names: self.feature_names.clone(),
            provenance: self.provenance.clone(),
            n_classes: self.n_classes,
        }
    }
}

/// Flags OOD rows and relabels the remaining classes to `0..n_classes`.
///
/// The label column is dropped from the features. A non-label rule column
/// stays in the feature matrix.
pub fn apply_ood_rule(table: &RawTable, rule: &OodRule) -> Result<LabeledDataset> {
    let label_col = table.label_column;
    let ood_flag: Vec<bool> = match rule {
        OodRule::ClassEquals(v) => table.rows.iter().map(|r| r[label_col] == *v).collect(),
        OodRule::ColumnEqualsValue { column, value } => {
            let c = table.column_index(column)?;
            table.rows.iter().map(|r| r[c] == *value).collect()
        }
        OodRule::ColumnAboveUpperQuartile(column) => {
            let c = table.column_index(column)?;
            if table.n_rows() == 0 {
                Vec::new()
            } else {
                let q = quantile(&table.column(c), 0.75);
                table.rows.iter().map(|r| r[c] > q).collect()
            }
        }
    };
    let flagged = ood_flag.iter().filter(|&&f| f).count();
    if flagged == 0 || flagged == table.n_rows() {
        return Err(Error::EmptyPartition {
            rule: rule.to_string(),
            flagged,
            total: table.n_rows(),
        });
    }

    let mut id_values: Vec<f64> = table
        .rows
        .iter()
        .zip(&ood_flag)
        .filter(|(_, &ood)| !ood)
        .map(|(r, _)| r[label_col])
        .collect();
    id_values.sort_by(f64::total_cmp);
    id_values.dedup();
    let class_of = |v: f64| id_values.iter().position(|&c| c == v);

    let feature_cols: Vec<usize> = (0..table.n_cols()).filter(|&c| c != label_col).collect();
    let features = DMatrix::from_fn(table.n_rows(), feature_cols.len(), |r, c| {
        table.rows[r][feature_cols[c]]
    });
    Ok(LabeledDataset {
        features,
        class_label: table.rows.iter().map(|r| class_of(r[label_col])).collect(),
        ood_flag,
        feature_names: feature_cols
            .iter()
            .map(|&c| table.column_names[c].clone())
            .collect(),
        provenance: format!("{}; rule {}", table.source, rule),
        n_classes: id_values.len(),
    })
}

/// Two ID classes at (3,0) and (-3,0) with covariance 0.5·I, and an OOD
/// cluster at (0,2) with covariance 0.3·I.
///
/// Rows are ordered class 0, class 1, OOD. Draws come from xoshiro256++
/// seeded with `seed`, one Box–Muller pair per point.
pub fn make_toy(n_per_class: usize, n_ood: usize, seed: u64) -> LabeledDataset {
    let mut rng = seeded_rng(seed);
    let groups: [(f64, f64, f64, usize, Option<usize>); 3] = [
        (3.0, 0.0, 0.5, n_per_class, Some(0)),
        (-3.0, 0.0, 0.5, n_per_class, Some(1)),
        (0.0, 2.0, 0.3, n_ood, None),
    ];
    let n = 2 * n_per_class + n_ood;
    let mut data = Vec::with_capacity(2 * n);
    let mut class_label = Vec::with_capacity(n);
    let mut ood_flag = Vec::with_capacity(n);
    for (mx, my, var, count, label) in groups {
        let sd = f64::sqrt(var);
        for _ in 0..count {
            let (a, b) = box_muller(&mut rng);
            data.push(mx + sd * a);
            data.push(my + sd * b);
            class_label.push(label);
            ood_flag.push(label.is_none());
        }
    }
    LabeledDataset {
        features: DMatrix::from_row_slice(n, 2, &data),
        class_label,
        ood_flag,
        feature_names: vec!["x1".into(), "x2".into()],
        provenance: format!("toy(n_per_class={n_per_class}, n_ood={n_ood}, seed={seed})"),
        n_classes: 2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

/// Stratified split of the ID rows; every OOD row goes to the test side.
///
/// Each class contributes `round(n_c · fraction)` rows to train, clamped so
/// both sides keep at least one row. Row order within each side follows the
/// input order.
pub fn split(ds: &LabeledDataset, spec: SplitSpec) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train, test) = split_indices(ds, spec)?;
    Ok((ds.select(&train), ds.select(&test)))
}

/// Row indices of the two sides of [`split`], each ascending.
pub fn split_indices(ds: &LabeledDataset, spec: SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if ds.n_rows() == 0 {
        return Err(Error::EmptyInput);
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction {} outside (0, 1)",
            spec.train_fraction
        )));
    }
    let mut rng = seeded_rng(spec.seed);
    let mut train = Vec::new();
    for class in 0..ds.n_classes {
        let mut rows: Vec<usize> = (0..ds.n_rows())
            .filter(|&i| !ds.ood_flag[i] && ds.class_label[i] == Some(class))
            .collect();
        if rows.len() < 2 {
            return Err(Error::DegenerateSplit(format!(
                "class {class} has {} rows; at least 2 are needed",
                rows.len()
            )));
        }
        rows.shuffle(&mut rng);
        let n_train =
            ((rows.len() as f64 * spec.train_fraction).round() as usize).clamp(1, rows.len() - 1);
        train.extend_from_slice(&rows[..n_train]);
    }
    train.sort_unstable();
    let in_train: HashSet<usize> = train.iter().copied().collect();
    let test: Vec<usize> = (0..ds.n_rows()).filter(|i| !in_train.contains(i)).collect();
    Ok((train, test))
}

/// A wine-shaped synthetic table: 13 chemistry-like features, label column
/// `class` with classes 0, 1, 2 (59/71/48 rows).
///
/// Class signal lives in a handful of features; three shared latent factors
/// drive correlated class-independent variation. Class 2 is shifted in both
/// groups so it reads as OOD once classes 0 and 1 are taken as ID.
pub fn synthetic_wine_like(seed: u64) -> RawTable {
    const NAMES: [&str; 13] = [
        "alcohol",
        "malic_acid",
        "ash",
        "alcalinity_of_ash",
        "magnesium",
        "total_phenols",
        "flavanoids",
        "nonflavanoid_phenols",
        "proanthocyanins",
        "color_intensity",
        "hue",
        "od280_od315",
        "proline",
    ];
    const BASE: [f64; 13] = [
        13.0, 2.3, 2.36, 19.5, 99.7, 2.29, 2.03, 0.36, 1.59, 5.06, 0.96, 2.61, 747.0,
    ];
    const SCALE: [f64; 13] = [
        0.5, 0.9, 0.27, 3.0, 14.0, 0.6, 0.9, 0.12, 0.57, 2.3, 0.23, 0.7, 315.0,
    ];
    // Class offsets in units of SCALE. Classes 0 and 1 differ along
    // alcohol/flavanoids/proline; class 2 also moves the shared block.
    const OFFSET: [[f64; 13]; 3] = [
        [
            1.2, 0.0, 0.0, 0.0, 0.0, 0.0, 1.1, 0.0, 0.0, 0.0, 0.0, 0.0, 1.3,
        ],
        [
            -1.2, 0.0, 0.0, 0.0, 0.0, 0.0, -0.9, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0,
        ],
        [
            0.1, 1.5, 0.8, 1.0, 0.5, -1.4, -1.2, 1.0, -0.8, 1.9, -1.6, -1.5, -0.4,
        ],
    ];
    // Loadings of the three shared factors on each feature.
    const FACTORS: [[f64; 13]; 3] = [
        [
            0.0, 0.6, 0.5, 0.6, 0.2, 0.0, 0.0, 0.5, 0.0, 0.5, 0.0, 0.0, 0.0,
        ],
        [
            0.0, 0.0, 0.0, 0.0, 0.0, 0.7, 0.3, 0.0, 0.7, 0.0, 0.4, 0.6, 0.0,
        ],
        [
            0.0, 0.3, 0.6, 0.0, 0.7, 0.0, 0.0, 0.0, 0.0, 0.4, 0.5, 0.0, 0.2,
        ],
    ];
    const COUNTS: [usize; 3] = [59, 71, 48];

    let mut rng = seeded_rng(seed);
    let mut normal = {
        let mut spare: Option<f64> = None;
        move |rng: &mut crate::stats::SeededRng| match spare.take() {
            Some(v) => v,
            None => {
                let (a, b) = box_muller(rng);
                spare = Some(b);
                a
            }
        }
    };
    let mut rows = Vec::new();
    for (class, &count) in COUNTS.iter().enumerate() {
        for _ in 0..count {
            let f: Vec<f64> = (0..3).map(|_| normal(&mut rng)).collect();
            let mut row: Vec<f64> = (0..13)
                .map(|j| {
                    let shared: f64 = (0..3).map(|q| FACTORS[q][j] * f[q]).sum();
                    let value =
                        BASE[j] + SCALE[j] * (OFFSET[class][j] + shared + 0.6 * normal(&mut rng));
                    // Rounded like the published measurements.
                    (value * 1000.0).round() / 1000.0
                })
                .collect();
            row.push(class as f64);
            rows.push(row);
        }
    }
    let mut column_names: Vec<String> = NAMES.iter().map(|s| s.to_string()).collect();
    column_names.push("class".into());
    RawTable {
        column_names,
        rows,
        label_column: 13,
        source: format!("synthetic_wine_like(seed={seed})"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(text: &str, label: &str) -> Result<RawTable> {
        parse_csv(Cursor::new(text.as_bytes()), Path::new("mem.csv"), label)
    }

    #[test]
    fn parses_small_file() {
        let t = parse("a,b,label\n1,2,0\n3,4.5,1\n-1,0,1\n", "label").unwrap();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.n_cols(), 3);
        assert_eq!(t.label_column, 2);
        assert_eq!(t.rows[1], vec![3.0, 4.5, 1.0]);
    }

    #[test]
    fn rejects_non_numeric_cell() {
        let err = parse("a,b,label\n1,abc,0\n", "label").unwrap_err();
        assert!(matches!(err, Error::MalformedFile { .. }), "{err}");
    }

    #[test]
    fn rejects_missing_value_and_ragged_rows() {
        assert!(matches!(
            parse("a,b,label\n1,,0\n", "label"),
            Err(Error::MalformedFile { .. })
        ));
        assert!(matches!(
            parse("a,b,label\n1,2\n", "label"),
            Err(Error::MalformedFile { .. })
        ));
    }

    #[test]
    fn header_only_file_is_empty_table() {
        let t = parse("a,b,label\n", "label").unwrap();
        assert_eq!(t.n_rows(), 0);
        assert_eq!(t.n_cols(), 3);
    }

    #[test]
    fn missing_label_column() {
        assert!(matches!(
            parse("a,b\n1,2\n", "label"),
            Err(Error::MissingColumn(c)) if c == "label"
        ));
    }

    #[test]
    fn duplicate_columns_rejected() {
        assert!(matches!(
            parse("a,a,label\n1,2,0\n", "label"),
            Err(Error::MalformedFile { .. })
        ));
    }

    fn wine_style() -> RawTable {
        parse(
            "f1,f2,class\n0.1,1,0\n0.2,2,1\n0.3,3,2\n0.4,4,0\n0.5,5,1\n0.6,6,2\n",
            "class",
        )
        .unwrap()
    }

    #[test]
    fn class_rule_flags_and_relabels() {
        let ds = apply_ood_rule(&wine_style(), &OodRule::ClassEquals(2.0)).unwrap();
        assert_eq!(ds.n_classes, 2);
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.feature_names, vec!["f1", "f2"]);
        assert_eq!(ds.ood_flag, vec![false, false, true, false, false, true]);
        assert_eq!(ds.class_label[0], Some(0));
        assert_eq!(ds.class_label[1], Some(1));
        assert_eq!(ds.class_label[2], None);
    }

    #[test]
    fn class_rule_for_absent_class_is_empty_partition() {
        let ds = apply_ood_rule(&wine_style(), &OodRule::ClassEquals(7.0));
        assert!(matches!(ds, Err(Error::EmptyPartition { flagged: 0, .. })));
    }

    #[test]
    fn reapplying_class_rule_to_output_schema_is_empty_partition() {
        // Once class 2 is removed from the ID set, a table of only ID rows has
        // no class-2 rows left to flag.
        let ds = apply_ood_rule(&wine_style(), &OodRule::ClassEquals(2.0)).unwrap();
        let id = ds.id_indices();
        let t = RawTable {
            column_names: vec!["f1".into(), "f2".into(), "class".into()],
            rows: id
                .iter()
                .map(|&i| {
                    let mut r = ds.row(i);
                    r.push(ds.class_label[i].unwrap() as f64);
                    r
                })
                .collect(),
            label_column: 2,
            source: "relabeled".into(),
        };
        assert!(matches!(
            apply_ood_rule(&t, &OodRule::ClassEquals(2.0)),
            Err(Error::EmptyPartition { .. })
        ));
    }

    #[test]
    fn upper_quartile_rule_uses_type7_quantile() {
        let text = "age,label\n1,0\n2,1\n3,0\n4,1\n5,0\n6,1\n7,0\n8,1\n";
        let t = parse(text, "label").unwrap();
        let ds = apply_ood_rule(&t, &OodRule::ColumnAboveUpperQuartile("age".into())).unwrap();
        // Sorted 1..8: position 0.75 * 7 = 5.25 -> 6 + 0.25 = 6.25.
        let flagged: Vec<f64> = ds
            .ood_indices()
            .iter()
            .map(|&i| ds.features[(i, 0)])
            .collect();
        assert_eq!(flagged, vec![7.0, 8.0]);
        // Rule column stays a feature.
        assert_eq!(ds.feature_names, vec!["age"]);
        // OOD rows keep their ID class.
        assert_eq!(ds.class_label[6], Some(0));
    }

    #[test]
    fn column_equals_rule() {
        let text = "angina,x,label\n0,1,0\n1,2,1\n0,3,1\n1,4,0\n0,5,0\n";
        let t = parse(text, "label").unwrap();
        let rule: OodRule = "column_equals:angina=1".parse().unwrap();
        let ds = apply_ood_rule(&t, &rule).unwrap();
        assert_eq!(ds.ood_indices(), vec![1, 3]);
        assert_eq!(ds.n_features(), 2);
    }

    #[test]
    fn rule_on_missing_column() {
        let rule = OodRule::ColumnAboveUpperQuartile("nope".into());
        assert!(matches!(
            apply_ood_rule(&wine_style(), &rule),
            Err(Error::MissingColumn(_))
        ));
    }

    #[test]
    fn rule_grammar_round_trips() {
        for s in [
            "class_equals:2",
            "above_upper_quartile:age",
            "column_equals:exang=1",
        ] {
            let rule: OodRule = s.parse().unwrap();
            assert_eq!(rule.to_string(), s);
        }
        assert!("between:1".parse::<OodRule>().is_err());
        assert!("class_equals:x".parse::<OodRule>().is_err());
    }

    #[test]
    fn toy_shape_and_determinism() {
        let a = make_toy(1000, 1000, 42);
        assert_eq!(a.n_rows(), 3000);
        assert_eq!(a.n_features(), 2);
        assert_eq!(a.n_classes, 2);
        assert_eq!(a.ood_indices().len(), 1000);
        let b = make_toy(1000, 1000, 42);
        assert_eq!(a, b);
        assert_ne!(a.features, make_toy(1000, 1000, 43).features);
    }

    #[test]
    fn toy_class_mean_monte_carlo() {
        let ds = make_toy(100_000, 1, 5);
        let n = 100_000;
        let mean_x: f64 = (0..n).map(|i| ds.features[(i, 0)]).sum::<f64>() / n as f64;
        let mean_y: f64 = (0..n).map(|i| ds.features[(i, 1)]).sum::<f64>() / n as f64;
        assert!((mean_x - 3.0).abs() < 0.02, "{mean_x}");
        assert!(mean_y.abs() < 0.02, "{mean_y}");
    }

    fn labeled(n_per_class: &[usize], n_ood: usize) -> LabeledDataset {
        let mut class_label = Vec::new();
        let mut ood_flag = Vec::new();
        for (c, &n) in n_per_class.iter().enumerate() {
            for _ in 0..n {
                class_label.push(Some(c));
                ood_flag.push(false);
            }
        }
        for _ in 0..n_ood {
            class_label.push(None);
            ood_flag.push(true);
        }
        let n = class_label.len();
        LabeledDataset {
            features: DMatrix::from_fn(n, 1, |r, _| r as f64),
            class_label,
            ood_flag,
            feature_names: vec!["x".into()],
            provenance: "test".into(),
            n_classes: n_per_class.len(),
        }
    }

    #[test]
    fn split_counts() {
        let ds = labeled(&[50, 50], 0);
        let (train, test) = split(
            &ds,
            SplitSpec {
                train_fraction: 0.8,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(train.n_rows(), 80);
        assert_eq!(test.n_rows(), 20);
    }

    #[test]
    fn split_sends_ood_to_test() {
        let ds = labeled(&[30, 20], 50);
        let (train, test) = split(
            &ds,
            SplitSpec {
                train_fraction: 0.7,
                seed: 3,
            },
        )
        .unwrap();
        assert!(train.ood_flag.iter().all(|f| !f));
        assert_eq!(test.ood_indices().len(), 50);
    }

    #[test]
    fn split_is_stratified() {
        let ds = labeled(&[37, 91, 12], 5);
        let spec = SplitSpec {
            train_fraction: 0.65,
            seed: 11,
        };
        let (train, _) = split(&ds, spec).unwrap();
        let total_id = 37 + 91 + 12;
        for (c, n_c) in [37usize, 91, 12].into_iter().enumerate() {
            let got = train.class_label.iter().filter(|&&l| l == Some(c)).count() as f64;
            let expected = n_c as f64 / total_id as f64 * train.n_rows() as f64;
            assert!(
                (got - expected).abs() <= 1.0,
                "class {c}: {got} vs {expected}"
            );
        }
    }

    #[test]
    fn split_rejects_tiny_class() {
        let ds = labeled(&[10, 1], 0);
        assert!(matches!(
            split(
                &ds,
                SplitSpec {
                    train_fraction: 0.5,
                    seed: 0
                }
            ),
            Err(Error::DegenerateSplit(_))
        ));
    }

    #[test]
    fn wine_like_shape() {
        let t = synthetic_wine_like(0);
        assert_eq!(t.n_rows(), 178);
        assert_eq!(t.n_cols(), 14);
        let ds = apply_ood_rule(&t, &OodRule::ClassEquals(2.0)).unwrap();
        assert_eq!(ds.ood_indices().len(), 48);
        assert_eq!(ds.n_classes, 2);
    }
}
