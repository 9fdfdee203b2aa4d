//! Column-labelled sample container, CSV ingestion and fold splitting.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::SeedSpec;

/// What a column plays in the binary choice model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Outcome,
    SpecialRegressor,
    Regressor,
    Instrument,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Outcome => "outcome",
            Role::SpecialRegressor => "special_regressor",
            Role::Regressor => "regressor",
            Role::Instrument => "instrument",
        };
        f.write_str(s)
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "outcome" | "y" => Ok(Role::Outcome),
            "special_regressor" | "special" | "v" => Ok(Role::SpecialRegressor),
            "regressor" | "x" => Ok(Role::Regressor),
            "instrument" | "z" => Ok(Role::Instrument),
            other => Err(Error::InvalidInput(format!("unknown role '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub role: Option<Role>,
    pub values: Vec<f64>,
}

impl Column {
    pub fn new(name: impl Into<String>, role: Option<Role>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            role,
            values,
        }
    }
}

/// Immutable table of equal-length numeric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    n_rows: usize,
    columns: Vec<Column>,
}

impl DataTable {
    /// Validates lengths, names, finiteness and the binary outcome.
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, |c| c.values.len());
        if n_rows < 2 {
            return Err(Error::TooFewRows(n_rows));
        }
        let mut seen = HashSet::new();
        let mut outcomes = 0;
        let mut specials = 0;
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::DuplicateColumn(c.name.clone()));
            }
            if c.values.len() != n_rows {
                return Err(Error::DimensionMismatch(format!(
                    "column '{}' has {} rows, expected {n_rows}",
                    c.name,
                    c.values.len()
                )));
            }
            if let Some(row) = c.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonNumeric {
                    row: row + 1,
                    column: c.name.clone(),
                    value: c.values[row].to_string(),
                });
            }
            match c.role {
                Some(Role::Outcome) => {
                    outcomes += 1;
                    if let Some(row) = c.values.iter().position(|&v| v != 0.0 && v != 1.0) {
                        return Err(Error::NonBinaryOutcome {
                            row: row + 1,
                            value: c.values[row],
                        });
                    }
                }
                Some(Role::SpecialRegressor) => specials += 1,
                _ => {}
            }
        }
        if outcomes > 1 || specials > 1 {
            return Err(Error::InvalidInput(
                "at most one outcome and one special_regressor column may be tagged".into(),
            ));
        }
        Ok(Self { n_rows, columns })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.columns[self.column_index(name)?].values)
    }

    pub fn names_with_role(&self, role: Role) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|c| c.role == Some(role))
            .map(|c| c.name.as_str())
            .collect()
    }

    fn single_role(&self, role: Role) -> Result<&Column> {
        self.columns
            .iter()
            .find(|c| c.role == Some(role))
            .ok_or_else(|| Error::InvalidInput(format!("no column tagged {role}")))
    }

    pub fn outcome(&self) -> Result<&[f64]> {
        Ok(&self.single_role(Role::Outcome)?.values)
    }

    pub fn special_regressor(&self) -> Result<&[f64]> {
        Ok(&self.single_role(Role::SpecialRegressor)?.values)
    }

    /// Returns a copy with an extra column appended.
    pub fn with_column(&self, column: Column) -> Result<Self> {
        let mut columns = self.columns.clone();
        columns.push(column);
        Self::new(columns)
    }

    /// Writes the table as CSV. Values use the shortest representation that
    /// round-trips, so `load_csv` recovers them bit for bit.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        for i in 0..self.n_rows {
            w.write_record(self.columns.iter().map(|c| format_real(c.values[i])))?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(())
    }

    pub fn roles(&self) -> HashMap<String, Role> {
        self.columns
            .iter()
            .filter_map(|c| c.role.map(|r| (c.name.clone(), r)))
            .collect()
    }
}

pub(crate) fn format_real(x: f64) -> String {
    // `{:?}` keeps a trailing ".0" on integral values and is round-trip exact.
    format!("{x:?}")
}

/// Reads a comma-separated file with a header row. Columns named in
/// `role_map` are tagged; the rest stay untagged.
pub fn load_csv(path: impl AsRef<Path>, role_map: &HashMap<String, Role>) -> Result<DataTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut seen = HashSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(Error::DuplicateColumn(h.clone()));
        }
    }
    for name in role_map.keys() {
        if !seen.contains(name.as_str()) {
            return Err(Error::UnknownColumn(name.clone()));
        }
    }
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::DimensionMismatch(format!(
                "row {} has {} cells, header has {}",
                r + 1,
                record.len(),
                headers.len()
            )));
        }
        for (j, cell) in record.iter().enumerate() {
            let x: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                row: r + 1,
                column: headers[j].clone(),
                value: cell.to_string(),
            })?;
            if !x.is_finite() {
                return Err(Error::NonNumeric {
                    row: r + 1,
                    column: headers[j].clone(),
                    value: cell.to_string(),
                });
            }
            values[j].push(x);
        }
    }
    let columns = headers
        .into_iter()
        .zip(values)
        .map(|(name, vals)| {
            let role = role_map.get(&name).copied();
            Column::new(name, role, vals)
        })
        .collect();
    DataTable::new(columns)
}

/// Balanced assignment of `n` observations to `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    pub assignment: Vec<usize>,
}

impl FoldAssignment {
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }

    /// (train, test) row indices for fold `f`.
    pub fn split(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::with_capacity(self.assignment.len());
        let mut test = Vec::new();
        for (i, &a) in self.assignment.iter().enumerate() {
            if a == f {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }
}

/// Random partition into `k` folds whose sizes differ by at most one.
pub fn make_folds(n: usize, k: usize, seed: SeedSpec) -> Result<FoldAssignment> {
    if k < 2 || k > n {
        return Err(Error::InvalidInput(format!(
            "fold count k={k} must satisfy 2 <= k <= n={n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed.rng());
    let mut assignment = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % k;
    }
    Ok(FoldAssignment { k, assignment })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn roles(pairs: &[(&str, Role)]) -> HashMap<String, Role> {
        pairs.iter().map(|(n, r)| (n.to_string(), *r)).collect()
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_small_file() {
        let f = write_tmp("y,v,x1\n0,0.5,1\n1,-1.25,2\n1,3,3\n");
        let map = roles(&[("y", Role::Outcome), ("v", Role::SpecialRegressor)]);
        let t = load_csv(f.path(), &map).unwrap();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.outcome().unwrap(), &[0.0, 1.0, 1.0]);
        assert_eq!(t.special_regressor().unwrap(), &[0.5, -1.25, 3.0]);
        assert_eq!(t.columns()[2].role, None);
    }

    #[test]
    fn rejects_non_binary_outcome() {
        let f = write_tmp("y,v\n0,1\n2,1\n");
        let err = load_csv(f.path(), &roles(&[("y", Role::Outcome)])).unwrap_err();
        assert!(err.to_string().contains("non-binary outcome"), "{err}");
    }

    #[test]
    fn rejects_header_only() {
        let f = write_tmp("y,v\n");
        let err = load_csv(f.path(), &HashMap::new()).unwrap_err();
        assert!(err.to_string().contains("n_rows < 2"), "{err}");
    }

    #[test]
    fn reports_bad_cell_location() {
        let f = write_tmp("a,b\n1,2\n3,oops\n");
        match load_csv(f.path(), &HashMap::new()).unwrap_err() {
            Error::NonNumeric { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "b");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn rejects_missing_and_duplicates() {
        let f = write_tmp("a,b\n1,\n3,4\n");
        assert!(matches!(
            load_csv(f.path(), &HashMap::new()),
            Err(Error::NonNumeric { .. })
        ));
        let f = write_tmp("a,a\n1,2\n3,4\n");
        assert!(matches!(
            load_csv(f.path(), &HashMap::new()),
            Err(Error::DuplicateColumn(_))
        ));
        assert!(matches!(
            load_csv("/nonexistent/file.csv", &HashMap::new()),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn folds_basic_examples() {
        let s = SeedSpec::new(11, 0);
        let f = make_folds(10, 10, s).unwrap();
        assert!(f.fold_sizes().iter().all(|&c| c == 1));
        assert_eq!(make_folds(10, 3, s).unwrap(), make_folds(10, 3, s).unwrap());
        let mut sizes = make_folds(7, 2, s).unwrap().fold_sizes();
        sizes.sort();
        assert_eq!(sizes, vec![3, 4]);
        assert!(make_folds(3, 4, s).is_err());
        assert!(make_folds(3, 1, s).is_err());
    }

    proptest::proptest! {
        #[test]
        fn fold_sizes_depend_only_on_n_k(n in 2usize..200, k in 2usize..20, s1: u64, s2: u64) {
            proptest::prop_assume!(k <= n);
            let mut a = make_folds(n, k, SeedSpec::new(s1, 0)).unwrap().fold_sizes();
            let mut b = make_folds(n, k, SeedSpec::new(s2, 3)).unwrap().fold_sizes();
            a.sort();
            b.sort();
            proptest::prop_assert_eq!(&a, &b);
            proptest::prop_assert!(a[k - 1] - a[0] <= 1);
            proptest::prop_assert!(a[0] >= 1);
        }

        #[test]
        fn csv_round_trip_is_bit_exact(vals in proptest::collection::vec(-1e300f64..1e300, 2..40)) {
            let n = vals.len();
            let y: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
            let tiny: Vec<f64> = vals.iter().map(|v| v * 1e-310).collect();
            let t = DataTable::new(vec![
                Column::new("y", Some(Role::Outcome), y),
                Column::new("x", Some(Role::Regressor), vals),
                Column::new("w", None, tiny),
            ]).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("t.csv");
            t.write_csv(&p).unwrap();
            let back = load_csv(&p, &t.roles()).unwrap();
            for (a, b) in t.columns().iter().zip(back.columns()) {
                proptest::prop_assert_eq!(&a.name, &b.name);
                proptest::prop_assert_eq!(a.role, b.role);
                for (x, y) in a.values.iter().zip(&b.values) {
                    proptest::prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }
}
