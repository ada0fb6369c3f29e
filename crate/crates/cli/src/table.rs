//! CSV input with a header row; lines starting with `#` are comments.

use std::collections::BTreeMap;
use std::path::Path;

use mnri::glm::Dataset;
use mnri::spline::SplineBasis;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let file = std::fs::File::open(path)
            .map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))?;
        Self::from_reader(file).map_err(|e| match e {
            CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self, CliError> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = headers.iter().find(|h| !seen.insert(h.as_str())) {
            return Err(CliError::data(format!("duplicate column '{dup}'")));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec?.iter().map(str::to_owned).collect());
        }
        if rows.is_empty() {
            return Err(CliError::data("no data rows"));
        }
        Ok(Self { headers, rows })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn index_of(&self, name: &str) -> Result<usize, CliError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::data(format!("missing column '{name}'")))
    }

    /// Parses a column as numbers; blanks and `NA` are hard errors.
    pub fn numeric(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let j = self.index_of(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let cell = row[j].as_str();
                if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                    return Err(CliError::data(format!("missing value in column '{name}' at data row {}", i + 1)));
                }
                let v: f64 = cell.parse().map_err(|_| {
                    CliError::data(format!("column '{name}' row {}: '{cell}' is not a number", i + 1))
                })?;
                if !v.is_finite() {
                    return Err(CliError::data(format!("column '{name}' row {}: non-finite value", i + 1)));
                }
                Ok(v)
            })
            .collect()
    }

    pub fn outcome(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let y = self.numeric(name)?;
        if let Some(i) = y.iter().position(|v| *v != 0.0 && *v != 1.0) {
            return Err(CliError::data(format!(
                "outcome '{name}' must be 0 or 1; data row {} has {}",
                i + 1,
                y[i]
            )));
        }
        Ok(y)
    }
}

/// Which columns play which role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub outcome: String,
    pub base: Vec<String>,
    pub new: Vec<String>,
    /// Column → knot count for restricted cubic spline expansion.
    #[serde(default)]
    pub spline: BTreeMap<String, usize>,
}

impl ColumnSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        let mut seen = std::collections::HashSet::new();
        for name in self.base.iter().chain(&self.new) {
            if name == &self.outcome {
                return Err(CliError::data(format!("outcome '{name}' cannot also be a covariate")));
            }
            if !seen.insert(name) {
                return Err(CliError::data(format!("column '{name}' listed more than once")));
            }
        }
        if let Some(col) = self.spline.keys().find(|c| !seen.contains(c)) {
            return Err(CliError::data(format!("spline column '{col}' is not a base or new covariate")));
        }
        Ok(())
    }
}

/// Resolved design: covariate columns after spline expansion, and the
/// knots that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub dataset: Dataset,
    pub knots: BTreeMap<String, Vec<f64>>,
}

fn expand(
    table: &Table,
    names: &[String],
    spec: &ColumnSpec,
    knots: &mut BTreeMap<String, Vec<f64>>,
    fixed: Option<&BTreeMap<String, Vec<f64>>>,
) -> Result<Vec<Vec<f64>>, CliError> {
    let mut cols = Vec::new();
    for name in names {
        let values = table.numeric(name)?;
        match spec.spline.get(name) {
            Some(&k) => {
                let basis = match fixed.and_then(|f| f.get(name)) {
                    Some(t) => SplineBasis::new(t.clone())?,
                    None => SplineBasis::from_data(&values, k)
                        .map_err(|e| CliError::data(format!("spline for '{name}': {e}")))?,
                };
                knots.insert(name.clone(), basis.knots().to_vec());
                cols.extend(basis.evaluate_columns(&values));
            }
            None => {
                if values.iter().all(|v| *v == values[0]) {
                    return Err(CliError::data(format!("column '{name}' is constant")));
                }
                cols.push(values);
            }
        }
    }
    Ok(cols)
}

/// Builds the dataset for `spec`. Spline knots come from `fixed` when given
/// (so a test file reuses the training basis), otherwise from the data.
pub fn build_design(
    table: &Table,
    spec: &ColumnSpec,
    fixed: Option<&BTreeMap<String, Vec<f64>>>,
) -> Result<Design, CliError> {
    spec.validate()?;
    let y = table.outcome(&spec.outcome)?;
    let mut knots = BTreeMap::new();
    let base = expand(table, &spec.base, spec, &mut knots, fixed)?;
    let new = expand(table, &spec.new, spec, &mut knots, fixed)?;
    let dataset = Dataset::from_columns(y, &base, &new)?;
    Ok(Design { dataset, knots })
}

/// Writes `headers` and `rows` as CSV, preceded by optional `#` comment lines.
pub fn write_csv<W: std::io::Write>(
    out: W,
    comments: &[String],
    headers: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    let mut out = out;
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(headers)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(s: &str) -> Result<Table, CliError> {
        Table::from_reader(s.as_bytes())
    }

    #[test]
    fn comments_and_whitespace() {
        let t = table("# knots a: 1,2,3\ny, a\n1, 2.5\n0,3\n").unwrap();
        assert_eq!(t.headers, vec!["y", "a"]);
        assert_eq!(t.numeric("a").unwrap(), vec![2.5, 3.0]);
    }

    #[test]
    fn missing_values_are_errors() {
        let t = table("y,a\n1,\n0,2\n").unwrap();
        assert!(matches!(t.numeric("a"), Err(CliError::Data(m)) if m.contains("missing value")));
        let t = table("y,a\n1,NA\n0,2\n").unwrap();
        assert!(t.numeric("a").is_err());
        assert!(matches!(t.numeric("b"), Err(CliError::Data(m)) if m.contains("missing column")));
    }

    #[test]
    fn outcome_must_be_binary() {
        let t = table("y,a\n1,1\n2,2\n").unwrap();
        assert!(matches!(t.outcome("y"), Err(CliError::Data(_))));
    }

    #[test]
    fn spec_validation() {
        let spec = |base: &[&str], new: &[&str]| ColumnSpec {
            outcome: "y".into(),
            base: base.iter().map(|s| s.to_string()).collect(),
            new: new.iter().map(|s| s.to_string()).collect(),
            spline: BTreeMap::new(),
        };
        assert!(spec(&["a"], &["b"]).validate().is_ok());
        assert!(spec(&["a"], &["a"]).validate().is_err());
        assert!(spec(&["y"], &["b"]).validate().is_err());
        let mut s = spec(&["a"], &["b"]);
        s.spline.insert("c".into(), 4);
        assert!(s.validate().is_err());
    }
}
