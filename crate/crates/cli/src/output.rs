//! Rendering of command results as aligned tables, CSV or JSON.
//!
//! Tables show 4 decimals. CSV and JSON carry full precision: CSV uses the
//! shortest round-trip decimal form, and non-finite values become `inf`,
//! `-inf` or an empty field (`null` in JSON).

use clap::ValueEnum;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
    Csv,
}

/// A cell that knows how to print itself in each format.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl Cell {
    pub fn opt(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }

    fn table(&self) -> String {
        match self {
            Cell::Num(x) if x.is_finite() => format!("{x:.4}"),
            Cell::Num(x) if x.is_nan() => "-".into(),
            Cell::Num(x) => non_finite(*x).into(),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => "-".into(),
        }
    }

    fn csv(&self) -> String {
        match self {
            Cell::Num(x) if x.is_finite() => x.to_string(),
            Cell::Num(x) if x.is_nan() => String::new(),
            Cell::Num(x) => non_finite(*x).into(),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => {
                format!("\"{}\"", s.replace('"', "\"\""))
            }
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) if x.is_finite() => Value::from(*x),
            Cell::Num(x) if x.is_nan() => Value::Null,
            Cell::Num(x) => Value::from(non_finite(*x)),
            Cell::Int(i) => Value::from(*i),
            Cell::Text(s) => Value::from(s.as_str()),
            Cell::Empty => Value::Null,
        }
    }

    fn is_text(&self) -> bool {
        matches!(self, Cell::Text(_))
    }
}

fn non_finite(x: f64) -> &'static str {
    if x > 0.0 {
        "inf"
    } else {
        "-inf"
    }
}

/// Rows of named columns. JSON renders as an array of objects, or as a single
/// object when `single` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct Records {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    pub single: bool,
}

impl Records {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
            single: false,
        }
    }

    /// A one-row record shown as a `name value` listing in tables.
    pub fn single(fields: Vec<(&'static str, Cell)>) -> Self {
        let (columns, row) = fields.into_iter().unzip();
        Self {
            columns,
            rows: vec![row],
            single: true,
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn row_json(&self, row: &[Cell]) -> Value {
        Value::Object(
            self.columns
                .iter()
                .zip(row)
                .map(|(c, v)| ((*c).to_owned(), v.json()))
                .collect(),
        )
    }

    pub fn json(&self) -> Value {
        if self.single {
            self.row_json(&self.rows[0])
        } else {
            Value::Array(self.rows.iter().map(|r| self.row_json(r)).collect())
        }
    }

    pub fn csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.iter().map(Cell::csv).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }

    pub fn table(&self) -> String {
        if self.single {
            let width = self.columns.iter().map(|c| c.len()).max().unwrap_or(0);
            return self
                .columns
                .iter()
                .zip(&self.rows[0])
                .map(|(c, v)| format!("{c:<width$}  {}\n", v.table()))
                .collect();
        }
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(Cell::table).collect())
            .collect();
        let widths: Vec<usize> = (0..self.columns.len())
            .map(|j| {
                cells
                    .iter()
                    .map(|r| r[j].len())
                    .chain([self.columns[j].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        // text columns align left, numbers right
        let left: Vec<bool> = (0..self.columns.len())
            .map(|j| self.rows.iter().any(|r| r[j].is_text()))
            .collect();
        let line = |fields: &[String]| {
            let padded: Vec<String> = fields
                .iter()
                .enumerate()
                .map(|(j, f)| {
                    if left[j] {
                        format!("{f:<w$}", w = widths[j])
                    } else {
                        format!("{f:>w$}", w = widths[j])
                    }
                })
                .collect();
            padded.join("  ").trim_end().to_owned() + "\n"
        };
        let header: Vec<String> = self.columns.iter().map(|c| (*c).to_owned()).collect();
        std::iter::once(line(&header))
            .chain(cells.iter().map(|r| line(r)))
            .collect()
    }
}

/// A command result: one or more titled sections, the main one last.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub sections: Vec<(&'static str, Records)>,
}

impl Report {
    pub fn one(name: &'static str, records: Records) -> Self {
        Self {
            sections: vec![(name, records)],
        }
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let value = if self.sections.len() == 1 {
                    self.sections[0].1.json()
                } else {
                    Value::Object(
                        self.sections
                            .iter()
                            .map(|(n, r)| ((*n).to_owned(), r.json()))
                            .collect(),
                    )
                };
                serde_json::to_string_pretty(&value).expect("plain JSON values") + "\n"
            }
            // one flat table: the main result, which comes last
            Format::Csv => self
                .sections
                .last()
                .map(|(_, r)| r.csv())
                .unwrap_or_default(),
            Format::Table => {
                if self.sections.len() == 1 {
                    return self.sections[0].1.table();
                }
                self.sections
                    .iter()
                    .map(|(n, r)| format!("[{n}]\n{}", r.table()))
                    .collect::<Vec<_>>()
                    .join("\n")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Records {
        let mut r = Records::new(vec!["name", "x", "n"]);
        r.push(vec![
            Cell::Text("a,b".into()),
            Cell::Num(0.1 + 0.2),
            Cell::Int(3),
        ]);
        r.push(vec![
            Cell::Text("c".into()),
            Cell::Num(f64::INFINITY),
            Cell::Empty,
        ]);
        r.push(vec![
            Cell::Text("d".into()),
            Cell::Num(f64::NAN),
            Cell::Int(10),
        ]);
        r
    }

    #[test]
    fn csv_keeps_full_precision() {
        assert_eq!(
            sample().csv(),
            "name,x,n\n\"a,b\",0.30000000000000004,3\nc,inf,\nd,,10\n"
        );
    }

    #[test]
    fn table_rounds_and_aligns() {
        assert_eq!(
            sample().table(),
            "name       x   n\na,b   0.3000   3\nc        inf   -\nd          -  10\n"
        );
        let single = Records::single(vec![
            ("c_norm", Cell::Num(0.80401)),
            ("status", Cell::Text("slack".into())),
        ]);
        assert_eq!(single.table(), "c_norm  0.8040\nstatus  slack\n");
    }

    #[test]
    fn json_shapes() {
        let v = sample().json();
        assert_eq!(v[0]["x"], Value::from(0.30000000000000004));
        assert_eq!(v[1]["x"], Value::from("inf"));
        assert_eq!(v[2]["x"], Value::Null);
        let single = Records::single(vec![("q", Cell::Num(0.5))]);
        assert_eq!(single.json()["q"], Value::from(0.5));
        let report = Report {
            sections: vec![("a", single.clone()), ("b", single)],
        };
        let parsed: Value = serde_json::from_str(&report.render(Format::Json)).unwrap();
        assert_eq!(parsed["b"]["q"], Value::from(0.5));
    }
}
