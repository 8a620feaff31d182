// SPDX-License-Identifier: Apache-2.0

//! Public node covariates.
//!
//! The attribute file is comma-delimited. The header declares each column as
//! `name:cat` or `name:num`; the following rows give one node each, in node
//! order. Categorical levels are ordered lexicographically, so the first level
//! of a column is the smallest string.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AttributeError {
    #[error("attribute table has {found} rows, expected {expected}")]
    RowCount { expected: usize, found: usize },
    #[error("column {column:?}: unknown type tag {tag:?} (expected cat or num)")]
    UnknownType { column: String, tag: String },
    #[error("malformed header field {0:?} (expected name:type)")]
    BadHeader(String),
    #[error("duplicate column {0:?}")]
    DuplicateColumn(String),
    #[error("row {row}, column {column:?}: missing value")]
    MissingValue { row: usize, column: String },
    #[error("row {row}, column {column:?}: {value:?} is not numeric")]
    NotNumeric { row: usize, column: String, value: String },
    #[error("row {row}: expected {expected} fields, found {found}")]
    FieldCount { row: usize, expected: usize, found: usize },
    #[error("empty attribute file")]
    EmptyFile,
    #[error("no column named {0:?}")]
    UnknownColumn(String),
    #[error("column {column:?} is {actual}, expected {expected}")]
    WrongKind {
        column: String,
        expected: &'static str,
        actual: &'static str,
    },
    #[error("column {column:?} has no level {level:?}")]
    UnknownLevel { column: String, level: String },
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One covariate column.
#[derive(Clone, Debug, PartialEq)]
pub enum ColumnData {
    /// `codes[i]` indexes into `levels`.
    Categorical {
        levels: Vec<String>,
        codes: Vec<u32>,
    },
    Numeric(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn kind_name(&self) -> &'static str {
        match self.data {
            ColumnData::Categorical { .. } => "categorical",
            ColumnData::Numeric(_) => "numeric",
        }
    }
}

/// Covariate table `Z` with one row per node.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NodeAttributes {
    n: usize,
    columns: Vec<Column>,
}

impl NodeAttributes {
    /// Table with no columns for `n` nodes.
    pub fn empty(n: usize) -> Self {
        Self { n, columns: Vec::new() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Result<&Column, AttributeError> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| AttributeError::UnknownColumn(name.to_string()))
    }

    /// Adds a categorical column from per-node labels.
    pub fn with_categorical<S: AsRef<str>>(mut self, name: &str, values: &[S]) -> Result<Self, AttributeError> {
        self.check_new(name, values.len())?;
        self.columns.push(Column {
            name: name.to_string(),
            data: categorical(values.iter().map(|s| s.as_ref())),
        });
        Ok(self)
    }

    pub fn with_numeric(mut self, name: &str, values: &[f64]) -> Result<Self, AttributeError> {
        self.check_new(name, values.len())?;
        self.columns.push(Column {
            name: name.to_string(),
            data: ColumnData::Numeric(values.to_vec()),
        });
        Ok(self)
    }

    fn check_new(&self, name: &str, len: usize) -> Result<(), AttributeError> {
        if len != self.n {
            return Err(AttributeError::RowCount {
                expected: self.n,
                found: len,
            });
        }
        if self.columns.iter().any(|c| c.name == name) {
            return Err(AttributeError::DuplicateColumn(name.to_string()));
        }
        Ok(())
    }

    /// Level codes and level names of a categorical column.
    pub fn categorical(&self, name: &str) -> Result<(&[u32], &[String]), AttributeError> {
        let col = self.column(name)?;
        match &col.data {
            ColumnData::Categorical { levels, codes } => Ok((codes, levels)),
            ColumnData::Numeric(_) => Err(AttributeError::WrongKind {
                column: name.to_string(),
                expected: "categorical",
                actual: "numeric",
            }),
        }
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64], AttributeError> {
        let col = self.column(name)?;
        match &col.data {
            ColumnData::Numeric(v) => Ok(v),
            ColumnData::Categorical { .. } => Err(AttributeError::WrongKind {
                column: name.to_string(),
                expected: "numeric",
                actual: "categorical",
            }),
        }
    }

    /// Code of `level` in a categorical column.
    pub fn level_code(&self, column: &str, level: &str) -> Result<u32, AttributeError> {
        let (_, levels) = self.categorical(column)?;
        levels
            .iter()
            .position(|l| l == level)
            .map(|p| p as u32)
            .ok_or_else(|| AttributeError::UnknownLevel {
                column: column.to_string(),
                level: level.to_string(),
            })
    }

    /// Reorders rows so that new node `k` is old node `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|c| Column {
                name: c.name.clone(),
                data: match &c.data {
                    ColumnData::Categorical { levels, codes } => ColumnData::Categorical {
                        levels: levels.clone(),
                        codes: perm.iter().map(|&p| codes[p]).collect(),
                    },
                    ColumnData::Numeric(v) => ColumnData::Numeric(perm.iter().map(|&p| v[p]).collect()),
                },
            })
            .collect();
        Self { n: self.n, columns }
    }
}

fn categorical<'a>(values: impl Iterator<Item = &'a str> + Clone) -> ColumnData {
    let levels: Vec<String> = values
        .clone()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(str::to_string)
        .collect();
    let codes = values
        .map(|v| levels.iter().position(|l| l == v).unwrap() as u32)
        .collect();
    ColumnData::Categorical { levels, codes }
}

enum Kind {
    Cat,
    Num,
}

/// Parses the comma-delimited attribute format for `n` nodes.
pub fn parse_attributes(text: &str, n: usize) -> Result<NodeAttributes, AttributeError> {
    let mut lines = text
        .lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let header = lines.next().ok_or(AttributeError::EmptyFile)?;
    let mut schema = Vec::new();
    for field in header.split(',') {
        let (name, tag) = field
            .split_once(':')
            .ok_or_else(|| AttributeError::BadHeader(field.to_string()))?;
        let (name, tag) = (name.trim(), tag.trim());
        if name.is_empty() {
            return Err(AttributeError::BadHeader(field.to_string()));
        }
        let kind = match tag {
            "cat" => Kind::Cat,
            "num" => Kind::Num,
            other => {
                return Err(AttributeError::UnknownType {
                    column: name.to_string(),
                    tag: other.to_string(),
                })
            }
        };
        schema.push((name.to_string(), kind));
    }

    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').map(str::trim).collect()).collect();
    if rows.len() != n {
        return Err(AttributeError::RowCount {
            expected: n,
            found: rows.len(),
        });
    }
    for (r, row) in rows.iter().enumerate() {
        if row.len() != schema.len() {
            return Err(AttributeError::FieldCount {
                row: r + 1,
                expected: schema.len(),
                found: row.len(),
            });
        }
    }

    let mut attrs = NodeAttributes::empty(n);
    for (c, (name, kind)) in schema.iter().enumerate() {
        let raw: Vec<&str> = rows.iter().map(|row| row[c]).collect();
        if let Some(r) = raw.iter().position(|v| v.is_empty() || *v == "NA") {
            return Err(AttributeError::MissingValue {
                row: r + 1,
                column: name.clone(),
            });
        }
        attrs = match kind {
            Kind::Cat => attrs.with_categorical(name, &raw)?,
            Kind::Num => {
                let vals = raw
                    .iter()
                    .enumerate()
                    .map(|(r, v)| {
                        v.parse::<f64>()
                            .ok()
                            .filter(|x| x.is_finite())
                            .ok_or_else(|| AttributeError::NotNumeric {
                                row: r + 1,
                                column: name.clone(),
                                value: v.to_string(),
                            })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                attrs.with_numeric(name, &vals)?
            }
        };
    }
    Ok(attrs)
}

pub fn load_attributes(path: impl AsRef<Path>, n: usize) -> Result<NodeAttributes, AttributeError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| AttributeError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_attributes(&text, n)
}
