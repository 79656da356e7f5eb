//! Uniform cell view over normalized rows, shared by every exporter.

use serde::Serialize;
use serde_json::{Number, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cell {
    /// Decimal text, printed verbatim.
    Number(String),
    Text(String),
    Empty,
}

impl Cell {
    /// Empty strings become [`Cell::Empty`].
    pub fn text(s: impl Into<String>) -> Self {
        let s = s.into();
        if s.is_empty() {
            Cell::Empty
        } else {
            Cell::Text(s)
        }
    }

    pub fn opt_text(s: Option<impl Into<String>>) -> Self {
        s.map_or(Cell::Empty, Cell::text)
    }

    pub fn number(n: impl ToString) -> Self {
        Cell::Number(n.to_string())
    }

    /// The cell as it appears in text-based outputs.
    pub fn as_str(&self) -> &str {
        match self {
            Cell::Number(s) | Cell::Text(s) => s,
            Cell::Empty => "",
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            Cell::Number(s) => s
                .parse::<Number>()
                .map(Value::Number)
                .unwrap_or_else(|_| Value::String(s.clone())),
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Empty => Value::Null,
        }
    }
}

/// A normalized row type with a fixed column order.
pub trait TableRow {
    const COLUMNS: &'static [&'static str];

    fn cells(&self) -> Vec<Cell>;
}

/// Rows of one kind rendered to cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn from_rows<R: TableRow>(rows: &[R]) -> Self {
        Self {
            columns: R::COLUMNS.iter().map(|c| (*c).to_owned()).collect(),
            rows: rows.iter().map(TableRow::cells).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

impl Serialize for Cell {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}
