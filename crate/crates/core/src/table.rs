//! Delimiter-separated output tables.

use std::io::Write;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<I, S>(header: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<I, S>(&mut self, row: I)
    where
        I: IntoIterator<Item = S>,
        S: ToString,
    {
        let row: Vec<String> = row.into_iter().map(|c| c.to_string()).collect();
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn write_tsv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new()
            .delimiter(b'\t')
            .quote_style(csv::QuoteStyle::Necessary)
            .from_writer(w);
        out.write_record(&self.header)?;
        for row in &self.rows {
            out.write_record(row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_tsv(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_tsv(&mut buf).expect("writing to memory");
        buf
    }

    /// Space-aligned plain-text rendering for reports.
    pub fn to_text(&self) -> String {
        let mut width: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (w, c) in width.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        for row in std::iter::once(&self.header).chain(&self.rows) {
            let cells: Vec<String> = row
                .iter()
                .zip(&width)
                .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

/// Fixed-precision float rendering so tables are byte-stable.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NA".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.6}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_else(|| "NA".to_string())
}

/// Percentage rendered at two decimals, as in the published tables.
pub fn fmt_percent(x: f64) -> String {
    format!("{x:.2}")
}

/// Parses a two-or-more column text table: whitespace or tab separated,
/// `#` starts a comment, blank lines ignored. Yields (line number, fields).
pub fn parse_text_table(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = match line.find('#') {
            Some(p) => &line[..p],
            None => line,
        };
        let line = line.trim();
        if line.is_empty() {
            return None;
        }
        let fields: Vec<&str> = if line.contains('\t') {
            line.split('\t').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        Some((i + 1, fields))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_alignment() {
        let mut t = Table::new(["a", "long"]);
        t.push(["xyz", "1"]);
        assert_eq!(t.to_text(), "a    long\nxyz  1\n");
    }

    #[test]
    fn tsv_output() {
        let mut t = Table::new(["a", "b"]);
        t.push(["x", "1"]);
        t.push(["y\tz", "2"]);
        let s = String::from_utf8(t.to_tsv()).unwrap();
        assert_eq!(s, "a\tb\nx\t1\n\"y\tz\"\t2\n");
    }

    #[test]
    fn comments_and_blanks() {
        let rows: Vec<_> = parse_text_table("# head\n\nx.de de # trailing\ny.fr\tfr\n").collect();
        assert_eq!(rows, vec![(3, vec!["x.de", "de"]), (4, vec!["y.fr", "fr"])]);
    }

    #[test]
    fn floats() {
        assert_eq!(fmt_f64(1.0 / 3.0), "0.333333");
        assert_eq!(fmt_percent(25.0 / 4950.0 * 100.0), "0.51");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
    }
}
