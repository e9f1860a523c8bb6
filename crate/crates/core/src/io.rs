//! Model files, orbit caches and CSV output.
//!
//! A model file is a sequence of `[section]` blocks, `#` starting a comment:
//!
//! ```text
//! [name]        optional, one line
//! [states]      k
//! [adjacency]   k rows of k entries in {0, 1}
//! [roof]        one `i j value` line per allowed edge
//! [weight]      one `i j value` line per allowed edge
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{cyclic_birkhoff, is_lyndon, validate_model, ShiftModel, Word};
use crate::orbits::{CachedOrbits, OrbitRecord};

pub const BUNDLED: [(&str, &str); 4] = [
    ("m-gold", include_str!("../models/m-gold.model")),
    ("m-arith", include_str!("../models/m-arith.model")),
    ("coin-flip", include_str!("../models/coin-flip.model")),
    ("golden-mean-shift", include_str!("../models/golden-mean-shift.model")),
];

/// Text of a bundled model.
pub fn bundled_source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn bundled(name: &str) -> Option<ShiftModel> {
    bundled_source(name).map(|s| parse_model(s).expect("bundled models parse"))
}

/// Formats with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

struct Section<'a> {
    name: &'a str,
    header_line: usize,
    lines: Vec<(usize, &'a str)>,
}

fn sections(text: &str) -> Result<BTreeMap<&str, Section<'_>>> {
    let mut out: BTreeMap<&str, Section<'_>> = BTreeMap::new();
    let mut current: Option<&str> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::parse("header", line_no, format!("malformed section header `{line}`")))?
                .trim();
            if !matches!(name, "name" | "states" | "adjacency" | "roof" | "weight") {
                return Err(Error::parse(name, line_no, "unknown section"));
            }
            if out.contains_key(name) {
                return Err(Error::parse(name, line_no, "duplicate section"));
            }
            out.insert(
                name,
                Section {
                    name,
                    header_line: line_no,
                    lines: Vec::new(),
                },
            );
            current = Some(name);
            continue;
        }
        match current {
            Some(name) => out.get_mut(name).expect("inserted").lines.push((line_no, line)),
            None => return Err(Error::parse("preamble", line_no, "content before the first section")),
        }
    }
    Ok(out)
}

fn require<'a, 'b>(secs: &'b BTreeMap<&'a str, Section<'a>>, name: &str) -> Result<&'b Section<'a>> {
    secs.get(name)
        .ok_or_else(|| Error::parse(name, 0, format!("missing section [{name}]")))
}

fn edge_entries(sec: &Section<'_>, adjacency: &[Vec<u8>], positive: bool) -> Result<Vec<(usize, usize, f64)>> {
    let k = adjacency.len();
    let mut seen = vec![false; k * k];
    let mut out = Vec::new();
    for &(line_no, line) in &sec.lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::parse(sec.name, line_no, "expected `i j value`"));
        }
        let index = |s: &str| -> Result<usize> {
            let v: usize = s
                .parse()
                .map_err(|_| Error::parse(sec.name, line_no, format!("bad state index `{s}`")))?;
            if v >= k {
                return Err(Error::parse(sec.name, line_no, format!("state {v} out of range 0..{k}")));
            }
            Ok(v)
        };
        let (i, j) = (index(fields[0])?, index(fields[1])?);
        let value: f64 = fields[2]
            .parse()
            .map_err(|_| Error::parse(sec.name, line_no, format!("bad number `{}`", fields[2])))?;
        if !value.is_finite() {
            return Err(Error::parse(sec.name, line_no, "value must be finite"));
        }
        if adjacency[i][j] == 0 {
            return Err(Error::parse(sec.name, line_no, format!("entry on forbidden edge {i} -> {j}")));
        }
        if positive && !(value > 0.0) {
            return Err(Error::parse(sec.name, line_no, "roof must be positive"));
        }
        if std::mem::replace(&mut seen[i * k + j], true) {
            return Err(Error::parse(sec.name, line_no, format!("duplicate entry for edge {i} -> {j}")));
        }
        out.push((i, j, value));
    }
    for i in 0..k {
        for j in 0..k {
            if adjacency[i][j] == 1 && !seen[i * k + j] {
                return Err(Error::parse(
                    sec.name,
                    sec.header_line,
                    format!("missing entry for allowed edge {i} -> {j}"),
                ));
            }
        }
    }
    Ok(out)
}

/// Parses model text. The result is primitive; anything else is rejected.
pub fn parse_model(text: &str) -> Result<ShiftModel> {
    let secs = sections(text)?;
    let name = match secs.get("name") {
        Some(sec) => match sec.lines.as_slice() {
            [(_, n)] => n.to_string(),
            _ => return Err(Error::parse("name", sec.header_line, "expected exactly one line")),
        },
        None => "model".to_string(),
    };

    let states = require(&secs, "states")?;
    let k: usize = match states.lines.as_slice() {
        [(line_no, v)] => v
            .parse()
            .map_err(|_| Error::parse("states", *line_no, format!("bad state count `{v}`")))?,
        _ => return Err(Error::parse("states", states.header_line, "expected one line with the state count")),
    };
    if k < 2 {
        return Err(Error::parse("states", states.header_line + 1, "need at least 2 states"));
    }

    let adj_sec = require(&secs, "adjacency")?;
    if adj_sec.lines.len() != k {
        return Err(Error::parse(
            "adjacency",
            adj_sec.header_line,
            format!("expected {k} rows, found {}", adj_sec.lines.len()),
        ));
    }
    let mut adjacency = Vec::with_capacity(k);
    for (row, &(line_no, line)) in adj_sec.lines.iter().enumerate() {
        let entries: Vec<&str> = line.split_whitespace().collect();
        if entries.len() != k {
            return Err(Error::parse(
                "adjacency",
                line_no,
                format!("row {row} has {} entries, expected {k}", entries.len()),
            ));
        }
        let parsed = entries
            .iter()
            .map(|e| match *e {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(Error::parse("adjacency", line_no, format!("row {row}: entry `{other}` is not 0 or 1"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        adjacency.push(parsed);
    }

    let roof = edge_entries(require(&secs, "roof")?, &adjacency, true)?;
    let weight = edge_entries(require(&secs, "weight")?, &adjacency, false)?;
    let model = ShiftModel::new(name, &adjacency, &roof, &weight)?;
    let report = validate_model(&model);
    if !report.primitive {
        return Err(Error::parse(
            "adjacency",
            adj_sec.header_line,
            match report.period {
                Some(p) if p > 1 => format!("adjacency is irreducible with period {p}, not primitive"),
                _ => "adjacency is not irreducible".to_string(),
            },
        ));
    }
    Ok(model)
}

/// A bundled model name or a path to a model file.
pub fn load_model(spec: &str) -> Result<ShiftModel> {
    let path = Path::new(spec);
    if path.exists() {
        return parse_model(&fs::read_to_string(path)?);
    }
    bundled(spec).ok_or_else(|| {
        let names: Vec<&str> = BUNDLED.iter().map(|(n, _)| *n).collect();
        Error::InvalidArgument(format!("`{spec}` is neither a file nor a bundled model ({})", names.join(", ")))
    })
}

/// Serializes a model back to the file format.
pub fn format_model(model: &ShiftModel) -> String {
    let k = model.state_count();
    let mut s = format!("[name]\n{}\n\n[states]\n{k}\n\n[adjacency]\n", model.name());
    for i in 0..k {
        let row: Vec<&str> = (0..k).map(|j| if model.allowed(i, j) { "1" } else { "0" }).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    for (title, get) in [("roof", ShiftModel::roof as fn(&ShiftModel, usize, usize) -> f64), ("weight", ShiftModel::weight)] {
        s.push_str(&format!("\n[{title}]\n"));
        for (i, j) in model.edges() {
            s.push_str(&format!("{i} {j} {}\n", fmt_f64(get(model, i, j))));
        }
    }
    s
}

// ---------------------------------------------------------------------------
// CSV

/// Header-first CSV writer.
pub struct CsvOut<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> CsvOut<W> {
    pub fn new(sink: W, header: &[&str]) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
        inner.write_record(header).map_err(csv_error)?;
        Ok(Self { inner })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields).map_err(csv_error)
    }

    pub fn finish(self) -> Result<W> {
        self.inner
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Writes a CSV file, creating parent directories.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut out = CsvOut::new(Vec::new(), header)?;
    for r in rows {
        out.row(r)?;
    }
    fs::write(path, out.finish()?)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// orbit cache

pub const CACHE_HEADER: [&str; 4] = ["word", "n", "l", "w"];

/// Writes `(word, record)` pairs sorted by `(n, word)`.
pub fn write_orbit_cache<W: Write>(sink: W, orbits: &[(Word, OrbitRecord)]) -> Result<W> {
    let mut out = CsvOut::new(sink, &CACHE_HEADER)?;
    let mut prev: Option<(usize, &[usize])> = None;
    for (word, r) in orbits {
        let key = (r.n, word.as_slice());
        if prev.is_some_and(|p| p >= key) {
            return Err(Error::InvalidArgument("orbit cache records must be sorted by (n, word)".into()));
        }
        prev = Some(key);
        out.row([word.to_string(), r.n.to_string(), fmt_f64(r.l), fmt_f64(r.w)])?;
    }
    out.finish()
}

/// Reads an orbit cache, checking order, admissibility and every value
/// against the model bit for bit.
///
/// The cache is taken to be complete up to `n_max`, or up to its largest
/// word length when `n_max` is `None`.
pub fn read_orbit_cache(text: &str, model: &ShiftModel, n_max: Option<usize>) -> Result<(Vec<Word>, CachedOrbits)> {
    let section = "orbit cache";
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut words = Vec::new();
    let mut records = Vec::new();
    let mut seen_header = false;
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 1;
        let row = row.map_err(|e| Error::parse(section, line, e.to_string()))?;
        if !seen_header {
            if row.iter().collect::<Vec<_>>() != CACHE_HEADER {
                return Err(Error::parse(section, line, format!("expected header {}", CACHE_HEADER.join(","))));
            }
            seen_header = true;
            continue;
        }
        if row.len() != 4 {
            return Err(Error::parse(section, line, format!("expected 4 fields, found {}", row.len())));
        }
        let word: Word = row[0]
            .parse()
            .map_err(|e: Error| Error::parse(section, line, e.to_string()))?;
        let n: usize = row[1]
            .parse()
            .map_err(|_| Error::parse(section, line, format!("bad word length `{}`", &row[1])))?;
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::parse(section, line, format!("bad number `{s}`")))
        };
        let (l, w) = (num(&row[2])?, num(&row[3])?);
        if word.len() != n {
            return Err(Error::parse(section, line, format!("word has length {}, row says {n}", word.len())));
        }
        if !is_lyndon(word.as_slice()) {
            return Err(Error::parse(section, line, format!("`{word}` is not a Lyndon word")));
        }
        let (l0, w0) = cyclic_birkhoff(model, &word).map_err(|e| Error::parse(section, line, e.to_string()))?;
        if l0.to_bits() != l.to_bits() || w0.to_bits() != w.to_bits() {
            return Err(Error::parse(section, line, format!("values for `{word}` do not match the model")));
        }
        if let Some(prev) = words.last() {
            let prev: &Word = prev;
            if (prev.len(), prev.as_slice()) >= (n, word.as_slice()) {
                return Err(Error::parse(section, line, "rows not sorted by (n, word)"));
            }
        }
        records.push(OrbitRecord { n, l, w });
        words.push(word);
    }
    if !seen_header {
        return Err(Error::parse(section, 1, "missing header"));
    }
    let max_n = records.iter().map(|r| r.n).max().unwrap_or(0);
    let n_max = n_max.unwrap_or(max_n);
    if max_n > n_max {
        return Err(Error::InvalidArgument(format!("cache holds words of length {max_n} > n_max {n_max}")));
    }
    Ok((
        words,
        CachedOrbits {
            model: model.clone(),
            records,
            n_max,
        },
    ))
}
