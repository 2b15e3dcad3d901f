//! Typed heterogeneous tables: attribute declarations, CSV loading and
//! label encoding, optional log preprocessing, and fitting of the per-column
//! shift/scale used by the mapping functions.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GlfmError, Result};
use crate::likelihoods::TransformParams;

/// Statistical type of a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Real,
    #[serde(rename = "positivereal")]
    PositiveReal,
    Categorical,
    Ordinal,
    Count,
}

impl AttributeKind {
    /// Categorical and ordinal columns have a finite label set.
    pub fn is_finite_discrete(self) -> bool {
        matches!(self, AttributeKind::Categorical | AttributeKind::Ordinal)
    }

    pub fn is_continuous(self) -> bool {
        matches!(self, AttributeKind::Real | AttributeKind::PositiveReal)
    }

    pub fn is_discrete(self) -> bool {
        !self.is_continuous()
    }

    pub fn tag(self) -> &'static str {
        match self {
            AttributeKind::Real => "real",
            AttributeKind::PositiveReal => "positivereal",
            AttributeKind::Categorical => "categorical",
            AttributeKind::Ordinal => "ordinal",
            AttributeKind::Count => "count",
        }
    }
}

impl fmt::Display for AttributeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for AttributeKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "real" => Ok(AttributeKind::Real),
            "positivereal" | "positive_real" | "positive-real" => Ok(AttributeKind::PositiveReal),
            "categorical" => Ok(AttributeKind::Categorical),
            "ordinal" => Ok(AttributeKind::Ordinal),
            "count" => Ok(AttributeKind::Count),
            other => Err(format!("unknown attribute kind `{other}`")),
        }
    }
}

/// Optional log transform applied to raw values before modelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preprocess {
    #[default]
    None,
    /// `g(x) = ln(x + 1)`
    Log1p,
    /// `g(x) = ln((100 - x) + 1)`, for percentages piled up near 100.
    ReflectedLog1p,
}

const REFLECT_AT: f64 = 100.0;

impl Preprocess {
    pub fn apply(self, x: f64) -> Option<f64> {
        match self {
            Preprocess::None => Some(x),
            Preprocess::Log1p => (x > -1.0).then(|| x.ln_1p()),
            Preprocess::ReflectedLog1p => (x < REFLECT_AT + 1.0).then(|| (REFLECT_AT - x).ln_1p()),
        }
    }

    pub fn invert(self, v: f64) -> f64 {
        match self {
            Preprocess::None => v,
            Preprocess::Log1p => v.exp_m1(),
            Preprocess::ReflectedLog1p => REFLECT_AT - v.exp_m1(),
        }
    }

    /// `ln |g'(x)|`, the density correction when mapping back to raw units.
    pub fn ln_abs_derivative(self, x: f64) -> f64 {
        match self {
            Preprocess::None => 0.0,
            Preprocess::Log1p => -(x.ln_1p()),
            Preprocess::ReflectedLog1p => -((REFLECT_AT - x).ln_1p()),
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Preprocess::None => "none",
            Preprocess::Log1p => "log1p",
            Preprocess::ReflectedLog1p => "reflected-log1p",
        }
    }
}

impl FromStr for Preprocess {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(Preprocess::None),
            "log1p" | "log" => Ok(Preprocess::Log1p),
            "reflected-log1p" | "reflected_log1p" | "rlog1p" => Ok(Preprocess::ReflectedLog1p),
            other => Err(format!("unknown preprocess `{other}`")),
        }
    }
}

/// Declaration of one column, plus everything learned about it at load time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub kind: AttributeKind,
    /// Number of categories `R_d`; resolved for categorical/ordinal columns
    /// once data is loaded.
    pub categories: Option<usize>,
    #[serde(default)]
    pub preprocess: Preprocess,
    #[serde(default)]
    pub transform: TransformParams,
    /// Raw label for each code `1..=R_d` (index `code - 1`).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<String>,
    /// Smallest and largest observed raw value, numeric columns only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_range: Option<(f64, f64)>,
}

impl AttributeSpec {
    pub fn new(name: impl Into<String>, kind: AttributeKind) -> Self {
        AttributeSpec {
            name: name.into(),
            kind,
            categories: None,
            preprocess: Preprocess::None,
            transform: TransformParams::default(),
            labels: Vec::new(),
            observed_range: None,
        }
    }

    pub fn with_categories(mut self, r: usize) -> Self {
        self.categories = Some(r);
        self
    }

    pub fn with_preprocess(mut self, p: Preprocess) -> Self {
        self.preprocess = p;
        self
    }

    pub fn with_transform(mut self, t: TransformParams) -> Self {
        self.transform = t;
        self
    }

    /// Number of pseudo-observation columns: `R_d` for categorical, else 1.
    pub fn width(&self) -> usize {
        match self.kind {
            AttributeKind::Categorical => self.categories.unwrap_or(2),
            _ => 1,
        }
    }

    pub fn n_categories(&self) -> usize {
        self.categories.unwrap_or(0)
    }

    /// Raw label for an encoded category.
    pub fn label(&self, code: usize) -> String {
        self.labels
            .get(code.wrapping_sub(1))
            .cloned()
            .unwrap_or_else(|| code.to_string())
    }

    /// Largest count considered when enumerating a count support.
    pub fn count_support_max(&self) -> u64 {
        let max_seen = self.observed_range.map(|(_, hi)| hi).unwrap_or(0.0);
        (max_seen.max(0.0) as u64) * 4 + 100
    }
}

/// Parse a column-declaration document, one `name,kind[,R_d][,preprocess]`
/// line per column. Blank lines and `#` comments are skipped.
pub fn parse_attribute_spec(text: &str) -> Result<Vec<AttributeSpec>> {
    let mut specs = Vec::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| GlfmError::Spec {
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 || fields[0].is_empty() {
            return Err(err("expected `name,kind[,R_d][,preprocess]`".into()));
        }
        let kind: AttributeKind = fields[1].parse().map_err(err)?;
        let mut spec = AttributeSpec::new(fields[0], kind);
        for extra in &fields[2..] {
            if extra.is_empty() {
                continue;
            }
            if let Ok(r) = extra.parse::<i64>() {
                if !kind.is_finite_discrete() {
                    return Err(err(format!("category count given for {kind} column")));
                }
                if r < 2 {
                    return Err(err(format!("category count must be at least 2, got {r}")));
                }
                spec.categories = Some(r as usize);
            } else {
                let p: Preprocess = extra.parse().map_err(err)?;
                if p != Preprocess::None && !kind.is_continuous() {
                    return Err(err(format!(
                        "preprocess `{}` needs a continuous column",
                        p.tag()
                    )));
                }
                spec.preprocess = p;
            }
        }
        specs.push(spec);
    }
    if specs.is_empty() {
        return Err(GlfmError::Spec {
            line: 0,
            message: "no columns declared".into(),
        });
    }
    Ok(specs)
}

/// Recognises missing cells: always the empty field, plus an optional
/// user-chosen sentinel.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MissingSentinel(Option<String>);

impl MissingSentinel {
    pub fn new(sentinel: Option<&str>) -> Self {
        MissingSentinel(
            sentinel
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty()),
        )
    }

    pub fn is_missing(&self, field: &str) -> bool {
        let field = field.trim();
        if field.is_empty() {
            return true;
        }
        match &self.0 {
            None => false,
            Some(s) if s == field => true,
            Some(s) => match (s.parse::<f64>(), field.parse::<f64>()) {
                (Ok(a), Ok(b)) => a == b,
                _ => false,
            },
        }
    }
}

/// `N × D` table of encoded values with a missing mask.
///
/// Categorical/ordinal cells hold codes `1..=R_d`; numeric cells hold the
/// (preprocessed) value. Missing cells hold `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    n_rows: usize,
    specs: Vec<AttributeSpec>,
    cells: Vec<f64>,
    missing: Vec<bool>,
    raw: Vec<String>,
}

impl DataMatrix {
    /// Build from already-encoded values (row-major). Validates the per-kind
    /// domain of every observed cell and records observed ranges.
    pub fn from_encoded(
        mut specs: Vec<AttributeSpec>,
        cells: Vec<f64>,
        missing: Vec<bool>,
    ) -> Result<Self> {
        let d = specs.len();
        if d == 0
            || !cells.len().is_multiple_of(d)
            || cells.len() != missing.len()
            || cells.is_empty()
        {
            return Err(GlfmError::Table(format!(
                "{} cells / {} mask entries do not form rows of {d} columns",
                cells.len(),
                missing.len()
            )));
        }
        let n_rows = cells.len() / d;
        let mut cells = cells;
        for (j, spec) in specs.iter_mut().enumerate() {
            if spec.kind.is_finite_discrete() && spec.categories.is_none() {
                let max_code = (0..n_rows)
                    .filter(|&i| !missing[i * d + j])
                    .map(|i| cells[i * d + j] as usize)
                    .max()
                    .unwrap_or(2);
                spec.categories = Some(max_code.max(2));
            }
            for i in 0..n_rows {
                let idx = i * d + j;
                if missing[idx] {
                    cells[idx] = f64::NAN;
                    continue;
                }
                validate_encoded(spec, cells[idx]).map_err(|message| GlfmError::Data {
                    row: i,
                    column: spec.name.clone(),
                    message,
                })?;
            }
        }
        let raw = cells
            .iter()
            .zip(&missing)
            .enumerate()
            .map(|(idx, (&v, &m))| {
                if m {
                    String::new()
                } else {
                    let spec = &specs[idx % d];
                    if spec.kind.is_finite_discrete() {
                        spec.label(v as usize)
                    } else {
                        format_number(spec.preprocess.invert(v))
                    }
                }
            })
            .collect();
        let mut data = DataMatrix {
            n_rows,
            specs,
            cells,
            missing,
            raw,
        };
        data.refresh_ranges();
        Ok(data)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.specs.len()
    }

    pub fn specs(&self) -> &[AttributeSpec] {
        &self.specs
    }

    pub fn spec(&self, d: usize) -> &AttributeSpec {
        &self.specs[d]
    }

    pub fn specs_mut(&mut self) -> &mut [AttributeSpec] {
        &mut self.specs
    }

    pub fn is_missing(&self, n: usize, d: usize) -> bool {
        self.missing[n * self.n_cols() + d]
    }

    /// Encoded value, `None` when missing.
    pub fn get(&self, n: usize, d: usize) -> Option<f64> {
        let idx = n * self.n_cols() + d;
        (!self.missing[idx]).then(|| self.cells[idx])
    }

    /// The cell text as it appeared in the source.
    pub fn raw(&self, n: usize, d: usize) -> &str {
        &self.raw[n * self.n_cols() + d]
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    pub fn column(&self, d: usize) -> impl Iterator<Item = Option<f64>> + '_ {
        (0..self.n_rows).map(move |n| self.get(n, d))
    }

    /// Copy with the cells flagged in `extra` (row-major) also marked missing.
    pub fn with_extra_missing(&self, extra: &[bool]) -> Result<DataMatrix> {
        if extra.len() != self.missing.len() {
            return Err(GlfmError::InvalidArgument(format!(
                "mask has {} entries, table has {}",
                extra.len(),
                self.missing.len()
            )));
        }
        let mut out = self.clone();
        for (idx, &m) in extra.iter().enumerate() {
            if m {
                out.missing[idx] = true;
                out.cells[idx] = f64::NAN;
                out.raw[idx] = String::new();
            }
        }
        Ok(out)
    }

    /// Render an encoded value of column `d` in raw units/labels.
    pub fn decode(&self, d: usize, value: f64) -> String {
        decode_value(&self.specs[d], value)
    }

    /// Fit shift/scale parameters for every numeric column from its observed
    /// values. Columns too degenerate to fit fall back to unit scale.
    pub fn fit_transforms(&mut self) {
        for d in 0..self.n_cols() {
            let kind = self.specs[d].kind;
            if kind.is_finite_discrete() {
                self.specs[d].transform = TransformParams::identity();
                continue;
            }
            let values: Vec<f64> = self.column(d).flatten().collect();
            let fitted = fit_transform_params(&values, kind).unwrap_or_else(|_| {
                let mu = match kind {
                    AttributeKind::Real => values.iter().sum::<f64>() / values.len().max(1) as f64,
                    _ => values.iter().cloned().fold(f64::INFINITY, f64::min),
                };
                TransformParams {
                    w: 1.0,
                    mu: if mu.is_finite() { mu } else { 0.0 },
                }
            });
            self.specs[d].transform = fitted;
        }
    }

    fn refresh_ranges(&mut self) {
        for d in 0..self.n_cols() {
            let spec = &self.specs[d];
            if spec.kind.is_finite_discrete() {
                continue;
            }
            let pre = spec.preprocess;
            let range = self.column(d).flatten().map(|v| pre.invert(v)).fold(
                None,
                |acc: Option<(f64, f64)>, v| match acc {
                    None => Some((v, v)),
                    Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
                },
            );
            self.specs[d].observed_range = range;
        }
    }
}

/// Render an encoded value in raw units/labels.
pub fn decode_value(spec: &AttributeSpec, value: f64) -> String {
    match spec.kind {
        AttributeKind::Categorical | AttributeKind::Ordinal => spec.label(value.round() as usize),
        AttributeKind::Count => format!("{}", value.round() as i64),
        AttributeKind::Real | AttributeKind::PositiveReal => {
            format_number(spec.preprocess.invert(value))
        }
    }
}

fn format_number(v: f64) -> String {
    format!("{v}")
}

fn validate_encoded(spec: &AttributeSpec, v: f64) -> std::result::Result<(), String> {
    match spec.kind {
        AttributeKind::Real => {
            if !v.is_finite() {
                return Err(format!("non-finite value {v}"));
            }
        }
        AttributeKind::PositiveReal => {
            if !(v > 0.0) || !v.is_finite() {
                return Err(format!("positive real column holds {v}"));
            }
        }
        AttributeKind::Count => {
            if !(v >= 0.0) || v.fract() != 0.0 || !v.is_finite() {
                return Err(format!("count column holds {v}"));
            }
        }
        AttributeKind::Categorical | AttributeKind::Ordinal => {
            let r = spec.categories.unwrap_or(0) as f64;
            if v.fract() != 0.0 || v < 1.0 || v > r {
                return Err(format!("category code {v} outside 1..={r}"));
            }
        }
    }
    Ok(())
}

/// Parse a CSV document (header row required) against column declarations.
///
/// Numeric columns are parsed and preprocessed; categorical labels are coded
/// by first appearance; ordinal labels keep their numeric order when every
/// label is a number. The label maps are stored on the returned specs.
pub fn load_dataset(
    csv_text: &str,
    specs: &[AttributeSpec],
    sentinel: &MissingSentinel,
) -> Result<DataMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(csv_text.as_bytes());
    let header = reader.headers()?.clone();
    let d = specs.len();
    if header.len() != d {
        return Err(GlfmError::Table(format!(
            "header has {} columns but {d} attributes are declared",
            header.len()
        )));
    }
    let mut raw: Vec<String> = Vec::new();
    let mut n_rows = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != d {
            return Err(GlfmError::Table(format!(
                "row {i} has {} fields, expected {d}",
                record.len()
            )));
        }
        raw.extend(record.iter().map(str::to_string));
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(GlfmError::Table("no data rows".into()));
    }
    let missing: Vec<bool> = raw.iter().map(|f| sentinel.is_missing(f)).collect();
    let mut specs = specs.to_vec();
    let mut cells = vec![f64::NAN; raw.len()];

    for (j, spec) in specs.iter_mut().enumerate() {
        let observed = (0..n_rows).filter(|&i| !missing[i * d + j]);
        if spec.kind.is_finite_discrete() {
            let labels: Vec<&str> = observed.map(|i| raw[i * d + j].trim()).collect();
            let (codes, label_list) =
                encode_labels(spec, &labels).map_err(|message| GlfmError::Data {
                    row: 0,
                    column: spec.name.clone(),
                    message,
                })?;
            let mut it = codes.into_iter();
            for i in 0..n_rows {
                if !missing[i * d + j] {
                    cells[i * d + j] = it.next().expect("one code per observed label") as f64;
                }
            }
            spec.labels = label_list;
        } else {
            for i in observed {
                let field = raw[i * d + j].trim();
                let err = |message: String| GlfmError::Data {
                    row: i,
                    column: spec.name.clone(),
                    message,
                };
                let x: f64 = field
                    .parse()
                    .map_err(|_| err(format!("`{field}` is not numeric")))?;
                if spec.kind == AttributeKind::Count && (x.fract() != 0.0 || x < 0.0) {
                    return Err(err(format!("`{field}` is not a non-negative integer")));
                }
                let v = spec
                    .preprocess
                    .apply(x)
                    .ok_or_else(|| err(format!("`{field}` outside the preprocess domain")))?;
                cells[i * d + j] = v;
            }
        }
    }
    let mut data = DataMatrix::from_encoded(specs, cells, missing)?;
    data.raw = raw;
    Ok(data)
}

/// Assign codes to labels. Returns per-observation codes and the label list.
fn encode_labels(
    spec: &mut AttributeSpec,
    labels: &[&str],
) -> std::result::Result<(Vec<usize>, Vec<String>), String> {
    let mut distinct: Vec<&str> = Vec::new();
    for &l in labels {
        if !distinct.contains(&l) {
            distinct.push(l);
        }
    }
    let declared = spec.categories;
    if spec.kind == AttributeKind::Ordinal {
        let numeric: Option<Vec<f64>> = distinct.iter().map(|s| s.parse::<f64>().ok()).collect();
        if let Some(values) = numeric {
            let r_bound = declared.unwrap_or(distinct.len()) as f64;
            let direct = values
                .iter()
                .all(|&v| v.fract() == 0.0 && v >= 1.0 && v <= r_bound);
            if let (true, Some(r)) = (direct, declared) {
                // Labels already are the codes 1..=R_d.
                let mut list: Vec<String> = (1..=r).map(|c| c.to_string()).collect();
                for (&s, &v) in distinct.iter().zip(&values) {
                    list[v as usize - 1] = s.to_string();
                }
                let codes = labels
                    .iter()
                    .map(|s| s.parse::<f64>().unwrap() as usize)
                    .collect();
                return Ok((codes, list));
            }
            let mut order: Vec<usize> = (0..distinct.len()).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            distinct = order.into_iter().map(|i| distinct[i]).collect();
        }
    }
    let r = match declared {
        Some(r) if distinct.len() > r => {
            return Err(format!(
                "{} distinct labels exceed the declared {r} categories",
                distinct.len()
            ))
        }
        Some(r) => r,
        None => distinct.len().max(2),
    };
    spec.categories = Some(r);
    let index: HashMap<&str, usize> = distinct
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, i + 1))
        .collect();
    let codes = labels.iter().map(|l| index[l]).collect();
    let mut list: Vec<String> = distinct.iter().map(|s| s.to_string()).collect();
    for c in list.len() + 1..=r {
        list.push(c.to_string());
    }
    Ok((codes, list))
}

/// Data-driven shift and scale for the mapping function of a column.
///
/// Real: `mu` = mean, `w` = sample std. Positive real and count: `mu` = min,
/// `w` = std/2. The forward map is `x = w·y + mu` (resp. softplus of it), so
/// these values put pseudo-observations on a unit scale. Finite discrete
/// kinds ignore the transform.
pub fn fit_transform_params(values: &[f64], kind: AttributeKind) -> Result<TransformParams> {
    if kind.is_finite_discrete() {
        return Ok(TransformParams::identity());
    }
    if values.len() < 2 {
        return Err(GlfmError::DegenerateColumn(format!(
            "{} observed value(s)",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    if !(std > 0.0) || !std.is_finite() {
        return Err(GlfmError::DegenerateColumn(format!("std = {std}")));
    }
    Ok(match kind {
        AttributeKind::Real => TransformParams { w: std, mu: mean },
        _ => TransformParams {
            w: std / 2.0,
            mu: values.iter().cloned().fold(f64::INFINITY, f64::min),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn parses_spec_lines() {
        let specs = parse_attribute_spec(
            "age,count\nstage,categorical,2\n# comment\n\ndensity,positivereal,log1p\n",
        )
        .unwrap();
        assert_eq!(specs.len(), 3);
        assert_eq!(specs[0].kind, AttributeKind::Count);
        assert_eq!(specs[0].categories, None);
        assert_eq!(specs[1].kind, AttributeKind::Categorical);
        assert_eq!(specs[1].categories, Some(2));
        assert_eq!(specs[2].preprocess, Preprocess::Log1p);
    }

    #[test]
    fn spec_errors() {
        assert!(parse_attribute_spec("x,gaussian").is_err());
        assert!(parse_attribute_spec("x,categorical,1").is_err());
        assert!(parse_attribute_spec("x,real,3").is_err());
        assert!(parse_attribute_spec("x,count,log1p").is_err());
        assert!(parse_attribute_spec("x,real,sqrt").is_err());
        assert!(parse_attribute_spec("").is_err());
    }

    #[test]
    fn one_empty_cell_one_missing_entry() {
        let specs = parse_attribute_spec("a,real\nb,count").unwrap();
        let data = load_dataset(
            "a,b\n1.5,2\n,3\n0.5,4\n",
            &specs,
            &MissingSentinel::default(),
        )
        .unwrap();
        assert_eq!((data.n_rows(), data.n_cols()), (3, 2));
        assert_eq!(data.missing_count(), 1);
        assert!(data.is_missing(1, 0));
    }

    #[test]
    fn numeric_sentinel_marks_missing() {
        let specs = parse_attribute_spec("a,real\nb,count").unwrap();
        let data = load_dataset(
            "a,b\n1.5,-1\n2.0,3\n",
            &specs,
            &MissingSentinel::new(Some("-1.0")),
        )
        .unwrap();
        assert!(data.is_missing(0, 1));
        assert_eq!(data.missing_count(), 1);
    }

    #[test]
    fn fractional_count_rejected() {
        let specs = parse_attribute_spec("a,count").unwrap();
        let err = load_dataset("a\n1\n3.5\n", &specs, &MissingSentinel::default()).unwrap_err();
        assert!(matches!(err, GlfmError::Data { row: 1, .. }));
    }

    #[test]
    fn ragged_and_non_numeric_rejected() {
        let specs = parse_attribute_spec("a,real\nb,real").unwrap();
        let none = MissingSentinel::default();
        assert!(load_dataset("a,b\n1,2\n3\n", &specs, &none).is_err());
        assert!(load_dataset("a,b\n1,x\n", &specs, &none).is_err());
        assert!(load_dataset("a\n1\n", &specs, &none).is_err());
    }

    #[test]
    fn too_many_labels_rejected() {
        let specs = parse_attribute_spec("c,categorical,2").unwrap();
        let err = load_dataset("c\nx\ny\nz\n", &specs, &MissingSentinel::default());
        assert!(err.is_err());
    }

    #[test]
    fn log1p_preprocess_applied() {
        let specs = parse_attribute_spec("d,positivereal,log1p").unwrap();
        let data = load_dataset("d\n99\n3\n", &specs, &MissingSentinel::default()).unwrap();
        assert_relative_eq!(data.get(0, 0).unwrap(), 100f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(data.get(0, 0).unwrap(), 4.60517, epsilon = 1e-5);
        let decoded: f64 = data.decode(0, data.get(0, 0).unwrap()).parse().unwrap();
        assert_relative_eq!(decoded, 99.0, epsilon = 1e-9);
        assert_eq!(data.raw(0, 0), "99");
    }

    #[test]
    fn reflected_preprocess_round_trip() {
        let p = Preprocess::ReflectedLog1p;
        for &x in &[0.0, 42.5, 99.0, 100.0] {
            assert_relative_eq!(p.invert(p.apply(x).unwrap()), x, epsilon = 1e-9);
        }
        assert!(p.apply(101.0).is_none());
    }

    #[test]
    fn categorical_codes_by_first_appearance() {
        let specs = parse_attribute_spec("c,categorical").unwrap();
        let data = load_dataset(
            "c\nred\nblue\nred\ngreen\n",
            &specs,
            &MissingSentinel::default(),
        )
        .unwrap();
        let codes: Vec<f64> = data.column(0).flatten().collect();
        assert_eq!(codes, vec![1.0, 2.0, 1.0, 3.0]);
        assert_eq!(data.spec(0).categories, Some(3));
        for n in 0..4 {
            assert_eq!(data.decode(0, data.get(n, 0).unwrap()), data.raw(n, 0));
        }
    }

    #[test]
    fn ordinal_numeric_labels_keep_order() {
        let specs = parse_attribute_spec("o,ordinal").unwrap();
        let data = load_dataset("o\n10\n2\n5\n2\n", &specs, &MissingSentinel::default()).unwrap();
        let codes: Vec<f64> = data.column(0).flatten().collect();
        assert_eq!(codes, vec![3.0, 1.0, 2.0, 1.0]);

        let specs = parse_attribute_spec("o,ordinal,4").unwrap();
        let data = load_dataset("o\n4\n1\n2\n", &specs, &MissingSentinel::default()).unwrap();
        let codes: Vec<f64> = data.column(0).flatten().collect();
        assert_eq!(codes, vec![4.0, 1.0, 2.0]);
        assert_eq!(data.spec(0).label(3), "3");
    }

    #[test]
    fn fit_real_symmetric() {
        let t = fit_transform_params(&[-1.0, 0.0, 1.0], AttributeKind::Real).unwrap();
        assert_relative_eq!(t.mu, 0.0);
        assert_relative_eq!(t.w, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fit_positive_real_min_and_half_std() {
        let t = fit_transform_params(&[1.0, 3.0, 5.0], AttributeKind::PositiveReal).unwrap();
        assert_relative_eq!(t.mu, 1.0);
        assert_relative_eq!(t.w, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fit_constant_column_fails() {
        assert!(matches!(
            fit_transform_params(&[4.0, 4.0, 4.0], AttributeKind::Count),
            Err(GlfmError::DegenerateColumn(_))
        ));
        assert!(fit_transform_params(&[4.0], AttributeKind::Real).is_err());
    }

    #[test]
    fn load_is_deterministic() {
        let specs = parse_attribute_spec("a,real\nc,categorical\nk,count").unwrap();
        let text = "a,c,k\n1.0,x,0\n,y,3\n-2.5,x,\n";
        let a = load_dataset(text, &specs, &MissingSentinel::default()).unwrap();
        let b = load_dataset(text, &specs, &MissingSentinel::default()).unwrap();
        assert_eq!(a.missing_mask(), b.missing_mask());
        for n in 0..a.n_rows() {
            for d in 0..a.n_cols() {
                assert_eq!(a.get(n, d).map(f64::to_bits), b.get(n, d).map(f64::to_bits));
            }
        }
    }
}
