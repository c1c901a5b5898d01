//! Discrete flow-parameter spaces, samples, and assignment rendering.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use num_bigint::BigUint;
use rand::Rng;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

const DEFAULT_SPACE_TOML: &str = include_str!("../data/default_space.toml");

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("space file parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("parameter `{param}`, field `{field}`: {message}")]
    Field {
        param: String,
        field: &'static str,
        message: String,
    },
    #[error("duplicate parameter name `{0}`")]
    DuplicateParameter(String),
    #[error("parameter `{0}` has an empty option list")]
    EmptyOptions(String),
    #[error("parameter `{param}` lists option `{option}` more than once")]
    DuplicateOption { param: String, option: String },
    #[error("space has no parameters")]
    Empty,
    #[error("cannot read space file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid sample: {}", format_violations(.0))]
    InvalidSample(Vec<Violation>),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Density,
    Congestion,
    Timing,
    Power,
    Other,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Density => "density",
            Category::Congestion => "congestion",
            Category::Timing => "timing",
            Category::Power => "power",
            Category::Other => "other",
        }
    }
}

/// One option value. Decimals keep the exact text they were declared with.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum OptionValue {
    Bool(bool),
    Int(i64),
    Decimal(String),
    Str(String),
}

impl OptionValue {
    pub fn canonical(&self) -> String {
        match self {
            OptionValue::Bool(b) => b.to_string(),
            OptionValue::Int(i) => i.to_string(),
            OptionValue::Decimal(s) | OptionValue::Str(s) => s.clone(),
        }
    }

    fn type_tag(&self) -> &'static str {
        match self {
            OptionValue::Bool(_) => "bool",
            OptionValue::Int(_) => "int",
            OptionValue::Decimal(_) => "decimal",
            OptionValue::Str(_) => "str",
        }
    }

    /// Whether `text` denotes this value. Exact canonical text always matches;
    /// booleans are case-insensitive and decimals also match numerically.
    pub fn matches(&self, text: &str) -> bool {
        let text = text.trim();
        match self {
            OptionValue::Bool(b) => text.eq_ignore_ascii_case(if *b { "true" } else { "false" }),
            OptionValue::Int(i) => text.parse::<i64>().is_ok_and(|v| v == *i),
            OptionValue::Decimal(s) => {
                s == text
                    || matches!((s.parse::<f64>(), text.parse::<f64>()), (Ok(a), Ok(b)) if a == b)
            }
            OptionValue::Str(s) => s == text,
        }
    }

    fn same_value(&self, other: &OptionValue) -> bool {
        match (self, other) {
            (OptionValue::Decimal(a), OptionValue::Decimal(b)) => {
                a == b || matches!((a.parse::<f64>(), b.parse::<f64>()), (Ok(x), Ok(y)) if x == y)
            }
            _ => self == other,
        }
    }
}

impl fmt::Display for OptionValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterDef {
    pub name: String,
    pub category: Category,
    pub options: Vec<OptionValue>,
}

impl ParameterDef {
    pub fn option_count(&self) -> usize {
        self.options.len()
    }

    pub fn find_option(&self, text: &str) -> Option<usize> {
        let t = text.trim();
        self.options
            .iter()
            .position(|o| o.canonical() == t)
            .or_else(|| self.options.iter().position(|o| o.matches(t)))
    }
}

/// Option indices for every parameter, in space order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sample(Vec<usize>);

impl Sample {
    pub fn new(indices: Vec<usize>) -> Self {
        Sample(indices)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_indices(self) -> Vec<usize> {
        self.0
    }

    /// `0;3;1` form used in CSV files.
    pub fn to_index_string(&self) -> String {
        self.0
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn parse_index_string(s: &str) -> Option<Sample> {
        let s = s.trim();
        if s.is_empty() {
            return Some(Sample(Vec::new()));
        }
        s.split(';')
            .map(|p| p.trim().parse::<usize>().ok())
            .collect::<Option<Vec<_>>>()
            .map(Sample)
    }
}

impl From<Vec<usize>> for Sample {
    fn from(v: Vec<usize>) -> Self {
        Sample(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Length { expected: usize, actual: usize },
    IndexOutOfRange {
        position: usize,
        param: String,
        index: usize,
        options: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Length { expected, actual } => {
                write!(f, "sample has {actual} entries, space has {expected} parameters")
            }
            Violation::IndexOutOfRange {
                position,
                param,
                index,
                options,
            } => write!(
                f,
                "parameter {position} (`{param}`): index {index} out of range for {options} options"
            ),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AssignmentError {
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("invalid value `{value}` for parameter `{param}` (valid: {valid})")]
    InvalidValue {
        param: String,
        value: String,
        valid: String,
    },
    #[error("missing parameter `{0}`")]
    MissingParameter(String),
    #[error("parameter `{0}` assigned more than once")]
    DuplicateParameter(String),
    #[error("malformed assignment line `{0}`")]
    Malformed(String),
}

/// Ordered `name = value` pairs for one sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment(pub Vec<(String, String)>);

impl Assignment {
    /// `a=1; b=true` on one line.
    pub fn to_inline(&self) -> String {
        self.0
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.0 {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterSpace {
    params: Vec<ParameterDef>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpace {
    #[serde(default)]
    param: Vec<RawParam>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParam {
    name: String,
    #[serde(default = "default_category")]
    category: Category,
    options: Vec<toml::Value>,
    #[serde(default)]
    kind: Option<String>,
}

fn default_category() -> Category {
    Category::Other
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

fn convert_option(param: &str, kind: Option<&str>, v: &toml::Value) -> Result<OptionValue, SpaceError> {
    let field_err = |message: String| SpaceError::Field {
        param: param.to_string(),
        field: "options",
        message,
    };
    let value = match (kind, v) {
        (None | Some("bool"), toml::Value::Boolean(b)) => OptionValue::Bool(*b),
        (None | Some("int"), toml::Value::Integer(i)) => OptionValue::Int(*i),
        (None | Some("decimal"), toml::Value::Float(x)) => {
            if !x.is_finite() {
                return Err(field_err(format!("non-finite decimal {x}")));
            }
            OptionValue::Decimal(format!("{x:?}"))
        }
        (Some("decimal"), toml::Value::Integer(i)) => OptionValue::Decimal(format!("{i}.0")),
        (Some("decimal"), toml::Value::String(s)) => {
            let s = s.trim();
            match s.parse::<f64>() {
                Ok(x) if x.is_finite() => OptionValue::Decimal(s.to_string()),
                _ => return Err(field_err(format!("`{s}` is not a finite decimal"))),
            }
        }
        (Some("bool"), toml::Value::String(s)) => match s.trim() {
            "true" => OptionValue::Bool(true),
            "false" => OptionValue::Bool(false),
            other => return Err(field_err(format!("`{other}` is not a boolean"))),
        },
        (Some("int"), toml::Value::String(s)) => OptionValue::Int(
            s.trim()
                .parse()
                .map_err(|_| field_err(format!("`{s}` is not an integer")))?,
        ),
        (None | Some("str"), toml::Value::String(s)) => OptionValue::Str(s.trim().to_string()),
        (Some(k), other) if !matches!(k, "bool" | "int" | "decimal" | "str") => {
            return Err(SpaceError::Field {
                param: param.to_string(),
                field: "kind",
                message: format!("unknown kind `{k}` (value {other})"),
            })
        }
        (k, other) => {
            return Err(field_err(format!(
                "value {other} does not fit kind `{}`",
                k.unwrap_or("inferred")
            )))
        }
    };
    if let OptionValue::Str(s) = &value {
        if s.is_empty() || s.contains(['\n', ';', '=']) {
            return Err(field_err(format!("option `{s}` is empty or contains a reserved character")));
        }
    }
    Ok(value)
}

impl ParameterSpace {
    pub fn new(params: Vec<ParameterDef>) -> Result<Self, SpaceError> {
        if params.is_empty() {
            return Err(SpaceError::Empty);
        }
        let mut names = HashSet::new();
        for p in &params {
            if !names.insert(p.name.as_str()) {
                return Err(SpaceError::DuplicateParameter(p.name.clone()));
            }
            if p.options.is_empty() {
                return Err(SpaceError::EmptyOptions(p.name.clone()));
            }
            for (i, a) in p.options.iter().enumerate() {
                if p.options[..i].iter().any(|b| b.same_value(a)) {
                    return Err(SpaceError::DuplicateOption {
                        param: p.name.clone(),
                        option: a.canonical(),
                    });
                }
            }
        }
        Ok(ParameterSpace { params })
    }

    /// Parses the TOML space document (`[[param]]` tables with `name`,
    /// `category`, `options`, optional `kind`).
    pub fn from_toml_str(text: &str) -> Result<Self, SpaceError> {
        let raw: RawSpace = toml::from_str(text).map_err(|e| SpaceError::Parse {
            line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
            message: e.message().to_string(),
        })?;
        let mut params = Vec::with_capacity(raw.param.len());
        for rp in raw.param {
            let name = rp.name.trim().to_string();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(SpaceError::Field {
                    param: rp.name.clone(),
                    field: "name",
                    message: "must be a non-empty identifier".into(),
                });
            }
            let options = rp
                .options
                .iter()
                .map(|v| convert_option(&name, rp.kind.as_deref(), v))
                .collect::<Result<Vec<_>, _>>()?;
            params.push(ParameterDef {
                name,
                category: rp.category,
                options,
            });
        }
        Self::new(params)
    }

    pub fn to_toml_string(&self) -> String {
        let mut out = String::new();
        for p in &self.params {
            out.push_str("[[param]]\n");
            out.push_str(&format!("name = \"{}\"\n", p.name));
            out.push_str(&format!("category = \"{}\"\n", p.category.as_str()));
            let kinds: HashSet<_> = p.options.iter().map(|o| o.type_tag()).collect();
            let kind = if kinds.len() == 1 { kinds.into_iter().next() } else { None };
            let opts = p
                .options
                .iter()
                .map(|o| match o {
                    OptionValue::Bool(b) if kind == Some("bool") => b.to_string(),
                    OptionValue::Int(i) if kind == Some("int") => i.to_string(),
                    other => format!("\"{}\"", other.canonical()),
                })
                .collect::<Vec<_>>()
                .join(", ");
            out.push_str(&format!("options = [{opts}]\n"));
            match kind {
                Some("decimal") => out.push_str("kind = \"decimal\"\n"),
                Some("str") | None => out.push_str("kind = \"str\"\n"),
                _ => {}
            }
            out.push('\n');
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self, SpaceError> {
        let text = std::fs::read_to_string(path).map_err(|source| SpaceError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// The bundled placement-flow space.
    pub fn default_space() -> Self {
        Self::from_toml_str(DEFAULT_SPACE_TOML).expect("bundled space file is valid")
    }

    pub fn default_space_text() -> &'static str {
        DEFAULT_SPACE_TOML
    }

    pub fn params(&self) -> &[ParameterDef] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn option_counts(&self) -> Vec<usize> {
        self.params.iter().map(|p| p.options.len()).collect()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Exact `∏ n_i`.
    pub fn size(&self) -> BigUint {
        self.params
            .iter()
            .fold(BigUint::from(1u32), |acc, p| acc * BigUint::from(p.options.len()))
    }

    /// Stable hash of names, categories, and canonical options.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.params {
            h.update(p.name.as_bytes());
            h.update(b"|");
            h.update(p.category.as_str().as_bytes());
            for o in &p.options {
                h.update(b"|");
                h.update(o.type_tag().as_bytes());
                h.update(b":");
                h.update(o.canonical().as_bytes());
            }
            h.update(b"\n");
        }
        hex::encode(&h.finalize()[..16])
    }

    pub fn validate(&self, sample: &Sample) -> Result<(), Vec<Violation>> {
        let mut violations = Vec::new();
        if sample.len() != self.params.len() {
            violations.push(Violation::Length {
                expected: self.params.len(),
                actual: sample.len(),
            });
        }
        for (position, (p, &index)) in self.params.iter().zip(sample.indices()).enumerate() {
            if index >= p.options.len() {
                violations.push(Violation::IndexOutOfRange {
                    position,
                    param: p.name.clone(),
                    index,
                    options: p.options.len(),
                });
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }

    pub fn check(&self, sample: &Sample) -> Result<(), SpaceError> {
        self.validate(sample).map_err(SpaceError::InvalidSample)
    }

    /// Independent uniform draw per parameter.
    pub fn random_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Sample {
        Sample(
            self.params
                .iter()
                .map(|p| rng.random_range(0..p.options.len()))
                .collect(),
        )
    }

    /// Ordinal encoding `u_i = index_i / (n_i - 1)`, `0` for single-option parameters.
    pub fn encode_ordinal(&self, sample: &Sample) -> Vec<f64> {
        self.params
            .iter()
            .zip(sample.indices())
            .map(|(p, &i)| {
                let n = p.options.len();
                if n <= 1 {
                    0.0
                } else {
                    i as f64 / (n - 1) as f64
                }
            })
            .collect()
    }

    pub fn render_assignment(&self, sample: &Sample) -> Result<Assignment, SpaceError> {
        self.check(sample)?;
        Ok(Assignment(
            self.params
                .iter()
                .zip(sample.indices())
                .map(|(p, &i)| (p.name.clone(), p.options[i].canonical()))
                .collect(),
        ))
    }

    /// Inverse of [`render_assignment`](Self::render_assignment): parses
    /// `name = value` (or `name: value`) lines. Blank lines and `#` comments
    /// are skipped.
    pub fn parse_assignment(&self, text: &str) -> Result<Sample, AssignmentError> {
        let pairs = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| split_pair(l).ok_or_else(|| AssignmentError::Malformed(l.to_string())));
        self.assignment_from_pairs(pairs)
    }

    /// Parses the one-line `a=1; b=true` form.
    pub fn parse_inline(&self, text: &str) -> Result<Sample, AssignmentError> {
        let pairs = text
            .split(';')
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| split_pair(l).ok_or_else(|| AssignmentError::Malformed(l.to_string())));
        self.assignment_from_pairs(pairs)
    }

    pub fn assignment_from_pairs<'a, I>(&self, pairs: I) -> Result<Sample, AssignmentError>
    where
        I: IntoIterator<Item = Result<(&'a str, &'a str), AssignmentError>>,
    {
        let mut indices: Vec<Option<usize>> = vec![None; self.params.len()];
        for pair in pairs {
            let (name, value) = pair?;
            let pos = self
                .position(name)
                .ok_or_else(|| AssignmentError::UnknownParameter(name.to_string()))?;
            if indices[pos].is_some() {
                return Err(AssignmentError::DuplicateParameter(name.to_string()));
            }
            let p = &self.params[pos];
            let idx = p.find_option(value).ok_or_else(|| AssignmentError::InvalidValue {
                param: name.to_string(),
                value: value.to_string(),
                valid: p
                    .options
                    .iter()
                    .map(|o| o.canonical())
                    .collect::<Vec<_>>()
                    .join(", "),
            })?;
            indices[pos] = Some(idx);
        }
        indices
            .into_iter()
            .zip(&self.params)
            .map(|(i, p)| i.ok_or_else(|| AssignmentError::MissingParameter(p.name.clone())))
            .collect::<Result<Vec<_>, _>>()
            .map(Sample)
    }

    /// All samples in lexicographic index order. Intended for small spaces.
    pub fn enumerate(&self) -> SampleIter<'_> {
        SampleIter {
            counts: self.option_counts(),
            next: Some(vec![0; self.params.len()]),
            _space: self,
        }
    }
}

fn split_pair(line: &str) -> Option<(&str, &str)> {
    let line = line.trim_start_matches(['-', '*']).trim();
    let at = line.find(['=', ':'])?;
    let (k, v) = (line[..at].trim(), line[at + 1..].trim());
    let k = k.trim_matches('`');
    let v = v.trim_matches(|c| c == '`' || c == '"' || c == '\'' || c == ',');
    if k.is_empty() {
        None
    } else {
        Some((k, v))
    }
}

pub struct SampleIter<'a> {
    counts: Vec<usize>,
    next: Option<Vec<usize>>,
    _space: &'a ParameterSpace,
}

impl Iterator for SampleIter<'_> {
    type Item = Sample;

    fn next(&mut self) -> Option<Sample> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut carried = true;
        for (slot, &n) in succ.iter_mut().zip(&self.counts).rev() {
            *slot += 1;
            if *slot < n {
                carried = false;
                break;
            }
            *slot = 0;
        }
        if !carried {
            self.next = Some(succ);
        }
        Some(Sample(current))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    fn small() -> ParameterSpace {
        ParameterSpace::from_toml_str(
            r#"
[[param]]
name = "p"
options = ["a", "b"]
[[param]]
name = "q"
options = ["x", "y", "z"]
"#,
        )
        .unwrap()
    }

    #[test]
    fn default_space_has_27_params_in_4_categories() {
        let s = ParameterSpace::default_space();
        assert_eq!(s.len(), 27);
        let cats: HashSet<_> = s.params().iter().map(|p| p.category).collect();
        assert_eq!(cats.len(), 4);
        assert_eq!(s.params()[0].name, "density_control_version");
        let cm = &s.params()[s.position("congestion_mode").unwrap()];
        assert_eq!(cm.options.len(), 2);
    }

    #[test]
    fn minimal_two_param_file() {
        let s = small();
        assert_eq!(s.len(), 2);
        assert_eq!(s.option_counts(), vec![2, 3]);
        assert_eq!(s.size(), BigUint::from(6u32));
    }

    #[test]
    fn duplicate_option_is_rejected() {
        let err = ParameterSpace::from_toml_str(
            "[[param]]\nname = \"b\"\noptions = [\"true\", \"true\"]\nkind = \"bool\"\n",
        )
        .unwrap_err();
        assert!(matches!(err, SpaceError::DuplicateOption { ref option, .. } if option == "true"));
    }

    #[test]
    fn duplicate_name_and_empty_options() {
        let dup = "[[param]]\nname = \"a\"\noptions = [1]\n[[param]]\nname = \"a\"\noptions = [2]\n";
        assert!(matches!(
            ParameterSpace::from_toml_str(dup),
            Err(SpaceError::DuplicateParameter(n)) if n == "a"
        ));
        let empty = "[[param]]\nname = \"a\"\noptions = []\n";
        assert!(matches!(
            ParameterSpace::from_toml_str(empty),
            Err(SpaceError::EmptyOptions(_))
        ));
    }

    #[test]
    fn syntax_error_reports_line() {
        let bad = "[[param]]\nname = \"a\"\noptions = [1, 2\n";
        match ParameterSpace::from_toml_str(bad) {
            Err(SpaceError::Parse { line, .. }) => assert!(line >= 3, "line {line}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn space_sizes() {
        let s = ParameterSpace::default_space();
        let density: BigUint = s
            .params()
            .iter()
            .filter(|p| p.category == Category::Density)
            .fold(BigUint::from(1u32), |a, p| a * BigUint::from(p.options.len()));
        assert_eq!(density, BigUint::from(2100u32));
        // 3*2*2*5*5*7 * 10*2^5 * 5*4*5*2^8*11 * 5*5*10
        assert_eq!(s.size(), BigUint::from(47_308_800_000_000u64));
    }

    #[test]
    fn validation() {
        let s = small();
        assert!(s.validate(&Sample::new(vec![1, 2])).is_ok());
        let v = s.validate(&Sample::new(vec![2, 0])).unwrap_err();
        assert!(matches!(v[0], Violation::IndexOutOfRange { position: 0, .. }));
        let v = s.validate(&Sample::new(vec![0])).unwrap_err();
        assert!(matches!(v[0], Violation::Length { expected: 2, actual: 1 }));
    }

    #[test]
    fn random_sample_single_option_and_determinism() {
        let s = ParameterSpace::from_toml_str(
            "[[param]]\nname=\"a\"\noptions=[1]\n[[param]]\nname=\"b\"\noptions=[true]\n",
        )
        .unwrap();
        for seed in 0..10 {
            assert_eq!(s.random_sample(&mut seeded_rng(seed)).indices(), &[0, 0]);
        }
        let d = ParameterSpace::default_space();
        assert_eq!(
            d.random_sample(&mut seeded_rng(42)),
            d.random_sample(&mut seeded_rng(42))
        );
    }

    #[test]
    fn random_sample_frequency_is_uniform() {
        let s = ParameterSpace::from_toml_str("[[param]]\nname=\"a\"\noptions=[1,2]\n").unwrap();
        let mut rng = seeded_rng(2024);
        let zeros = (0..10_000)
            .filter(|_| s.random_sample(&mut rng).indices()[0] == 0)
            .count();
        let freq = zeros as f64 / 10_000.0;
        assert!((freq - 0.5).abs() <= 0.02, "freq {freq}");
    }

    #[test]
    fn render_examples() {
        let s = ParameterSpace::default_space();
        let mut idx = vec![0; s.len()];
        let cm = s.position("congestion_mode").unwrap();
        idx[cm] = 1;
        let a = s.render_assignment(&Sample::new(idx.clone())).unwrap();
        assert!(a.to_string().contains("congestion_mode = 2\n"));
        assert!(a.to_string().contains("enable_pin_density_aware = true\n"));
        assert_eq!(s.parse_assignment(&a.to_string()).unwrap(), Sample::new(idx.clone()));
        assert_eq!(s.parse_inline(&a.to_inline()).unwrap(), Sample::new(idx));
    }

    #[test]
    fn decimals_match_numerically() {
        let s = ParameterSpace::default_space();
        let p = &s.params()[s.position("max_delay_weight").unwrap()];
        assert_eq!(p.find_option("1e20"), Some(10));
        assert_eq!(p.find_option("100000000000000000000"), Some(10));
        assert_eq!(p.find_option("1"), Some(0));
    }

    #[test]
    fn toml_round_trip() {
        let s = ParameterSpace::default_space();
        let again = ParameterSpace::from_toml_str(&s.to_toml_string()).unwrap();
        assert_eq!(s, again);
        assert_eq!(s.fingerprint(), again.fingerprint());
    }

    #[test]
    fn enumerate_counts() {
        let s = small();
        let all: Vec<_> = s.enumerate().collect();
        assert_eq!(all.len(), 6);
        assert_eq!(all[0].indices(), &[0, 0]);
        assert_eq!(all[5].indices(), &[1, 2]);
    }
}
