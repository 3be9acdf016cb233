//! Versioned text format for learned optimizers.
//!
//! A header of `key value...` lines is followed by one `payload <n>` line and
//! `n` lines of 16 hex digits, each the IEEE-754 bit pattern of one weight, so
//! the round trip is exact.
//!
//! ```text
//! metaopt-optimizer 1
//! variant plain
//! layout shared
//! set
//! input log-sign 10
//! n_hidden 20
//! output_scale 0.1
//! payload 2341
//! 3fb999999999999a
//! ...
//! ```

use std::fmt::Write as _;

use metaopt_core::lstm::{
    GroupLayout, LearnedOptimizer, LstmOptimizerParams, LstmWeights, ParameterGroup, ParameterGroupSpec,
};
use metaopt_core::memory::{GacOptimizer, GacSpec, MemoryMode, NtmOptimizer};
use metaopt_core::preprocess::InputEncoding;
use metaopt_core::rule::UpdateRule;

pub const MAGIC: &str = "metaopt-optimizer";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("not an optimizer file (missing `{MAGIC}` header)")]
    NotAnOptimizer,
    #[error("unsupported format version {0}")]
    Version(String),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("baseline rules have no learned weights to save")]
    NotLearned,
}

/// Architecture family of a stored optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Plain,
    Gac,
    NtmBfgs,
    NtmLbfgs,
}

impl Variant {
    pub const ALL: [Self; 4] = [Self::Plain, Self::Gac, Self::NtmBfgs, Self::NtmLbfgs];

    pub fn name(self) -> &'static str {
        match self {
            Self::Plain => "plain",
            Self::Gac => "gac",
            Self::NtmBfgs => "ntm-bfgs",
            Self::NtmLbfgs => "ntm-lbfgs",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }

    pub fn of(rule: &UpdateRule) -> Option<Self> {
        match rule {
            UpdateRule::Baseline(_) => None,
            UpdateRule::Learned(_) => Some(Self::Plain),
            UpdateRule::Gac(_) => Some(Self::Gac),
            UpdateRule::Ntm(n) => Some(match n.memory {
                MemoryMode::Dense { .. } => Self::NtmBfgs,
                MemoryMode::History { .. } => Self::NtmLbfgs,
            }),
        }
    }
}

fn hex_payload(out: &mut String, values: &[f64]) {
    let _ = writeln!(out, "payload {}", values.len());
    for v in values {
        let _ = writeln!(out, "{:016x}", v.to_bits());
    }
}

fn controller_header(out: &mut String, p: &LstmOptimizerParams) {
    match p.encoding {
        InputEncoding::Raw { scale } => {
            let _ = writeln!(out, "input raw {scale:?}");
        }
        InputEncoding::LogSign { p } => {
            let _ = writeln!(out, "input log-sign {p:?}");
        }
    }
    let _ = writeln!(out, "n_hidden {}", p.n_hidden());
    let _ = writeln!(out, "output_scale {:?}", p.output_scale);
}

fn join(v: &[usize]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn gac_line(out: &mut String, gac: &GacSpec) {
    let _ = writeln!(out, "gac {};{}", join(&gac.layer1), join(&gac.layer2));
}

pub fn serialize(rule: &UpdateRule) -> Result<String, FormatError> {
    let variant = Variant::of(rule).ok_or(FormatError::NotLearned)?;
    let mut out = format!("{MAGIC} {VERSION}\nvariant {}\n", variant.name());
    match rule {
        UpdateRule::Baseline(_) => unreachable!(),
        UpdateRule::Learned(opt) => {
            match &opt.layout {
                GroupLayout::Shared => out.push_str("layout shared\n"),
                GroupLayout::TensorKind => out.push_str("layout tensor-kind\n"),
                GroupLayout::Explicit(spec) => {
                    let _ = writeln!(out, "layout explicit {}", spec.len());
                    for g in spec.groups() {
                        let _ = writeln!(out, "group {} {}", g.name, join(&g.indices));
                    }
                }
            }
            for p in &opt.params {
                out.push_str("set\n");
                controller_header(&mut out, p);
                hex_payload(&mut out, &p.weights.flatten());
            }
        }
        UpdateRule::Gac(g) => {
            controller_header(&mut out, &g.params);
            gac_line(&mut out, &g.gac);
            hex_payload(&mut out, &g.params.weights.flatten());
        }
        UpdateRule::Ntm(n) => {
            controller_header(&mut out, &n.controller);
            gac_line(&mut out, &n.gac);
            let _ = writeln!(out, "heads {} {}", n.read_heads, n.write_heads);
            match n.memory {
                MemoryMode::Dense { base_scale } => {
                    let _ = writeln!(out, "memory dense {base_scale:?}");
                }
                MemoryMode::History { base_scale, history_len } => {
                    let _ = writeln!(out, "memory history {base_scale:?} {history_len}");
                }
            }
            hex_payload(&mut out, &n.flatten());
        }
    }
    Ok(out)
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self { inner: text.lines().enumerate().peekable(), last: 0 }
    }

    fn err(&self, message: impl Into<String>) -> FormatError {
        FormatError::Malformed { line: self.last, message: message.into() }
    }

    /// The next line's words after `key`.
    fn expect(&mut self, key: &str) -> Result<Vec<&'a str>, FormatError> {
        let (i, line) = self.inner.next().ok_or_else(|| self.err(format!("expected `{key}`, found end of file")))?;
        self.last = i + 1;
        let mut words = line.split_whitespace();
        match words.next() {
            Some(k) if k == key => Ok(words.collect()),
            _ => Err(self.err(format!("expected `{key}`, found `{line}`"))),
        }
    }

    fn one(&mut self, key: &str) -> Result<&'a str, FormatError> {
        match self.expect(key)?.as_slice() {
            [v] => Ok(v),
            _ => Err(self.err(format!("`{key}` takes exactly one value"))),
        }
    }

    fn peek_is(&mut self, key: &str) -> bool {
        self.inner.peek().is_some_and(|(_, l)| l.split_whitespace().next() == Some(key))
    }

    fn parse<T: std::str::FromStr>(&self, s: &str, what: &str) -> Result<T, FormatError> {
        s.parse().map_err(|_| self.err(format!("invalid {what} `{s}`")))
    }

    fn indices(&self, s: &str) -> Result<Vec<usize>, FormatError> {
        if s.is_empty() {
            return Ok(Vec::new());
        }
        s.split(',').map(|p| self.parse(p, "index")).collect()
    }

    fn payload(&mut self, expected: usize) -> Result<Vec<f64>, FormatError> {
        let n: usize = {
            let v = self.one("payload")?;
            self.parse(v, "payload length")?
        };
        if n != expected {
            return Err(self.err(format!("payload has {n} values, the header implies {expected}")));
        }
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            let (i, line) = self.inner.next().ok_or_else(|| self.err("payload ends early"))?;
            self.last = i + 1;
            let line = line.trim();
            if line.len() != 16 {
                return Err(self.err(format!("expected 16 hex digits, found `{line}`")));
            }
            let bits = u64::from_str_radix(line, 16).map_err(|_| self.err(format!("invalid hex `{line}`")))?;
            values.push(f64::from_bits(bits));
        }
        Ok(values)
    }

    fn finish(&mut self) -> Result<(), FormatError> {
        for (i, line) in self.inner.by_ref() {
            if !line.trim().is_empty() {
                self.last = i + 1;
                return Err(FormatError::Malformed { line: i + 1, message: "trailing content".into() });
            }
        }
        Ok(())
    }

    /// Encoding, hidden width and output scale of a controller.
    fn controller(&mut self) -> Result<(InputEncoding, usize, f64), FormatError> {
        let input = self.expect("input")?;
        let encoding = match input.as_slice() {
            ["raw", s] => InputEncoding::Raw { scale: self.parse(s, "input scale")? },
            ["log-sign", p] => InputEncoding::LogSign { p: self.parse(p, "threshold")? },
            _ => return Err(self.err("input must be `raw <scale>` or `log-sign <p>`")),
        };
        let n_hidden: usize = {
            let v = self.one("n_hidden")?;
            self.parse(v, "n_hidden")?
        };
        if n_hidden == 0 {
            return Err(self.err("n_hidden must be positive"));
        }
        let output_scale = {
            let v = self.one("output_scale")?;
            self.parse(v, "output_scale")?
        };
        Ok((encoding, n_hidden, output_scale))
    }

    fn gac(&mut self, n_hidden: usize) -> Result<GacSpec, FormatError> {
        let v = self.one("gac")?;
        let (a, b) = v.split_once(';').ok_or_else(|| self.err("gac needs `layer1;layer2` cell lists"))?;
        let gac = GacSpec { layer1: self.indices(a)?, layer2: self.indices(b)? };
        if !gac.validate(n_hidden) {
            return Err(self.err("gac cell index exceeds n_hidden"));
        }
        Ok(gac)
    }
}

fn params_shape(
    encoding: InputEncoding,
    n_hidden: usize,
    output_scale: f64,
    extra_inputs: usize,
) -> LstmOptimizerParams {
    LstmOptimizerParams {
        weights: LstmWeights::zeros(encoding.channels() + extra_inputs, n_hidden),
        output_scale,
        encoding,
    }
}

pub fn deserialize(text: &str) -> Result<UpdateRule, FormatError> {
    let mut lines = Lines::new(text);
    let version = lines.expect(MAGIC).map_err(|_| FormatError::NotAnOptimizer)?;
    if version.as_slice() != [VERSION.to_string().as_str()] {
        return Err(FormatError::Version(version.join(" ")));
    }
    let variant = {
        let v = lines.one("variant")?;
        Variant::parse(v).ok_or_else(|| lines.err(format!("unknown variant `{v}`")))?
    };
    let rule = match variant {
        Variant::Plain => {
            let layout_words = lines.expect("layout")?;
            let layout = match layout_words.as_slice() {
                ["shared"] => GroupLayout::Shared,
                ["tensor-kind"] => GroupLayout::TensorKind,
                ["explicit", n] => {
                    let n: usize = lines.parse(n, "group count")?;
                    let mut groups = Vec::with_capacity(n);
                    for _ in 0..n {
                        let words = lines.expect("group")?;
                        let [name, idx] = words.as_slice() else {
                            return Err(lines.err("group needs a name and an index list"));
                        };
                        groups.push(ParameterGroup { name: (*name).to_owned(), indices: lines.indices(idx)? });
                    }
                    GroupLayout::Explicit(ParameterGroupSpec::new(groups).map_err(|e| lines.err(e.to_string()))?)
                }
                _ => return Err(lines.err("unknown layout")),
            };
            let mut params = Vec::new();
            while lines.peek_is("set") {
                lines.expect("set")?;
                let (encoding, n_hidden, output_scale) = lines.controller()?;
                let mut p = params_shape(encoding, n_hidden, output_scale, 0);
                let flat = lines.payload(p.weights.len())?;
                p.weights.assign_flat(&flat).expect("length checked");
                params.push(p);
            }
            let opt = LearnedOptimizer { layout, params };
            opt.validate().map_err(|e| lines.err(e.to_string()))?;
            UpdateRule::Learned(opt)
        }
        Variant::Gac => {
            let (encoding, n_hidden, output_scale) = lines.controller()?;
            let gac = lines.gac(n_hidden)?;
            let mut params = params_shape(encoding, n_hidden, output_scale, 0);
            let flat = lines.payload(params.weights.len())?;
            params.weights.assign_flat(&flat).expect("length checked");
            UpdateRule::Gac(GacOptimizer { params, gac })
        }
        Variant::NtmBfgs | Variant::NtmLbfgs => {
            let (encoding, n_hidden, output_scale) = lines.controller()?;
            let gac = lines.gac(n_hidden)?;
            let (read_heads, write_heads) = match lines.expect("heads")?.as_slice() {
                [r, w] => (lines.parse(r, "read head count")?, lines.parse(w, "write head count")?),
                _ => return Err(lines.err("heads needs read and write counts")),
            };
            let memory = match (variant, lines.expect("memory")?.as_slice()) {
                (Variant::NtmBfgs, ["dense", s]) => MemoryMode::Dense { base_scale: lines.parse(s, "memory scale")? },
                (Variant::NtmLbfgs, ["history", s, n]) => MemoryMode::History {
                    base_scale: lines.parse(s, "memory scale")?,
                    history_len: lines.parse(n, "history length")?,
                },
                _ => return Err(lines.err(format!("memory line does not match variant {}", variant.name()))),
            };
            let rows = NtmOptimizer::head_rows(read_heads, write_heads);
            let mut ntm = NtmOptimizer {
                controller: params_shape(encoding, n_hidden, output_scale, read_heads),
                gac,
                read_heads,
                write_heads,
                head_weights: vec![0.0; rows * n_hidden],
                head_bias: vec![0.0; rows],
                memory,
            };
            let expected = ntm.flatten().len();
            let flat = lines.payload(expected)?;
            ntm.assign_flat(&flat).expect("length checked");
            UpdateRule::Ntm(ntm)
        }
    };
    lines.finish()?;
    Ok(rule)
}
