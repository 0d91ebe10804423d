//! Versioned text serialization of trained models.
//!
//! ```text
//! sparn-model 1
//! type mixture
//! kind binary
//! dim 3
//! meta none
//! mode tied
//! k 2
//! mixing 0.4 0.6
//! tied d=0 b=0.1,-0.3 w=
//! tied d=1 b=0.2,0.0 w=0:0.75
//! ...
//! end
//! ```
//!
//! Floats use the shortest representation that parses back to the same bits,
//! so a save/load round trip is exact.

use std::collections::HashMap;
use std::path::Path;

use crate::arn::{AutoregressiveNet, Conditional, GaussianConditional, LogisticConditional};
use crate::data::{DataKind, Dataset, EncodingMeta};
use crate::error::{Error, Result};
use crate::mixture::{ComponentSet, DimParams, MixtureModel, SharingMode};
use crate::seqmix::{Partition, SequenceBlock, SequenceModel};
use crate::solvers::{GateWeights, SharedWeights, SparseWeights, TiedWeights};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "sparn-model";

/// Any trained model.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Arn(AutoregressiveNet),
    Mixture(MixtureModel),
    Sequence(SequenceModel),
}

impl Model {
    pub fn family(&self) -> &'static str {
        match self {
            Model::Arn(_) => "arn",
            Model::Mixture(_) => "mixture",
            Model::Sequence(_) => "sequence",
        }
    }

    pub fn kind(&self) -> DataKind {
        match self {
            Model::Arn(m) => m.kind(),
            Model::Mixture(m) => m.kind(),
            Model::Sequence(m) => m.kind(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Model::Arn(m) => m.dim(),
            Model::Mixture(m) => m.dim(),
            Model::Sequence(m) => m.dim(),
        }
    }

    pub fn meta(&self) -> Option<&EncodingMeta> {
        match self {
            Model::Arn(m) => m.meta(),
            Model::Mixture(m) => m.meta(),
            Model::Sequence(m) => m.meta(),
        }
    }

    /// Column order the model expects (sequence models on grid partitions).
    pub fn order(&self) -> Option<&[usize]> {
        match self {
            Model::Sequence(m) => m.order(),
            _ => None,
        }
    }

    /// Component counts: 1 for a network, K for a mixture, K_ℓ per block.
    pub fn components(&self) -> Vec<usize> {
        match self {
            Model::Arn(_) => vec![1],
            Model::Mixture(m) => vec![m.k()],
            Model::Sequence(m) => m.ks(),
        }
    }

    pub fn loglik(&self, x: &[f64]) -> Result<f64> {
        match self {
            Model::Arn(m) => m.loglik(x),
            Model::Mixture(m) => m.loglik(x),
            Model::Sequence(m) => m.loglik(x),
        }
    }

    pub fn loglik_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        match self {
            Model::Arn(m) => m.loglik_dataset(data),
            Model::Mixture(m) => m.loglik_dataset(data),
            Model::Sequence(m) => m.loglik_dataset(data),
        }
    }

    /// One encoded sample, in the model's own dimension order.
    pub fn sample(&self, seed: u64) -> Vec<f64> {
        match self {
            Model::Arn(m) => m.sample(seed),
            Model::Mixture(m) => m.sample(seed),
            Model::Sequence(m) => m.sample(seed),
        }
    }
}

fn float(v: f64) -> String {
    format!("{v:?}")
}

fn float_list(vs: &[f64]) -> String {
    vs.iter().map(|v| float(*v)).collect::<Vec<_>>().join(",")
}

fn entries(w: &SparseWeights) -> String {
    w.entries()
        .iter()
        .map(|(j, v)| format!("{j}:{}", float(*v)))
        .collect::<Vec<_>>()
        .join(",")
}

/// Serializes a model to the versioned text format.
pub fn write_model(model: &Model) -> String {
    let mut out = String::new();
    let mut line = |s: String| {
        out.push_str(&s);
        out.push('\n');
    };
    line(format!("{MAGIC} {FORMAT_VERSION}"));
    line(format!("type {}", model.family()));
    line(format!("kind {}", model.kind().as_str()));
    line(format!("dim {}", model.dim()));
    match model.meta() {
        None => line("meta none".into()),
        Some(m) => {
            let pairs: Vec<String> = m
                .mean
                .iter()
                .zip(&m.std)
                .map(|(a, s)| format!("{}:{}", float(*a), float(*s)))
                .collect();
            line(format!("meta {}", pairs.join(" ")));
        }
    }
    match model {
        Model::Arn(net) => {
            for (d, c) in net.conditionals().iter().enumerate() {
                let w = c.weights();
                match c.sigma() {
                    None => line(format!("cond d={d} b={} w={}", float(w.intercept), entries(w))),
                    Some(s) => line(format!(
                        "cond d={d} b={} s={} w={}",
                        float(w.intercept),
                        float(s),
                        entries(w)
                    )),
                }
            }
        }
        Model::Mixture(m) => {
            line(format!("mode {}", m.mode()));
            line(format!("k {}", m.k()));
            line(format!(
                "mixing {}",
                m.mixing().iter().map(|p| float(*p)).collect::<Vec<_>>().join(" ")
            ));
            write_components(m.components(), &mut line);
        }
        Model::Sequence(s) => {
            line(format!("partition {}", s.partition()));
            match s.order() {
                None => line("order none".into()),
                Some(o) => line(format!(
                    "order {}",
                    o.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
                )),
            }
            for (l, b) in s.blocks().iter().enumerate() {
                line(format!("block l={l} k={} mode={}", b.k(), b.components.mode()));
                for (c, w) in b.gate.classes().iter().enumerate() {
                    line(format!("gate l={l} c={c} b={} w={}", float(w.intercept), entries(w)));
                }
                write_components(&b.components, &mut line);
            }
        }
    }
    line("end".into());
    out
}

fn write_components(c: &ComponentSet, line: &mut impl FnMut(String)) {
    for d in c.start()..c.end() {
        match c.dim_params(d) {
            DimParams::Untied(ws) => {
                for (k, w) in ws.iter().enumerate() {
                    line(format!("comp d={d} k={k} b={} w={}", float(w.intercept), entries(w)));
                }
            }
            DimParams::Tied(t) => line(format!(
                "tied d={d} b={} w={}",
                float_list(&t.intercepts),
                entries(&t.shared)
            )),
            DimParams::Auto(s) => {
                line(format!("global d={d} b={} w={}", float(s.global.intercept), entries(&s.global)));
                for (k, w) in s.deviations.iter().enumerate() {
                    line(format!("dev d={d} k={k} b={} w={}", float(w.intercept), entries(w)));
                }
            }
        }
        if c.kind() == DataKind::Continuous {
            let s: Vec<f64> = (0..c.k()).map(|k| c.sigma(d, k).expect("continuous sigma")).collect();
            line(format!("sigma d={d} s={}", float_list(&s)));
        }
    }
}

/// One parsed line: a keyword, positional words and `key=value` fields.
struct Record<'a> {
    line: usize,
    keyword: &'a str,
    words: Vec<&'a str>,
    fields: HashMap<&'a str, &'a str>,
}

impl<'a> Record<'a> {
    fn parse(line: usize, text: &'a str) -> Self {
        let mut it = text.split_whitespace();
        let keyword = it.next().unwrap_or("");
        let mut words = Vec::new();
        let mut fields = HashMap::new();
        for tok in it {
            match tok.split_once('=') {
                Some((k, v)) => {
                    fields.insert(k, v);
                }
                None => words.push(tok),
            }
        }
        Self {
            line,
            keyword,
            words,
            fields,
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn expect(&self, keyword: &str) -> Result<()> {
        if self.keyword != keyword {
            return Err(self.err(format!("expected `{keyword}`, found `{}`", self.keyword)));
        }
        Ok(())
    }

    fn word(&self) -> Result<&'a str> {
        match self.words.as_slice() {
            [w] => Ok(w),
            _ => Err(self.err(format!("`{}` takes exactly one value", self.keyword))),
        }
    }

    fn field(&self, key: &str) -> Result<&'a str> {
        self.fields
            .get(key)
            .copied()
            .ok_or_else(|| self.err(format!("missing `{key}=`")))
    }

    fn usize_field(&self, key: &str) -> Result<usize> {
        let v = self.field(key)?;
        v.parse().map_err(|_| self.err(format!("bad integer `{v}` for `{key}`")))
    }

    fn f64_field(&self, key: &str) -> Result<f64> {
        parse_f64(self, self.field(key)?)
    }

    fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        self.field(key)?.split(',').map(|v| parse_f64(self, v)).collect()
    }

    fn weights(&self, intercept: f64) -> Result<SparseWeights> {
        let raw = self.field("w")?;
        let mut entries = Vec::new();
        if !raw.is_empty() {
            for pair in raw.split(',') {
                let (j, v) = pair
                    .split_once(':')
                    .ok_or_else(|| self.err(format!("bad weight `{pair}`")))?;
                let j: usize = j.parse().map_err(|_| self.err(format!("bad index `{j}`")))?;
                entries.push((j, parse_f64(self, v)?));
            }
        }
        SparseWeights::new(intercept, entries).map_err(|e| self.err(e.to_string()))
    }
}

fn parse_f64(rec: &Record<'_>, v: &str) -> Result<f64> {
    v.parse::<f64>().map_err(|_| rec.err(format!("bad number `{v}`")))
}

struct Cursor<'a> {
    records: Vec<Record<'a>>,
    pos: usize,
    last_line: usize,
}

impl<'a> Cursor<'a> {
    fn next(&mut self) -> Result<&Record<'a>> {
        let r = self.records.get(self.pos).ok_or(Error::Format {
            line: self.last_line,
            msg: "unexpected end of model file".into(),
        })?;
        self.pos += 1;
        Ok(r)
    }

    /// Line of the most recently consumed record.
    fn line(&self) -> usize {
        self.pos.checked_sub(1).map_or(0, |i| self.records[i].line)
    }
}

/// Parses a model written by [`write_model`].
pub fn parse_model(text: &str) -> Result<Model> {
    let records: Vec<Record<'_>> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| Record::parse(i + 1, l))
        .collect();
    let last_line = text.lines().count();
    let mut cur = Cursor {
        records,
        pos: 0,
        last_line,
    };
    let head = cur.next()?;
    head.expect(MAGIC)?;
    let version: u32 = head
        .word()?
        .parse()
        .map_err(|_| head.err("bad format version"))?;
    if version != FORMAT_VERSION {
        return Err(head.err(format!(
            "unsupported format version {version} (this build reads {FORMAT_VERSION})"
        )));
    }
    let rec = cur.next()?;
    rec.expect("type")?;
    let family = rec.word()?;
    let rec = cur.next()?;
    rec.expect("kind")?;
    let kind: DataKind = rec.word()?.parse().map_err(|e: Error| rec.err(e.to_string()))?;
    let rec = cur.next()?;
    rec.expect("dim")?;
    let dim: usize = rec.word()?.parse().map_err(|_| rec.err("bad dimension"))?;
    if dim == 0 {
        return Err(rec.err("dimension must be positive"));
    }
    let rec = cur.next()?;
    rec.expect("meta")?;
    let meta = parse_meta(rec, dim)?;
    let model = match family {
        "arn" => Model::Arn(parse_arn(&mut cur, kind, dim, meta)?),
        "mixture" => Model::Mixture(parse_mixture(&mut cur, kind, dim, meta)?),
        "sequence" => Model::Sequence(parse_sequence(&mut cur, kind, dim, meta)?),
        other => return Err(rec.err(format!("unknown model type `{other}`"))),
    };
    let rec = cur.next()?;
    rec.expect("end")?;
    if let Some(extra) = cur.records.get(cur.pos) {
        return Err(extra.err("content after `end`"));
    }
    Ok(model)
}

fn parse_meta(rec: &Record<'_>, dim: usize) -> Result<Option<EncodingMeta>> {
    if rec.words == ["none"] {
        return Ok(None);
    }
    if rec.words.len() != dim {
        return Err(rec.err(format!("meta has {} columns, expected {dim}", rec.words.len())));
    }
    let mut mean = Vec::with_capacity(dim);
    let mut std = Vec::with_capacity(dim);
    for w in &rec.words {
        let (a, s) = w.split_once(':').ok_or_else(|| rec.err(format!("bad meta entry `{w}`")))?;
        mean.push(parse_f64(rec, a)?);
        std.push(parse_f64(rec, s)?);
    }
    Ok(Some(EncodingMeta { mean, std }))
}

fn check_dim_field(rec: &Record<'_>, expected: usize) -> Result<()> {
    let d = rec.usize_field("d")?;
    if d != expected {
        return Err(rec.err(format!("expected dimension {expected}, found {d}")));
    }
    Ok(())
}

fn parse_arn(cur: &mut Cursor<'_>, kind: DataKind, dim: usize, meta: Option<EncodingMeta>) -> Result<AutoregressiveNet> {
    let mut conds = Vec::with_capacity(dim);
    let mut line = 0;
    for d in 0..dim {
        let rec = cur.next()?;
        rec.expect("cond")?;
        check_dim_field(rec, d)?;
        line = rec.line;
        let weights = rec.weights(rec.f64_field("b")?)?;
        conds.push(match kind {
            DataKind::Binary => Conditional::Logistic(LogisticConditional { weights }),
            DataKind::Continuous => Conditional::Gaussian(GaussianConditional {
                weights,
                sigma: rec.f64_field("s")?,
            }),
        });
    }
    AutoregressiveNet::new(kind, conds, meta).map_err(|e| Error::Format {
        line,
        msg: e.to_string(),
    })
}

fn parse_mixture(cur: &mut Cursor<'_>, kind: DataKind, dim: usize, meta: Option<EncodingMeta>) -> Result<MixtureModel> {
    let rec = cur.next()?;
    rec.expect("mode")?;
    let mode: SharingMode = rec.word()?.parse().map_err(|e: Error| rec.err(e.to_string()))?;
    let rec = cur.next()?;
    rec.expect("k")?;
    let k: usize = rec.word()?.parse().map_err(|_| rec.err("bad component count"))?;
    if k == 0 {
        return Err(rec.err("component count must be positive"));
    }
    let rec = cur.next()?;
    rec.expect("mixing")?;
    if rec.words.len() != k {
        return Err(rec.err(format!("expected {k} mixing weights")));
    }
    let mixing = rec.words.iter().map(|w| parse_f64(rec, w)).collect::<Result<Vec<_>>>()?;
    let line = rec.line;
    let comps = parse_components(cur, kind, 0, dim, k, mode)?;
    MixtureModel::new(mixing, comps, meta).map_err(|e| Error::Format {
        line,
        msg: e.to_string(),
    })
}

fn parse_components(
    cur: &mut Cursor<'_>,
    kind: DataKind,
    start: usize,
    end: usize,
    k: usize,
    mode: SharingMode,
) -> Result<ComponentSet> {
    let mut params = Vec::with_capacity(end - start);
    let mut sigma = Vec::with_capacity(end - start);
    for d in start..end {
        let p = match mode {
            SharingMode::Untied => {
                let mut ws = Vec::with_capacity(k);
                for h in 0..k {
                    let rec = cur.next()?;
                    rec.expect("comp")?;
                    check_dim_field(rec, d)?;
                    if rec.usize_field("k")? != h {
                        return Err(rec.err(format!("expected component {h}")));
                    }
                    ws.push(rec.weights(rec.f64_field("b")?)?);
                }
                DimParams::Untied(ws)
            }
            SharingMode::Tied => {
                let rec = cur.next()?;
                rec.expect("tied")?;
                check_dim_field(rec, d)?;
                let intercepts = rec.f64_list("b")?;
                if intercepts.len() != k {
                    return Err(rec.err(format!("expected {k} intercepts")));
                }
                DimParams::Tied(TiedWeights {
                    intercepts,
                    shared: rec.weights(0.0)?,
                })
            }
            SharingMode::Auto => {
                let rec = cur.next()?;
                rec.expect("global")?;
                check_dim_field(rec, d)?;
                let global = rec.weights(rec.f64_field("b")?)?;
                let mut deviations = Vec::with_capacity(k);
                for h in 0..k {
                    let rec = cur.next()?;
                    rec.expect("dev")?;
                    check_dim_field(rec, d)?;
                    if rec.usize_field("k")? != h {
                        return Err(rec.err(format!("expected deviation {h}")));
                    }
                    deviations.push(rec.weights(rec.f64_field("b")?)?);
                }
                DimParams::Auto(SharedWeights { global, deviations })
            }
        };
        params.push(p);
        if kind == DataKind::Continuous {
            let rec = cur.next()?;
            rec.expect("sigma")?;
            check_dim_field(rec, d)?;
            let s = rec.f64_list("s")?;
            if s.len() != k {
                return Err(rec.err(format!("expected {k} sigma values")));
            }
            sigma.push(s);
        }
    }
    let line = cur.line();
    let sigma = (kind == DataKind::Continuous).then_some(sigma);
    ComponentSet::new(kind, start, params, sigma).map_err(|e| Error::Format {
        line,
        msg: e.to_string(),
    })
}

fn parse_sequence(cur: &mut Cursor<'_>, kind: DataKind, dim: usize, meta: Option<EncodingMeta>) -> Result<SequenceModel> {
    let rec = cur.next()?;
    rec.expect("partition")?;
    let (partition, _) = Partition::parse(rec.word()?).map_err(|e| rec.err(e.to_string()))?;
    if partition.dim() != dim {
        return Err(rec.err(format!("partition covers {} dimensions, expected {dim}", partition.dim())));
    }
    let rec = cur.next()?;
    rec.expect("order")?;
    let order = match rec.word()? {
        "none" => None,
        list => Some(
            list.split(',')
                .map(|v| v.parse::<usize>().map_err(|_| rec.err(format!("bad order index `{v}`"))))
                .collect::<Result<Vec<_>>>()?,
        ),
    };
    let order_line = rec.line;
    let mut blocks = Vec::with_capacity(partition.len());
    for l in 0..partition.len() {
        let rec = cur.next()?;
        rec.expect("block")?;
        if rec.usize_field("l")? != l {
            return Err(rec.err(format!("expected block {l}")));
        }
        let k = rec.usize_field("k")?;
        if k == 0 {
            return Err(rec.err("component count must be positive"));
        }
        let mode: SharingMode = rec.field("mode")?.parse().map_err(|e: Error| rec.err(e.to_string()))?;
        let mut classes = Vec::with_capacity(k);
        let mut gate_line = rec.line;
        for c in 0..k {
            let rec = cur.next()?;
            rec.expect("gate")?;
            if rec.usize_field("l")? != l || rec.usize_field("c")? != c {
                return Err(rec.err(format!("expected gate class {c} of block {l}")));
            }
            classes.push(rec.weights(rec.f64_field("b")?)?);
            gate_line = rec.line;
        }
        let gate = GateWeights::new(classes).map_err(|e| Error::Format {
            line: gate_line,
            msg: e.to_string(),
        })?;
        let range = partition.block(l);
        let components = parse_components(cur, kind, range.start, range.end, k, mode)?;
        blocks.push(SequenceBlock { gate, components });
    }
    let model = SequenceModel::new(partition, blocks, meta).map_err(|e| Error::Format {
        line: order_line,
        msg: e.to_string(),
    })?;
    match order {
        None => Ok(model),
        Some(o) => model.with_order(o).map_err(|e| Error::Format {
            line: order_line,
            msg: e.to_string(),
        }),
    }
}

pub fn save_model(path: impl AsRef<Path>, model: &Model) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_model(model)).map_err(|e| Error::file(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse_model(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_arn() -> Model {
        let c0 = Conditional::Logistic(LogisticConditional {
            weights: SparseWeights::intercept_only(0.1),
        });
        let c1 = Conditional::Logistic(LogisticConditional {
            weights: SparseWeights::new(-1e-300, vec![(0, 0.3333333333333333)]).unwrap(),
        });
        Model::Arn(AutoregressiveNet::new(DataKind::Binary, vec![c0, c1], None).unwrap())
    }

    #[test]
    fn arn_round_trip_is_exact() {
        let m = tiny_arn();
        let text = write_model(&m);
        assert!(text.starts_with("sparn-model 1\ntype arn\n"));
        assert_eq!(parse_model(&text).unwrap(), m);
    }

    #[test]
    fn version_mismatch_is_reported() {
        let text = write_model(&tiny_arn()).replacen("sparn-model 1", "sparn-model 2", 1);
        match parse_model(&text) {
            Err(Error::Format { line: 1, msg }) => assert!(msg.contains("version 2")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_and_acausal_files_fail() {
        let text = write_model(&tiny_arn());
        let cut: String = text.lines().take(6).map(|l| format!("{l}\n")).collect();
        assert!(parse_model(&cut).is_err());
        let bad = text.replace("w=0:", "w=1:");
        assert!(matches!(parse_model(&bad), Err(Error::Format { .. })));
    }
}
