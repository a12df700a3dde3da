//! Simulation traces and their two file encodings.
//!
//! CSV: a sample file with header `time,<component>.<var>,...,<component>@mode,...`
//! and a sidecar `<stem>.events.csv` with header `time,kind,name,prefix`.
//! JSON lines: a `header` record, then `sample` and `event` records in time
//! order, then an `end` record. Numbers use `{:.16e}` (17 significant digits);
//! a missing value is an empty CSV cell or JSON `null`.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde_json::Value as Json;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Jump,
    SyncJump,
    FlowStop,
    InvariantHit,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Jump => "jump",
            EventKind::SyncJump => "sync-jump",
            EventKind::FlowStop => "flow-stop",
            EventKind::InvariantHit => "invariant-hit",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [EventKind::Jump, EventKind::SyncJump, EventKind::FlowStop, EventKind::InvariantHit]
            .into_iter()
            .find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    EndTime,
    /// Every component waits and nothing is enabled.
    Quiescent,
    /// An exploration branch ran out of budget.
    Truncated,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::EndTime => "end-time",
            Termination::Quiescent => "quiescent",
            Termination::Truncated => "truncated",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Termination::EndTime, Termination::Quiescent, Termination::Truncated].into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub time: f64,
    pub values: Vec<Option<f64>>,
    /// Active Dynamic per component; `name:waiting` while its flow is stopped,
    /// `@field` inside a subsystem, `-` when inactive.
    pub modes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub name: String,
    pub prefix: String,
    /// Column values before and after a jump; empty for other kinds and for
    /// events read back from CSV.
    pub pre: Vec<Option<f64>>,
    pub post: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub columns: Vec<String>,
    pub components: Vec<String>,
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
    pub termination: Option<Termination>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    /// `.jsonl` and `.json` select JSON lines; anything else is CSV.
    pub fn from_path(p: &Path) -> Format {
        match p.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "json") => Format::Jsonl,
            _ => Format::Csv,
        }
    }
}

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn cell(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub(crate) fn json_num(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => num(v),
        _ => "null".into(),
    }
}

pub(crate) fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

/// Path of the events sidecar for a CSV sample file: `run.csv` → `run.events.csv`.
pub fn events_path(samples: &Path) -> PathBuf {
    let stem = samples.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    samples.with_file_name(format!("{stem}.events.csv"))
}

impl Trace {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Values of one column; `time` is always available.
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        if name == "time" {
            return Some(self.samples.iter().map(|s| Some(s.time)).collect());
        }
        let i = self.column_index(name)?;
        Some(self.samples.iter().map(|s| s.values[i]).collect())
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn write_csv(&self, samples: &mut dyn Write, events: &mut dyn Write) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(samples);
        let mut header = vec!["time".to_string()];
        header.extend(self.columns.iter().cloned());
        header.extend(self.components.iter().map(|c| format!("{c}@mode")));
        w.write_record(&header)?;
        for s in &self.samples {
            let mut row = vec![num(s.time)];
            row.extend(s.values.iter().map(|v| cell(*v)));
            row.extend(s.modes.iter().cloned());
            w.write_record(&row)?;
        }
        w.flush()?;
        let mut e = csv::Writer::from_writer(events);
        e.write_record(["time", "kind", "name", "prefix"])?;
        for ev in &self.events {
            e.write_record([num(ev.time).as_str(), ev.kind.as_str(), &ev.name, &ev.prefix])?;
        }
        e.flush()?;
        Ok(())
    }

    pub fn write_jsonl(&self, out: &mut dyn Write) -> io::Result<()> {
        let list = |v: &[String]| v.iter().map(|s| json_str(s)).collect::<Vec<_>>().join(",");
        let nums = |v: &[Option<f64>]| v.iter().map(|x| json_num(*x)).collect::<Vec<_>>().join(",");
        writeln!(out, r#"{{"type":"header","columns":[{}],"components":[{}]}}"#, list(&self.columns), list(&self.components))?;
        // samples and events interleaved by time, events after the sample they share a time with
        let (mut i, mut j) = (0, 0);
        while i < self.samples.len() || j < self.events.len() {
            let take_sample = j >= self.events.len() || (i < self.samples.len() && self.samples[i].time <= self.events[j].time);
            let mut line = String::new();
            if take_sample {
                let s = &self.samples[i];
                write!(line, r#"{{"type":"sample","time":{},"values":[{}],"modes":[{}]}}"#, num(s.time), nums(&s.values), list(&s.modes))
                    .unwrap();
                i += 1;
            } else {
                let e = &self.events[j];
                write!(
                    line,
                    r#"{{"type":"event","time":{},"kind":{},"name":{},"prefix":{},"pre":[{}],"post":[{}]}}"#,
                    num(e.time),
                    json_str(e.kind.as_str()),
                    json_str(&e.name),
                    json_str(&e.prefix),
                    nums(&e.pre),
                    nums(&e.post)
                )
                .unwrap();
                j += 1;
            }
            writeln!(out, "{line}")?;
        }
        let term = self.termination.map_or("null".to_string(), |t| json_str(t.as_str()));
        writeln!(out, r#"{{"type":"end","termination":{term}}}"#)
    }

    /// Writes in the format implied by the path; CSV also writes the sidecar.
    pub fn save(&self, path: &Path, format: Format) -> io::Result<()> {
        match format {
            Format::Csv => {
                let mut s = io::BufWriter::new(std::fs::File::create(path)?);
                let mut e = io::BufWriter::new(std::fs::File::create(events_path(path))?);
                self.write_csv(&mut s, &mut e)?;
                s.flush()?;
                e.flush()
            }
            Format::Jsonl => {
                let mut s = io::BufWriter::new(std::fs::File::create(path)?);
                self.write_jsonl(&mut s)?;
                s.flush()
            }
        }
    }

    pub fn read_csv(samples: &str, events: Option<&str>) -> Result<Trace, String> {
        let mut t = Trace::default();
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(samples.as_bytes());
        let header = r.headers().map_err(|e| e.to_string())?.clone();
        let mut names = header.iter();
        if names.next() != Some("time") {
            return Err("first column must be `time`".into());
        }
        for h in names {
            match h.strip_suffix("@mode") {
                Some(c) => t.components.push(c.to_string()),
                None => t.columns.push(h.to_string()),
            }
        }
        let nv = t.columns.len();
        for rec in r.records() {
            let rec = rec.map_err(|e| e.to_string())?;
            let f = |s: &str| -> Result<Option<f64>, String> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse::<f64>().map(Some).map_err(|_| format!("bad number `{s}`"))
                }
            };
            let time = f(&rec[0])?.ok_or("missing time")?;
            let values = (1..=nv).map(|i| f(rec.get(i).unwrap_or(""))).collect::<Result<_, _>>()?;
            let modes = (nv + 1..rec.len()).map(|i| rec[i].to_string()).collect();
            t.samples.push(Sample { time, values, modes });
        }
        if let Some(ev) = events {
            let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(ev.as_bytes());
            for rec in r.records() {
                let rec = rec.map_err(|e| e.to_string())?;
                if rec.len() < 4 {
                    return Err("event rows need time,kind,name,prefix".into());
                }
                let time = rec[0].parse::<f64>().map_err(|_| format!("bad event time `{}`", &rec[0]))?;
                let kind = EventKind::parse(&rec[1]).ok_or_else(|| format!("unknown event kind `{}`", &rec[1]))?;
                t.events.push(Event { time, kind, name: rec[2].into(), prefix: rec[3].into(), pre: vec![], post: vec![] });
            }
        }
        Ok(t)
    }

    pub fn read_jsonl(text: &str) -> Result<Trace, String> {
        let mut t = Trace::default();
        let strs = |v: &Json| -> Vec<String> {
            v.as_array().map(|a| a.iter().filter_map(|x| x.as_str().map(String::from)).collect()).unwrap_or_default()
        };
        let nums = |v: &Json| -> Vec<Option<f64>> { v.as_array().map(|a| a.iter().map(|x| x.as_f64()).collect()).unwrap_or_default() };
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let v: Json = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", n + 1))?;
            let time = || v["time"].as_f64().ok_or(format!("line {}: missing time", n + 1));
            match v["type"].as_str() {
                Some("header") => {
                    t.columns = strs(&v["columns"]);
                    t.components = strs(&v["components"]);
                }
                Some("sample") => t.samples.push(Sample { time: time()?, values: nums(&v["values"]), modes: strs(&v["modes"]) }),
                Some("event") => {
                    let kind = v["kind"].as_str().and_then(EventKind::parse).ok_or(format!("line {}: bad kind", n + 1))?;
                    t.events.push(Event {
                        time: time()?,
                        kind,
                        name: v["name"].as_str().unwrap_or_default().into(),
                        prefix: v["prefix"].as_str().unwrap_or_default().into(),
                        pre: nums(&v["pre"]),
                        post: nums(&v["post"]),
                    });
                }
                Some("end") => t.termination = v["termination"].as_str().and_then(Termination::parse),
                other => return Err(format!("line {}: unknown record type {other:?}", n + 1)),
            }
        }
        Ok(t)
    }

    /// Reads a trace file, picking the format from the extension. A CSV sample
    /// file's sidecar is read when present.
    pub fn load(path: &Path) -> Result<Trace, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        match Format::from_path(path) {
            Format::Jsonl => Trace::read_jsonl(&text),
            Format::Csv => {
                let ev = std::fs::read_to_string(events_path(path)).ok();
                Trace::read_csv(&text, ev.as_deref())
            }
        }
    }
}

/// Summary statistics of one column; `None` fields when no sample has a value.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats {
    pub name: String,
    pub n: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub mean: Option<f64>,
}

pub fn column_stats(name: &str, values: &[Option<f64>]) -> ColumnStats {
    let xs: Vec<f64> = values.iter().flatten().copied().collect();
    let n = xs.len();
    if n == 0 {
        return ColumnStats { name: name.into(), n, min: None, max: None, mean: None };
    }
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // running mean: exact on constant columns
    let mean = xs.iter().enumerate().fold(0.0, |m, (i, x)| m + (x - m) / (i + 1) as f64);
    ColumnStats { name: name.into(), n, min: Some(min), max: Some(max), mean: Some(mean) }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_trace() -> Trace {
        Trace {
            columns: vec!["ball.height".into(), "ball.velocity".into()],
            components: vec!["ball".into()],
            samples: vec![
                Sample { time: 0.0, values: vec![Some(15.0), Some(0.0)], modes: vec!["moving".into()] },
                Sample { time: 0.001, values: vec![Some(14.9999951), None], modes: vec!["moving:waiting".into()] },
            ],
            events: vec![Event {
                time: 0.001,
                kind: EventKind::Jump,
                name: "ball.CompMJ".into(),
                prefix: "system.ball.CompMJ".into(),
                pre: vec![Some(0.0), Some(-1.0)],
                post: vec![Some(0.0), Some(0.6)],
            }],
            termination: Some(Termination::EndTime),
        }
    }

    #[test]
    fn csv_round_trip() {
        let t = sample_trace();
        let (mut s, mut e) = (Vec::new(), Vec::new());
        t.write_csv(&mut s, &mut e).unwrap();
        let s = String::from_utf8(s).unwrap();
        assert!(s.starts_with("time,ball.height,ball.velocity,ball@mode\n"));
        assert!(s.contains("1.5000000000000000e1"));
        let back = Trace::read_csv(&s, Some(std::str::from_utf8(&e).unwrap())).unwrap();
        assert_eq!(back.samples, t.samples);
        assert_eq!(back.events[0].name, "ball.CompMJ");
        assert!(back.events[0].pre.is_empty());
    }

    #[test]
    fn jsonl_round_trip() {
        let t = sample_trace();
        let mut out = Vec::new();
        t.write_jsonl(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let kinds: Vec<&str> = text.lines().map(|l| &l[9..14]).collect();
        assert_eq!(kinds, ["heade", "sampl", "sampl", "event", "end\",", ]);
        assert_eq!(Trace::read_jsonl(&text).unwrap(), t);
    }

    #[test]
    fn seventeen_significant_digits() {
        let x = 0.1f64 + 0.2;
        assert_eq!(num(x), "3.0000000000000004e-1");
        assert_eq!(num(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn stats_of_empty_column_are_absent() {
        let s = column_stats("h", &[]);
        assert_eq!((s.n, s.min, s.mean), (0, None, None));
        let s = column_stats("h", &[Some(1.0), None, Some(3.0)]);
        assert_eq!((s.n, s.min, s.max, s.mean), (2, Some(1.0), Some(3.0), Some(2.0)));
    }

    #[test]
    fn sidecar_name() {
        assert_eq!(events_path(Path::new("out/run.csv")), PathBuf::from("out/run.events.csv"));
    }
}
