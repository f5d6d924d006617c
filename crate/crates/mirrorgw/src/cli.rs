//! Batch front-end: invariant tables and identity suites as JSON or CSV.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::arith::{fmt_q, parse_q, q, qr, Q};
use crate::closed_gw::{bracket, bps_from_gw, check_divisibility, primary_via_mirror, Nu1Prefactor, TwoPointSeries};
use crate::coeffs::{check_convolution, check_ctilde_d1, check_reflection, CoeffTable};
use crate::equivariant::{Equivariant, Weights};
use crate::error::{Error, Result};
use crate::hypergeom::{check_i_symmetry, check_iterated_derivative, check_j_derivative, ModelSpec};
use crate::open_gw::{open_weights, OpenModel};
use crate::report::Outcome;

/// Directory used for output files when `--output` is absent.
pub const OUTPUT_DIR_VAR: &str = "MIRRORGW_OUTPUT_DIR";

#[derive(Parser, Debug, Clone)]
#[command(name = "mirrorgw", version, about = "Exact genus zero invariants of projective complete intersections")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Model as "n=<int>;a=<csv>", e.g. "n=5;a=5".
    #[arg(long, global = true, default_value = "n=5;a=5")]
    pub model: String,
    /// Highest degree (Q-order for the open sector and equivariant checks).
    #[arg(long, global = true, default_value_t = 4)]
    pub dmax: usize,
    /// q-order of the hypergeometric identities.
    #[arg(long, global = true, default_value_t = 20)]
    pub qorder: usize,
    /// Order in 1/ħ of the polynomiality checks.
    #[arg(long, global = true, default_value_t = 3)]
    pub zorder: usize,
    /// Torus weights: "default", "random" or an explicit list "1,-2,3/5,...".
    #[arg(long, global = true, default_value = "default")]
    pub weights: String,
    /// Seed of the random weight draw; setting it implies random weights.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Output file; defaults to stdout, or to a file in $MIRRORGW_OUTPUT_DIR.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// BPS numbers and primary two-point invariants of a Calabi-Yau model.
    Bps {
        /// Hyperplane powers b1,b2 with b1 + b2 = n - l - 2.
        #[arg(long)]
        insertions: String,
    },
    /// All nonzero two-point descendant invariants up to degree dmax.
    Descendants {
        /// Restrict to the hyperplane powers b1,b2.
        #[arg(long)]
        insertions: Option<String>,
    },
    /// Disk, annulus or Klein bottle invariants of a real Calabi-Yau threefold.
    Open {
        #[arg(long, value_enum)]
        what: OpenKind,
    },
    /// Runs identity suites and reports pass or fail for each check.
    Verify {
        /// Suites to run; all applicable ones when absent.
        #[arg(long, value_enum, value_delimiter = ',')]
        suite: Vec<Suite>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpenKind {
    Disk,
    Annulus,
    Klein,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Suite {
    Coeffs,
    Hypergeom,
    Closed,
    Equivariant,
    Open,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WeightMode {
    Default,
    Random(u64),
    Explicit(Vec<Q>),
}

impl Common {
    pub fn weight_mode(&self) -> Result<WeightMode> {
        match self.weights.trim() {
            "default" => Ok(self.seed.map_or(WeightMode::Default, WeightMode::Random)),
            "random" => Ok(WeightMode::Random(self.seed.unwrap_or(0))),
            list => Ok(WeightMode::Explicit(list.split(',').map(parse_q).collect::<Result<_>>()?)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub kind: String,
    pub degree: Q,
    pub insertions: String,
    pub value: Q,
}

#[derive(Clone, Debug)]
pub struct Report {
    pub model: ModelSpec,
    pub records: Vec<Record>,
    pub checks: Vec<Outcome>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> String {
        let records: Vec<_> = self
            .records
            .iter()
            .map(|r| json!({"kind": r.kind, "degree": fmt_q(&r.degree), "insertions": r.insertions, "value": fmt_q(&r.value)}))
            .collect();
        let checks: Vec<_> = self
            .checks
            .iter()
            .map(|c| json!({"name": c.name, "status": if c.passed { "pass" } else { "fail" }, "detail": c.detail}))
            .collect();
        let doc = json!({
            "model": {"spec": self.model.spec_string(), "n": self.model.n, "a": self.model.a},
            "records": records,
            "checks": checks,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("json values serialize");
        s.push('\n');
        s
    }

    /// Records only; checks go to the diagnostics stream.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(["kind", "degree", "insertions", "value"]).expect("in-memory write");
        for r in &self.records {
            w.write_record([r.kind.as_str(), &fmt_q(&r.degree), &r.insertions, &fmt_q(&r.value)])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.to_json(),
            Format::Csv => self.to_csv(),
        }
    }
}

fn parse_pair(s: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || Error::Invalid(format!("insertions must be two hyperplane powers \"b1,b2\", got {s:?}"));
    if parts.len() != 2 {
        return Err(bad());
    }
    Ok((parts[0].parse().map_err(|_| bad())?, parts[1].parse().map_err(|_| bad())?))
}

fn hyperplane_pair(b1: usize, b2: usize) -> String {
    format!("H^{b1},H^{b2}")
}

fn ok(r: Result<()>) -> Result<String> {
    r.map(|_| "ok".to_string())
}

fn bps(m: &ModelSpec, insertions: &str, d_max: usize) -> Result<Report> {
    let (b1, b2) = parse_pair(insertions)?;
    let gw = primary_via_mirror(m, b1, b2, d_max)?;
    let n = bps_from_gw(&gw);
    let ins = hyperplane_pair(b1, b2);
    let mut records = vec![];
    for (kind, vals) in [("gw", &gw), ("bps", &n)] {
        for (i, v) in vals.iter().enumerate() {
            records.push(Record { kind: kind.into(), degree: q(i as i64 + 1), insertions: ins.clone(), value: v.clone() });
        }
    }
    let checks = vec![Outcome::run("BPS integrality", || match n.iter().position(|v| !v.is_integer()) {
        None => Ok(format!("degrees 1..={d_max}")),
        Some(i) => Err(Error::Check(format!("degree {} BPS number {} is not an integer", i + 1, n[i]))),
    })];
    Ok(Report { model: m.clone(), records, checks })
}

fn descendants(m: &ModelSpec, insertions: Option<&str>, d_max: usize) -> Result<Report> {
    let filter = insertions.map(parse_pair).transpose()?;
    let series = TwoPointSeries::build(m, d_max)?;
    let records = series
        .entries()
        .filter(|((_, _, b1, _, b2), _)| filter.is_none_or(|f| f == (*b1, *b2)))
        .map(|(&(d, j1, b1, j2, b2), v)| Record {
            kind: "descendant".into(),
            degree: q(d as i64),
            insertions: format!("tau_{j1} H^{b1},tau_{j2} H^{b2}"),
            value: v.clone(),
        })
        .collect();
    let checks = vec![
        Outcome::run("two-point divisibility", || Ok("enforced while building".into())),
        Outcome::run("fundamental class axiom", || ok(series.check_unit_axiom())),
    ];
    Ok(Report { model: m.clone(), records, checks })
}

fn open_weights_for(m: &ModelSpec, mode: &WeightMode) -> Result<Weights> {
    match mode {
        WeightMode::Default => Ok(open_weights(m.n, None)),
        WeightMode::Random(s) => Ok(open_weights(m.n, Some(*s))),
        WeightMode::Explicit(v) => Weights::new(v.clone()),
    }
}

fn equivariant_weights_for(m: &ModelSpec, mode: &WeightMode, d_max: usize) -> Result<Weights> {
    match mode {
        WeightMode::Default => Ok(Weights::default_for(m, d_max, 1)),
        WeightMode::Random(s) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*s);
            loop {
                let w = Weights::random(m.n, &mut rng);
                if w.check_edges(m, d_max).is_ok() {
                    return Ok(w);
                }
            }
        }
        WeightMode::Explicit(v) => Weights::new(v.clone()),
    }
}

fn open(m: &ModelSpec, what: OpenKind, mode: &WeightMode, order: usize) -> Result<Report> {
    let w = open_weights_for(m, mode)?;
    let om = OpenModel::new(m, &w, order)?;
    let mut records = vec![];
    let mut push = |kind: &str, degree: Q, value: Q| {
        records.push(Record { kind: kind.into(), degree, insertions: String::new(), value })
    };
    let agree = |a: &crate::series::Series<Q>, b: &crate::series::Series<Q>, what: &str| -> Result<String> {
        if a == b {
            Ok(format!("{what} agree"))
        } else {
            Err(Error::Check(format!("{what} differ")))
        }
    };
    let check = match what {
        OpenKind::Disk => {
            let a = om.disk_potential(true)?;
            let b = om.disk_potential(false)?;
            for k in (1..=2 * order + 1).step_by(2) {
                push("disk", qr(k as i64, 2), a.coeff(k).clone());
            }
            Outcome::run("graph sum equals closed form", || agree(&a, &b, "fixed-point and closed disk potentials"))
        }
        OpenKind::Annulus => {
            let a = om.annulus_graph_sum()?;
            let b = om.annulus_mirror()?;
            for d in 1..=order {
                push("annulus", q(d as i64), a.coeff(d).clone());
            }
            Outcome::run("graph sum equals mirror formula", || agree(&a, &b, "fixed-point and mirror annulus series"))
        }
        OpenKind::Klein => {
            let a = om.klein_collapsed()?;
            let b = om.klein_mirror()?;
            for d in 1..=order {
                push("klein", q(d as i64), a.coeff(d).clone());
            }
            Outcome::run("graph sum equals mirror formula", || agree(&a, &b, "fixed-point and mirror Klein bottle series"))
        }
    };
    Ok(Report { model: m.clone(), records, checks: vec![check] })
}

fn applicable(m: &ModelSpec) -> Vec<Suite> {
    let mut out = vec![];
    if m.nu() > 0 {
        out.push(Suite::Coeffs);
    }
    out.extend([Suite::Hypergeom, Suite::Closed, Suite::Equivariant]);
    if m.is_cy() && m.n == m.l() + 4 {
        out.push(Suite::Open);
    }
    out
}

fn coeffs_suite(m: &ModelSpec, d_max: usize) -> Vec<Outcome> {
    vec![
        Outcome::run("convolution identity", || Ok(format!("{} cases", check_convolution(m, d_max)?))),
        Outcome::run("reflection identity", || Ok(format!("{} cases", check_reflection(m, d_max)?))),
        Outcome::run("degree one characterization", || {
            let p_max = m.top() + m.nu().max(0) as usize;
            let table = CoeffTable::build(m, p_max, p_max, 1)?;
            ok(check_ctilde_d1(&table, p_max))
        }),
    ]
}

fn hypergeom_suite(m: &ModelSpec, order: usize) -> Vec<Outcome> {
    let mut out = vec![Outcome::run("mirror map derivative", || ok(check_j_derivative(m, order)))];
    if m.is_cy() {
        out.push(Outcome::run("I symmetry", || ok(check_i_symmetry(m, order))));
        out.push(Outcome::run("iterated derivative identity", || ok(check_iterated_derivative(m, order))));
    }
    out
}

fn closed_suite(m: &ModelSpec, d_max: usize) -> Vec<Outcome> {
    let mut out = vec![Outcome::run("two-point divisibility", || {
        let b = bracket(m, d_max, Nu1Prefactor::Factorial)?;
        check_divisibility(&b)?;
        Ok(format!("{} coefficients", b.len()))
    })];
    out.push(Outcome::run("fundamental class axiom", || ok(TwoPointSeries::build(m, d_max)?.check_unit_axiom())));
    if m.is_cy() && m.top() >= 2 {
        out.push(Outcome::run("BPS integrality", || {
            let top = m.top();
            for b1 in 1..top - 1 {
                let n = bps_from_gw(&primary_via_mirror(m, b1, top - 1 - b1, d_max)?);
                if let Some(i) = n.iter().position(|v| !v.is_integer()) {
                    return Err(Error::Check(format!("({}) degree {} gives {}", hyperplane_pair(b1, top - 1 - b1), i + 1, n[i])));
                }
            }
            Ok(format!("degrees 1..={d_max}"))
        }));
    }
    out
}

fn failed(name: &str, e: Error) -> Vec<Outcome> {
    vec![Outcome { name: name.into(), passed: false, detail: e.to_string() }]
}

fn verify(m: &ModelSpec, suites: &[Suite], c: &Common) -> Result<Report> {
    let mode = c.weight_mode()?;
    let mut suites = if suites.is_empty() { applicable(m) } else { suites.to_vec() };
    suites.sort();
    suites.dedup();
    let mut checks = vec![];
    for s in suites {
        let outcomes = match s {
            Suite::Coeffs => coeffs_suite(m, c.dmax),
            Suite::Hypergeom => hypergeom_suite(m, c.qorder),
            Suite::Closed => closed_suite(m, c.dmax),
            Suite::Equivariant => match equivariant_weights_for(m, &mode, c.dmax)
                .and_then(|w| Equivariant::new(m, &w, c.dmax))
            {
                Ok(eq) => eq.suite(c.zorder),
                Err(e) => failed("equivariant setup", e),
            },
            Suite::Open => match open_weights_for(m, &mode).and_then(|w| OpenModel::new(m, &w, c.dmax)) {
                Ok(om) => om.suite(),
                Err(e) => failed("open sector setup", e),
            },
        };
        let tag = format!("{s:?}").to_lowercase();
        checks.extend(outcomes.into_iter().map(|o| Outcome { name: format!("{tag}: {}", o.name), ..o }));
    }
    Ok(Report { model: m.clone(), records: vec![], checks })
}

/// Computes the report for a configuration without writing anything.
pub fn run(config: &RunConfig) -> Result<Report> {
    let c = &config.common;
    let m = ModelSpec::parse(&c.model)?;
    match &config.command {
        Command::Bps { insertions } => bps(&m, insertions, c.dmax),
        Command::Descendants { insertions } => descendants(&m, insertions.as_deref(), c.dmax),
        Command::Open { what } => open(&m, *what, &c.weight_mode()?, c.dmax),
        Command::Verify { suite } => verify(&m, suite, c),
    }
}

fn command_name(c: &Command) -> String {
    match c {
        Command::Bps { .. } => "bps".into(),
        Command::Descendants { .. } => "descendants".into(),
        Command::Open { what } => format!("open-{}", format!("{what:?}").to_lowercase()),
        Command::Verify { .. } => "verify".into(),
    }
}

/// Where the artifact goes: `--output`, else a file under $MIRRORGW_OUTPUT_DIR, else stdout.
pub fn output_path(config: &RunConfig) -> Option<PathBuf> {
    if let Some(p) = &config.common.output {
        return Some(p.clone());
    }
    let dir = std::env::var_os(OUTPUT_DIR_VAR)?;
    let slug: String = config
        .common
        .model
        .chars()
        .map(|ch| if ch.is_ascii_alphanumeric() { ch } else { '_' })
        .collect();
    let ext = match config.common.format {
        Format::Json => "json",
        Format::Csv => "csv",
    };
    Some(Path::new(&dir).join(format!("{}-{slug}.{ext}", command_name(&config.command))))
}

/// Writes through a temporary file in the target directory and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Invalid(_) => "invalid_input",
        Error::Degenerate(_) => "degenerate_weights",
        Error::Check(_) => "check_failed",
        _ => "arithmetic",
    }
}

/// Runs a configuration end to end and returns the process exit code:
/// 0 when every check passes, 1 when a check fails, 2 on invalid input.
pub fn main_with(config: &RunConfig) -> i32 {
    let report = match run(config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{}", json!({"error": {"kind": error_kind(&e), "message": e.to_string()}}));
            return 2;
        }
    };
    let text = report.render(config.common.format);
    match output_path(config) {
        Some(p) => {
            if let Err(e) = write_atomic(&p, &text) {
                eprintln!("{}", json!({"error": {"kind": "io", "message": format!("{}: {e}", p.display())}}));
                return 2;
            }
        }
        None => print!("{text}"),
    }
    if config.common.format == Format::Csv {
        for c in &report.checks {
            eprintln!("{}", c.line());
        }
    }
    if report.passed() {
        0
    } else {
        for c in report.checks.iter().filter(|c| !c.passed) {
            eprintln!("{}", c.line());
        }
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(args: &[&str]) -> RunConfig {
        RunConfig::try_parse_from(std::iter::once("mirrorgw").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn weight_modes() {
        assert_eq!(config(&["verify"]).common.weight_mode().unwrap(), WeightMode::Default);
        assert_eq!(config(&["verify", "--seed", "4"]).common.weight_mode().unwrap(), WeightMode::Random(4));
        assert_eq!(
            config(&["verify", "--weights", "1,-1/2"]).common.weight_mode().unwrap(),
            WeightMode::Explicit(vec![q(1), qr(-1, 2)])
        );
        assert!(config(&["verify", "--weights", "1,x"]).common.weight_mode().is_err());
    }

    #[test]
    fn suites_parse_as_a_list() {
        match config(&["verify", "--suite", "coeffs,open"]).command {
            Command::Verify { suite } => assert_eq!(suite, vec![Suite::Coeffs, Suite::Open]),
            _ => unreachable!(),
        }
    }

    #[test]
    fn quintic_bps_records() {
        let r = run(&config(&["bps", "--model", "n=5;a=5", "--insertions", "1,1", "--dmax", "2"])).unwrap();
        let bps: Vec<String> = r.records.iter().filter(|r| r.kind == "bps").map(|r| fmt_q(&r.value)).collect();
        // d^2 times the classical line and conic counts
        assert_eq!(bps, ["2875", "2437000"]);
        assert!(r.passed());
    }

    #[test]
    fn csv_and_json_carry_the_same_records() {
        let r = run(&config(&["descendants", "--model", "n=4;a=2", "--dmax", "2"])).unwrap();
        let csv = r.to_csv();
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        let rows: Vec<Vec<String>> = csv::Reader::from_reader(csv.as_bytes())
            .records()
            .map(|x| x.unwrap().iter().map(String::from).collect())
            .collect();
        let from_json: Vec<Vec<String>> = json["records"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| ["kind", "degree", "insertions", "value"].iter().map(|k| x[k].as_str().unwrap().to_string()).collect())
            .collect();
        assert!(!rows.is_empty());
        assert_eq!(rows, from_json);
    }

    #[test]
    fn bad_input_is_rejected() {
        assert!(run(&config(&["bps", "--model", "n=5;a=6", "--insertions", "1,1"])).is_err());
        assert!(run(&config(&["bps", "--model", "n=5;a=5", "--insertions", "1"])).is_err());
        assert!(run(&config(&["open", "--model", "n=7;a=7", "--what", "disk"])).is_err());
    }

    #[test]
    fn atomic_write_replaces_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.json");
        write_atomic(&p, "one").unwrap();
        write_atomic(&p, "two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
