//! `froblab`: Jacobi forms, metric tables and certification reports at a point
//! of the Ã_n orbit space.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use froblab::certify::{self, CertificationReport, Suite, Tolerances};
use froblab::elliptic::ModularParameter;
use froblab::frobenius;
use froblab::geometry::{self, ChartLabel, ChartOptions, SaitoMethod};
use froblab::orbitspace::{self, ExtractOptions, OrbitPoint};

/// Smallest Im τ accepted on the command line.
const MIN_IM_TAU: f64 = 0.3;

#[derive(Parser, Debug)]
#[command(name = "froblab", version, about = "Frobenius structure on the J(Ã_n) orbit space")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Jacobi forms φ₀..φ_n at the point
    Forms(Common),
    /// Run a claim suite and write a certification report
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        #[command(flatten)]
        common: Common,
    },
    /// Print one matrix or vector
    Table {
        what: TableKind,
        #[arg(long, default_value = "t")]
        chart: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TableKind {
    Flatcoords,
    Eta,
    G,
    Canonical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct Common {
    /// RunConfig JSON; command-line flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<i64>,
    /// τ as a literal like 0.3+1.2i
    #[arg(long, allow_hyphen_values = true)]
    tau: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    delta: Option<f64>,
    /// point file with fields n, u, v, v_ex, tau
    #[arg(long)]
    point: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum PointSource {
    File { path: PathBuf },
    Seeded { seed: u64, delta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct ContourConfig {
    default_radius_factor: f64,
    min_samples: usize,
}

impl Default for ContourConfig {
    fn default() -> Self {
        let e = ExtractOptions::default();
        Self {
            default_radius_factor: e.radius_factor,
            min_samples: e.min_samples,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct RunConfig {
    n: i64,
    tau: C64,
    point_source: PointSource,
    contour: ContourConfig,
    tolerances: BTreeMap<String, f64>,
    output: Option<PathBuf>,
    format: Format,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 2,
            tau: C64::new(0.0, 1.2),
            point_source: PointSource::Seeded {
                seed: 7,
                delta: orbitspace::DEFAULT_DELTA,
            },
            contour: ContourConfig::default(),
            tolerances: BTreeMap::new(),
            output: None,
            format: Format::Json,
        }
    }
}

/// Exit 2: the input is unusable. Exit 1: a computation failed or a claim failed.
enum Failure {
    Input(String),
    Numeric(String),
}

fn parse_complex(s: &str) -> Result<C64, String> {
    let bad = || format!("cannot parse {s:?} as a complex literal like 0.3+1.2i");
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let Some(body) = t.strip_suffix('i') else {
        return t.parse::<f64>().map(|re| C64::new(re, 0.0)).map_err(|_| bad());
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => "1",
        "-" => "-1",
        other => other,
    };
    let re: f64 = re.parse().map_err(|_| bad())?;
    let im: f64 = im.trim_start_matches('+').parse().map_err(|_| bad())?;
    if !re.is_finite() || !im.is_finite() {
        return Err(bad());
    }
    Ok(C64::new(re, im))
}

impl RunConfig {
    fn resolve(c: &Common) -> Result<Self, Failure> {
        let mut cfg = match &c.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(n) = c.n {
            cfg.n = n;
        }
        if let Some(t) = &c.tau {
            cfg.tau = parse_complex(t).map_err(Failure::Input)?;
        }
        if let Some(path) = &c.point {
            cfg.point_source = PointSource::File { path: path.clone() };
        } else if c.seed.is_some() || c.delta.is_some() {
            let (seed0, delta0) = match cfg.point_source {
                PointSource::Seeded { seed, delta } => (seed, delta),
                PointSource::File { .. } => (7, orbitspace::DEFAULT_DELTA),
            };
            cfg.point_source = PointSource::Seeded {
                seed: c.seed.unwrap_or(seed0),
                delta: c.delta.unwrap_or(delta0),
            };
        }
        if let Some(out) = &c.out {
            cfg.output = Some(out.clone());
        }
        if let Some(f) = c.format {
            cfg.format = f;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), Failure> {
        if self.n < 2 {
            return Err(Failure::Input("n ≥ 2 required".into()));
        }
        if let PointSource::Seeded { delta, .. } = self.point_source {
            if !(delta > 0.0 && delta < 0.5) {
                return Err(Failure::Input(format!("delta must lie in (0, 0.5), got {delta}")));
            }
        }
        if !(self.contour.default_radius_factor > 0.0 && self.contour.default_radius_factor < 1.0) || self.contour.min_samples < 8 {
            return Err(Failure::Input("contour: radius factor in (0, 1) and at least 8 samples required".into()));
        }
        if let Some((k, v)) = self.tolerances.iter().find(|(_, v)| !(**v > 0.0)) {
            return Err(Failure::Input(format!("tolerance {k} must be positive, got {v}")));
        }
        Ok(())
    }

    fn point(&self) -> Result<OrbitPoint, Failure> {
        let p = match &self.point_source {
            PointSource::File { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
                serde_json::from_str::<OrbitPoint>(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?
            }
            PointSource::Seeded { seed, delta } => {
                let tau = self.modular()?;
                orbitspace::seeded_point(self.n as usize, tau, *seed, *delta).map_err(|e| Failure::Numeric(e.to_string()))?
            }
        };
        if p.n() < 2 {
            return Err(Failure::Input("n ≥ 2 required".into()));
        }
        check_tau(p.tau.tau())?;
        Ok(p)
    }

    fn modular(&self) -> Result<ModularParameter, Failure> {
        check_tau(self.tau)?;
        ModularParameter::new(self.tau).map_err(|e| Failure::Input(e.to_string()))
    }

    fn extract_options(&self) -> ExtractOptions {
        ExtractOptions {
            radius_factor: self.contour.default_radius_factor,
            min_samples: self.contour.min_samples,
        }
    }
}

fn check_tau(tau: C64) -> Result<(), Failure> {
    if tau.im < MIN_IM_TAU {
        return Err(Failure::Input(format!("Im τ = {} is below the supported bound {MIN_IM_TAU}", tau.im)));
    }
    Ok(())
}

fn pair(z: C64) -> serde_json::Value {
    json!([z.re, z.im])
}

fn emit(cfg: &RunConfig, text: &str) -> Result<(), Failure> {
    match &cfg.output {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report values serialize");
    s.push('\n');
    s
}

fn cmd_forms(c: &Common) -> Result<(), Failure> {
    let cfg = RunConfig::resolve(c)?;
    let p = cfg.point()?;
    let f = orbitspace::extract_with(&p, &cfg.extract_options()).map_err(|e| Failure::Numeric(e.to_string()))?;
    let text = match cfg.format {
        Format::Json => to_json(&json!({
            "point": p,
            "phi": f.phi.iter().map(|z| pair(*z)).collect::<Vec<_>>(),
            "weights": f.weights,
            "index": f.index,
            "extraction_residual": f.extraction_residual,
            "laurent_consistency": f.laurent_consistency,
            "cond_estimate": f.cond_estimate,
        })),
        Format::Csv => {
            let mut s = String::from("k,weight,re,im\n");
            for (k, (z, w)) in f.phi.iter().zip(&f.weights).enumerate() {
                let _ = writeln!(s, "{k},{w},{:?},{:?}", z.re, z.im);
            }
            let _ = writeln!(s, "# extraction_residual,{:?}", f.extraction_residual);
            s
        }
    };
    emit(&cfg, &text)
}

fn report_csv(r: &CertificationReport) -> String {
    let mut s = String::from("id,chart,residual,tol,pass,anchor,note\n");
    let quote = |t: &str| format!("\"{}\"", t.replace('"', "\"\""));
    for c in &r.claims {
        let _ = writeln!(
            s,
            "{},{},{:?},{:?},{},{},{}",
            c.id,
            c.chart.as_deref().unwrap_or(""),
            c.residual,
            c.tol,
            c.pass,
            quote(&c.paper_anchor),
            quote(c.note.as_deref().unwrap_or(""))
        );
    }
    s
}

fn cmd_verify(suite: &str, c: &Common) -> Result<(), Failure> {
    let suite: Suite = suite.parse().map_err(|e: certify::CertifyError| Failure::Input(e.to_string()))?;
    let cfg = RunConfig::resolve(c)?;
    let p = cfg.point()?;
    let tol = Tolerances::default().with(&cfg.tolerances);
    let fixtures = certify::load_fixtures(&certify::fixture_dir().join("elliptic.json"));
    if let Err(e) = &fixtures {
        eprintln!("warning: {e}; fixture claims will fail");
    }
    let mut report = certify::certify(&p, suite, &tol, fixtures.as_deref().ok());
    if !c.no_timestamp {
        report.timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs());
    }
    let text = match cfg.format {
        Format::Json => to_json(&report),
        Format::Csv => report_csv(&report),
    };
    if cfg.output.is_some() {
        emit(&cfg, &text)?;
        for claim in &report.claims {
            println!(
                "{:<4}  {:<38} {:>10.3e}  tol {:.0e}  {}",
                if claim.pass { "PASS" } else { "FAIL" },
                claim.id,
                claim.residual,
                claim.tol,
                claim.paper_anchor
            );
        }
    } else {
        print!("{text}");
    }
    let failed = report.failures().count();
    if failed > 0 {
        return Err(Failure::Numeric(format!("{failed} of {} claims failed", report.claims.len())));
    }
    Ok(())
}

fn parse_chart(s: &str) -> Result<ChartLabel, Failure> {
    match s {
        "v" => Ok(ChartLabel::VChart),
        "phi" => Ok(ChartLabel::PhiChart),
        "t" => Ok(ChartLabel::TChart),
        other => Err(Failure::Input(format!("unknown chart {other:?} (expected v, phi or t)"))),
    }
}

fn matrix_output(format: Format, name: &str, chart: ChartLabel, labels: &[String], m: &froblab::linalg::CMat) -> String {
    match format {
        Format::Json => {
            let rows: Vec<Vec<serde_json::Value>> =
                (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| pair(m[(i, j)])).collect()).collect();
            to_json(&json!({ "table": name, "chart": chart.short(), "labels": labels, "matrix": rows }))
        }
        Format::Csv => {
            let mut s = String::from("row,col,re,im\n");
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    let z = m[(i, j)];
                    let _ = writeln!(s, "{},{},{:?},{:?}", labels[i], labels[j], z.re, z.im);
                }
            }
            s
        }
    }
}

fn cmd_table(what: TableKind, chart: &str, c: &Common) -> Result<(), Failure> {
    let chart = parse_chart(chart)?;
    let cfg = RunConfig::resolve(c)?;
    let p = cfg.point()?;
    let n = p.n();
    let num = |e: &dyn std::fmt::Display| Failure::Numeric(e.to_string());
    let labels = chart.coordinate_names(n);
    let text = match what {
        TableKind::Flatcoords => {
            let cd = geometry::chart_data(&p, None, false, &ChartOptions::default()).map_err(|e| num(&e))?;
            let vals = cd.coords(chart);
            match cfg.format {
                Format::Json => to_json(&json!({
                    "table": "flatcoords",
                    "chart": chart.short(),
                    "labels": labels,
                    "values": vals.iter().map(|z| pair(*z)).collect::<Vec<_>>(),
                })),
                Format::Csv => {
                    let mut s = String::from("coord,re,im\n");
                    for (l, z) in labels.iter().zip(&vals) {
                        let _ = writeln!(s, "{l},{:?},{:?}", z.re, z.im);
                    }
                    s
                }
            }
        }
        TableKind::Eta => {
            let m = geometry::saito_metric(&p, chart, SaitoMethod::Directional).map_err(|e| num(&e))?;
            matrix_output(cfg.format, "eta", chart, &labels, &m.mat)
        }
        TableKind::G => {
            let m = if chart == ChartLabel::VChart {
                geometry::intersection_form_v(n)
            } else {
                let cd = geometry::chart_data(&p, None, false, &ChartOptions::default()).map_err(|e| num(&e))?;
                geometry::intersection_form(&cd, chart).map_err(|e| num(&e))?
            };
            matrix_output(cfg.format, "g", chart, &labels, &m.mat)
        }
        TableKind::Canonical => {
            let cd = frobenius::critical_points(&p).map_err(|e| num(&e))?;
            match cfg.format {
                Format::Json => {
                    let rows: Vec<serde_json::Value> = (0..cd.count)
                        .map(|i| json!({ "q": pair(cd.q[i]), "u": pair(cd.u_vals[i]), "lambda2": pair(cd.second_derivs[i]) }))
                        .collect();
                    to_json(&json!({ "table": "canonical", "count": cd.count, "rows": rows }))
                }
                Format::Csv => {
                    let mut s = String::from("i,q_re,q_im,u_re,u_im,lambda2_re,lambda2_im\n");
                    for i in 0..cd.count {
                        let (q, u, l) = (cd.q[i], cd.u_vals[i], cd.second_derivs[i]);
                        let _ = writeln!(s, "{i},{:?},{:?},{:?},{:?},{:?},{:?}", q.re, q.im, u.re, u.im, l.re, l.im);
                    }
                    s
                }
            }
        }
    };
    emit(&cfg, &text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Command::Forms(c) => cmd_forms(c),
        Command::Verify { suite, common } => cmd_verify(suite, common),
        Command::Table { what, chart, common } => cmd_table(*what, chart, common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_literals() {
        assert_eq!(parse_complex("0+1.2i").unwrap(), C64::new(0.0, 1.2));
        assert_eq!(parse_complex("0.3+1.2i").unwrap(), C64::new(0.3, 1.2));
        assert_eq!(parse_complex("2i").unwrap(), C64::new(0.0, 2.0));
        assert_eq!(parse_complex("-0.5-2i").unwrap(), C64::new(-0.5, -2.0));
        assert_eq!(parse_complex("0+1e-6i").unwrap(), C64::new(0.0, 1e-6));
        assert_eq!(parse_complex("1.5").unwrap(), C64::new(1.5, 0.0));
        assert!(parse_complex("abc").is_err());
        assert!(parse_complex("1+xi").is_err());
    }

    #[test]
    fn config_round_trip() {
        let cfg = RunConfig::default();
        let s = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&s).unwrap(), cfg);
    }
}
