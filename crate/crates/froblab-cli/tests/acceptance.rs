//! Acceptance run: criteria 1–9 on n ∈ {2, 3}, τ ∈ {0.3+1.2i, 2i}, seeds 7, 11, 13,
//! followed by the command-line contract.
//!
//! Every point goes through `froblab verify --suite all --no-timestamp`; the
//! criterion tolerances below are applied to the residuals in the written
//! reports, independently of the per-claim defaults. One line per criterion,
//! then the failing claims. Exit status is nonzero if anything fails.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_froblab");
const NS: [usize; 2] = [2, 3];
const TAUS: [&str; 2] = ["0.3+1.2i", "0+2i"];
const SEEDS: [u64; 3] = [7, 11, 13];
const BUDGET_SECS: f64 = 120.0;

struct Criterion {
    number: usize,
    title: &'static str,
    /// (claim id or id prefix ending in '[', tolerance)
    claims: &'static [(&'static str, f64)],
    only_n: Option<usize>,
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        number: 1,
        title: "elliptic layer",
        claims: &[
            ("elliptic/theta-quasi-period", 1e-10),
            ("elliptic/wp-periodicity", 1e-10),
            ("elliptic/theta-modular-s", 1e-10),
            ("elliptic/theta-modular-t", 1e-10),
            ("elliptic/wp-laurent-constant", 1e-10),
            ("elliptic/g1-dedekind", 1e-12),
        ],
        only_n: None,
    },
    Criterion {
        number: 2,
        title: "Jacobi forms",
        claims: &[
            ("forms/extraction-residual", 1e-8),
            ("forms/permutation-invariance", 1e-9),
            ("forms/translation-invariance", 1e-9),
            ("forms/weight-ladder", 1e-8),
            ("forms/index-euler", 1e-10),
        ],
        only_n: None,
    },
    Criterion {
        number: 3,
        title: "flat coordinates",
        claims: &[("flat/tn-root", 1e-10), ("flat/t1-phi1", 1e-10), ("flat/big-t-roundtrip", 1e-8)],
        only_n: None,
    },
    Criterion {
        number: 4,
        title: "Saito metric",
        claims: &[
            ("saito/closed-form", 1e-7),
            ("saito/t-constancy", 1e-7),
            ("saito/t0-tau", 1e-9),
            ("saito/t1-vex", 1e-9),
            ("saito/antidiagonal", 1e-7),
        ],
        only_n: None,
    },
    Criterion {
        number: 5,
        title: "flat pencil",
        claims: &[
            ("flatness/curvature-g", 1e-5),
            ("flatness/curvature-eta", 1e-5),
            ("flatness/curvature-pencil[", 1e-5),
            ("flatness/t0-linear-metric", 1e-6),
            ("flatness/t0-linear-christoffel", 1e-6),
        ],
        only_n: None,
    },
    Criterion {
        number: 6,
        title: "canonical structure",
        claims: &[
            ("canon/critical-count", 1e-6),
            ("canon/g-diagonal", 1e-6),
            ("canon/g-ratio", 1e-6),
            ("canon/eigenvalues", 1e-6),
            // residual is 1/min|u_i − u_j| relative to max|u_i|
            ("canon/distinct-values", 1e6),
        ],
        only_n: None,
    },
    Criterion {
        number: 7,
        title: "WDVV",
        claims: &[
            ("wdvv/symmetry", 1e-7),
            ("wdvv/unit", 1e-7),
            ("wdvv/euler", 1e-6),
            ("wdvv/associativity", 1e-6),
            ("wdvv/potential", 1e-5),
        ],
        only_n: None,
    },
    Criterion {
        number: 8,
        title: "Darboux–Egoroff",
        claims: &[("egoroff/rotation", 1e-5), ("egoroff/sum", 1e-5)],
        only_n: Some(2),
    },
];

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn froblab(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("FROBLAB_FIXTURES", workspace().join("fixtures"))
        .output()
        .expect("froblab binary runs")
}

struct Run {
    n: usize,
    tau: &'static str,
    seed: u64,
    bytes: Vec<u8>,
    report: Value,
}

impl Run {
    fn label(&self) -> String {
        format!("n={} τ={} seed {}", self.n, self.tau, self.seed)
    }
}

fn verify(n: usize, tau: &'static str, seed: u64, out: &Path) -> Run {
    let o = froblab(&[
        "verify", "--suite", "all", "--n", &n.to_string(), "--tau", tau, "--seed", &seed.to_string(),
        "--no-timestamp", "--out", out.to_str().unwrap(),
    ]);
    let code = o.status.code();
    assert!(matches!(code, Some(0 | 1)), "verify {n} {tau} {seed}: exit {code:?}: {}", String::from_utf8_lossy(&o.stderr));
    let bytes = std::fs::read(out).expect("report written");
    let report = serde_json::from_slice(&bytes).expect("report parses");
    Run { n, tau, seed, bytes, report }
}

fn residual(c: &Value) -> f64 {
    // non-finite residuals serialize as null
    c["residual"].as_f64().unwrap_or(f64::INFINITY)
}

struct Outcome {
    pass: bool,
    line: String,
    details: Vec<String>,
}

fn judge(crit: &Criterion, runs: &[Run]) -> Outcome {
    let mut checked = 0;
    let mut worst: Option<(f64, String, f64, String)> = None;
    let mut details = Vec::new();
    for run in runs.iter().filter(|r| crit.only_n.map_or(true, |n| n == r.n)) {
        let claims = run.report["claims"].as_array().expect("claims array");
        for &(id, tol) in crit.claims {
            let matching: Vec<&Value> = claims
                .iter()
                .filter(|c| {
                    let cid = c["id"].as_str().unwrap_or("");
                    if id.ends_with('[') { cid.starts_with(id) } else { cid == id }
                })
                .collect();
            if matching.is_empty() {
                details.push(format!("  {id}: missing at {}", run.label()));
                worst = Some((f64::INFINITY, id.to_string(), tol, run.label()));
                continue;
            }
            for c in matching {
                checked += 1;
                let r = residual(c);
                let cid = c["id"].as_str().unwrap_or(id).to_string();
                if !(r < tol) {
                    let note = c["note"].as_str().map(|s| format!(" ({s})")).unwrap_or_default();
                    details.push(format!("  {cid} = {r:.3e} > {tol:.0e} at {}{note}", run.label()));
                }
                let ratio = r / tol;
                if worst.as_ref().map_or(true, |w| !(w.0 / w.2 >= ratio)) {
                    worst = Some((r, cid, tol, run.label()));
                }
            }
        }
    }
    let pass = details.is_empty() && checked > 0;
    let (r, id, tol, at) = worst.unwrap_or((f64::NAN, "-".into(), f64::NAN, "-".into()));
    Outcome {
        pass,
        line: format!(
            "criterion {} {}  {:<20} {checked:>3} checks, worst {id} = {r:.2e} (tol {tol:.0e}) at {at}",
            crit.number,
            if pass { "PASS" } else { "FAIL" },
            crit.title
        ),
        details,
    }
}

/// Recorded constants agree with the frozen values in fixtures/derived.json.
fn derived_constants(runs: &[Run]) -> Vec<String> {
    let text = std::fs::read_to_string(workspace().join("fixtures/derived.json")).expect("derived fixtures");
    let d: Value = serde_json::from_str(&text).unwrap();
    let mut bad = Vec::new();
    let c64 = |v: &Value| (v[0].as_f64().unwrap_or(f64::NAN), v[1].as_f64().unwrap_or(f64::NAN));
    let dist = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    for run in runs {
        let m = &run.report["measured_constants"];
        for e in d["eta_antidiagonal"].as_array().unwrap() {
            if e["n"].as_u64() == Some(run.n as u64) {
                let got = c64(&m["eta_antidiagonal"]["value"]);
                if !(dist(got, c64(&e["value"])) < e["abs_tol"].as_f64().unwrap()) || m["eta_antidiagonal"]["index_sum"] != e["index_sum"] {
                    bad.push(format!("  η antidiagonal {got:?} at {}", run.label()));
                }
            }
        }
        for e in d["critical_count"].as_array().unwrap() {
            if e["n"].as_u64() == Some(run.n as u64) && m["critical_count"] != e["count"] {
                bad.push(format!("  critical count {} at {}", m["critical_count"], run.label()));
            }
        }
        let k = &d["eta_canonical_scale"];
        let got = c64(&m["eta_canonical_scale"]);
        if !(dist(got, c64(&k["value"])) < k["abs_tol"].as_f64().unwrap()) {
            bad.push(format!("  canonical scale {got:?} at {}", run.label()));
        }
    }
    bad
}

/// The command-line contract: exit codes, guards, tables, frozen forms output.
fn cli_contract(dir: &Path) -> Vec<(String, bool)> {
    let mut out = Vec::new();
    let mut check = |name: &str, ok: bool| out.push((name.to_string(), ok));

    let o = froblab(&["forms", "--n", "1"]);
    check("forms --n 1 exits 2 with \"n ≥ 2 required\"", o.status.code() == Some(2) && String::from_utf8_lossy(&o.stderr).contains("n ≥ 2 required"));

    let o = froblab(&["verify", "--suite", "all", "--tau", "0+0.000001i"]);
    check("verify --tau 0+0.000001i exits 2", o.status.code() == Some(2) && o.stdout.is_empty());

    let bad = dir.join("malformed.json");
    std::fs::write(&bad, "{\"n\": 2, \"u\": [0.1,").unwrap();
    let o = froblab(&["forms", "--point", bad.to_str().unwrap()]);
    check("forms --point <malformed> exits 2", o.status.code() == Some(2));

    let o = froblab(&["verify", "--suite", "nonsense"]);
    check("verify --suite nonsense exits 2", o.status.code() == Some(2));

    let o = froblab(&["verify", "--suite", "elliptic", "--n", "2", "--seed", "7", "--no-timestamp"]);
    check("verify --suite elliptic --n 2 --seed 7 exits 0", o.status.code() == Some(0));

    let o = froblab(&["verify", "--suite", "wdvv", "--n", "3", "--seed", "11", "--no-timestamp"]);
    let ok = serde_json::from_slice::<Value>(&o.stdout).ok().and_then(|r| {
        r["claims"].as_array()?.iter().find(|c| c["id"] == "wdvv/associativity").and_then(|c| c["residual"].as_f64())
    });
    check("verify --suite wdvv --n 3 --seed 11 reports associativity < 1e-6", o.status.code() == Some(0) && ok.is_some_and(|r| r < 1e-6));

    let o = froblab(&["forms", "--n", "2", "--tau", "0+1.2i", "--seed", "7"]);
    let frozen: Value = serde_json::from_str(&std::fs::read_to_string(workspace().join("fixtures/derived.json")).unwrap()).unwrap();
    let ok = serde_json::from_slice::<Value>(&o.stdout).ok().is_some_and(|f| {
        let want = &frozen["forms"][0];
        let tol = want["abs_tol"].as_f64().unwrap();
        f["extraction_residual"].as_f64().is_some_and(|r| r < 1e-8)
            && f["phi"].as_array().is_some_and(|phi| {
                phi.len() == 3
                    && phi.iter().zip(want["phi"].as_array().unwrap()).all(|(a, b)| {
                        let d = (a[0].as_f64().unwrap() - b[0].as_f64().unwrap()).hypot(a[1].as_f64().unwrap() - b[1].as_f64().unwrap());
                        d < tol
                    })
            })
    });
    check("forms --n 2 --tau 0+1.2i --seed 7 matches the frozen φ values", o.status.code() == Some(0) && ok);

    let o = froblab(&["table", "eta", "--chart", "t"]);
    let ok = serde_json::from_slice::<Value>(&o.stdout).ok().is_some_and(|t| {
        let labels = t["labels"].as_array().unwrap();
        let i = labels.iter().position(|l| l == "t0").unwrap();
        let j = labels.iter().position(|l| l == "tau").unwrap();
        let e = &t["matrix"][i][j];
        e[0].as_f64().unwrap().abs() < 1e-9 && (e[1].as_f64().unwrap() + 2.0 * std::f64::consts::PI).abs() < 1e-9
    });
    check("table eta --chart t has η(dt⁰, dτ) = −2πi", o.status.code() == Some(0) && ok);

    let o = froblab(&["table", "canonical", "--n", "3"]);
    let ok = serde_json::from_slice::<Value>(&o.stdout).ok().is_some_and(|t| t["rows"].as_array().is_some_and(|r| r.len() == 6));
    check("table canonical --n 3 has n+3 rows", o.status.code() == Some(0) && ok);

    let o = froblab(&["table", "g", "--chart", "v", "--format", "csv"]);
    let text = String::from_utf8_lossy(&o.stdout);
    let entry = |r: &str, c: &str| {
        text.lines()
            .find(|l| l.starts_with(&format!("{r},{c},")))
            .and_then(|l| l.split(',').nth(2)?.parse::<f64>().ok())
    };
    let ok = entry("v0", "v0") == Some(1.0 - 1.0 / 3.0)
        && entry("v0", "v1") == Some(-1.0 / 3.0)
        && entry("v_ex", "v_ex") == Some(-1.0 / 6.0)
        && entry("u", "tau") == Some(1.0);
    check("table g --chart v is the constant intersection form", o.status.code() == Some(0) && ok);

    out
}

fn main() {
    let start = Instant::now();
    let dir = std::env::temp_dir().join(format!("froblab-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();

    let mut runs = Vec::new();
    for n in NS {
        for tau in TAUS {
            for seed in SEEDS {
                let out = dir.join(format!("report-{n}-{seed}-{}.json", tau.replace(['+', '.'], "_")));
                runs.push(verify(n, tau, seed, &out));
            }
        }
    }

    let mut all_pass = true;
    let mut lines = Vec::new();
    let mut details = Vec::new();
    for crit in CRITERIA {
        let o = judge(crit, &runs);
        all_pass &= o.pass;
        lines.push(o.line);
        if !o.details.is_empty() {
            details.push(format!("criterion {}:", crit.number));
            details.extend(o.details);
        }
    }

    // 9: repeat two runs and compare bytes
    let mut mismatched = Vec::new();
    for idx in [0, runs.len() - 1] {
        let r = &runs[idx];
        let again = verify(r.n, r.tau, r.seed, &dir.join(format!("repeat-{idx}.json")));
        if again.bytes != r.bytes {
            mismatched.push(r.label());
        }
    }
    let pass9 = mismatched.is_empty();
    all_pass &= pass9;
    lines.push(format!(
        "criterion 9 {}  {:<20}   2 repeated runs, {}",
        if pass9 { "PASS" } else { "FAIL" },
        "determinism",
        if pass9 { "byte-identical reports".to_string() } else { format!("differ at {}", mismatched.join("; ")) }
    ));

    let elapsed = start.elapsed().as_secs_f64();
    println!();
    println!("acceptance: {} points (n ∈ {NS:?}, τ ∈ {TAUS:?}, seeds {SEEDS:?})", runs.len());
    for l in &lines {
        println!("{l}");
    }
    let in_budget = elapsed < BUDGET_SECS;
    println!("time {elapsed:.1}s for {} verify runs, budget {BUDGET_SECS}s: {}", runs.len() + 2, if in_budget { "PASS" } else { "FAIL" });
    all_pass &= in_budget;

    let bad = derived_constants(&runs);
    println!("frozen derived constants: {}", if bad.is_empty() { "PASS" } else { "FAIL" });
    all_pass &= bad.is_empty();

    println!("command-line contract:");
    for (name, ok) in cli_contract(&dir) {
        println!("  {}  {name}", if ok { "PASS" } else { "FAIL" });
        all_pass &= ok;
    }

    if !details.is_empty() || !bad.is_empty() {
        println!("failing checks:");
        for d in details.iter().chain(&bad) {
            println!("{d}");
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    if !all_pass {
        println!("acceptance: FAIL");
        std::process::exit(1);
    }
    println!("acceptance: PASS");
}
