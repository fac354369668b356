//! Command line front end: reproducible, machine-readable runs of the
//! geometry pipeline. Every JSON artifact embeds the tool version, the
//! full configuration and the seed; identical configurations produce
//! byte-identical output.

use std::io::Read;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;
use serde_json::json;

use pfgeom::harness::{self, Method};
use pfgeom::netio::{self, NetworkCase};
use pfgeom::serialize::SsbPointDoc;
use pfgeom::slice::{sample_slice, SliceSpec};
use pfgeom_core::inversion::SplitMode;
use pfgeom_core::{curvature, invcalc, projection, spectrum, QuadraticMap, SsbPoint};

#[derive(Parser)]
#[command(name = "pfgeom", version, about = "Differential geometry of quadratic power flow maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Serialize, Clone)]
struct CommonOpts {
    /// Case file; `-` reads standard input.
    #[arg(long)]
    case: String,
    /// Input format of the case file.
    #[arg(long, default_value = "cdf", value_parser = ["cdf", "json"])]
    format: String,
    /// Seed for all randomized experiment inputs.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write primary output here instead of standard output.
    #[arg(long)]
    output: Option<String>,
}

#[derive(Subcommand, Serialize)]
enum Command {
    /// Parse a case and report its dimensions.
    Parse {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Locate boundary points along seeded random rays.
    Ssb {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// First-order geometry and regularity at a boundary point.
    Geom {
        #[command(flatten)]
        common: CommonOpts,
        /// Explicit boundary point as comma-separated coordinates.
        #[arg(long)]
        point: Option<String>,
    },
    /// Fundamental forms and principal curvatures at a boundary point.
    Curvature {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        point: Option<String>,
    },
    /// Invert a seeded power-space curve and report round-trip errors.
    Invert {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value = "kernel", value_parser = ["kernel", "kernel-linear", "normal"])]
        mode: String,
        #[arg(long, default_value_t = 1e-7)]
        step: f64,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Offset of the first sample from the boundary point.
        #[arg(long)]
        t0: Option<f64>,
        /// Also write per-step CSV (step, residual, round-trip distance).
        #[arg(long)]
        csv: Option<String>,
    },
    /// Orthogonally project a point (or trace a curve) onto the boundary.
    Project {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        point: Option<String>,
        /// Trace a seeded straight curve with this many samples.
        #[arg(long)]
        trace: Option<usize>,
    },
    /// Second-order jet of the local inverse at a regular point.
    Jet {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        point: Option<String>,
    },
    /// Time a single continuation step.
    Bench {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value = "both", value_parser = ["kernel", "normal", "both"])]
        mode: String,
    },
    /// Sample det DF and lambda0 on a 2-d affine slice (CSV).
    Slice {
        #[command(flatten)]
        common: CommonOpts,
        /// Slice origin, comma-separated; defaults to the flat profile.
        #[arg(long)]
        origin: Option<String>,
        /// First direction, comma-separated; seeded random if omitted.
        #[arg(long)]
        dir_a: Option<String>,
        /// Second direction, comma-separated; seeded random if omitted.
        #[arg(long)]
        dir_b: Option<String>,
        #[arg(long, default_value = "-2:2")]
        a_range: String,
        #[arg(long, default_value = "-2:2")]
        b_range: String,
        #[arg(long, default_value_t = 50)]
        na: usize,
        #[arg(long, default_value_t = 50)]
        nb: usize,
    },
}

/// Exit 1: a numerical routine failed. Exit 2: bad input.
enum CliError {
    Numerical(String),
    Input(String),
}

impl From<netio::NetError> for CliError {
    fn from(e: netio::NetError) -> Self {
        match e {
            netio::NetError::Core(inner) => CliError::Numerical(inner.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<pfgeom_core::Error> for CliError {
    fn from(e: pfgeom_core::Error) -> Self {
        CliError::Numerical(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Numerical(msg)) => {
            eprintln!("pfgeom: numerical failure: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Input(msg)) => {
            eprintln!("pfgeom: input error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_case(common: &CommonOpts) -> CliResult<NetworkCase> {
    let text = if common.case == "-" {
        let mut buf = String::new();
        std::io::stdin()
            .read_to_string(&mut buf)
            .map_err(|e| CliError::Input(format!("reading standard input: {e}")))?;
        buf
    } else {
        std::fs::read_to_string(&common.case)
            .map_err(|e| CliError::Input(format!("{}: {e}", common.case)))?
    };
    let case = match common.format.as_str() {
        "json" => netio::parse_native(&text)?,
        _ => netio::parse_cdf(&text)?,
    };
    Ok(case)
}

fn emit(common: &CommonOpts, text: &str) -> CliResult<()> {
    match &common.output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Input(format!("{path}: {e}"))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

/// Wraps a payload with the reproducibility envelope required of every
/// JSON artifact.
fn envelope(common: &CommonOpts, config: serde_json::Value, payload: serde_json::Value) -> String {
    let doc = json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "seed": common.seed,
        "config": config,
        "result": payload,
    });
    serde_json::to_string_pretty(&doc).expect("JSON output cannot fail")
}

fn parse_point(s: &str) -> CliResult<DVector<f64>> {
    let coords = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Input(format!("bad coordinate list {s:?}: {e}")))?;
    Ok(DVector::from_vec(coords))
}

fn parse_range(s: &str) -> CliResult<(f64, f64)> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 2 {
        return Err(CliError::Input(format!("bad range {s:?}, expected lo:hi")));
    }
    let lo = parts[0].parse().map_err(|e| CliError::Input(format!("bad range {s:?}: {e}")))?;
    let hi = parts[1].parse().map_err(|e| CliError::Input(format!("bad range {s:?}: {e}")))?;
    Ok((lo, hi))
}

/// A boundary point: either the user-supplied coordinates validated
/// against the membership test, or the first seeded ray hit.
fn boundary_point(
    map: &QuadraticMap,
    case: &NetworkCase,
    common: &CommonOpts,
    point: &Option<String>,
    label: u64,
) -> CliResult<SsbPoint> {
    match point {
        Some(s) => Ok(SsbPoint::at(map, parse_point(s)?)?),
        None => {
            let pts =
                harness::find_ssb_points(map, &harness::reduced_flat(case), 1, common.seed, label)?;
            Ok(pts.into_iter().next().expect("count = 1"))
        }
    }
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Parse { common } => {
            let case = load_case(&common)?;
            let payload = json!({
                "name": case.name,
                "base_mva": case.base_mva,
                "n_buses": case.n_buses(),
                "n_branches": case.branches.len(),
            });
            let config = json!({"command": "parse", "case": common.case, "format": common.format});
            emit(&common, &envelope(&common, config, payload))
        }
        Command::Ssb { common, count } => {
            let case = load_case(&common)?;
            let map = harness::network_map(&case)?;
            let pts = harness::find_ssb_points(
                &map,
                &harness::reduced_flat(&case),
                count,
                common.seed,
                1,
            )?;
            let docs: Vec<_> = pts
                .iter()
                .map(|p| serde_json::to_value(SsbPointDoc::of(p)).unwrap())
                .collect();
            let config = json!({"command": "ssb", "case": common.case, "format": common.format, "count": count});
            emit(&common, &envelope(&common, config, json!({ "points": docs })))
        }
        Command::Geom { common, point } => {
            let case = load_case(&common)?;
            let map = harness::network_map(&case)?;
            let q = boundary_point(&map, &case, &common, &point, 2)?;
            let reg = spectrum::regularity(&map, &q.q, 1e-6)?;
            let payload = json!({
                "point": serde_json::to_value(SsbPointDoc::of(&q)).unwrap(),
                "grad_lambda": vec_of(&q.grad_lambda),
                "kernel_dim": reg.kernel_dim,
                "is_regular": reg.is_regular,
                "tangent_dim": q.tangent_basis().ncols(),
            });
            let config = json!({"command": "geom", "case": common.case, "format": common.format, "point": point});
            emit(&common, &envelope(&common, config, payload))
        }
        Command::Curvature { common, point } => {
            let case = load_case(&common)?;
            let map = harness::network_map(&case)?;
            let q = boundary_point(&map, &case, &common, &point, 3)?;
            let (forms, _w) = curvature::weingarten_voltage(&map, &q)?;
            let principals = curvature::principal_curvatures(&forms)?;
            let kappas: Vec<f64> = principals.iter().map(|p| p.kappa).collect();
            let max_radius = kappas
                .iter()
                .filter(|k| **k > 0.0)
                .map(|k| 1.0 / k)
                .fold(f64::INFINITY, f64::min);
            let basis: Vec<Vec<f64>> = (0..forms.basis.ncols())
                .map(|j| vec_of(&forms.basis.column(j).clone_owned()))
                .collect();
            let payload = json!({
                "point": vec_of(&q.q),
                "principal_kappas": kappas,
                "max_radius_of_curvature": max_radius,
                "basis": basis,
            });
            let config = json!({"command": "curvature", "case": common.case, "format": common.format, "point": point});
            emit(&common, &envelope(&common, config, payload))
        }
        Command::Invert { common, mode, step, steps, t0, csv } => {
            let case = load_case(&common)?;
            let map = harness::network_map(&case)?;
            let method = Method::parse(&mode).expect("validated by clap");
            let q = boundary_point(&map, &case, &common, &None, 4)?;
            let u = harness::random_unit(&mut harness::stream(common.seed, 5), map.dim());
            let t0 = t0.unwrap_or(10.0 * step);
            let r = harness::round_trip(&map, &q, &u, t0, step, steps, method)?;
            if let Some(path) = csv {
                let mut text = String::from("step,residual,distance\n");
                let reference: Vec<DVector<f64>> =
                    (0..=steps).map(|j| &q.q + &u * (t0 + j as f64 * step)).collect();
                for (j, report) in r.reports.iter().enumerate() {
                    let dist = (&r.v_samples[j + 1] - &reference[j + 1]).norm();
                    text.push_str(&format!("{},{},{}\n", j + 1, report.residual, dist));
                }
                std::fs::write(&path, text).map_err(|e| CliError::Input(format!("{path}: {e}")))?;
            }
            let payload = json!({
                "n_buses": case.n_buses(),
                "mode": method.name(),
                "step": step,
                "steps": steps,
                "mean_round_trip_distance": r.mean_error,
                "all_steps_accepted": r.reports.iter().all(|x| x.accepted),
            });
            let config = json!({
                "command": "invert", "case": common.case, "format": common.format,
                "mode": mode, "step": step, "steps": steps, "t0": t0,
            });
            emit(&common, &envelope(&common, config, payload))
        }
        Command::Project { common, point, trace } => {
            let case = load_case(&common)?;
            let map = harness::network_map(&case)?;
            let v = match &point {
                Some(s) => parse_point(s)?,
                None => {
                    // A seeded off-boundary point at moderate distance.
                    let q = boundary_point(&map, &case, &common, &None, 6)?;
                    &q.q + &q.n_v * 0.05
                }
            };
            let r = projection::project_point(&map, &v)?;
            let mut payload = json!({
                "q": vec_of(&r.q.q),
                "d": r.d,
                "locally_closest": r.locally_closest,
                "lambda_start": projection::lambda_value(&map, &v)?,
            });
            if let Some(samples) = trace {
                let u = harness::random_unit(&mut harness::stream(common.seed, 7), map.dim());
                let curve: Vec<(f64, DVector<f64>)> = (0..samples)
                    .map(|j| {
                        let t = j as f64 * 1e-3;
                        (t, &v + &u * t)
                    })
                    .collect();
                let traced = projection::trace_curve_projection(&map, &curve, &r.q)?;
                let feet: Vec<Vec<f64>> = traced.iter().map(|p| vec_of(&p.q.q)).collect();
                let ds: Vec<f64> = traced.iter().map(|p| p.d).collect();
                payload["trace_feet"] = json!(feet);
                payload["trace_d"] = json!(ds);
            }
            let config = json!({"command": "project", "case": common.case, "format": common.format, "point": point, "trace": trace});
            emit(&common, &envelope(&common, config, payload))
        }
        Command::Jet { common, point } => {
            let case = load_case(&common)?;
            let map = harness::network_map(&case)?;
            let v0 = match &point {
                Some(s) => parse_point(s)?,
                None => harness::reduced_flat(&case),
            };
            let jet = invcalc::inverse_hessian(&map, &v0)?;
            let j_inv: Vec<Vec<f64>> = (0..jet.j_inv.nrows())
                .map(|i| (0..jet.j_inv.ncols()).map(|j| jet.j_inv[(i, j)]).collect())
                .collect();
            let h_inv: Vec<Vec<Vec<f64>>> = jet
                .h_inv
                .iter()
                .map(|m| (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect())
                .collect();
            let payload = json!({
                "v0": vec_of(&jet.v0),
                "j_inv": j_inv,
                "h_inv": h_inv,
            });
            let config = json!({"command": "jet", "case": common.case, "format": common.format, "point": point});
            emit(&common, &envelope(&common, config, payload))
        }
        Command::Bench { common, mode } => {
            let case = load_case(&common)?;
            let map = harness::network_map(&case)?;
            let q = boundary_point(&map, &case, &common, &None, 8)?;
            let mut rows = Vec::new();
            if mode == "kernel" || mode == "both" {
                let s = harness::bench_step(&map, &q, SplitMode::Kernel)?;
                rows.push(json!({"n_buses": case.n_buses(), "mode": "kernel", "seconds": s}));
            }
            if mode == "normal" || mode == "both" {
                let s = harness::bench_step(&map, &q, SplitMode::Normal)?;
                rows.push(json!({"n_buses": case.n_buses(), "mode": "normal", "seconds": s}));
            }
            let config = json!({"command": "bench", "case": common.case, "format": common.format, "mode": mode});
            emit(&common, &envelope(&common, config, json!({ "rows": rows })))
        }
        Command::Slice { common, origin, dir_a, dir_b, a_range, b_range, na, nb } => {
            let case = load_case(&common)?;
            let map = harness::network_map(&case)?;
            let n = map.dim();
            let origin = match &origin {
                Some(s) => parse_point(s)?,
                None => harness::reduced_flat(&case),
            };
            let dir_a = match &dir_a {
                Some(s) => parse_point(s)?,
                None => harness::random_unit(&mut harness::stream(common.seed, 9), n),
            };
            let dir_b = match &dir_b {
                Some(s) => parse_point(s)?,
                None => harness::random_unit(&mut harness::stream(common.seed, 10), n),
            };
            let spec = SliceSpec {
                origin,
                dir_a,
                dir_b,
                a_range: parse_range(&a_range)?,
                b_range: parse_range(&b_range)?,
                na,
                nb,
            };
            let r = sample_slice(&map, &spec)?;
            let cells: std::collections::HashSet<(usize, usize)> =
                r.sign_change_cells.iter().copied().collect();
            let mut text = String::from("a,b,det,lambda0,sign_change_cell\n");
            for (idx, s) in r.samples.iter().enumerate() {
                let (i, j) = (idx / nb, idx % nb);
                let mark = u8::from(cells.contains(&(i, j)));
                text.push_str(&format!("{},{},{},{},{}\n", s.a, s.b, s.det, s.lambda0, mark));
            }
            emit(&common, &text)
        }
    }
}
