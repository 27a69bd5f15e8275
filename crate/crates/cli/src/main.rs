use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use tdbem::config::{Mode, RunConfig, VerifyConfig};
use tdbem::cq::{cq_convolution_solve, cq_field_eval};
use tdbem::geometry::{load_mesh, make_icosphere, Point, SurfaceMesh};
use tdbem::incident::{incident_traces_ld, incident_traces_td};
use tdbem::io::{panel_magnitudes, probe_csv, table_csv, trace_csv, vtk_polydata, write_json, write_text};
use tdbem::oracle::time_domain::TdSetup;
use tdbem::trace_spaces::{read_coefficients_csv, write_coefficients_csv, SpaceRole};
use tdbem::transmission::{represent_fields, solve_at, DensityPair, Discretization};
use tdbem::verify::{self, Check};
use tdbem::{Error, C64};

#[derive(Parser)]
#[command(name = "tdbem", version, about = "Transient electromagnetic transmission solver (Galerkin BEM + convolution quadrature)")]
struct Cli {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (overrides `output` in the config)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mesh statistics for an icosphere level, an OFF file or the configured mesh
    MeshInfo {
        #[arg(long, conflicts_with = "mesh")]
        level: Option<u32>,
        #[arg(long)]
        mesh: Option<PathBuf>,
    },
    /// Laplace-domain solve at the configured s
    SolveLd,
    /// Time-domain solve with convolution quadrature
    SolveTd,
    /// Fields at the configured probes from densities written by solve-ld
    EvalFields {
        /// Directory holding j.csv and m.csv (default: the output directory)
        #[arg(long)]
        densities: Option<PathBuf>,
    },
    /// Runs the job described by the config's `mode`
    Run,
    /// Verification suites with pass/fail output
    Verify {
        #[arg(value_enum)]
        suite: Suite,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Assembly,
    Identities,
    Jump,
    Pde,
    Null,
    Mie,
    Stability,
    CqOrder,
    Causality,
}

/// Error tagged with the pipeline stage that produced it.
struct Failure {
    stage: &'static str,
    error: Error,
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, Failure>;
}

impl<T> Stage<T> for tdbem::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|error| Failure { stage, error })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn }).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error [setup]: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("error [{}]: {}", f.stage, f.error);
            ExitCode::from(2)
        }
    }
}

fn load_config(cli: &Cli) -> Result<Option<(RunConfig, PathBuf)>, Failure> {
    let Some(path) = &cli.config else { return Ok(None) };
    let cfg = RunConfig::from_file(path).stage("config")?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Some((cfg, base)))
}

fn require_config(cli: &Cli) -> Result<(RunConfig, PathBuf), Failure> {
    load_config(cli)?.ok_or(Failure { stage: "config", error: Error::Config("this command needs --config".into()) })
}

fn out_dir(cli: &Cli, cfg: Option<&RunConfig>) -> PathBuf {
    cli.out.clone().or_else(|| cfg.and_then(|c| c.output.clone())).unwrap_or_else(|| PathBuf::from("tdbem-out"))
}

fn dispatch(cli: &Cli) -> Result<bool, Failure> {
    match &cli.command {
        Command::MeshInfo { level, mesh } => mesh_info(cli, *level, mesh.as_deref()),
        Command::SolveLd => solve_ld(cli),
        Command::SolveTd => solve_td(cli),
        Command::EvalFields { densities } => eval_fields(cli, densities.as_deref()),
        Command::Run => {
            let (cfg, _) = require_config(cli)?;
            match cfg.mode {
                Mode::Laplace => solve_ld(cli),
                Mode::Timedomain => solve_td(cli),
                Mode::Verify => {
                    let mut ok = true;
                    for s in [Suite::Identities, Suite::Jump, Suite::Pde, Suite::Null, Suite::Mie, Suite::Stability, Suite::CqOrder] {
                        ok &= run_verify(cli, s)?;
                    }
                    Ok(ok)
                }
            }
        }
        Command::Verify { suite } => run_verify(cli, *suite),
    }
}

fn mesh_info(cli: &Cli, level: Option<u32>, path: Option<&Path>) -> Result<bool, Failure> {
    let mesh = match (level, path) {
        (Some(l), _) => make_icosphere(l, 1.0, Point::zeros()).stage("mesh")?,
        (None, Some(p)) => load_mesh(p).stage("mesh")?,
        (None, None) => {
            let (cfg, base) = require_config(cli)?;
            cfg.mesh.load(&base).stage("mesh")?
        }
    };
    print_mesh(&mesh);
    Ok(true)
}

fn print_mesh(mesh: &SurfaceMesh) {
    let st = mesh.stats();
    println!("V={} E={} F={}", mesh.num_vertices(), mesh.num_edges(), mesh.num_triangles());
    println!("h_max={:.6} h_min={:.6} area={:.6} shape_regularity={:.4}", st.h_max, st.h_min, st.total_area, st.shape_regularity);
}

struct Job {
    cfg: RunConfig,
    cfg_text: String,
    mesh: std::sync::Arc<SurfaceMesh>,
    disc: Discretization,
    out: PathBuf,
}

fn prepare(cli: &Cli) -> Result<Job, Failure> {
    let (cfg, base) = require_config(cli)?;
    let mesh = std::sync::Arc::new(cfg.mesh.load(&base).stage("mesh")?);
    for i in cfg.close_probes(&mesh) {
        log::warn!("probe {i} lies within h/4 of the surface");
    }
    let disc = Discretization::new(mesh.clone(), cfg.quadrature).stage("assemble")?;
    let out = out_dir(cli, Some(&cfg));
    std::fs::create_dir_all(&out).map_err(|e| Failure { stage: "output", error: Error::Io(format!("{}: {e}", out.display())) })?;
    let cfg_text = cfg.to_toml().stage("config")?;
    Ok(Job { cfg, cfg_text, mesh, disc, out })
}

fn manifest(job: &Job, command: &str, extra: serde_json::Value) -> serde_json::Value {
    let st = job.mesh.stats();
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": job.cfg,
        "config_toml": job.cfg_text,
        "mesh": {
            "vertices": job.mesh.num_vertices(),
            "edges": job.mesh.num_edges(),
            "triangles": job.mesh.num_triangles(),
            "h_max": st.h_max,
            "h_min": st.h_min,
            "fingerprint": format!("{:016x}", job.mesh.fingerprint()),
        },
        "result": extra,
    })
}

fn solve_ld(cli: &Cli) -> Result<bool, Failure> {
    let job = prepare(cli)?;
    let cfg = &job.cfg;
    let s = cfg.laplace.as_ref().ok_or(Failure { stage: "config", error: Error::Config("missing [laplace] table".into()) })?.s();
    let start = Instant::now();
    let wave = tdbem::incident::LaplaceWave::new(cfg.wave.direction(), cfg.wave.polarization(), cfg.wave.signal().stage("incident")?.laplace(s)).stage("incident")?;
    let data = incident_traces_ld(&wave, s, cfg.materials.c_plus(), &job.disc.spaces);
    let sol = solve_at(s, &cfg.materials, &job.disc, &data, true).stage("solve")?;
    let solve_seconds = start.elapsed().as_secs_f64();
    let probes = cfg.probes();
    let fields = represent_fields(&sol.pair, &data, &cfg.materials, &job.disc, &probes).stage("fields")?;
    write_coefficients_csv(job.out.join("j.csv"), &sol.pair.j).stage("output")?;
    write_coefficients_csv(job.out.join("m.csv"), &sol.pair.m).stage("output")?;
    write_text(job.out.join("probes.csv"), &probe_csv(&fields.iter().map(|f| (f.side, f.e)).collect::<Vec<_>>())).stage("output")?;
    let vtk = vtk_polydata(
        &job.mesh,
        &[("abs_j", panel_magnitudes(&job.disc.spaces, SpaceRole::Div, &sol.pair.j)), ("abs_m", panel_magnitudes(&job.disc.spaces, SpaceRole::Curl, &sol.pair.m))],
    )
    .stage("output")?;
    write_text(job.out.join("densities.vtk"), &vtk).stage("output")?;
    let extra = json!({ "s": [s.re, s.im], "residual": sol.residual, "cond_estimate": sol.cond_estimate, "solve_seconds": solve_seconds, "unknowns": 2 * job.disc.dim() });
    write_json(job.out.join("manifest.json"), &manifest(&job, "solve-ld", extra)).stage("output")?;
    println!("solved at s = {s}: residual {:.2e}, condition estimate {:.2e}", sol.residual, sol.cond_estimate);
    for (k, f) in fields.iter().enumerate() {
        println!("probe {k} ({:?}): |E| = {:.6e}", f.side, f.e.norm());
    }
    println!("artifacts in {}", job.out.display());
    Ok(true)
}

fn eval_fields(cli: &Cli, dir: Option<&Path>) -> Result<bool, Failure> {
    let job = prepare(cli)?;
    let cfg = &job.cfg;
    let s = cfg.laplace.as_ref().ok_or(Failure { stage: "config", error: Error::Config("missing [laplace] table".into()) })?.s();
    let dir = dir.map(Path::to_path_buf).unwrap_or_else(|| job.out.clone());
    let pair = DensityPair { j: read_coefficients_csv(dir.join("j.csv")).stage("input")?, m: read_coefficients_csv(dir.join("m.csv")).stage("input")? };
    if pair.j.len() != job.disc.dim() || pair.m.len() != job.disc.dim() {
        return Err(Failure { stage: "input", error: Error::InvalidInput("density files do not match the mesh".into()) });
    }
    let wave = tdbem::incident::LaplaceWave::new(cfg.wave.direction(), cfg.wave.polarization(), cfg.wave.signal().stage("incident")?.laplace(s)).stage("incident")?;
    let data = incident_traces_ld(&wave, s, cfg.materials.c_plus(), &job.disc.spaces);
    let fields = represent_fields(&pair, &data, &cfg.materials, &job.disc, &cfg.probes()).stage("fields")?;
    write_text(job.out.join("fields.csv"), &probe_csv(&fields.iter().map(|f| (f.side, f.e)).collect::<Vec<_>>())).stage("output")?;
    for (k, f) in fields.iter().enumerate() {
        println!("probe {k} ({:?}): E = [{:.6e}, {:.6e}, {:.6e}]", f.side, f.e[0], f.e[1], f.e[2]);
    }
    Ok(true)
}

fn solve_td(cli: &Cli) -> Result<bool, Failure> {
    let job = prepare(cli)?;
    let cfg = &job.cfg;
    let time = cfg.time.as_ref().ok_or(Failure { stage: "config", error: Error::Config("missing [time] table".into()) })?;
    let grid = time.grid().stage("config")?;
    let wave = cfg.wave.plane_wave(&job.mesh, cfg.materials.c_plus()).stage("incident")?;
    let start = Instant::now();
    let samples: Vec<_> = grid.times().iter().map(|&t| incident_traces_td(&wave, t, cfg.materials.c_plus(), &job.disc.spaces)).collect();
    let history = cq_convolution_solve(&grid, &cfg.materials, &job.disc, &samples).stage("cq")?;
    let probes = cfg.probes();
    let traces = cq_field_eval(&history, &cfg.materials, &job.disc, &probes).stage("fields")?;
    let seconds = start.elapsed().as_secs_f64();
    let times = grid.times();
    write_text(job.out.join("traces.csv"), &trace_csv(&times, &traces)).stage("output")?;
    let rows: Vec<Vec<f64>> = times
        .iter()
        .zip(&history.steps)
        .map(|(t, d)| {
            vec![*t, job.disc.mass_norm(&d.j), job.disc.mass_norm(&d.m)]
        })
        .collect();
    write_text(job.out.join("density_norms.csv"), &table_csv(&["t", "norm_j", "norm_m"], &rows)).stage("output")?;
    if let Some(last) = history.steps.last() {
        write_coefficients_csv(job.out.join("j_final.csv"), &last.j).stage("output")?;
        write_coefficients_csv(job.out.join("m_final.csv"), &last.m).stage("output")?;
    }
    let extra = json!({
        "grid": grid,
        "lambda_radius": grid.lambda_radius,
        "frequency_count": grid.len(),
        "solved_frequencies": history.spectrum.len(),
        "max_residual": history.max_residual,
        "max_condition": history.max_condition,
        "imag_ratio": history.imag_ratio,
        "seconds": seconds,
        "wave_t0": wave.t0,
    });
    write_json(job.out.join("manifest.json"), &manifest(&job, "solve-td", extra)).stage("output")?;
    println!("{} steps of BDF{} in {seconds:.1} s, max residual {:.2e}", grid.n, grid.p, history.max_residual);
    for (k, _) in probes.iter().enumerate() {
        let peak = traces.iter().map(|row| tdbem::cq::norm3(&row[k].e)).fold(0.0, f64::max);
        println!("probe {k}: peak |E| = {peak:.6e}");
    }
    println!("artifacts in {}", job.out.display());
    Ok(true)
}

fn report(out: &Path, name: &str, value: serde_json::Value, checks: &[Check], table: Option<(&[&str], Vec<Vec<f64>>)>) -> Result<bool, Failure> {
    for c in checks {
        println!("{c}");
    }
    write_json(out.join(format!("{name}.json")), &json!({ "suite": name, "checks": checks, "report": value })).stage("output")?;
    if let Some((header, rows)) = table {
        write_text(out.join(format!("{name}.csv")), &table_csv(header, &rows)).stage("output")?;
    }
    Ok(verify::all_passed(checks))
}

fn run_verify(cli: &Cli, suite: Suite) -> Result<bool, Failure> {
    let cfg = load_config(cli)?.map(|(c, _)| c);
    let v = cfg.as_ref().map(|c| c.verify.clone()).unwrap_or_else(VerifyConfig::default);
    let out = out_dir(cli, cfg.as_ref());
    let s = C64::new(v.s[0], v.s[1]);
    let seed = cfg.as_ref().map_or(0, |c| c.seed);
    match suite {
        Suite::Assembly => {
            let (r, c) = verify::assembly_suite(1, cfg.as_ref().map(|c| c.quadrature).unwrap_or_default()).stage("verify")?;
            report(&out, "assembly", to_value(&r), &c, None)
        }
        Suite::Identities => {
            let (r, c) = verify::identity_suite(0, s, seed).stage("verify")?;
            report(&out, "identities", to_value(&r), &c, None)
        }
        Suite::Jump => {
            let (r, c) = verify::jump_suite(&v.levels, s, v.trials, seed).stage("verify")?;
            let rows = r.levels.iter().map(|l| vec![l.level as f64, l.h, l.dtilde_jump, l.stilde_jump_ratio, l.trace_identity_ext, l.trace_identity_int]).collect();
            report(&out, "jump", to_value(&r), &c, Some((&["level", "h", "dtilde_jump", "stilde_jump_ratio", "trace_ext", "trace_int"], rows)))
        }
        Suite::Pde => {
            let (r, c) = verify::pde_suite(1, s).stage("verify")?;
            report(&out, "pde", to_value(&r), &c, None)
        }
        Suite::Null => {
            let levels: Vec<u32> = v.levels.iter().map(|l| l.saturating_sub(1)).collect();
            let (r, c) = verify::null_suite(&levels, s).stage("verify")?;
            let rows = r.iter().map(|l| vec![l.level as f64, l.scattered_ratio, l.j_error, l.m_error, l.interior_error]).collect();
            report(&out, "null", to_value(&r), &c, Some((&["level", "scattered_ratio", "j_error", "m_error", "interior_error"], rows)))
        }
        Suite::Mie => {
            let levels: Vec<u32> = v.levels.iter().map(|l| l.saturating_sub(1)).collect();
            let (r, c) = verify::mie_suite(&levels, s).stage("verify")?;
            let rows = r.iter().map(|l| vec![l.level as f64, l.j_error, l.m_error, l.probe_errors.iter().copied().fold(0.0, f64::max)]).collect();
            report(&out, "mie", to_value(&r), &c, Some((&["level", "j_error", "m_error", "max_probe_error"], rows)))
        }
        Suite::Stability => {
            let (r, c) = verify::stability_suite(1, v.sigma0, &v.omegas).stage("verify")?;
            let rows = r.points.iter().map(|p| vec![p.s.re, p.s.im, p.ratio]).collect();
            report(&out, "stability", to_value(&r), &c, Some((&["sigma", "omega", "ratio"], rows)))
        }
        Suite::CqOrder | Suite::Causality => {
            let (orders, name) = match suite {
                Suite::Causality => (vec![2u8], "causality"),
                _ => (v.orders.clone(), "cq-order"),
            };
            let steps = if matches!(suite, Suite::Causality) { vec![*v.steps.last().unwrap_or(&256) / 4, *v.steps.last().unwrap_or(&256) / 2, *v.steps.last().unwrap_or(&256)] } else { v.steps.clone() };
            let (r, c) = verify::time_domain_suite(&TdSetup::default(), &steps, &orders).stage("verify")?;
            let c: Vec<Check> = match suite {
                Suite::Causality => c.into_iter().filter(|x| x.name.starts_with("pre-arrival")).collect(),
                _ => c,
            };
            let rows = r.studies.iter().flat_map(|st| st.steps.iter().zip(&st.differences).map(move |(n, d)| vec![st.p as f64, *n as f64, *d])).collect();
            report(&out, name, to_value(&r), &c, Some((&["p", "steps", "difference_to_next"], rows)))
        }
    }
}

fn to_value<T: serde::Serialize>(r: &T) -> serde_json::Value {
    serde_json::to_value(r).unwrap_or(serde_json::Value::Null)
}
