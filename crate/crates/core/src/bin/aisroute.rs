use clap::{Arg, ArgAction, ArgMatches, Command};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aisroute::config::{ConfigError, PipelineConfig};
use aisroute::pipeline::{self, PipelineError, RunInputs, RunStats, Workdir};
use aisroute::ports::PortSource;

fn paths(m: &ArgMatches, id: &str) -> Vec<PathBuf> {
    m.get_many::<PathBuf>(id).map(|v| v.cloned().collect()).unwrap_or_default()
}

fn cli() -> Command {
    let path_arg = |id: &'static str, help: &'static str| {
        Arg::new(id)
            .long(id)
            .value_name("FILE")
            .value_parser(clap::value_parser!(PathBuf))
            .help(help)
    };
    let inputs = path_arg("input", "AIS CSV file (repeatable)").action(ArgAction::Append);
    let references = path_arg("reference", "reference ports CSV: name,lat,lon[,source] (repeatable)")
        .action(ArgAction::Append);

    let mut cmd = Command::new("aisroute")
        .about("Extract standard maritime routes from AIS position reports")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg(
            Arg::new("workdir")
                .long("workdir")
                .global(true)
                .value_name("DIR")
                .value_parser(clap::value_parser!(PathBuf))
                .default_value(".")
                .help("directory holding stage inputs and outputs"),
        )
        .arg(
            path_arg("config", "flat key = value configuration file")
                .global(true),
        )
        .subcommand(
            Command::new("synth")
                .about("Generate a synthetic fleet with ground truth")
                .arg(Arg::new("preset").long("preset").help("fleet, small, fork or defects"))
                .arg(path_arg("spec", "scenario spec JSON"))
                .arg(Arg::new("seed").long("seed").value_parser(clap::value_parser!(u64)))
                .arg(
                    Arg::new("out")
                        .long("out")
                        .value_name("DIR")
                        .value_parser(clap::value_parser!(PathBuf))
                        .help("output directory (defaults to the workdir)"),
                ),
        )
        .subcommand(Command::new("ingest").about("Clean raw AIS CSV into per-vessel tracks").arg(inputs.clone()))
        .subcommand(Command::new("ports").about("Detect and consolidate ports").arg(references.clone()))
        .subcommand(Command::new("segments").about("Cut tracks into port-to-port segments"))
        .subcommand(Command::new("aggregate").about("Group complete segments by port pair and vessel type"))
        .subcommand(
            Command::new("fit-params")
                .about("Fit the extraction parameter model from labeled groups")
                .arg(path_arg("labels", "CSV: group_key,eps_m,min_samples,r_m").required(true)),
        )
        .subcommand(Command::new("routes").about("Extract standard routes per group"))
        .subcommand(Command::new("export").about("Write routes and ports as GeoJSON"))
        .subcommand(
            Command::new("report")
                .about("Print run statistics")
                .arg(Arg::new("json").long("json").action(ArgAction::SetTrue).help("print JSON only")),
        )
        .subcommand(
            Command::new("convert-reference")
                .about("Convert WPI CSV or OSM GeoJSON ports to the reference format")
                .arg(path_arg("wpi", "World Port Index CSV"))
                .arg(path_arg("osm", "OpenStreetMap GeoJSON points"))
                .arg(path_arg("output", "output CSV (stdout when omitted)")),
        )
        .subcommand(
            Command::new("run")
                .about("Run every stage from ingest to export")
                .arg(inputs)
                .arg(references)
                .arg(path_arg("labels", "labels CSV for the parameter model")),
        );
    for key in PipelineConfig::KEYS {
        let mut arg = Arg::new(*key).long(*key).global(true).value_name("VALUE").hide(true);
        if key.contains('_') {
            arg = arg.alias(key.replace('_', "-"));
        }
        cmd = cmd.arg(arg);
    }
    cmd
}

fn load_config(m: &ArgMatches) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match m.get_one::<PathBuf>("config") {
        Some(p) if !p.exists() => return Err(PipelineError::MissingInput(p.clone())),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| PipelineError::Io { path: p.clone(), source })?;
            let mut cfg = PipelineConfig::default();
            cfg.apply_text(&text).map_err(config_err)?;
            cfg
        }
        None => PipelineConfig::default(),
    };
    for key in PipelineConfig::KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v).map_err(config_err)?;
        }
    }
    cfg.validate().map_err(config_err)?;
    Ok(cfg)
}

fn config_err(e: ConfigError) -> PipelineError {
    PipelineError::Config(e.to_string())
}

fn dispatch(name: &str, sub: &ArgMatches, cfg: &PipelineConfig, wd: &Workdir) -> Result<(), PipelineError> {
    match name {
        "synth" => {
            let out = sub.get_one::<PathBuf>("out").cloned().unwrap_or_else(|| wd.root.clone());
            let o = pipeline::run_synth(
                &out,
                sub.get_one::<String>("preset").map(String::as_str),
                sub.get_one::<PathBuf>("spec").map(PathBuf::as_path),
                sub.get_one::<u64>("seed").copied(),
            )?;
            println!("wrote {} {} {}", o.csv.display(), o.truth.display(), o.reference.display());
        }
        "ingest" => {
            let s = pipeline::run_ingest(cfg, wd, &paths(sub, "input"))?;
            println!(
                "ingest: {} records in, {} out, {} vessels, size reduction {:.2}%",
                s.records_in,
                s.records_out,
                s.vessels,
                100.0 * s.size_reduction
            );
            for (reason, n) in &s.rejected_by_reason {
                println!("  rejected {}: {n}", serde_json::to_value(reason).unwrap_or_default().as_str().unwrap_or("?"));
            }
        }
        "ports" => {
            let s = pipeline::run_ports(cfg, wd, &paths(sub, "reference"))?;
            println!("ports: {} from {} candidates, labeled {:.1}%", s.ports, s.candidates, 100.0 * s.labeled_fraction);
        }
        "segments" => {
            let s = pipeline::run_segments(cfg, wd)?;
            println!("segments: {} ({} complete, {:.2}%)", s.segments, s.complete, 100.0 * s.complete_fraction);
        }
        "aggregate" => {
            let s = pipeline::run_aggregate(cfg, wd)?;
            println!("aggregate: {} groups ({} low support)", s.groups, s.low_support_groups);
        }
        "fit-params" => {
            let labels = sub.get_one::<PathBuf>("labels").expect("required");
            let s = pipeline::run_fit_params(wd, labels)?;
            println!("fit-params: {} labeled groups, residual rms {:?}", s.labeled_groups, s.residual_rms);
        }
        "routes" => {
            let s = pipeline::run_routes(cfg, wd)?;
            println!(
                "routes: {} routes in {} groups, {:.1}% completed, {} splits",
                s.routes,
                s.groups,
                100.0 * s.completed_fraction,
                s.splits
            );
        }
        "export" => {
            let s = pipeline::run_export(wd)?;
            println!("export: {} route features, {} port features", s.route_features, s.port_features);
        }
        "report" => {
            let stats = RunStats::load(wd)?;
            let json = serde_json::to_string_pretty(&stats).expect("serializable");
            if sub.get_flag("json") {
                println!("{json}");
            } else {
                print!("{}", stats.render_table());
            }
        }
        "convert-reference" => {
            let (input, format) = match (sub.get_one::<PathBuf>("wpi"), sub.get_one::<PathBuf>("osm")) {
                (Some(p), None) => (p, PortSource::Wpi),
                (None, Some(p)) => (p, PortSource::Osm),
                _ => return Err(PipelineError::Config("give exactly one of --wpi or --osm".into())),
            };
            let csv = pipeline::convert_reference(input, format)?;
            match sub.get_one::<PathBuf>("output") {
                Some(out) => pipeline::write_atomic(out, csv.as_bytes())?,
                None => print!("{csv}"),
            }
        }
        "run" => {
            let run = RunInputs {
                inputs: paths(sub, "input"),
                references: paths(sub, "reference"),
                labels: sub.get_one::<PathBuf>("labels").cloned(),
            };
            let stats = pipeline::run_all(cfg, wd, &run)?;
            print!("{}", stats.render_table());
        }
        other => unreachable!("unhandled subcommand {other}"),
    }
    Ok(())
}

fn fail(code: i32, kind: &str, msg: &str) -> ExitCode {
    let msg = msg.lines().next().unwrap_or("").replace('"', "'");
    eprintln!("error code={code} kind={kind} msg=\"{msg}\"");
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let msg = text.trim_start_matches("error: ");
            return fail(2, "config", msg);
        }
    };
    let cfg = match load_config(&matches) {
        Ok(c) => c,
        Err(e) => return fail(e.exit_code(), e.kind(), &e.to_string()),
    };
    let workdir = matches.get_one::<PathBuf>("workdir").map(PathBuf::as_path).unwrap_or(Path::new("."));
    let wd = Workdir::new(workdir);
    let (name, sub) = matches.subcommand().expect("subcommand required");

    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build() {
        Ok(p) => p,
        Err(e) => return fail(2, "config", &e.to_string()),
    };
    match pool.install(|| dispatch(name, sub, &cfg, &wd)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.exit_code(), e.kind(), &e.to_string()),
    }
}
