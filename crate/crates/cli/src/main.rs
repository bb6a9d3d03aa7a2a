use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use ecam_cli::config::KEYS;
use ecam_cli::pipeline;
use ecam_cli::{PipelineError, RunConfig};

const SUBCOMMANDS: &[(&str, &str)] = &[
    ("psf", "Synthesize (or load and normalize) the diffuser PSF"),
    ("simulate", "Simulate a masked measurement of `object`"),
    ("edge", "Reconstruct the edge image directly from the measurement"),
    ("baseline", "Reconstruct the object, then apply the edge stencil"),
    ("sweep", "Run both methods over every object and sampling rate"),
    ("rolling", "Rolling-shutter capture of a moving object, one edge frame per band"),
    ("config", "Print the effective configuration"),
];

fn with_keys(cmd: Command) -> Command {
    let cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .short('c')
            .value_name("FILE")
            .value_parser(clap::value_parser!(PathBuf))
            .help("key = value file applied before command-line overrides"),
    );
    KEYS.iter().fold(cmd, |cmd, &key| {
        let long = key.replace('_', "-");
        let arg = Arg::new(key).long(long).value_name("VALUE").action(ArgAction::Set);
        let arg = if key.contains('_') { arg.alias(key) } else { arg };
        cmd.arg(arg)
    })
}

fn cli() -> Command {
    let root = Command::new("ecam")
        .about("Lensless diffuser edge camera simulator")
        .subcommand_required(true)
        .arg_required_else_help(true);
    SUBCOMMANDS
        .iter()
        .fold(root, |root, &(name, about)| root.subcommand(with_keys(Command::new(name).about(about))))
}

fn load_config(m: &ArgMatches) -> Result<RunConfig, PipelineError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = m.get_one::<PathBuf>("config") {
        cfg.apply_file(path)?;
    }
    for &key in KEYS {
        if let Some(value) = m.get_one::<String>(key) {
            cfg.set(key, value)?;
        }
    }
    Ok(cfg)
}

fn run(name: &str, cfg: &RunConfig) -> Result<(), PipelineError> {
    match name {
        "psf" => {
            let path = pipeline::cmd_psf(cfg)?;
            println!("wrote {}", path.display());
        }
        "simulate" => {
            let out = pipeline::cmd_simulate(cfg)?;
            println!("wrote {}", out.measurement_path.display());
            println!("wrote {}", out.mask_path.display());
            println!("wrote {}", out.psf_path.display());
        }
        "edge" | "baseline" => {
            let (outcome, record) = if name == "edge" {
                pipeline::cmd_edge(cfg)?
            } else {
                pipeline::cmd_baseline(cfg)?
            };
            println!(
                "{} {}: psnr {:.3} dB, entropy {:.3} bits, {} iterations, tau {:.3e}",
                record.object_id,
                record.method,
                record.psnr_db,
                record.ie_bits,
                outcome.solve.iterations,
                outcome.solve.tau
            );
        }
        "sweep" => {
            let out = pipeline::cmd_sweep(cfg)?;
            print!("{}", out.report.to_csv());
            println!("direct >= post on {:.0}% of cells", 100.0 * out.ecam_win_fraction);
            println!("wrote {}", out.csv_path.display());
        }
        "rolling" => {
            let out = pipeline::cmd_rolling(cfg)?;
            println!("frame,time_ms,centroid_row,centroid_col");
            for (k, (t, c)) in out.times.iter().zip(&out.centroids).enumerate() {
                match c {
                    Some((r, c)) => println!("{k},{t:.3},{r:.3},{c:.3}"),
                    None => println!("{k},{t:.3},nan,nan"),
                }
            }
        }
        "config" => print!("{}", cfg.to_text()),
        _ => unreachable!("subcommand table out of sync"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let result = load_config(sub).and_then(|cfg| run(name, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
