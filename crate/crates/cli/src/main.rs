use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use morel::runner::{self, RunConfig, OUTPUT_ROOT_VAR};
use morel::Error;

/// Offline model-based RL experiments.
///
/// Runs are written under $MOREL_OUTPUT_ROOT (default `runs`). Exit status:
/// 0 success, 1 invalid configuration, 2 runtime failure, 3 a checked bound
/// was violated (theory-suite only).
#[derive(Parser)]
#[command(name = "morel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// Validate a config file and print it with every default filled in.
    Validate { config: PathBuf },
    /// Check the value bounds on random tabular instances.
    TheorySuite {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Pretty-print the summary of a finished run.
    Report { dir: PathBuf },
}

const SUCCESS: u8 = 0;
const VALIDATION: u8 = 1;
const RUNTIME: u8 = 2;
const VIOLATION: u8 = 3;

/// Where a command writes: run root, stdout and stderr.
struct Io<'a> {
    root: &'a Path,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Io<'_> {
    fn say(&mut self, text: &str) {
        let _ = self.out.write_all(text.as_bytes());
    }

    fn complain(&mut self, text: &str) {
        let _ = writeln!(self.err, "{text}");
    }
}

fn execute(config: &RunConfig, io: &mut Io) -> u8 {
    match runner::run(config, io.root) {
        Ok(outcome) => {
            io.say(&format!("{}\n", outcome.dir.display()));
            if outcome.violation {
                io.complain(&format!("bound violation; see {}", outcome.dir.display()));
                VIOLATION
            } else {
                SUCCESS
            }
        }
        Err(e @ Error::Config(_)) => {
            io.complain(&e.to_string());
            VALIDATION
        }
        Err(e) => {
            io.complain(&format!("run failed: {e}"));
            RUNTIME
        }
    }
}

fn load(path: &Path, io: &mut Io) -> Option<RunConfig> {
    runner::load_config(path)
        .map_err(|e| io.complain(&format!("{}: {e}", path.display())))
        .ok()
}

fn dispatch(command: Command, io: &mut Io) -> u8 {
    match command {
        Command::Run { config } => match load(&config, io) {
            Some(c) => execute(&c, io),
            None => VALIDATION,
        },
        Command::Validate { config } => match load(&config, io) {
            Some(c) => {
                io.say(&c.to_text());
                SUCCESS
            }
            None => VALIDATION,
        },
        Command::TheorySuite { instances, seed } => {
            let text = format!(
                "experiment = theory-suite\nseed = {seed}\nenv.kind = random-tabular\ntheory.instances = {instances}\n"
            );
            match runner::parse_config(&text) {
                Ok(c) => execute(&c, io),
                Err(e) => {
                    io.complain(&e.to_string());
                    VALIDATION
                }
            }
        }
        Command::Report { dir } => match runner::report(&dir) {
            Ok(text) => {
                io.say(&text);
                SUCCESS
            }
            Err(e) => {
                io.complain(&e.to_string());
                RUNTIME
            }
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let root = std::env::var_os(OUTPUT_ROOT_VAR).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
    let code = dispatch(
        cli.command,
        &mut Io {
            root: &root,
            out: &mut io::stdout(),
            err: &mut io::stderr(),
        },
    );
    ExitCode::from(code)
}

#[cfg(test)]
mod tests {
    use std::fs;

    use super::*;

    struct Ran {
        code: u8,
        out: String,
        err: String,
    }

    fn morel(root: &Path, args: &[&str]) -> Ran {
        let cli = Cli::try_parse_from(std::iter::once("morel").chain(args.iter().copied())).unwrap();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = dispatch(
            cli.command,
            &mut Io {
                root,
                out: &mut out,
                err: &mut err,
            },
        );
        Ran {
            code,
            out: String::from_utf8(out).unwrap(),
            err: String::from_utf8(err).unwrap(),
        }
    }

    #[test]
    fn validate_prints_resolved_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, "experiment = morel\nseed = 3\nenv.kind = chain\n").unwrap();
        let ran = morel(dir.path(), &["validate", path.to_str().unwrap()]);
        assert_eq!(ran.code, SUCCESS);
        assert!(
            ran.out
                .lines()
                .any(|l| l.starts_with("usad.n_min") && l.ends_with("= 5")),
            "{}",
            ran.out
        );
    }

    #[test]
    fn invalid_config_exits_with_1() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.conf");
        fs::write(&path, "experiment = morel\nenv.kind = chain\nplanner.bogus = 1\n").unwrap();
        let ran = morel(dir.path(), &["run", path.to_str().unwrap()]);
        assert_eq!(ran.code, VALIDATION);
        assert!(ran.err.contains("planner.bogus: unknown key"), "{}", ran.err);
        assert!(ran.err.contains("seed: missing required key"), "{}", ran.err);
        assert_eq!(
            fs::read_dir(dir.path()).unwrap().count(),
            1,
            "nothing is written for an invalid config"
        );
    }

    #[test]
    fn runtime_failure_exits_with_2_and_leaves_a_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing.conf");
        fs::write(
            &path,
            "experiment = morel\nseed = 1\nenv.kind = point-mass\ndataset.path = /no/such/file.jsonl\noutput.dir = failed\n",
        )
        .unwrap();
        let ran = morel(dir.path(), &["run", path.to_str().unwrap()]);
        assert_eq!(ran.code, RUNTIME);
        assert!(dir.path().join("failed/failure.json").exists());
        let report = morel(dir.path(), &["report", dir.path().join("failed").to_str().unwrap()]);
        assert_eq!(report.code, SUCCESS);
        assert!(report.out.contains("failed run"));
    }

    #[test]
    fn theory_suite_and_report() {
        let dir = tempfile::tempdir().unwrap();
        let ran = morel(dir.path(), &["theory-suite", "--instances", "5", "--seed", "2"]);
        assert_eq!(ran.code, SUCCESS, "{}", ran.err);
        let report = morel(dir.path(), &["report", ran.out.trim()]);
        assert!(
            report.out.contains("all_satisfied") && report.out.contains("true"),
            "{}",
            report.out
        );
    }

    #[test]
    fn missing_report_directory_is_a_runtime_error() {
        let dir = tempfile::tempdir().unwrap();
        let ran = morel(dir.path(), &["report", dir.path().join("nope").to_str().unwrap()]);
        assert_eq!(ran.code, RUNTIME);
    }
}
