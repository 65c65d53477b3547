use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use clap::Parser;
use tariff_cli::{exit, run, Cli, CliError, Command, ErrorKind};

fn out_path(cli: &Cli) -> Option<&std::path::Path> {
    match &cli.command {
        Command::SolveCp { common, .. }
        | Command::SolveSp { common, .. }
        | Command::SolvePp { common, .. }
        | Command::DesignMenu { common, .. }
        | Command::CheckIc { common }
        | Command::Sweep { common, .. }
        | Command::Verify { common, .. } => common.out.as_deref(),
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let mut out: Box<dyn Write> = match out_path(cli) {
        Some(path) => {
            Box::new(BufWriter::new(File::create(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let result = run(cli, &mut out);
    result.and(out.flush().map_err(CliError::from))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) if e.kind == ErrorKind::BrokenPipe => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
