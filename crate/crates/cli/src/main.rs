use std::io::{self, IsTerminal};
use std::process::ExitCode;

use obsolib_cli::{run_with, Io};

fn main() -> ExitCode {
    let stdin = io::stdin();
    let mut locked = (!stdin.is_terminal()).then(|| stdin.lock());
    let (mut stdout, mut stderr) = (io::stdout().lock(), io::stderr().lock());
    let mut io = Io {
        stdin: locked.as_mut().map(|l| l as &mut dyn io::Read),
        stdout: &mut stdout,
        stderr: &mut stderr,
    };
    ExitCode::from(run_with(std::env::args_os(), &mut io))
}
