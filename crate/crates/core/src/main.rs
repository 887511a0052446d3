use clap::Parser;

use prefixtune::cli::{run, CliSpec};

fn main() {
    let spec = CliSpec::parse();
    if let Err(err) = run(&spec) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
