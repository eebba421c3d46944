use clap::Parser;

use raterfx::cli::{self, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are not errors.
            if err.use_stderr() {
                let _ = err.print();
                std::process::exit(cli::EXIT_INPUT_ERROR);
            }
            let _ = err.print();
            std::process::exit(cli::EXIT_OK);
        }
    };
    match cli::run(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(cli::EXIT_INPUT_ERROR);
        }
    }
}
