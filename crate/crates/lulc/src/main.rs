use clap::Parser;
use lulc::cli::{self, Cli};

fn main() {
    let parsed = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = cli::run(&parsed) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
