use clap::Parser;

use evotide::cli::{main_with, Cli};

fn main() {
    let cli = Cli::parse();
    match main_with(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
