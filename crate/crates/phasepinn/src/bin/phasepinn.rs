use std::process::exit;

fn main() {
    exit(phasepinn::cli::run_cli(std::env::args_os()));
}
