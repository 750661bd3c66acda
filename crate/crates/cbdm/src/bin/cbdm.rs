use std::process::exit;

fn main() {
    exit(cbdm::cli::run(std::env::args_os()));
}
