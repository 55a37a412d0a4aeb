use std::io::Write;

fn main() {
    woad::harness::cli::init_logging();
    let outcome = woad::harness::cli::run(std::env::args_os());
    print!("{}", outcome.stdout);
    eprint!("{}", outcome.stderr);
    let _ = std::io::stdout().flush();
    std::process::exit(outcome.code);
}
