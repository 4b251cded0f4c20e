use clap::Parser;

fn main() {
    let cli = cslw_core::cli::Cli::parse();
    let stdout = std::io::stdout();
    if let Err(e) = cslw_core::cli::run(cli, &mut stdout.lock()) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
