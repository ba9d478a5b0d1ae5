use clap::Parser;

fn main() {
    let cli = ghmix_cli::Cli::parse();
    if let Err(e) = ghmix_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
