use clap::Parser;

fn main() {
    let cli = zsda_cli::Cli::parse();
    if let Err(e) = zsda_cli::execute(cli) {
        eprintln!("zsda: {e}");
        std::process::exit(e.exit_code());
    }
}
