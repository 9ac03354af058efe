use clap::Parser;

fn main() {
    let cli = discharge::cli::Cli::parse();
    if let Err(e) = discharge::cli::execute(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
