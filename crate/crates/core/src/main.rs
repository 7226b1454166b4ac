use clap::Parser;

fn main() {
    let cli = gsplan::cli::Cli::parse();
    if let Err(e) = gsplan::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
