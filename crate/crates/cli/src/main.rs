use clap::Parser;

fn main() {
    let cli = owninfer_cli::Cli::parse();
    let mut stdout = std::io::stdout();
    if let Err(e) = owninfer_cli::execute(cli, &mut stdout) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
