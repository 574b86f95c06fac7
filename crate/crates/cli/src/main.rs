use clap::Parser;

fn main() -> std::process::ExitCode {
    let cli = dtr_cli::Cli::parse();
    match dtr_cli::run(&cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
