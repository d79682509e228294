use clap::Parser;

use urylab_cli::commands::{run, Cli, Format};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            let out = match cli.format {
                Format::Json => report.json(),
                Format::Text => report.text(),
            };
            print!("{out}");
            std::process::exit(report.outcome.exit_code());
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}
