use clap::Parser;

use phcirc::cli;

fn main() {
    let parsed = cli::Cli::try_parse();
    let code = match parsed {
        Ok(args) => cli::run(args),
        Err(e) => {
            // help/version are not usage errors
            use clap::error::ErrorKind;
            let _ = e.print();
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => cli::EXIT_OK,
                _ => cli::EXIT_USAGE,
            }
        }
    };
    std::process::exit(code);
}
