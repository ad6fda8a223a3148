use clap::Parser;

fn main() {
    let cli = qfreq::cli::Cli::parse();
    let code = match std::panic::catch_unwind(|| qfreq::cli::run(&cli)) {
        Ok(code) => code,
        Err(_) => {
            eprintln!("{}", qfreq::cli::Failure::internal("unexpected panic").line());
            4
        }
    };
    std::process::exit(code);
}
