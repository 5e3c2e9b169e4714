use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match lightkp_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // clap uses 2 for usage errors; keep 2 reserved for I/O.
            std::process::exit(if e.use_stderr() {
                lightkp_cli::EXIT_INVALID
            } else {
                0
            });
        }
    };
    std::process::exit(lightkp_cli::run(cli));
}
