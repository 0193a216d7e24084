fn main() {
    env_logger::init();
    std::process::exit(fafl::cli::run_cli(std::env::args_os().skip(1)));
}
