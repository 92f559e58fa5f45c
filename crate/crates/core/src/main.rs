fn main() {
    std::process::exit(opinion_steer::cli::parse_and_run(std::env::args_os()));
}
