fn main() {
    std::process::exit(softboltz_cli::parse_and_dispatch(std::env::args_os()));
}
