fn main() {
    std::process::exit(v2xviz_cli::run(std::env::args_os()));
}
