fn main() {
    std::process::exit(afb_cli::run(std::env::args_os()));
}
