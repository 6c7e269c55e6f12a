fn main() {
    std::process::exit(pendyn_core::cli::run_from_args(std::env::args_os()));
}
