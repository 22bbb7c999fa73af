fn main() {
    std::process::exit(efftox_design::cli::run(std::env::args_os()));
}
