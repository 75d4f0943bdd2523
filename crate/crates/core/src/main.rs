fn main() {
    std::process::exit(metro_regen::cli::main_with_args(std::env::args_os()));
}
