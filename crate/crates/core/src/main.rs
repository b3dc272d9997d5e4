fn main() {
    std::process::exit(rcbf::cli::run(std::env::args_os()));
}
