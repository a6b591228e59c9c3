fn main() {
    std::process::exit(qpinf::cli::main_with(std::env::args_os()));
}
