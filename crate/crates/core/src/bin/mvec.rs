fn main() {
    std::process::exit(mvec::cli::main(std::env::args_os()));
}
