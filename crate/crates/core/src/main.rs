fn main() {
    std::process::exit(sbamp::cli::main(std::env::args_os()));
}
