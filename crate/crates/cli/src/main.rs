fn main() {
    std::process::exit(synthctl::main_with(std::env::args_os()));
}
