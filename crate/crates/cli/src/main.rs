fn main() {
    std::process::exit(lsep_cli::main_with(std::env::args_os()));
}
