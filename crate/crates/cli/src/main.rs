fn main() {
    std::process::exit(kkm_cli::main_with(std::env::args_os()) as i32);
}
