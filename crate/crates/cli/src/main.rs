fn main() {
    let code = lbvs_cli::main_with_args(std::env::args_os());
    std::process::exit(code as i32);
}
