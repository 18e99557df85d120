fn main() {
    let code = pmugan_cli::main_with_args(std::env::args_os(), &mut std::io::stderr());
    std::process::exit(code);
}
