fn main() {
    std::process::exit(msarobust_cli::run_command(std::env::args_os()));
}
