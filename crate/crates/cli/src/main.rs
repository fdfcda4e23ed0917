fn main() {
    std::process::exit(ddsindy_cli::run(std::env::args_os()));
}
