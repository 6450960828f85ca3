fn main() {
    std::process::exit(apfb_cli::run(std::env::args_os()));
}
