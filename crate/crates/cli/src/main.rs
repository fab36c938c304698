fn main() {
    std::process::exit(aog_forge_cli::run(std::env::args_os()));
}
