fn main() {
    std::process::exit(vistacast_cli::run(std::env::args_os()));
}
