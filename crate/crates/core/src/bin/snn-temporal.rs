fn main() {
    std::process::exit(snn_temporal::cli::run(std::env::args_os()));
}
