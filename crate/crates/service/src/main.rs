fn main() {
    std::process::exit(kgqa_service::cli::run(std::env::args_os()));
}
