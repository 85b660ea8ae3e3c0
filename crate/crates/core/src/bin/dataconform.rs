fn main() {
    env_logger::init();
    std::process::exit(dataconform::cli::run(std::env::args_os()));
}
