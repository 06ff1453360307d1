fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ORDERFUSION_LOG", "error")).init();
    std::process::exit(orderfusion::cli::dispatch(std::env::args_os()));
}
