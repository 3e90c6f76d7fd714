fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).target(env_logger::Target::Stderr).init();
    std::process::exit(mmore_cli::main_with_args(std::env::args_os()));
}
