fn main() {
    std::process::exit(dsn_sched::cli::main_with_args(std::env::args_os()));
}
