fn main() {
    std::process::exit(traffic_mtl::cli::main_with_args(std::env::args_os()));
}
