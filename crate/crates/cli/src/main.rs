fn main() {
    std::process::exit(abgraph_cli::dispatch(std::env::args_os()));
}
