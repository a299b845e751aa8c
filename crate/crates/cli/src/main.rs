fn main() {
    std::process::exit(sparse_rnn_cli::run(std::env::args_os()));
}
