fn main() {
    std::process::exit(mtpd::cli::cli_dispatch(std::env::args_os()));
}
