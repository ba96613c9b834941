fn main() {
    std::process::exit(phonon_collapse_cli::cli_main(std::env::args_os()));
}
