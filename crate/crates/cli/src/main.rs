fn main() {
    let mut out = std::io::stdout();
    let mut err = std::io::stderr();
    std::process::exit(fedmix_cli::main_with_args(
        std::env::args_os(),
        &mut out,
        &mut err,
    ));
}
