fn main() -> std::process::ExitCode {
    specrag::cli::run()
}
