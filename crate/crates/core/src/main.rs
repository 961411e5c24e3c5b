fn main() -> std::process::ExitCode {
    csgkit::cli::main()
}
