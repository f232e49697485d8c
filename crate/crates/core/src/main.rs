fn main() -> std::process::ExitCode {
    dxq::cli::main()
}
