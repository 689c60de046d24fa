fn main() -> std::process::ExitCode {
    gmvae_lab::cli::main()
}
