fn main() {
    std::process::exit(spectraudit::cli::main_entry());
}
