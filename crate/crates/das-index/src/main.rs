fn main() {
    std::process::exit(das_index::cli::run());
}
