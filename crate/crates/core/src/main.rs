fn main() {
    std::process::exit(impdel::cli::run());
}
