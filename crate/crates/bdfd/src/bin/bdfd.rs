fn main() {
    std::process::exit(bdfd::cli::run());
}
