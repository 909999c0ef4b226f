fn main() {
    std::process::exit(covar::run());
}
