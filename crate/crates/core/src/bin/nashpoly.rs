fn main() {
    eprintln!("nashpoly: not yet wired");
    std::process::exit(1);
}
