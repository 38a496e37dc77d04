fn main() {
    // CLI wiring lands with the experiment runner.
}
