fn main() {
    println!("sruit");
}
