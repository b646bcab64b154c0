fn main() {
    println!("headlab");
}
