fn main() {
    for (key, var) in [("GREEDYPOSE_BUILD_TARGET", "TARGET"), ("GREEDYPOSE_BUILD_PROFILE", "PROFILE")] {
        let value = std::env::var(var).unwrap_or_else(|_| "unknown".into());
        println!("cargo:rustc-env={key}={value}");
    }
    println!("cargo:rerun-if-changed=build.rs");
}
