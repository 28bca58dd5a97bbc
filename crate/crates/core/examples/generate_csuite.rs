//! Generate a CSuite dataset and write it with its ground-truth package.
//!
//!     cargo run --example generate_csuite -- nonlin_simpson /tmp/nonlin_simpson

use std::path::PathBuf;

use deci::datagen::{generate_csuite, write_dataset_dir, CSUITE_NAMES};

fn main() -> deci::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "lingauss".into());
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join(&name));
    if !CSUITE_NAMES.contains(&name.as_str()) {
        eprintln!("unknown dataset {name}; choose one of {CSUITE_NAMES:?}");
        std::process::exit(1);
    }
    let (data, package) = generate_csuite(&name, 0)?;
    write_dataset_dir(&out, &data, &package)?;

    println!("{name}: {} rows x {} variables", data.n_rows(), data.n_vars());
    println!("edges: {:?}", package.graph().edges());
    for case in &package.cases {
        let kind = if case.is_conditional() { "cate" } else { "ate" };
        println!("{kind} case, ground truth {:?}", case.ground_truth);
    }
    println!("written to {}", out.display());
    Ok(())
}
