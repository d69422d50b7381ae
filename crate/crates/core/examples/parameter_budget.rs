//! Prints layer lengths and per-layer parameter counts of the default and
//! mini networks.

use punctfuse::tdnn::{parameter_breakdown, TdnnConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (name, cfg) in [("default", TdnnConfig::default()), ("mini", TdnnConfig::mini())] {
        println!("{name}: input {} -> fused {}, frame lengths {:?}", cfg.input_dim, cfg.d_fused, cfg.layer_lengths()?);
        let breakdown = parameter_breakdown(&cfg)?;
        for layer in &breakdown {
            println!("  {:<16} {:>9}", layer.name, layer.params);
        }
        println!("  {:<16} {:>9}", "total", breakdown.iter().map(|l| l.params).sum::<usize>());
    }
    Ok(())
}
