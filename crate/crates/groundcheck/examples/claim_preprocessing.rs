//! Claim preprocessing: decontextualize a context-dependent claim,
//! decompose a compound claim into atomic facts, and fold per-fact
//! verdicts back into one claim-level label.
//!
//! Run with: cargo run --example claim_preprocessing

use groundcheck::eval::{aggregate_atomic_verdicts, decompose_claim, decontextualize_claim};
use groundcheck::gateway::remote::{ChatClient, OfflineOracleTransport, RemoteClientConfig};

fn main() -> anyhow::Result<()> {
    let client = ChatClient::with_transport(
        RemoteClientConfig {
            api_key_env: String::new(),
            ..Default::default()
        },
        Box::new(OfflineOracleTransport::new()),
    );

    let context = "Poetry matters for children. It can also provide an easy way to remember a lesson.";
    for claim in [
        "It can also provide an easy way to remember a lesson.",
        "Poetry can provide an easy way to remember a lesson.",
    ] {
        let (standalone, rewritten) = decontextualize_claim(claim, context, &client)?;
        println!("claim: {claim}");
        println!("  standalone: {standalone}  rewrite: {rewritten:?}\n");
    }

    let compound = "The parkway opened in 2001 and the tunnel opened in 2004.";
    let facts = decompose_claim(compound, &client)?;
    println!("claim: {compound}");
    for fact in &facts {
        println!("  atomic fact: {fact}");
    }

    // Pretend the detector verified each fact; one failure sinks the claim.
    let verdicts_all_good = vec![1; facts.len()];
    let mut verdicts_one_bad = verdicts_all_good.clone();
    verdicts_one_bad[0] = 0;
    println!(
        "\nall facts supported -> claim label {}",
        aggregate_atomic_verdicts(&verdicts_all_good)?
    );
    println!(
        "one fact unsupported -> claim label {}",
        aggregate_atomic_verdicts(&verdicts_one_bad)?
    );
    Ok(())
}
