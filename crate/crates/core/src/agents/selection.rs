use rand::Rng;

use super::AgentError;
use crate::netsim::{EndpointId, Frame, MsgType, Network};
use crate::secretsharing::{
    decode_count, encode_count, reconstruct, share_secret, PrimeField, Share,
};

/// `(Σ r_i) mod n_choices`. If any one contribution is uniform on
/// `0..n_choices` and independent of the others, so is the result.
pub fn combine_contributions(contributions: &[u64], n_choices: u64) -> u64 {
    assert!(n_choices >= 1, "need at least one choice");
    let sum: u128 = contributions.iter().map(|&r| r as u128).sum();
    (sum % n_choices as u128) as u64
}

/// Each player draws `r_i` uniform on `0..n_choices` and the players jointly
/// open `Σ r_i mod n_choices`. `rngs[i]` belongs to `players[i]`.
pub fn joint_random_select<R: Rng>(
    net: &mut Network,
    players: &[EndpointId],
    n_choices: u64,
    field: PrimeField,
    threshold: usize,
    rngs: &mut [R],
) -> Result<u64, AgentError> {
    assert_eq!(players.len(), rngs.len(), "one generator per player");
    let contributions: Vec<Option<u64>> = rngs
        .iter_mut()
        .map(|r| Some(r.gen_range(0..n_choices)))
        .collect();
    run_selection(
        net,
        players,
        &contributions,
        n_choices,
        field,
        threshold,
        rngs,
    )
}

/// The selection protocol with explicit contributions; `None` is a player
/// that stays silent.
///
/// Round one: every player Shamir-shares its contribution and sends share
/// `j` to player `j`. Only after all contributions are committed this way
/// does round two open the sum: each player broadcasts the sum of the shares
/// it holds and everyone interpolates.
pub fn run_selection<R: Rng>(
    net: &mut Network,
    players: &[EndpointId],
    contributions: &[Option<u64>],
    n_choices: u64,
    field: PrimeField,
    threshold: usize,
    rngs: &mut [R],
) -> Result<u64, AgentError> {
    if n_choices == 0 {
        return Err(AgentError::Config(
            "selection needs at least one choice".into(),
        ));
    }
    let n = players.len();
    let point = |i: usize| i as u64 + 1;

    // held[i][j]: share of player j's contribution kept by player i
    let mut held: Vec<Vec<Option<Share>>> = vec![vec![None; n]; n];
    for (i, contribution) in contributions.iter().enumerate() {
        let Some(r) = contribution else { continue };
        let secret = encode_count(field, *r)?;
        for share in share_secret(secret, threshold, n, &mut rngs[i])? {
            let j = (share.x - 1) as usize;
            if j == i {
                held[i][i] = Some(share);
            } else {
                net.send(
                    players[j],
                    Frame::new(
                        MsgType::SelectionContribution,
                        players[i],
                        share.to_bytes().to_vec(),
                    ),
                )?;
            }
        }
    }
    net.advance_round()?;

    let mut sums = Vec::with_capacity(n);
    for i in 0..n {
        for env in net.drain(players[i]) {
            if env.frame.msg_type != MsgType::SelectionContribution {
                continue;
            }
            let Some(from) = players.iter().position(|&p| p == env.from) else {
                continue;
            };
            held[i][from] = Some(Share::from_bytes(field, threshold, &env.frame.payload)?);
        }
        if let Some(missing) = held[i].iter().position(Option::is_none) {
            return Err(AgentError::MissingContribution(players[missing]));
        }
        let y = held[i]
            .iter()
            .flatten()
            .fold(field.zero(), |acc, s| acc.add(s.y));
        sums.push(Share {
            x: point(i),
            y,
            threshold,
        });
    }

    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            net.send(
                players[j],
                Frame::new(
                    MsgType::SelectionOpen,
                    players[i],
                    sums[i].to_bytes().to_vec(),
                ),
            )?;
        }
    }
    net.advance_round()?;

    let mut opened = None;
    for i in 0..n {
        let mut shares = vec![sums[i]];
        for env in net.drain(players[i]) {
            if env.frame.msg_type == MsgType::SelectionOpen {
                shares.push(Share::from_bytes(field, threshold, &env.frame.payload)?);
            }
        }
        let total = decode_count(reconstruct(&shares)?)?;
        match opened {
            None => opened = Some(total),
            Some(prev) if prev != total => {
                return Err(AgentError::Config("players opened different sums".into()))
            }
            _ => {}
        }
    }
    let total = opened.ok_or(AgentError::Config("no players".into()))?;
    Ok(total % n_choices)
}
