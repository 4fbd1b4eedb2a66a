use super::EvalError;

/// A trained model's validation behaviour.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub name: String,
    /// Validation macro accuracy, same unit as the baseline it is compared to.
    pub accuracy: f64,
    /// Argmax class per validation clip, in a shared clip order.
    pub predictions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    /// Indices into the candidate list, in selection order.
    pub members: Vec<usize>,
    pub names: Vec<String>,
    /// Mean pairwise argmax disagreement of the members.
    pub diversity: f64,
}

fn disagreement(a: &[usize], b: &[usize]) -> f64 {
    let diff = a.iter().zip(b).filter(|(x, y)| x != y).count();
    diff as f64 / a.len() as f64
}

fn mean_pairwise(cands: &[Candidate], set: &[usize]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0;
    for (i, &a) in set.iter().enumerate() {
        for &b in &set[i + 1..] {
            total += disagreement(&cands[a].predictions, &cands[b].predictions);
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total / pairs as f64
    }
}

/// Keeps candidates strictly above `baseline`, starts from the most accurate
/// and greedily adds whichever raises mean pairwise disagreement most, up to
/// `k` members. Ties go to higher accuracy, then to the smaller name.
pub fn select_ensemble(cands: &[Candidate], baseline: f64, k: usize) -> Result<EnsembleSpec, EvalError> {
    if k < 2 {
        return Err(EvalError::Argument(format!("ensemble size {k} below 2")));
    }
    let n_clips = cands.first().map_or(0, |c| c.predictions.len());
    if n_clips == 0 || cands.iter().any(|c| c.predictions.len() != n_clips) {
        return Err(EvalError::Argument("candidates must share a nonempty validation clip list".into()));
    }
    let mut order: Vec<usize> = (0..cands.len()).filter(|&i| cands[i].accuracy > baseline).collect();
    if order.len() < 2 {
        return Err(EvalError::Selection(format!(
            "{} of {} candidates beat the baseline of {baseline}",
            order.len(),
            cands.len()
        )));
    }
    order.sort_by(|&a, &b| {
        cands[b]
            .accuracy
            .total_cmp(&cands[a].accuracy)
            .then_with(|| cands[a].name.cmp(&cands[b].name))
    });
    let target = k.min(order.len());
    let mut chosen = vec![order[0]];
    while chosen.len() < target {
        let mut best: Option<(usize, f64)> = None;
        for &c in &order {
            if chosen.contains(&c) {
                continue;
            }
            let mut trial = chosen.clone();
            trial.push(c);
            let score = mean_pairwise(cands, &trial);
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((c, score));
            }
        }
        chosen.push(best.unwrap().0);
    }
    Ok(EnsembleSpec {
        names: chosen.iter().map(|&i| cands[i].name.clone()).collect(),
        diversity: mean_pairwise(cands, &chosen),
        members: chosen,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(name: &str, accuracy: f64, predictions: &[usize]) -> Candidate {
        Candidate { name: name.into(), accuracy, predictions: predictions.to_vec() }
    }

    #[test]
    fn forced_choice() {
        let c = vec![
            cand("a", 80.0, &[0, 1, 2, 3]),
            cand("low", 60.0, &[3, 2, 1, 0]),
            cand("b", 79.0, &[0, 1, 2, 3]),
            cand("c", 78.0, &[0, 1, 2, 2]),
            cand("lower", 50.0, &[1, 1, 1, 1]),
        ];
        let e = select_ensemble(&c, 70.0, 3).unwrap();
        let mut m = e.members.clone();
        m.sort();
        assert_eq!(m, [0, 2, 3]);
        assert_eq!(e.members[0], 0);
    }

    #[test]
    fn diverse_member_beats_duplicate() {
        let c = vec![
            cand("top", 85.0, &[0, 1, 2, 3, 4, 5]),
            cand("twin", 84.0, &[0, 1, 2, 3, 4, 5]),
            cand("diverse", 75.0, &[0, 1, 2, 9, 9, 9]),
        ];
        let e = select_ensemble(&c, 70.0, 2).unwrap();
        // brute force: the pair with maximal disagreement, accuracy breaking ties
        let mut best = (0, 0, -1.0, 0.0);
        for i in 0..3 {
            for j in i + 1..3 {
                let d = disagreement(&c[i].predictions, &c[j].predictions);
                let acc = c[i].accuracy + c[j].accuracy;
                if d > best.2 || (d == best.2 && acc > best.3) {
                    best = (i, j, d, acc);
                }
            }
        }
        assert_eq!((best.0, best.1), (0, 2));
        assert_eq!(e.members, [0, 2]);
        assert_eq!(e.names, ["top", "diverse"]);
        assert!((e.diversity - 0.5).abs() < 1e-15);
    }

    #[test]
    fn baseline_above_everyone() {
        let c = vec![cand("a", 60.0, &[0]), cand("b", 65.0, &[1])];
        assert!(matches!(select_ensemble(&c, 70.0, 3), Err(EvalError::Selection(_))));
        assert!(matches!(select_ensemble(&c, 62.0, 3), Err(EvalError::Selection(_))));
        assert_eq!(select_ensemble(&c, 50.0, 3).unwrap().members, [1, 0]);
    }
}
