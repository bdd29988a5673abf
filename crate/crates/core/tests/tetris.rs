use std::collections::HashMap;

use noisy_mdp::mdp::ValueFunction;
use noisy_mdp::rng::RngStream;
use noisy_mdp::tetris::*;
use rand::Rng;

fn golden(name: &str) -> String {
    std::fs::read_to_string(format!("{}/tests/golden/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

#[test]
fn footprints_match_golden_table() {
    assert_eq!(footprint_table_text(), golden("footprints.txt"));
}

#[test]
fn vertical_i_fills_a_one_wide_gap() {
    let text = golden("i_drop.txt");
    let mut sections: Vec<Vec<&str>> = Vec::new();
    for line in text.lines() {
        if line.starts_with("; before") || line.starts_with("; after") {
            sections.push(Vec::new());
        } else if !line.starts_with(';') {
            sections.last_mut().unwrap().push(line);
        }
    }
    let before = Board::from_text(&sections[0]).unwrap();
    let after = Board::from_text(&sections[1]).unwrap();
    let placed = before.place(1, TetrisAction { rotation: 1, col: 6 }).unwrap();
    assert_eq!(placed.rows_cleared, 1);
    assert_eq!(placed.board, after);
}

#[test]
fn cells_are_conserved_over_random_play() {
    let mut rng = RngStream::new(200, 0).rng();
    let mut state = GameState::new(Board::default_size(), 1);
    for _ in 0..10_000 {
        if state.is_over() {
            state = GameState::new(Board::default_size(), rng.random_range(1..=7));
            continue;
        }
        let legal = state.legal_actions();
        let a = legal[rng.random_range(0..legal.len())];
        let before = state.board.occupied_cells();
        let out = step(&state, a).unwrap();
        assert_eq!(out.board.occupied_cells() + 10 * out.rows_cleared, before + 4);
        assert!(!out.board.has_full_row());
        assert_eq!(step(&state, a).unwrap(), out);
        state = GameState::new(out.board, rng.random_range(1..=7));
    }
}

#[test]
fn design_rows_match_recomputed_features() {
    let mut rng = RngStream::new(201, 0).rng();
    let mut state = GameState::new(Board::default_size(), 4);
    for _ in 0..300 {
        if state.is_over() {
            state = GameState::new(Board::default_size(), rng.random_range(1..=7));
        }
        let (actions, r) = feature_r_matrix(&state).unwrap();
        assert_eq!(actions, state.legal_actions());
        for (i, &a) in actions.iter().enumerate() {
            let f = step(&state, a).unwrap().board.features().0;
            assert_eq!([r[(i, 0)], r[(i, 1)], r[(i, 2)]], f);
        }
        let a = actions[rng.random_range(0..actions.len())];
        state = GameState::new(step(&state, a).unwrap().board, rng.random_range(1..=7));
    }
}

#[test]
fn zero_value_function_chooses_uniformly() {
    let v = ValueFunction::basis(vec![0.0; 3]);
    let g = generate_data(&v, 3000, 202, BoardSettings::default(), true).unwrap();
    // Pool contexts with the same legal-set size.
    let mut by_size: HashMap<usize, Vec<usize>> = HashMap::new();
    for o in &g.dataset.observations {
        by_size.entry(o.num_actions()).or_default().push(o.action);
    }
    let (&m, actions) = by_size.iter().max_by_key(|(_, a)| a.len()).unwrap();
    let mut counts = vec![0usize; m];
    for &a in actions {
        counts[a] += 1;
    }
    let e = actions.len() as f64 / m as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    // 0.999 quantile of χ² with m − 1 degrees of freedom, Wilson-Hilferty.
    let k = (m - 1) as f64;
    let crit = k * (1.0 - 2.0 / (9.0 * k) + 3.090 * (2.0 / (9.0 * k)).sqrt()).powi(3);
    assert!(chi2 < crit, "chi2 {chi2} vs {crit} (M = {m}, n = {})", actions.len());
}

#[test]
fn careful_controller_survives() {
    let v = ValueFunction::basis(vec![-3.0, -15.0, -1.0]);
    let survived = (0..100)
        .filter(|&s| noisy_survival(&v, s, BoardSettings::default(), 250).unwrap() >= 250)
        .count();
    assert!(survived >= 60, "{survived}/100");
}

#[test]
fn hole_seeking_controller_dies_quickly() {
    let v = ValueFunction::basis(vec![0.0, 5.0, 0.0]);
    let mut lengths: Vec<usize> = (0..100)
        .map(|s| noisy_survival(&v, s, BoardSettings::default(), 500).unwrap())
        .collect();
    lengths.sort();
    assert!(lengths[50] < 100, "median {}", lengths[50]);
}

#[test]
fn map_prediction_matches_plurality_of_independent_draws() {
    let v = ValueFunction::basis(vec![-3.0, -15.0, -1.0]);
    let g = generate_data(&v, 30, 203, BoardSettings::default(), true).unwrap();
    let draws: Vec<&ValueFunction> = std::iter::repeat_n(&v, 10_000).collect();
    let mut rng = RngStream::new(204, 0).rng();
    for o in g.dataset.observations.iter().take(10) {
        let mut counts = vec![0usize; o.num_actions()];
        for _ in 0..10_000 {
            counts[noisy_mdp::choice::sample_action(v.values(), &o.r, &mut rng).unwrap().0] += 1;
        }
        let mut sorted = counts.clone();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        let pred = map_predicted_action(&draws, &o.r, 1.0, &mut rng).unwrap();
        let oracle = counts.iter().position(|&c| c == sorted[0]).unwrap();
        // Near-ties between the top two may legitimately flip.
        if sorted[0] as f64 - sorted[1] as f64 > 4.0 * (sorted[0] as f64).sqrt() {
            assert_eq!(pred, oracle);
        }
    }
}

#[test]
fn generated_files_round_trip_and_replay() {
    let v = ValueFunction::basis(vec![-3.0, -15.0, -1.0]);
    let g = generate_data(&v, 500, 205, BoardSettings::default(), true).unwrap();
    let text = g.dataset.to_jsonl_string();
    assert_eq!(text.lines().count(), 501);
    let back = noisy_mdp::choice::Dataset::read_jsonl(text.as_bytes()).unwrap();
    assert_eq!(back, g.dataset);
    assert!(g.replay.replay().is_ok());
}
