use onecommon::agent::{AgentAction, Ablation, Model, ModelConfig, Policy};
use onecommon::corpus::{build_vocab, synth_corpus, Action, GrammarConfig};
use onecommon::harness::*;
use onecommon::structcrf::{ReferentMask, ReferentSequence};
use onecommon::world::{sample_context, GameContext, Player};
use onecommon::Result;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn contexts(n: usize, shared: usize, seed: u64) -> Vec<GameContext> {
    (0..n).map(|i| sample_context(seed + i as u64, shared).unwrap()).collect()
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

#[test]
fn game_alternates_and_hands_the_floor_after_a_selection() {
    let ctx = sample_context(3, 5).unwrap();
    let a_dot = ctx.view_a.dots[0].id;
    let b_dot = ctx.view_b.dots[1].id;
    let mut g = Game::new(ctx, Player::B);
    assert_eq!(g.to_move(), Some(Player::B));
    assert!(g.message(Player::A, words("hi")).is_err());
    g.message(Player::B, words("hi")).unwrap();
    assert_eq!(g.to_move(), Some(Player::A));
    g.select(Player::A, a_dot).unwrap();
    assert_eq!(g.to_move(), Some(Player::B));
    assert!(g.message(Player::A, words("wait")).is_err());
    g.message(Player::B, words("hmm")).unwrap();
    assert_eq!(g.to_move(), Some(Player::B));
    g.select(Player::B, b_dot).unwrap();
    assert!(g.is_over());
    assert_eq!(g.to_move(), None);
    assert_eq!(g.success(), Some(a_dot == b_dot));
    assert!(g.select(Player::B, b_dot).is_err());
}

#[test]
fn game_rejects_foreign_dots_and_enforces_the_turn_cap() {
    let ctx = sample_context(4, 4).unwrap();
    let foreign = ctx.board.iter().map(|d| d.id).find(|id| ctx.view_a.index_of(*id).is_none()).unwrap();
    let mut g = Game::with_cap(ctx.clone(), Player::A, 3);
    assert!(g.select(Player::A, foreign).is_err());
    for p in [Player::A, Player::B, Player::A] {
        g.message(p, words("ok")).unwrap();
    }
    assert!(g.must_select());
    assert!(g.message(Player::B, words("more")).is_err());
    g.select(Player::B, ctx.view_b.dots[0].id).unwrap();
    g.select(Player::A, ctx.view_a.dots[0].id).unwrap();
    assert!(g.is_over());
}

#[test]
fn oracle_agents_always_succeed() {
    let ctxs: Vec<_> = [4, 5, 6].iter().flat_map(|&s| contexts(20, s, 100 * s as u64)).collect();
    let report = run_selfplay(&mut OracleAgent::default(), &mut OracleAgent::default(), &ctxs, 1);
    assert_eq!(report.success_rate, 1.0);
    assert_eq!(report.strata.len(), 3);
    assert!(report.strata.values().all(|s| s.games == 20 && s.success_rate == 1.0));
    for t in &report.transcripts {
        t.validate().unwrap();
    }
}

#[test]
fn starting_player_alternates() {
    let ctxs = contexts(4, 4, 9);
    let report = run_selfplay(&mut OracleAgent::default(), &mut OracleAgent::default(), &ctxs, 1);
    let starters: Vec<_> = report.transcripts.iter().map(|t| t.events[0].speaker).collect();
    assert_eq!(starters, vec![Player::A, Player::B, Player::A, Player::B]);
}

#[test]
fn random_selectors_match_the_analytic_rate() {
    assert!((random_success_rate(4) - 4.0 / 49.0).abs() < 1e-15);
    let ctxs = contexts(10_000, 4, 7);
    let report = run_selfplay(&mut RandomSelector::default(), &mut RandomSelector::default(), &ctxs, 3);
    assert!((report.success_rate - 4.0 / 49.0).abs() < 0.01, "{}", report.success_rate);
}

/// Emits arbitrary moves, legal or not.
struct FuzzAgent {
    rng: ChaCha8Rng,
    ids: Vec<u32>,
    board: Vec<u32>,
}

impl GameAgent for FuzzAgent {
    fn begin(&mut self, context: &GameContext, player: Player, seed: u64) -> Result<()> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.ids = context.view(player).ids();
        self.board = context.board.iter().map(|d| d.id).collect();
        Ok(())
    }

    fn act(&mut self, _incoming: Option<&[String]>, must_select: bool) -> Result<AgentAction> {
        let r: f64 = self.rng.random();
        Ok(if r < 0.02 {
            AgentAction::Select(self.board[self.rng.random_range(0..self.board.len())])
        } else if r < 0.03 {
            AgentAction::Message(vec![])
        } else if must_select || r < 0.2 {
            AgentAction::Select(self.ids[self.rng.random_range(0..self.ids.len())])
        } else {
            AgentAction::Message(words("a dot ?"))
        })
    }
}

fn fuzz_agent() -> FuzzAgent {
    FuzzAgent { rng: ChaCha8Rng::seed_from_u64(0), ids: vec![], board: vec![] }
}

fn check_rules(t: &Transcript) {
    t.validate().unwrap();
    let mut selected = [false, false];
    for e in &t.events {
        assert!(!selected[e.speaker.index()], "move after selection in game {}", t.game);
        if let Action::Select { .. } = e.action {
            selected[e.speaker.index()] = true;
        }
    }
    assert!(t.events.len() <= TURN_CAP + 2);
    if t.aborted.is_none() {
        assert_eq!(selected, [true, true]);
    }
}

#[test]
fn fuzzed_games_never_break_the_rules() {
    let ctxs = contexts(2_000, 5, 40);
    let report = run_selfplay(&mut fuzz_agent(), &mut fuzz_agent(), &ctxs, 8);
    assert!(report.aborted > 0 && report.aborted < report.games);
    report.transcripts.iter().for_each(check_rules);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn direct_game_calls_keep_the_invariants(seed in 0u64..1_000, moves in proptest::collection::vec((any::<bool>(), 0u8..4, 0usize..10), 1..60)) {
        let ctx = sample_context(seed, 4 + (seed % 3) as usize).unwrap();
        let board: Vec<u32> = ctx.board.iter().map(|d| d.id).collect();
        let mut g = Game::new(ctx.clone(), Player::A);
        for (is_a, kind, pick) in moves {
            let p = if is_a { Player::A } else { Player::B };
            let before = g.events().len();
            let legal_turn = g.to_move() == Some(p);
            let ok = match kind {
                0 | 1 => g.message(p, words("the dark one")).is_ok(),
                _ => g.select(p, board[pick % board.len()]).is_ok(),
            };
            prop_assert!(!ok || legal_turn);
            prop_assert_eq!(g.events().len(), before + usize::from(ok));
        }
        let t = Transcript::from_game(0, &g, Player::A, if g.is_over() { None } else { Some("unfinished".into()) });
        check_rules(&t);
    }
}

#[test]
fn transcripts_round_trip_through_jsonl() {
    let ctxs = contexts(6, 6, 2);
    let report = run_selfplay(&mut fuzz_agent(), &mut OracleAgent::default(), &ctxs, 4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("games.jsonl");
    write_transcripts(&path, &report.transcripts[..3]).unwrap();
    for t in &report.transcripts[3..] {
        append_transcript(&path, t).unwrap();
    }
    assert_eq!(read_transcripts(&path).unwrap(), report.transcripts);
}

#[test]
fn tampered_transcript_fails_validation() {
    let ctxs = contexts(1, 4, 12);
    let mut t = run_selfplay(&mut OracleAgent::default(), &mut OracleAgent::default(), &ctxs, 0).transcripts.remove(0);
    t.success = false;
    assert!(t.validate().is_err());
}

fn tiny_model(seed: u64) -> (Model, Vec<onecommon::corpus::DialogueRecord>) {
    let records = synth_corpus(12, seed, &GrammarConfig::default()).unwrap();
    let model = Model::new(ModelConfig::tiny(), build_vocab(&records), Ablation::FULL, seed).unwrap();
    (model, records)
}

#[test]
fn untrained_model_selfplay_terminates_and_is_deterministic() {
    let (model, _) = tiny_model(5);
    let model = Arc::new(model);
    let ctxs = contexts(4, 4, 77);
    let run = || {
        let mut a = ModelAgent::new(model.clone(), Policy::Greedy);
        let mut b = ModelAgent::new(model.clone(), Policy::Greedy);
        run_selfplay(&mut a, &mut b, &ctxs, 21)
    };
    let first = run();
    assert_eq!(first.aborted, 0);
    first.transcripts.iter().for_each(check_rules);
    assert_eq!(first, run());
}

fn seq(bits: &[u8]) -> ReferentSequence {
    ReferentSequence::new(bits.iter().map(|&b| ReferentMask::new(b)).collect())
}

#[test]
fn perfect_predictions_score_one() {
    let p = PerspectivePredictions {
        record: "r".into(),
        player: Player::A,
        resolutions: vec![
            ResolutionCase { event: 0, own: true, gold: seq(&[3, 4]), predicted: seq(&[3, 4]) },
            ResolutionCase { event: 1, own: false, gold: seq(&[0]), predicted: seq(&[0]) },
        ],
        mentions: vec![MentionCase { event: 0, gold: seq(&[3, 4]), predicted: seq(&[3, 4]) }],
        choice: Some((2, 2)),
    };
    let m = CorpusMetrics::from_predictions(&[p]);
    for v in [m.choice_accuracy, m.ref_resolution_dot_accuracy, m.ref_resolution_exact_match, m.partner_ref_accuracy, m.partner_ref_exact, m.next_mention_exact] {
        assert_eq!(v, 1.0);
    }
}

#[test]
fn empty_predictor_on_two_dot_referents() {
    let gold = seq(&[0b11, 0b1010, 0b1100000]);
    let p = PerspectivePredictions {
        record: "r".into(),
        player: Player::B,
        resolutions: vec![ResolutionCase { event: 0, own: true, gold: gold.clone(), predicted: seq(&[0, 0, 0]) }],
        mentions: vec![],
        choice: None,
    };
    let m = CorpusMetrics::from_predictions(&[p]);
    assert!((m.ref_resolution_dot_accuracy - 5.0 / 7.0).abs() < 1e-15);
    assert_eq!(m.ref_resolution_exact_match, 0.0);
    assert_eq!(m.counts.own_expressions, 3);
}

/// Recount from predictions, one dot at a time.
fn recount(preds: &[PerspectivePredictions]) -> [f64; 6] {
    let mut own = (0usize, 0usize, 0usize);
    let mut partner = (0usize, 0usize, 0usize);
    let (mut mh, mut mt, mut ch, mut ct) = (0, 0, 0, 0);
    for p in preds {
        for r in &p.resolutions {
            let slot = if r.own { &mut own } else { &mut partner };
            for (k, g) in r.gold.masks().iter().enumerate() {
                let pred = r.predicted.masks().get(k).copied().unwrap_or_default();
                let correct = (0..7).filter(|&d| g.contains(d) == pred.contains(d)).count();
                slot.0 += correct;
                slot.1 += usize::from(correct == 7);
                slot.2 += 1;
            }
        }
        for m in &p.mentions {
            mt += 1;
            if m.gold.masks().len() == m.predicted.masks().len() && m.gold.masks().iter().zip(m.predicted.masks()).all(|(a, b)| (0..7).all(|d| a.contains(d) == b.contains(d))) {
                mh += 1;
            }
        }
        if let Some((g, q)) = p.choice {
            ct += 1;
            ch += usize::from(g == q);
        }
    }
    let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    [div(ch, ct), div(own.0, 7 * own.2), div(own.1, own.2), div(partner.0, 7 * partner.2), div(partner.1, partner.2), div(mh, mt)]
}

#[test]
fn corpus_metrics_match_an_independent_recount() {
    let (model, records) = tiny_model(8);
    let preds = predict_corpus(&model, &records).unwrap();
    let m = CorpusMetrics::from_predictions(&preds);
    let expected = recount(&preds);
    let got = [m.choice_accuracy, m.ref_resolution_dot_accuracy, m.ref_resolution_exact_match, m.partner_ref_accuracy, m.partner_ref_exact, m.next_mention_exact];
    assert_eq!(got, expected);
    assert_eq!(m.counts.records, records.len());
    assert_eq!(m.counts.choices, 2 * records.len());
    assert!(got.iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(m.ref_resolution_exact_match <= m.ref_resolution_dot_accuracy);
    assert_eq!(eval_corpus(&model, &records).unwrap(), m);
}
