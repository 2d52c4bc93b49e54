use std::sync::Arc;
use std::time::Duration;

use onecommon::agent::{AgentAction, Model, ModelConfig, Ablation, Policy};
use onecommon::corpus::{build_vocab, synth_corpus, GrammarConfig};
use onecommon::harness::{read_transcripts, GameAgent, ModelAgent, OracleAgent, TURN_CAP};
use onecommon::pragmatics::PragConfig;
use onecommon::world::{sample_context, GameContext, Player};
use onecommon_service::protocol::*;
use onecommon_service::session::*;

/// Talks `messages` times, then selects its first dot.
struct Chatty {
    messages: usize,
    first: u32,
}

impl GameAgent for Chatty {
    fn begin(&mut self, context: &GameContext, player: Player, _seed: u64) -> onecommon::Result<()> {
        self.first = context.view(player).dots[0].id;
        Ok(())
    }

    fn act(&mut self, _incoming: Option<&[String]>, must_select: bool) -> onecommon::Result<AgentAction> {
        if self.messages == 0 || must_select {
            return Ok(AgentAction::Select(self.first));
        }
        self.messages -= 1;
        Ok(AgentAction::Message(vec!["i".into(), "see".into(), "one".into()]))
    }
}

struct Broken;

impl GameAgent for Broken {
    fn begin(&mut self, _: &GameContext, _: Player, _: u64) -> onecommon::Result<()> {
        Ok(())
    }

    fn act(&mut self, _: Option<&[String]>, _: bool) -> onecommon::Result<AgentAction> {
        Err(onecommon::Error::Protocol("scripted failure".into()))
    }
}

fn session(index: usize, agent: Box<dyn GameAgent + Send>) -> Session {
    Session::new(index, sample_context(40 + index as u64, 4).unwrap(), agent, SessionConfig::default(), None)
}

fn chatty(n: usize) -> Box<dyn GameAgent + Send> {
    Box::new(Chatty { messages: n, first: 0 })
}

fn private_ids(s: &Session) -> Vec<u32> {
    let human = s.game().context().view(HUMAN).ids();
    s.game().context().view(AGENT).ids().into_iter().filter(|id| !human.contains(id)).collect()
}

#[test]
fn join_reveals_only_the_human_view() {
    for index in 0..4 {
        let mut s = session(index, chatty(2));
        let frames = s.handle(ClientFrame::Join);
        let ServerFrame::Context { view, session_id, schema_version } = &frames[0] else { panic!("{frames:?}") };
        assert_eq!(*schema_version, PROTOCOL_SCHEMA_VERSION);
        assert_eq!(session_id, &format!("s{index}"));
        assert_eq!(view, &view_frame(s.game().context().view(HUMAN)));
        let private = private_ids(&s);
        assert!(view.iter().all(|d| !private.contains(&d.id)));
        assert!(matches!(frames.last(), Some(ServerFrame::YourTurn { must_select: false })));
        // The agent opens on odd sessions.
        assert_eq!(frames.len(), if index % 2 == 1 { 3 } else { 2 });
    }
}

#[test]
fn agent_selection_stays_hidden_until_game_over() {
    let mut s = session(1, Box::new(OracleAgent::default()));
    let frames = s.handle(ClientFrame::Join);
    assert_eq!(frames[1], ServerFrame::PartnerSelected);
    assert!(!frames[1].to_json().contains("dot"));
    let human_view = s.game().context().view(HUMAN).ids();
    let shared = *s.game().context().shared_ids.iter().next().unwrap();
    assert!(s.handle(ClientFrame::Message { text: "which one?".into() }).last() == Some(&ServerFrame::YourTurn { must_select: false }));
    let frames = s.handle(ClientFrame::Select { dot_id: shared });
    assert!(human_view.contains(&shared));
    assert_eq!(frames, vec![ServerFrame::GameOver { success: true, both_selections: Selections { human: Some(shared), agent: Some(shared) }, aborted: None }]);
    assert_eq!(s.phase(), Phase::Done);
}

#[test]
fn invalid_and_out_of_turn_frames_are_rejected() {
    let mut s = session(0, chatty(1));
    assert!(matches!(&s.handle(ClientFrame::Message { text: "hi".into() })[..], [ServerFrame::Error { .. }]));
    s.handle(ClientFrame::Join);
    assert!(matches!(&s.handle(ClientFrame::Join)[..], [ServerFrame::Error { .. }]));
    let outside = private_ids(&s)[0];
    let frames = s.handle(ClientFrame::Select { dot_id: outside });
    assert!(matches!(&frames[..], [ServerFrame::Error { reason }] if reason.contains("not in your view")));
    assert!(matches!(&s.handle(ClientFrame::Select { dot_id: 10_000 })[..], [ServerFrame::Error { .. }]));
    assert!(matches!(&s.handle(ClientFrame::Message { text: "   ".into() })[..], [ServerFrame::Error { .. }]));
    assert!(matches!(&s.handle(ClientFrame::Message { text: "<SELECT>".into() })[..], [ServerFrame::Error { .. }]));
    assert_eq!(s.phase(), Phase::Playing);
    assert!(s.game().events().is_empty());

    let frames = s.handle(ClientFrame::Message { text: "i see a dark dot".into() });
    assert_eq!(frames[0], ServerFrame::PartnerMessage { text: "i see one".into() });
    let mine = s.game().context().view(HUMAN).ids()[0];
    let frames = s.handle(ClientFrame::Select { dot_id: mine });
    assert_eq!(frames[0], ServerFrame::PartnerSelected);
    assert!(matches!(frames[1], ServerFrame::GameOver { .. }));
    assert!(matches!(&s.handle(ClientFrame::Message { text: "hi".into() })[..], [ServerFrame::Error { reason }] if reason.contains("over")));
    s.transcript().validate().unwrap();
}

#[test]
fn selection_lockout_refuses_early_selections() {
    let ctx = sample_context(3, 5).unwrap();
    let config = SessionConfig { select_lockout: Duration::from_secs(60), seed: 0 };
    let mut s = Session::new(0, ctx, chatty(3), config, None);
    s.handle(ClientFrame::Join);
    let dot = s.game().context().view(HUMAN).ids()[0];
    assert!(matches!(&s.handle(ClientFrame::Select { dot_id: dot })[..], [ServerFrame::Error { reason }] if reason.contains("opens")));
    assert!(s.game().selection(HUMAN).is_none());
}

#[test]
fn turn_cap_forces_a_selection() {
    let mut s = session(0, chatty(100));
    s.handle(ClientFrame::Join);
    let mut last = Vec::new();
    while !s.game().must_select() {
        last = s.handle(ClientFrame::Message { text: "tell me more".into() });
    }
    assert_eq!(s.game().events().len(), TURN_CAP);
    assert_eq!(last.last(), Some(&ServerFrame::YourTurn { must_select: true }));
    assert!(matches!(&s.handle(ClientFrame::Message { text: "more".into() })[..], [ServerFrame::Error { reason }] if reason.contains("select")));
    let dot = s.game().context().view(HUMAN).ids()[2];
    let frames = s.handle(ClientFrame::Select { dot_id: dot });
    assert!(matches!(frames.last(), Some(ServerFrame::GameOver { aborted: None, .. })));
    s.transcript().validate().unwrap();
}

#[test]
fn agent_failure_aborts_and_is_persisted() {
    let dir = tempfile::tempdir().unwrap();
    let log = Arc::new(TranscriptLog::new(dir.path().join("t.jsonl")));
    let mut s = Session::new(1, sample_context(5, 6).unwrap(), Box::new(Broken), SessionConfig::default(), Some(log.clone()));
    let frames = s.handle(ClientFrame::Join);
    let Some(ServerFrame::GameOver { success: false, aborted: Some(reason), .. }) = frames.last() else { panic!("{frames:?}") };
    assert!(reason.contains("scripted failure"));
    let saved = read_transcripts(log.path()).unwrap();
    assert_eq!(saved.len(), 1);
    assert!(saved[0].aborted.is_some());
}

fn tiny_model() -> Arc<Model> {
    let records = synth_corpus(10, 3, &GrammarConfig::default()).unwrap();
    Arc::new(Model::new(ModelConfig::tiny(), build_vocab(&records), Ablation::FULL, 1).unwrap())
}

#[test]
fn model_agent_game_is_persisted_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let log = Arc::new(TranscriptLog::new(dir.path().join("games.jsonl")));
    let model = tiny_model();
    for index in 0..2 {
        let agent = Box::new(ModelAgent::new(model.clone(), Policy::Greedy));
        let mut s = Session::new(index, sample_context(index as u64, 4).unwrap(), agent, SessionConfig::default(), Some(log.clone()));
        let mut frames = s.handle(ClientFrame::Join);
        let mut turns = 0;
        while s.phase() == Phase::Playing {
            let must = matches!(frames.last(), Some(ServerFrame::YourTurn { must_select: true }));
            frames = if must || turns == 3 {
                s.handle(ClientFrame::Select { dot_id: s.game().context().view(HUMAN).ids()[1] })
            } else {
                s.handle(ClientFrame::Message { text: "do you see a large black dot ?".into() })
            };
            assert!(frames.iter().all(|f| !matches!(f, ServerFrame::Error { .. })), "{frames:?}");
            turns += 1;
        }
        assert!(matches!(frames.last(), Some(ServerFrame::GameOver { aborted: None, .. })));
    }
    assert_eq!(read_transcripts(log.path()).unwrap().len(), 2);
}

#[test]
fn overrunning_the_budget_reduces_pragmatic_sampling() {
    let model = tiny_model();
    let cfg = PragConfig { n_r: 2, n_u: 60, ..Default::default() };
    let mut agent = BudgetedAgent::new(ModelAgent::new(model, Policy::Pragmatic(cfg)), Duration::ZERO);
    agent.begin(&sample_context(1, 4).unwrap(), AGENT, 0).unwrap();
    agent.act(None, false).unwrap();
    let Policy::Pragmatic(after) = agent.policy() else { panic!() };
    assert_eq!(after.n_u, REDUCED_SAMPLES);
}

#[test]
fn malformed_frames_parse_to_errors() {
    for bad in ["", "{}", "{\"type\":\"dance\"}", "{\"type\":\"select\",\"dot_id\":\"x\"}", "{\"type\":\"message\"}", "[1,2]"] {
        assert!(parse_client(bad).is_err(), "{bad}");
    }
    assert_eq!(parse_client("{\"type\":\"join\"}").unwrap(), ClientFrame::Join);
    assert_eq!(parse_client("{\"type\":\"select\",\"dot_id\":12}").unwrap(), ClientFrame::Select { dot_id: 12 });
    let over = ServerFrame::GameOver { success: true, both_selections: Selections { human: Some(1), agent: Some(1) }, aborted: None };
    assert_eq!(over.to_json(), r#"{"type":"game_over","success":true,"both_selections":{"human":1,"agent":1}}"#);
    assert_eq!(ServerFrame::YourTurn { must_select: false }.to_json(), r#"{"type":"your_turn","must_select":false}"#);
    assert_eq!(ServerFrame::PartnerSelected.to_json(), r#"{"type":"partner_selected"}"#);
}
