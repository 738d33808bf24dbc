use serde_json::{json, Value};
use teleassist::scenesim::tasks::{task_scene, SceneVariation, TaskKind};
use teleassist::session::{InputState, Session, SessionConfig};
use teleassist_service::protocol::{ClientMessage, ErrorCode, ServerMessage, PROTOCOL_VERSION};

fn parse(v: Value) -> Result<ClientMessage, serde_json::Error> {
    serde_json::from_value(v)
}

#[test]
fn client_messages_have_a_fixed_shape() {
    assert_eq!(parse(json!({"type": "hello", "version": 1})).unwrap(), ClientMessage::Hello { version: 1 });
    assert_eq!(
        parse(json!({"type": "select_item", "seq": 3, "id": "snap_plane"})).unwrap(),
        ClientMessage::SelectItem { seq: 3, id: "snap_plane".into() }
    );
    let input = serde_json::to_value(ClientMessage::InputState {
        seq: 9,
        input: InputState { pedal: true, ..Default::default() },
    })
    .unwrap();
    assert_eq!(input["type"], "input_state");
    assert_eq!(input["input"]["pedal"], true);
    assert!(input["input"]["controller"]["position"].is_array());

    assert!(parse(json!({"type": "hello", "version": 1, "extra": 0})).is_err());
    assert!(parse(json!({"type": "select_item", "id": "x"})).is_err());
    assert!(parse(json!({"version": 1})).is_err());
}

#[test]
fn server_messages_round_trip() {
    let scene = task_scene(TaskKind::Dial, &SceneVariation::nominal());
    let session = Session::new(scene.clone(), SessionConfig::default(), None).unwrap();
    let messages = [
        ServerMessage::SessionInit { seq: 1, version: PROTOCOL_VERSION, scene, config: session.config().clone() },
        ServerMessage::Frame { seq: 2, frame: session.frame_view(), snapshot: Some(session.snapshot().clone()) },
        ServerMessage::Frame { seq: 3, frame: session.frame_view(), snapshot: None },
        ServerMessage::Error { seq: 4, code: ErrorCode::OutOfOrder, detail: "late".into() },
    ];
    // Mask indices stay server-side.
    let mut light = (**session.snapshot()).clone();
    for c in &mut light.circles {
        c.mask_indices.clear();
    }
    for (i, msg) in messages.iter().enumerate() {
        let text = serde_json::to_string(msg).unwrap();
        let back: ServerMessage = serde_json::from_str(&text).unwrap();
        match (&back, msg) {
            (ServerMessage::Frame { snapshot: Some(got), frame, .. }, ServerMessage::Frame { frame: sent, .. }) => {
                assert_eq!(**got, light);
                assert_eq!(frame, sent);
            }
            _ => assert_eq!(&back, msg),
        }
        assert_eq!(back.seq(), i as u64 + 1);
    }
    let with_snapshot = serde_json::to_value(&messages[1]).unwrap();
    assert!(with_snapshot["snapshot"]["circles"][0].get("mask_indices").is_none());
    let frame = serde_json::to_value(&messages[2]).unwrap();
    assert_eq!(frame["type"], "frame");
    assert!(frame.get("snapshot").is_none());
    assert!(frame["frame"]["menu"]["items"].is_array());
    let error = serde_json::to_value(&messages[3]).unwrap();
    assert_eq!(error["code"], "out_of_order");
    for (code, name) in [
        (ErrorCode::BadMessage, "bad_message"),
        (ErrorCode::VersionMismatch, "version_mismatch"),
        (ErrorCode::Busy, "busy"),
    ] {
        assert_eq!(serde_json::to_value(code).unwrap(), name);
    }
}
