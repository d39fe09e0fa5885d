//! Shared fixtures for the integration test suites.

/// Hand-labeled question corpus: (question, expected action phrase,
/// expected temporal sensitivity). Each entry was labeled by applying the
/// documented chunker rules by hand.
#[allow(dead_code)]
pub const CORPUS: &[(&str, Option<&str>, bool)] = &[
    (
        "what happens to the train after moving for a while near the end?",
        Some("moving for a while"),
        true,
    ),
    ("where is the video taken?", None, false),
    ("what does A do after raising her hand?", Some("raising her hand"), true),
    ("How many people are involved in the video?", None, false),
    ("why did the boy cry at the end?", Some("cry at the end"), true),
    (
        "what did the dog do before jumping into the pool?",
        Some("jumping into the pool"),
        true,
    ),
    ("what does the man carry while walking to the car?", Some("carry"), true),
    ("does the boy smile before the girl waves?", Some("smile"), true),
    ("who is sitting on the bench?", Some("sitting on the bench"), false),
    ("what color is the shirt of the man?", None, false),
    ("when does the baby laugh?", Some("laugh"), true),
    ("what happens when the door opens?", Some("opens"), true),
    ("AFTERNOON tea is served in the video", None, false),
    ("what does the lady pick up at the end?", Some("pick up at the end"), true),
    ("how does the story end near the end?", None, false),
    ("did she point at the dog first?", Some("point at the dog first"), true),
    ("what do they drink after finishing the race?", Some("drink"), true),
    ("why is the girl crying while holding the toy?", Some("crying"), true),
    ("what is behind the sofa?", None, false),
    ("when do the kids clap?", Some("clap"), true),
    ("what does B do until the music stops?", Some("stops"), true),
    ("is the man wearing a hat?", Some("wearing a hat"), false),
    ("what happened before the crash?", None, true),
    ("which toy does the baby grab at the start?", Some("grab at the start"), true),
    ("who walks into the room first?", Some("walks into the room first"), true),
    ("then what does the crowd do?", None, true),
    ("what is the weather like in the video?", None, false),
    (
        "does the cat jump over the fence near the end?",
        Some("jump over the fence"),
        false,
    ),
    ("as the sun sets, what do the birds do?", None, true),
    ("what is inside the box?", None, false),
    ("WHAT HAPPENS AFTER WAVING THE FLAG?", Some("WAVING THE FLAG"), true),
    ("does the chef stir the soup while smiling?", Some("smiling"), true),
    (
        "who feeds the ducks at the beginning?",
        Some("feeds the ducks at the beginning"),
        true,
    ),
    ("is there a lamp on the desk?", None, false),
    ("what does the team do finally?", None, true),
    ("why does the girl run after the bus?", Some("run"), true),
    ("does he open the door before entering?", Some("entering"), true),
    ("what is the boy holding?", Some("holding"), false),
    ("how often does the wheel spin in the video?", Some("spin in the video"), false),
    ("what happens right after the jump?", None, true),
    ("who hugs the child when the music plays?", Some("plays"), true),
    ("where do they dance?", Some("dance"), false),
    (
        "what does the clown do after bouncing the balloon?",
        Some("bouncing the balloon"),
        true,
    ),
    ("which place is shown in the video?", None, false),
    ("does the dog bite the rope while the man laughs?", Some("laughs"), true),
    ("why did the audience cheer at the end?", Some("cheer at the end"), true),
    ("what occurs before the show?", None, true),
    ("do the children play in the garden?", Some("play in the garden"), false),
    ("what does C hold after lifting the box?", Some("hold"), true),
    ("is the road empty when the car leaves?", Some("leaves"), true),
    ("what melts first, the ice or the snow?", None, true),
    ("who trips while chasing the cat?", Some("chasing the cat"), true),
    (
        "what does the farmer do before feeding the horse?",
        Some("feeding the horse"),
        true,
    ),
    ("does the baby crawl towards the toy?", Some("crawl towards the toy"), false),
    (
        "what song plays at the start of the video?",
        Some("plays at the start of the video"),
        true,
    ),
    ("how does the video end?", None, false),
];
