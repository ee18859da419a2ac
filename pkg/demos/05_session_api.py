"""Drive a live session through the HTTP API, exactly like the console does.

Starts the service in-process against a temporary corpus, opens a session,
scores a few trials (with idempotency keys, including a deliberate double
submit), then exports the append-only log.
"""

import json
import tempfile
import uuid
from pathlib import Path

from fastapi.testclient import TestClient

from srtlab.corpus import make_synthetic_corpus
from srtlab.service import SessionStore, create_app

work = Path(tempfile.mkdtemp(prefix="srtlab-api-demo-"))
corpus = make_synthetic_corpus(work / "corpus", n_sentences=12, seed=5,
                               story_seconds=3.0, seconds_per_word=0.15)
store = SessionStore(work / "sessions", corpus)
client = TestClient(create_app(store))

state = client.post("/sessions", json={
    "patient": {"code": "demo-child", "age": 9},
    "condition": "SV0",
    "seed": 99,
}).json()
sid = state["session_id"]
print(f"session {sid}: phase={state['phase']} "
      f"level={state['pending']['level']:.0f} dB SPL")
print(f"first sentence: {state['pending']['text']!r} "
      f"({state['pending']['words_total']} words)")

for correct in (5, 4, 3, 5, 4):
    pending = state["pending"]
    key = str(uuid.uuid4())
    resp = client.post(f"/sessions/{sid}/trials", json={
        "words_correct": min(correct, pending["words_total"]),
        "idempotency_key": key,
        "expected": {"block": pending["block"], "attempt": pending["attempt"],
                     "trial": pending["trial"]},
    })
    payload = resp.json()
    state = payload["state"]
    print(f"scored trial {pending['trial']} at {pending['level']:.0f} dB -> "
          f"next level {state['pending']['level']:.0f} dB "
          f"({state['phase']})")
    if pending["trial"] == 2:
        again = client.post(f"/sessions/{sid}/trials", json={
            "words_correct": 1, "idempotency_key": key,
        })
        print(f"  duplicate submit with the same key: "
              f"replayed={again.json()['replayed']} (no second trial recorded)")

audio = client.get(f"/sessions/{sid}/trial-audio")
print(f"\npending trial renders to {len(audio.content)} bytes of WAV")

exported = client.get(f"/sessions/{sid}/export").text
lines = exported.strip().splitlines()
print(f"exported log has {len(lines)} records; last record: {lines[-1]}")
trials = [json.loads(l) for l in lines if json.loads(l).get("kind") == "trial"]
print(f"levels so far: {[t['level'] for t in trials]}")
