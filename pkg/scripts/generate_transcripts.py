#!/usr/bin/env python3
"""Regenerate the golden teleop transcripts in docs/transcripts/.

Each transcript is a newline-delimited trace of one session against the
default configuration with no phantom:

    S <json>   one server message, exactly as sent on the wire
    C <json>   one client message, exactly as sent on the wire
    T <n>      n service ticks elapse

Replaying the C and T lines against a fresh session must reproduce every S
line byte for byte; the tests and the browser client hold the transcripts
to that standard. Client messages use the field order documented in
docs/protocol.md and integer-valued numbers are written as integers, which
keeps Python and JavaScript encoders byte-compatible.
"""

import sys
from pathlib import Path

from ctsdr.service import Session, encode_message, handle_message, tick

TRANSCRIPT_DIR = Path(__file__).resolve().parent.parent / "docs" / "transcripts"
SESSION_ID = "golden"


class Recorder:
    def __init__(self):
        self.session = Session(SESSION_ID)
        self.lines = ["S " + encode_message(self.session.hello())]

    def send(self, msg: dict):
        self.lines.append("C " + encode_message(msg))
        for reply in handle_message(self.session, msg):
            self.lines.append("S " + encode_message(reply))

    def ticks(self, n: int):
        self.lines.append(f"T {n}")
        for _ in range(n):
            for out in tick(self.session):
                self.lines.append("S " + encode_message(out))

    def run_script_out(self, max_ticks: int = 6000) -> int:
        """Tick until the scripted run finishes; returns the tick count."""
        pending = []
        count = 0
        for _ in range(max_ticks):
            count += 1
            for out in tick(self.session):
                pending.append("S " + encode_message(out))
            if self.session.mode != "scripted":
                break
        else:
            raise RuntimeError("scripted run did not finish")
        self.lines.append(f"T {count}")
        self.lines.extend(pending)
        return count

    def write(self, name: str):
        path = TRANSCRIPT_DIR / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(self.lines) + "\n", encoding="utf-8")
        print(f"wrote {path} ({len(self.lines)} lines)")


def jog_transcript():
    rec = Recorder()
    rec.send({"v": 1, "kind": "set_spindle", "rpm": 1000})
    rec.send({"v": 1, "kind": "jog",
              "rates": {"outer_translation": 1.65, "inner_translation": 1.65}})
    rec.ticks(5)
    rec.send({"v": 1, "kind": "stop"})
    rec.ticks(2)
    rec.write("jog.ndjson")


def reset_transcript():
    rec = Recorder()
    rec.send({"v": 1, "kind": "jog", "rates": {"outer_roll": 30, "inner_roll": 30}})
    rec.ticks(3)
    rec.send({"v": 1, "kind": "reset"})
    rec.ticks(2)
    rec.write("reset.ndjson")


def s2_transcript():
    rec = Recorder()
    rec.send({"v": 1, "kind": "load_scenario", "name": "S2"})
    rec.send({"v": 1, "kind": "start"})
    rec.run_script_out()
    rec.write("s2.ndjson")


def main() -> int:
    jog_transcript()
    reset_transcript()
    s2_transcript()
    return 0


if __name__ == "__main__":
    sys.exit(main())
