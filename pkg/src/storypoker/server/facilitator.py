"""The auto-facilitator: a server-side stand-in for the human Scrum master.

It joins at attach time and then reacts to every state change: presents
the first queued story once the expected estimators are present, prompts
for discussion after a reveal without consensus, and starts the next round
once every present estimator has spoken. Subsequent queued stories chain
automatically inside the engine, so the bot never needs a timer.

Runs as a post-command hook under the host lock; every action it takes is
an ordinary facilitator command and lands in the event log like one.
"""

from __future__ import annotations

from typing import Optional, Set

from ..session import RoundPhase
from .hub import SessionHost

DISCUSSION_PROMPT = "Estimates differ. Please share your reasoning, then re-estimate."

#: Safety bound on actions per reaction; a healthy session settles in <= 3.
_MAX_ACTIONS = 64


class AutoFacilitator:
    def __init__(self, host: SessionHost, wait_for: Optional[Set[str]] = None):
        self.host = host
        self.engine = host.engine
        self.facilitator_id = self.engine.config.facilitator.id
        # which estimators must be present before the first story opens
        if wait_for is None:
            wait_for = {p.id for p in self.engine.config.participants if p.is_estimator}
        self.wait_for = set(wait_for)
        self._prompted: Set[tuple] = set()

    def attach(self) -> "AutoFacilitator":
        if self.facilitator_id not in self.engine.present_ids():
            self.engine.join(self.facilitator_id)
        self.host.add_post_command_hook(self.react)
        return self

    def react(self) -> None:
        for _ in range(_MAX_ACTIONS):
            if not self._step():
                return

    def _step(self) -> bool:
        engine = self.engine
        present = engine.present_ids()
        if self.facilitator_id not in present:
            return False
        story = engine.current_story()
        if story is None:
            if engine.pending_stories() and self.wait_for <= present:
                engine.present_story(self.facilitator_id)
                return True
            return False
        rnd = engine.current_round()
        if rnd is None or rnd.phase is not RoundPhase.DISCUSSING:
            return False
        key = (story.id, rnd.index)
        if key not in self._prompted:
            self._prompted.add(key)
            engine.post_chat(self.facilitator_id, DISCUSSION_PROMPT)
            return True
        speakers = {m.sender_id for m in rnd.chat} - {self.facilitator_id}
        required = {
            pid for pid in present if engine.participant(pid).is_estimator
        }
        if required and required <= speakers:
            engine.start_next_round(self.facilitator_id)
            return True
        return False


def auto_facilitate(host: SessionHost, wait_for: Optional[Set[str]] = None) -> AutoFacilitator:
    return AutoFacilitator(host, wait_for=wait_for).attach()
