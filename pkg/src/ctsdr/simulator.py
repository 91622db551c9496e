"""Fixed-step execution of jog commands and scripted drilling scenarios.

The simulator owns a joint state and (optionally) a phantom. Each step
clamps commanded rates to the actuation limits, integrates positions,
checks cutting legality (spindle speed and feed when the sweep meets
material) and carves the swept cutter volume. Every run is a deterministic
function of (script, config, phantom state, dt).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .kinematics import tip_position
from .model import JointState, RobotConfig, default_config, validate_config
from .phantom import VoxelPhantom, carve_swept_sphere, swept_occupied

_PROGRESS_EPS = 1e-12


@dataclass(frozen=True)
class Command:
    """Joint-rate targets held until the phase ends.

    Rates are mm/s (translations) and deg/s (rolls). spindle is an rpm
    target applied when the command takes effect, or None to keep the
    current speed. A command runs for `duration` seconds or until the joint
    named in `until` reaches the given value, whichever is configured.
    """

    outer_rate: float = 0.0
    inner_rate: float = 0.0
    outer_roll_rate: float = 0.0
    inner_roll_rate: float = 0.0
    spindle: float | None = None
    duration: float | None = None
    until: tuple[str, float] | None = None

    def __post_init__(self):
        if self.duration is None and self.until is None:
            raise ValueError("command needs a duration or an until condition")
        if self.duration is not None and self.duration < 0.0:
            raise ValueError("duration must be >= 0")
        if self.until is not None:
            field_name, _ = self.until
            if field_name not in _RATE_FOR_FIELD:
                raise ValueError(f"until references unknown joint '{field_name}'")
            object.__setattr__(self, "until", (field_name, float(self.until[1])))

    @property
    def is_roll_only(self) -> bool:
        moves_roll = self.outer_roll_rate != 0.0 or self.inner_roll_rate != 0.0
        moves_translation = self.outer_rate != 0.0 or self.inner_rate != 0.0
        return moves_roll and not moves_translation

    def to_json_dict(self) -> dict:
        d = {
            "outer_rate": self.outer_rate,
            "inner_rate": self.inner_rate,
            "outer_roll_rate": self.outer_roll_rate,
            "inner_roll_rate": self.inner_roll_rate,
        }
        if self.spindle is not None:
            d["spindle"] = self.spindle
        if self.duration is not None:
            d["duration"] = self.duration
        if self.until is not None:
            d["until"] = [self.until[0], self.until[1]]
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "Command":
        until = d.get("until")
        return cls(
            outer_rate=float(d.get("outer_rate", 0.0)),
            inner_rate=float(d.get("inner_rate", 0.0)),
            outer_roll_rate=float(d.get("outer_roll_rate", 0.0)),
            inner_roll_rate=float(d.get("inner_roll_rate", 0.0)),
            spindle=float(d["spindle"]) if d.get("spindle") is not None else None,
            duration=float(d["duration"]) if d.get("duration") is not None else None,
            until=(until[0], float(until[1])) if until is not None else None,
        )


_RATE_FOR_FIELD = {
    "outer_translation": "outer_rate",
    "inner_translation": "inner_rate",
    "outer_roll": "outer_roll_rate",
    "inner_roll": "inner_roll_rate",
}


@dataclass(frozen=True)
class Phase:
    label: str
    command: Command


@dataclass(frozen=True)
class ScenarioScript:
    """Named ordered list of labeled commands plus the starting joint state."""

    name: str
    phases: tuple[Phase, ...]
    initial: JointState = field(default_factory=JointState)
    description: str = ""

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "initial": self.initial.to_json_dict(),
            "phases": [
                {"label": p.label, "command": p.command.to_json_dict()} for p in self.phases
            ],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ScenarioScript":
        return cls(
            name=d["name"],
            description=d.get("description", ""),
            initial=JointState.from_json_dict(d.get("initial", {})),
            phases=tuple(
                Phase(label=p["label"], command=Command.from_json_dict(p["command"]))
                for p in d["phases"]
            ),
        )

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_json_dict(), indent=indent)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioScript":
        return cls.from_json_dict(json.loads(text))


@dataclass(frozen=True)
class Event:
    t: float
    kind: str  # phase_start | phase_end | clamp | fault | discontinuity | bone_contact
    detail: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {"t": self.t, "kind": self.kind, **self.detail}


@dataclass
class RunRecord:
    """Complete trace of one run: sampled trajectory, events, carve totals."""

    scenario: str
    config: RobotConfig
    dt: float
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    joints: np.ndarray = field(default_factory=lambda: np.zeros((0, 5)))
    tips: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    events: list[Event] = field(default_factory=list)
    carved_voxels: int = 0
    faulted: bool = False
    flagged: bool = False
    phantom: VoxelPhantom | None = None

    @property
    def duration(self) -> float:
        return float(self.times[-1]) if len(self.times) else 0.0

    @property
    def final_joints(self) -> JointState:
        return self.joint_state(len(self.times) - 1)

    def joint_state(self, i: int) -> JointState:
        row = self.joints[i]
        return JointState(
            outer_translation=float(row[0]),
            inner_translation=float(row[1]),
            outer_roll=float(row[2]),
            inner_roll=float(row[3]),
            spindle=float(row[4]),
        )

    def tip_locus(self) -> np.ndarray:
        """Tip positions with consecutive duplicates removed (dwell phases)."""
        if len(self.tips) == 0:
            return self.tips
        keep = np.ones(len(self.tips), dtype=bool)
        deltas = np.linalg.norm(np.diff(self.tips, axis=0), axis=1)
        keep[1:] = deltas > 1e-12
        return self.tips[keep]

    def drilling_time(self) -> float | None:
        """Seconds from first material contact to the end of the run."""
        for ev in self.events:
            if ev.kind == "bone_contact":
                return self.duration - ev.t
        return None

    def to_timeline_csv(self, path) -> None:
        data = np.column_stack([self.times, self.joints, self.tips])
        np.savetxt(
            path,
            data,
            delimiter=",",
            header="t_s,outer_translation_mm,inner_translation_mm,outer_roll_deg,"
            "inner_roll_deg,spindle_rpm,tip_x_mm,tip_y_mm,tip_z_mm",
            comments="",
            fmt="%.9g",
        )

    def to_locus_csv(self, path) -> None:
        data = np.column_stack([self.times, self.tips])
        np.savetxt(
            path, data, delimiter=",",
            header="t_s,x_mm,y_mm,z_mm", comments="", fmt="%.9g",
        )

    def events_to_json(self, path=None) -> str:
        text = json.dumps([ev.to_json_dict() for ev in self.events], indent=2) + "\n"
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


class DrillSimulator:
    """Steppable simulator used by both scripted runs and live jogging."""

    def __init__(self, config: RobotConfig, phantom: VoxelPhantom | None = None,
                 initial: JointState | None = None):
        report = validate_config(config)
        if not report.valid:
            raise ValueError("invalid robot configuration: " + "; ".join(report.violations))
        self.config = config
        self.phantom = phantom
        self.joints = initial if initial is not None else JointState()
        self.t = 0.0
        self.events: list[Event] = []
        self.faulted = False
        self.carved_voxels = 0
        self.contact_seen = False
        self.tip = tip_position(config, self.joints)
        self._last_clamp_key: tuple = ()

    # -- clamping helpers ---------------------------------------------------

    def _clamp_rates(self, command: Command) -> dict:
        limits = self.config.joint_limits
        clamped = {}
        trimmed = []
        for name, rate_field, bound in (
            ("outer_translation", "outer_rate", limits.max_translation_speed),
            ("inner_translation", "inner_rate", limits.max_translation_speed),
            ("outer_roll", "outer_roll_rate", limits.max_roll_speed),
            ("inner_roll", "inner_roll_rate", limits.max_roll_speed),
        ):
            rate = getattr(command, rate_field)
            if abs(rate) > bound:
                trimmed.append(name)
                rate = bound if rate > 0 else -bound
            clamped[name] = rate
        if trimmed:
            self._emit_clamp("speed limit", trimmed)
        return clamped

    def _emit_clamp(self, reason: str, joints: list, limit: float | None = None):
        key = (reason, tuple(joints))
        if key == self._last_clamp_key:
            return
        self._last_clamp_key = key
        detail = {"reason": reason, "joints": joints}
        if limit is not None:
            detail["limit"] = limit
        self.events.append(Event(t=self.t, kind="clamp", detail=detail))

    def _emit(self, kind: str, **detail):
        self.events.append(Event(t=self.t, kind=kind, detail=detail))

    # -- stepping -----------------------------------------------------------

    def step(self, command: Command, dt: float, until: tuple[str, float] | None = None
             ) -> float:
        """Advance one step of at most dt seconds; returns the time stepped.

        A pending until-condition shortens the step so the joint lands
        exactly on its target. Faults zero the displacement and latch the
        simulator; they do not raise.
        """
        if dt <= 0.0:
            raise ValueError("dt must be > 0")
        if self.faulted:
            return 0.0
        config = self.config

        rates = self._clamp_rates(command)
        if command.spindle is not None:
            spindle = min(max(command.spindle, 0.0), config.spindle_max)
        else:
            spindle = self.joints.spindle

        # Feed guard: when the sweep would cut, translations are held to the
        # feed limit. The cut test uses the full-rate displacement, which is
        # the conservative side.
        feed = max(abs(rates["outer_translation"]), abs(rates["inner_translation"]))
        if self.phantom is not None and feed > config.feed_limit:
            probe = self._integrate(rates, dt, emit=False)
            probe_tip = tip_position(config, probe)
            if swept_occupied(self.phantom, np.array([self.tip, probe_tip]),
                              config.bit.cut_radius):
                scale = config.feed_limit / feed
                rates["outer_translation"] *= scale
                rates["inner_translation"] *= scale
                self._emit_clamp("feed limit exceeded",
                                 ["outer_translation", "inner_translation"],
                                 config.feed_limit)

        dt_used = dt
        if until is not None:
            field_name, target = until
            rate = rates[field_name]
            current = getattr(self.joints, field_name)
            remaining = target - current
            if abs(remaining) <= _PROGRESS_EPS:
                return 0.0
            if rate * remaining <= 0.0:
                raise RuntimeError(
                    f"command rate for {field_name} does not move toward its target"
                )
            dt_used = min(dt, remaining / rate)

        proposed = self._integrate(rates, dt_used)
        proposed = replace(proposed, spindle=spindle)
        new_tip = tip_position(config, proposed)

        if self.phantom is not None:
            sweep = np.array([self.tip, new_tip])
            cut_radius = config.bit.cut_radius
            if spindle < config.bit.min_cut_rpm:
                if swept_occupied(self.phantom, sweep, cut_radius):
                    self.faulted = True
                    self.joints = replace(self.joints, spindle=spindle)
                    self._emit("fault", fault="advance without spindle",
                               spindle=spindle, min_cut_rpm=config.bit.min_cut_rpm)
                    return 0.0
            else:
                carved = carve_swept_sphere(self.phantom, sweep, cut_radius)
                if carved and not self.contact_seen:
                    self.contact_seen = True
                    self._emit("bone_contact", tip=[float(v) for v in self.tip])
                self.carved_voxels += carved

        self.joints = proposed
        self.tip = new_tip
        self.t += dt_used
        return dt_used

    def _integrate(self, rates: dict, dt: float, emit: bool = True) -> JointState:
        limits = self.config.joint_limits
        j = self.joints
        values = {
            "outer_translation": j.outer_translation + rates["outer_translation"] * dt,
            "inner_translation": j.inner_translation + rates["inner_translation"] * dt,
            "outer_roll": j.outer_roll + rates["outer_roll"] * dt,
            "inner_roll": j.inner_roll + rates["inner_roll"] * dt,
        }
        pinned = []
        for name in ("outer_translation", "inner_translation"):
            lo, hi = limits.translation_range(name)
            if values[name] < lo or values[name] > hi:
                values[name] = min(max(values[name], lo), hi)
                pinned.append(name)
        # The inner tip may never fall behind the outer tip: stop the mover.
        if values["inner_translation"] < values["outer_translation"]:
            if rates["inner_translation"] < 0.0:
                values["inner_translation"] = values["outer_translation"]
                pinned.append("inner_translation")
            else:
                values["outer_translation"] = values["inner_translation"]
                pinned.append("outer_translation")
        if pinned and emit:
            self._emit_clamp("joint limit reached", pinned)
        return JointState(spindle=j.spindle, **values)


class ScriptRunner:
    """Drives a script one sub-step at a time.

    run_scenario consumes a runner in a single loop; the teleop service
    advances one tick's worth of sub-steps per call. Both follow the exact
    same sequence of simulator steps, so a streamed run reproduces a batch
    run sample for sample.
    """

    def __init__(self, script: ScenarioScript, config: RobotConfig,
                 phantom: VoxelPhantom | None = None, dt: float = 0.01):
        if dt <= 0.0:
            raise ValueError("dt must be > 0")
        self.script = script
        self.config = config
        self.phantom = phantom
        self.dt = dt
        self.sim = DrillSimulator(config, phantom=phantom, initial=script.initial)
        self.times = [self.sim.t]
        self.joints_rows = [_joint_row(self.sim.joints)]
        self.tips = [self.sim.tip.copy()]
        self.flagged = False
        self.finished = len(script.phases) == 0
        self._phase_idx = 0
        self._phase_opened = False
        self._phase_elapsed = 0.0
        self._tip_before = self.sim.tip.copy()

    def step(self, substeps: int = 1) -> float:
        """Advance up to `substeps` sub-steps; returns simulated time used."""
        used = 0.0
        for _ in range(substeps):
            if self.finished:
                break
            used += self._step_once()
        return used

    def _step_once(self) -> float:
        while not self.finished:
            phase = self.script.phases[self._phase_idx]
            command = phase.command
            if not self._phase_opened:
                self.sim._emit("phase_start", phase=phase.label)
                self._tip_before = self.sim.tip.copy()
                self._phase_elapsed = 0.0
                self._phase_opened = True

            if command.until is not None:
                current = getattr(self.sim.joints, command.until[0])
                if abs(command.until[1] - current) <= 1e-9:
                    self._close_phase(completed=True)
                    continue
                step_dt = self.dt
            else:
                remaining = command.duration - self._phase_elapsed
                if remaining <= 1e-12:
                    self._close_phase(completed=True)
                    continue
                step_dt = min(self.dt, remaining)

            before = getattr(self.sim.joints, command.until[0]) if command.until else None
            used = self.sim.step(command, step_dt, until=command.until)
            self._phase_elapsed += used
            if used > 0.0:
                self.times.append(self.sim.t)
                self.joints_rows.append(_joint_row(self.sim.joints))
                self.tips.append(self.sim.tip.copy())
            if self.sim.faulted:
                self._close_phase(completed=False)
                self.finished = True
                return used
            if command.until is not None:
                after = getattr(self.sim.joints, command.until[0])
                if abs(after - before) <= _PROGRESS_EPS:
                    raise RuntimeError(
                        f"phase '{phase.label}' cannot reach its target; "
                        f"{command.until[0]} is pinned at {after:.6g}"
                    )
            return used
        return 0.0

    def _close_phase(self, completed: bool):
        phase = self.script.phases[self._phase_idx]
        if completed and phase.command.is_roll_only:
            jump = float(np.linalg.norm(self.sim.tip - self._tip_before))
            clearance = (self.config.bit.cut_radius
                         - 0.5 * self.config.outer_tube.outer_diameter)
            exceeds = jump > clearance
            self.sim._emit("discontinuity", phase=phase.label, magnitude=jump,
                           clearance=clearance, exceeds=exceeds)
            if exceeds:
                self.flagged = True
        self.sim._emit("phase_end", phase=phase.label, completed=completed)
        self._phase_idx += 1
        self._phase_opened = False
        if self._phase_idx >= len(self.script.phases):
            self.finished = True

    def record(self) -> RunRecord:
        return RunRecord(
            scenario=self.script.name,
            config=self.config,
            dt=self.dt,
            times=np.array(self.times),
            joints=np.array(self.joints_rows),
            tips=np.array(self.tips),
            events=self.sim.events,
            carved_voxels=self.sim.carved_voxels,
            faulted=self.sim.faulted,
            flagged=self.flagged,
            phantom=self.phantom,
        )


def run_scenario(script: ScenarioScript, config: RobotConfig,
                 phantom: VoxelPhantom | None = None, dt: float = 0.01) -> RunRecord:
    """Execute a script phase by phase into a RunRecord.

    Phases with until-conditions land exactly on their targets (the last
    step is shortened), so phase times are independent of dt. A fault aborts
    the run and returns the partial record with faulted=True.
    """
    runner = ScriptRunner(script, config, phantom=phantom, dt=dt)
    while not runner.finished:
        runner.step()
    return runner.record()


def _joint_row(j: JointState) -> list:
    return [j.outer_translation, j.inner_translation, j.outer_roll, j.inner_roll, j.spindle]


def builtin_scenarios(config: RobotConfig | None = None) -> list[ScenarioScript]:
    """The three stock drilling scripts: S1, S2 and OOP90.

    S1 drills the first arc with aligned tubes, rolls the inner tube 180
    degrees in place, then continues with the inner tube alone. S2 starts
    with the tubes opposed, pre-extends 10.8 mm, co-advances to the 40.7 mm
    outer arc and finishes with +50 mm of inner travel. OOP90 is S1 with a
    90 degree roll, steering the second arc out of the first bend plane.
    """
    if config is None:
        config = default_config()
    feed = config.feed_default
    roll_rate = config.joint_limits.max_roll_speed
    spin = config.spindle_max

    s1 = ScenarioScript(
        name="S1",
        description="aligned co-advance, 180 degree in-place roll, inner advance",
        initial=JointState(),
        phases=(
            Phase("co-advance", Command(outer_rate=feed, inner_rate=feed, spindle=spin,
                                        until=("outer_translation", 20.0))),
            Phase("roll", Command(inner_roll_rate=roll_rate, until=("inner_roll", 180.0))),
            Phase("inner-advance", Command(inner_rate=feed,
                                           until=("inner_translation", 70.0))),
        ),
    )
    s2 = ScenarioScript(
        name="S2",
        description="opposed tubes from the start: pre-extend, co-advance, inner advance",
        initial=JointState(inner_roll=180.0),
        phases=(
            Phase("pre-extend", Command(outer_rate=feed, inner_rate=feed, spindle=spin,
                                        until=("outer_translation", 10.8))),
            Phase("co-advance", Command(outer_rate=feed, inner_rate=feed,
                                        until=("outer_translation", 40.7))),
            Phase("inner-advance", Command(inner_rate=feed,
                                           until=("inner_translation", 90.7))),
        ),
    )
    oop90 = ScenarioScript(
        name="OOP90",
        description="aligned co-advance, 90 degree in-place roll, inner advance",
        initial=JointState(),
        phases=(
            Phase("co-advance", Command(outer_rate=feed, inner_rate=feed, spindle=spin,
                                        until=("outer_translation", 20.0))),
            Phase("roll", Command(inner_roll_rate=roll_rate, until=("inner_roll", 90.0))),
            Phase("inner-advance", Command(inner_rate=feed,
                                           until=("inner_translation", 70.0))),
        ),
    )
    return [s1, s2, oop90]


def scenario_by_name(name: str, config: RobotConfig | None = None) -> ScenarioScript:
    for script in builtin_scenarios(config):
        if script.name == name:
            return script
    known = ", ".join(s.name for s in builtin_scenarios(config))
    raise KeyError(f"unknown scenario '{name}' (built in: {known})")
