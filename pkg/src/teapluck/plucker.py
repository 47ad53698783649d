"""Discrete-time simulator of a force-controlled tea plucking finger.

Two gripper pairs close symmetrically on a stem until the strain-gauge
reading reaches the clamp target, the lower pair then holds while the upper
pair pulls upward at constant clamp angle until the stem parts, after which
both pairs open and the mechanism resets once the sensor reads zero.

One tick is: read the ADC, decide, step the motors. Units are mm and N.

Every trial ends in exactly one of four outcomes: ``Success``, ``Slip``
(clamp force fell below what the stem needs while pulling), ``Crush`` (clamp
force exceeded the stem's crush limit) or ``Incomplete`` (the stroke or the
tick budget ran out, or the grippers closed on nothing).
"""

import dataclasses
import functools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

IDLE = "Idle"
CLOSING = "Closing"
CLAMPED = "Clamped"
PULLING = "Pulling"
OPENING = "Opening"
RESET = "Reset"
PHASES = (IDLE, CLOSING, CLAMPED, PULLING, OPENING, RESET)

LEGAL_EDGES = frozenset({
    (IDLE, CLOSING),
    (CLOSING, CLOSING), (CLOSING, CLAMPED),
    (CLAMPED, PULLING),
    (PULLING, PULLING), (PULLING, OPENING),
    (OPENING, OPENING), (OPENING, RESET),
    (RESET, IDLE),
})

SUCCESS = "Success"
SLIP = "Slip"
CRUSH = "Crush"
INCOMPLETE = "Incomplete"
OUTCOMES = (SUCCESS, SLIP, CRUSH, INCOMPLETE)


DEFAULT_SEED = 7


class SimulationError(RuntimeError):
    """Internal consistency violation (illegal transition, broken symmetry)."""


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class GripperModel:
    """Linear-elastic gripper calibrated at one (force, deflection) point."""

    max_deflection_at_4N: float = 0.027
    calibration_force: float = 4.0
    cross_section: tuple = (3.0, 3.0)
    clamp_force_target: float = 4.0
    force_band: tuple = (3.0, 4.0)
    F1: float = 3.57
    F2: float = 2.41
    stiffness: float = None

    def __post_init__(self):
        if self.stiffness is None:
            object.__setattr__(self, "stiffness",
                               self.calibration_force / self.max_deflection_at_4N)
        if self.stiffness <= 0:
            raise ValueError("stiffness must be > 0")
        lo, hi = self.force_band
        if not lo < hi:
            raise ValueError("force_band must be (min, max) with min < max")
        if not 0 < self.clamp_force_target <= hi:
            raise ValueError("clamp_force_target must lie in (0, force_band max]")

    def contact_forces(self, clamp_force):
        """Gripper load components scaled from the calibrated (F1, F2) pair."""
        scale = clamp_force / self.calibration_force
        return self.F1 * scale, self.F2 * scale


@dataclass(frozen=True)
class BridgeSensor:
    """Strain-gauge bridge folded into one gain, read by a saturating ADC."""

    force_to_voltage_gain: float = 0.32  # V/N; 10 N -> 3.2 V, inside the span
    adc_bits: int = 12
    adc_full_scale: float = 3.3  # V
    noise_sigma: float = 0.0  # V
    bias_fault: float = 0.0  # V

    def __post_init__(self):
        if self.force_to_voltage_gain <= 0 or self.adc_full_scale <= 0:
            raise ValueError("gain and full scale must be > 0")
        if self.adc_bits < 1:
            raise ValueError("adc_bits must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @property
    def max_code(self):
        return 2 ** self.adc_bits - 1

    @property
    def lsb_force(self):
        return self.adc_full_scale / self.max_code / self.force_to_voltage_gain

    def code(self, voltage):
        # round half up, then saturate
        raw = math.floor(voltage / self.adc_full_scale * self.max_code + 0.5)
        return min(max(raw, 0), self.max_code)

    def code_for_force(self, force):
        """Noise- and bias-free code for ``force``; the controller's setpoint."""
        return self.code(self.force_to_voltage_gain * force)

    def force_for_code(self, code):
        return code / self.max_code * self.adc_full_scale / self.force_to_voltage_gain


@dataclass(frozen=True)
class MotorModel:
    step_angle: float = 1.8  # degrees per step
    displacement_per_step: float = 0.002  # mm per step, through the sleeve linkage
    rate: int = 1  # steps per tick

    def __post_init__(self):
        if self.displacement_per_step <= 0:
            raise ValueError("displacement_per_step must be > 0")
        if self.rate < 1:
            raise ValueError("rate must be >= 1")

    @property
    def per_tick(self):
        return self.displacement_per_step * self.rate


@dataclass(frozen=True)
class StemSpec:
    diameter: float
    break_tension: float = 2.0
    slip_threshold: float = 3.0
    crush_limit: float = 6.0

    def __post_init__(self):
        if self.diameter <= 0:
            raise ValueError("diameter must be > 0")
        if self.break_tension <= 0:
            raise ValueError("break_tension must be > 0")
        if not 0 < self.slip_threshold < self.crush_limit:
            raise ValueError("need 0 < slip_threshold < crush_limit")


@dataclass(frozen=True)
class SimConfig:
    gripper: GripperModel = field(default_factory=GripperModel)
    sensor: BridgeSensor = field(default_factory=BridgeSensor)
    clamp_motor: MotorModel = field(default_factory=MotorModel)
    pull_motor: MotorModel = field(
        default_factory=lambda: MotorModel(displacement_per_step=0.02))
    open_gap: float = 4.0  # mm, per gripper pair
    stroke: float = 20.0  # mm of pull before giving up
    tension_per_mm: float = 0.5  # N of stem tension per mm pulled
    filter_window: int = 1  # moving-average length on ADC codes; 1 = unfiltered
    capture_probability: float = 1.0  # leaf gatherer: chance the stem is in the jaws
    tick_budget: int = 20000
    tick_seconds: float = 0.001

    def __post_init__(self):
        if self.open_gap <= 0 or self.stroke <= 0 or self.tension_per_mm <= 0:
            raise ValueError("open_gap, stroke and tension_per_mm must be > 0")
        if self.filter_window < 1:
            raise ValueError("filter_window must be >= 1")
        if not 0.0 <= self.capture_probability <= 1.0:
            raise ValueError("capture_probability must lie in [0, 1]")

    @property
    def overshoot_bound(self):
        """Clamp-force change produced by one tick of closing motion."""
        return self.gripper.stiffness * self.clamp_motor.per_tick


@dataclass(frozen=True)
class TrialFaults:
    """Faults realised for one trial."""

    bias_force: float = 0.0  # N-equivalent offset added to the bridge voltage
    noise_sigma: float = 0.0  # extra V of sensor noise
    stop_delay_ticks: int = 0  # closing continues this long after the stop decision
    derate: float = 0.0  # fractional clamp-force loss while pulling (misalignment)
    pull_stalled: bool = False  # pulling motor never moves
    captured: bool = True


NO_FAULTS = TrialFaults()


@dataclass(frozen=True)
class FaultConfig:
    """Per-trial fault probabilities; each fault is drawn independently."""

    bias_rate: float = 0.0
    bias_force: float = 4.0
    noise_sigma: float = 0.0
    delay_rate: float = 0.0
    delay_ticks: int = 40
    misalign_rate: float = 0.0
    misalign_derate: float = 0.5
    stall_rate: float = 0.0

    def __post_init__(self):
        for name in ("bias_rate", "delay_rate", "misalign_rate", "stall_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0.0 <= self.misalign_derate <= 1.0:
            raise ValueError("misalign_derate must lie in [0, 1]")
        if self.delay_ticks < 0 or self.noise_sigma < 0:
            raise ValueError("delay_ticks and noise_sigma must be >= 0")

    def draw(self, rng, capture_probability=1.0):
        # fixed draw order keeps trials reproducible when rates change
        u = rng.random(5)
        return TrialFaults(
            bias_force=self.bias_force if u[0] < self.bias_rate else 0.0,
            noise_sigma=self.noise_sigma,
            stop_delay_ticks=self.delay_ticks if u[1] < self.delay_rate else 0,
            derate=self.misalign_derate if u[2] < self.misalign_rate else 0.0,
            pull_stalled=bool(u[3] < self.stall_rate),
            captured=bool(u[4] < capture_probability),
        )


@dataclass(frozen=True)
class PluckerState:
    phase: str = IDLE
    upper_gap: float = 4.0
    lower_gap: float = 4.0
    true_clamp_force: float = 0.0
    measured_clamp_force: float = 0.0
    pull_displacement: float = 0.0
    tick: int = 0
    readings: tuple = ()
    stop_ticks_left: int = -1  # >= 0 while a delayed stop is pending
    peak_clamp_force: float = 0.0
    separated: bool = False
    outcome: str = None


@dataclass(frozen=True)
class PluckOutcome:
    kind: str
    ticks_elapsed: int
    peak_clamp_force: float
    faults: TrialFaults = NO_FAULTS
    trajectory: tuple = ()


def gripper_deflection(force, model=None):
    if force < 0:
        raise ValueError("force must be >= 0")
    model = model or GripperModel()
    return force / model.stiffness


def sense_force(true_force, sensor, rng=None):
    """Return ``(measured_force, adc_code)`` for one ADC conversion."""
    if true_force < 0:
        raise ValueError("true_force must be >= 0")
    voltage = sensor.force_to_voltage_gain * true_force + sensor.bias_fault
    if sensor.noise_sigma > 0:
        if rng is None:
            raise ValueError("a random generator is required when noise_sigma > 0")
        voltage += rng.normal(0.0, sensor.noise_sigma)
    code = sensor.code(voltage)
    return sensor.force_for_code(code), code


@functools.lru_cache(maxsize=256)
def _trial_sensor(sensor, faults):
    if faults.bias_force == 0.0 and faults.noise_sigma == 0.0:
        return sensor
    return dataclasses.replace(
        sensor,
        bias_fault=sensor.bias_fault + faults.bias_force * sensor.force_to_voltage_gain,
        noise_sigma=math.hypot(sensor.noise_sigma, faults.noise_sigma),
    )


def initial_state(config):
    return PluckerState(upper_gap=config.open_gap, lower_gap=config.open_gap)


def _contact_force(gap, stem, config, faults):
    if not faults.captured:
        return 0.0
    return config.gripper.stiffness * max(0.0, stem.diameter - gap)


def step_machine(state, stem, config=None, faults=NO_FAULTS, rng=None):
    """Advance the finger by one control tick and return the new state."""
    config = config or SimConfig()
    if state.outcome is not None:
        raise SimulationError(f"trial already ended with {state.outcome}")
    sensor = _trial_sensor(config.sensor, faults)
    _, code = sense_force(state.true_clamp_force, sensor, rng)
    readings = (state.readings + (code,))[-config.filter_window:]
    filtered = sum(readings) / len(readings)
    setpoint = config.sensor.code_for_force(config.gripper.clamp_force_target)

    phase = state.phase
    gap = state.upper_gap
    pull = state.pull_displacement
    stop_left = state.stop_ticks_left
    separated = state.separated
    outcome = None
    close_step = config.clamp_motor.per_tick
    force = state.true_clamp_force

    if phase == IDLE:
        phase = CLOSING
    elif phase == CLOSING:
        if stop_left == 0:
            phase = CLAMPED
        elif stop_left > 0:
            gap = max(0.0, gap - close_step)
            stop_left -= 1
        elif filtered >= setpoint:
            if faults.stop_delay_ticks > 0:
                gap = max(0.0, gap - close_step)
                stop_left = faults.stop_delay_ticks - 1
            else:
                phase = CLAMPED
        elif gap <= 0.0:
            outcome = INCOMPLETE  # fully closed on nothing
        else:
            gap = max(0.0, gap - close_step)
        force = _contact_force(gap, stem, config, faults)
    elif phase == CLAMPED:
        phase = PULLING
    elif phase == PULLING:
        if not faults.pull_stalled:
            pull += config.pull_motor.per_tick
        force = _contact_force(gap, stem, config, faults) * (1.0 - faults.derate)
        if force < stem.slip_threshold:
            outcome = SLIP
        elif config.tension_per_mm * pull >= stem.break_tension:
            separated = True
            phase = OPENING
        elif pull >= config.stroke:
            outcome = INCOMPLETE
    elif phase == OPENING:
        if filtered <= 0:
            phase = RESET
        else:
            gap = min(config.open_gap, gap + close_step)
        force = _contact_force(gap, stem, config, faults)
    elif phase == RESET:
        gap, pull, force = config.open_gap, 0.0, 0.0
        phase = IDLE
        outcome = SUCCESS
    else:
        raise SimulationError(f"unknown phase {phase!r}")

    if (state.phase, phase) not in LEGAL_EDGES:
        raise SimulationError(f"illegal transition {state.phase} -> {phase}")
    if force > stem.crush_limit:
        outcome = CRUSH

    new = PluckerState(
        phase=phase,
        upper_gap=gap,
        lower_gap=gap,
        true_clamp_force=force,
        measured_clamp_force=sensor.force_for_code(filtered),
        pull_displacement=pull,
        tick=state.tick + 1,
        readings=readings,
        stop_ticks_left=stop_left,
        peak_clamp_force=max(state.peak_clamp_force, force),
        separated=separated,
        outcome=outcome,
    )
    if phase in (CLAMPED, PULLING):
        upper = _contact_force(new.upper_gap, stem, config, faults)
        lower = _contact_force(new.lower_gap, stem, config, faults)
        if upper != lower:
            raise SimulationError("upper and lower gripper forces diverged")
    return new


def run_trial(stem, config=None, seed=0, faults=NO_FAULTS, record=False):
    """Run one plucking cycle to its outcome, or to ``Incomplete`` at the tick budget."""
    config = config or SimConfig()
    if config.tick_budget < 1:
        raise ValueError("tick_budget must be >= 1")
    rng = np.random.default_rng(seed)
    state = initial_state(config)
    trajectory = [state] if record else None
    while state.outcome is None and state.tick < config.tick_budget:
        state = step_machine(state, stem, config, faults, rng)
        if record:
            trajectory.append(state)
    kind = state.outcome or INCOMPLETE
    return PluckOutcome(kind, state.tick, state.peak_clamp_force, faults,
                        tuple(trajectory) if record else ())


def format_trace(trajectory):
    return "".join(
        f"{s.tick} {s.phase} {s.upper_gap:.4f} {s.lower_gap:.4f} "
        f"{s.true_clamp_force:.4f} {s.measured_clamp_force:.4f} {s.pull_displacement:.4f}\n"
        for s in trajectory)


# --- campaigns --------------------------------------------------------------

@dataclass(frozen=True)
class CampaignReport:
    sample_size: int
    crush: int
    slip: int
    incomplete: int
    success: int
    outcomes: tuple = field(default=(), compare=False, repr=False)

    @property
    def success_rate(self):
        return 100.0 * self.success / self.sample_size

    @classmethod
    def from_counts(cls, sample_size, crush, slip, incomplete, success):
        if crush + slip + incomplete + success != sample_size:
            raise ValueError("outcome counts must add up to the sample size")
        return cls(sample_size, crush, slip, incomplete, success)

    @classmethod
    def from_outcomes(cls, outcomes):
        outcomes = tuple(outcomes)
        kinds = [o.kind for o in outcomes]
        return cls(len(kinds), kinds.count(CRUSH), kinds.count(SLIP),
                   kinds.count(INCOMPLETE), kinds.count(SUCCESS), outcomes)


def trial_seeds(seed, index):
    """Independent (fault, sensor) seeds for trial ``index`` of a campaign."""
    return [seed, index, 0], [seed, index, 1]


def run_campaign(stems, config=None, fault_config=None, seed=0, n_jobs=1, record=False):
    stems = list(stems)
    if not stems:
        raise ValueError("campaign needs at least one stem")
    config = config or SimConfig()
    fault_config = fault_config or FaultConfig()

    def one(index):
        fault_seed, sensor_seed = trial_seeds(seed, index)
        faults = fault_config.draw(np.random.default_rng(fault_seed),
                                   config.capture_probability)
        return run_trial(stems[index], config, sensor_seed, faults, record)

    with ThreadPoolExecutor(max(1, int(n_jobs))) as pool:
        outcomes = list(pool.map(one, range(len(stems))))
    return CampaignReport.from_outcomes(outcomes)


def format_campaign_row(label, report):
    return (f"{label:<12} {report.sample_size:>6d} {report.crush:>6d} {report.slip:>6d} "
            f"{report.incomplete:>10d} {report.success:>7d} {report.success_rate:>7.1f}%")


CAMPAIGN_HEADER = (f"{'run':<12} {'sample':>6} {'crush':>6} {'slip':>6} "
                   f"{'incomplete':>10} {'success':>7} {'rate':>8}")


# --- scenario files ---------------------------------------------------------

@dataclass(frozen=True)
class CampaignSpec:
    trials: int = 80
    seed: int = DEFAULT_SEED
    diameter_min: float = 1.0
    diameter_max: float = 3.0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not 0 < self.diameter_min <= self.diameter_max:
            raise ValueError("need 0 < diameter_min <= diameter_max")


@dataclass(frozen=True)
class StemDefaults:
    break_tension: float = 2.0
    slip_threshold: float = 3.0
    crush_limit: float = 6.0


@dataclass(frozen=True)
class Scenario:
    campaign: CampaignSpec = field(default_factory=CampaignSpec)
    stem: StemDefaults = field(default_factory=StemDefaults)
    sim: SimConfig = field(default_factory=SimConfig)
    fault: FaultConfig = field(default_factory=FaultConfig)

    def stems(self):
        c = self.campaign
        diameters = np.linspace(c.diameter_min, c.diameter_max, c.trials)
        return [StemSpec(float(d), self.stem.break_tension, self.stem.slip_threshold,
                         self.stem.crush_limit) for d in diameters]


# section name -> path of attributes from Scenario down to the dataclass
_SECTIONS = {
    "campaign": ("campaign",),
    "stem": ("stem",),
    "sim": ("sim",),
    "fault": ("fault",),
    "gripper": ("sim", "gripper"),
    "sensor": ("sim", "sensor"),
    "clamp_motor": ("sim", "clamp_motor"),
    "pull_motor": ("sim", "pull_motor"),
}


def _coerce(text, current, key):
    try:
        if isinstance(current, bool):
            if text.lower() not in ("true", "false", "1", "0"):
                raise ValueError
            return text.lower() in ("true", "1")
        if isinstance(current, int):
            return int(text)
        if isinstance(current, float) or current is None:
            value = float(text)
            if math.isnan(value):
                raise ValueError
            return value
    except ValueError:
        raise ScenarioError(f"{key}: cannot parse {text!r}") from None
    raise ScenarioError(f"{key}: not settable from a scenario file")


def parse_scenario(text):
    """Parse ``section.field = value`` lines into a :class:`Scenario`.

    ``#`` starts a comment. Unknown keys are errors so typos do not pass
    silently.
    """
    updates = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        section, _, name = key.partition(".")
        if section not in _SECTIONS or not name:
            raise ScenarioError(f"line {lineno}: unknown key {key!r}")
        updates.setdefault(section, {})[name] = (value, lineno, key)

    scenario = Scenario()
    # nested sections first so their parents are rebuilt around them
    for section in sorted(updates, key=lambda s: -len(_SECTIONS[s])):
        path = _SECTIONS[section]
        target = scenario
        for attr in path:
            target = getattr(target, attr)
        names = {f.name for f in dataclasses.fields(target)}
        changes = {}
        for name, (value, lineno, key) in updates[section].items():
            if name not in names:
                raise ScenarioError(f"line {lineno}: unknown key {key!r}")
            changes[name] = _coerce(value, getattr(target, name), key)
        try:
            scenario = _replace_path(scenario, path, dataclasses.replace(target, **changes))
        except ValueError as exc:
            raise ScenarioError(f"[{section}] {exc}") from None
    return scenario


def _replace_path(root, path, value):
    if len(path) == 1:
        return dataclasses.replace(root, **{path[0]: value})
    child = getattr(root, path[0])
    return dataclasses.replace(root, **{path[0]: _replace_path(child, path[1:], value)})
