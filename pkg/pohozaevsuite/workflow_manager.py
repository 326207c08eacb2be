# pohozaevsuite/workflow_manager.py
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace, asdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Any, Callable, Tuple
import csv
import hashlib
import json
import logging
import threading

from pohozaevsuite import __version__
from pohozaevsuite.core.scaling_fibering import ProblemParams
from pohozaevsuite.processors.manifold_solver import ManifoldSolver
from pohozaevsuite.processors.extremal_values import MuStarSolver
from pohozaevsuite.processors.spectral_morse import MorseAnalyzer
from pohozaevsuite.utils.config import SolverConfig, load_key_value_config
from pohozaevsuite.utils.errors import ProcessingError, ValidationError, FileError

MANIFEST_NAME = "manifest.json"
AGGREGATE_COLUMNS = ("index", "a", "mu", "mu_star", "m_plus", "m_minus",
                     "morse_plus", "morse_minus", "status", "error")


def canonical_json(payload: Any) -> str:
    """Sorted, whitespace-free JSON; floats keep their shortest round-trip repr."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def input_hash(payload: Any) -> str:
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    """Provenance of one run, written before the computation and finalized after.

    ``status`` is ``running`` until ``finalize``; a manifest left in that state
    marks an interrupted run.
    """
    command: str
    params: Dict[str, Any]
    grid: Dict[str, Any]
    options: Dict[str, Any] = field(default_factory=dict)
    version: str = __version__
    input_hash: str = ""
    started: str = ""
    finished: Optional[str] = None
    status: str = "running"
    outputs: Dict[str, str] = field(default_factory=dict)
    summary: Dict[str, Any] = field(default_factory=dict)
    error: Optional[str] = None

    def __post_init__(self):
        if not self.input_hash:
            self.input_hash = input_hash({'command': self.command, 'params': self.params,
                                          'grid': self.grid, 'options': self.options,
                                          'version': self.version})
        if not self.started:
            self.started = _now()

    def write(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        tmp.replace(path)
        return path

    def finalize(self, path: Path, status: str = "finished", outputs: Optional[Dict[str, str]] = None,
                 summary: Optional[Dict[str, Any]] = None, error: Optional[str] = None) -> Path:
        self.status = status
        self.finished = _now()
        self.outputs.update(outputs or {})
        self.summary.update(summary or {})
        self.error = error
        return self.write(path)

    @classmethod
    def load(cls, path: Path) -> "RunManifest":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
            return cls(**data)
        except (OSError, json.JSONDecodeError, TypeError) as e:
            raise FileError(f"Cannot read manifest {path}: {e}")


@dataclass
class SweepConfig:
    """Parameter grid of a sweep.

    ``mu_values`` are absolute couplings, or fractions of mu_a* at each mass
    when ``mu_relative`` is set.
    """
    N: int
    p: float
    q1: float
    q2: float
    masses: Tuple[float, ...] = (1.0,)
    mu_values: Tuple[float, ...] = (1.0,)
    mu_relative: bool = False
    branches: Tuple[str, ...] = ("plus", "minus")
    grid_n: int = 4000
    grid_R: Optional[float] = None
    morse: bool = False
    extremal: bool = True

    def __post_init__(self):
        self.masses = tuple(float(a) for a in self.masses)
        self.mu_values = tuple(float(m) for m in self.mu_values)
        self.branches = tuple(self.branches)
        if not self.masses or not self.mu_values:
            raise ValidationError("A sweep needs at least one mass and one coupling")
        for branch in self.branches:
            if branch not in ("plus", "minus"):
                raise ValidationError(f"Sweeps support the plus and minus branches, got {branch}")
        ProblemParams(self.N, self.p, self.q1, self.q2).validate(require_mu=False)

    @classmethod
    def from_file(cls, path: Path) -> "SweepConfig":
        """Read a ``key = value`` sweep file.

        Recognized keys: N, p, q1, q2, a, mu, mu_relative, branches, grid_n,
        grid_R, morse, extremal.

        Raises:
            FileError: On unreadable files or unknown keys
        """
        raw = load_key_value_config(path)
        as_list = lambda v: tuple(v) if isinstance(v, list) else (v,)
        mapping = {'a': 'masses', 'mu': 'mu_values'}
        known = {'N', 'p', 'q1', 'q2', 'a', 'mu', 'mu_relative', 'branches', 'grid_n',
                 'grid_R', 'morse', 'extremal'}
        unknown = set(raw) - known
        if unknown:
            raise FileError(f"{path}: unknown sweep keys {sorted(unknown)}")
        missing = {'N', 'p', 'q1', 'q2'} - set(raw)
        if missing:
            raise FileError(f"{path}: missing sweep keys {sorted(missing)}")
        kwargs = {}
        for key, value in raw.items():
            name = mapping.get(key, key)
            if name in ('masses', 'mu_values', 'branches'):
                value = as_list(value)
            kwargs[name] = value
        return cls(**kwargs)

    def points(self) -> List[Tuple[int, float, float]]:
        """(index, a, mu or mu fraction), masses outermost."""
        return [(i, a, mu) for i, (a, mu) in
                enumerate((a, mu) for a in self.masses for mu in self.mu_values)]

    def params(self, a: float, mu: float) -> ProblemParams:
        return ProblemParams(self.N, self.p, self.q1, self.q2, a, mu)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class WorkflowManager:
    def __init__(self, output_dir: Path, jobs: int = 1, callback: Optional[Callable[[str, float], None]] = None,
                 resume: bool = False, config: Optional[SolverConfig] = None,
                 logger: Optional[logging.Logger] = None):
        self.output_dir = Path(output_dir)
        self.jobs = max(1, int(jobs))
        self.callback = callback
        self.resume = resume
        self.config = config or SolverConfig()
        self.results: Dict[str, Any] = {}
        self.logger = logger or logging.getLogger("PohozaevSuite")
        self._stop = threading.Event()

    @property
    def stop_requested(self) -> bool:
        return self._stop.is_set()

    def request_stop(self):
        """Let running points finish and mark the remaining ones as skipped."""
        if not self._stop.is_set():
            self.logger.warning("Stop requested; remaining sweep points will be skipped")
        self._stop.set()

    def _point_config(self, sweep: SweepConfig) -> SolverConfig:
        return replace(self.config, grid_n=sweep.grid_n, grid_R=sweep.grid_R,
                       max_workers=1, output_dir=None)

    def _progress(self, message: str, progress: float):
        self.logger.info(f"{message} - {progress:.1f}%")
        if self.callback:
            try:
                self.callback(message, progress)
            except Exception as e:
                self.logger.warning(f"Error in callback: {e}")

    def _extremal_values(self, sweep: SweepConfig) -> Dict[float, Optional[float]]:
        """mu_a* for every mass in the sweep; None where the search failed."""
        values: Dict[float, Optional[float]] = {}
        if self.stop_requested or not (sweep.extremal or sweep.mu_relative):
            return {a: None for a in sweep.masses}
        config = self._point_config(sweep)

        def solve(a: float) -> float:
            return MuStarSolver(sweep.params(a, 1.0), config, self.logger).compute().mu_star

        with ThreadPoolExecutor(max_workers=self.jobs) as executor:
            futures = {executor.submit(solve, a): a for a in sweep.masses}
            for future in as_completed(futures):
                a = futures[future]
                try:
                    values[a] = future.result()
                    self.logger.info(f"mu* at a = {a:g}: {values[a]:.12g}")
                except ProcessingError as e:
                    self.logger.warning(f"mu* search failed at a = {a:g}: {e.message}")
                    values[a] = None
        return values

    def _run_point(self, sweep: SweepConfig, index: int, a: float, mu_input: float,
                   mu_star: Optional[float]) -> Dict[str, Any]:
        point_dir = self.output_dir / f"point_{index:03d}"
        manifest_path = point_dir / MANIFEST_NAME
        row: Dict[str, Any] = {'index': index, 'a': a, 'mu': None, 'mu_star': mu_star,
                               'm_plus': None, 'm_minus': None, 'morse_plus': None,
                               'morse_minus': None, 'status': 'failed', 'error': None}
        if self.stop_requested:
            row.update(status='skipped', error='stop requested')
            return row

        if sweep.mu_relative:
            if mu_star is None:
                row['error'] = 'mu* unavailable'
                return row
            mu = mu_input * mu_star
        else:
            mu = mu_input
        row['mu'] = mu
        params = sweep.params(a, mu)
        config = self._point_config(sweep)
        manifest = RunManifest(command="sweep-point", params=params.to_dict(),
                               grid={'n': sweep.grid_n, 'R': sweep.grid_R},
                               options={'branches': list(sweep.branches), 'morse': sweep.morse,
                                        'mu_input': mu_input, 'mu_relative': sweep.mu_relative})

        if self.resume and manifest_path.exists():
            try:
                previous = RunManifest.load(manifest_path)
            except FileError as e:
                self.logger.warning(str(e))
                previous = None
            if previous and previous.status == "finished" and previous.input_hash == manifest.input_hash:
                self.logger.info(f"Point {index} already finished; skipping")
                row.update(previous.summary)
                return row

        manifest.write(manifest_path)
        outputs: Dict[str, str] = {}
        try:
            for branch in sweep.branches:
                record = ManifoldSolver(params, config, self.logger).process(branch, mu_star=mu_star)
                if sweep.morse:
                    report = MorseAnalyzer(config, self.logger).analyze(record)
                    record.morse_index = report.index_radial
                    row[f'morse_{branch}'] = report.index_radial
                path = record.save(point_dir, stem=branch)
                outputs[branch] = path.name
                row[f'm_{branch}'] = record.energy
            row['status'] = 'finished'
            summary = {k: row[k] for k in AGGREGATE_COLUMNS if k not in ('index', 'error')}
            manifest.finalize(manifest_path, "finished", outputs, summary)
        except ProcessingError as e:
            row['error'] = f"{type(e).__name__}: {e.message}"
            manifest.finalize(manifest_path, "failed", outputs, error=row['error'])
            self.logger.warning(f"Point {index} (a={a:g}, mu={mu:g}) failed: {row['error']}")
        return row

    def _write_aggregate(self, rows: List[Dict[str, Any]]) -> Path:
        path = self.output_dir / "aggregate.csv"
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(AGGREGATE_COLUMNS)
            for row in rows:
                writer.writerow(["" if row.get(k) is None else
                                 (f"{row[k]:.17g}" if isinstance(row[k], float) else row[k])
                                 for k in AGGREGATE_COLUMNS])
        return path

    def _generate_summary(self, sweep: SweepConfig, rows: List[Dict[str, Any]]) -> str:
        finished = [r for r in rows if r['status'] == 'finished']
        failed = [r for r in rows if r['status'] == 'failed']
        skipped = [r for r in rows if r['status'] == 'skipped']
        summary = [
            "\n=== PohozaevSuite Sweep Summary ===",
            f"Problem: N={sweep.N}, p={sweep.p:g}, q1={sweep.q1:g}, q2={sweep.q2:g}",
            f"Grid: {len(sweep.masses)} masses x {len(sweep.mu_values)} couplings"
            f"{' (fractions of mu*)' if sweep.mu_relative else ''}",
            "",
            "Results:",
            f"• Finished points: {len(finished)}",
            f"• Failed points: {len(failed)}",
        ]
        if skipped:
            summary.append(f"• Skipped points: {len(skipped)}")
        for r in failed:
            summary.append(f"  - point {r['index']}: {r['error']}")
        summary.extend(["", f"Output directory: {self.output_dir}",
                        "===================================="])
        return "\n".join(summary)

    def run(self, sweep: SweepConfig) -> Dict[str, Any]:
        """Solve every grid point and write the aggregate table and summary.

        Raises:
            ProcessingError: If no point could be solved
        """
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
            points = sweep.points()
            self._progress(f"Sweep of {len(points)} points with {self.jobs} workers", 0)
            mu_stars = self._extremal_values(sweep)

            rows: List[Dict[str, Any]] = []
            with ThreadPoolExecutor(max_workers=self.jobs) as executor:
                futures = {executor.submit(self._run_point, sweep, i, a, mu, mu_stars.get(a)): i
                           for i, a, mu in points}
                pending = set(futures)
                while pending:
                    try:
                        for future in as_completed(pending):
                            pending.discard(future)
                            rows.append(future.result())
                            self._progress(f"Point {futures[future]} done",
                                           100.0 * len(rows) / len(points))
                    except KeyboardInterrupt:
                        self.request_stop()
            rows.sort(key=lambda r: r['index'])

            aggregate = self._write_aggregate(rows)
            succeeded = sum(r['status'] == 'finished' for r in rows)
            self.results = {
                'version': __version__,
                'timestamp': _now(),
                'sweep': sweep.to_dict(),
                'total': len(rows),
                'succeeded': succeeded,
                'failed': sum(r['status'] == 'failed' for r in rows),
                'skipped': sum(r['status'] == 'skipped' for r in rows),
                'stopped': self.stop_requested,
                'points': rows,
                'aggregate': aggregate.name,
            }
            (self.output_dir / "sweep_summary.json").write_text(
                json.dumps(self.results, indent=2) + "\n", encoding="utf-8")

            self.logger.info(self._generate_summary(sweep, rows))
            if succeeded == 0:
                raise ProcessingError("No sweep point converged", {'total': len(rows)})
            return self.results

        except ProcessingError:
            raise
        except Exception as e:
            self.logger.error(f"Unexpected error: {str(e)}")
            raise ProcessingError(f"Sweep execution failed: {str(e)}")
