import xml.etree.ElementTree as ET
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hpcsbo import evaluation as ev
from hpcsbo.campaign import ATTACK, CLEAN, CampaignConfig, DatasetError, RunRecord, run_campaign
from hpcsbo.detectors import DetectorConfig
from hpcsbo.emulator import ExitStatus, HpcVector
from hpcsbo.evaluation import Cell, EvalReport, SweepConfig

SVG_NS = "{http://www.w3.org/2000/svg}"


def _records(n_clean: int, n_attack: int, pct: float = 1.0) -> list[RunRecord]:
    out = []
    for i in range(n_clean + n_attack):
        attack = i >= n_clean
        hpc = HpcVector(instr_executed=(20_000 if attack else 1_000) + i)
        out.append(RunRecord("aes", i, i, ATTACK if attack else CLEAN, pct if attack else 0.0, hpc,
                             ExitStatus.CLEAN_EXIT, attack))
    return out


@dataclass
class StubPipeline:
    threshold: float
    detector: str = "stub"
    mode: str = "raw"
    features: tuple = (0,)

    def predict(self, X):
        return X[:, 0] > self.threshold


def test_perfect_detector():
    c = ev.evaluate(StubPipeline(10_000), _records(100, 100))
    assert (c.tp, c.fp, c.tn, c.fn) == (100, 0, 100, 0)
    assert c.accuracy == 1.0 and c.fpr == 0.0
    assert c.payload_pct == 1.0 and c.n_features == 1


def test_flag_everything():
    c = ev.evaluate(StubPipeline(-1), _records(100, 100))
    assert c.tpr == 1.0 and c.fpr == 1.0 and c.accuracy == 0.5


def test_metric_arithmetic():
    c = Cell("aes", "lof", "raw", 1.0, 8, tp=90, fp=20, tn=80, fn=10)
    assert c.accuracy == pytest.approx(0.85)
    assert c.precision == pytest.approx(90 / 110)
    assert c.tpr == pytest.approx(0.9) and c.fpr == pytest.approx(0.2)
    assert Cell("aes", "lof", "raw", 1.0, 8, 0, 0, 5, 5).precision == 0.0


def test_unlabelled_row_rejected():
    recs = _records(3, 3)
    recs[4] = RunRecord("aes", 4, 4, "unknown", 1.0, recs[4].hpc, ExitStatus.CLEAN_EXIT, True)
    with pytest.raises(DatasetError, match="row 4"):
        ev.evaluate(StubPipeline(0), recs)


def test_mixed_pcts_rejected():
    recs = _records(2, 2) + _records(0, 2, pct=5.0)
    with pytest.raises(DatasetError, match="mixes"):
        ev.test_pct(recs)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 200), st.data())
def test_closure_and_balanced_identity(half, data):
    is_attack = np.array([False] * half + [True] * half)
    pred = np.array(data.draw(st.lists(st.booleans(), min_size=2 * half, max_size=2 * half)))
    tp, fp, tn, fn = ev.confusion(pred, is_attack)
    assert tp + fn == half and tn + fp == half
    assert tp + fp + tn + fn == 2 * half
    c = Cell("w", "d", "raw", 1.0, 1, tp, fp, tn, fn)
    tnr = tn / (tn + fp)
    assert c.accuracy == pytest.approx((c.tpr + tnr) / 2, abs=1e-15)


# ---------------------------------------------------------------------------
# report files

def _tiny_report() -> EvalReport:
    return EvalReport((Cell("aes", "lof", "raw", 1.0, 8, 90, 20, 80, 10),
                       Cell("aes", "lof", "raw", 5.0, 8, 99, 5, 95, 1)), {"config_hash": "x"})


def test_two_cell_csv():
    lines = ev.results_csv(_tiny_report()).splitlines()
    assert lines[0] == ",".join(ev.RESULTS_HEADER)
    assert len(lines) == 3
    assert lines[1].split(",")[9] == "0.850000"


def test_report_json_roundtrip(tmp_path):
    r = _tiny_report()
    ev.save_report(r, tmp_path / "r.json")
    assert ev.load_report(tmp_path / "r.json") == r
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(DatasetError):
        ev.load_report(tmp_path / "bad.json")


def _grid_report() -> EvalReport:
    rng = np.random.default_rng(3)
    cells = []
    for det in ("ocsvm", "lof"):
        for mode in ("raw", "ae_latent"):
            for pct in (0.5, 1.0, 2.0, 5.0):
                for n in (1, 8):
                    tn = int(rng.integers(0, 101))
                    tp = int(rng.integers(0, 101))
                    cells.append(Cell("sha", det, mode, pct, n, tp, 100 - tn, tn, 100 - tp))
    return EvalReport(tuple(cells))


def test_svg_structure_and_inversion():
    report = _grid_report()
    root = ET.fromstring(ev.render_svg(report, "sha"))
    lines = root.findall(f"{SVG_NS}polyline")
    assert sorted(p.get("data-series") for p in lines) == [
        "lof/ae_latent", "lof/raw", "ocsvm/ae_latent", "ocsvm/raw"]
    assert ev.y_of(0.5) == ev.PLOT_B and ev.y_of(1.0) == ev.PLOT_T
    for p in lines:
        det, mode = p.get("data-series").split("/")
        pts = [tuple(map(float, xy.split(","))) for xy in p.get("points").split()]
        cells = sorted((c for c in report.cells if (c.detector, c.mode, c.n_features) == (det, mode, 8)),
                       key=lambda c: c.payload_pct)
        assert len(pts) == len(cells) == 4
        xs = [x for x, _ in pts]
        assert xs == sorted(xs) and xs[0] == ev.PLOT_L and xs[-1] == ev.PLOT_R
        # log scale: 0.5 -> 1 and 1 -> 2 span the same width
        assert xs[1] - xs[0] == pytest.approx(xs[2] - xs[1], abs=2e-3)
        for (_, y), c in zip(pts, cells):
            expect = min(max(c.accuracy, ev.Y_MIN), ev.Y_MAX)
            assert abs(ev.acc_of(y) - expect) <= 0.005 * expect


@settings(max_examples=200, deadline=None)
@given(st.floats(0.5, 1.0))
def test_y_mapping_inverts(acc):
    assert ev.acc_of(ev.y_of(acc)) == pytest.approx(acc, abs=1e-12)


def test_render_report_files(tmp_path):
    written = ev.render_report(_grid_report(), tmp_path)
    assert [p.name for p in written] == ["results.csv", "fig_sha.svg"]
    with pytest.raises(ValueError):
        ev.render_report(EvalReport(()), tmp_path)


def test_render_is_deterministic(tmp_path):
    ev.render_report(_grid_report(), tmp_path / "a")
    ev.render_report(_grid_report(), tmp_path / "b")
    for name in ("results.csv", "fig_sha.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


# ---------------------------------------------------------------------------
# sweep on a small campaign

PCTS = (1.0, 5.0)
FAST = DetectorConfig(n_trees=20, n_subsets=5, ae_epochs=10)


@pytest.fixture(scope="module")
def small_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("sweep")
    for w in ("aes", "sha"):
        run_campaign(CampaignConfig(w, n_train_clean=120, n_test=60, n_calib=40, payload_pcts=PCTS,
                                    master_seed=3, out_dir=root / w))
    return root


def _cfg(root, **kw) -> SweepConfig:
    base = dict(data_dir=root, workloads=("aes", "sha"), payload_pcts=PCTS, max_features=3, detector=FAST)
    return SweepConfig(**{**base, **kw})


def test_sweep_cardinality_and_determinism(small_data, tmp_path):
    cfg = _cfg(small_data)
    a = ev.sweep(cfg)
    assert len(a.cells) == 2 * 4 * 2 * 2 * 3
    assert len({c.key for c in a.cells}) == len(a.cells)
    assert all(c.total == 60 and c.tp + c.fn == 30 for c in a.cells)
    b = ev.sweep(cfg, n_jobs=2)
    assert a == b
    ev.save_report(a, tmp_path / "a.json")
    ev.save_report(b, tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert a.metadata["config_hash"] == cfg.digest()
    assert set(a.metadata["feature_order"]) == {"aes", "sha"}


def test_sweep_dispersion_ranking(small_data):
    r = ev.sweep(_cfg(small_data, workloads=("sha",), detectors=("lof",), modes=("raw",),
                      max_features=1, ranking="dispersion"))
    assert len(r.cells) == 2


def test_sweep_missing_pct(small_data):
    with pytest.raises(DatasetError, match="payload_pct=2"):
        ev.sweep(_cfg(small_data, payload_pcts=(1.0, 2.0)))


def test_sweep_missing_workload(tmp_path):
    with pytest.raises(DatasetError, match="campaign"):
        ev.sweep(_cfg(tmp_path))


@pytest.mark.parametrize("kw", [{"workloads": ("x",)}, {"detectors": ("svm",)}, {"modes": ("ae_recon",)},
                                {"max_features": 9}, {"payload_pcts": (0.0,)}])
def test_sweep_config_validation(kw):
    with pytest.raises(ValueError):
        SweepConfig(**kw)


# ---------------------------------------------------------------------------
# qualitative checks on synthetic reports

def _synthetic(acc) -> EvalReport:
    cells = []
    for w in ("aes", "rsa_fixed", "rsa_full", "sha", "dijkstra"):
        for det in ("ocsvm", "lof", "iforest", "elliptic"):
            for mode in ("raw", "ae_latent"):
                for pct in (0.5, 1.0, 2.0, 5.0):
                    for n in range(1, 9):
                        a = acc(w, det, mode, pct, n)
                        tp = tn = round(500 * a)
                        cells.append(Cell(w, det, mode, pct, n, tp, 500 - tn, tn, 500 - tp))
    return EvalReport(tuple(cells))


def test_checks_pass_on_paper_shaped_report():
    from hpcsbo import checks
    r = _synthetic(lambda w, d, m, p, n: 0.6 if w == "rsa_full" else 0.9 + 0.01 * p)
    assert all(c.passed for c in checks.report_checks(r))


def test_checks_catch_failures():
    from hpcsbo import checks
    r = _synthetic(lambda w, d, m, p, n: (0.95 - 0.02 * p) if m == "raw" else 0.8)
    verdicts = {c.criterion: c.passed for c in checks.report_checks(r)}
    assert verdicts == {1: True, 2: True, 3: False, 4: False, 5: False}
    assert "breaks" in checks.payload_trend(r).detail


def test_probe_top_feature_is_near_exhaustive_best(tmp_path):
    from hpcsbo.campaign import feature_matrix, labels
    from hpcsbo.detectors import fit_pipeline, rank_features
    res = run_campaign(CampaignConfig("aes", n_train_clean=600, n_test=400, n_calib=100, payload_pcts=(1.0,),
                                      master_seed=21, out_dir=tmp_path))
    X = feature_matrix(res.train)
    calib = res.calibs["1"]
    top = rank_features(X, feature_matrix(calib), labels(calib))[0]
    accs = [ev.evaluate(fit_pipeline(X, "lof", features=(j,)), res.tests["1"]).accuracy for j in range(8)]
    assert accs[top] >= max(accs) - 0.02
