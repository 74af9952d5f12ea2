import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

import bocpd.cli as cli
from bocpd import Detector, GaussianMean, GeometricGap
from bocpd.cli import main
from bocpd.config import load_config
from bocpd.datasets import read_posterior_matrix, read_predictive_series, returns_from_prices, write_series
from bocpd.simulate import simulate

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def _summary(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        key, _, value = line.partition(" = ")
        out[key] = value
    return out


def _detect(tmp_path, config, series):
    paths = {k: tmp_path / f"{k}.csv" for k in ("post", "pred", "summary")}
    code = main([
        "detect", "--config", str(config), "--input", str(series),
        "--posterior-out", str(paths["post"]), "--predictive-out", str(paths["pred"]),
        "--summary-out", str(paths["summary"]),
    ])
    return code, paths


class TestDetect:
    def test_coal_mine_configuration(self, tmp_path):
        rng = np.random.default_rng(1851)
        counts = np.concatenate([rng.poisson(3.0, 2000), rng.poisson(1.0, 3000)])
        series = _write(tmp_path / "coal.txt", "".join(f"{c}\n" for c in counts))
        code, paths = _detect(tmp_path, CONFIGS / "coal_mine.cfg", series)
        assert code == 0
        post = read_posterior_matrix(paths["post"])
        assert sorted(post) == list(range(1, 5001))
        assert _summary(paths["summary"])["steps"] == "5000"
        # the file omits entries below the truncation floor; the retained posterior itself is normalised
        cfg = load_config(CONFIGS / "coal_mine.cfg").detector
        for out in Detector(cfg).stream(counts):
            assert math.fsum(out.probabilities) == pytest.approx(1.0, abs=1e-12)
            keep = out.probabilities >= cfg.truncation_threshold
            expected = {int(r): float(f"{p:.12g}") for r, p in zip(out.run_lengths[keep], out.probabilities[keep])}
            assert post[out.t] == expected

    def test_returns_configuration(self, tmp_path):
        rng = np.random.default_rng(1972)
        prices = 100 * np.cumprod(1 + np.concatenate([rng.normal(0, 0.005, 400), rng.normal(0, 0.02, 300)]))
        rets = returns_from_prices(prices)
        series = _write(tmp_path / "returns.txt", "".join(f"{r:.12g}\n" for r in rets))
        code, paths = _detect(tmp_path, CONFIGS / "djia_returns.cfg", series)
        assert code == 0
        rows = read_predictive_series(paths["pred"])
        assert len(rows) == len(rets)
        assert [r["t"] for r in rows] == list(range(1, len(rets) + 1))

    def test_summary_matches_outputs(self, tmp_path):
        rng = np.random.default_rng(2)
        data = np.concatenate([rng.normal(0, 1, 150), rng.normal(6, 1, 150)])
        series = _write(tmp_path / "s.txt", "".join(f"{float(x)!r}\n" for x in data))
        cfg = _write(tmp_path / "c.cfg", "model = gaussian_mean\nprior_mean = 0\nprior_std = 5\nnoise_std = 1\n"
                     "hazard = constant\nhazard_lambda = 100\n")
        code, paths = _detect(tmp_path, cfg, series)
        assert code == 0
        rows = read_predictive_series(paths["pred"])
        summary = _summary(paths["summary"])
        total = math.fsum(r["log_evidence_increment"] for r in rows)
        assert float(summary["total_log_evidence"]) == pytest.approx(total, rel=1e-9)
        maps = [r["map_run_length"] for r in rows]
        drops = [t for t in range(2, len(maps) + 1) if maps[t - 1] < maps[t - 2]]
        assert summary["map_changepoints"].split() == [str(t) for t in drops]
        assert any(151 <= t <= 161 for t in drops)

    def test_summary_to_stdout(self, tmp_path, capsys):
        series = _write(tmp_path / "s.txt", "1\n2\n")
        code = main(["detect", "--config", str(CONFIGS / "coal_mine.cfg"), "--input", str(series),
                     "--posterior-out", str(tmp_path / "p"), "--predictive-out", str(tmp_path / "q")])
        assert code == 0
        assert "steps = 2" in capsys.readouterr().out

    def test_chunk_boundaries_do_not_matter(self, tmp_path, monkeypatch):
        rng = np.random.default_rng(9)
        data = np.concatenate([rng.normal(0, 1, 70), rng.normal(4, 1, 60)])
        series = _write(tmp_path / "s.txt", "".join(f"{float(x)!r}\n" for x in data))
        cfg = _write(tmp_path / "c.cfg", "model = gaussian_mean\nprior_mean = 0\nprior_std = 5\nnoise_std = 1\n"
                     "hazard = constant\nhazard_lambda = 50\ntruncation = 1e-6\n")
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        _, whole = _detect(tmp_path / "a", cfg, series)
        monkeypatch.setattr(cli, "CHUNK_SIZE", 7)
        _, chunked = _detect(tmp_path / "b", cfg, series)
        for key in whole:
            assert whole[key].read_bytes() == chunked[key].read_bytes()

    def test_missing_key(self, tmp_path, capsys):
        cfg = _write(tmp_path / "c.cfg", "model = poisson\nprior_a = 1\nhazard = constant\nhazard_lambda = 10\n")
        series = _write(tmp_path / "s.txt", "1\n")
        code, _ = _detect(tmp_path, cfg, series)
        assert code == 2
        err = capsys.readouterr().err
        assert "prior_b" in err and len(err.strip().splitlines()) == 1

    def test_bad_data(self, tmp_path, capsys):
        series = _write(tmp_path / "s.txt", "1\n-2\n")
        code, _ = _detect(tmp_path, CONFIGS / "coal_mine.cfg", series)
        assert code == 3
        assert "non-negative" in capsys.readouterr().err

    def test_missing_input(self, tmp_path):
        code, _ = _detect(tmp_path, CONFIGS / "coal_mine.cfg", tmp_path / "nope.txt")
        assert code == 3

    def test_numerical_failure(self, tmp_path, capsys):
        cfg = _write(tmp_path / "c.cfg", "model = gaussian_mean\nprior_mean = 0\nprior_std = 1\nnoise_std = 1\n"
                     "hazard = constant\nhazard_lambda = 10\n")
        series = _write(tmp_path / "s.txt", "0\n1e200\n")
        code, _ = _detect(tmp_path, cfg, series)
        assert code == 4
        assert "t=2" in capsys.readouterr().err


class TestSimulate:
    def _run(self, tmp_path, cfg, seed, tag=""):
        out, truth = tmp_path / f"series{tag}.txt", tmp_path / f"truth{tag}.txt"
        code = main(["simulate", "--config", str(cfg), "--seed", str(seed), "--out", str(out), "--truth-out", str(truth)])
        return code, out, truth

    def test_point_mass_gap(self, tmp_path):
        _write(tmp_path / "gap.txt", "5, 1.0\n")
        cfg = _write(tmp_path / "c.cfg", "model = poisson\nprior_a = 2\nprior_b = 1\nhazard = table\n"
                     "gap_table = gap.txt\nlength = 10\n")
        code, out, truth = self._run(tmp_path, cfg, 0)
        assert code == 0
        assert truth.read_text().split() == ["6"]
        assert len(out.read_text().split()) == 10

    def test_deterministic(self, tmp_path):
        a = self._run(tmp_path, CONFIGS / "well_log.cfg", 42, "a")
        b = self._run(tmp_path, CONFIGS / "well_log.cfg", 42, "b")
        assert a[1].read_bytes() == b[1].read_bytes()
        assert a[2].read_bytes() == b[2].read_bytes()
        c = self._run(tmp_path, CONFIGS / "well_log.cfg", 43, "c")
        assert a[1].read_bytes() != c[1].read_bytes()

    def test_geometric_mean_gap(self, tmp_path):
        cfg = _write(tmp_path / "c.cfg", "model = gaussian_scale\nprior_a = 1\nprior_b = 1e-4\nhazard = geometric\n"
                     "hazard_lambda = 250\nlength = 10000\n")
        code, _, truth = self._run(tmp_path, cfg, 17)
        assert code == 0
        starts = [1] + [int(v) for v in truth.read_text().split()]
        gaps = np.diff(starts)
        se = 250 * math.sqrt(1 - 1 / 250) / math.sqrt(gaps.size)
        assert abs(gaps.mean() - 250) < 3 * se

    def test_needs_length(self, tmp_path, capsys):
        cfg = _write(tmp_path / "c.cfg", "model = poisson\nprior_a = 1\nprior_b = 1\nhazard = constant\nhazard_lambda = 5\n")
        code, _, _ = self._run(tmp_path, cfg, 1)
        assert code == 2
        assert "length" in capsys.readouterr().err


class TestOracle:
    def _cfg(self, tmp_path, body):
        return _write(tmp_path / "c.cfg", body)

    def test_single_datum(self, tmp_path, capsys):
        cfg = self._cfg(tmp_path, "model = poisson\nprior_a = 1\nprior_b = 1\nhazard = constant\nhazard_lambda = 4\n")
        series = _write(tmp_path / "s.txt", "3\n")
        assert main(["oracle", "--config", str(cfg), "--input", str(series)]) == 0
        out = capsys.readouterr().out
        assert "T = 1" in out
        assert float(out.split("max_relative_error = ")[1]) < 1e-15

    def test_poisson_eight(self, tmp_path, capsys):
        cfg = self._cfg(tmp_path, "model = poisson\nprior_a = 1\nprior_b = 1\nhazard = constant\nhazard_lambda = 10\n")
        counts = np.random.default_rng(8).poisson(2.0, 8)
        series = _write(tmp_path / "s.txt", "".join(f"{c}\n" for c in counts))
        assert main(["oracle", "--config", str(cfg), "--input", str(series)]) == 0
        assert float(capsys.readouterr().out.split("max_relative_error = ")[1]) < 1e-10

    def test_survival_table(self, tmp_path, capsys):
        cfg = self._cfg(tmp_path, f"model = gaussian_mean\nprior_mean = 0\nprior_std = 2\nnoise_std = 1\n"
                        f"hazard = table\ngap_table = {CONFIGS / 'uniform_gap.txt'}\nboundary = survival\n")
        series = _write(tmp_path / "s.txt", "0.1\n2.3\n-0.4\n1.8\n0.0\n")
        assert main(["oracle", "--config", str(cfg), "--input", str(series)]) == 0

    def test_too_long(self, tmp_path):
        cfg = self._cfg(tmp_path, "model = poisson\nprior_a = 1\nprior_b = 1\nhazard = constant\nhazard_lambda = 10\n")
        series = _write(tmp_path / "s.txt", "1\n" * 17)
        assert main(["oracle", "--config", str(cfg), "--input", str(series)]) == 2


class TestEntryPoint:
    def test_module_invocation(self, tmp_path):
        series = _write(tmp_path / "s.txt", "1\n2\n0\n")
        res = subprocess.run(
            [sys.executable, "-m", "bocpd.cli", "oracle", "--config", str(CONFIGS / "coal_mine.cfg"), "--input", str(series)],
            capture_output=True, text=True, check=False,
        )
        assert res.returncode == 0, res.stderr
        assert res.stdout.startswith("T = 3")

    def test_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["detect"])
        assert exc.value.code == 2


_HWM_RUNNER = (
    "import sys\n"
    "from bocpd.cli import main\n"
    "code = main(sys.argv[1:])\n"
    "print([l for l in open('/proc/self/status') if l.startswith('VmHWM')][0].split()[1])\n"
    "sys.exit(code)\n"
)


@pytest.mark.slow
class TestStreamingMemory:
    def test_million_points(self, tmp_path):
        cfg = _write(tmp_path / "c.cfg", "model = gaussian_mean\nprior_mean = 0\nprior_std = 10\nnoise_std = 1\n"
                     "hazard = constant\nhazard_lambda = 250\ntruncation = 1e-4\n")
        data, _ = simulate(GaussianMean(0.0, 100.0, 1.0), GeometricGap(250), 1_000_000, np.random.default_rng(6))
        peaks = {}
        for n in (10_000, 1_000_000):
            series = tmp_path / f"s{n}.txt"
            write_series(data[:n], series)
            res = subprocess.run(
                [sys.executable, "-c", _HWM_RUNNER, "detect", "--config", str(cfg), "--input", str(series),
                 "--posterior-out", "/dev/null", "--predictive-out", "/dev/null", "--summary-out", str(tmp_path / "s")],
                capture_output=True, text=True, check=False,
            )
            assert res.returncode == 0, res.stderr
            peaks[n] = int(res.stdout.split()[-1])
        assert peaks[1_000_000] < 1.1 * peaks[10_000], peaks
