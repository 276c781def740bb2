import runpy
from pathlib import Path

BENCH = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_backends.py"


def test_benchmark_smoke(capsys):
    main = runpy.run_path(str(BENCH))["main"]
    main(["--repeat", "1", "--scale", "0.02"])
    out = capsys.readouterr().out
    assert "SMO solve" in out and "M-step" in out
