import numpy as np
import pytest

from nisqsim import benchmarks
from nisqsim.montecarlo import ideal_bitstring, ideal_distribution
from nisqsim.qasm import CX, Measure, U, build_layers


@pytest.mark.parametrize("name", list(benchmarks.SHAPES) + list(benchmarks.EXTRA))
def test_shipped_file_matches_generator(name):
    assert benchmarks.path(name).read_text(encoding="utf-8") == benchmarks.generate(name)


@pytest.mark.parametrize("name,shape", list(benchmarks.SHAPES.items()))
def test_counts_match_table(name, shape):
    p = benchmarks.load(name)
    assert (p.qubit_count, p.count(U), p.count(CX), p.count(Measure)) == shape


def test_rb_composes_to_identity():
    assert ideal_bitstring(build_layers(benchmarks.load("rb"))) == "00"
    assert ideal_distribution(build_layers(benchmarks.load("rb")))[0] == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("name,out", [("bv4", "111"), ("bv5", "1111")])
def test_bernstein_vazirani_outputs(name, out):
    d = ideal_distribution(build_layers(benchmarks.load(name)))
    assert ideal_bitstring(build_layers(benchmarks.load(name))) == out
    assert d.max() == pytest.approx(1.0)


def test_bell_fixture():
    d = ideal_distribution(build_layers(benchmarks.load("bell")))
    assert np.allclose(d, [0.5, 0, 0, 0.5])


def test_write_all(tmp_path):
    benchmarks.write_all(tmp_path)
    assert sorted(f.stem for f in tmp_path.glob("*.qasm")) == sorted(
        list(benchmarks.SHAPES) + list(benchmarks.EXTRA))
