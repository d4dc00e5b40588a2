import numpy as np
import pytest

from noisydfl.channel import NoiseSchedule, make_schedule, sample_noise
from noisydfl.streams import Purpose, stream


def test_zero_schedule_gives_zeros(rng):
    s = make_schedule("zero", 50)
    assert s.is_zero and s.total_variance(3, 2) == 0
    assert np.array_equal(sample_noise(0, 0, s, rng), np.zeros(50))
    assert make_schedule(0.0, 5).kind == "zero"


def test_total_variance_is_d_times_nu():
    s = make_schedule("const:0.005", 2000)
    assert s.total_variance(0, 0) == pytest.approx(10.0)
    assert s.mean_total_variance(100, 16) == pytest.approx(10.0)


def test_empirical_second_moment():
    s = make_schedule(0.005, 2000)
    norms = np.array([np.sum(sample_noise(0, 0, s, stream(7, Purpose.NOISE, t=k)) ** 2) for k in range(10_000)])
    se = norms.std(ddof=1) / np.sqrt(len(norms))
    assert abs(norms.mean() - 10.0) <= 3 * se


def test_noise_is_zero_mean():
    s = make_schedule(0.5, 3)
    draws = np.array([sample_noise(0, 0, s, stream(8, Purpose.NOISE, t=k)) for k in range(10_000)])
    se = draws.std(axis=0, ddof=1) / np.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0)) <= 3.5 * se)


def test_replay_is_identical():
    s = make_schedule(0.1, 20)
    a = sample_noise(4, 2, s, stream(1, Purpose.NOISE, client=2, t=4))
    b = sample_noise(4, 2, s, stream(1, Purpose.NOISE, client=2, t=4))
    assert np.array_equal(a, b)


def test_distinct_keys_are_uncorrelated():
    s = make_schedule(1.0, 20_000)
    a = sample_noise(0, 0, s, stream(1, Purpose.NOISE, client=0, t=0))
    b = sample_noise(0, 1, s, stream(1, Purpose.NOISE, client=1, t=0))
    assert abs(np.corrcoef(a, b)[0, 1]) < 4 / np.sqrt(20_000)


def test_table_schedule(tmp_path):
    p = tmp_path / "nu.csv"
    np.savetxt(p, np.array([[0.1, 0.2], [0.0, 0.4]]), delimiter=",")
    s = make_schedule("table:nu.csv", 10, base_dir=tmp_path)
    assert s.variance(0, 1) == 0.2 and s.total_variance(1, 1) == pytest.approx(4.0)
    assert s.mean_total_variance(2, 2) == pytest.approx(10 * 0.175)
    assert s.nominal == pytest.approx(0.175)
    assert s.label == "table-nu"
    with pytest.raises(IndexError):
        s.variance(2, 0)


@pytest.mark.parametrize("spec", ["const:-1", -0.5, "banana", "const:x"])
def test_bad_specs_rejected(spec):
    with pytest.raises(ValueError):
        make_schedule(spec, 4)


def test_negative_table_rejected():
    with pytest.raises(ValueError):
        NoiseSchedule("table", 3, table=np.array([[0.1, -0.1]]))
