import numpy as np
import pytest

from fracvia.grid import GridFunction, require_same_grid


class TestGridFunction:
    def test_scalar_values_get_channel_axis(self):
        gf = GridFunction(np.linspace(0, 1, 5), np.arange(5.0))
        assert gf.values.shape == (5, 1)
        assert gf.value_shape == (1,)

    def test_arrays_are_read_only(self):
        gf = GridFunction.uniform(0, 1, np.zeros(4))
        with pytest.raises(ValueError):
            gf.values[0, 0] = 1.0

    @pytest.mark.parametrize("times", [[0, 0.5, 0.4], [0, 0.1, 0.5], [0.0]])
    def test_rejects_bad_times(self, times):
        with pytest.raises(ValueError):
            GridFunction(np.array(times), np.zeros(len(times)))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            GridFunction.uniform(0, 1, [0.0, np.nan, 1.0])

    def test_index_and_window(self):
        gf = GridFunction.from_callable(lambda t: t**2, 0, 1, 11)
        assert gf.index_of(0.3) == 3
        w = gf.window(0.2, 0.5)
        assert w.n == 4 and w.t0 == pytest.approx(0.2)
        with pytest.raises(ValueError):
            gf.index_of(0.25)

    def test_same_grid(self):
        a = GridFunction.uniform(0, 1, np.zeros(5))
        b = GridFunction.uniform(0, 1, np.ones(5))
        c = GridFunction.uniform(0, 2, np.ones(5))
        require_same_grid(a, b)
        with pytest.raises(ValueError):
            require_same_grid(a, c)
