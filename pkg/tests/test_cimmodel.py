import numpy as np
import pytest

from conftest import random_scene, tensor_from
from voxsim.cimmodel import (
    CimGeometry,
    Conv2dKernel,
    MappingScheme,
    WorkloadHistogram,
    conv2d_reuse_cycles,
    layout_submatrix,
    layout_traditional,
    spconv_cycles,
    w2b_bruteforce,
    w2b_optimize,
    workload_histogram,
)
from voxsim.core import GridShape, subm3
from voxsim.errors import BudgetError, CapacityError
from voxsim.mapsearch import InOutMap, oracle_search
from voxsim.toolkit import Distribution, SceneSpec, generate_scene

GEOM = CimGeometry(num_tiles=4)


def surface_scene(seed=1):
    return generate_scene(
        SceneSpec(GridShape(48, 48, 16), 0.02, Distribution("surface", noise=0.8), seed)
    )


class TestWorkloadHistogram:
    def test_counts_sum_to_map_size(self):
        t = random_scene(GridShape(12, 12, 8), 0.1, seed=0)
        m = oracle_search(t, t.coords, subm3())
        hist = workload_histogram(m, subm3())
        assert hist.total == len(m)
        assert len(hist.pairs) == 27

    def test_full_dense_interior_near_uniform(self):
        coords = [(x, y, z) for x in range(8) for y in range(8) for z in range(8)]
        t = tensor_from(coords, GridShape(8, 8, 8))
        m = oracle_search(t, t.coords, subm3())
        hist = workload_histogram(m, subm3())
        # translation symmetry: every offset count within boundary slack
        assert hist.pairs.min() >= (7 / 8) ** 3 * hist.pairs.max() * 0.9

    def test_surface_scene_center_edge_skew(self):
        t = surface_scene()
        hist = workload_histogram(oracle_search(t, t.coords, subm3()), subm3())
        assert hist.max_min_ratio() > 10

    def test_empty_map_all_zero(self):
        hist = workload_histogram(InOutMap(np.empty((0, 3), dtype=np.int64), 27), subm3())
        assert hist.total == 0 and hist.max_min_ratio() == 0.0


class TestLayouts:
    def test_traditional_fits_example(self):
        geom = CimGeometry()
        layout = layout_traditional(subm3(), 16, 32, geom)
        assert layout.scheme is MappingScheme.TRADITIONAL
        # 16 * 27 = 432 rows in one fold, 32 channels * 8 bits = 256 columns
        assert layout.occupied_cells == 432 * 256

    def test_traditional_capacity_error(self):
        geom = CimGeometry(tile_rows=64, tile_cols=64, pe_rows=64, pe_cols=64, num_tiles=1)
        with pytest.raises(CapacityError) as err:
            layout_traditional(subm3(), 64, 64, geom)
        assert err.value.deficit > 0

    def test_traditional_folds_tall_columns(self):
        geom = CimGeometry(tile_rows=256, tile_cols=1024, num_tiles=2)
        layout = layout_traditional(subm3(), 32, 8, geom)  # height 864 -> 4 folds
        assert len(layout.placements) == 4
        assert sum(p.rows for p in layout.placements) == 32 * 27

    def test_submatrix_counts(self):
        layout = layout_submatrix(subm3(), 16, 16, GEOM)
        assert len(layout.placements) == 27
        assert all(p.rows == 16 and p.cols == 128 for p in layout.placements)
        assert layout.occupied_cells == 27 * 16 * 128

    def test_conv2d_submatrix_count(self):
        layout = layout_submatrix(Conv2dKernel(3), 16, 16, GEOM)
        assert len(layout.placements) == 9

    def test_extra_center_copy(self):
        copies = np.ones(27, dtype=np.int64)
        copies[13] = 2
        layout = layout_submatrix(subm3(), 16, 16, GEOM, copies)
        assert len(layout.placements) == 28

    def test_submatrix_capacity_error(self):
        geom = CimGeometry(num_tiles=1, pe_rows=512, pe_cols=512)  # 4 PEs
        with pytest.raises(CapacityError):
            layout_submatrix(subm3(), 16, 16, geom)

    def test_occupancy_conservation(self):
        copies = np.arange(27, dtype=np.int64) % 3
        copies[copies == 0] = 1
        layout = layout_submatrix(subm3(), 8, 4, CimGeometry(num_tiles=8), copies)
        assert layout.occupied_cells == int(copies.sum()) * 8 * 4 * 8


class TestW2B:
    def test_spec_example_40_1_1(self):
        hist = WorkloadHistogram(np.array([40, 1, 1]))
        copies = w2b_optimize(hist, 6)
        assert copies.tolist() == [4, 1, 1]
        assert hist.normalized(copies).max() == 10

    def test_uniform_unchanged(self):
        hist = WorkloadHistogram(np.full(27, 5))
        assert w2b_optimize(hist, 27).tolist() == [1] * 27

    def test_budget_error(self):
        hist = WorkloadHistogram(np.array([1, 1, 1]))
        with pytest.raises(BudgetError):
            w2b_optimize(hist, 2)

    def test_zero_offsets_get_no_copy(self):
        hist = WorkloadHistogram(np.array([10, 0, 5]))
        copies = w2b_optimize(hist, 4)
        assert copies[1] == 0 and copies.sum() == 4

    def test_never_worse_than_all_ones(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            pairs = rng.integers(0, 50, size=27)
            hist = WorkloadHistogram(pairs)
            active = int((pairs > 0).sum())
            if active == 0:
                continue
            budget = int(rng.integers(active, 41))
            copies = w2b_optimize(hist, budget)
            ones = (pairs > 0).astype(np.int64)
            assert hist.normalized(copies).max() <= hist.normalized(ones).max()

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_bruteforce_optimum(self, seed):
        rng = np.random.default_rng(seed)
        n_off = int(rng.integers(2, 28))
        pairs = rng.integers(0, 100, size=n_off)
        if not (pairs > 0).any():
            pairs[0] = 1
        hist = WorkloadHistogram(pairs)
        budget = int(rng.integers((pairs > 0).sum(), 41))
        greedy = hist.normalized(w2b_optimize(hist, budget)).max()
        assert greedy == pytest.approx(w2b_bruteforce(hist, budget), abs=1e-12)

    def test_skewed_ratio_strictly_decreases(self):
        t = surface_scene(seed=2)
        hist = workload_histogram(oracle_search(t, t.coords, subm3()), subm3())
        copies = w2b_optimize(hist, 2 * 27)
        ones = (hist.pairs > 0).astype(np.int64)
        assert hist.max_min_ratio(copies) < hist.max_min_ratio(ones)

    def test_2x_budget_halves_skew(self):
        hist = WorkloadHistogram(np.array([40] + [1] * 26))
        copies = w2b_optimize(hist, 54)
        before = hist.normalized((hist.pairs > 0).astype(np.int64)).max()
        after = hist.normalized(copies).max()
        assert before / after >= 2


class TestSpconvCycles:
    def test_balanced_full_utilization(self):
        entries = [(i, i, k) for k in range(27) for i in range(4)]
        imap = InOutMap(np.array(entries), 27)
        hist = workload_histogram(imap, subm3())
        layout = layout_submatrix(subm3(), 1, 1, GEOM)
        report = spconv_cycles(imap, hist, layout)
        assert report.cycles == 4
        assert report.utilization == 1.0

    def test_single_pair_one_cycle(self):
        imap = InOutMap(np.array([[0, 0, 13]]), 27)
        hist = workload_histogram(imap, subm3())
        copies = np.zeros(27, dtype=np.int64)
        copies[13] = 1
        layout = layout_submatrix(subm3(), 1, 1, GEOM, copies)
        assert spconv_cycles(imap, hist, layout).cycles == 1

    def test_balanced_copies_never_slower(self):
        rng = np.random.default_rng(3)
        t = random_scene(GridShape(16, 16, 8), 0.08, seed=3)
        imap = oracle_search(t, t.coords, subm3())
        hist = workload_histogram(imap, subm3())
        ones = (hist.pairs > 0).astype(np.int64)
        copies = w2b_optimize(hist, 2 * int(ones.sum()))
        geom = CimGeometry(num_tiles=4)
        before = spconv_cycles(imap, hist, layout_submatrix(subm3(), 1, 1, geom, ones))
        after = spconv_cycles(imap, hist, layout_submatrix(subm3(), 1, 1, geom, copies))
        assert after.cycles <= before.cycles

    def test_missing_copy_for_used_offset(self):
        imap = InOutMap(np.array([[0, 0, 0]]), 27)
        hist = workload_histogram(imap, subm3())
        copies = np.zeros(27, dtype=np.int64)
        copies[13] = 1
        layout = layout_submatrix(subm3(), 1, 1, GEOM, copies)
        with pytest.raises(ValueError):
            spconv_cycles(imap, hist, layout)

    def test_gather_reuse_credit(self):
        # two offsets sharing the same inputs: second wave reuses the batch
        entries = [(0, 1, 0), (1, 2, 0), (0, 3, 1), (1, 4, 1)]
        imap = InOutMap(np.array(entries), 27)
        hist = workload_histogram(imap, subm3())
        copies = np.zeros(27, dtype=np.int64)
        copies[[0, 1]] = 1
        layout = layout_submatrix(subm3(), 1, 1, GEOM, copies)
        report = spconv_cycles(imap, hist, layout)
        assert report.cycles == 2
        # wave 1 gathers {0}, wave 2 gathers {1}: offsets aligned on inputs
        assert report.gather_fetches == 2
        assert report.naive_fetches == 4


def test_abstract_event_cost_weighting():
    from voxsim.cimmodel import CycleReport, abstract_event_cost

    report = CycleReport(10, 0.5, 30, 100, 27)
    assert abstract_event_cost(report) == 40.0
    assert abstract_event_cost(report, 2.0, 0.5, 1.0, map_reads=5) == 20 + 15 + 5


class TestConv2dReuse:
    def test_k1_no_reuse_needed(self):
        report = conv2d_reuse_cycles(8, 8, 16, 16, 1)
        assert report.fetches == 8 * 8 * 16
        assert report.fetches == report.naive_fetches

    def test_single_window(self):
        report = conv2d_reuse_cycles(3, 3, 4, 4, 3)
        assert report.fetches == 9 * 4

    def test_8x8_reuse_factor(self):
        report = conv2d_reuse_cycles(8, 8, 1, 1, 3)
        assert report.fetches == 64
        assert report.naive_fetches == 9 * 36
        assert report.naive_fetches / report.fetches > 5

    def test_fetches_never_exceed_naive(self):
        for k in (1, 2, 3, 5):
            report = conv2d_reuse_cycles(16, 16, 2, 2, k)
            if k == 1:
                assert report.fetches == report.naive_fetches
            else:
                assert report.fetches < report.naive_fetches
