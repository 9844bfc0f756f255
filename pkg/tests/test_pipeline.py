import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxsim.core import gconv2, subm3
from voxsim.pipeline import LayerNode, schedule_hybrid, validate_sharing


def chain(latencies, shared=None):
    shared = shared or [False] * len(latencies)
    return [
        LayerNode(f"L{i}", subm3(), ms, comp, shared[i])
        for i, (ms, comp) in enumerate(latencies)
    ]


class TestScheduleExamples:
    def test_single_layer_threshold_one(self):
        sched = schedule_hybrid(chain([(100.0, 80.0)]), overlap_threshold=1.0)
        assert sched.makespan == 180.0
        assert sched.sequential_baseline == 180.0

    def test_shared_map_zero_ms(self):
        layers = chain([(100.0, 80.0), (100.0, 80.0)], shared=[False, True])
        sched = schedule_hybrid(layers, overlap_threshold=0.0)
        second = sched.intervals[1]
        assert second.ms_start == second.ms_end == 100.0
        # cheaper than running both stages back to back, reuse or not
        assert sched.makespan < 100.0 + 80.0 + 80.0
        assert sched.sequential_baseline == 260.0

    def test_four_layer_hand_schedule(self):
        layers = chain([(10.0, 8.0), (6.0, 12.0), (4.0, 4.0), (2.0, 10.0)])
        sched = schedule_hybrid(layers, overlap_threshold=0.25)
        # hand-computed: ms chain 0-10,10-16,16-20,20-22
        # compute: starts max(0, 2.5)=2.5 ends 10.5; L2 max(10.5,11.5)=11.5->23.5;
        # L3 max(23.5,17)=23.5->27.5; L4 max(27.5,20.5)=27.5->37.5
        starts = [iv.compute_start for iv in sched.intervals]
        assert starts == [2.5, 11.5, 23.5, 27.5]
        assert sched.makespan == 37.5

    def test_gantt_rows_cover_both_stages(self):
        sched = schedule_hybrid(chain([(5.0, 5.0), (5.0, 5.0)]))
        rows = sched.gantt_rows()
        assert len(rows) == 4
        stages = {r[1] for r in rows}
        assert stages == {"map_search", "compute"}


class TestScheduleProperties:
    @given(
        st.lists(
            st.tuples(st.floats(0, 1000), st.floats(0, 1000)),
            min_size=1,
            max_size=12,
        ),
        st.floats(0, 1),
    )
    @settings(max_examples=200, deadline=None)
    def test_makespan_never_exceeds_sequential(self, lats, threshold):
        sched = schedule_hybrid(chain(lats), overlap_threshold=threshold)
        assert sched.makespan <= sched.sequential_baseline + 1e-9

    @given(
        st.lists(
            st.tuples(st.floats(0, 100), st.floats(0, 100)),
            min_size=1,
            max_size=8,
        )
    )
    @settings(max_examples=100, deadline=None)
    def test_monotone_in_threshold(self, lats):
        spans = [
            schedule_hybrid(chain(lats), overlap_threshold=t).makespan
            for t in (0.0, 0.25, 0.5, 0.75, 1.0)
        ]
        assert all(a <= b + 1e-9 for a, b in zip(spans, spans[1:]))

    @given(
        st.lists(
            st.tuples(st.floats(0.1, 100), st.floats(0.1, 100)),
            min_size=1,
            max_size=8,
        )
    )
    @settings(max_examples=100, deadline=None)
    def test_two_stage_lower_bound(self, lats):
        sched = schedule_hybrid(chain(lats), overlap_threshold=1.0)
        total_ms = sum(a for a, _ in lats)
        total_compute = sum(b for _, b in lats)
        assert sched.makespan >= max(total_ms, total_compute) - 1e-9


class TestValidation:
    def test_sharing_requires_matching_subm(self):
        layers = [
            LayerNode("a", subm3(), 1.0, 1.0),
            LayerNode("b", gconv2(), 1.0, 1.0, map_shared_with_prev=True),
        ]
        with pytest.raises(ValueError):
            validate_sharing(layers)

    def test_sharing_requires_predecessor(self):
        layers = [LayerNode("a", subm3(), 1.0, 1.0, map_shared_with_prev=True)]
        with pytest.raises(ValueError):
            schedule_hybrid(layers)

    def test_negative_latency_rejected(self):
        with pytest.raises(ValueError):
            LayerNode("a", subm3(), -1.0, 1.0)

    def test_threshold_range(self):
        with pytest.raises(ValueError):
            schedule_hybrid(chain([(1.0, 1.0)]), overlap_threshold=1.5)
