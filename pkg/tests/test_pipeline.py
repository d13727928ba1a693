import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aercore.kernel import check_handshake_projection
from aercore.pipeline import (
    AckGeneratorInputs,
    AckGeneratorState,
    CDBlock,
    CdKind,
    DualRailValue,
    MaskingStage,
    NotOneHot,
    ack_generator_step,
    c_element,
    check_timing,
    completion_detect,
    mask_requests,
    qdi_encode,
    run_pipeline,
    violations_to_json,
)


class TestCElement:
    @pytest.mark.parametrize(
        "a,b,prev,out",
        [(1, 1, 0, 1), (0, 0, 1, 0), (1, 0, 1, 1), (0, 1, 0, 0), (1, 0, 0, 0)],
    )
    def test_truth_table(self, a, b, prev, out):
        assert c_element(a, b, prev) == out


class TestMasking:
    def test_pass_through_when_granted(self):
        stage = MaskingStage(width=4)
        assert mask_requests(0b0110, 1, stage) == 0b0110

    def test_blocked_without_grant(self):
        stage = MaskingStage(width=4)
        assert mask_requests(0b0110, 0, stage) == 0b0000

    def test_inflight_request_survives_grant_drop(self):
        stage = MaskingStage(width=4)
        assert mask_requests(0b0100, 1, stage) == 0b0100
        # grant drops mid-handshake: the masked request must persist
        assert mask_requests(0b0100, 0, stage) == 0b0100
        # ... until its own request falls
        assert mask_requests(0b0000, 0, stage) == 0b0000

    def test_new_requests_not_admitted_while_grant_low(self):
        stage = MaskingStage(width=4)
        mask_requests(0b0001, 1, stage)
        assert mask_requests(0b0011, 0, stage) == 0b0001


class TestCompletionDetect:
    def test_xor_reports_one_hot(self):
        assert completion_detect(CDBlock(CdKind.XOR_BASED, 4), 0b0010) is True

    def test_xor_rejects_grant_overlap(self):
        assert completion_detect(CDBlock(CdKind.XOR_BASED, 4), 0b0110) is False

    def test_or_needs_any_input(self):
        assert completion_detect(CDBlock(CdKind.OR_BASED, 4), 0b0000) is False
        assert completion_detect(CDBlock(CdKind.OR_BASED, 4), 0b1000) is True

    def test_dual_rail_validity(self):
        assert completion_detect(CDBlock(CdKind.XOR_BASED, 2), DualRailValue.encode(2, 2)) is True
        assert completion_detect(CDBlock(CdKind.XOR_BASED, 2), DualRailValue.null(2)) is False


class TestQdiEncode:
    def test_position_zero(self):
        v = qdi_encode(0b0001)
        assert v.value() == 0
        assert v.rails == ((0, 1), (0, 1))

    def test_position_three(self):
        assert qdi_encode(0b1000).value() == 3

    def test_all_zero_is_null(self):
        assert qdi_encode(0b0000).is_null

    def test_two_hot_rejected(self):
        with pytest.raises(NotOneHot):
            qdi_encode(0b0101)

    @given(st.integers(min_value=0, max_value=3))
    def test_round_trip(self, k):
        assert qdi_encode(1 << k).value() == k

    @given(st.integers(min_value=0, max_value=15), st.integers(min_value=1, max_value=4))
    def test_dual_rail_safety(self, value, width):
        v = DualRailValue.encode(value & ((1 << width) - 1), width)
        assert all(not (t and f) for t, f in v.rails)


class TestAckGenerator:
    def test_low_reset_only_while_cluster_active(self):
        state = AckGeneratorState()
        ack = ack_generator_step(
            AckGeneratorInputs(v_m=True, v_l=True, d_h=True, d_m=True, d_l=True),
            packet_captured=True,
            state=state,
        )
        assert ack == 1
        assert state.last_resets == {"low"}
        assert state.held_levels == {"high", "medium"}

    def test_full_reset_when_lower_levels_quiet(self):
        state = AckGeneratorState()
        ack_generator_step(
            AckGeneratorInputs(v_m=False, v_l=False, d_h=True, d_m=True, d_l=True),
            packet_captured=True,
            state=state,
        )
        assert state.last_resets == {"low", "medium", "high"}
        assert state.held_levels == set()

    def test_medium_reset_gated_on_v_l_only(self):
        state = AckGeneratorState()
        ack_generator_step(
            AckGeneratorInputs(v_m=True, v_l=False, d_h=True, d_m=True, d_l=True),
            packet_captured=True,
            state=state,
        )
        assert state.last_resets == {"low", "medium"}

    def test_no_packet_leaves_ack_unchanged(self):
        state = AckGeneratorState(ack=1)
        ack = ack_generator_step(
            AckGeneratorInputs(v_m=False, v_l=False, d_h=False, d_m=False, d_l=False),
            packet_captured=False,
            state=state,
        )
        assert ack == 1
        assert state.last_resets == set()


class TestRunPipeline:
    def test_single_event_neuron_21(self):
        run = run_pipeline([(21, 0)])
        assert len(run.packets) == 1
        packet = run.packets[0]
        assert packet.address == 21
        assert packet.address_bits() == "010101"

    def test_empty_input_no_packets(self):
        run = run_pipeline([])
        assert run.packets == []

    def test_exhaustive_address_sweep(self):
        run = run_pipeline([(i, 0) for i in range(64)])
        assert [p.neuron_id for p in run.packets] == sorted(p.neuron_id for p in run.packets)
        assert all(p.address == p.neuron_id for p in run.packets)

    def test_cluster_burst_arbitrates_upper_levels_once(self):
        run = run_pipeline([(i, 0) for i in range(4)])
        assert run.arb_counts == [1, 1, 4]

    def test_packet_times_strictly_increase(self):
        run = run_pipeline([(i, 0) for i in range(8)])
        times = [p.t_out for p in run.packets]
        assert times == sorted(times)
        assert len(set(times)) == len(times)

    def test_two_level_geometry(self):
        run = run_pipeline([(i, 0) for i in range(16)], levels=2)
        assert run.n == 16
        assert all(p.address == p.neuron_id for p in run.packets)
        assert run.arb_counts == [4, 16]

    def test_single_level_geometry(self):
        run = run_pipeline([(i, 0) for i in range(4)], levels=1)
        assert run.n == 4
        assert all(p.address == p.neuron_id for p in run.packets)
        assert run.arb_counts == [4]
        assert check_timing(run.trace) == []

    def test_four_level_geometry_256_neurons(self):
        neurons = [0, 1, 37, 85, 170, 200, 255]
        run = run_pipeline([(n, 0) for n in neurons], levels=4)
        assert run.n == 256
        assert sorted(p.address for p in run.packets) == sorted(neurons)
        assert all(p.address == p.neuron_id for p in run.packets)
        assert run.packets[0].address_bits(8) == format(run.packets[0].neuron_id, "08b")
        assert check_timing(run.trace) == []

    def test_unknown_delay_key_rejected(self):
        with pytest.raises(ValueError, match="unknown delay"):
            run_pipeline([(0, 0)], delays={"latch_cloze": 3})


class TestTimingCheckers:
    def test_nominal_run_is_clean(self):
        run = run_pipeline([(i, 0) for i in range(16)])
        assert check_timing(run.trace) == []
        assert check_handshake_projection(run.trace) == []

    def test_latch_close_fault_flagged(self):
        run = run_pipeline([(21, 0), (22, 0)], delays={"latch_close": 30})
        constraints = {v.constraint for v in check_timing(run.trace)}
        assert "latch-close-before-data-reset" in constraints

    def test_reopen_fault_flagged(self):
        run = run_pipeline([(21, 0), (22, 0)], delays={"neuron_release": 40})
        constraints = {v.constraint for v in check_timing(run.trace)}
        assert "reopen-after-data-reset" in constraints

    def test_slow_masking_cd_fault_flagged(self):
        run = run_pipeline([(21, 0), (22, 0)], delays={"cd_mask": 250})
        constraints = {v.constraint for v in check_timing(run.trace)}
        assert "validity-before-data-cd" in constraints

    def test_violation_json_shape(self):
        run = run_pipeline([(21, 0)], delays={"latch_close": 30})
        text = violations_to_json(check_timing(run.trace))
        assert '"constraint"' in text and '"time"' in text and '"detail"' in text

    @given(
        st.lists(st.integers(min_value=0, max_value=63), min_size=1, max_size=10),
        st.integers(min_value=0, max_value=2**16),
    )
    @settings(max_examples=30, deadline=None)
    def test_nominal_delays_never_violate(self, neurons, seed):
        events = [(n, (k * 37 * seed) % 3000) for k, n in enumerate(neurons)]
        events.sort(key=lambda e: e[1])
        run = run_pipeline(events)
        assert check_timing(run.trace) == []
        assert all(p.address == p.neuron_id for p in run.packets)
        assert len(run.packets) == len(events)


class TestNullSpacer:
    def test_rails_alternate_between_packets(self):
        run = run_pipeline([(5, 0), (6, 0), (7, 0)])
        low_rail = [r for r in run.trace if r.signal == "rails.l2"]
        values = [r.new for r in sorted(low_rail, key=lambda r: r.time)]
        assert values == [1, 0] * (len(values) // 2)
