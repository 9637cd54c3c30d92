"""
Unit tests for cnp.core.analysis: receptive fields and cost model
"""
from dataclasses import replace

import pytest

from config.constants import get_config
from cnp.core.analysis import (
    analysis_rows, analytic_rf, cost_report, empirical_rf, required_probe_size,
    single_level_layers_for, single_level_rows
)
from cnp.core.graph import build_cnp, build_single_level, init_params
from cnp.utils.error_types import ConfigurationError
from tests.fixtures.sample_data import small_config, small_graph

pytestmark = pytest.mark.unit

config = get_config()


class TestSingleLevelReceptiveField:
    """Test plain networks against the published table"""

    @pytest.mark.parametrize("layers,rf", [(8, 15), (20, 39), (48, 95), (112, 223), (256, 511)])
    def test_reference_values(self, layers, rf):
        """Test rf = 2 (layers - 1) + 1"""
        assert analytic_rf(build_single_level(layers)).rf == rf

    def test_rows_match_reference(self):
        """Test every row of the single-level table matches its reference column"""
        for row in single_level_rows():
            assert row['receptive_field'] == row['reference_rf']

    @pytest.mark.parametrize("rf,layers", [(15, 8), (11, 6), (22, 12), (3, 2)])
    def test_layers_for_rf(self, rf, layers):
        """Test the smallest plain depth that reaches a receptive field"""
        assert single_level_layers_for(rf) == layers


class TestPyramidReceptiveField:
    """Test the pyramid receptive field"""

    def test_reference_sequence(self):
        """Test the S=1 pyramid receptive fields for one to five levels"""
        rfs = [analytic_rf(build_cnp(small_config(L))).rf for L in range(1, 6)]
        assert rfs == [11, 22, 48, 100, 204]

    @pytest.mark.parametrize("transforms", [1, 2, 3])
    def test_first_levels(self, transforms):
        """Test one level gives 9 + 2S and two levels give 18 + 4S"""
        assert analytic_rf(build_cnp(small_config(1, transform_layers=transforms))).rf == 9 + 2 * transforms
        assert analytic_rf(build_cnp(small_config(2, transform_layers=transforms))).rf == 18 + 4 * transforms

    def test_exponential_growth(self):
        """Test each extra level at least doubles the receptive field"""
        rfs = [analytic_rf(build_cnp(small_config(L))).rf for L in range(1, 6)]
        for smaller, larger in zip(rfs, rfs[1:]):
            assert larger >= 2 * smaller

    @pytest.mark.parametrize("transforms", [2, 3])
    def test_strictly_increasing(self, transforms):
        """Test the receptive field grows with every level"""
        rfs = [analytic_rf(build_cnp(small_config(L, transform_layers=transforms))).rf for L in range(1, 6)]
        assert rfs == sorted(set(rfs))

    def test_trace_covers_every_node(self):
        """Test the trace reports a receptive field and jump per node"""
        graph = build_cnp(small_config(3))
        state = analytic_rf(graph)
        assert [entry.name for entry in state.trace] == [node.name for node in graph.nodes]
        assert state.trace[0].rf == 1
        assert {entry.jump for entry in state.trace} == {1, 2, 4}

    @pytest.mark.parametrize("levels", [1, 2, 3])
    @pytest.mark.parametrize("transforms", [1, 2])
    def test_matches_gradient_support(self, levels, transforms):
        """Test the analytic receptive field equals the measured gradient support"""
        graph = small_graph(levels, transform_layers=transforms)
        size = required_probe_size(graph)
        assert empirical_rf(graph, size) == analytic_rf(graph).rf

    def test_measurement_size_checked(self):
        """Test the empirical measurement rejects inputs that are too small"""
        graph = small_graph(2)
        with pytest.raises(ConfigurationError, match="probe input"):
            empirical_rf(graph, 2)


class TestCostReport:
    """Test the analytic cost model"""

    def test_levels_are_additive(self):
        """Test per-level MACs, params and activations sum to the totals"""
        report = cost_report(build_cnp(), 480, 640)
        assert sum(level.macs for level in report.levels) == report.total_macs
        assert sum(level.params for level in report.levels) == report.total_params
        assert sum(level.activations for level in report.levels) == report.total_activations
        assert 0 < report.peak_live_activations <= report.total_activations

    def test_extraction_cost_quarters_per_level(self):
        """Test the shared extraction MACs of level i are 4^-i of level 0"""
        report = cost_report(build_cnp(), 480, 640)
        first = report.levels[0].extraction_shared_macs
        assert first > 0
        for i in range(1, 5):
            assert report.levels[i].extraction_shared_macs * 4 ** i == first

    def test_first_extraction_conv_reads_the_input(self):
        """Test only level 0's first conv differs, by its input-channel width"""
        model = config.model
        report = cost_report(build_cnp(), 480, 640)
        level0, level1 = report.levels[0], report.levels[1]
        conv1_level0 = 480 * 640 * model.feature_channels * model.input_channels * 9
        assert level0.extraction_macs - level0.extraction_shared_macs == conv1_level0
        for i in range(2, 5):
            assert report.levels[i].extraction_macs * 4 ** (i - 1) == level1.extraction_macs

    def test_cost_ratio_bounded(self):
        """Test five levels cost at most four times one level at 640x480"""
        one = cost_report(build_cnp(replace(config.model, levels=1)), 480, 640).total_macs
        five = cost_report(build_cnp(replace(config.model, levels=5)), 480, 640).total_macs
        assert five / one <= config.analysis.max_cost_ratio

    def test_conv_macs(self):
        """Test a single conv layer's MAC count"""
        graph = build_single_level(2, small_config(1, residual=False))
        report = cost_report(graph, 8, 8)
        conv_macs = 8 * 8 * 8 * 3 * 9 + 1 * 8 * 8 * 8 * 1
        prelu_macs = 8 * 8 * 8
        assert report.total_macs == conv_macs + prelu_macs

    def test_indivisible_size(self):
        """Test cost_report checks divisibility by the period"""
        with pytest.raises(ConfigurationError):
            cost_report(build_cnp(small_config(3)), 30, 32)


class TestAnalysisRows:
    """Test the analysis table rows"""

    def test_level_sweep(self):
        """Test five rows, increasing receptive field and bounded cost ratio"""
        rows = analysis_rows(range(1, 6), 1)
        assert len(rows) == 5
        rfs = [row['receptive_field'] for row in rows]
        assert rfs == sorted(set(rfs))
        assert rows[0]['cost_ratio'] == 1.0
        assert rows[-1]['cost_ratio'] <= 4.0

    def test_single_level_comparison(self):
        """Test the matching plain network reaches at least the pyramid receptive field"""
        for row in analysis_rows([3], 1, small_config(), 64, 64):
            plain = build_single_level(row['single_level_layers'])
            assert analytic_rf(plain).rf >= row['receptive_field']
            assert row['single_level_gmacs'] > 0

    def test_published_column_alongside(self):
        """Test the level sweep carries the published pyramid receptive fields next to the computed ones"""
        rows = analysis_rows(range(1, 6), 1, small_config(), 64, 64)
        assert [row['reference_rf'] for row in rows] == [15, 39, 95, 223, 511]
        assert [row['receptive_field'] for row in rows] == [11, 22, 48, 100, 204]
        for smaller, larger in zip(rows, rows[1:]):
            assert larger['receptive_field'] >= 2 * smaller['receptive_field']
            assert larger['reference_rf'] >= 2 * smaller['reference_rf']

    def test_reference_missing_beyond_published_levels(self):
        """Test depths without a published value get an empty reference"""
        assert analysis_rows([6], 1, small_config(), 64, 64)[0]['reference_rf'] is None
