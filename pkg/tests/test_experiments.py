"""
Test per gli studi numerici (dimensioni ridotte)
"""

import math
from dataclasses import replace
from functools import lru_cache

import numpy as np
import pytest

from config.settings import OUTPUT_CONFIG, default_run_config
from src.exceptions import FailureBudgetError, ValidationError
from src.experiments import (STUDIES, STUDY_FUNCTIONS, CellRecord, StudyConfig, StudyResult,
                             _loglinear_fit, build_context, check_failure_budget, check_fixtures,
                             derive_seed, fingerprint, fixture_sanity, invariance_residual,
                             k_diagnostics, ladder_study, mc_probability, regression_fixtures,
                             sample_ou, shape_error_sweep, unstable_direction)
from src.results import load_fixtures, write_fixtures


def _small_config(**experiments):
    config = default_run_config()
    config['spectral']['grid_size'] = 64
    config['stochastic']['dt'] = 0.02
    config['stochastic']['tail_cutoff'] = 20.0
    config['experiments'].update({'sigma_list': [0.25], 'n_samples': 2, 'pilot_samples': 2,
                                  'growth_horizon': 5.0})
    config['experiments'].update(experiments)
    config['runtime']['concurrency'] = 2
    return config


@lru_cache(maxsize=None)
def _context():
    return build_context(StudyConfig.from_config(_small_config()))


class TestSeeds:

    def test_derive_seed_deterministic(self):
        """Test stesso (base, studio, indice), stesso seme"""
        assert derive_seed(0, 'shape_error_sweep', 3) == derive_seed(0, 'shape_error_sweep', 3)

    def test_derive_seed_distinct(self):
        """Test semi diversi per studio, indice e seme base"""
        seeds = {derive_seed(0, 'shape_error_sweep', 0), derive_seed(0, 'shape_error_sweep', 1),
                 derive_seed(0, 'mc_probability', 0), derive_seed(1, 'shape_error_sweep', 0)}
        assert len(seeds) == 4
        assert all(seed >= 0 for seed in seeds)


class TestStudyConfig:

    def test_from_defaults(self):
        """Test costruzione dai default"""
        config = StudyConfig.from_config(default_run_config())
        assert config.sigma_list == (0.5, 0.25, 0.125)
        assert config.radius_units == 'cutoff'
        assert config.concurrency == 4
        assert not config.deterministic

    def test_seed_override(self):
        """Test seme base sostituito"""
        assert StudyConfig.from_config(default_run_config(), seed_override=42).base_seed == 42

    def test_noise_levels(self):
        """Test sigma = 0 in modalità deterministica"""
        config = StudyConfig.from_config(default_run_config(), deterministic=True)
        assert config.noise_levels() == (0.0,)

    def test_radius_units(self):
        """Test raggi in unità di R o assoluti"""
        config = StudyConfig.from_config(default_run_config())
        assert config.radius(0.2, 0.05) == pytest.approx(0.01)
        assert replace(config, radius_units='absolute').radius(0.2, 0.05) == 0.2
        with pytest.raises(ValidationError):
            replace(config, radius_units='metres')

    def test_invalid_values(self):
        """Test liste vuote e valori negativi"""
        config = StudyConfig.from_config(default_run_config())
        with pytest.raises(ValidationError):
            replace(config, sigma_list=())
        with pytest.raises(ValidationError):
            replace(config, sigma_list=(0.0,))
        with pytest.raises(ValidationError):
            replace(config, radius_list=(-0.1,))
        with pytest.raises(ValidationError):
            replace(config, n_samples=0)


class TestContext:

    def test_certified_context(self):
        """Test SC < 1 con R e l_F impostati"""
        context = _context()
        assert 0.0 < context.sc < 1.0
        assert context.spec.R is not None and context.spec.l_F is not None
        assert context.cfg.beta == -0.5

    def test_explicit_radius_too_large(self):
        """Test R esplicito con SC >= 1"""
        config = _small_config()
        config['nonlinear']['R'] = 10.0
        with pytest.raises(ValidationError):
            build_context(StudyConfig.from_config(config))

    def test_fingerprint(self):
        """Test impronta con tutti i parametri"""
        config = StudyConfig.from_config(_small_config())
        data = fingerprint(config, _context())
        assert set(data) == {'model', 'nonlinearity', 'solver', 'sc', 'study', 'versions'}
        assert data['solver']['M_c'] == 1.0
        assert data['study']['radius_units'] == 'cutoff'

    def test_unstable_direction(self):
        """Test xi = r e_1 con |xi|_alpha = r"""
        model = _context().model
        xi = unstable_direction(model, 0.01)
        assert xi.alpha_norm(model) == pytest.approx(0.01)
        with pytest.raises(ValidationError):
            unstable_direction(model, 0.01, mode=2)

    def test_sample_ou_covers_horizon(self):
        """Test finestra [-T, t_max] e cammino nullo con sigma = 0"""
        context = _context()
        path, ou = sample_ou(None, 0.0, context, t_max=0.5)
        assert np.all(path.values == 0.0)
        assert ou.t_min <= -context.cfg.horizon
        assert ou.t_max == pytest.approx(0.5)
        _, noisy = sample_ou(11, 0.25, context)
        assert noisy.sigma == 0.25
        assert noisy.t_max == 0.0


class TestShapeSweep:

    def test_deterministic_sweep(self):
        """Test una cella per raggio, tutte risolte"""
        config = StudyConfig.from_config(_small_config(), deterministic=True)
        result = shape_error_sweep(config, _context())
        R = _context().spec.R
        assert [c.r for c in result.cells] == pytest.approx([0.2 * R, 0.1 * R, 0.05 * R])
        assert all(c.success and c.seed is None for c in result.cells)
        assert [c.cell_id for c in result.cells] == [0, 1, 2]
        summary = result.aggregates['by_sigma']['0.0']
        assert summary['slope'] is not None and summary['slope'] > 1.5
        assert result.aggregates['contraction_ok_fraction'] == 1.0

    def test_deterministic_shape_order(self):
        """Test err(r)/r^2 strettamente decrescente e pendenza > 2 con raggi 0.8R, 0.4R, 0.2R"""
        config = default_run_config()
        config['nonlinear']['target_sc'] = 0.9
        config['manifold']['chart_fraction'] = 0.9
        config['stochastic']['dt'] = 0.005
        config['experiments']['radius_list'] = [0.8, 0.4, 0.2]
        study_config = StudyConfig.from_config(config, deterministic=True)
        result = shape_error_sweep(study_config, build_context(study_config))
        summary = result.aggregates['by_sigma']['0.0']
        assert summary['ratio_shrinks_with_r']
        assert summary['slope'] > 2.0
        assert all(c.success for c in result.cells)

    def test_rerun_is_deterministic(self):
        """Test stesso risultato con concorrenza diversa"""
        config = StudyConfig.from_config(_small_config())
        first = shape_error_sweep(config, _context())
        second = shape_error_sweep(replace(config, concurrency=1), _context())
        assert [c.err for c in first.cells] == [c.err for c in second.cells]
        assert [c.seed for c in first.cells] == [c.seed for c in second.cells]
        assert first.aggregates == second.aggregates

    def test_stochastic_cells(self):
        """Test celle per (sigma, campione, raggio) con semi derivati"""
        config = StudyConfig.from_config(_small_config())
        result = shape_error_sweep(config, _context())
        assert len(result.cells) == 1 * 2 * 3
        assert result.cells[0].seed == derive_seed(config.base_seed, 'shape_error_sweep', 0)
        assert result.cells[3].seed == derive_seed(config.base_seed, 'shape_error_sweep', 1)
        assert result.failures == 0


class TestMcProbability:

    def test_small_run(self):
        """Test righe per sigma e costante C congelata"""
        config = StudyConfig.from_config(_small_config(sigma_list=[0.5, 0.25], n_samples=4))
        result = mc_probability(config, _context())
        rows = result.aggregates['by_sigma']
        assert [row['sigma'] for row in rows] == [0.5, 0.25]
        assert all(row['n'] == 4 for row in rows)
        assert result.aggregates['C'] > 0.0
        for row in rows:
            low, high = row['success_ci']
            assert 0.0 <= low <= row['success_fraction'] <= high <= 1.0
        assert all(c.bound == pytest.approx(result.aggregates['C'] * (c.r + c.r ** 2))
                   for c in result.cells)

    def test_monotone_in_sigma(self):
        """Test P(K+- > 1/sigma) strettamente decrescente e successi non decrescenti al calare di sigma"""
        # K+- >= 2 > 1/0.6: ogni cammino supera la soglia a sigma = 0.6
        config = StudyConfig.from_config(_small_config(sigma_list=[0.6, 0.125], n_samples=6))
        result = mc_probability(config, _context())
        rows = result.aggregates['by_sigma']
        assert rows[0]['p_exceed'] == 1.0
        assert rows[1]['p_exceed'] < 1.0
        assert result.aggregates['p_exceed_strictly_decreasing']
        assert result.aggregates['success_nondecreasing']

    def test_sigma_above_ceiling(self):
        """Test sigma oltre min{(lambda_s - (p-1) lambda_u)/p, -lambda_u}"""
        config = StudyConfig.from_config(_small_config(sigma_list=[1.6]))
        with pytest.raises(ValidationError):
            mc_probability(config, _context())


class TestInvariance:

    def test_deterministic_residual(self):
        """Test residuo di invarianza piccolo rispetto a |h|"""
        config = StudyConfig.from_config(_small_config(), deterministic=True)
        result = invariance_residual(config, _context())
        assert len(result.cells) == 1
        cell = result.cells[0]
        assert cell.success
        assert math.isfinite(cell.err)
        assert cell.extras['integrator_gap'] >= 0.0
        assert result.aggregates['rho_max'] == cell.err
        # exponential Euler del primo ordine: dimezzare dt_flow dimezza la differenza
        assert 1.7 <= cell.extras['integrator_ratio'] <= 2.3
        assert result.aggregates['integrator_ratio_median'] == cell.extras['integrator_ratio']


class TestLoglinearFit:

    def _row(self, sigma: float, p: float, ci):
        return {'sigma': sigma, 'p_exceed': p, 'p_exceed_ci': ci}

    def test_exact_line(self):
        """Test retta esatta log P = -1/sigma"""
        rows = [self._row(s, math.exp(-1.0 / s), (0.0, 1.0)) for s in (0.5, 0.25, 0.2)]
        fit = _loglinear_fit(rows)
        assert fit['loglinear_slope'] == pytest.approx(1.0)
        assert fit['loglinear_within_ci']
        assert fit['loglinear_dropped_sigmas'] == []

    def test_zero_cells_dropped(self):
        """Test sigma senza superamenti esclusi dalla retta e riportati"""
        rows = [self._row(0.5, math.exp(-2.0), (0.1, 0.2)),
                self._row(0.25, math.exp(-4.0), (0.01, 0.03)),
                self._row(0.125, 0.0, (0.0, 0.004))]
        fit = _loglinear_fit(rows)
        assert fit['loglinear_dropped_sigmas'] == [0.125]
        assert fit['loglinear_slope'] == pytest.approx(1.0)
        # retta a sigma = 0.125: e^{-8} sotto l'estremo di Wilson
        assert fit['loglinear_within_ci']

    def test_too_few_nonzero(self):
        """Test una sola riga con superamenti: nessuna retta"""
        rows = [self._row(0.5, 0.1, (0.05, 0.2)), self._row(0.25, 0.0, (0.0, 0.01))]
        fit = _loglinear_fit(rows)
        assert fit['loglinear_slope'] is None
        assert not fit['loglinear_within_ci']
        assert fit['loglinear_dropped_sigmas'] == [0.25]


@lru_cache(maxsize=None)
def _fixture_values():
    return regression_fixtures(StudyConfig.from_config(_small_config()))


def _values(**changes):
    values = {'target_sc': 0.5, 'R_star': 0.05, 'sc_at_R_star': 0.4,
              'l_F_at_lipschitz_radius': 0.6, 'invariance_rho': 1e-9, 'integrator_ratio': 2.0}
    values.update(changes)
    return values


class TestRegressionFixtures:

    def test_verified_run(self):
        """Test l_F(R=0.1) <= 1, SC(R*) <= target_sc e rapporto dell'integratore"""
        values = _fixture_values()
        assert fixture_sanity(values) == []
        assert values['l_F_at_lipschitz_radius'] <= 1.0
        assert values['sc_at_R_star'] <= 0.5
        assert values['R_star'] == pytest.approx(_context().spec.R, abs=1e-10)

    def test_record_and_compare(self, tmp_path):
        """Test fixture registrate riprodotte entro 1e-10 da un nuovo run"""
        config = _small_config()
        path = write_fixtures(_fixture_values(), config, tmp_path / 'regression.json')
        recorded = load_fixtures(path)
        assert recorded['recorded']
        current = regression_fixtures(StudyConfig.from_config(recorded['config']))
        assert check_fixtures(recorded['values'], current) == []
        assert current['invariance_rho'] <= 2.0 * recorded['values']['invariance_rho']

    def test_drift_detected(self):
        """Test scostamenti oltre 1e-10 e residuo oltre il doppio"""
        recorded = _values()
        rules = {v['rule'] for v in check_fixtures(recorded, _values(R_star=0.05 + 1e-8))}
        assert rules == {"R_star within 1e-10"}
        rules = {v['rule'] for v in check_fixtures(recorded, _values(invariance_rho=3e-9))}
        assert rules == {"rho <= 2 x fixture"}
        assert check_fixtures(recorded, _values(invariance_rho=1.9e-9)) == []

    def test_sanity_rules(self):
        """Test controlli prima della registrazione"""
        rules = {v['rule'] for v in fixture_sanity(_values(l_F_at_lipschitz_radius=1.2,
                                                           integrator_ratio=1.2))}
        assert rules == {"l_F(R=0.1) <= 1", "integrator ratio in [1.7, 2.3]"}

    def test_committed_fixtures(self):
        """Test run corrente contro le fixture registrate nel repository"""
        recorded = load_fixtures(OUTPUT_CONFIG['fixtures_file'])
        if not recorded['recorded']:
            pytest.skip("fixture non registrate: eseguire lp-manifold record-fixtures")
        current = regression_fixtures(StudyConfig.from_config(recorded['config']))
        assert check_fixtures(recorded['values'], current) == []


class TestKDiagnostics:

    def test_requires_thousand_samples(self):
        """Test n_samples < 1000 rifiutato"""
        config = StudyConfig.from_config(_small_config())
        with pytest.raises(ValidationError):
            k_diagnostics(config, _context())

    def test_thousand_samples(self):
        """Test stima di C2 sulla prima metà e verifica sulla seconda"""
        config = StudyConfig.from_config(_small_config(n_samples=1000, sigma_list=[0.5]))
        result = k_diagnostics(config, _context())
        row = result.aggregates['by_sigma'][0]
        assert row['n'] == 1000
        assert row['C2'] >= 0.0
        assert row['K2_violations'] >= 0
        assert row['ks_diagnostic_only']
        assert all(c.extras['K1'] >= 1.0 for c in result.cells)


class TestLadder:

    def test_ladder_collapse(self):
        """Test ||h - h2|| decrescente e ||h2 - h3||/r^2 nullo entro il plateau"""
        config = StudyConfig.from_config(_small_config(), deterministic=True)
        result = ladder_study(config, _context())
        assert len(result.cells) == 4
        assert result.aggregates['h_h2_monotone']
        assert result.aggregates['h2_h3_over_r2_max'] == 0.0
        assert result.aggregates['cutoff_radius'] == _context().spec.R


class TestFailureBudget:

    def _result(self, failed: int, total: int) -> StudyResult:
        cells = [CellRecord(study='s', cell_id=i, seed=None, sigma=0.0, r=0.1,
                            error_type='ConvergenceError' if i < failed else None)
                 for i in range(total)]
        return StudyResult('s', cells, {}, {})

    def test_within_budget(self):
        """Test frazione di fallimenti entro il budget"""
        check_failure_budget(self._result(1, 10), 0.1)
        check_failure_budget(self._result(0, 0), 0.1)

    def test_over_budget(self):
        """Test FailureBudgetError oltre il budget"""
        with pytest.raises(FailureBudgetError):
            check_failure_budget(self._result(2, 10), 0.1)


class TestRegistry:

    def test_all_studies_registered(self):
        """Test ogni studio ha una funzione"""
        assert set(STUDY_FUNCTIONS) == set(STUDIES)
