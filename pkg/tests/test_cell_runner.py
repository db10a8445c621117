"""
Test per l'esecuzione concorrente delle celle
"""

import threading
import time

import pytest

from src.cell_runner import CellRunner, run_cells
from src.exceptions import ConvergenceError, ValidationError


def _sleepy(index: int, delay: float):
    def cell():
        time.sleep(delay)
        return index
    return cell


class TestCellRunner:

    def test_results_in_index_order(self):
        """Test ordine per indice anche se le celle finiscono in ordine inverso"""
        cells = [_sleepy(i, 0.01 * (5 - i)) for i in range(5)]
        assert run_cells(cells, max_concurrent=5) == [0, 1, 2, 3, 4]

    def test_empty(self):
        """Test nessuna cella"""
        assert run_cells([], max_concurrent=2) == []

    def test_concurrency_limit(self):
        """Test al massimo max_concurrent celle attive"""
        lock = threading.Lock()
        active = {'now': 0, 'peak': 0}

        def cell():
            with lock:
                active['now'] += 1
                active['peak'] = max(active['peak'], active['now'])
            time.sleep(0.02)
            with lock:
                active['now'] -= 1
            return True

        assert all(run_cells([cell] * 8, max_concurrent=2))
        assert active['peak'] <= 2

    def test_on_error_converts_failures(self):
        """Test errore di cella convertito in record"""
        def failing():
            raise ConvergenceError("non convergente")

        results = run_cells([_sleepy(0, 0.0), failing, _sleepy(2, 0.0)], max_concurrent=2,
                            on_error=lambda index, error: ('failed', index, type(error).__name__))
        assert results == [0, ('failed', 1, 'ConvergenceError'), 2]

    def test_error_propagates_without_handler(self):
        """Test errore propagato senza on_error"""
        def failing():
            raise ValidationError("precondizione violata", rule="test")

        with pytest.raises(ValidationError):
            run_cells([failing], max_concurrent=1)

    def test_foreign_errors_propagate(self):
        """Test eccezioni estranee al pacchetto non convertite"""
        def broken():
            raise KeyError('x')

        with pytest.raises(KeyError):
            run_cells([broken], on_error=lambda index, error: None)

    def test_invalid_concurrency(self):
        """Test concorrenza non valida"""
        with pytest.raises(ValueError):
            CellRunner(0)

    def test_statistics(self):
        """Test statistiche del runner"""
        import asyncio

        async def _run():
            async with CellRunner(2) as runner:
                await runner.run_cells([_sleepy(i, 0.0) for i in range(3)])
                return runner.get_statistics()

        stats = asyncio.run(_run())
        assert stats['cells_run'] == 3
        assert stats['failures'] == 0
        assert stats['avg_time_per_cell'] >= 0.0
