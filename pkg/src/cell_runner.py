"""
Cell Runner - Esecuzione concorrente delle celle di uno studio con ordine deterministico
"""

import asyncio
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, TypeVar
import time
import logging

from src.exceptions import ManifoldError


logger = logging.getLogger(__name__)

T = TypeVar('T')


class CellRunner:
    """Pool di worker limitato da semaforo; i risultati tornano in ordine di indice"""

    def __init__(self, max_concurrent: int = 4):
        """
        Inizializza il runner

        Args:
            max_concurrent: Numero massimo di celle in esecuzione contemporanea
        """
        if max_concurrent < 1:
            raise ValueError("max_concurrent deve essere >= 1")
        self.max_concurrent = max_concurrent
        self.executor = ThreadPoolExecutor(max_workers=max_concurrent)

        # Statistiche
        self.stats = {
            'cells_run': 0,
            'failures': 0,
            'total_time': 0.0,
        }

    async def run_cells(self, cells: Sequence[Callable[[], T]],
                        on_error: Optional[Callable[[int, ManifoldError], T]] = None) -> List[T]:
        """
        Esegue le celle in parallelo

        Args:
            cells: Funzioni senza argomenti, una per cella
            on_error: Converte un ManifoldError di cella in un record di fallimento;
                se assente l'errore viene propagato

        Returns:
            Risultati ordinati per indice di cella
        """
        if not cells:
            return []

        start_time = time.time()
        semaphore = asyncio.Semaphore(self.max_concurrent)
        tasks = [self._create_cell_task(semaphore, i, cell, on_error) for i, cell in enumerate(cells)]
        completed = await asyncio.gather(*tasks)

        # L'ordine finale non dipende dallo scheduling
        results = [result for _, result in sorted(completed, key=lambda item: item[0])]
        self.stats['total_time'] += time.time() - start_time
        return results

    async def _create_cell_task(self, semaphore: asyncio.Semaphore, index: int,
                                cell: Callable[[], T],
                                on_error: Optional[Callable[[int, ManifoldError], T]]) -> Tuple[int, T]:
        async with semaphore:
            loop = asyncio.get_running_loop()
            try:
                result = await loop.run_in_executor(self.executor, cell)
            except ManifoldError as e:
                self.stats['failures'] += 1
                if on_error is None:
                    raise
                logger.warning(f"⚠️ Cella {index} fallita: {type(e).__name__}: {e}")
                result = on_error(index, e)
            self.stats['cells_run'] += 1
            return (index, result)

    def get_statistics(self) -> Dict[str, Any]:
        stats = self.stats.copy()
        stats['avg_time_per_cell'] = (stats['total_time'] / stats['cells_run']
                                      if stats['cells_run'] else 0.0)
        return stats

    def close(self):
        """Chiude il pool di thread"""
        self.executor.shutdown(wait=True)

    async def __aenter__(self):
        return self

    async def __aexit__(self, exc_type, exc_val, exc_tb):
        self.close()


def run_cells(cells: Sequence[Callable[[], T]], max_concurrent: int = 4,
              on_error: Optional[Callable[[int, ManifoldError], T]] = None) -> List[T]:
    """
    Wrapper sincrono per l'esecuzione concorrente delle celle

    Args:
        cells: Celle da eseguire
        max_concurrent: Concorrenza massima
        on_error: Conversione degli errori di cella in record

    Returns:
        Risultati in ordine di indice
    """
    async def _run():
        async with CellRunner(max_concurrent) as runner:
            results = await runner.run_cells(cells, on_error)
            stats = runner.get_statistics()
            logger.info(f"📊 Celle: {stats['cells_run']}, fallite: {stats['failures']}, "
                        f"tempo: {stats['total_time']:.2f}s")
            return results

    return asyncio.run(_run())
