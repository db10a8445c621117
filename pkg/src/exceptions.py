"""
Eccezioni del pacchetto - gerarchia unica usata da tutti i moduli e dalla CLI
"""

from typing import Optional


class ManifoldError(Exception):
    """Errore base per tutte le operazioni sulla varietà invariante"""


class ValidationError(ManifoldError, ValueError):
    """Precondizione violata (dimensioni, segni temporali, finestre, SC >= 1)"""

    def __init__(self, message: str, rule: Optional[str] = None):
        super().__init__(message)
        self.rule = rule


class SpectrumError(ValidationError):
    """Lo spettro non cambia segno: nessuno splitting instabile/stabile"""


class ResonanceError(ValidationError):
    """Modo risonante lambda_k + mu = 0"""

    def __init__(self, message: str, mode: int):
        super().__init__(message, rule="lambda_k + mu != 0")
        self.mode = mode


class WindowError(ValidationError):
    """Finestra del cammino di Wiener troppo corta o griglia non allineata"""


class ConvergenceError(ManifoldError, RuntimeError):
    """Iterazione di Picard o bisezione non convergente"""


class FailureBudgetError(ManifoldError):
    """Uno studio ha superato il budget di celle fallite"""
