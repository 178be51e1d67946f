# errors.py
"""
Exceções do simulador.

A CLI traduz estas exceções em códigos de saída:
ConfigError -> 1, demais ByrdError -> 2.
"""

from typing import Optional


class ByrdError(Exception):
    """Raiz de todas as falhas conhecidas do simulador."""


class ConfigError(ByrdError):
    """Arquivo de configuração inválido ou inconsistente."""


class DataFormatError(ByrdError, ValueError):
    """Falha ao interpretar um arquivo de dados."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"linha {line}: {message}"
        super().__init__(message)


class LabelKindError(ByrdError, ValueError):
    """Tipo de rótulo incompatível com o modelo."""


class DimensionError(ByrdError, ValueError):
    """Dimensões incompatíveis ou lista vazia de vetores."""


class DivergenceError(ByrdError):
    """Loss ou gradiente não finito durante o treinamento."""

    def __init__(self, round_index: int, what: str = "loss"):
        self.round_index = round_index
        super().__init__(f"{what} não finito na rodada k={round_index}")
