"""
Definición de interfaces abstractas para los repositorios.
Proporciona las operaciones base (guardar / cargar por ruta) que los
repositorios específicos deben implementar.
"""

from abc import ABC, abstractmethod


class Create(ABC):
    @abstractmethod
    def save(self, entity, path: str) -> str:
        pass


class Read(ABC):
    @abstractmethod
    def load(self, path: str):
        pass
