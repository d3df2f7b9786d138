"""
Esquemas Pydantic que validan la configuración de cada ejecución.
"""

from .network_schema import NetworkConfig, TrainConfig
from .phantom_schema import PhantomParams, SplitConfig
from .analysis_schema import AnalysisConfig
from .run_schema import RunConfig, load_run_config, write_run_config
