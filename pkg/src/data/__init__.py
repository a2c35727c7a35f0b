from .loader import DataLoader, ingest_calibration, load_symbols, save_symbols
from .sources import get_data_source

__all__ = ["DataLoader", "ingest_calibration", "load_symbols", "save_symbols", "get_data_source"]
