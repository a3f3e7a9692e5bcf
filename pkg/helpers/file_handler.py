# helpers/file_handler.py - Reading and writing tables and JSON documents
import json
from pathlib import Path
from typing import Any, Optional, Union

import pandas as pd

from config.constants import CSV_FLOAT_FORMAT, CSV_LINE_TERMINATOR
from core.errors import ConfigError


class FileHandler:
    """Table and JSON I/O with the project's fixed CSV conventions"""

    @staticmethod
    def to_csv_text(df: pd.DataFrame) -> str:
        """CSV with header, '.' decimals and 17 significant digits"""
        return df.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator=CSV_LINE_TERMINATOR)

    @staticmethod
    def write_table(df: pd.DataFrame, path: Union[str, Path]) -> Path:
        """Write CSV, or Excel when the path ends in .xlsx"""
        path = Path(path)
        if path.suffix.lower() == ".xlsx":
            df.to_excel(path, index=False, engine="openpyxl")
        else:
            path.write_text(FileHandler.to_csv_text(df), encoding="utf-8")
        return path

    @staticmethod
    def write_json(data: Any, path: Optional[Union[str, Path]] = None) -> str:
        """Serialize with sorted keys; written to `path` when given"""
        text = json.dumps(data, indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n", encoding="utf-8")
        return text

    @staticmethod
    def load_json(path: Union[str, Path]) -> Any:
        try:
            return json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
