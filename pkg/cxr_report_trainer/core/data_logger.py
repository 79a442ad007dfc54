import json
import logging
import os
from typing import Any, Callable, Dict, Iterable, Iterator, List, Optional

from cxr_report_trainer.core.errors import DataError


class DataLogger:
    def __init__(self, filename: str, sort_key: Optional[Callable[[dict], Any]] = None):
        """
        Initialize the DataLogger.
        If the file exists, delete it.
        Then create a new empty JSON Lines file.

        :param filename: Path to the JSON Lines file where records will be written
        :param sort_key: Optional key; records are written in this order on save()
        """
        self.filename = filename
        self.sort_key = sort_key

        directory = os.path.dirname(self.filename)
        if directory:
            os.makedirs(directory, exist_ok=True)

        if os.path.exists(self.filename):
            try:
                os.remove(self.filename)
            except OSError as e:
                logging.error(f"Error deleting existing file {self.filename}: {e}")

        self.data: List[Dict[str, Any]] = []
        try:
            open(self.filename, "w").close()
        except IOError as e:
            raise DataError(f"Error creating file {self.filename}: {e}")

    def log(self, data_point: Dict[str, Any]) -> None:
        """
        Add a record to the internal list of logged data.
        """
        self.data.append(data_point)

    def extend(self, data_points: Iterable[Dict[str, Any]]) -> None:
        for data_point in data_points:
            self.log(data_point)

    def save(self) -> int:
        """
        Write the logged records, one JSON object per line. Returns the record count.
        """
        records = sorted(self.data, key=self.sort_key) if self.sort_key else self.data
        try:
            with open(self.filename, "w") as f:
                for record in records:
                    f.write(json.dumps(record, sort_keys=True) + "\n")
        except IOError as e:
            raise DataError(f"Error saving data to {self.filename}: {e}")
        logging.debug(f"Wrote {len(records)} records to {self.filename}")
        return len(records)


def iter_jsonl(filename: str) -> Iterator[Dict[str, Any]]:
    if not os.path.isfile(filename):
        raise DataError(f"JSON Lines file {filename} does not exist.")
    with open(filename, "r") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{filename}:{line_number}: invalid JSON ({e})")


def read_jsonl(filename: str) -> List[Dict[str, Any]]:
    return list(iter_jsonl(filename))


def write_jsonl(
    filename: str,
    records: Iterable[Dict[str, Any]],
    sort_key: Optional[Callable[[dict], Any]] = None,
) -> int:
    writer = DataLogger(filename, sort_key=sort_key)
    writer.extend(records)
    return writer.save()
