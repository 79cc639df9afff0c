#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# Copyright (C) 2023 The eoscascade Authors
#
# SPDX-License-Identifier: LGPL-2.1+
#
# pylint: disable=too-few-public-methods

import csv
import io
import json
import logging
import os

from typing import Any, Dict, List, Sequence

logger = logging.getLogger(__name__)


class ReportWriter:

    """Write result files into one output directory.

    Files are written with ``\\n`` line endings and sorted JSON keys so the
    same results always produce the same bytes.
    """

    def __init__(self, out_dir: str) -> None:
        self.out_dir: str = out_dir
        self.written: List[str] = []

    def _path(self, name: str) -> str:
        os.makedirs(self.out_dir, exist_ok=True)
        return os.path.join(self.out_dir, name)

    def write_text(self, name: str, text: str) -> str:
        """Write a text file, returning its path.

        Raises:
            OSError: The output directory or the file is not writable.
        """
        path = self._path(name)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        self.written.append(path)
        logger.info("wrote %s", path)
        return path

    def write_csv(
        self, name: str, columns: Sequence[str], rows: Sequence[Dict[str, Any]]
    ) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: _format(row[key]) for key in columns})
        return self.write_text(name, buf.getvalue())

    def write_json(self, name: str, record: Any) -> str:
        text = json.dumps(record, indent=2, sort_keys=True) + "\n"
        return self.write_text(name, text)


def _format(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)
