# SPDX-FileCopyrightText: 2024 Benedict Harcourt <ben.harcourt@harcourtprogramming.co.uk>
#
# SPDX-License-Identifier: BSD-2-Clause

from __future__ import annotations as _future_annotations

import io
import json
import logging

from bilevel.errors import LowerDivergenceError, UpperDivergenceError
from bilevel.logger import JsonFormatter, configure_logging


def _records(stream: io.StringIO) -> list[dict]:
    return [json.loads(line) for line in stream.getvalue().splitlines() if line]


class TestJsonLogging:
    def test_extra_fields(self):
        stream = io.StringIO()
        handler = configure_logging("DEBUG", stream=stream)
        try:
            logging.getLogger("bilevel").getChild("upper").info("Upper step", extra={"j": 3})
        finally:
            logging.getLogger("bilevel").removeHandler(handler)

        (record,) = _records(stream)
        assert record["message"] == "Upper step"
        assert record["level"] == "INFO"
        assert record["logger"] == "bilevel.upper"
        assert record["j"] == 3

    def test_reconfigure_replaces_handler(self):
        root = logging.getLogger("bilevel")
        first = configure_logging(stream=io.StringIO())
        second = configure_logging(stream=io.StringIO())
        try:
            assert first not in root.handlers
            assert second in root.handlers
        finally:
            root.removeHandler(second)

    def test_exception_context_and_cause(self):
        try:
            try:
                raise LowerDivergenceError(4, 12.5, "residual grew")
            except LowerDivergenceError as err:
                raise UpperDivergenceError(2, err.step, str(err)) from err
        except UpperDivergenceError as err:
            info = (type(err), err, err.__traceback__)

        formatted = JsonFormatter().formatException(info)  # type: ignore[no-untyped-call]
        assert formatted["type"] == "UpperDivergenceError"
        assert formatted["context"] == {"iteration": 2, "lower_steps": 4}
        assert formatted["cause"]["type"] == "LowerDivergenceError"
        assert formatted["cause"]["context"] == {"step": 4, "residual": 12.5}
        assert formatted["traceback"]
