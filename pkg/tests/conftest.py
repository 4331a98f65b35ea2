from __future__ import annotations

import pytest

from qaforge.prompts import load_templates


@pytest.fixture(scope="session")
def en_templates():
    return load_templates("en")


@pytest.fixture(scope="session")
def ja_templates():
    return load_templates("ja")
