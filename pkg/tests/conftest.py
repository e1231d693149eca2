import os
import sys

import pytest

# Корень проекта в sys.path, чтобы импортировать models/ и sampling/ без установки
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


@pytest.fixture
def coco_fixture_path():
    return os.path.join(FIXTURES, "coco_three_images.json")
