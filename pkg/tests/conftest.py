import os
import tempfile

# 存储目录在 config.settings 导入时创建，测试期间放到临时目录
os.environ.setdefault("BIA_STORAGE_DIR", tempfile.mkdtemp(prefix="bia_storage_"))
os.environ.setdefault("BIA_RESULTS_DIR", tempfile.mkdtemp(prefix="bia_results_"))

import pytest

from config.settings import SchemeId
from src.experiments.models import ExperimentConfig


@pytest.fixture
def small_config():
    def make(scheme=SchemeId.MISO_BC_ONE_SIDED, **kw):
        values = dict(scheme=scheme, trials=40, snr_db=[30.0, 40.0, 50.0], seed=7)
        values.update(kw)
        return ExperimentConfig.build(**values)
    return make
