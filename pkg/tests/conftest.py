from __future__ import annotations

import pytest

from capforge.core import AssetRecord, LicenseClass


@pytest.fixture
def make_asset():
    def _make(uid="asset-000", **overrides) -> AssetRecord:
        defaults = dict(
            uid=uid,
            license=LicenseClass.CC_BY,
            bbox_min=(0.0, 0.0, 0.0),
            bbox_max=(1.0, 2.0, 1.0),
            has_camera_info=True,
        )
        defaults.update(overrides)
        return AssetRecord(**defaults)

    return _make
