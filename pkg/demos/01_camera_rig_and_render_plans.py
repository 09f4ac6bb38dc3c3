"""
Camera rig and render plans
===========================

Normalize asset bounding boxes into the centered unit cube, build the
multi-view camera rig, and emit the plan file an external renderer consumes.
"""

from capforge import AssetRecord, LicenseClass, PipelineConfig
from capforge.geometry import (
    emit_render_plan,
    generate_camera_rig,
    normalize_to_unit_cube,
    render_plans_to_jsonl,
)

# A bbox twice as tall as it is wide: scale = 1/4, center (1,2,1) -> origin.
transform = normalize_to_unit_cube((0, 0, 0), (2, 4, 2))
print("scale:", transform.scale)
print("translation:", transform.translation)
print("corner (0,0,0) maps to:", transform.apply((0, 0, 0)))
print("corner (2,4,2) maps to:", transform.apply((2, 4, 2)))

# The default rig: 8 evenly spaced azimuths, two views slightly below the
# object to catch its underside, the rest slightly above.
print("\nrig:")
for pose in generate_camera_rig(PipelineConfig()):
    marker = "below" if pose.elevation_deg < 0 else "above"
    print(f"  azimuth {pose.azimuth_deg:6.1f}  elevation {pose.elevation_deg:6.1f}  ({marker})")

assets = [
    AssetRecord(
        uid=f"demo-{i}",
        license=LicenseClass.CC_BY,
        bbox_min=(0, 0, 0),
        bbox_max=(1 + i, 2, 1),
        has_camera_info=True,
    )
    for i in range(3)
]
plans, skipped = emit_render_plan(assets, PipelineConfig())
print(f"\n{len(plans)} render plans, {len(skipped)} skipped")
print(render_plans_to_jsonl(plans[:1]).strip())
