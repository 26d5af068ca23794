"""From one large labelled texture to an augmented, split training set."""

from facadewin.dataset import adaptive_crops, prepare_dataset
from facadewin.synthetic import FacadeSceneSpec, generate_facade

texture, windows = generate_facade(
    FacadeSceneSpec(image_side=300, rows=6, cols=8, window_w=14, window_h=20, margin=12,
                    spacing=18, gamma=1.4, shadow_fraction=0.25, seed=5),
    image_id="facade")

crops = adaptive_crops(texture.width, texture.height, 128, parent_id=texture.id)
print("crop origins along x:", sorted({c.origin_x for c in crops}))

for faithful in (False, True):
    ds = prepare_dataset([texture], {texture.id: windows}, side=128, seed=0,
                         paper_faithful=faithful)
    s = ds.split
    how = "crop-level shuffle" if faithful else "grouped by texture"
    print(f"{how}: {len(ds.crops)} crops x 4 turns = {len(ds.images)} images, "
          f"{len(ds.annotations)} windows, split {len(s.train)}/{len(s.val)}/{len(s.test)}")
