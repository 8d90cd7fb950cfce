"""Generate a small synthetic dataset and assemble a labelled contact
sheet so the defect renderings can be eyeballed: one row per image,
columns are the annulus image and its label vector."""

import sys
from pathlib import Path

from PIL import Image

from skullnet.data import LABEL_COLUMNS, generate_synthetic, load_labels_csv

out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo_gallery")
filenames, labels = generate_synthetic(18, seed=7, out_dir=out_dir)
matrix, names, _ = load_labels_csv(out_dir / "labels.csv")

cols, rows = 6, 3
sheet = Image.new("L", (cols * 200, rows * 200), color=0)
for i, name in enumerate(names):
    with Image.open(out_dir / name) as img:
        sheet.paste(img, ((i % cols) * 200, (i // cols) * 200))
sheet_path = out_dir / "contact_sheet.png"
sheet.save(sheet_path)

print(f"wrote {len(names)} images + {sheet_path}\n")
print(f"{'image':14s} labels")
for name, row in zip(names, matrix):
    active = [col for col, bit in zip(LABEL_COLUMNS, row) if bit]
    print(f"{name:14s} {', '.join(active)}")
