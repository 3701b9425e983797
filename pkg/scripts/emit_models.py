"""Write the model file of every built-in scenario (for editing and ``weaksym analyze``)."""

from __future__ import annotations

import sys
from pathlib import Path

from weaksym.scenarios import SCENARIOS, emit_model

out = Path(sys.argv[1] if len(sys.argv) > 1 else "models")
out.mkdir(parents=True, exist_ok=True)
for name in SCENARIOS:
    (out / f"{name}.wsm").write_text(emit_model(name))
    print(out / f"{name}.wsm")
