"""
Training under an ideal link, testing under a lossy one
=======================================================

The default scene generator and model, trained for about a minute and a half:
a model that only ever saw clean shares loses most of its accuracy once the
link starts dropping values.
"""

from v2vlc.channel import ChannelConfig
from v2vlc.pipeline import ExperimentConfig, evaluate, make_packs, train

cfg = ExperimentConfig(scheme="I", lcrn=False, lr=5e-3, channel=ChannelConfig("lossy", 0.5))
print("run directory would be", cfg.run_dir())

train_pack, test_pack = make_packs(cfg)
params, log = train(cfg, train_pack)
print("L_total by epoch:", [round(e["l_total"], 4) for e in log])

report = evaluate(params, cfg, test_pack, lossy_p=0.5)
for row in ("ideal", "lossy"):
    print(f"{row:6s} AP@0.5 {report[row]['ap50']:.3f}  AP@0.7 {report[row]['ap70']:.3f}")
