"""CFM against the diffusion upsampler at equal architecture, budget and NFE on textures.

    python scripts/texture_cfm_vs_dm.py --steps 1500 --nfe 4
"""
import argparse
import time

from cfmsr.pipeline import encode_split, evaluate_model, make_codec, make_dataset, train_model
from cfmsr.presets import texture_config


def compare(cfg, kinds=("cfm", "dm_upsampler"), log=print):
    ds = make_dataset(cfg.data, cfg.data_seed)
    codec = make_codec(cfg.data, cfg.eval.codec_seed)
    lat = encode_split(ds["train"], cfg.data, codec, cfg.path.upsample)
    out = {}
    for kind in kinds:
        t0 = time.time()
        net, _ = train_model(cfg, lat, kind)
        rep, _, res = evaluate_model(cfg, net, kind, ds["test"], cfg.data)
        out[kind] = rep
        log(f"{kind:13s} nfe={res.nfe} ffd={rep.value('ffd'):.5f} pffd={rep.value('pffd'):.5f} "
            f"psnr={rep.value('psnr'):.2f} ssim={rep.value('ssim'):.4f} ({time.time() - t0:.0f}s)")
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=1500)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--batch", type=int, default=16)
    ap.add_argument("--nfe", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    compare(texture_config(args.steps, args.lr, args.batch, args.seed, nfe=args.nfe))


if __name__ == "__main__":
    main()
