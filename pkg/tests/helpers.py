import numpy as np
import torch

from vccsa.data import collate
from vccsa.model import ModelConfig, VCCSA

TINY = dict(d_raw=16, vocab_size=30, d_v=16, d_t=16, d_T=16, cnn_layers=2, heads=2, memory_hidden=4)


def random_batch(rng, frame_lengths, token_lengths, d_raw=16, vocab_size=30, dtype=torch.float64):
    b = len(frame_lengths)
    frames = [rng.normal(size=(n, d_raw)) for n in frame_lengths]
    tokens = [list(rng.integers(2, vocab_size, size=n)) for n in token_lengths]
    batch = collate([f"c{i}" for i in range(b)], frames, tokens,
                    list(rng.integers(0, 3, size=b)), list(rng.integers(0, 8, size=b)))
    return batch.to(dtype)


def tiny_model(seed=0, dtype=torch.float64, **kw):
    torch.manual_seed(seed)
    cfg = ModelConfig(**{**TINY, **kw})
    return VCCSA(cfg).to(dtype)


def pad_batch(batch, extra_frames, extra_tokens):
    """Same content with trailing padding appended."""
    from vccsa.data import PaddedBatch

    b, v, d = batch.video.shape
    video = torch.cat([batch.video, batch.video.new_zeros(b, extra_frames, d)], 1)
    vmask = torch.cat([batch.video_mask, torch.zeros(b, extra_frames, dtype=torch.bool)], 1)
    tokens = torch.cat([batch.tokens, torch.zeros(b, extra_tokens, dtype=torch.long)], 1)
    tmask = torch.cat([batch.token_mask, torch.zeros(b, extra_tokens, dtype=torch.bool)], 1)
    return PaddedBatch(batch.comment_ids, video, vmask, tokens, tmask, batch.opinion_labels, batch.emotion_labels)


def np_softmax(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)
