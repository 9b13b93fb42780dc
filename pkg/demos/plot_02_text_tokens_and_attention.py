"""
Text tokens and semantic cross-attention
=========================================

Encode strings with the deterministic toy encoder and look at how visual
tokens of a feature map attend to them.
"""

import torch

from textpainter.net import CrossAttention, cross_attention
from textpainter.textsem import encode_text, pad_bundles, toy_encoder

enc = toy_encoder(vocab_seed=0, dim=16)

###############################################################################
# One sentence token followed by one token per character, capped at 16.
for text in ["SALE", "fresh tea", "x" * 30]:
    b = encode_text(text, enc)
    print(f"{text!r:>34}: {b.n_tokens} tokens")

###############################################################################
# Pad a batch; padded tokens are masked out of the softmax.
tokens, mask = pad_bundles([encode_text("HOT", enc), encode_text("gift NEW", enc)])
print("tokens", tuple(tokens.shape), "valid", mask.sum(1).tolist())

###############################################################################
# Queries come from the feature map, keys/values from the text, and the
# query is added back before the output projection.
torch.manual_seed(0)
attn = CrossAttention(vis_dim=8, text_dim=16)
x = torch.randn(2, 8, 4, 6)
with torch.no_grad():
    out, weights = cross_attention(x, tokens, attn.w_v, attn.w_t, attn.w_out, mask, return_weights=True)
print("output", tuple(out.shape), "attention", tuple(weights.shape))
print("row sums", weights.sum(-1).flatten()[:4].tolist())
print("weight on padding of item 0:", float(weights[0, :, mask[0].sum():].abs().max()))
