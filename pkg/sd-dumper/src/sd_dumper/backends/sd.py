"""Stable Diffusion backend: real UNet, cross-attention capture hooks.

Requires the optional [sd] extra (torch, diffusers, transformers) plus
downloaded model weights; constructing the backend without them raises
BackendUnavailableError. The capture path averages attention heads per
layer at hook time; layer maps are merged by the shared capture buffer.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import BackendUnavailableError

DEFAULT_MODEL = "runwayml/stable-diffusion-v1-5"


def _require_sd():
    try:
        import torch  # noqa: F401
        from diffusers import AutoencoderKL, UNet2DConditionModel  # noqa: F401
        from transformers import CLIPTextModel, CLIPTokenizer  # noqa: F401
    except ImportError as e:
        raise BackendUnavailableError(
            "the 'sd' backend needs the [sd] extra (torch, diffusers, "
            f"transformers) and model weights: {e}"
        )


class _AttnRecorder:
    """Replacement attention processor that records cross-attention
    probabilities, averaged over heads, for the conditional branch."""

    def __init__(self, store: list, n_text_tokens: int):
        self.store = store
        self.n_text_tokens = n_text_tokens

    def __call__(self, attn, hidden_states, encoder_hidden_states=None,
                 attention_mask=None, **kwargs):
        import torch

        residual = hidden_states
        is_cross = encoder_hidden_states is not None
        context = encoder_hidden_states if is_cross else hidden_states
        query = attn.to_q(hidden_states)
        key = attn.to_k(context)
        value = attn.to_v(context)
        query = attn.head_to_batch_dim(query)
        key = attn.head_to_batch_dim(key)
        value = attn.head_to_batch_dim(value)
        probs = attn.get_attention_scores(query, key, attention_mask)
        if is_cross:
            heads = attn.heads
            batch = probs.shape[0] // heads
            per_head = probs.reshape(batch, heads, probs.shape[1], probs.shape[2])
            mean_heads = per_head.mean(dim=1)  # head average at capture time
            # conditional branch is the last batch entry under CFG
            m = mean_heads[-1, :, 1 : 1 + self.n_text_tokens]
            side = int(math.isqrt(m.shape[0]))
            self.store.append(
                m.permute(1, 0).reshape(-1, side, side).float().cpu().numpy()
            )
        hidden = torch.bmm(probs, value)
        hidden = attn.batch_to_head_dim(hidden)
        hidden = attn.to_out[0](hidden)
        hidden = attn.to_out[1](hidden)
        if attn.residual_connection:
            hidden = hidden + residual
        return hidden / attn.rescale_output_factor


class SdSession:
    def __init__(self, backend, tokens, word_indices, seed, mode, bars, cfg_scale,
                 control=None):
        self.backend = backend
        self.tokens = tokens
        self.word_indices = word_indices
        self.mode = mode
        self.bars = bars
        self.cfg_scale = float(cfg_scale)
        self.control = control
        self._rng = np.random.default_rng(seed)
        self._captured: list[np.ndarray] = []
        backend._install_recorders(self._captured, len(tokens))
        self._cond, self._uncond = backend._encode_prompt(tokens)

    def init_latent(self) -> np.ndarray:
        return self._rng.normal(size=self.backend.latent_shape).astype(np.float64)

    def predict(self, z: np.ndarray, t: int) -> np.ndarray:
        import torch

        backend = self.backend
        self._captured.clear()
        zt = torch.as_tensor(z[None].astype(np.float32), device=backend.device)
        train_t = backend.train_timestep(t, len(self.bars))
        with torch.no_grad():
            if self.cfg_scale > 0:
                eps_c = backend._unet_eps(zt, train_t, self._cond, self.control)
                eps_u = backend._unet_eps(zt, train_t, self._uncond, None)
                eps = eps_u + self.cfg_scale * (eps_c - eps_u)
            else:
                eps = backend._unet_eps(zt, train_t, self._cond, self.control)
        return eps[0].cpu().numpy().astype(np.float64)

    def attention_layers(self, z, eps, t) -> list[np.ndarray]:
        layers = list(self._captured)
        self._captured.clear()
        return layers

    def render(self) -> np.ndarray:
        raise NotImplementedError("goal image is decoded from the final latent")


class StableDiffusionBackend:
    """Wraps a pretrained pipeline; heavy pieces load lazily."""

    model_id = DEFAULT_MODEL

    def __init__(self, model_id: str = DEFAULT_MODEL, device: str | None = None,
                 layer_selection: str = "all"):
        _require_sd()
        import torch
        from diffusers import AutoencoderKL, UNet2DConditionModel
        from transformers import CLIPTextModel, CLIPTokenizer

        self.model_id = model_id
        self.device = device or ("cuda" if torch.cuda.is_available() else "cpu")
        self.layer_selection = layer_selection
        self.tokenizer = CLIPTokenizer.from_pretrained(model_id, subfolder="tokenizer")
        self.text_encoder = CLIPTextModel.from_pretrained(
            model_id, subfolder="text_encoder"
        ).to(self.device)
        self.unet = UNet2DConditionModel.from_pretrained(
            model_id, subfolder="unet"
        ).to(self.device)
        self.vae = AutoencoderKL.from_pretrained(model_id, subfolder="vae").to(self.device)
        self.latent_shape = (4, 64, 64)
        self.latent_size = 64

    def tokenize(self, prompt: str):
        ids = self.tokenizer(prompt, truncation=True).input_ids[1:-1]
        tokens = [self.tokenizer.decode([i]).strip() for i in ids]
        indices: dict[str, tuple[int, ...]] = {}
        for word in {w.strip().lower() for w in prompt.split(",")}:
            if not word:
                continue
            sub = self.tokenizer(word, truncation=True).input_ids[1:-1]
            span = _find_span(ids, sub)
            if span is not None:
                indices[word] = tuple(range(span, span + len(sub)))
        return tokens, indices

    def session(self, tokens, word_indices, seed, mode, bars, cfg_scale, control=None):
        return SdSession(self, tokens, word_indices, seed, mode, bars, cfg_scale, control)

    def train_timestep(self, t: int, steps: int) -> int:
        return max(0, min(999, round(t * 1000 / steps) - 1))

    def _encode_prompt(self, tokens):
        import torch

        text = " ".join(tokens)
        with torch.no_grad():
            cond = self.text_encoder(
                self.tokenizer(
                    text, padding="max_length",
                    max_length=self.tokenizer.model_max_length,
                    truncation=True, return_tensors="pt",
                ).input_ids.to(self.device)
            )[0]
            uncond = self.text_encoder(
                self.tokenizer(
                    "", padding="max_length",
                    max_length=self.tokenizer.model_max_length,
                    return_tensors="pt",
                ).input_ids.to(self.device)
            )[0]
        return cond, uncond

    def _unet_eps(self, zt, train_t, embedding, control):
        return self.unet(zt, train_t, encoder_hidden_states=embedding).sample

    def _install_recorders(self, store, n_tokens):
        from diffusers.models.attention_processor import Attention

        for name, module in self.unet.named_modules():
            if not (isinstance(module, Attention) and "attn2" in name):
                continue
            if self.layer_selection != "all" and self.layer_selection not in name:
                continue
            module.set_processor(_AttnRecorder(store, n_tokens))

    def encode(self, image: np.ndarray) -> np.ndarray:
        import torch

        x = torch.as_tensor(image.astype(np.float32) / 127.5 - 1.0)
        x = x.permute(2, 0, 1)[None].to(self.device)
        with torch.no_grad():
            z = self.vae.encode(x).latent_dist.mode() * self.vae.config.scaling_factor
        return z[0].cpu().numpy().astype(np.float64)

    def decode(self, z: np.ndarray) -> np.ndarray:
        import torch

        zt = torch.as_tensor(z[None].astype(np.float32), device=self.device)
        with torch.no_grad():
            x = self.vae.decode(zt / self.vae.config.scaling_factor).sample
        img = ((x[0].permute(1, 2, 0).cpu().numpy() + 1.0) * 127.5).clip(0, 255)
        return img.astype(np.uint8)


def _find_span(haystack: list[int], needle: list[int]):
    for i in range(len(haystack) - len(needle) + 1):
        if haystack[i : i + len(needle)] == needle:
            return i
    return None
