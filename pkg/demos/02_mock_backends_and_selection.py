"""
Mock backends and cosine caption selection
==========================================

The deterministic mock backends caption and embed from seeded hashes, so a
whole run is reproducible without any model. Selection then keeps, per
view, the candidate whose text embedding best matches the image embedding.
"""

from capforge import CandidateCaption, mock_backend_set
from capforge.pipeline import cosine_similarity, select_caption

backends = mock_backend_set(seed=42, dim=32)

image_ref = "demo-asset/0.png"
candidates = backends.captioner.caption(image_ref, n=5, nucleus_p=0.9)
print("candidates:")
for i, text in enumerate(candidates):
    print(f"  [{i}] {text}")

image_emb = backends.embedder.embed_image(image_ref)
text_embs = [backends.embedder.embed_text(t) for t in candidates]
print("\ncosines vs the view image:")
for text, emb in zip(candidates, text_embs):
    print(f"  {cosine_similarity(image_emb, emb):+.4f}  {text}")

result = select_caption(
    [CandidateCaption(text=t, view_index=0, sample_index=i) for i, t in enumerate(candidates)],
    image_emb,
    text_embs,
)
print(f"\nselected: {result.chosen.text!r} (score {result.chosen.cosine_score:.4f})")
print(f"rejected: {len(result.rejected)} candidates")

# Same inputs, same outputs: the mocks are pure functions of (input, seed).
again = backends.captioner.caption(image_ref, n=5, nucleus_p=0.9)
print("\ndeterministic rerun matches:", again == candidates)
