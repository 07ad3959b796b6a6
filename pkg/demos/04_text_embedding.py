"""A toy retrieval pipeline on top of the sequence stack.

Text is whitespace-tokenized through a stable hash, a reserved terminal id is
appended, and the final layer's hidden state at the terminal position becomes
the embedding, so the vector has seen every token under the causal kernel.
Instruction-style queries go through a fixed template first.  Similarity is
cosine; the contrastive loss scores a query against one positive and a set of
negatives.

Nothing here is trained (parameters are seeded noise), so the point is the
plumbing: determinism, schedule independence, and a loss that behaves.
"""

import numpy as np

from ssdkit import (
    ModelSpec,
    cosine_similarity,
    embed_sequence,
    format_query,
    generate_model,
    info_nce_loss,
    tokenize_words,
)


def main():
    spec = ModelSpec(seed=42, L=4, d=16, H=2, N=4, vocab_size=256, Q=16, V=32)
    model = generate_model(spec)

    def embed(text, strategy="horizontal"):
        ids = tokenize_words(text, spec.vocab_size)
        return embed_sequence(model, np.array(ids), strategy=strategy).vector

    query_text = format_query("Retrieve passages about sequence models",
                              "how do chunked kernels stay exact")
    print("Rendered query:")
    print(f"  {query_text!r}\n")

    docs = {
        "duality": "chunked evaluation of a gated recurrence stays exact for any block size",
        "cooking": "simmer the onions until translucent then add the crushed tomatoes",
        "matrix": "a lower triangular kernel of decay products links every pair of positions",
    }
    q = embed(query_text)
    print("Cosine similarity of the query against three passages:")
    sims = {}
    for name, text in docs.items():
        sims[name] = cosine_similarity(q, embed(text))
        print(f"  {name:>8}: {sims[name]:+.4f}")

    print("\nSchedule independence: horizontal and vertical embeddings agree:",
          np.array_equal(embed(query_text), embed(query_text, strategy='vertical')))

    positive = embed(docs["duality"])
    negatives = [embed(docs["cooking"]), embed(docs["matrix"])]
    print("\nContrastive loss (lower is better for the positive pair):")
    for tau in (1.0, 0.1, 0.02):
        print(f"  temperature {tau:>5}: {info_nce_loss(q, positive, negatives, temperature=tau):.6f}")
    print(f"  no negatives is exactly zero: {info_nce_loss(q, positive) == 0.0}")


if __name__ == "__main__":
    main()
