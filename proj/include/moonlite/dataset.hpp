// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic product corpus: records carry an attribute assignment split
// into image/text/shared views, patch features rendered from a fixed
// random projection of the image-view one-hot coding, and a title that
// renders the text view. Triplets pair a re-noised query with its source
// record (positive) and a same-category hard negative.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "moonlite/attributes.hpp"
#include "moonlite/rng.hpp"
#include "moonlite/tensor.hpp"
#include "moonlite/vocab.hpp"

namespace moonlite {

enum class Modality { kImage, kText, kMultimodal };

const char* modality_name(Modality m);          // "i" | "t" | "mm"
Modality modality_from_name(const std::string&);

struct ProductRecord {
    std::string id;
    AttributeMap attrs_img;   // image-view (image-only + shared keys)
    AttributeMap attrs_txt;   // text-view (text-only + shared keys)
    AttributeMap attrs_mm;    // key-wise union of the two views
    Tensor patches;           // P x D_in
    std::vector<int> title_tokens;
    int category = -1;        // value index of the first schema key
};

struct Triplet {
    ProductRecord query;      // positive's content with fresh patch noise
    Modality query_modality = Modality::kMultimodal;
    int positive = -1;        // index into the universe
    int negative = -1;        // index into the universe
};

struct GenParams {
    int patch_count = 8;
    int patch_dim = 12;
    double noise_sigma = 0.05;
    // Modality selector mix for queries; normalized internally.
    double ratio_image = 1.0, ratio_text = 1.0, ratio_mm = 1.0;
};

// Fixed random projection of an attribute one-hot coding into patch space.
// Shared by universe generation and query re-noising.
struct PatchProjector {
    Tensor weights;  // total_values x (P*D_in)
    int patch_count, patch_dim;

    static PatchProjector make(const Schema& schema, const GenParams& p, Rng& rng);
    Tensor render(const Schema& schema, const AttributeMap& attrs_img, double sigma,
                  Rng& noise_rng) const;
};

std::vector<ProductRecord> gen_universe(const Schema& schema, int n_products,
                                        const PatchProjector& proj, const GenParams& p, Rng& rng,
                                        const Vocab& vocab);

std::vector<Triplet> gen_triplets(const std::vector<ProductRecord>& universe, int n,
                                  const Schema& schema, const PatchProjector& proj,
                                  const GenParams& p, Rng& rng);

struct Dataset {
    Schema schema;
    Vocab vocab;
    GenParams params;
    std::vector<ProductRecord> universe;
    std::vector<Triplet> triplets;

    const ProductRecord& positive_of(const Triplet& t) const { return universe[t.positive]; }
    const ProductRecord& negative_of(const Triplet& t) const { return universe[t.negative]; }
};

// Directory layout: universe.txt, triplets.txt, patches.bin, vocab.txt.
void save_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

// Title = text-view value strings in schema key order.
std::vector<int> render_title(const AttributeMap& attrs_txt, const Schema& schema,
                              const Vocab& vocab);

}  // namespace moonlite
