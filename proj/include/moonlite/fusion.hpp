// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0
//
// Multi-head modality fusion: presence-scored raw modality features are
// projected into the embedding space, gated by consistency with the
// reasoning-derived base representation, weighted per subspace head, and
// combined with a Hadamard interaction term into the final L2-normalized
// product embedding.

#pragma once

#include <optional>
#include <vector>

#include "moonlite/module.hpp"

namespace moonlite {

struct FusionConfig {
    bool enabled = true;
    int heads = 4;
    int dim = 256;  // output embedding size d_r
};

// Pooled decoder states feeding fusion (tape handles).
struct BundleVars {
    Var h_img{};
    Var h_txt{};
    Var h_last{};
    bool has_img = false;
    bool has_txt = false;
};

// Plain-value counterpart, e.g. for inspection and tests.
struct ModalityBundle {
    std::optional<Tensor> h_img;
    std::optional<Tensor> h_txt;
    Tensor h_last;
    bool present_img = false;
    bool present_txt = false;
};

struct FuseDiag {
    double s_i = 0.0, s_t = 0.0, g_i = 0.0, g_t = 0.0;
    std::vector<double> alpha_i, alpha_t, alpha_mm;  // one entry per head
};

class Fusion {
public:
    Fusion(const FusionConfig& cfg, int d_model, ParamStore& store, Rng& rng);

    // Final embedding r, L2-normalized, length cfg.dim. With fusion
    // disabled this reduces to normalize(proj_base(h_last)).
    Var fuse(Binder& b, const BundleVars& bundle, FuseDiag* diag = nullptr) const;

    const FusionConfig& config() const { return cfg_; }

private:
    FusionConfig cfg_;
    int d_model_;
    Param* proj_base_;
    Param *proj_img_ = nullptr, *proj_txt_ = nullptr, *gate_ = nullptr;
};

}  // namespace moonlite
