// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0

#include "moonlite/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "moonlite/checkpoint.hpp"

namespace moonlite {

const char* modality_name(Modality m) {
    switch (m) {
        case Modality::kImage: return "i";
        case Modality::kText: return "t";
        case Modality::kMultimodal: return "mm";
    }
    return "?";
}

Modality modality_from_name(const std::string& s) {
    if (s == "i" || s == "image") return Modality::kImage;
    if (s == "t" || s == "text") return Modality::kText;
    if (s == "mm" || s == "multimodal") return Modality::kMultimodal;
    throw std::invalid_argument("unknown modality '" + s + "' (want image|text|mm)");
}

PatchProjector PatchProjector::make(const Schema& schema, const GenParams& p, Rng& rng) {
    PatchProjector proj;
    proj.patch_count = p.patch_count;
    proj.patch_dim = p.patch_dim;
    int rows = schema.total_values();
    int cols = p.patch_count * p.patch_dim;
    proj.weights = Tensor::zeros({rows, cols});
    for (auto& w : proj.weights.data) w = rng.normal();
    return proj;
}

Tensor PatchProjector::render(const Schema& schema, const AttributeMap& attrs_img, double sigma,
                              Rng& noise_rng) const {
    Tensor out = Tensor::zeros({patch_count, patch_dim});
    for (const auto& [key, values] : attrs_img.items) {
        int k = schema.key_index(key);
        if (k < 0) throw std::invalid_argument("render: key '" + key + "' not in schema");
        for (const auto& v : values) {
            int vi = schema.value_index(k, v);
            if (vi < 0) throw std::invalid_argument("render: value '" + v + "' not in schema");
            int row = schema.flat_value_index(k, vi);
            for (std::int64_t c = 0; c < out.numel(); ++c)
                out.data[c] += weights.at(row, static_cast<int>(c));
        }
    }
    // Noise drawn unconditionally so the stream advances identically for
    // any sigma.
    for (auto& x : out.data) x += sigma * noise_rng.normal();
    return out;
}

std::vector<int> render_title(const AttributeMap& attrs_txt, const Schema& schema,
                              const Vocab& vocab) {
    std::vector<int> title;
    for (const auto& key : schema.keys) {
        const auto* vs = attrs_txt.find(key.name);
        if (!vs) continue;
        for (const auto& v : *vs) title.push_back(vocab.id(v));
    }
    return title;
}

std::vector<ProductRecord> gen_universe(const Schema& schema, int n_products,
                                        const PatchProjector& proj, const GenParams& p, Rng& rng,
                                        const Vocab& vocab) {
    if (n_products <= 0) throw std::invalid_argument("gen_universe: n_products must be positive");
    if (schema.keys.empty()) throw std::invalid_argument("gen_universe: empty schema");
    std::vector<ProductRecord> records;
    records.reserve(n_products);
    int nk = static_cast<int>(schema.keys.size());
    for (int i = 0; i < n_products; ++i) {
        ProductRecord r;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "p%06d", i);
        r.id = buf;
        // One value per key, then a per-product view split:
        // 0 = image-only, 1 = text-only, 2 = shared.
        std::vector<int> value_idx(nk), view(nk);
        for (int k = 0; k < nk; ++k) {
            value_idx[k] = static_cast<int>(rng.below(schema.keys[k].values.size()));
            view[k] = static_cast<int>(rng.below(3));
        }
        bool any_img = false, any_txt = false;
        for (int k = 0; k < nk; ++k) {
            if (view[k] != 1) any_img = true;
            if (view[k] != 0) any_txt = true;
        }
        // Every record keeps both views non-empty so every modality has
        // signal to learn from.
        if (!any_img) view[static_cast<int>(rng.below(nk))] = 2;
        if (!any_txt) view[static_cast<int>(rng.below(nk))] = 2;
        for (int k = 0; k < nk; ++k) {
            const std::string& key = schema.keys[k].name;
            const std::string& val = schema.keys[k].values[value_idx[k]];
            if (view[k] != 1) r.attrs_img.put(key, val);
            if (view[k] != 0) r.attrs_txt.put(key, val);
        }
        r.attrs_mm = union_maps(r.attrs_img, r.attrs_txt);
        r.category = value_idx[0];
        r.patches = proj.render(schema, r.attrs_img, p.noise_sigma, rng);
        r.title_tokens = render_title(r.attrs_txt, schema, vocab);
        records.push_back(std::move(r));
    }
    return records;
}

namespace {

bool mm_attrs_differ(const ProductRecord& a, const ProductRecord& b) {
    return !(a.attrs_mm == b.attrs_mm);
}

Modality draw_modality(const GenParams& p, Rng& rng) {
    double total = p.ratio_image + p.ratio_text + p.ratio_mm;
    if (total <= 0.0) throw std::invalid_argument("gen_triplets: modality ratios sum to zero");
    double u = rng.uniform() * total;
    if (u < p.ratio_image) return Modality::kImage;
    if (u < p.ratio_image + p.ratio_text) return Modality::kText;
    return Modality::kMultimodal;
}

}  // namespace

std::vector<Triplet> gen_triplets(const std::vector<ProductRecord>& universe, int n,
                                  const Schema& schema, const PatchProjector& proj,
                                  const GenParams& p, Rng& rng) {
    if (universe.empty()) throw std::invalid_argument("gen_triplets: empty universe");
    // Same-category index for hard-negative sampling.
    int n_cat = static_cast<int>(schema.keys[0].values.size());
    std::vector<std::vector<int>> by_category(n_cat);
    for (std::size_t i = 0; i < universe.size(); ++i)
        by_category[universe[i].category].push_back(static_cast<int>(i));

    std::vector<Triplet> out;
    out.reserve(n);
    for (int t = 0; t < n; ++t) {
        int pos = static_cast<int>(rng.below(universe.size()));
        const ProductRecord& pr = universe[pos];
        const auto& peers = by_category[pr.category];
        std::vector<int> candidates;
        for (int j : peers)
            if (j != pos && mm_attrs_differ(universe[j], pr)) candidates.push_back(j);
        if (candidates.empty())
            throw std::runtime_error(
                "gen_triplets: no hard negative available in category '" +
                schema.keys[0].values[pr.category] + "'; enlarge the universe");
        int neg = candidates[rng.below(candidates.size())];

        Triplet trip;
        trip.positive = pos;
        trip.negative = neg;
        trip.query_modality = draw_modality(p, rng);
        trip.query = pr;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "q%06d", t);
        trip.query.id = buf;
        trip.query.patches = proj.render(schema, pr.attrs_img, p.noise_sigma, rng);
        out.push_back(std::move(trip));
    }
    return out;
}

// --------------------------------------------------------------------------
// Directory round-trip
// --------------------------------------------------------------------------

namespace {

std::string record_line(const ProductRecord& r, const Schema& schema, const Vocab& vocab) {
    std::ostringstream os;
    os << r.id << "\t" << schema.keys[0].values[r.category] << "\t" << r.attrs_img.to_text() << "\t"
       << r.attrs_txt.to_text() << "\t" << r.attrs_mm.to_text() << "\t";
    for (std::size_t i = 0; i < r.title_tokens.size(); ++i) {
        if (i) os << " ";
        os << vocab.token(r.title_tokens[i]);
    }
    return os.str();
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, '\t')) out.push_back(cur);
    return out;
}

}  // namespace

void save_dataset(const std::string& dir, const Dataset& ds) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    ds.vocab.save(dir + "/vocab.txt");

    std::ofstream uni(dir + "/universe.txt", std::ios::binary);
    if (!uni) throw std::runtime_error("save_dataset: cannot write universe.txt");
    uni << "# moonlite dataset v1\n";
    uni << "# patches " << ds.params.patch_count << " " << ds.params.patch_dim << "\n";
    uni << "# noise " << ds.params.noise_sigma << "\n";
    for (const auto& l : ds.schema.to_lines()) uni << "# key " << l << "\n";
    for (const auto& r : ds.universe) uni << record_line(r, ds.schema, ds.vocab) << "\n";

    std::ofstream tri(dir + "/triplets.txt", std::ios::binary);
    if (!tri) throw std::runtime_error("save_dataset: cannot write triplets.txt");
    for (std::size_t i = 0; i < ds.triplets.size(); ++i) {
        const Triplet& t = ds.triplets[i];
        tri << i << "\t" << modality_name(t.query_modality) << "\t" << ds.universe[t.positive].id
            << "\t" << ds.universe[t.negative].id << "\n";
    }

    std::vector<NamedTensor> patches;
    patches.reserve(ds.universe.size() + ds.triplets.size());
    for (const auto& r : ds.universe) patches.push_back({"u/" + r.id, r.patches});
    for (std::size_t i = 0; i < ds.triplets.size(); ++i)
        patches.push_back({"q/" + std::to_string(i), ds.triplets[i].query.patches});
    write_checkpoint(dir + "/patches.bin", patches);
}

Dataset load_dataset(const std::string& dir) {
    std::ifstream uni(dir + "/universe.txt", std::ios::binary);
    if (!uni) throw std::runtime_error("load_dataset: cannot open " + dir + "/universe.txt");

    std::vector<std::string> schema_lines;
    std::vector<std::string> record_lines;
    GenParams params;
    std::string line;
    int lineno = 0;
    while (std::getline(uni, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream is(line);
            std::string hash, tag;
            is >> hash >> tag;
            if (tag == "patches") {
                is >> params.patch_count >> params.patch_dim;
            } else if (tag == "noise") {
                is >> params.noise_sigma;
            } else if (tag == "key") {
                schema_lines.push_back(line.substr(line.find("key") + 4));
            }
            continue;
        }
        record_lines.push_back(line);
    }

    Dataset ds{Schema::parse_lines(schema_lines), Vocab::load(dir + "/vocab.txt"), params, {}, {}};

    auto patch_entries = read_checkpoint(dir + "/patches.bin");
    std::unordered_map<std::string, const Tensor*> patch_by_name;
    for (const auto& e : patch_entries) patch_by_name[e.name] = &e.tensor;
    auto patches_of = [&patch_by_name, &dir](const std::string& key) -> const Tensor& {
        auto it = patch_by_name.find(key);
        if (it == patch_by_name.end())
            throw std::runtime_error("load_dataset: missing patch entry '" + key + "' in " + dir);
        return *it->second;
    };

    std::unordered_map<std::string, int> index_by_id;
    for (const auto& rl : record_lines) {
        auto f = split_tabs(rl);
        if (f.size() != 6)
            throw std::runtime_error("load_dataset: bad universe record (want 6 fields): " + rl);
        ProductRecord r;
        r.id = f[0];
        int cat = ds.schema.value_index(0, f[1]);
        if (cat < 0) throw std::runtime_error("load_dataset: unknown category '" + f[1] + "'");
        r.category = cat;
        r.attrs_img = AttributeMap::from_text(f[2]);
        r.attrs_txt = AttributeMap::from_text(f[3]);
        r.attrs_mm = AttributeMap::from_text(f[4]);
        r.patches = patches_of("u/" + r.id);
        std::istringstream ts(f[5]);
        std::string tok;
        while (ts >> tok) r.title_tokens.push_back(ds.vocab.id(tok));
        index_by_id[r.id] = static_cast<int>(ds.universe.size());
        ds.universe.push_back(std::move(r));
    }

    std::ifstream tri(dir + "/triplets.txt", std::ios::binary);
    if (!tri) throw std::runtime_error("load_dataset: cannot open " + dir + "/triplets.txt");
    lineno = 0;
    while (std::getline(tri, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto f = split_tabs(line);
        if (f.size() != 4)
            throw std::runtime_error("load_dataset: bad triplet at triplets.txt:" +
                                     std::to_string(lineno));
        Triplet t;
        t.query_modality = modality_from_name(f[1]);
        auto pi = index_by_id.find(f[2]);
        auto ni = index_by_id.find(f[3]);
        if (pi == index_by_id.end() || ni == index_by_id.end())
            throw std::runtime_error("load_dataset: unknown record id at triplets.txt:" +
                                     std::to_string(lineno));
        t.positive = pi->second;
        t.negative = ni->second;
        t.query = ds.universe[t.positive];
        t.query.id = "q" + f[0];
        t.query.patches = patches_of("q/" + f[0]);
        ds.triplets.push_back(std::move(t));
    }
    return ds;
}

}  // namespace moonlite
