#include "pic/tokenize.hpp"

#include <algorithm>
#include <stdexcept>

#include "pic/rng.hpp"

namespace pic {

PatchBatch joint_sample(const Points& input, const Points& target, int n_patches, int patch_size,
                        Sampling strategy, uint64_t seed) {
    if (input.rows() != target.rows()) {
        throw std::invalid_argument("joint_sample: input and target sizes differ");
    }
    if (n_patches < 1 || n_patches > input.rows()) {
        throw std::invalid_argument("joint_sample: patch count out of range");
    }
    if (patch_size < 1 || patch_size > input.rows()) {
        throw std::invalid_argument("joint_sample: patch size out of range");
    }

    PatchBatch batch;
    batch.center_indices = sample_centers(input, n_patches, strategy, seed);

    batch.input_centers.resize(n_patches, 3);
    batch.target_centers.resize(n_patches, 3);
    for (int p = 0; p < n_patches; ++p) {
        batch.input_centers.row(p) = input.row(batch.center_indices[p]);
        batch.target_centers.row(p) = target.row(batch.center_indices[p]);
    }

    const auto in_nb = knn_indices(input, batch.center_indices, patch_size);
    const auto tg_nb = knn_indices(target, batch.center_indices, patch_size);
    batch.input_neighbor_indices = in_nb;
    batch.input_patches.resize(n_patches);
    batch.target_patches.resize(n_patches);
    for (int p = 0; p < n_patches; ++p) {
        Points& ip = batch.input_patches[p];
        Points& tp = batch.target_patches[p];
        ip.resize(patch_size, 3);
        tp.resize(patch_size, 3);
        for (int j = 0; j < patch_size; ++j) {
            ip.row(j) = input.row(in_nb[p][j]) - batch.input_centers.row(p);
            tp.row(j) = target.row(tg_nb[p][j]) - batch.target_centers.row(p);
        }
    }
    return batch;
}

std::string variant_name(Variant v) { return v == Variant::Sep ? "sep" : "cat"; }

Variant variant_from_name(const std::string& name) {
    if (name == "sep") return Variant::Sep;
    if (name == "cat") return Variant::Cat;
    throw std::invalid_argument("unknown variant: " + name);
}

std::pair<int, int> SequenceLayout::prompt_input_block() const {
    if (variant != Variant::Cat) throw std::logic_error("prompt_input_block: cat only");
    const int n = n_patches;
    return prompt_first ? std::pair{0, n} : std::pair{2 * n, 3 * n};
}

std::pair<int, int> SequenceLayout::prompt_target_block() const {
    const int n = n_patches;
    if (variant == Variant::Sep) return prompt_first ? std::pair{0, n} : std::pair{n, 2 * n};
    return prompt_first ? std::pair{n, 2 * n} : std::pair{3 * n, 4 * n};
}

std::pair<int, int> SequenceLayout::query_input_block() const {
    if (variant != Variant::Cat) throw std::logic_error("query_input_block: cat only");
    const int n = n_patches;
    return prompt_first ? std::pair{2 * n, 3 * n} : std::pair{0, n};
}

std::pair<int, int> SequenceLayout::query_target_block() const {
    const int n = n_patches;
    if (variant == Variant::Sep) return prompt_first ? std::pair{n, 2 * n} : std::pair{0, n};
    return prompt_first ? std::pair{3 * n, 4 * n} : std::pair{n, 2 * n};
}

int MaskPlan::count() const {
    return static_cast<int>(std::count(masked.begin(), masked.end(), uint8_t{1}));
}

std::vector<int> MaskPlan::positions() const {
    std::vector<int> out;
    for (size_t i = 0; i < masked.size(); ++i) {
        if (masked[i]) out.push_back(static_cast<int>(i));
    }
    return out;
}

MaskPlan make_mask(const SequenceLayout& layout, double ratio, MaskMode mode, uint64_t seed) {
    if (ratio < 0.0 || ratio >= 1.0) throw std::invalid_argument("mask ratio must be in [0, 1)");
    const int total = layout.total_tokens();
    MaskPlan plan;
    plan.mode = mode;
    plan.masked.assign(total, 0);
    if (mode == MaskMode::Infer) {
        const auto [b, e] = layout.query_target_block();
        for (int i = b; i < e; ++i) plan.masked[i] = 1;
        return plan;
    }
    const int k = static_cast<int>(ratio * total);
    if (k == 0) return plan;
    for (const int i : Rng(seed).sample_without_replacement(total, k)) plan.masked[i] = 1;
    return plan;
}

}  // namespace pic
