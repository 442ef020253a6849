#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pic/geometry.hpp"

namespace pic {

// Aligned patch decomposition of an (input, target) cloud pair. One list of
// center indices drives both clouds; grouping runs independently per cloud.
struct PatchBatch {
    std::vector<int> center_indices;                     // N, into both clouds
    std::vector<Points> input_patches;                   // N entries, each M x 3, center-relative
    std::vector<Points> target_patches;                  // N entries, each M x 3, center-relative
    Points input_centers;                                // N x 3
    Points target_centers;                               // N x 3
    std::vector<std::vector<int>> input_neighbor_indices;  // N x M, into the input cloud

    int n_patches() const { return static_cast<int>(center_indices.size()); }
    int patch_size() const {
        return input_patches.empty() ? 0 : static_cast<int>(input_patches.front().rows());
    }
};

PatchBatch joint_sample(const Points& input, const Points& target, int n_patches, int patch_size,
                        Sampling strategy, uint64_t seed);

enum class Variant { Sep, Cat };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

// Token ordering for one prompt/query pair. Sep counts the two parallel
// streams as one 2N-position sequence (positions refer to the target stream;
// the input stream is never maskable). Cat is the single 4N sequence.
struct SequenceLayout {
    Variant variant = Variant::Sep;
    int n_patches = 64;
    bool prompt_first = true;

    int total_tokens() const { return n_patches * (variant == Variant::Sep ? 2 : 4); }

    // [begin, end) within the sequence
    std::pair<int, int> prompt_input_block() const;   // cat only
    std::pair<int, int> prompt_target_block() const;
    std::pair<int, int> query_input_block() const;    // cat only
    std::pair<int, int> query_target_block() const;
};

enum class MaskMode { Train, Infer };

struct MaskPlan {
    std::vector<uint8_t> masked;  // one flag per sequence position
    MaskMode mode = MaskMode::Train;

    int count() const;
    std::vector<int> positions() const;  // ascending masked positions
};

// Train: floor(ratio * total) positions drawn uniformly without replacement
// over the whole maskable sequence. Infer: exactly the query-target block.
MaskPlan make_mask(const SequenceLayout& layout, double ratio, MaskMode mode, uint64_t seed);

}  // namespace pic
