#pragma once

#include <optional>

#include "pic/eval.hpp"

namespace pic {

// One flat key-value config shared by every subcommand. Defaults mirror the
// full-scale training recipe; preset "desk" swaps in the small architecture.
struct RunConfig {
    ModelConfig model;
    TrainHyper train;
    DatasetConfig dataset;
    uint64_t seed = 0;
    bool seed_set = false;
    std::string preset = "full";

    nlohmann::ordered_json to_json() const;  // resolved echo, flat keys
};

RunConfig parse_config_json(const nlohmann::ordered_json& j);

// empty path → all defaults
RunConfig parse_config(const std::filesystem::path& path);

// precedence: command-line seed, config seed, PIC_SEED, then 0
uint64_t resolve_seed(const RunConfig& cfg, std::optional<uint64_t> cli_seed);

}  // namespace pic
