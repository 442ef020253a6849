#pragma once

#include <functional>
#include <iosfwd>

#include "pic/train.hpp"

namespace pic {

// In-context inference: both pairs are patched jointly, the query-target
// block is fully masked, and all of its decoded patches are concatenated.
// The output is the raw n_patches * patch_size point union (overlaps kept).
// query_neighbors, when requested, receives the query input's per-patch KNN
// index lists, which define the slot correspondence for segmentation.
Points infer(const ModelParams<float>& params, const ModelConfig& cfg, const TaskSample& prompt,
             const Points& query_input, uint64_t seed, Sampling sampling = Sampling::FPS,
             std::vector<std::vector<int>>* query_neighbors = nullptr);

// the prompt's target, unchanged
Points copy_baseline(const TaskSample& prompt);

// l2 chamfer scaled by 1000
double metric_cd(const Points& pred, const Points& gt);

// per-point labels spread onto prediction slots via the patch KNN lists
std::vector<int> expand_labels(const std::vector<int>& point_labels,
                               const std::vector<std::vector<int>>& neighbors);

// Decode each predicted point to its nearest codebook entry, then IoU per
// part present in the ground truth, averaged over those parts, x100.
// pred row i corresponds to slot_labels[i].
double metric_miou(const Points& pred, const std::vector<int>& slot_labels,
                   const LabelCodebook& codebook);

struct LevelStat {
    double sum = 0.0;
    int count = 0;

    void add(double v) {
        sum += v;
        ++count;
    }
    double mean() const { return count > 0 ? sum / count : 0.0; }
};

struct EvalReport {
    std::string strategy;
    uint64_t seed = 0;
    std::string config_hash;
    nlohmann::ordered_json config;
    int samples = 0;
    std::map<Task, std::map<int, LevelStat>> cd;  // per task, per level, CD x1000
    LevelStat miou;

    nlohmann::ordered_json to_json() const;
    void write_csv(std::ostream& out) const;
};

struct BenchmarkOptions {
    PromptStrategy strategy = PromptStrategy::Random;
    uint64_t seed = 0;
    bool use_copy_baseline = false;
    Sampling sampling = Sampling::FPS;
    int codebook_size = 50;
    // called once per evaluated sample with the chosen prompt and prediction
    std::function<void(const ManifestEntry&, const TaskSample&, const Points&)> observer;
};

// Queries come from the manifest's test split, prompts from its train split.
// model may be null only with use_copy_baseline set.
EvalReport run_benchmark(const LoadedModel* model, const Manifest& manifest,
                         const std::filesystem::path& data_root, const BenchmarkOptions& opts);

uint64_t fnv1a64(const std::string& data);
std::string hex64(uint64_t value);

}  // namespace pic
