#include "pic/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>

namespace pic {

using nlohmann::ordered_json;

static std::string sampling_label(Sampling s) { return s == Sampling::FPS ? "fps" : "rs"; }

ordered_json RunConfig::to_json() const {
    ordered_json j;
    j["preset"] = preset;
    j["variant"] = variant_name(model.variant);
    j["dim"] = model.dim;
    j["enc_depth"] = model.enc_depth;
    j["dec_depth"] = model.dec_depth;
    j["heads"] = model.heads;
    j["merge_block"] = model.merge_block;
    j["n_patches"] = model.n_patches;
    j["patch_size"] = model.patch_size;
    j["mask_ratio"] = model.mask_ratio;
    j["role_embedding"] = model.role_embedding;
    j["prompt_first"] = model.prompt_first;
    j["sampling"] = sampling_label(train.sampling);
    j["loss"] = loss_name(train.loss);
    j["lr"] = train.lr;
    j["weight_decay"] = train.weight_decay;
    j["warmup_frac"] = train.warmup_frac;
    j["batch_size"] = train.batch_size;
    j["epochs"] = train.epochs;
    j["checkpoint_every"] = train.checkpoint_every;
    j["cat_loss_query_only"] = train.cat_loss_query_only;
    j["n_points"] = dataset.n_points;
    ordered_json tasks = ordered_json::array();
    for (const Task t : dataset.tasks) tasks.push_back(task_name(t));
    j["tasks"] = tasks;
    j["split_train"] = dataset.split_train;
    j["split_val"] = dataset.split_val;
    j["split_test"] = dataset.split_test;
    j["codebook_size"] = dataset.codebook_size;
    j["seg_augment"] = dataset.seg_augment;
    j["seed"] = seed;
    return j;
}

RunConfig parse_config_json(const ordered_json& j) {
    if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
    RunConfig cfg;

    // the preset and variant shape the defaults, so they apply first
    if (j.contains("preset")) {
        const auto p = j.at("preset").get<std::string>();
        if (p != "full" && p != "desk") throw std::invalid_argument("unknown preset: " + p);
        cfg.preset = p;
    }
    if (j.contains("variant")) {
        cfg.model.variant = variant_from_name(j.at("variant").get<std::string>());
    }
    if (cfg.preset == "desk") {
        const Variant v = cfg.model.variant;
        cfg.model = ModelConfig::desk(v);
    } else {
        cfg.model.mask_ratio = cfg.model.variant == Variant::Sep ? 0.7 : 0.6;
    }

    bool mask_ratio_set = false;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "preset" || key == "variant") {
                continue;
            } else if (key == "dim") {
                cfg.model.dim = value.get<int>();
            } else if (key == "enc_depth") {
                cfg.model.enc_depth = value.get<int>();
            } else if (key == "dec_depth") {
                cfg.model.dec_depth = value.get<int>();
            } else if (key == "heads") {
                cfg.model.heads = value.get<int>();
            } else if (key == "merge_block") {
                cfg.model.merge_block = value.get<int>();
            } else if (key == "n_patches") {
                cfg.model.n_patches = value.get<int>();
            } else if (key == "patch_size") {
                cfg.model.patch_size = value.get<int>();
            } else if (key == "mask_ratio") {
                cfg.model.mask_ratio = value.get<double>();
                mask_ratio_set = true;
            } else if (key == "role_embedding") {
                cfg.model.role_embedding = value.get<bool>();
            } else if (key == "prompt_first") {
                cfg.model.prompt_first = value.get<bool>();
            } else if (key == "sampling") {
                const auto s = value.get<std::string>();
                if (s == "fps") {
                    cfg.train.sampling = Sampling::FPS;
                } else if (s == "rs") {
                    cfg.train.sampling = Sampling::RS;
                } else {
                    throw std::invalid_argument("unknown sampling: " + s);
                }
            } else if (key == "loss") {
                cfg.train.loss = loss_from_name(value.get<std::string>());
            } else if (key == "lr") {
                cfg.train.lr = value.get<double>();
            } else if (key == "weight_decay") {
                cfg.train.weight_decay = value.get<double>();
            } else if (key == "warmup_frac") {
                cfg.train.warmup_frac = value.get<double>();
            } else if (key == "batch_size") {
                cfg.train.batch_size = value.get<int>();
            } else if (key == "epochs") {
                cfg.train.epochs = value.get<int>();
            } else if (key == "checkpoint_every") {
                cfg.train.checkpoint_every = value.get<int>();
            } else if (key == "cat_loss_query_only") {
                cfg.train.cat_loss_query_only = value.get<bool>();
            } else if (key == "n_points") {
                cfg.dataset.n_points = value.get<int>();
            } else if (key == "tasks") {
                cfg.dataset.tasks.clear();
                for (const auto& name : value) {
                    cfg.dataset.tasks.push_back(task_from_name(name.get<std::string>()));
                }
                if (cfg.dataset.tasks.empty()) throw std::invalid_argument("tasks list is empty");
            } else if (key == "split_train") {
                cfg.dataset.split_train = value.get<double>();
            } else if (key == "split_val") {
                cfg.dataset.split_val = value.get<double>();
            } else if (key == "split_test") {
                cfg.dataset.split_test = value.get<double>();
            } else if (key == "codebook_size") {
                cfg.dataset.codebook_size = value.get<int>();
            } else if (key == "seg_augment") {
                cfg.dataset.seg_augment = value.get<int>();
            } else if (key == "seed") {
                cfg.seed = value.get<uint64_t>();
                cfg.seed_set = true;
            } else {
                throw std::invalid_argument("unknown key: " + key);
            }
        } catch (const ordered_json::type_error&) {
            throw std::invalid_argument("type mismatch for key: " + key);
        }
    }

    if (!mask_ratio_set) {
        cfg.model.mask_ratio = cfg.model.variant == Variant::Sep ? 0.7 : 0.6;
    }
    cfg.model.validate();
    if (cfg.train.lr <= 0 || cfg.train.batch_size < 1 || cfg.train.epochs < 1) {
        throw std::invalid_argument("training hyperparameters out of range");
    }
    if (cfg.train.warmup_frac < 0 || cfg.train.warmup_frac >= 1) {
        throw std::invalid_argument("warmup_frac out of range");
    }
    const double s =
        cfg.dataset.split_train + cfg.dataset.split_val + cfg.dataset.split_test;
    if (cfg.dataset.split_train < 0 || cfg.dataset.split_val < 0 ||
        cfg.dataset.split_test < 0 || std::abs(s - 1.0) > 1e-9) {
        throw std::invalid_argument("split fractions must be non-negative and sum to 1");
    }
    if (cfg.dataset.n_points < cfg.model.n_patches ||
        cfg.dataset.n_points < cfg.model.patch_size) {
        throw std::invalid_argument("n_points too small for the patch geometry");
    }
    cfg.dataset.config_echo = cfg.to_json();
    return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) {
    if (path.empty()) return parse_config_json(ordered_json::object());
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path.string());
    ordered_json j;
    try {
        in >> j;
    } catch (const ordered_json::parse_error& ex) {
        throw std::runtime_error("malformed config " + path.string() + ": " + ex.what());
    }
    return parse_config_json(j);
}

uint64_t resolve_seed(const RunConfig& cfg, std::optional<uint64_t> cli_seed) {
    if (cli_seed) return *cli_seed;
    if (cfg.seed_set) return cfg.seed;
    if (const char* env = std::getenv("PIC_SEED"); env != nullptr && *env != '\0') {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end == nullptr || *end != '\0') {
            throw std::invalid_argument("PIC_SEED is not an unsigned integer");
        }
        return static_cast<uint64_t>(v);
    }
    return 0;
}

}  // namespace pic
