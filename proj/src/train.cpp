#include "pic/train.hpp"

#include <cinttypes>
#include <cstdio>
#include <map>
#include <ostream>

namespace pic {

using nlohmann::ordered_json;

std::string loss_name(LossNorm n) {
    switch (n) {
        case LossNorm::L1: return "l1";
        case LossNorm::L2: return "l2";
        case LossNorm::L1L2: return "l1l2";
    }
    throw std::logic_error("loss_name: bad norm");
}

LossNorm loss_from_name(const std::string& name) {
    if (name == "l1") return LossNorm::L1;
    if (name == "l2") return LossNorm::L2;
    if (name == "l1l2" || name == "l1+l2") return LossNorm::L1L2;
    throw std::invalid_argument("unknown loss: " + name);
}

static std::string sampling_name(Sampling s) { return s == Sampling::FPS ? "fps" : "rs"; }

static Sampling sampling_from_name(const std::string& name) {
    if (name == "fps") return Sampling::FPS;
    if (name == "rs") return Sampling::RS;
    throw std::invalid_argument("unknown sampling: " + name);
}

static ordered_json hyper_to_json(const TrainHyper& h) {
    ordered_json j;
    j["lr"] = h.lr;
    j["weight_decay"] = h.weight_decay;
    j["warmup_frac"] = h.warmup_frac;
    j["loss"] = loss_name(h.loss);
    j["sampling"] = sampling_name(h.sampling);
    j["batch_size"] = h.batch_size;
    j["epochs"] = h.epochs;
    j["checkpoint_every"] = h.checkpoint_every;
    j["cat_loss_query_only"] = h.cat_loss_query_only;
    return j;
}

static TrainHyper hyper_from_json(const ordered_json& j) {
    TrainHyper h;
    h.lr = j.at("lr").get<double>();
    h.weight_decay = j.at("weight_decay").get<double>();
    h.warmup_frac = j.at("warmup_frac").get<double>();
    h.loss = loss_from_name(j.at("loss").get<std::string>());
    h.sampling = sampling_from_name(j.at("sampling").get<std::string>());
    h.batch_size = j.at("batch_size").get<int>();
    h.epochs = j.at("epochs").get<int>();
    h.checkpoint_every = j.at("checkpoint_every").get<int>();
    h.cat_loss_query_only = j.at("cat_loss_query_only").get<bool>();
    return h;
}

void save_train_state(const std::filesystem::path& path, TrainState<float>& state) {
    Checkpoint ckpt;
    ordered_json h;
    h["format"] = "pic-checkpoint-1";
    h["model"] = config_to_json(state.model_cfg);
    h["hyper"] = hyper_to_json(state.hyper);
    h["seed"] = state.seed;
    h["step"] = state.step;
    h["epoch"] = state.epoch;
    h["total_steps"] = state.total_steps;
    const auto rs = state.rng.state();
    h["rng_state"] = {rs[0], rs[1], rs[2], rs[3]};
    h["adam_t"] = state.opt.t;
    ckpt.header = h;
    params_to_checkpoint(state.params, ckpt);
    for (const auto& [name, m] : state.opt.m) ckpt.arrays.emplace_back("adam.m." + name, m);
    for (const auto& [name, m] : state.opt.v) ckpt.arrays.emplace_back("adam.v." + name, m);
    save_checkpoint(path, ckpt);
}

TrainState<float> load_train_state(const std::filesystem::path& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    const ordered_json& h = ckpt.header;
    const ModelConfig cfg = config_from_json(h.at("model"));
    const TrainHyper hyper = hyper_from_json(h.at("hyper"));
    TrainState<float> state = make_train_state<float>(cfg, hyper, h.at("seed").get<uint64_t>());
    params_from_checkpoint(ckpt, cfg, state.params);
    state.step = h.at("step").get<int64_t>();
    state.epoch = h.at("epoch").get<int>();
    state.total_steps = h.at("total_steps").get<int64_t>();
    const auto& rs = h.at("rng_state");
    state.rng.set_state({rs.at(0).get<uint64_t>(), rs.at(1).get<uint64_t>(),
                         rs.at(2).get<uint64_t>(), rs.at(3).get<uint64_t>()});
    state.opt.t = h.at("adam_t").get<int64_t>();
    state.opt.weight_decay = hyper.weight_decay;
    state.opt.m.clear();
    state.opt.v.clear();
    state.params.visit([&](const std::string& name, MatX<float>& val, MatX<float>&, bool) {
        const MatX<float>* m = ckpt.find("adam.m." + name);
        const MatX<float>* v = ckpt.find("adam.v." + name);
        state.opt.m.emplace_back(name, m != nullptr
                                           ? *m
                                           : MatX<float>::Zero(val.rows(), val.cols()).eval());
        state.opt.v.emplace_back(name, v != nullptr
                                           ? *v
                                           : MatX<float>::Zero(val.rows(), val.cols()).eval());
    });
    return state;
}

LoadedModel load_model(const std::filesystem::path& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    LoadedModel lm;
    lm.header = ckpt.header;
    lm.cfg = config_from_json(ckpt.header.at("model"));
    lm.params = ModelParams<float>::init(lm.cfg, 0);
    params_from_checkpoint(ckpt, lm.cfg, lm.params);
    return lm;
}

static const char* task_code(Task t) {
    switch (t) {
        case Task::Reconstruction: return "rec";
        case Task::Denoising: return "den";
        case Task::Registration: return "reg";
        case Task::Segmentation: return "seg";
    }
    return "?";
}

TrainRunResult train_run(TrainState<float>& state, const Manifest& manifest,
                         const std::filesystem::path& data_root,
                         const std::filesystem::path& ckpt_out, std::ostream* log) {
    const auto entries = manifest.split("train");
    if (entries.empty()) throw std::runtime_error("train split is empty");

    std::map<Task, std::vector<size_t>> by_task;
    for (size_t i = 0; i < entries.size(); ++i) by_task[entries[i].task].push_back(i);
    std::vector<Task> tasks;
    for (const auto& [t, idxs] : by_task) tasks.push_back(t);

    PromptPool pool(entries, data_root);
    const int64_t steps_per_epoch =
        std::max<int64_t>(1, (static_cast<int64_t>(entries.size()) + state.hyper.batch_size - 1) /
                                 state.hyper.batch_size);
    state.total_steps = steps_per_epoch * state.hyper.epochs;

    TrainRunResult res;
    bool record_first = state.step == 0;
    for (; state.epoch < state.hyper.epochs; ++state.epoch) {
        for (int64_t s = 0; s < steps_per_epoch; ++s) {
            std::vector<PromptPair> batch;
            std::map<Task, int> mix;
            for (int b = 0; b < state.hyper.batch_size; ++b) {
                const Task task = tasks[state.rng.uniform_int(tasks.size())];
                const auto& idxs = by_task[task];
                const size_t qi = idxs[state.rng.uniform_int(idxs.size())];
                TaskSample query = pool.sample(qi);
                PromptPair pair;
                for (int attempt = 0;; ++attempt) {
                    pair = select_prompt(query, pool, PromptStrategy::Random,
                                         state.rng.next_u64());
                    if (pair.prompt.sample_id != query.sample_id || idxs.size() == 1 ||
                        attempt >= 7) {
                        break;
                    }
                }
                ++mix[task];
                batch.push_back(std::move(pair));
            }
            const double lr = lr_at(state.step, state.total_steps, state.hyper.lr,
                                    state.hyper.warmup_frac);
            const int64_t step_id = state.step;
            const double loss = train_step(state, batch);
            if (record_first) {
                res.first_loss = loss;
                record_first = false;
            }
            res.last_loss = loss;
            if (log != nullptr) {
                std::string mix_str;
                for (const auto& [t, count] : mix) {
                    if (!mix_str.empty()) mix_str += '|';
                    mix_str += task_code(t);
                    mix_str += ':';
                    mix_str += std::to_string(count);
                }
                char buf[160];
                std::snprintf(buf, sizeof(buf), "%" PRId64 ", %d, %s, %.6e, %.17g\n", step_id,
                              state.epoch, mix_str.c_str(), lr, loss);
                *log << buf;
                log->flush();
            }
        }
        if (state.hyper.checkpoint_every > 0 &&
            (state.epoch + 1) % state.hyper.checkpoint_every == 0) {
            save_train_state(ckpt_out, state);
        }
    }
    save_train_state(ckpt_out, state);
    res.steps = state.step;
    return res;
}

}  // namespace pic
