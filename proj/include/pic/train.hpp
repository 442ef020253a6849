#pragma once

#include <cmath>
#include <iosfwd>
#include <vector>

#include "pic/model.hpp"
#include "pic/taskgen.hpp"

namespace pic {

enum class LossNorm { L1, L2, L1L2 };

std::string loss_name(LossNorm n);
LossNorm loss_from_name(const std::string& name);

// Chamfer between one predicted patch and its ground truth, mean-reduced by
// (|P|+|G|); accumulates d/dpred when dpred is non-null. Nearest neighbours
// tie-break to the lowest index, matching chamfer() in geometry.
template <typename S>
double patch_chamfer(const MatX<S>& pred, const MatX<S>& gt, LossNorm norm, MatX<S>* dpred) {
    const Eigen::Index np = pred.rows();
    const Eigen::Index ng = gt.rows();
    if (np == 0 || ng == 0) throw std::invalid_argument("patch_chamfer: empty patch");
    const double denom = static_cast<double>(np + ng);
    const bool l1 = norm != LossNorm::L2;
    const bool l2 = norm != LossNorm::L1;

    double loss = 0.0;
    const auto accumulate = [&](Eigen::Index pi, Eigen::Index gi, bool grad_on_pred) {
        const Eigen::Matrix<S, 1, 3> diff = pred.row(pi) - gt.row(gi);
        const double d2 = static_cast<double>(diff.squaredNorm());
        if (l2) {
            loss += d2 / denom;
            if (grad_on_pred && dpred != nullptr) {
                dpred->row(pi) += diff * static_cast<S>(2.0 / denom);
            }
        }
        if (l1) {
            const double d = std::sqrt(d2);
            loss += d / denom;
            if (grad_on_pred && dpred != nullptr && d > 0.0) {
                dpred->row(pi) += diff * static_cast<S>(1.0 / (d * denom));
            }
        }
    };

    for (Eigen::Index p = 0; p < np; ++p) {
        Eigen::Index best = 0;
        double best_d2 = static_cast<double>((pred.row(p) - gt.row(0)).squaredNorm());
        for (Eigen::Index g = 1; g < ng; ++g) {
            const double d2 = static_cast<double>((pred.row(p) - gt.row(g)).squaredNorm());
            if (d2 < best_d2) {
                best_d2 = d2;
                best = g;
            }
        }
        accumulate(p, best, true);
    }
    for (Eigen::Index g = 0; g < ng; ++g) {
        Eigen::Index best = 0;
        double best_d2 = static_cast<double>((pred.row(0) - gt.row(g)).squaredNorm());
        for (Eigen::Index p = 1; p < np; ++p) {
            const double d2 = static_cast<double>((pred.row(p) - gt.row(g)).squaredNorm());
            if (d2 < best_d2) {
                best_d2 = d2;
                best = p;
            }
        }
        accumulate(best, g, true);
    }
    return loss;
}

// mean over masked tokens of the per-patch chamfer, absolute coordinates
template <typename S>
double masked_loss(const std::vector<MatX<S>>& preds, const std::vector<MatX<S>>& gts,
                   LossNorm norm, std::vector<MatX<S>>* dpreds = nullptr) {
    if (preds.size() != gts.size()) throw std::invalid_argument("masked_loss: size mismatch");
    if (preds.empty()) throw std::invalid_argument("masked_loss: zero masked tokens");
    const double inv_k = 1.0 / static_cast<double>(preds.size());
    if (dpreds != nullptr) dpreds->assign(preds.size(), MatX<S>());
    double loss = 0.0;
    for (size_t k = 0; k < preds.size(); ++k) {
        MatX<S>* dp = nullptr;
        if (dpreds != nullptr) {
            (*dpreds)[k] = MatX<S>::Zero(preds[k].rows(), 3);
            dp = &(*dpreds)[k];
        }
        loss += patch_chamfer(preds[k], gts[k], norm, dp);
        if (dp != nullptr) *dp *= static_cast<S>(inv_k);
    }
    return loss * inv_k;
}

// linear warmup to base_lr over the first warmup_frac of steps, cosine to 0
inline double lr_at(int64_t step, int64_t total_steps, double base_lr = 1e-3,
                    double warmup_frac = 0.05) {
    if (total_steps <= 0 || step < 0 || step > total_steps) {
        throw std::invalid_argument("lr_at: step out of range");
    }
    const int64_t warm = static_cast<int64_t>(warmup_frac * static_cast<double>(total_steps));
    if (warm > 0 && step < warm) {
        return base_lr * static_cast<double>(step) / static_cast<double>(warm);
    }
    if (total_steps == warm) return 0.0;
    const double t = static_cast<double>(step - warm) / static_cast<double>(total_steps - warm);
    return base_lr * 0.5 * (1.0 + std::cos(M_PI * t));
}

template <typename S>
struct AdamW {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.05;
    int64_t t = 0;
    std::vector<std::pair<std::string, MatX<S>>> m, v;  // parameter visit order

    void step(ModelParams<S>& params, double lr) {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        size_t idx = 0;
        params.visit([&](const std::string& name, MatX<S>& val, MatX<S>& grad, bool decay) {
            if (idx >= m.size()) {
                m.emplace_back(name, MatX<S>::Zero(val.rows(), val.cols()));
                v.emplace_back(name, MatX<S>::Zero(val.rows(), val.cols()));
            }
            auto& mm = m[idx].second;
            auto& vv = v[idx].second;
            if (decay) val *= static_cast<S>(1.0 - lr * weight_decay);
            mm = mm * static_cast<S>(beta1) + grad * static_cast<S>(1.0 - beta1);
            vv = vv * static_cast<S>(beta2) + grad.cwiseProduct(grad) * static_cast<S>(1.0 - beta2);
            val.array() -= static_cast<S>(lr) * (mm.array() / static_cast<S>(bc1)) /
                           ((vv.array() / static_cast<S>(bc2)).sqrt() + static_cast<S>(eps));
            ++idx;
        });
    }
};

struct TrainHyper {
    double lr = 1e-3;
    double weight_decay = 0.05;
    double warmup_frac = 0.05;
    LossNorm loss = LossNorm::L2;
    Sampling sampling = Sampling::FPS;
    int batch_size = 16;
    int epochs = 300;
    int checkpoint_every = 50;          // epochs between periodic saves
    bool cat_loss_query_only = false;   // restrict the cat loss to query-target masks
};

template <typename S>
struct TrainState {
    ModelConfig model_cfg;
    TrainHyper hyper;
    ModelParams<S> params;
    AdamW<S> opt;
    int64_t step = 0;
    int epoch = 0;
    int64_t total_steps = 0;
    uint64_t seed = 0;
    Rng rng{0};
};

template <typename S>
TrainState<S> make_train_state(const ModelConfig& cfg, const TrainHyper& hyper, uint64_t seed) {
    TrainState<S> st;
    st.model_cfg = cfg;
    st.hyper = hyper;
    st.params = ModelParams<S>::init(cfg, derive_seed(seed, "params"));
    st.opt.weight_decay = hyper.weight_decay;
    st.seed = seed;
    st.rng = Rng(derive_seed(seed, "train"));
    return st;
}

// absolute-coordinate ground-truth patch for one sequence position
template <typename S>
MatX<S> gt_patch_at(const SequenceLayout& layout, int position, const PatchBatch& prompt,
                    const PatchBatch& query) {
    const TokenRef ref = token_ref(layout, position);
    const PatchBatch& pb = ref.is_prompt ? prompt : query;
    MatX<S> gt = (ref.is_target ? pb.target_patches[ref.patch] : pb.input_patches[ref.patch])
                     .template cast<S>();
    const Points& centers = ref.is_target ? pb.target_centers : pb.input_centers;
    gt.rowwise() += centers.row(ref.patch).template cast<S>();
    return gt;
}

// one optimizer step over a batch; returns the mean pre-update loss
template <typename S>
double train_step(TrainState<S>& state, const std::vector<PromptPair>& batch) {
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    if (state.total_steps <= 0) throw std::logic_error("train_step: total_steps unset");
    const ModelConfig& cfg = state.model_cfg;
    const SequenceLayout layout = cfg.layout();
    state.params.zero_grad();

    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double loss_sum = 0.0;
    for (const PromptPair& pair : batch) {
        const uint64_t prompt_seed = state.rng.next_u64();
        const uint64_t query_seed = state.rng.next_u64();
        const uint64_t mask_seed = state.rng.next_u64();
        const PatchBatch pb = joint_sample(pair.prompt.input, pair.prompt.target, cfg.n_patches,
                                           cfg.patch_size, state.hyper.sampling, prompt_seed);
        const PatchBatch qb = joint_sample(pair.query.input, pair.query.target, cfg.n_patches,
                                           cfg.patch_size, state.hyper.sampling, query_seed);
        const MaskPlan mask = make_mask(layout, cfg.mask_ratio, MaskMode::Train, mask_seed);

        Tape<S> tape;
        ForwardOut<S> out = model_forward(state.params, cfg, pb, qb, mask, tape);

        std::vector<size_t> in_loss;
        for (size_t k = 0; k < out.masked_positions.size(); ++k) {
            if (state.hyper.cat_loss_query_only && cfg.variant == Variant::Cat) {
                const TokenRef ref = token_ref(layout, out.masked_positions[k]);
                if (ref.is_prompt || !ref.is_target) continue;
            }
            in_loss.push_back(k);
        }
        if (in_loss.empty()) {
            throw std::runtime_error("train_step: mask produced no loss-bearing tokens");
        }
        std::vector<MatX<S>> preds, gts;
        preds.reserve(in_loss.size());
        gts.reserve(in_loss.size());
        for (const size_t k : in_loss) {
            preds.push_back(out.predictions[k]);
            gts.push_back(gt_patch_at<S>(layout, out.masked_positions[k], pb, qb));
        }
        std::vector<MatX<S>> dsub;
        const double loss = masked_loss(preds, gts, state.hyper.loss, &dsub);
        loss_sum += loss;

        std::vector<MatX<S>> dpred(out.masked_positions.size(),
                                   MatX<S>::Zero(cfg.patch_size, 3));
        for (size_t j = 0; j < in_loss.size(); ++j) {
            dpred[in_loss[j]] = dsub[j] * static_cast<S>(inv_b);
        }
        model_backward(state.params, cfg, tape, dpred);
    }

    const double mean_loss = loss_sum * inv_b;
    if (!std::isfinite(mean_loss)) {
        throw std::runtime_error("train_step: non-finite loss at step " +
                                 std::to_string(state.step));
    }
    const double lr = lr_at(state.step, state.total_steps, state.hyper.lr,
                            state.hyper.warmup_frac);
    state.opt.weight_decay = state.hyper.weight_decay;
    state.opt.step(state.params, lr);
    ++state.step;
    return mean_loss;
}

// checkpointing of the full training state (float product precision)
void save_train_state(const std::filesystem::path& path, TrainState<float>& state);
TrainState<float> load_train_state(const std::filesystem::path& path);

struct LoadedModel {
    ModelConfig cfg;
    ModelParams<float> params;
    nlohmann::ordered_json header;
};
LoadedModel load_model(const std::filesystem::path& path);

struct TrainRunResult {
    double first_loss = 0.0;
    double last_loss = 0.0;
    int64_t steps = 0;
};

// epoch loop over a manifest's train split with random prompt pairing
TrainRunResult train_run(TrainState<float>& state, const Manifest& manifest,
                         const std::filesystem::path& data_root,
                         const std::filesystem::path& ckpt_out, std::ostream* log);

}  // namespace pic
