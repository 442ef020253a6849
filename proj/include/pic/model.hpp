#pragma once

#include <filesystem>
#include <json.hpp>
#include <map>
#include <optional>
#include <utility>

#include "pic/nn.hpp"
#include "pic/tokenize.hpp"

namespace pic {

struct ModelConfig {
    Variant variant = Variant::Sep;
    int dim = 384;
    int enc_depth = 6;
    int dec_depth = 6;
    int heads = 6;
    int merge_block = 3;  // sep: blocks before the position-wise fusion
    int n_patches = 64;
    int patch_size = 32;
    double mask_ratio = 0.7;
    bool role_embedding = false;
    bool prompt_first = true;

    void validate() const;
    SequenceLayout layout() const { return SequenceLayout{variant, n_patches, prompt_first}; }
    int h1() const { return dim / 2; }

    static ModelConfig desk(Variant v);
};

nlohmann::ordered_json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::ordered_json& j);

// which (pair, cloud, patch) a sequence position refers to; for the sep
// variant positions index the target stream
struct TokenRef {
    bool is_prompt = false;
    bool is_target = false;
    int patch = 0;
};

TokenRef token_ref(const SequenceLayout& layout, int position);

template <typename S>
struct ModelParams {
    Dense<S> pe_f1, pe_f2, pe_g1, pe_g2;  // per-point patch encoder, two pooled stages
    Dense<S> pos1, pos2;                  // learned 3 -> dim positional map
    MatX<S> mask_token, g_mask_token;     // 1 x dim
    MatX<S> role, g_role;                 // 4 x dim when enabled, else empty
    std::vector<Block<S>> enc, dec;
    LayerNorm<S> final_ln;
    Dense<S> head;  // dim -> patch_size*3 offsets

    template <typename F>
    void visit(F&& fn) {
        pe_f1.visit("patch.f1", fn);
        pe_f2.visit("patch.f2", fn);
        pe_g1.visit("patch.g1", fn);
        pe_g2.visit("patch.g2", fn);
        pos1.visit("pos.fc1", fn);
        pos2.visit("pos.fc2", fn);
        fn(std::string("mask_token"), mask_token, g_mask_token, false);
        if (role.size() > 0) fn(std::string("role"), role, g_role, false);
        for (size_t i = 0; i < enc.size(); ++i) enc[i].visit("enc." + std::to_string(i), fn);
        for (size_t i = 0; i < dec.size(); ++i) dec[i].visit("dec." + std::to_string(i), fn);
        final_ln.visit("final_ln", fn);
        head.visit("head", fn);
    }

    void zero_grad() {
        visit([](const std::string&, MatX<S>& v, MatX<S>& g, bool) {
            (void)v;
            g.setZero();
        });
    }

    int64_t param_count() {
        int64_t n = 0;
        visit([&](const std::string&, MatX<S>& v, MatX<S>&, bool) { n += v.size(); });
        return n;
    }

    static ModelParams init(const ModelConfig& cfg, uint64_t seed);
};

template <typename S>
ModelParams<S> ModelParams<S>::init(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    ModelParams p;
    p.pe_f1.init(3, cfg.h1(), rng);
    p.pe_f2.init(cfg.h1(), cfg.h1(), rng);
    p.pe_g1.init(cfg.dim, cfg.dim, rng);
    p.pe_g2.init(cfg.dim, cfg.dim, rng);
    p.pos1.init(3, cfg.dim, rng);
    p.pos2.init(cfg.dim, cfg.dim, rng);
    p.mask_token.resize(1, cfg.dim);
    for (Eigen::Index i = 0; i < p.mask_token.size(); ++i) {
        p.mask_token.data()[i] = static_cast<S>(rng.normal() * 0.02);
    }
    p.g_mask_token = MatX<S>::Zero(1, cfg.dim);
    if (cfg.role_embedding) {
        p.role.resize(4, cfg.dim);
        for (Eigen::Index i = 0; i < p.role.size(); ++i) {
            p.role.data()[i] = static_cast<S>(rng.normal() * 0.02);
        }
        p.g_role = MatX<S>::Zero(4, cfg.dim);
    }
    p.enc.resize(cfg.enc_depth);
    for (auto& b : p.enc) b.init(cfg.dim, cfg.heads, rng);
    p.dec.resize(cfg.dec_depth);
    for (auto& b : p.dec) b.init(cfg.dim, cfg.heads, rng);
    p.final_ln.init(cfg.dim);
    p.head.init(cfg.dim, cfg.patch_size * 3, rng);
    return p;
}

// one token stream before embedding: per-token patch source (null when the
// mask embedding substitutes), positional source, and role id
struct StreamSpec {
    std::vector<const Points*> patch;
    Points pos;
    std::vector<uint8_t> masked;
    std::vector<int> role;
};

template <typename S>
struct EmbedCache {
    std::vector<int> visible;
    std::vector<uint8_t> masked;
    std::vector<int> role;
    MatX<S> x0, a1, g1, f;       // stacked visible patches, (V*M) rows
    Eigen::MatrixXi arg1;
    MatX<S> concat, a2, g2, hh;  // second stage
    Eigen::MatrixXi arg2;
    MatX<S> cent, p1, pg;        // positional path over all tokens
};

template <typename S>
struct Tape {
    EmbedCache<S> emb_a, emb_b;
    std::vector<typename Block<S>::Cache> pre_a, pre_b;  // sep pre-merge streams
    std::vector<typename Block<S>::Cache> post;          // fused / cat full chain
    typename LayerNorm<S>::Cache fln;
    MatX<S> head_in;  // masked rows after the final norm
    std::vector<int> masked_positions;
    Points pred_centers;  // aligned input centers, one row per masked token
};

template <typename S>
struct ForwardOut {
    std::vector<int> masked_positions;
    std::vector<MatX<S>> predictions;  // absolute coordinates, patch_size x 3 each
};

namespace detail {

template <typename S>
MatX<S> embed_stream(const ModelParams<S>& params, int patch_size, const StreamSpec& spec,
                     EmbedCache<S>& c) {
    const int t = static_cast<int>(spec.patch.size());
    const int dim = static_cast<int>(params.mask_token.cols());
    c.masked = spec.masked;
    c.role = spec.role;
    c.visible.clear();
    for (int i = 0; i < t; ++i) {
        if (spec.patch[i] != nullptr) c.visible.push_back(i);
    }
    const int v = static_cast<int>(c.visible.size());

    MatX<S> tokens(t, dim);
    for (int i = 0; i < t; ++i) tokens.row(i) = params.mask_token.row(0);

    if (v > 0) {
        c.x0.resize(static_cast<Eigen::Index>(v) * patch_size, 3);
        for (int k = 0; k < v; ++k) {
            c.x0.block(static_cast<Eigen::Index>(k) * patch_size, 0, patch_size, 3) =
                spec.patch[c.visible[k]]->template cast<S>();
        }
        c.a1 = params.pe_f1.forward(c.x0);
        c.g1 = gelu(c.a1);
        c.f = params.pe_f2.forward(c.g1);
        MatX<S> pooled = segment_maxpool(c.f, patch_size, c.arg1);
        c.concat.resize(c.f.rows(), dim);
        const int h1 = static_cast<int>(c.f.cols());
        for (int k = 0; k < v; ++k) {
            for (int j = 0; j < patch_size; ++j) {
                const Eigen::Index r = static_cast<Eigen::Index>(k) * patch_size + j;
                c.concat.block(r, 0, 1, h1) = c.f.row(r);
                c.concat.block(r, h1, 1, h1) = pooled.row(k);
            }
        }
        c.a2 = params.pe_g1.forward(c.concat);
        c.g2 = gelu(c.a2);
        c.hh = params.pe_g2.forward(c.g2);
        MatX<S> emb = segment_maxpool(c.hh, patch_size, c.arg2);
        for (int k = 0; k < v; ++k) tokens.row(c.visible[k]) = emb.row(k);
    }

    c.cent = spec.pos.template cast<S>();
    c.p1 = params.pos1.forward(c.cent);
    c.pg = gelu(c.p1);
    tokens += params.pos2.forward(c.pg);

    if (params.role.size() > 0) {
        for (int i = 0; i < t; ++i) tokens.row(i) += params.role.row(spec.role[i]);
    }
    return tokens;
}

template <typename S>
void embed_stream_backward(ModelParams<S>& params, int patch_size, const EmbedCache<S>& c,
                           const MatX<S>& dtokens) {
    const int t = static_cast<int>(c.masked.size());
    if (params.role.size() > 0) {
        for (int i = 0; i < t; ++i) params.g_role.row(c.role[i]) += dtokens.row(i);
    }

    MatX<S> dpg = params.pos2.backward(c.pg, dtokens);
    MatX<S> dp1 = gelu_backward(c.p1, dpg);
    params.pos1.backward(c.cent, dp1);

    for (int i = 0; i < t; ++i) {
        if (c.masked[i]) params.g_mask_token.row(0) += dtokens.row(i);
    }

    const int v = static_cast<int>(c.visible.size());
    if (v == 0) return;
    const int dim = static_cast<int>(params.mask_token.cols());
    const int h1 = static_cast<int>(c.f.cols());

    MatX<S> demb(v, dim);
    for (int k = 0; k < v; ++k) demb.row(k) = dtokens.row(c.visible[k]);

    MatX<S> dhh = segment_maxpool_backward(demb, patch_size, c.arg2);
    MatX<S> dg2 = params.pe_g2.backward(c.g2, dhh);
    MatX<S> da2 = gelu_backward(c.a2, dg2);
    MatX<S> dconcat = params.pe_g1.backward(c.concat, da2);

    MatX<S> df = dconcat.block(0, 0, dconcat.rows(), h1);
    MatX<S> dpooled(v, h1);
    for (int k = 0; k < v; ++k) {
        dpooled.row(k).setZero();
        for (int j = 0; j < patch_size; ++j) {
            dpooled.row(k) +=
                dconcat.block(static_cast<Eigen::Index>(k) * patch_size + j, h1, 1, h1);
        }
    }
    df += segment_maxpool_backward(dpooled, patch_size, c.arg1);

    MatX<S> dg1 = params.pe_f2.backward(c.g1, df);
    MatX<S> da1 = gelu_backward(c.a1, dg1);
    params.pe_f1.backward(c.x0, da1);
}

void check_batch(const ModelConfig& cfg, const PatchBatch& b, const char* which);

// stream ordering follows layout.prompt_first
inline const PatchBatch& pair_of(const TokenRef& ref, const PatchBatch& prompt,
                                 const PatchBatch& query) {
    return ref.is_prompt ? prompt : query;
}

}  // namespace detail

template <typename S>
ForwardOut<S> model_forward(const ModelParams<S>& params, const ModelConfig& cfg,
                            const PatchBatch& prompt, const PatchBatch& query,
                            const MaskPlan& mask, Tape<S>& tape) {
    cfg.validate();
    detail::check_batch(cfg, prompt, "prompt");
    detail::check_batch(cfg, query, "query");
    const SequenceLayout layout = cfg.layout();
    const int total = layout.total_tokens();
    if (static_cast<int>(mask.masked.size()) != total) {
        throw std::invalid_argument("model_forward: mask length mismatch");
    }
    const int n = cfg.n_patches;

    tape.masked_positions.clear();
    for (int p = 0; p < total; ++p) {
        if (mask.masked[p]) tape.masked_positions.push_back(p);
    }
    const int k_masked = static_cast<int>(tape.masked_positions.size());
    tape.pred_centers.resize(k_masked, 3);
    for (int k = 0; k < k_masked; ++k) {
        const TokenRef ref = token_ref(layout, tape.masked_positions[k]);
        tape.pred_centers.row(k) =
            detail::pair_of(ref, prompt, query).input_centers.row(ref.patch);
    }

    MatX<S> seq;
    if (cfg.variant == Variant::Sep) {
        // stream A: prompt-input then query-input tokens, never masked
        StreamSpec sa;
        sa.patch.resize(2 * n);
        sa.pos.resize(2 * n, 3);
        sa.masked.assign(2 * n, 0);
        sa.role.resize(2 * n);
        for (int p = 0; p < 2 * n; ++p) {
            const bool from_prompt = layout.prompt_first ? p < n : p >= n;
            const int i = p % n;
            const PatchBatch& pb = from_prompt ? prompt : query;
            sa.patch[p] = &pb.input_patches[i];
            sa.pos.row(p) = pb.input_centers.row(i);
            sa.role[p] = from_prompt ? 0 : 2;
        }
        // stream B: aligned target tokens, mask plan applies here
        StreamSpec sb;
        sb.patch.resize(2 * n);
        sb.pos.resize(2 * n, 3);
        sb.masked.assign(2 * n, 0);
        sb.role.resize(2 * n);
        for (int p = 0; p < 2 * n; ++p) {
            const TokenRef ref = token_ref(layout, p);
            const PatchBatch& pb = detail::pair_of(ref, prompt, query);
            sb.role[p] = ref.is_prompt ? 1 : 3;
            if (mask.masked[p]) {
                sb.patch[p] = nullptr;
                sb.masked[p] = 1;
                sb.pos.row(p) = pb.input_centers.row(ref.patch);
            } else {
                sb.patch[p] = &pb.target_patches[ref.patch];
                sb.pos.row(p) = pb.target_centers.row(ref.patch);
            }
        }

        MatX<S> xa = detail::embed_stream(params, cfg.patch_size, sa, tape.emb_a);
        MatX<S> xb = detail::embed_stream(params, cfg.patch_size, sb, tape.emb_b);

        tape.pre_a.resize(cfg.merge_block);
        tape.pre_b.resize(cfg.merge_block);
        for (int i = 0; i < cfg.merge_block; ++i) {
            xa = params.enc[i].forward(xa, tape.pre_a[i]);
            xb = params.enc[i].forward(xb, tape.pre_b[i]);
        }
        seq = ((xa + xb) * static_cast<S>(0.5)).eval();

        tape.post.resize((cfg.enc_depth - cfg.merge_block) + cfg.dec_depth);
        int t = 0;
        for (int i = cfg.merge_block; i < cfg.enc_depth; ++i) {
            seq = params.enc[i].forward(seq, tape.post[t++]);
        }
        for (int i = 0; i < cfg.dec_depth; ++i) {
            seq = params.dec[i].forward(seq, tape.post[t++]);
        }
    } else {
        StreamSpec sc;
        sc.patch.resize(total);
        sc.pos.resize(total, 3);
        sc.masked.assign(total, 0);
        sc.role.resize(total);
        for (int p = 0; p < total; ++p) {
            const TokenRef ref = token_ref(layout, p);
            const PatchBatch& pb = detail::pair_of(ref, prompt, query);
            sc.role[p] = (ref.is_prompt ? 0 : 2) + (ref.is_target ? 1 : 0);
            if (mask.masked[p]) {
                sc.patch[p] = nullptr;
                sc.masked[p] = 1;
                sc.pos.row(p) = pb.input_centers.row(ref.patch);
            } else {
                sc.patch[p] = ref.is_target ? &pb.target_patches[ref.patch]
                                            : &pb.input_patches[ref.patch];
                sc.pos.row(p) = ref.is_target ? pb.target_centers.row(ref.patch)
                                              : pb.input_centers.row(ref.patch);
            }
        }
        seq = detail::embed_stream(params, cfg.patch_size, sc, tape.emb_a);
        tape.post.resize(cfg.enc_depth + cfg.dec_depth);
        int t = 0;
        for (int i = 0; i < cfg.enc_depth; ++i) seq = params.enc[i].forward(seq, tape.post[t++]);
        for (int i = 0; i < cfg.dec_depth; ++i) seq = params.dec[i].forward(seq, tape.post[t++]);
    }

    MatX<S> normed = params.final_ln.forward(seq, tape.fln);
    tape.head_in.resize(k_masked, cfg.dim);
    for (int k = 0; k < k_masked; ++k) {
        tape.head_in.row(k) = normed.row(tape.masked_positions[k]);
    }
    MatX<S> offsets = params.head.forward(tape.head_in);  // K x (M*3)

    ForwardOut<S> out;
    out.masked_positions = tape.masked_positions;
    out.predictions.resize(k_masked);
    for (int k = 0; k < k_masked; ++k) {
        Eigen::Map<const MatX<S>> pts(offsets.row(k).data(), cfg.patch_size, 3);
        out.predictions[k] = pts;
        out.predictions[k].rowwise() += tape.pred_centers.row(k).template cast<S>();
    }
    return out;
}

template <typename S>
void model_backward(ModelParams<S>& params, const ModelConfig& cfg, Tape<S>& tape,
                    const std::vector<MatX<S>>& dpred) {
    const int k_masked = static_cast<int>(tape.masked_positions.size());
    if (static_cast<int>(dpred.size()) != k_masked) {
        throw std::invalid_argument("model_backward: gradient count mismatch");
    }
    const SequenceLayout layout = cfg.layout();
    const int total = layout.total_tokens();

    MatX<S> doffsets(k_masked, cfg.patch_size * 3);
    for (int k = 0; k < k_masked; ++k) {
        Eigen::Map<MatX<S>> m(doffsets.row(k).data(), cfg.patch_size, 3);
        m = dpred[k];
    }
    MatX<S> dhead_in = params.head.backward(tape.head_in, doffsets);

    MatX<S> dnormed = MatX<S>::Zero(total, cfg.dim);
    for (int k = 0; k < k_masked; ++k) {
        dnormed.row(tape.masked_positions[k]) = dhead_in.row(k);
    }
    MatX<S> dseq = params.final_ln.backward(dnormed, tape.fln);

    const int post_size = static_cast<int>(tape.post.size());
    const int enc_base = cfg.variant == Variant::Sep ? cfg.merge_block : 0;
    for (int t = post_size - 1; t >= 0; --t) {
        if (t >= post_size - cfg.dec_depth) {
            const int di = t - (post_size - cfg.dec_depth);
            dseq = params.dec[di].backward(dseq, tape.post[t]);
        } else {
            dseq = params.enc[enc_base + t].backward(dseq, tape.post[t]);
        }
    }

    if (cfg.variant == Variant::Sep) {
        MatX<S> da = dseq * static_cast<S>(0.5);
        MatX<S> db = da;
        for (int i = cfg.merge_block - 1; i >= 0; --i) {
            da = params.enc[i].backward(da, tape.pre_a[i]);
            db = params.enc[i].backward(db, tape.pre_b[i]);
        }
        detail::embed_stream_backward(params, cfg.patch_size, tape.emb_a, da);
        detail::embed_stream_backward(params, cfg.patch_size, tape.emb_b, db);
    } else {
        detail::embed_stream_backward(params, cfg.patch_size, tape.emb_a, dseq);
    }
}

// thin named entry points; each checks the configured variant
template <typename S>
ForwardOut<S> forward_sep(const ModelParams<S>& params, const ModelConfig& cfg,
                          const PatchBatch& prompt, const PatchBatch& query, const MaskPlan& mask,
                          Tape<S>& tape) {
    if (cfg.variant != Variant::Sep) throw std::invalid_argument("forward_sep: config variant is cat");
    return model_forward(params, cfg, prompt, query, mask, tape);
}

template <typename S>
ForwardOut<S> forward_cat(const ModelParams<S>& params, const ModelConfig& cfg,
                          const PatchBatch& prompt, const PatchBatch& query, const MaskPlan& mask,
                          Tape<S>& tape) {
    if (cfg.variant != Variant::Cat) throw std::invalid_argument("forward_cat: config variant is sep");
    return model_forward(params, cfg, prompt, query, mask, tape);
}

// single-token embedding helpers, mostly for tests and bindings
MatX<double> embed_patch(const ModelParams<double>& params, const Points& patch);
MatX<double> embed_position(const ModelParams<double>& params, const Vec3& center);

template <typename S>
MatX<S> decode_head(const ModelParams<S>& params, const MatX<S>& feature, const Vec3& center) {
    const MatX<S> offsets = params.head.forward(feature);  // 1 x (M*3)
    Eigen::Map<const MatX<S>> pts(offsets.data(), offsets.cols() / 3, 3);
    MatX<S> out = pts;
    out.rowwise() += center.template cast<S>();
    return out;
}

// checkpoint container: structured-text header plus named float32 arrays
struct Checkpoint {
    nlohmann::ordered_json header;
    std::vector<std::pair<std::string, MatX<float>>> arrays;

    const MatX<float>* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void params_to_checkpoint(ModelParams<float>& params, Checkpoint& ckpt);
void params_from_checkpoint(const Checkpoint& ckpt, const ModelConfig& cfg,
                            ModelParams<float>& params);

}  // namespace pic
