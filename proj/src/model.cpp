#include "pic/model.hpp"

#include <cstring>
#include <fstream>

namespace pic {

using nlohmann::ordered_json;

void ModelConfig::validate() const {
    if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("model dim must be even and >= 2");
    if (heads < 1 || dim % heads != 0) throw std::invalid_argument("model dim must divide by heads");
    if (enc_depth < 1 || dec_depth < 0) throw std::invalid_argument("model depths out of range");
    if (merge_block < 1 || merge_block > enc_depth) {
        throw std::invalid_argument("merge_block must be in [1, enc_depth]");
    }
    if (n_patches < 1 || patch_size < 1) throw std::invalid_argument("patch geometry out of range");
    if (mask_ratio < 0.0 || mask_ratio >= 1.0) throw std::invalid_argument("mask_ratio out of range");
}

ModelConfig ModelConfig::desk(Variant v) {
    ModelConfig cfg;
    cfg.variant = v;
    cfg.dim = 128;
    cfg.enc_depth = 3;
    cfg.dec_depth = 3;
    cfg.heads = 4;
    cfg.merge_block = 3;
    cfg.mask_ratio = v == Variant::Sep ? 0.7 : 0.6;
    return cfg;
}

ordered_json config_to_json(const ModelConfig& cfg) {
    ordered_json j;
    j["variant"] = variant_name(cfg.variant);
    j["dim"] = cfg.dim;
    j["enc_depth"] = cfg.enc_depth;
    j["dec_depth"] = cfg.dec_depth;
    j["heads"] = cfg.heads;
    j["merge_block"] = cfg.merge_block;
    j["n_patches"] = cfg.n_patches;
    j["patch_size"] = cfg.patch_size;
    j["mask_ratio"] = cfg.mask_ratio;
    j["role_embedding"] = cfg.role_embedding;
    j["prompt_first"] = cfg.prompt_first;
    return j;
}

ModelConfig config_from_json(const ordered_json& j) {
    ModelConfig cfg;
    cfg.variant = variant_from_name(j.at("variant").get<std::string>());
    cfg.dim = j.at("dim").get<int>();
    cfg.enc_depth = j.at("enc_depth").get<int>();
    cfg.dec_depth = j.at("dec_depth").get<int>();
    cfg.heads = j.at("heads").get<int>();
    cfg.merge_block = j.at("merge_block").get<int>();
    cfg.n_patches = j.at("n_patches").get<int>();
    cfg.patch_size = j.at("patch_size").get<int>();
    cfg.mask_ratio = j.at("mask_ratio").get<double>();
    cfg.role_embedding = j.at("role_embedding").get<bool>();
    cfg.prompt_first = j.at("prompt_first").get<bool>();
    cfg.validate();
    return cfg;
}

TokenRef token_ref(const SequenceLayout& layout, int position) {
    if (position < 0 || position >= layout.total_tokens()) {
        throw std::out_of_range("token_ref: position out of range");
    }
    const auto in_block = [&](std::pair<int, int> b) {
        return position >= b.first && position < b.second;
    };
    TokenRef ref;
    if (layout.variant == Variant::Sep) {
        ref.is_target = true;
        ref.is_prompt = in_block(layout.prompt_target_block());
        const auto b = ref.is_prompt ? layout.prompt_target_block() : layout.query_target_block();
        ref.patch = position - b.first;
        return ref;
    }
    if (in_block(layout.prompt_input_block())) {
        ref.is_prompt = true;
        ref.patch = position - layout.prompt_input_block().first;
    } else if (in_block(layout.prompt_target_block())) {
        ref.is_prompt = true;
        ref.is_target = true;
        ref.patch = position - layout.prompt_target_block().first;
    } else if (in_block(layout.query_input_block())) {
        ref.patch = position - layout.query_input_block().first;
    } else {
        ref.is_target = true;
        ref.patch = position - layout.query_target_block().first;
    }
    return ref;
}

namespace detail {

void check_batch(const ModelConfig& cfg, const PatchBatch& b, const char* which) {
    if (b.n_patches() != cfg.n_patches || b.patch_size() != cfg.patch_size) {
        throw std::invalid_argument(std::string("model: ") + which + " batch shape mismatch");
    }
}

}  // namespace detail

MatX<double> embed_patch(const ModelParams<double>& params, const Points& patch) {
    StreamSpec spec;
    spec.patch = {&patch};
    spec.pos = Points::Zero(1, 3);
    spec.masked = {0};
    spec.role = {0};
    EmbedCache<double> cache;
    const int m = static_cast<int>(patch.rows());
    MatX<double> tokens = detail::embed_stream(params, m, spec, cache);
    // strip the positional part so this is the pure patch embedding
    MatX<double> pos = params.pos2.forward(gelu(params.pos1.forward(spec.pos.cast<double>().eval())));
    return tokens - pos;
}

MatX<double> embed_position(const ModelParams<double>& params, const Vec3& center) {
    MatX<double> c(1, 3);
    c.row(0) = center;
    return params.pos2.forward(gelu(params.pos1.forward(c)));
}

const MatX<float>* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, m] : arrays) {
        if (n == name) return &m;
    }
    return nullptr;
}

static constexpr char kMagic[] = "PIC-CHECKPOINT-1\n";

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(kMagic, sizeof(kMagic) - 1);
    const std::string header = ckpt.header.dump(2);
    const uint64_t hlen = header.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& [name, mat] : ckpt.arrays) {
        const uint32_t nlen = static_cast<uint32_t>(name.size());
        out.write(reinterpret_cast<const char*>(&nlen), sizeof(nlen));
        out.write(name.data(), nlen);
        const uint64_t rows = static_cast<uint64_t>(mat.rows());
        const uint64_t cols = static_cast<uint64_t>(mat.cols());
        out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
        out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
        out.write(reinterpret_cast<const char*>(mat.data()),
                  static_cast<std::streamsize>(sizeof(float) * mat.size()));
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    char magic[sizeof(kMagic) - 1];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
        throw std::runtime_error("not a checkpoint file: " + path.string());
    }
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string header(hlen, '\0');
    in.read(header.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw std::runtime_error("truncated checkpoint header: " + path.string());

    Checkpoint ckpt;
    ckpt.header = ordered_json::parse(header);
    while (true) {
        uint32_t nlen = 0;
        in.read(reinterpret_cast<char*>(&nlen), sizeof(nlen));
        if (in.eof()) break;
        if (!in) throw std::runtime_error("truncated checkpoint: " + path.string());
        std::string name(nlen, '\0');
        in.read(name.data(), nlen);
        uint64_t rows = 0, cols = 0;
        in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
        in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
        MatX<float> mat(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        in.read(reinterpret_cast<char*>(mat.data()),
                static_cast<std::streamsize>(sizeof(float) * mat.size()));
        if (!in) throw std::runtime_error("truncated checkpoint array: " + name);
        ckpt.arrays.emplace_back(std::move(name), std::move(mat));
    }
    return ckpt;
}

void params_to_checkpoint(ModelParams<float>& params, Checkpoint& ckpt) {
    params.visit([&](const std::string& name, MatX<float>& v, MatX<float>&, bool) {
        ckpt.arrays.emplace_back(name, v);
    });
}

void params_from_checkpoint(const Checkpoint& ckpt, const ModelConfig& cfg,
                            ModelParams<float>& params) {
    params = ModelParams<float>::init(cfg, 0);
    params.visit([&](const std::string& name, MatX<float>& v, MatX<float>&, bool) {
        const MatX<float>* src = ckpt.find(name);
        if (src == nullptr) throw std::runtime_error("checkpoint missing array: " + name);
        if (src->rows() != v.rows() || src->cols() != v.cols()) {
            throw std::runtime_error("checkpoint shape mismatch for " + name);
        }
        v = *src;
    });
}

}  // namespace pic
