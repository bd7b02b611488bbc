#include "jts/train.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "jts/loss.hpp"
#include "jts/tokenize.hpp"

namespace jts {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;
constexpr char kMagic[4] = {'J', 'T', 'S', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;
constexpr std::uint8_t kDtypeF64 = 1;

nlohmann::json model_cfg_to_json(const ModelConfig& cfg) {
    return nlohmann::json{{"n_layers", cfg.n_layers},
                          {"n_heads", cfg.n_heads},
                          {"embed_dim", cfg.embed_dim},
                          {"ffn_dim", cfg.ffn_dim},
                          {"patch_len", cfg.patch_len},
                          {"quantile_levels", cfg.quantile_levels},
                          {"rope_base", cfg.rope_base},
                          {"eps_denorm", cfg.eps_denorm},
                          {"u_shape", cfg.u_shape},
                          {"mask_ratio_default", cfg.mask_ratio_default},
                          {"query_group_size", cfg.query_group_size}};
}

ModelConfig model_cfg_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.n_layers = j.at("n_layers").get<std::int64_t>();
    cfg.n_heads = j.at("n_heads").get<std::int64_t>();
    cfg.embed_dim = j.at("embed_dim").get<std::int64_t>();
    cfg.ffn_dim = j.at("ffn_dim").get<std::int64_t>();
    cfg.patch_len = j.at("patch_len").get<std::int64_t>();
    cfg.quantile_levels = j.at("quantile_levels").get<std::vector<double>>();
    cfg.rope_base = j.at("rope_base").get<double>();
    cfg.eps_denorm = j.at("eps_denorm").get<double>();
    cfg.u_shape = j.at("u_shape").get<bool>();
    cfg.mask_ratio_default = j.at("mask_ratio_default").get<double>();
    cfg.query_group_size = j.at("query_group_size").get<std::int64_t>();
    return cfg;
}

void write_bytes(std::ostream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_pod(std::ostream& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    write_bytes(out, &v, sizeof(T));
}

void read_bytes(std::istream& in, void* p, std::size_t n, const char* what) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
        throw CheckpointError(CheckpointError::Kind::Truncated,
                              std::string("checkpoint truncated while reading ") + what);
    }
}

template <typename T>
T read_pod(std::istream& in, const char* what) {
    T v{};
    read_bytes(in, &v, sizeof(T), what);
    return v;
}

void write_record(std::ostream& out, const std::string& name,
                  const std::vector<std::int64_t>& shape, const std::vector<double>& data) {
    const std::uint32_t name_len = static_cast<std::uint32_t>(name.size());
    write_pod(out, name_len);
    write_bytes(out, name.data(), name.size());
    write_pod(out, kDtypeF32);
    write_pod(out, static_cast<std::uint8_t>(shape.size()));
    for (auto d : shape) write_pod(out, static_cast<std::uint64_t>(d));
    for (double v : data) write_pod(out, static_cast<float>(v));
}

struct Record {
    std::string name;
    std::vector<std::int64_t> shape;
    std::vector<double> data;
};

bool read_record(std::istream& in, Record& rec) {
    std::uint32_t name_len = 0;
    in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
    if (in.gcount() == 0) return false;  // clean end of file
    if (static_cast<std::size_t>(in.gcount()) != sizeof(name_len)) {
        throw CheckpointError(CheckpointError::Kind::Truncated,
                              "checkpoint truncated in record header");
    }
    rec.name.resize(name_len);
    read_bytes(in, rec.name.data(), name_len, "record name");
    const auto dtype = read_pod<std::uint8_t>(in, "record dtype");
    if (dtype != kDtypeF32 && dtype != kDtypeF64) {
        throw CheckpointError(CheckpointError::Kind::Corrupt,
                              "unknown dtype tag in record '" + rec.name + "'");
    }
    const auto rank = read_pod<std::uint8_t>(in, "record rank");
    rec.shape.assign(rank, 0);
    std::int64_t numel = 1;
    for (std::uint8_t i = 0; i < rank; ++i) {
        rec.shape[i] = static_cast<std::int64_t>(read_pod<std::uint64_t>(in, "record dims"));
        numel *= rec.shape[i];
    }
    rec.data.resize(static_cast<std::size_t>(numel));
    for (auto& v : rec.data) {
        v = dtype == kDtypeF32 ? static_cast<double>(read_pod<float>(in, "record data"))
                               : read_pod<double>(in, "record data");
    }
    return true;
}

}  // namespace

void TrainConfig::validate() const {
    if (max_steps < 0) throw std::invalid_argument("TrainConfig: max_steps must be >= 0");
    if (warmup_steps < 0 || warmup_steps > max_steps) {
        throw std::invalid_argument("TrainConfig: need 0 <= warmup_steps <= max_steps");
    }
    if (lr_min > lr_max) throw std::invalid_argument("TrainConfig: lr_min must be <= lr_max");
    if (rescale_lo < 1.0 || rescale_hi < rescale_lo) {
        throw std::invalid_argument("TrainConfig: need 1 <= rescale_lo <= rescale_hi");
    }
    if (mixup_prob < 0.0 || mixup_prob > 1.0) {
        throw std::invalid_argument("TrainConfig: mixup_prob must be in [0,1]");
    }
    if (mask_ratio < 0.0 || mask_ratio >= 1.0) {
        throw std::invalid_argument("TrainConfig: mask_ratio must be in [0,1)");
    }
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (window_len < 1) throw std::invalid_argument("TrainConfig: window_len must be >= 1");
}

double lr_schedule(std::int64_t step, const TrainConfig& cfg) {
    if (step < 0 || step > cfg.max_steps) throw std::invalid_argument("lr_schedule: step out of range");
    if (cfg.warmup_steps > 0 && step <= cfg.warmup_steps) {
        return cfg.lr_max * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
    }
    const std::int64_t span = cfg.max_steps - cfg.warmup_steps;
    if (span == 0) return cfg.lr_max;
    const double progress = static_cast<double>(step - cfg.warmup_steps) / static_cast<double>(span);
    return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(kPi * progress));
}

AdamState AdamState::init_for(const ModelWeights& w) {
    AdamState s;
    for (const auto& [name, t] : w.parameters()) {
        (void)name;
        s.m.emplace_back(t->data.size(), 0.0);
        s.v.emplace_back(t->data.size(), 0.0);
    }
    return s;
}

void adamw_step(std::vector<std::pair<std::string, TensorPtr>>& params, AdamState& state,
                double lr, const TrainConfig& cfg) {
    if (params.size() != state.m.size()) {
        throw std::invalid_argument("adamw_step: state does not match parameter list");
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& t = params[pi].second;
        auto& m = state.m[pi];
        auto& v = state.v[pi];
        for (std::size_t i = 0; i < t->data.size(); ++i) {
            const double g = t->grad[i];
            if (!std::isfinite(g)) {
                throw TrainAbort("non-finite gradient in parameter '" + params[pi].first +
                                 "' at element " + std::to_string(i));
            }
            t->data[i] *= 1.0 - lr * cfg.weight_decay;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            t->data[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
    }
}

void mixup(Batch& batch, double prob, Rng& rng) {
    if (prob < 0.0 || prob > 1.0) throw std::invalid_argument("mixup: prob must be in [0,1]");
    if (prob == 0.0) return;
    if (batch.size() < 2) {
        std::cerr << "mixup: batch of 1, skipping augmentation\n";
        return;
    }
    const Batch original = batch;
    const std::size_t b = batch.size();
    for (std::size_t i = 0; i < b; ++i) {
        if (rng.uniform() >= prob) continue;
        std::size_t j = static_cast<std::size_t>(rng.uniform_int(b - 1));
        if (j >= i) ++j;
        const double lambda = rng.uniform(0.5, 1.0);
        auto& self = batch[i];
        const auto& partner = original[j];
        for (std::size_t t = 0; t < self.size(); ++t) {
            self[t] = lambda * original[i][t] + (1.0 - lambda) * partner[t];
        }
    }
}

void rescale_aug(Batch& batch, double lo, double hi, Rng& rng) {
    if (lo < 1.0 || hi < lo) throw std::invalid_argument("rescale_aug: need 1 <= lo <= hi");
    for (auto& sample : batch) {
        const double c = rng.log_uniform(lo, hi);
        for (auto& v : sample) v *= c;
    }
}

void quantize_params_f32(ModelWeights& w) {
    for (auto& [name, t] : w.parameters()) {
        (void)name;
        for (auto& v : t->data) v = static_cast<double>(static_cast<float>(v));
    }
}

void quantize_state_f32(AdamState& s) {
    for (auto& m : s.m)
        for (auto& v : m) v = static_cast<double>(static_cast<float>(v));
    for (auto& vv : s.v)
        for (auto& v : vv) v = static_cast<double>(static_cast<float>(v));
}

void checkpoint_save(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError(CheckpointError::Kind::Io, "cannot open for writing: " + path);
    write_bytes(out, kMagic, 4);
    write_pod(out, ckpt.version);
    nlohmann::json cfg;
    cfg["model"] = model_cfg_to_json(ckpt.weights.cfg);
    cfg["step"] = ckpt.step;
    cfg["seed"] = ckpt.seed;
    cfg["has_opt_state"] = ckpt.has_opt_state;
    cfg["adam_t"] = ckpt.has_opt_state ? ckpt.opt_state.t : 0;
    const std::string blob = cfg.dump();
    write_pod(out, static_cast<std::uint64_t>(blob.size()));
    write_bytes(out, blob.data(), blob.size());
    const auto params = ckpt.weights.parameters();
    for (const auto& [name, t] : params) write_record(out, name, t->shape, t->data);
    if (ckpt.has_opt_state) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            write_record(out, "opt.m." + params[i].first, params[i].second->shape,
                         ckpt.opt_state.m[i]);
            write_record(out, "opt.v." + params[i].first, params[i].second->shape,
                         ckpt.opt_state.v[i]);
        }
    }
    if (!out) throw CheckpointError(CheckpointError::Kind::Io, "write failed: " + path);
}

Checkpoint checkpoint_load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(CheckpointError::Kind::Io, "cannot open for reading: " + path);
    char magic[4] = {};
    read_bytes(in, magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw CheckpointError(CheckpointError::Kind::BadMagic, "bad magic header in " + path);
    }
    const auto version = read_pod<std::uint32_t>(in, "version");
    if (version != kVersion) {
        throw CheckpointError(CheckpointError::Kind::BadVersion,
                              "unsupported checkpoint version " + std::to_string(version));
    }
    const auto blob_len = read_pod<std::uint64_t>(in, "config length");
    std::string blob(blob_len, '\0');
    read_bytes(in, blob.data(), blob_len, "config blob");
    nlohmann::json cfg;
    try {
        cfg = nlohmann::json::parse(blob);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(CheckpointError::Kind::Corrupt,
                              std::string("config blob is not valid JSON: ") + e.what());
    }

    Checkpoint ckpt;
    ckpt.version = version;
    const ModelConfig model_cfg = model_cfg_from_json(cfg.at("model"));
    ckpt.step = cfg.at("step").get<std::int64_t>();
    ckpt.seed = cfg.at("seed").get<std::uint64_t>();
    ckpt.has_opt_state = cfg.at("has_opt_state").get<bool>();

    std::vector<Record> records;
    Record rec;
    while (read_record(in, rec)) records.push_back(std::move(rec));

    auto find_record = [&](const std::string& name) -> const Record& {
        for (const auto& r : records) {
            if (r.name == name) return r;
        }
        throw CheckpointError(CheckpointError::Kind::Corrupt, "missing record '" + name + "'");
    };

    ckpt.weights = ModelWeights::zeros_like(model_cfg);
    for (auto& [name, t] : ckpt.weights.parameters()) {
        const Record& r = find_record(name);
        if (r.shape != t->shape || r.data.size() != t->data.size()) {
            throw CheckpointError(CheckpointError::Kind::Corrupt,
                                  "shape mismatch in record '" + name + "'");
        }
        t->data = r.data;
    }
    if (ckpt.has_opt_state) {
        ckpt.opt_state = AdamState::init_for(ckpt.weights);
        ckpt.opt_state.t = cfg.at("adam_t").get<std::int64_t>();
        const auto params = ckpt.weights.parameters();
        for (std::size_t i = 0; i < params.size(); ++i) {
            ckpt.opt_state.m[i] = find_record("opt.m." + params[i].first).data;
            ckpt.opt_state.v[i] = find_record("opt.v." + params[i].first).data;
        }
    }
    return ckpt;
}

namespace {

void dump_batch(const Batch& batch, std::int64_t step) {
    std::cerr << "train_loop: dumping batch at step " << step << " (" << batch.size()
              << " samples)\n";
    for (std::size_t i = 0; i < batch.size(); ++i) {
        std::cerr << "  sample " << i << ":";
        const std::size_t n = std::min<std::size_t>(batch[i].size(), 8);
        for (std::size_t t = 0; t < n; ++t) std::cerr << ' ' << batch[i][t];
        if (batch[i].size() > n) std::cerr << " ...";
        std::cerr << '\n';
    }
}

}  // namespace

TrainResult train_loop(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                       const std::vector<Series>& data) {
    model_cfg.validate();
    train_cfg.validate();
    if (data.empty()) throw std::invalid_argument("train_loop: no data series");
    for (const auto& s : data) {
        if (s.length() < 2 * model_cfg.patch_len) {
            throw std::invalid_argument("train_loop: series shorter than 2 * patch_len");
        }
        if (s.length() < train_cfg.window_len) {
            throw std::invalid_argument("train_loop: series shorter than window_len");
        }
    }
    const std::int64_t tokens_per_window =
        (train_cfg.window_len + model_cfg.patch_len - 1) / model_cfg.patch_len;
    if (train_cfg.mask_ratio > 0.0 &&
        train_cfg.mask_ratio * static_cast<double>(tokens_per_window) < 1.0) {
        throw std::invalid_argument("train_loop: mask_ratio * tokens_per_window must be >= 1");
    }

    ModelWeights weights = ModelWeights::init(model_cfg, train_cfg.seed);
    quantize_params_f32(weights);
    auto params = weights.parameters();
    AdamState state = AdamState::init_for(weights);
    Rng rng(mix_seed(train_cfg.seed, 0x747261696eULL));

    TrainResult result;
    for (std::int64_t step = 0; step < train_cfg.max_steps; ++step) {
        const double lr = lr_schedule(step + 1, train_cfg);

        Batch batch(static_cast<std::size_t>(train_cfg.batch_size));
        for (auto& sample : batch) {
            const auto& s = data[rng.uniform_int(data.size())];
            const std::int64_t span = s.length() - train_cfg.window_len;
            const std::int64_t start =
                span == 0 ? 0
                          : static_cast<std::int64_t>(
                                rng.uniform_int(static_cast<std::uint64_t>(span + 1)));
            sample.assign(s.values.begin() + start, s.values.begin() + start + train_cfg.window_len);
        }
        mixup(batch, train_cfg.mixup_prob, rng);
        rescale_aug(batch, train_cfg.rescale_lo, train_cfg.rescale_hi, rng);

        for (auto& [name, t] : params) {
            (void)name;
            t->zero_grad();
        }

        double batch_loss = 0.0;
        const double inv_b = 1.0 / static_cast<double>(batch.size());
        for (const auto& sample : batch) {
            Series window;
            window.values = sample;
            const PatchGrid grid = patchify(window, model_cfg.patch_len);
            const MaskedSequence seq = mask_random(grid, train_cfg.mask_ratio, rng);

            std::vector<double> targets(seq.mask_idx.size() *
                                        static_cast<std::size_t>(model_cfg.patch_len));
            for (std::size_t i = 0; i < seq.mask_idx.size(); ++i) {
                const double* src = grid.patches.data() + seq.mask_idx[i] * model_cfg.patch_len;
                std::copy(src, src + model_cfg.patch_len,
                          targets.data() + static_cast<std::int64_t>(i) * model_cfg.patch_len);
            }

            auto hidden = forward(seq, weights);
            auto fc = quantile_heads(hidden, seq, weights);
            LossReport report = wql_loss(fc, targets);
            if (!std::isfinite(report.total)) {
                dump_batch(batch, step);
                throw TrainAbort("non-finite loss at step " + std::to_string(step));
            }
            batch_loss += report.total * inv_b;
            backward(affine(report.total_node, inv_b, 0.0));
        }

        adamw_step(params, state, lr, train_cfg);
        quantize_params_f32(weights);
        quantize_state_f32(state);
        result.curve.push_back({step + 1, lr, batch_loss});
    }

    result.checkpoint.version = kVersion;
    result.checkpoint.weights = std::move(weights);
    result.checkpoint.has_opt_state = true;
    result.checkpoint.opt_state = std::move(state);
    result.checkpoint.step = train_cfg.max_steps;
    result.checkpoint.seed = train_cfg.seed;
    return result;
}

void write_loss_curve_csv(const std::string& path, const std::vector<LossCurvePoint>& curve) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write loss curve: " + path);
    out.precision(17);
    out << "step,lr,loss\n";
    for (const auto& p : curve) out << p.step << ',' << p.lr << ',' << p.loss << '\n';
}

}  // namespace jts
