#include "jts/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "jts/rng.hpp"

namespace jts {

std::int64_t ModelConfig::median_index() const {
    for (std::size_t k = 0; k < quantile_levels.size(); ++k) {
        if (std::fabs(quantile_levels[k] - 0.5) < 1e-12) return static_cast<std::int64_t>(k);
    }
    throw std::invalid_argument("quantile_levels do not include the median 0.5");
}

void ModelConfig::validate() const {
    if (n_layers < 2 || n_layers % 2 != 0) {
        throw std::invalid_argument("ModelConfig: n_layers must be even and >= 2");
    }
    if (n_heads < 1) throw std::invalid_argument("ModelConfig: n_heads must be >= 1");
    if (embed_dim % (2 * n_heads) != 0) {
        throw std::invalid_argument("ModelConfig: embed_dim must be divisible by 2 * n_heads");
    }
    if (ffn_dim < 1) throw std::invalid_argument("ModelConfig: ffn_dim must be >= 1");
    if (patch_len < 1) throw std::invalid_argument("ModelConfig: patch_len must be >= 1");
    if (quantile_levels.empty()) throw std::invalid_argument("ModelConfig: no quantile levels");
    for (std::size_t k = 0; k < quantile_levels.size(); ++k) {
        if (quantile_levels[k] <= 0.0 || quantile_levels[k] >= 1.0) {
            throw std::invalid_argument("ModelConfig: quantile levels must lie in (0,1)");
        }
        if (k > 0 && quantile_levels[k] <= quantile_levels[k - 1]) {
            throw std::invalid_argument("ModelConfig: quantile levels must be strictly increasing");
        }
    }
    if (rope_base <= 0.0) throw std::invalid_argument("ModelConfig: rope_base must be positive");
    if (eps_denorm <= 0.0) throw std::invalid_argument("ModelConfig: eps_denorm must be positive");
    if (mask_ratio_default < 0.0 || mask_ratio_default >= 1.0) {
        throw std::invalid_argument("ModelConfig: mask_ratio_default must be in [0,1)");
    }
    if (query_group_size < 1 || n_heads % query_group_size != 0) {
        throw std::invalid_argument("ModelConfig: query_group_size must divide n_heads");
    }
}

namespace {

TensorPtr init_matrix(std::int64_t rows, std::int64_t cols, Rng& rng, double stddev) {
    std::vector<double> d(static_cast<std::size_t>(rows * cols));
    for (auto& v : d) v = rng.truncated_normal(stddev);
    return tensor(std::move(d), {rows, cols}, true);
}

}  // namespace

ModelWeights ModelWeights::init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(mix_seed(seed, 0x6d6f64656cULL));
    const std::int64_t d = cfg.embed_dim, f = cfg.ffn_dim, p = cfg.patch_len;
    const std::int64_t kv = cfg.n_kv_heads() * cfg.head_dim();
    constexpr double kStd = 0.02;

    ModelWeights w;
    w.cfg = cfg;
    w.patch_embed = init_matrix(p, d, rng, kStd);
    w.mask_embed = init_matrix(1, d, rng, kStd);
    for (std::int64_t l = 0; l < cfg.n_layers; ++l) {
        LayerWeights lw;
        lw.wq = init_matrix(d, d, rng, kStd);
        lw.wk = init_matrix(d, kv, rng, kStd);
        lw.wv = init_matrix(d, kv, rng, kStd);
        lw.wo = init_matrix(d, d, rng, kStd);
        lw.attn_gain = full({d}, 1.0, true);
        lw.ffn_gain = full({d}, 1.0, true);
        lw.w_gate = init_matrix(d, f, rng, kStd);
        lw.w_up = init_matrix(d, f, rng, kStd);
        lw.w_down = init_matrix(f, d, rng, kStd);
        w.layers.push_back(std::move(lw));
    }
    if (cfg.u_shape) {
        for (std::int64_t l = 0; l < cfg.n_layers / 2; ++l) {
            w.merge_shallow_w.push_back(init_matrix(2 * d, d, rng, kStd));
            w.merge_deep_w.push_back(init_matrix(2 * d, d, rng, kStd));
        }
    }
    for (std::int64_t k = 0; k < cfg.n_quantiles(); ++k) {
        w.head_w.push_back(init_matrix(d, p, rng, kStd));
        w.head_b.push_back(zeros({1, p}, true));
    }
    return w;
}

ModelWeights ModelWeights::zeros_like(const ModelConfig& cfg) {
    ModelWeights w = init(cfg, 0);
    for (auto& [name, t] : w.parameters()) {
        (void)name;
        std::fill(t->data.begin(), t->data.end(), 0.0);
    }
    return w;
}

std::vector<std::pair<std::string, TensorPtr>> ModelWeights::parameters() const {
    std::vector<std::pair<std::string, TensorPtr>> out;
    out.emplace_back("embed.patch", patch_embed);
    out.emplace_back("embed.mask", mask_embed);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        out.emplace_back(p + "attn.wq", layers[l].wq);
        out.emplace_back(p + "attn.wk", layers[l].wk);
        out.emplace_back(p + "attn.wv", layers[l].wv);
        out.emplace_back(p + "attn.wo", layers[l].wo);
        out.emplace_back(p + "attn.gain", layers[l].attn_gain);
        out.emplace_back(p + "ffn.gain", layers[l].ffn_gain);
        out.emplace_back(p + "ffn.gate", layers[l].w_gate);
        out.emplace_back(p + "ffn.up", layers[l].w_up);
        out.emplace_back(p + "ffn.down", layers[l].w_down);
    }
    for (std::size_t l = 0; l < merge_shallow_w.size(); ++l) {
        out.emplace_back("merge.shallow" + std::to_string(l), merge_shallow_w[l]);
    }
    for (std::size_t l = 0; l < merge_deep_w.size(); ++l) {
        out.emplace_back("merge.deep" + std::to_string(l), merge_deep_w[l]);
    }
    for (std::size_t k = 0; k < head_w.size(); ++k) {
        out.emplace_back("head" + std::to_string(k) + ".w", head_w[k]);
        out.emplace_back("head" + std::to_string(k) + ".b", head_b[k]);
    }
    return out;
}

std::int64_t ModelWeights::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : parameters()) {
        (void)name;
        n += t->numel();
    }
    return n;
}

TensorPtr embed(const MaskedSequence& seq, const ModelWeights& w) {
    const auto& cfg = w.cfg;
    if (seq.patch_len != cfg.patch_len) {
        throw std::invalid_argument("embed: sequence patch length does not match model");
    }
    const std::int64_t n = seq.n_tokens, p = seq.patch_len;
    const double denom = seq.sigma + cfg.eps_denorm;
    std::vector<double> norm(static_cast<std::size_t>(n * p));
    for (std::int64_t i = 0; i < n * p; ++i) {
        norm[static_cast<std::size_t>(i)] = (seq.tokens[static_cast<std::size_t>(i)] - seq.mu) / denom;
    }
    auto norm_tokens = tensor(std::move(norm), {n, p}, false);
    auto rows = matmul(norm_tokens, w.patch_embed);
    return mask_merge_rows(rows, w.mask_embed, seq.mask_idx);
}

TensorPtr attention_block(const TensorPtr& x, const LayerWeights& lw, const ModelConfig& cfg,
                          const std::vector<std::int64_t>& positions) {
    const std::int64_t dh = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    auto h = rms_norm(x, lw.attn_gain);
    auto q = matmul(h, lw.wq);
    auto k = matmul(h, lw.wk);
    auto v = matmul(h, lw.wv);

    // Rotate each kv head once; query heads in the same group share it.
    std::vector<TensorPtr> k_rot(static_cast<std::size_t>(cfg.n_kv_heads()));
    std::vector<TensorPtr> v_head(static_cast<std::size_t>(cfg.n_kv_heads()));
    for (std::int64_t j = 0; j < cfg.n_kv_heads(); ++j) {
        k_rot[static_cast<std::size_t>(j)] =
            rope_apply(slice_cols(k, j * dh, dh), positions, cfg.rope_base);
        v_head[static_cast<std::size_t>(j)] = slice_cols(v, j * dh, dh);
    }

    std::vector<TensorPtr> ctx;
    ctx.reserve(static_cast<std::size_t>(cfg.n_heads));
    for (std::int64_t i = 0; i < cfg.n_heads; ++i) {
        const std::int64_t j = i / cfg.query_group_size;
        auto qh = rope_apply(slice_cols(q, i * dh, dh), positions, cfg.rope_base);
        auto scores = affine(matmul(qh, transpose(k_rot[static_cast<std::size_t>(j)])), scale, 0.0);
        auto attn = softmax_lastdim(scores);  // full bidirectional, no causal mask
        ctx.push_back(matmul(attn, v_head[static_cast<std::size_t>(j)]));
    }
    auto attn_out = matmul(concat_cols(ctx), lw.wo);
    auto x1 = add(x, attn_out);
    auto ffn_out = swiglu_ffn(rms_norm(x1, lw.ffn_gain), lw.w_gate, lw.w_up, lw.w_down);
    return add(x1, ffn_out);
}

TensorPtr merge_shallow(const TensorPtr& x_out, const TensorPtr& f_c) {
    const std::int64_t n = x_out->dim(0);
    std::vector<std::int64_t> prev_idx(static_cast<std::size_t>(n));
    prev_idx[0] = 0;  // left boundary pairs with itself
    for (std::int64_t i = 1; i < n; ++i) prev_idx[static_cast<std::size_t>(i)] = i - 1;
    auto prev = gather_rows(x_out, prev_idx);
    return matmul(concat_cols({prev, x_out}), f_c);
}

TensorPtr merge_deep(const TensorPtr& x_out, const TensorPtr& skip, const TensorPtr& f_m) {
    if (x_out->shape != skip->shape) throw std::invalid_argument("merge_deep: skip shape mismatch");
    return matmul(concat_cols({x_out, skip}), f_m);
}

TensorPtr forward(const MaskedSequence& seq, const ModelWeights& w) {
    const auto& cfg = w.cfg;
    const auto positions = seq.positions();
    auto x = embed(seq, w);
    if (!cfg.u_shape) {
        for (const auto& lw : w.layers) x = attention_block(x, lw, cfg, positions);
        return x;
    }
    const std::int64_t half = cfg.n_layers / 2;
    std::vector<TensorPtr> shallow_out(static_cast<std::size_t>(half));
    for (std::int64_t l = 0; l < half; ++l) {
        x = attention_block(x, w.layers[static_cast<std::size_t>(l)], cfg, positions);
        shallow_out[static_cast<std::size_t>(l)] = x;
        x = merge_shallow(x, w.merge_shallow_w[static_cast<std::size_t>(l)]);
    }
    for (std::int64_t l = half; l < cfg.n_layers; ++l) {
        // Deep layer l+1 (1-based) pairs with shallow layer D-l (1-based).
        const std::int64_t partner = cfg.n_layers - (l + 1);  // 0-based shallow index
        x = merge_deep(x, shallow_out[static_cast<std::size_t>(partner)],
                       w.merge_deep_w[static_cast<std::size_t>(l - half)]);
        x = attention_block(x, w.layers[static_cast<std::size_t>(l)], cfg, positions);
    }
    return x;
}

QuantileForecast quantile_heads(const TensorPtr& hidden, const MaskedSequence& seq,
                                const ModelWeights& w) {
    if (seq.mask_idx.empty()) throw std::invalid_argument("quantile_heads: empty mask set");
    const auto& cfg = w.cfg;
    QuantileForecast fc;
    fc.levels = cfg.quantile_levels;
    fc.token_index = seq.mask_idx;
    fc.patch_len = cfg.patch_len;
    auto masked_hidden = gather_rows(hidden, seq.mask_idx);
    const double denorm_scale = seq.sigma + cfg.eps_denorm;
    for (std::int64_t k = 0; k < cfg.n_quantiles(); ++k) {
        auto raw = add_rowvec(matmul(masked_hidden, w.head_w[static_cast<std::size_t>(k)]),
                              w.head_b[static_cast<std::size_t>(k)]);
        fc.values.push_back(affine(raw, denorm_scale, seq.mu));
    }
    return fc;
}

std::vector<std::vector<double>> QuantileForecast::flat_values(bool sort_crossing) const {
    const std::int64_t r = static_cast<std::int64_t>(levels.size());
    const std::int64_t total = n_masked() * patch_len;
    std::vector<std::vector<double>> out(static_cast<std::size_t>(r));
    for (std::int64_t k = 0; k < r; ++k) out[static_cast<std::size_t>(k)] = values[static_cast<std::size_t>(k)]->data;
    if (sort_crossing) {
        std::vector<double> col(static_cast<std::size_t>(r));
        for (std::int64_t i = 0; i < total; ++i) {
            for (std::int64_t k = 0; k < r; ++k)
                col[static_cast<std::size_t>(k)] = out[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
            std::sort(col.begin(), col.end());
            for (std::int64_t k = 0; k < r; ++k)
                out[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] = col[static_cast<std::size_t>(k)];
        }
    }
    return out;
}

}  // namespace jts
