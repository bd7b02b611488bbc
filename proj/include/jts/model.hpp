#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "jts/numcore.hpp"
#include "jts/tokenize.hpp"

namespace jts {

struct ModelConfig {
    std::int64_t n_layers = 4;  // even
    std::int64_t n_heads = 4;
    std::int64_t embed_dim = 64;
    std::int64_t ffn_dim = 256;
    std::int64_t patch_len = 16;
    std::vector<double> quantile_levels = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    double rope_base = 10000.0;
    double eps_denorm = 1e-3;
    bool u_shape = true;
    double mask_ratio_default = 0.2;
    std::int64_t query_group_size = 1;  // query heads sharing one kv head

    std::int64_t head_dim() const { return embed_dim / n_heads; }
    std::int64_t n_kv_heads() const { return n_heads / query_group_size; }
    std::int64_t n_quantiles() const { return static_cast<std::int64_t>(quantile_levels.size()); }
    std::int64_t median_index() const;
    void validate() const;
};

struct LayerWeights {
    TensorPtr wq, wk, wv, wo;          // d x d, d x kv, d x kv, d x d
    TensorPtr attn_gain, ffn_gain;     // pre-norm gains, length d
    TensorPtr w_gate, w_up, w_down;    // d x f, d x f, f x d
};

struct ModelWeights {
    ModelConfig cfg;
    TensorPtr patch_embed;  // P x d
    TensorPtr mask_embed;   // 1 x d
    std::vector<LayerWeights> layers;
    std::vector<TensorPtr> merge_shallow_w;  // 2d x d, one per shallow layer (u_shape)
    std::vector<TensorPtr> merge_deep_w;     // 2d x d, one per deep layer (u_shape)
    std::vector<TensorPtr> head_w;           // d x P per quantile level
    std::vector<TensorPtr> head_b;           // 1 x P per quantile level

    // Stable iteration order used by the optimizer and checkpoints.
    std::vector<std::pair<std::string, TensorPtr>> parameters() const;
    std::int64_t parameter_count() const;

    static ModelWeights init(const ModelConfig& cfg, std::uint64_t seed);
    static ModelWeights zeros_like(const ModelConfig& cfg);
};

// Per-token per-level quantile predictions for the masked tokens, on the
// original value scale. Values stay attached to the autodiff graph so the
// training loss can backpropagate through them.
struct QuantileForecast {
    std::vector<double> levels;
    std::vector<std::int64_t> token_index;  // the mask indices, ascending
    std::int64_t patch_len = 0;
    std::vector<TensorPtr> values;  // one (n_masked x P) tensor per level

    std::int64_t n_masked() const { return static_cast<std::int64_t>(token_index.size()); }
    double value(std::int64_t level, std::int64_t token, std::int64_t s) const {
        return values[static_cast<std::size_t>(level)]->at(token, s);
    }
    // Flattened per-level point series (n_masked * P values per level),
    // optionally made non-crossing by sorting levels at each position.
    std::vector<std::vector<double>> flat_values(bool sort_crossing) const;
};

TensorPtr embed(const MaskedSequence& seq, const ModelWeights& w);
TensorPtr attention_block(const TensorPtr& x, const LayerWeights& lw, const ModelConfig& cfg,
                          const std::vector<std::int64_t>& positions);
TensorPtr merge_shallow(const TensorPtr& x_out, const TensorPtr& f_c);
TensorPtr merge_deep(const TensorPtr& x_out, const TensorPtr& skip, const TensorPtr& f_m);
TensorPtr forward(const MaskedSequence& seq, const ModelWeights& w);
QuantileForecast quantile_heads(const TensorPtr& hidden, const MaskedSequence& seq,
                                const ModelWeights& w);

}  // namespace jts
