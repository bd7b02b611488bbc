#include "jts/tokenize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace jts {

bool MaskedSequence::is_masked(std::int64_t token) const {
    return std::binary_search(mask_idx.begin(), mask_idx.end(), token);
}

std::vector<std::int64_t> MaskedSequence::positions() const {
    std::vector<std::int64_t> p(static_cast<std::size_t>(n_tokens));
    for (std::int64_t i = 0; i < n_tokens; ++i) p[static_cast<std::size_t>(i)] = i;
    return p;
}

PatchGrid patchify(const Series& series, std::int64_t patch_len) {
    const std::int64_t t = series.length();
    if (t < 1) throw std::invalid_argument("patchify: empty series");
    if (patch_len < 1) throw std::invalid_argument("patchify: patch_len must be >= 1");
    PatchGrid g;
    g.patch_len = patch_len;
    g.n_tokens = (t + patch_len - 1) / patch_len;
    g.pad_count = g.n_tokens * patch_len - t;
    g.patches.resize(static_cast<std::size_t>(g.n_tokens * patch_len));
    const double first = series.values.front();
    for (std::int64_t i = 0; i < g.pad_count; ++i) g.patches[static_cast<std::size_t>(i)] = first;
    std::copy(series.values.begin(), series.values.end(), g.patches.begin() + g.pad_count);
    return g;
}

std::vector<double> unpatchify(const PatchGrid& grid) {
    return {grid.patches.begin() + grid.pad_count, grid.patches.end()};
}

std::pair<double, double> instance_stats(const std::vector<double>& tokens,
                                         std::int64_t patch_len, std::int64_t pad_count,
                                         const std::vector<std::int64_t>& mask_idx) {
    const std::int64_t n_tokens = static_cast<std::int64_t>(tokens.size()) / patch_len;
    double sum = 0.0, sumsq = 0.0;
    std::int64_t count = 0;
    std::size_t mpos = 0;
    for (std::int64_t tok = 0; tok < n_tokens; ++tok) {
        const bool masked = mpos < mask_idx.size() && mask_idx[mpos] == tok;
        if (masked) {
            ++mpos;
            continue;
        }
        const std::int64_t begin = tok == 0 ? pad_count : 0;
        for (std::int64_t s = begin; s < patch_len; ++s) {
            const double v = tokens[static_cast<std::size_t>(tok * patch_len + s)];
            sum += v;
            sumsq += v * v;
            ++count;
        }
    }
    if (count == 0) throw std::runtime_error("instance_stats: no observed values (empty context)");
    const double mu = sum / static_cast<double>(count);
    const double var = std::max(0.0, sumsq / static_cast<double>(count) - mu * mu);
    return {mu, std::sqrt(var)};
}

namespace {

MaskedSequence build_sequence(std::vector<double> tokens, std::int64_t patch_len,
                              std::int64_t pad_count, std::vector<std::int64_t> mask_idx) {
    MaskedSequence seq;
    seq.patch_len = patch_len;
    seq.n_tokens = static_cast<std::int64_t>(tokens.size()) / patch_len;
    seq.pad_count = pad_count;
    seq.mask_idx = std::move(mask_idx);
    std::sort(seq.mask_idx.begin(), seq.mask_idx.end());
    // Zero out masked rows; their content must not reach the model or stats.
    for (auto tok : seq.mask_idx) {
        std::fill(tokens.begin() + tok * patch_len, tokens.begin() + (tok + 1) * patch_len, 0.0);
    }
    seq.tokens = std::move(tokens);
    auto [mu, sigma] = instance_stats(seq.tokens, patch_len, pad_count, seq.mask_idx);
    seq.mu = mu;
    seq.sigma = sigma;
    return seq;
}

}  // namespace

MaskedSequence mask_random(const PatchGrid& grid, double rho, Rng& rng) {
    if (rho < 0.0 || rho >= 1.0) throw std::invalid_argument("mask_random: rho must be in [0,1)");
    const std::int64_t n = grid.n_tokens;
    const std::int64_t n_mask = static_cast<std::int64_t>(std::floor(rho * static_cast<double>(n)));
    if (rho > 0.0 && n_mask < 1) {
        throw std::invalid_argument("mask_random: rho * n_tokens must be >= 1 when rho > 0");
    }
    // Partial Fisher-Yates over token indices.
    std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    for (std::int64_t i = 0; i < n_mask; ++i) {
        const std::int64_t j =
            i + static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(n - i)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    idx.resize(static_cast<std::size_t>(n_mask));
    return build_sequence(grid.patches, grid.patch_len, grid.pad_count, std::move(idx));
}

MaskedSequence append_placeholders(const PatchGrid& grid, std::int64_t n_future) {
    if (n_future < 1) throw std::invalid_argument("append_placeholders: n_future must be >= 1");
    std::vector<double> tokens = grid.patches;
    tokens.resize(static_cast<std::size_t>((grid.n_tokens + n_future) * grid.patch_len), 0.0);
    std::vector<std::int64_t> mask_idx(static_cast<std::size_t>(n_future));
    for (std::int64_t i = 0; i < n_future; ++i) mask_idx[static_cast<std::size_t>(i)] = grid.n_tokens + i;
    return build_sequence(std::move(tokens), grid.patch_len, grid.pad_count, std::move(mask_idx));
}

}  // namespace jts
