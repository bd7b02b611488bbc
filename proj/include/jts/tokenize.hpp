#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "jts/data.hpp"
#include "jts/rng.hpp"

namespace jts {

// Patched view of one series: n_tokens x patch_len, row-major. A short
// leading patch is padded on the left with the first observed value.
struct PatchGrid {
    std::vector<double> patches;
    std::int64_t patch_len = 0;
    std::int64_t n_tokens = 0;
    std::int64_t pad_count = 0;

    double at(std::int64_t token, std::int64_t s) const {
        return patches[static_cast<std::size_t>(token * patch_len + s)];
    }
};

// Token matrix fed to the model. Masked rows hold zeros; the learned mask
// embedding replaces them at embed time. mu/sigma are computed over observed
// unpadded values only.
struct MaskedSequence {
    std::vector<double> tokens;
    std::int64_t patch_len = 0;
    std::int64_t n_tokens = 0;
    std::int64_t pad_count = 0;
    std::vector<std::int64_t> mask_idx;  // sorted, unique
    double mu = 0.0;
    double sigma = 0.0;

    bool is_masked(std::int64_t token) const;
    std::vector<std::int64_t> positions() const;
};

PatchGrid patchify(const Series& series, std::int64_t patch_len);

// Masks exactly floor(rho * n_tokens) tokens, drawn uniformly without
// replacement. rho in [0,1); rho > 0 requires rho * n_tokens >= 1.
MaskedSequence mask_random(const PatchGrid& grid, double rho, Rng& rng);

// Extends the grid with n_future all-masked placeholder tokens.
MaskedSequence append_placeholders(const PatchGrid& grid, std::int64_t n_future);

// Mean and population standard deviation over observed unpadded values.
std::pair<double, double> instance_stats(const std::vector<double>& tokens,
                                         std::int64_t patch_len, std::int64_t pad_count,
                                         const std::vector<std::int64_t>& mask_idx);

// Inverse of patchify, dropping synthetic pad values.
std::vector<double> unpatchify(const PatchGrid& grid);

}  // namespace jts
