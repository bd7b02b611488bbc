#pragma once

#include <cstdint>
#include <vector>

#include "jts/model.hpp"
#include "jts/numcore.hpp"

namespace jts {

struct LossReport {
    double total = 0.0;
    std::vector<double> per_quantile;  // weighted contribution per level
    std::int64_t n_terms = 0;
    TensorPtr total_node;  // scalar graph node for backpropagation
};

// Standard alpha-quantile (pinball) loss.
double pinball(double q, double x, double alpha);

// Per-(level, patch) weight 1 / (sqrt(alpha(1-alpha)) * max(sum|x|, floor)).
double wql_weight(double alpha, double patch_abs_sum, double floor = 1e-8);

// Weighted quantile loss over masked tokens, on the original value scale.
// targets holds the ground-truth patches for the masked tokens, row-major
// (n_masked x patch_len), aligned with forecast.token_index.
LossReport wql_loss(const QuantileForecast& forecast, const std::vector<double>& targets,
                    double floor = 1e-8);

}  // namespace jts
