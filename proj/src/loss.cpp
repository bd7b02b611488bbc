#include "jts/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace jts {

double pinball(double q, double x, double alpha) {
    if (alpha <= 0.0 || alpha >= 1.0) throw std::invalid_argument("pinball: alpha must be in (0,1)");
    return x >= q ? (x - q) * alpha : (q - x) * (1.0 - alpha);
}

double wql_weight(double alpha, double patch_abs_sum, double floor) {
    if (patch_abs_sum < 0.0) throw std::invalid_argument("wql_weight: negative abs sum");
    if (floor <= 0.0) throw std::invalid_argument("wql_weight: floor must be positive");
    return 1.0 / (std::sqrt(alpha * (1.0 - alpha)) * std::max(patch_abs_sum, floor));
}

LossReport wql_loss(const QuantileForecast& forecast, const std::vector<double>& targets,
                    double floor) {
    const std::int64_t m = forecast.n_masked();
    const std::int64_t p = forecast.patch_len;
    const std::int64_t r = static_cast<std::int64_t>(forecast.levels.size());
    if (m == 0) throw std::invalid_argument("wql_loss: empty mask set, no training signal");
    if (static_cast<std::int64_t>(targets.size()) != m * p) {
        throw std::invalid_argument("wql_loss: targets do not align with forecast tokens");
    }

    std::vector<double> patch_weight_base(static_cast<std::size_t>(m));
    for (std::int64_t i = 0; i < m; ++i) {
        double abs_sum = 0.0;
        for (std::int64_t s = 0; s < p; ++s) abs_sum += std::fabs(targets[static_cast<std::size_t>(i * p + s)]);
        patch_weight_base[static_cast<std::size_t>(i)] = abs_sum;
    }

    LossReport report;
    report.per_quantile.assign(static_cast<std::size_t>(r), 0.0);
    report.n_terms = m * r * p;

    // Per-level weights and per-element pinball slopes for the custom node.
    std::vector<std::vector<double>> slopes(static_cast<std::size_t>(r));
    double total = 0.0;
    for (std::int64_t k = 0; k < r; ++k) {
        const double alpha = forecast.levels[static_cast<std::size_t>(k)];
        const auto& q = forecast.values[static_cast<std::size_t>(k)]->data;
        auto& slope = slopes[static_cast<std::size_t>(k)];
        slope.resize(static_cast<std::size_t>(m * p));
        double level_sum = 0.0;
        for (std::int64_t i = 0; i < m; ++i) {
            const double w = wql_weight(alpha, patch_weight_base[static_cast<std::size_t>(i)], floor);
            for (std::int64_t s = 0; s < p; ++s) {
                const std::size_t idx = static_cast<std::size_t>(i * p + s);
                const double x = targets[idx];
                level_sum += w * pinball(q[idx], x, alpha);
                // Subgradient at the kink takes the (1-alpha) branch.
                slope[idx] = w * (x > q[idx] ? -alpha : (1.0 - alpha));
            }
        }
        report.per_quantile[static_cast<std::size_t>(k)] = level_sum;
        total += level_sum;
    }
    report.total = total;

    std::vector<TensorPtr> parents(forecast.values.begin(), forecast.values.end());
    report.total_node = make_op(
        {total}, {1}, std::move(parents),
        [slopes = std::move(slopes)](Tensor& self) {
            const double g = self.grad[0];
            for (std::size_t k = 0; k < self.parents.size(); ++k) {
                auto& parent = self.parents[k];
                if (!parent->requires_grad) continue;
                const auto& slope = slopes[k];
                for (std::size_t i = 0; i < slope.size(); ++i) parent->grad[i] += g * slope[i];
            }
        });
    return report;
}

}  // namespace jts
