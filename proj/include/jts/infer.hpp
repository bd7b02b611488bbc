#pragma once

#include <cstdint>
#include <vector>

#include "jts/data.hpp"
#include "jts/model.hpp"

namespace jts {

// Per-point quantile forecast over a fixed horizon, original value scale.
// values[k][t] is the level-k quantile of point t.
struct HorizonForecast {
    std::vector<double> levels;
    std::vector<std::vector<double>> values;

    std::int64_t horizon() const {
        return values.empty() ? 0 : static_cast<std::int64_t>(values[0].size());
    }
    const std::vector<double>& at_level(double alpha) const;
    const std::vector<double>& median() const { return at_level(0.5); }
};

// Joint forecast with delayed chain-of-thought scratch tokens: appends
// ceil((horizon + dcot_points) / P) placeholders, runs one forward pass, and
// keeps only the first `horizon` points. The extra tokens participate in
// attention and are then discarded.
HorizonForecast forecast_dcot(const ModelWeights& w, const Series& history, std::int64_t horizon,
                              std::int64_t dcot_points, bool sort_crossing = true);

// The alpha-quantile of -X is the negated (1-alpha)-quantile of X. Requires a
// level set symmetric about 0.5.
HorizonForecast quantile_negate(const HorizonForecast& fc);

struct EnsembleResult {
    std::vector<double> point;                        // mean of all components
    std::vector<std::vector<double>> components;      // the 2k component point forecasts
    HorizonForecast quantiles;                        // per-level ensemble average
};

// Sign-mirrored multi-lookback ensemble: mean over lookbacks of
// [Model(x_suffix) - Model(-x_suffix)] / 2, evaluated on median forecasts.
EnsembleResult mirror_ensemble_detail(const ModelWeights& w, const Series& history,
                                      const std::vector<std::int64_t>& lookbacks,
                                      std::int64_t horizon, std::int64_t dcot_points = 0);

std::vector<double> mirror_ensemble(const ModelWeights& w, const Series& history,
                                    const std::vector<std::int64_t>& lookbacks,
                                    std::int64_t horizon, std::int64_t dcot_points = 0);

}  // namespace jts
