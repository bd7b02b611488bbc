#include "jts/infer.hpp"

#include <cmath>
#include <stdexcept>

#include "jts/tokenize.hpp"

namespace jts {

const std::vector<double>& HorizonForecast::at_level(double alpha) const {
    for (std::size_t k = 0; k < levels.size(); ++k) {
        if (std::fabs(levels[k] - alpha) < 1e-9) return values[k];
    }
    throw std::invalid_argument("HorizonForecast: level not present");
}

HorizonForecast forecast_dcot(const ModelWeights& w, const Series& history, std::int64_t horizon,
                              std::int64_t dcot_points, bool sort_crossing) {
    if (horizon < 1) throw std::invalid_argument("forecast_dcot: horizon must be >= 1");
    if (dcot_points < 0) throw std::invalid_argument("forecast_dcot: dcot_points must be >= 0");
    const std::int64_t p = w.cfg.patch_len;
    if (history.length() < p) {
        throw std::invalid_argument("forecast_dcot: history shorter than one patch");
    }
    const std::int64_t n_future = (horizon + dcot_points + p - 1) / p;

    NoGradGuard no_grad;
    const PatchGrid grid = patchify(history, p);
    const MaskedSequence seq = append_placeholders(grid, n_future);
    const auto hidden = forward(seq, w);
    const auto fc = quantile_heads(hidden, seq, w);
    const auto flat = fc.flat_values(sort_crossing);

    HorizonForecast out;
    out.levels = fc.levels;
    out.values.resize(flat.size());
    for (std::size_t k = 0; k < flat.size(); ++k) {
        out.values[k].assign(flat[k].begin(), flat[k].begin() + horizon);
    }
    return out;
}

HorizonForecast quantile_negate(const HorizonForecast& fc) {
    const std::size_t r = fc.levels.size();
    for (std::size_t k = 0; k < r; ++k) {
        if (std::fabs(fc.levels[k] + fc.levels[r - 1 - k] - 1.0) > 1e-9) {
            throw std::invalid_argument("quantile_negate: level set not symmetric about 0.5");
        }
    }
    HorizonForecast out;
    out.levels = fc.levels;
    out.values.resize(r);
    for (std::size_t k = 0; k < r; ++k) {
        const auto& src = fc.values[r - 1 - k];
        auto& dst = out.values[k];
        dst.resize(src.size());
        for (std::size_t t = 0; t < src.size(); ++t) dst[t] = -src[t];
    }
    return out;
}

EnsembleResult mirror_ensemble_detail(const ModelWeights& w, const Series& history,
                                      const std::vector<std::int64_t>& lookbacks,
                                      std::int64_t horizon, std::int64_t dcot_points) {
    if (lookbacks.empty()) throw std::invalid_argument("mirror_ensemble: need at least one lookback");
    for (auto lb : lookbacks) {
        if (lb < 1 || lb > history.length()) {
            throw std::invalid_argument("mirror_ensemble: lookback exceeds history length");
        }
    }
    const std::size_t r = w.cfg.quantile_levels.size();
    EnsembleResult res;
    res.quantiles.levels = w.cfg.quantile_levels;
    res.quantiles.values.assign(r, std::vector<double>(static_cast<std::size_t>(horizon), 0.0));

    for (auto lb : lookbacks) {
        Series suffix;
        suffix.values.assign(history.values.end() - lb, history.values.end());
        Series suffix_neg = suffix;
        for (auto& v : suffix_neg.values) v = -v;

        const HorizonForecast pos = forecast_dcot(w, suffix, horizon, dcot_points);
        const HorizonForecast neg = quantile_negate(forecast_dcot(w, suffix_neg, horizon, dcot_points));

        res.components.push_back(pos.median());
        res.components.push_back(neg.median());
        for (std::size_t k = 0; k < r; ++k) {
            for (std::int64_t t = 0; t < horizon; ++t) {
                res.quantiles.values[k][static_cast<std::size_t>(t)] +=
                    pos.values[k][static_cast<std::size_t>(t)] + neg.values[k][static_cast<std::size_t>(t)];
            }
        }
    }

    const double inv = 1.0 / static_cast<double>(res.components.size());
    for (auto& level : res.quantiles.values) {
        for (auto& v : level) v *= inv;
    }
    res.point.assign(static_cast<std::size_t>(horizon), 0.0);
    for (const auto& comp : res.components) {
        for (std::int64_t t = 0; t < horizon; ++t) res.point[static_cast<std::size_t>(t)] += comp[static_cast<std::size_t>(t)];
    }
    for (auto& v : res.point) v *= inv;
    return res;
}

std::vector<double> mirror_ensemble(const ModelWeights& w, const Series& history,
                                    const std::vector<std::int64_t>& lookbacks,
                                    std::int64_t horizon, std::int64_t dcot_points) {
    return mirror_ensemble_detail(w, history, lookbacks, horizon, dcot_points).point;
}

}  // namespace jts
