#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "jts/data.hpp"
#include "jts/infer.hpp"
#include "jts/train.hpp"

namespace jts {

double mse(const std::vector<double>& forecast, const std::vector<double>& actual);
double mae(const std::vector<double>& forecast, const std::vector<double>& actual);

// Appendix-style MASE: ((m - s) / n) * sum|err| / sum_{t=1..m-s}|x_t - x_{t+s}|.
double mase(const std::vector<double>& forecast, const EvalWindow& window);

// 2 * sum pinball(q_t, x_t) / sum |x_t| for one quantile level.
double wql_metric(const std::vector<double>& quantile_track, const std::vector<double>& actual,
                  double alpha);

// Mean of WQL over the nine deciles 0.1..0.9; level set must be exactly that.
double crps_approx(const HorizonForecast& fc, const std::vector<double>& actual);

struct BenchProtocol {
    std::int64_t lookback = 256;   // insample length per window
    std::int64_t horizon = 64;
    std::int64_t stride = 64;
    std::int64_t seasonality = 1;
    std::vector<std::int64_t> dcot_grid = {0};
    std::vector<std::vector<std::int64_t>> lookback_grids = {{256}};  // ensemble configs
    std::int64_t max_windows = 0;  // 0 = all
    std::uint64_t seed = 0;
    bool geometric_aggregate = false;
};

struct BenchCell {
    std::string dataset;
    std::int64_t dcot_points = 0;
    std::vector<std::int64_t> lookbacks;
    std::int64_t n_windows = 0;
    double mse = 0.0;
    double mae = 0.0;
    double mase = 0.0;
    std::vector<double> wql;  // one per quantile level
    double crps = 0.0;
};

struct BenchWindowRow {
    std::string dataset;
    std::int64_t window_index = 0;
    std::int64_t dcot_points = 0;
    std::vector<std::int64_t> lookbacks;
    double mse = 0.0;
    double mae = 0.0;
    double mase = 0.0;
    double crps = 0.0;
};

struct BenchReport {
    BenchProtocol protocol;
    std::vector<double> quantile_levels;
    std::vector<BenchWindowRow> windows;
    std::vector<BenchCell> cells;  // aggregates per (dataset, dcot, lookback set)
    // Cross-dataset aggregates per (dcot, lookback set); populated when more
    // than one dataset is evaluated.
    std::vector<BenchCell> overall;
};

BenchReport run_benchmark(const ModelWeights& weights, const std::vector<Series>& datasets,
                          const BenchProtocol& protocol);

void write_report_json(const BenchReport& report, const std::string& path);
void write_report_csv(const BenchReport& report, const std::string& path);

}  // namespace jts
