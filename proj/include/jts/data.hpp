#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace jts {

struct Series {
    std::vector<double> values;
    std::vector<std::int64_t> timestamps;  // empty when absent; strictly increasing otherwise
    std::string name;
    std::string frequency;

    std::int64_t length() const { return static_cast<std::int64_t>(values.size()); }
};

// One evaluation slice: lookback context, ground-truth horizon, and the
// seasonality used by scaled metrics.
struct EvalWindow {
    std::vector<double> insample;
    std::vector<double> actual;
    std::int64_t seasonality = 1;
};

// CSV row/column errors carry the offending location.
class CsvError : public std::runtime_error {
public:
    enum class Kind { MissingColumn, BadNumber, BadTimestamp, NonMonotoneTimestamps, Io };
    CsvError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
    Kind kind;
};

Series gen_sine(std::int64_t n, double period, double amplitude, double trend_slope,
                double noise_std, std::uint64_t seed);
Series gen_random_walk(std::int64_t n, std::uint64_t seed);

// Two sinusoids with different periods plus optional noise; used by the
// benchmark experiments.
Series gen_two_period(std::int64_t n, double period_a, double period_b, double amp_a,
                      double amp_b, double noise_std, std::uint64_t seed);

std::vector<Series> load_csv(const std::string& path, const std::vector<std::string>& value_columns,
                             const std::string& timestamp_column = "");

void save_csv(const std::string& path, const std::vector<Series>& series,
              bool with_timestamps = false);

std::vector<EvalWindow> split_windows(const Series& s, std::int64_t lookback, std::int64_t horizon,
                                      std::int64_t stride, std::int64_t seasonality = 1);

// Reserves the final eval_points observations for evaluation; everything
// before the boundary is training data.
std::pair<Series, Series> holdout_split(const Series& s, std::int64_t eval_points);

}  // namespace jts
