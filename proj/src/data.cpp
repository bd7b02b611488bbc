#include "jts/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "jts/rng.hpp"

namespace jts {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_number(const std::string& cell, std::int64_t row, const std::string& col) {
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    while (first < last && *first == ' ') ++first;
    while (last > first && *(last - 1) == ' ') --last;
    double v = 0.0;
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last || first == last) {
        std::ostringstream msg;
        msg << "unparsable number '" << cell << "' in column '" << col << "' at row " << row;
        throw CsvError(CsvError::Kind::BadNumber, msg.str());
    }
    if (!std::isfinite(v)) {
        std::ostringstream msg;
        msg << "non-finite value in column '" << col << "' at row " << row;
        throw CsvError(CsvError::Kind::BadNumber, msg.str());
    }
    return v;
}

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

// Days since 1970-01-01 for a civil date.
std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (static_cast<unsigned>(m) + (m > 2 ? -3 : 9)) + 2) / 5 +
                         static_cast<unsigned>(d) - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

// Accepts integer epochs, YYYY-MM-DD, or YYYY-MM-DD[T ]HH:MM:SS.
std::int64_t parse_timestamp(const std::string& cell, std::int64_t row) {
    const std::string s = cell;
    {
        std::int64_t v = 0;
        auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec == std::errc{} && res.ptr == s.data() + s.size()) return v;
    }
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
    char sep = 0;
    int n = std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &sec);
    const bool date_only = (n == 3);
    const bool full = (n == 7 && (sep == 'T' || sep == ' '));
    if (!date_only && !full) {
        std::ostringstream msg;
        msg << "unparsable timestamp '" << cell << "' at row " << row;
        throw CsvError(CsvError::Kind::BadTimestamp, msg.str());
    }
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || sec > 60) {
        std::ostringstream msg;
        msg << "out-of-range timestamp '" << cell << "' at row " << row;
        throw CsvError(CsvError::Kind::BadTimestamp, msg.str());
    }
    (void)is_leap(y);
    return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + sec;
}

}  // namespace

Series gen_sine(std::int64_t n, double period, double amplitude, double trend_slope,
                double noise_std, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("gen_sine: n must be >= 1");
    if (period <= 0.0) throw std::invalid_argument("gen_sine: period must be positive");
    Rng rng(seed);
    Series s;
    s.name = "sine";
    s.values.resize(static_cast<std::size_t>(n));
    for (std::int64_t t = 0; t < n; ++t) {
        double v = amplitude * std::sin(kTwoPi * static_cast<double>(t) / period) +
                   trend_slope * static_cast<double>(t);
        if (noise_std > 0.0) v += noise_std * rng.normal();
        s.values[static_cast<std::size_t>(t)] = v;
    }
    return s;
}

Series gen_random_walk(std::int64_t n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("gen_random_walk: n must be >= 1");
    Rng rng(seed);
    Series s;
    s.name = "walk";
    s.values.resize(static_cast<std::size_t>(n));
    double x = 0.0;
    s.values[0] = x;
    for (std::int64_t t = 1; t < n; ++t) {
        x += static_cast<double>(rng.sign());
        s.values[static_cast<std::size_t>(t)] = x;
    }
    return s;
}

Series gen_two_period(std::int64_t n, double period_a, double period_b, double amp_a,
                      double amp_b, double noise_std, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("gen_two_period: n must be >= 1");
    Rng rng(seed);
    Series s;
    s.name = "two_period";
    s.values.resize(static_cast<std::size_t>(n));
    for (std::int64_t t = 0; t < n; ++t) {
        const double tt = static_cast<double>(t);
        double v = amp_a * std::sin(kTwoPi * tt / period_a) + amp_b * std::sin(kTwoPi * tt / period_b);
        if (noise_std > 0.0) v += noise_std * rng.normal();
        s.values[static_cast<std::size_t>(t)] = v;
    }
    return s;
}

std::vector<Series> load_csv(const std::string& path, const std::vector<std::string>& value_columns,
                             const std::string& timestamp_column) {
    std::ifstream in(path);
    if (!in) throw CsvError(CsvError::Kind::Io, "cannot open CSV file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw CsvError(CsvError::Kind::Io, "empty CSV file: " + path);
    const auto header = split_line(line);

    auto col_index = [&](const std::string& name) -> std::int64_t {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return static_cast<std::int64_t>(i);
        }
        throw CsvError(CsvError::Kind::MissingColumn, "missing column '" + name + "' in " + path);
    };

    std::vector<std::int64_t> value_idx;
    value_idx.reserve(value_columns.size());
    for (const auto& c : value_columns) value_idx.push_back(col_index(c));
    const std::int64_t ts_idx = timestamp_column.empty() ? -1 : col_index(timestamp_column);

    std::vector<Series> out(value_columns.size());
    for (std::size_t k = 0; k < value_columns.size(); ++k) out[k].name = value_columns[k];

    std::vector<std::int64_t> timestamps;
    std::int64_t row = 1;  // header is row 0
    while (std::getline(in, line)) {
        if (line.empty()) {
            ++row;
            continue;
        }
        const auto cells = split_line(line);
        if (cells.size() != header.size()) {
            std::ostringstream msg;
            msg << "row " << row << " has " << cells.size() << " cells, expected " << header.size();
            throw CsvError(CsvError::Kind::BadNumber, msg.str());
        }
        for (std::size_t k = 0; k < value_idx.size(); ++k) {
            out[k].values.push_back(
                parse_number(cells[static_cast<std::size_t>(value_idx[k])], row, value_columns[k]));
        }
        if (ts_idx >= 0) {
            const std::int64_t ts = parse_timestamp(cells[static_cast<std::size_t>(ts_idx)], row);
            if (!timestamps.empty() && ts <= timestamps.back()) {
                std::ostringstream msg;
                msg << "non-monotone timestamp at row " << row;
                throw CsvError(CsvError::Kind::NonMonotoneTimestamps, msg.str());
            }
            timestamps.push_back(ts);
        }
        ++row;
    }
    if (ts_idx >= 0) {
        for (auto& s : out) s.timestamps = timestamps;
    }
    return out;
}

void save_csv(const std::string& path, const std::vector<Series>& series, bool with_timestamps) {
    std::ofstream outf(path);
    if (!outf) throw CsvError(CsvError::Kind::Io, "cannot write CSV file: " + path);
    outf.precision(17);
    if (with_timestamps) outf << "timestamp,";
    for (std::size_t k = 0; k < series.size(); ++k) {
        outf << (series[k].name.empty() ? "value" + std::to_string(k) : series[k].name);
        outf << (k + 1 == series.size() ? '\n' : ',');
    }
    std::size_t n = series.empty() ? 0 : series[0].values.size();
    for (std::size_t t = 0; t < n; ++t) {
        if (with_timestamps) {
            outf << (series[0].timestamps.empty() ? static_cast<std::int64_t>(t)
                                                  : series[0].timestamps[t])
                 << ',';
        }
        for (std::size_t k = 0; k < series.size(); ++k) {
            outf << series[k].values[t] << (k + 1 == series.size() ? '\n' : ',');
        }
    }
}

std::vector<EvalWindow> split_windows(const Series& s, std::int64_t lookback, std::int64_t horizon,
                                      std::int64_t stride, std::int64_t seasonality) {
    if (lookback < 1 || horizon < 1 || stride < 1) {
        throw std::invalid_argument("split_windows: lookback, horizon, stride must be positive");
    }
    const std::int64_t total = s.length();
    if (lookback + horizon > total) {
        throw std::invalid_argument("split_windows: series too short for lookback+horizon");
    }
    std::vector<EvalWindow> out;
    for (std::int64_t start = 0; start + lookback + horizon <= total; start += stride) {
        EvalWindow w;
        w.seasonality = seasonality;
        w.insample.assign(s.values.begin() + start, s.values.begin() + start + lookback);
        w.actual.assign(s.values.begin() + start + lookback,
                        s.values.begin() + start + lookback + horizon);
        out.push_back(std::move(w));
    }
    return out;
}

std::pair<Series, Series> holdout_split(const Series& s, std::int64_t eval_points) {
    if (eval_points < 1 || eval_points >= s.length()) {
        throw std::invalid_argument("holdout_split: eval_points out of range");
    }
    Series train = s, eval = s;
    const std::int64_t cut = s.length() - eval_points;
    train.values.assign(s.values.begin(), s.values.begin() + cut);
    eval.values.assign(s.values.begin() + cut, s.values.end());
    if (!s.timestamps.empty()) {
        train.timestamps.assign(s.timestamps.begin(), s.timestamps.begin() + cut);
        eval.timestamps.assign(s.timestamps.begin() + cut, s.timestamps.end());
    }
    return {train, eval};
}

}  // namespace jts
