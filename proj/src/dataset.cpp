#include "chartcast/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "chartcast/rng.hpp"

namespace chartcast {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
        s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
        s.remove_suffix(1);
    return s;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            cells.emplace_back(trim(std::string_view(line).substr(start)));
            break;
        }
        cells.emplace_back(
            trim(std::string_view(line).substr(start, pos - start)));
        start = pos + 1;
    }
    return cells;
}

std::optional<double> parse_number(std::string_view cell) {
    if (cell.empty()) return std::nullopt;
    if (cell.front() == '+') cell.remove_prefix(1);  // from_chars rejects '+'
    if (cell.empty()) return std::nullopt;
    double value = 0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) return std::nullopt;
    if (!std::isfinite(value)) return std::nullopt;
    return value;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

}  // namespace

RawSeries load_csv(const std::string& path, bool has_header,
                   std::optional<std::size_t> date_column,
                   std::size_t seasonal_period) {
    const std::vector<std::string> lines = read_lines(path);
    RawSeries series;
    series.name = path;
    series.seasonal_period = seasonal_period;

    std::size_t expected_cells = 0;
    for (std::size_t li = 0; li < lines.size(); ++li) {
        if (lines[li].empty()) continue;
        const bool is_header = has_header && series.length == 0 &&
                               expected_cells == 0;
        std::vector<std::string> cells = split_line(lines[li]);
        if (expected_cells == 0) {
            expected_cells = cells.size();
        } else if (cells.size() != expected_cells) {
            throw std::runtime_error(
                path + ": ragged row at line " + std::to_string(li + 1) +
                ", expected " + std::to_string(expected_cells) + " cells, got " +
                std::to_string(cells.size()));
        }
        if (is_header) continue;

        if (date_column && *date_column >= cells.size()) {
            throw std::runtime_error(path + ": date column index " +
                                     std::to_string(*date_column) +
                                     " out of range at line " +
                                     std::to_string(li + 1));
        }
        std::vector<double> row;
        row.reserve(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (date_column && c == *date_column) {
                series.timestamps.push_back(cells[c]);
                continue;
            }
            auto v = parse_number(cells[c]);
            if (!v) {
                throw std::runtime_error(
                    path + ": non-numeric cell at (row " +
                    std::to_string(li + 1) + ", col " + std::to_string(c + 1) +
                    "): \"" + cells[c] + "\"");
            }
            row.push_back(*v);
        }
        if (series.channels == 0) {
            series.channels = row.size();
            if (series.channels == 0) {
                throw std::runtime_error(path + ": no numeric columns");
            }
        }
        series.values.insert(series.values.end(), row.begin(), row.end());
        ++series.length;
    }
    if (series.length < 2) {
        throw std::runtime_error(path + ": need at least 2 data rows, got " +
                                 std::to_string(series.length));
    }
    for (std::size_t t = 1; t < series.timestamps.size(); ++t) {
        if (!(series.timestamps[t - 1] < series.timestamps[t])) {
            throw std::runtime_error(path + ": timestamps not strictly increasing near row " +
                                     std::to_string(t + 1));
        }
    }
    return series;
}

std::vector<RawSeries> load_m4_csv(const std::string& path, bool has_header,
                                   std::size_t seasonal_period) {
    const std::vector<std::string> lines = read_lines(path);
    std::vector<RawSeries> out;
    bool header_pending = has_header;
    for (std::size_t li = 0; li < lines.size(); ++li) {
        if (lines[li].empty()) continue;
        if (header_pending) {
            header_pending = false;
            continue;
        }
        std::vector<std::string> cells = split_line(lines[li]);
        while (!cells.empty() && cells.back().empty()) cells.pop_back();
        if (cells.size() < 3) {
            throw std::runtime_error(path + ": line " + std::to_string(li + 1) +
                                     ": need an id and at least 2 values");
        }
        RawSeries s;
        s.name = cells[0];
        s.channels = 1;
        s.seasonal_period = seasonal_period;
        for (std::size_t c = 1; c < cells.size(); ++c) {
            auto v = parse_number(cells[c]);
            if (!v) {
                throw std::runtime_error(
                    path + ": non-numeric cell at (row " +
                    std::to_string(li + 1) + ", col " + std::to_string(c + 1) +
                    "): \"" + cells[c] + "\"");
            }
            s.values.push_back(*v);
        }
        s.length = s.values.size();
        out.push_back(std::move(s));
    }
    if (out.empty()) {
        throw std::runtime_error(path + ": no series found");
    }
    return out;
}

std::vector<SeriesWindow> make_windows(const RawSeries& series,
                                       std::size_t lookback,
                                       std::size_t horizon, std::size_t stride,
                                       std::size_t range_begin,
                                       std::size_t range_end) {
    if (lookback < 1 || horizon < 1 || stride < 1) {
        throw std::invalid_argument("make_windows: lookback, horizon and stride must be >= 1");
    }
    range_end = std::min(range_end, series.length);
    if (range_begin > range_end) {
        throw std::invalid_argument("make_windows: bad range");
    }
    const std::size_t len = range_end - range_begin;
    const std::size_t need = lookback + horizon;
    if (len < need) {
        throw std::invalid_argument(
            "make_windows: range of " + std::to_string(len) +
            " steps cannot fit lookback+horizon=" + std::to_string(need));
    }
    std::vector<SeriesWindow> windows;
    windows.reserve((len - need) / stride + 1);
    const std::size_t n = series.channels;
    for (std::size_t s = range_begin; s + need <= range_end; s += stride) {
        SeriesWindow w;
        w.lookback = lookback;
        w.horizon = horizon;
        w.channels = n;
        w.start = s;
        w.x.assign(series.values.begin() + static_cast<std::ptrdiff_t>(s * n),
                   series.values.begin() +
                       static_cast<std::ptrdiff_t>((s + lookback) * n));
        w.y.assign(series.values.begin() +
                       static_cast<std::ptrdiff_t>((s + lookback) * n),
                   series.values.begin() +
                       static_cast<std::ptrdiff_t>((s + need) * n));
        windows.push_back(std::move(w));
    }
    return windows;
}

void instance_normalize(SeriesWindow& window, double std_floor) {
    if (window.normalized) {
        throw std::logic_error("instance_normalize: window already normalized");
    }
    const std::size_t t_len = window.lookback, n = window.channels;
    window.norm_mean.assign(n, 0.0);
    window.norm_std.assign(n, 0.0);
    for (std::size_t c = 0; c < n; ++c) {
        double mean = 0;
        for (std::size_t t = 0; t < t_len; ++t) mean += window.x[t * n + c];
        mean /= static_cast<double>(t_len);
        double var = 0;
        for (std::size_t t = 0; t < t_len; ++t) {
            const double d = window.x[t * n + c] - mean;
            var += d * d;
        }
        var /= static_cast<double>(t_len);
        const double sd = std::max(std::sqrt(var), std_floor);
        window.norm_mean[c] = mean;
        window.norm_std[c] = sd;
        for (std::size_t t = 0; t < t_len; ++t) {
            window.x[t * n + c] = (window.x[t * n + c] - mean) / sd;
        }
    }
    window.normalized = true;
}

std::vector<double> denormalize(const SeriesWindow& window,
                                const std::vector<double>& values) {
    if (!window.normalized) {
        throw std::logic_error("denormalize: window has no statistics");
    }
    const std::size_t n = window.channels;
    if (values.size() % n != 0) {
        throw std::invalid_argument("denormalize: value count " +
                                    std::to_string(values.size()) +
                                    " not divisible by channels " +
                                    std::to_string(n));
    }
    std::vector<double> out(values.size());
    const std::size_t rows = values.size() / n;
    for (std::size_t t = 0; t < rows; ++t) {
        for (std::size_t c = 0; c < n; ++c) {
            out[t * n + c] =
                values[t * n + c] * window.norm_std[c] + window.norm_mean[c];
        }
    }
    return out;
}

SplitRanges chronological_split(const RawSeries& series, const SplitSpec& spec,
                                std::size_t lookback, std::size_t horizon) {
    const double sum =
        spec.train_fraction + spec.val_fraction + spec.test_fraction;
    if (spec.train_fraction < 0 || spec.val_fraction < 0 ||
        spec.test_fraction < 0 || std::abs(sum - 1.0) > 1e-9) {
        throw std::invalid_argument(
            "chronological_split: fractions must be nonnegative and sum to 1");
    }
    if (!(spec.few_shot_fraction > 0.0) || spec.few_shot_fraction > 1.0) {
        throw std::invalid_argument(
            "chronological_split: few_shot_fraction must be in (0, 1]");
    }
    const std::size_t len = series.length;
    SplitRanges r;
    r.train_begin = 0;
    r.train_end = static_cast<std::size_t>(
        std::floor(spec.train_fraction * static_cast<double>(len)));
    r.val_begin = r.train_end;
    r.val_end = r.val_begin + static_cast<std::size_t>(std::floor(
                                  spec.val_fraction * static_cast<double>(len)));
    r.test_begin = r.val_end;
    r.test_end = len;

    if (spec.few_shot_fraction < 1.0) {
        const std::size_t train_len = r.train_end - r.train_begin;
        const std::size_t keep = static_cast<std::size_t>(std::floor(
            spec.few_shot_fraction * static_cast<double>(train_len)));
        r.train_begin = r.train_end - keep;
    }

    const std::size_t need = lookback + horizon;
    auto check = [&](const char* which, std::size_t b, std::size_t e) {
        if (e - b < need) {
            throw std::invalid_argument(
                std::string("chronological_split: ") + which + " split of " +
                std::to_string(e - b) + " steps cannot fit a window of " +
                std::to_string(need) + " steps");
        }
    };
    check("train", r.train_begin, r.train_end);
    check("val", r.val_begin, r.val_end);
    check("test", r.test_begin, r.test_end);
    return r;
}

RawSeries synth_multisine(std::size_t channels, std::size_t length,
                          std::uint64_t seed, double noise_std) {
    if (channels < 1 || length < 2) {
        throw std::invalid_argument("synth_multisine: need channels >= 1, length >= 2");
    }
    RawSeries s;
    s.name = "synth";
    s.channels = channels;
    s.length = length;
    s.seasonal_period = 24;
    s.values.resize(length * channels);
    Rng rng(seed);
    const double two_pi = 6.283185307179586476925286766559;
    struct Component {
        double amp, period, phase;
    };
    std::vector<std::vector<Component>> comps(channels);
    for (std::size_t c = 0; c < channels; ++c) {
        // periods deliberately incommensurate across components and channels
        comps[c] = {
            {rng.uniform(0.8, 1.2), 24.0 * (1.0 + 0.13 * static_cast<double>(c)),
             rng.uniform(0.0, two_pi)},
            {rng.uniform(0.3, 0.6), 73.31 + 11.7 * static_cast<double>(c),
             rng.uniform(0.0, two_pi)},
            {rng.uniform(0.1, 0.3), 7.77 + 2.39 * static_cast<double>(c),
             rng.uniform(0.0, two_pi)},
        };
    }
    for (std::size_t t = 0; t < length; ++t) {
        for (std::size_t c = 0; c < channels; ++c) {
            double v = 0;
            for (const Component& k : comps[c]) {
                v += k.amp * std::sin(two_pi * static_cast<double>(t) / k.period +
                                      k.phase);
            }
            v += rng.normal(0.0, noise_std);
            s.values[t * channels + c] = v;
        }
    }
    return s;
}

void save_csv(const RawSeries& series, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    for (std::size_t c = 0; c < series.channels; ++c) {
        out << (c ? "," : "") << "v" << c;
    }
    out << "\n";
    out.precision(17);
    for (std::size_t t = 0; t < series.length; ++t) {
        for (std::size_t c = 0; c < series.channels; ++c) {
            out << (c ? "," : "") << series.at(t, c);
        }
        out << "\n";
    }
    if (!out) {
        throw std::runtime_error("write failed: " + path);
    }
}

}  // namespace chartcast
