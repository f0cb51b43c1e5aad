// Copyright 2026 The microreg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "microreg/telemetry.hpp"

#include "parse_number.hpp"

#include "microreg/errors.hpp"
#include "microreg/regularizers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace microreg {

namespace {

std::string real(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string optional_real(const std::optional<double>& v)
{
    return v ? real(*v) : std::string{};
}

std::vector<std::string_view> split_commas(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

double parse_real(std::string_view field, std::string_view name)
{
    const std::string s(field);
    if (const auto v = detail::parse_double(s)) {
        return *v;
    }
    throw FormatError("telemetry: bad value '" + s + "' for " + std::string(name));
}

std::uint64_t parse_count(std::string_view field, std::string_view name)
{
    const std::string s(field);
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(s, &used);
        if (used == s.size()) {
            return v;
        }
    } catch (const std::logic_error&) {
    }
    throw FormatError("telemetry: bad value '" + s + "' for " + std::string(name));
}

std::optional<double> parse_optional(std::string_view field, std::string_view name)
{
    if (field.empty()) {
        return std::nullopt;
    }
    return parse_real(field, name);
}

} // namespace

std::string format_record(const TrajectoryRecord& r)
{
    std::string line;
    line += std::to_string(r.step) + ',';
    line += std::to_string(r.epoch) + ',';
    line += real(r.train_loss) + ',';
    line += real(r.train_acc) + ',';
    line += real(r.val_acc) + ',';
    line += real(r.avg_mb_grad_norm) + ',';
    line += optional_real(r.fisher_trace) + ',';
    line += optional_real(r.penalty) + ',';
    line += real(r.update_norm) + ',';
    line += real(r.lr) + ',';
    line += optional_real(r.wall_ms);
    return line;
}

TrajectoryRecord parse_record(std::string_view line)
{
    const auto f = split_commas(line);
    if (f.size() != 11) {
        throw FormatError("telemetry: expected 11 fields, got " + std::to_string(f.size()));
    }
    TrajectoryRecord r;
    r.step = parse_count(f[0], "step");
    r.epoch = parse_count(f[1], "epoch");
    r.train_loss = parse_real(f[2], "train_loss");
    r.train_acc = parse_real(f[3], "train_acc");
    r.val_acc = parse_real(f[4], "val_acc");
    r.avg_mb_grad_norm = parse_real(f[5], "avg_mb_grad_norm");
    r.fisher_trace = parse_optional(f[6], "fisher_trace");
    r.penalty = parse_optional(f[7], "penalty");
    r.update_norm = parse_real(f[8], "update_norm");
    r.lr = parse_real(f[9], "lr");
    r.wall_ms = parse_optional(f[10], "wall_ms");
    return r;
}

TelemetryWriter::TelemetryWriter(const std::filesystem::path& path) : path_(path), out_(path)
{
    if (!out_) {
        throw FormatError("cannot open telemetry file " + path.string());
    }
    out_ << kTelemetryHeader << '\n';
    flush();
}

TelemetryWriter::~TelemetryWriter()
{
    if (out_.is_open()) {
        out_.flush();
    }
}

void TelemetryWriter::append(const TrajectoryRecord& record)
{
    out_ << format_record(record) << '\n';
    if (!out_) {
        throw FormatError("write failed: " + path_.string());
    }
    ++rows_;
}

void TelemetryWriter::flush()
{
    out_.flush();
    if (!out_) {
        throw FormatError("write failed: " + path_.string());
    }
}

void TelemetryWriter::close()
{
    if (out_.is_open()) {
        flush();
        out_.close();
    }
}

std::vector<TrajectoryRecord> read_telemetry(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open telemetry file " + path.string());
    }
    std::string line;
    if (!std::getline(in, line) || line != kTelemetryHeader) {
        throw FormatError(path.string() + ": unexpected telemetry header");
    }
    std::vector<TrajectoryRecord> out;
    while (std::getline(in, line)) {
        if (!line.empty()) {
            out.push_back(parse_record(line));
        }
    }
    return out;
}

double avg_microbatch_grad_norm(const ModelParams& params, const Dataset& data,
                                const MicroBatchPartition& partition, std::size_t threads)
{
    const AccumulatedGradient acc = accumulate_full_gradient(params, data, partition, threads, true);
    double sum = 0.0;
    for (const auto& g : acc.slice_gradients) {
        sum += flat_norm(g);
    }
    return sum / static_cast<double>(acc.slice_gradients.size());
}

double fisher_trace_estimate(const ModelParams& params, const Dataset& data,
                             const MicroBatchPartition& partition, const StreamKey& rng,
                             std::size_t threads)
{
    PenaltyOptions options;
    options.threads = threads;
    options.want_gradient = false;
    return ft_penalized_loss(params, data, partition, 1.0, rng, options).report.penalty;
}

std::size_t CsvTable::column(std::string_view name) const
{
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
        throw ValidationError("unknown column '" + std::string(name) + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv_table(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError(path.string() + ": empty file");
    }
    for (auto h : split_commas(line)) {
        table.header.emplace_back(h);
    }
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) {
            continue;
        }
        const auto fields = split_commas(line);
        if (fields.size() != table.header.size()) {
            throw FormatError(path.string() + ": line " + std::to_string(row) + " has "
                              + std::to_string(fields.size()) + " fields, expected "
                              + std::to_string(table.header.size()));
        }
        std::vector<std::optional<double>> values;
        values.reserve(fields.size());
        for (std::size_t i = 0; i < fields.size(); ++i) {
            values.push_back(parse_optional(fields[i], table.header[i]));
        }
        table.rows.push_back(std::move(values));
    }
    return table;
}

std::vector<double> moving_average(std::span<const double> values, std::size_t window)
{
    if (window == 0) {
        throw ValidationError("moving average window must be at least 1");
    }
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
        double sum = 0.0;
        for (std::size_t j = lo; j <= i; ++j) {
            sum += values[j];
        }
        out[i] = sum / static_cast<double>(i + 1 - lo);
    }
    return out;
}

void emit_line_plot(const std::filesystem::path& csv_path, const std::vector<std::string>& columns,
                    const std::filesystem::path& out_path, const PlotOptions& options)
{
    if (columns.empty()) {
        throw ValidationError("plot: no columns requested");
    }
    const CsvTable table = read_csv_table(csv_path);
    std::vector<std::size_t> ids;
    for (const auto& c : columns) {
        ids.push_back(table.column(c));
    }
    const auto x_it = std::find(table.header.begin(), table.header.end(), options.x_column);
    const bool have_x = x_it != table.header.end();
    const std::size_t x_id = static_cast<std::size_t>(x_it - table.header.begin());

    struct Series {
        std::vector<double> x, y;
    };
    std::vector<Series> series(ids.size());
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (std::size_t s = 0; s < ids.size(); ++s) {
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            const auto& y = table.rows[r][ids[s]];
            const std::optional<double> x =
                have_x ? table.rows[r][x_id] : std::optional<double>(static_cast<double>(r));
            if (y && x && std::isfinite(*y) && std::isfinite(*x)) {
                series[s].x.push_back(*x);
                series[s].y.push_back(*y);
            }
        }
        series[s].y = moving_average(series[s].y, options.window);
        for (std::size_t i = 0; i < series[s].x.size(); ++i) {
            xmin = std::min(xmin, series[s].x[i]);
            xmax = std::max(xmax, series[s].x[i]);
            ymin = std::min(ymin, series[s].y[i]);
            ymax = std::max(ymax, series[s].y[i]);
        }
    }
    if (!std::isfinite(xmin)) {
        xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
    }
    if (xmax == xmin) {
        xmax = xmin + 1.0;
    }
    if (ymax == ymin) {
        ymin -= 0.5;
        ymax += 0.5;
    }

    const double w = options.width, h = options.height;
    const double left = 70, right = 20, top = 40, bottom = 50;
    const double pw = w - left - right, ph = h - top - bottom;
    auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return top + (ymax - y) / (ymax - ymin) * ph; };

    static constexpr std::array<const char*, 8> kColors = {
        "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << options.width
        << "\" height=\"" << options.height << "\" viewBox=\"0 0 " << options.width << ' '
        << options.height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!options.title.empty()) {
        svg << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
            << options.title << "</text>\n";
    }
    svg << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw
        << "\" y2=\"" << top + ph << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
        << top + ph << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double fx = xmin + (xmax - xmin) * i / 4.0;
        const double fy = ymin + (ymax - ymin) * i / 4.0;
        svg << "<text x=\"" << px(fx) << "\" y=\"" << top + ph + 18
            << "\" text-anchor=\"middle\">" << real(fx).substr(0, 8) << "</text>\n";
        svg << "<text x=\"" << left - 6 << "\" y=\"" << py(fy) + 4 << "\" text-anchor=\"end\">"
            << real(fy).substr(0, 8) << "</text>\n";
    }
    svg << "<text x=\"" << left + pw / 2 << "\" y=\"" << h - 10 << "\" text-anchor=\"middle\">"
        << (have_x ? options.x_column : std::string("row")) << "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kColors[s % kColors.size()];
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < series[s].x.size(); ++i) {
            svg << (i ? " " : "") << px(series[s].x[i]) << ',' << py(series[s].y[i]);
        }
        svg << "\"/>\n";
        const double ly = top + 14 + 16.0 * static_cast<double>(s);
        svg << "<line x1=\"" << left + pw - 130 << "\" y1=\"" << ly - 4 << "\" x2=\""
            << left + pw - 110 << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color
            << "\" stroke-width=\"2\"/>\n";
        svg << "<text x=\"" << left + pw - 104 << "\" y=\"" << ly << "\">" << columns[s]
            << "</text>\n";
    }
    svg << "</svg>\n";

    std::ofstream out(out_path);
    if (!out) {
        throw FormatError("cannot write " + out_path.string());
    }
    out << svg.str();
    if (!out) {
        throw FormatError("write failed: " + out_path.string());
    }
}

void write_norm_schedule(const std::vector<std::uint64_t>& steps, const std::vector<double>& norms,
                         const std::filesystem::path& path)
{
    NormSchedule{steps, norms}.save(path);
}

} // namespace microreg
