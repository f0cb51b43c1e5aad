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

#include "microreg/harness.hpp"

#include "microreg/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace microreg {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string utc_now()
{
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_json(const fs::path& path, const json& j)
{
    std::ofstream out(path);
    if (!out) {
        throw FormatError("cannot write " + path.string());
    }
    out << j.dump(2) << '\n';
    if (!out) {
        throw FormatError("write failed: " + path.string());
    }
}

json read_json(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

Dataset tail_rows(const Dataset& data, std::size_t begin, std::size_t end, Split split)
{
    std::vector<std::size_t> index(end - begin);
    std::iota(index.begin(), index.end(), begin);
    Dataset out;
    out.inputs = gather_rows(data.inputs, index);
    out.labels = gather_labels(data.labels, index);
    out.class_count = data.class_count;
    out.split = split;
    out.provenance = data.provenance + " rows [" + std::to_string(begin) + ", " + std::to_string(end) + ")";
    return out;
}

std::pair<std::string, std::string> split_key(const std::string& id, std::size_t line)
{
    const auto dot = id.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == id.size()) {
        throw ConfigError(line, "expected 'section.key', got '" + id + "'");
    }
    return {id.substr(0, dot), id.substr(dot + 1)};
}

void apply_id(ExperimentConfig& cfg, const std::string& id, const std::string& value, std::size_t line)
{
    const auto [section, key] = split_key(id, line);
    apply_setting(cfg, section, key, value, line);
}

std::vector<std::string> split_values(std::string_view v)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = v.find(',', start);
        std::string_view item = v.substr(start, comma == std::string_view::npos ? v.npos : comma - start);
        while (!item.empty() && item.front() == ' ') {
            item.remove_prefix(1);
        }
        while (!item.empty() && item.back() == ' ') {
            item.remove_suffix(1);
        }
        out.emplace_back(item);
        if (comma == std::string_view::npos) {
            return out;
        }
        start = comma + 1;
    }
}

std::string sanitize(std::string s)
{
    for (char& c : s) {
        const auto u = static_cast<unsigned char>(c);
        if (!std::isalnum(u) && c != '-' && c != '_' && c != '.' && c != '=') {
            c = '-';
        }
    }
    return s;
}

} // namespace

LoadedData load_data(const DataConfig& cfg)
{
    LoadedData out;
    if (cfg.source == "synthetic") {
        out.train = make_synthetic(cfg.synthetic, Split::Train);
        out.val = make_synthetic(cfg.synthetic, Split::Val);
        out.test = make_synthetic(cfg.synthetic, Split::Test);
        return out;
    }
    const Dataset full = load_idx(cfg.train_images, cfg.train_labels, cfg.whiten);
    const std::size_t n = full.size();
    const std::size_t nv = cfg.synthetic.val_size;
    if (nv == 0 || nv >= n) {
        throw ValidationError("idx: val_size must be positive and below the training file size "
                              + std::to_string(n));
    }
    out.train = tail_rows(full, 0, n - nv, Split::Train);
    out.val = tail_rows(full, n - nv, n, Split::Val);
    if (!cfg.test_images.empty()) {
        out.test = load_idx(cfg.test_images, cfg.test_labels, cfg.whiten);
        out.test.split = Split::Test;
        if (out.test.dim() != out.train.dim()) {
            throw FormatError("idx: test inputs have dimension " + std::to_string(out.test.dim())
                              + ", training inputs " + std::to_string(out.train.dim()));
        }
    } else {
        out.test = out.val;
        out.test.split = Split::Test;
    }
    const std::size_t classes = std::max(out.train.class_count, out.test.class_count);
    out.train.class_count = out.val.class_count = out.test.class_count = classes;
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kCheckpointMagic[4] = {'M', 'R', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put_le(std::ostream& out, T v)
{
    static_assert(std::endian::native == std::endian::little, "little-endian host required");
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get_le(std::istream& in, const fs::path& path)
{
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) {
        throw FormatError(path.string() + ": truncated checkpoint");
    }
    return v;
}

} // namespace

void save_checkpoint(const fs::path& path, const TensorList& params)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("cannot write " + path.string());
    }
    out.write(kCheckpointMagic, 4);
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint64_t>(out, params.size());
    for (const auto& t : params) {
        put_le<std::uint64_t>(out, t.rank());
        for (std::size_t e : t.shape()) {
            put_le<std::uint64_t>(out, e);
        }
    }
    for (const auto& t : params) {
        for (double v : t.values()) {
            put_le<double>(out, v);
        }
    }
    if (!out) {
        throw FormatError("write failed: " + path.string());
    }
}

TensorList load_checkpoint(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
        throw FormatError(path.string() + ": not a checkpoint");
    }
    if (get_le<std::uint32_t>(in, path) != kCheckpointVersion) {
        throw FormatError(path.string() + ": unsupported checkpoint version");
    }
    const auto count = get_le<std::uint64_t>(in, path);
    if (count > (1u << 20)) {
        throw FormatError(path.string() + ": implausible tensor count");
    }
    std::vector<Shape> shapes(count);
    for (auto& s : shapes) {
        const auto rank = get_le<std::uint64_t>(in, path);
        if (rank > 8) {
            throw FormatError(path.string() + ": implausible tensor rank");
        }
        s.resize(rank);
        for (auto& e : s) {
            e = get_le<std::uint64_t>(in, path);
        }
    }
    TensorList out;
    out.reserve(count);
    for (const auto& s : shapes) {
        Tensor t(s);
        for (double& v : t.values()) {
            v = get_le<double>(in, path);
        }
        out.push_back(std::move(t));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training loop

RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options)
{
    validate_config(cfg);
    const LogFn log = [&](std::string_view msg) {
        if (options.quiet) {
            return;
        }
        if (options.log) {
            options.log(msg);
        } else {
            std::cerr << "[" << cfg.name << "] " << msg << '\n';
        }
    };

    RunResult result;
    result.name = cfg.name;
    result.dir = cfg.output_dir;
    fs::create_directories(result.dir);
    result.telemetry = result.dir / "telemetry.csv";
    result.manifest = result.dir / "manifest.json";
    result.result = result.dir / "result.json";

    const LoadedData data = load_data(cfg.data);
    ModelSpec model = cfg.model;
    model.input_dim = data.train.dim();
    model.class_count = data.train.class_count;
    TensorList params = init_params(model);

    if (cfg.batch_size > data.train.size() || cfg.eval_batch > data.train.size()) {
        throw ValidationError("batch size and evaluation batch must not exceed the training set ("
                              + std::to_string(data.train.size()) + " rows)");
    }

    NormSchedule donor;
    if (cfg.update.rule == RuleKind::GraftExternal) {
        donor = NormSchedule::load(cfg.update.norm_schedule);
    }

    json manifest;
    manifest["version"] = kVersionTag;
    manifest["name"] = cfg.name;
    manifest["config"] = serialize(cfg);
    manifest["seeds"] = {{"data", cfg.data.synthetic.seed},
                         {"init", cfg.model.init_seed},
                         {"sampler", cfg.sampler_seed},
                         {"metric", cfg.metric_seed},
                         {"regularizer", cfg.regularizer.seed},
                         {"update", cfg.update.seed}};
    manifest["dataset"] = {{"train", data.train.provenance},
                           {"val", data.val.provenance},
                           {"test", data.test.provenance},
                           {"train_size", data.train.size()},
                           {"val_size", data.val.size()},
                           {"test_size", data.test.size()},
                           {"dim", data.train.dim()},
                           {"classes", data.train.class_count}};
    manifest["model"] = {{"input_dim", model.input_dim},
                         {"class_count", model.class_count},
                         {"hidden", model.hidden},
                         {"parameter_count", model.parameter_count()}};
    manifest["start_time"] = utc_now();
    write_json(result.manifest, manifest);

    TelemetryWriter telemetry(result.telemetry);

    // Fixed evaluation batch drawn from the training split.
    std::vector<std::size_t> eval_index(data.train.size());
    std::iota(eval_index.begin(), eval_index.end(), std::size_t{0});
    {
        Engine engine = make_engine(cfg.metric_seed, {0xe7a1});
        std::shuffle(eval_index.begin(), eval_index.end(), engine);
    }
    eval_index.resize(cfg.eval_batch);
    const MicroBatchPartition eval_partition = partition_microbatches(eval_index, cfg.eval_micro);
    const MicroBatch eval_batch = materialize(data.train, eval_index);

    EpochSampler sampler(data.train.size(), cfg.sampler_seed);
    RegularizerSpec reg = cfg.regularizer;
    reg.micro_size = cfg.micro_size;
    SgdState sgd;
    AntiPgdState anti(cfg.update.noise_variance, cfg.update.noise_shutoff, cfg.update.seed);
    const std::uint64_t steps_per_epoch = std::max<std::uint64_t>(1, data.train.size() / cfg.batch_size);
    const std::uint64_t fisher_seed = mix_seed(cfg.metric_seed, {0xf15e});

    double last_update_norm = 0.0;
    std::optional<double> last_penalty;
    double last_lr = cfg.update.lr_at(0);
    double best_val = 0.0;
    std::uint64_t last_flushed_epoch = 0;
    bool warned_hold = false;
    const auto started = std::chrono::steady_clock::now();

    auto record_row = [&](std::uint64_t t) {
        TrajectoryRecord r;
        r.step = t;
        r.epoch = t / steps_per_epoch;
        const Tensor eval_logits = forward(params, eval_batch.inputs);
        r.train_loss = cross_entropy(eval_logits, eval_batch.labels);
        r.train_acc = accuracy(eval_logits, eval_batch.labels);
        r.val_acc = accuracy(forward(params, data.val.inputs), data.val.labels);
        r.avg_mb_grad_norm = avg_microbatch_grad_norm(params, data.train, eval_partition, cfg.threads);
        if (cfg.track_fisher) {
            r.fisher_trace = fisher_trace_estimate(params, data.train, eval_partition,
                                                   StreamKey{fisher_seed, t}, cfg.threads);
        }
        r.penalty = last_penalty;
        r.update_norm = last_update_norm;
        r.lr = last_lr;
        if (cfg.record_wall_time) {
            r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
        }
        telemetry.append(r);
        best_val = std::max(best_val, r.val_acc);
        result.final_train_loss = r.train_loss;
        if (r.epoch != last_flushed_epoch) {
            telemetry.flush();
            last_flushed_epoch = r.epoch;
        }
        if (t % (cfg.metric_every * 50) == 0 || t == cfg.steps) {
            std::ostringstream os;
            os << "step " << t << " loss " << r.train_loss << " train_acc " << r.train_acc << " val_acc "
               << r.val_acc << " avg_mb_grad_norm " << r.avg_mb_grad_norm;
            log(os.str());
        }
    };

    auto finish = [&](const std::string& status) {
        telemetry.close();
        std::vector<std::uint64_t> steps(result.step_grad_norms.size());
        std::iota(steps.begin(), steps.end(), std::uint64_t{0});
        write_norm_schedule(steps, result.step_grad_norms, result.dir / "norm_schedule.csv");
        result.best_val_acc = best_val;
        json res;
        res["name"] = cfg.name;
        res["status"] = status;
        res["error"] = result.error;
        res["final_test_acc"] = result.final_test_acc;
        res["best_val_acc"] = result.best_val_acc;
        res["final_train_loss"] = result.final_train_loss;
        res["steps_completed"] = result.steps_completed;
        if (result.checkpoint) {
            res["checkpoint"] = result.checkpoint->filename().string();
        }
        write_json(result.result, res);
        manifest["end_time"] = utc_now();
        manifest["status"] = status;
        write_json(result.manifest, manifest);
    };

    TensorList before;
    try {
        for (std::uint64_t t = 0;; ++t) {
            if (t % cfg.metric_every == 0 || t <= cfg.metric_warmup || t == cfg.steps) {
                record_row(t);
            }
            if (t == cfg.steps) {
                break;
            }
            const MicroBatchPartition partition = partition_microbatches(sampler.next_batch(cfg.batch_size), cfg.micro_size);
            const double eta = cfg.update.lr_at(t);
            before = params;

            StepResult step;
            double grad_norm = 0.0;
            // The norm is recorded in the donor schedule, so an overflowing one aborts too.
            auto checked_norm = [t](const TensorList& g) {
                const double n = flat_norm(g);
                if (!std::isfinite(n)) {
                    throw NonFiniteError("gradient norm is not finite at step " + std::to_string(t));
                }
                return n;
            };
            switch (cfg.update.rule) {
            case RuleKind::SGD:
            case RuleKind::NGD:
            case RuleKind::AntiPGD: {
                TensorList g;
                double loss = 0.0;
                if (cfg.regularize) {
                    PenalizedLoss pl = penalized_loss(reg, params, data.train, partition, t, cfg.threads);
                    g = std::move(pl.gradient);
                    loss = pl.value;
                    last_penalty = pl.report.penalty;
                } else {
                    AccumulatedGradient acc = accumulate_full_gradient(params, data.train, partition, cfg.threads);
                    g = std::move(acc.gradient);
                    loss = acc.loss;
                }
                if (!std::isfinite(loss)) {
                    throw NonFiniteError("training loss is not finite at step " + std::to_string(t));
                }
                grad_norm = checked_norm(g);
                if (cfg.update.rule == RuleKind::SGD) {
                    step = sgd_step(params, g, cfg.update, t, sgd);
                } else if (cfg.update.rule == RuleKind::NGD) {
                    step = ngd_step(params, g, eta);
                } else {
                    step = anti_pgd_step(params, g, anti, cfg.update, t, sgd);
                }
                break;
            }
            case RuleKind::GraftIterative: {
                GraftGradients gg = iterative_graft_gradients(params, data.train, partition, eta,
                                                              StreamKey{cfg.update.seed, t}, cfg.threads);
                if (!std::isfinite(gg.loss)) {
                    throw NonFiniteError("training loss is not finite at step " + std::to_string(t));
                }
                grad_norm = checked_norm(gg.direction);
                step = graft_step(params, gg.magnitude, gg.direction);
                break;
            }
            case RuleKind::GraftExternal: {
                AccumulatedGradient acc = accumulate_full_gradient(params, data.train, partition, cfg.threads);
                if (!std::isfinite(acc.loss)) {
                    throw NonFiniteError("training loss is not finite at step " + std::to_string(t));
                }
                const GraftMagnitude mag = external_graft_magnitude(donor, t, eta);
                if (mag.held && !warned_hold) {
                    log("warning: step " + std::to_string(t)
                        + " is past the end of the norm schedule; holding its last value");
                    warned_hold = true;
                }
                grad_norm = checked_norm(acc.gradient);
                step = graft_step(params, mag.value, acc.gradient);
                break;
            }
            }
            if (!all_finite(params)) {
                throw NonFiniteError("parameters became non-finite at step " + std::to_string(t));
            }
            if (!step.applied) {
                log("step " + std::to_string(t) + ": " + step.note);
            }
            result.step_grad_norms.push_back(grad_norm);
            last_update_norm = step.update_norm;
            last_lr = eta;
            result.steps_completed = t + 1;
        }
    } catch (const NonFiniteError& e) {
        result.ok = false;
        result.error = e.what();
        const fs::path ckpt = result.dir / "checkpoint.bin";
        save_checkpoint(ckpt, before.empty() ? params : before);
        result.checkpoint = ckpt;
        log(std::string("aborted: ") + e.what() + "; last finite parameters saved to " + ckpt.string());
        finish("aborted");
        return result;
    }

    result.final_test_acc = accuracy(forward(params, data.test.inputs), data.test.labels);
    log("final test accuracy " + std::to_string(result.final_test_acc));
    finish("ok");
    return result;
}

// ---------------------------------------------------------------------------
// Grids

GridSpec parse_grid(std::string_view text)
{
    GridSpec grid;
    LineMap lines;
    std::map<std::string, std::size_t> variant_pos;
    std::set<std::string> axis_keys;
    bool have_repeats = false, have_max = false;

    for (const auto& e : read_entries(text)) {
        if (e.section == "grid") {
            if (e.key == "repeats" || e.key == "max_cells") {
                std::uint64_t v = 0;
                try {
                    std::size_t used = 0;
                    v = std::stoull(e.value, &used);
                    if (used != e.value.size() || v == 0) {
                        throw std::invalid_argument(e.value);
                    }
                } catch (const std::logic_error&) {
                    throw ConfigError(e.line, e.key + ": expected a positive integer, got '" + e.value + "'");
                }
                bool& seen = e.key == "repeats" ? have_repeats : have_max;
                if (seen) {
                    throw ConfigError(e.line, "duplicate key '" + e.key + "'");
                }
                seen = true;
                (e.key == "repeats" ? grid.repeats : grid.max_cells) = static_cast<std::size_t>(v);
                continue;
            }
            split_key(e.key, e.line);
            if (!axis_keys.insert(e.key).second) {
                throw ConfigError(e.line, "duplicate axis '" + e.key + "'");
            }
            GridAxis axis{e.key, split_values(e.value)};
            for (const auto& v : axis.values) {
                if (v.empty()) {
                    throw ConfigError(e.line, "axis '" + e.key + "' has an empty value");
                }
                ExperimentConfig probe;
                apply_id(probe, e.key, v, e.line);
            }
            grid.axes.push_back(std::move(axis));
            continue;
        }
        if (e.section.rfind("variant", 0) == 0) {
            std::string name = e.section.substr(7);
            name.erase(0, name.find_first_not_of(' '));
            if (name.empty()) {
                throw ConfigError(e.line, "variant section needs a name: [variant NAME]");
            }
            auto [it, inserted] = variant_pos.emplace(name, grid.variants.size());
            if (inserted) {
                grid.variants.push_back(GridVariant{name, {}});
            }
            ExperimentConfig probe;
            apply_id(probe, e.key, e.value, e.line);
            grid.variants[it->second].overrides.emplace_back(e.key, e.value);
            continue;
        }
        const std::string id = e.section + "." + e.key;
        if (lines.count(id)) {
            throw ConfigError(e.line, "duplicate key '" + e.key + "'");
        }
        apply_setting(grid.base, e.section, e.key, e.value, e.line);
        lines[id] = e.line;
    }
    grid.base.regularizer.micro_size = grid.base.micro_size;
    validate_config(grid.base, lines);

    const auto cells = expand_grid(grid);
    (void)cells;
    return grid;
}

std::string serialize(const GridSpec& grid)
{
    std::string out = serialize(grid.base);
    out += "\n[grid]\nrepeats = " + std::to_string(grid.repeats) + "\nmax_cells = " + std::to_string(grid.max_cells) + "\n";
    for (const auto& axis : grid.axes) {
        out += axis.key + " = ";
        for (std::size_t i = 0; i < axis.values.size(); ++i) {
            out += (i ? ", " : "") + axis.values[i];
        }
        out += "\n";
    }
    for (const auto& v : grid.variants) {
        out += "\n[variant " + v.name + "]\n";
        for (const auto& [k, val] : v.overrides) {
            out += k + " = " + val + "\n";
        }
    }
    return out;
}

std::vector<GridCell> expand_grid(const GridSpec& grid)
{
    std::vector<GridVariant> variants = grid.variants;
    if (variants.empty()) {
        variants.push_back(GridVariant{"base", {}});
    }
    std::size_t combos = 1;
    for (const auto& a : grid.axes) {
        if (a.values.empty()) {
            throw ValidationError("grid axis '" + a.key + "' is empty");
        }
        combos *= a.values.size();
    }
    const std::size_t cell_count = variants.size() * combos;
    if (cell_count > grid.max_cells) {
        throw ValidationError("grid has " + std::to_string(cell_count) + " cells, above max_cells = "
                              + std::to_string(grid.max_cells));
    }

    std::vector<GridCell> out;
    for (const auto& variant : variants) {
        for (std::size_t c = 0; c < combos; ++c) {
            std::vector<std::pair<std::string, std::string>> settings;
            std::size_t rest = c;
            for (auto a = grid.axes.rbegin(); a != grid.axes.rend(); ++a) {
                settings.emplace_back(a->key, a->values[rest % a->values.size()]);
                rest /= a->values.size();
            }
            std::reverse(settings.begin(), settings.end());

            std::string name = variant.name;
            for (const auto& [k, v] : settings) {
                name += "_" + k.substr(k.find('.') + 1) + "=" + v;
            }
            name = sanitize(name);

            for (std::size_t r = 0; r < grid.repeats; ++r) {
                GridCell cell;
                cell.name = name;
                cell.variant = variant.name;
                cell.settings = settings;
                cell.repeat = r;
                ExperimentConfig cfg = grid.base;
                for (const auto& [k, v] : variant.overrides) {
                    apply_id(cfg, k, v, 0);
                }
                for (const auto& [k, v] : settings) {
                    apply_id(cfg, k, v, 0);
                }
                cfg.regularizer.micro_size = cfg.micro_size;
                cfg.model.init_seed += r;
                cfg.sampler_seed += r;
                cfg.metric_seed += r;
                cfg.regularizer.seed += r;
                cfg.update.seed += r;
                cfg.name = name + "-r" + std::to_string(r);
                cfg.output_dir = (fs::path(grid.base.output_dir) / name / ("r" + std::to_string(r))).string();
                try {
                    validate_config(cfg);
                } catch (const ValidationError& e) {
                    throw ValidationError("grid cell " + name + ": " + e.what());
                }
                cell.config = std::move(cfg);
                out.push_back(std::move(cell));
            }
        }
    }
    return out;
}

GridReport run_grid(const GridSpec& grid, const RunOptions& options)
{
    const auto cells = expand_grid(grid);
    GridReport report;
    for (const auto& cell : cells) {
        RunResult r;
        try {
            r = run_experiment(cell.config, options);
        } catch (const Error& e) {
            r.name = cell.config.name;
            r.dir = cell.config.output_dir;
            r.ok = false;
            r.error = e.what();
            if (!options.quiet) {
                std::cerr << "[" << cell.config.name << "] failed: " << e.what() << '\n';
            }
        }
        report.runs.push_back(std::move(r));
    }

    fs::create_directories(grid.base.output_dir);
    report.summary = fs::path(grid.base.output_dir) / "summary.csv";
    std::ofstream out(report.summary);
    if (!out) {
        throw FormatError("cannot write " + report.summary.string());
    }
    out << "cell,variant";
    for (const auto& a : grid.axes) {
        out << ',' << a.key;
    }
    out << ",runs,failed,test_acc_mean,test_acc_half_range,best_val_acc_mean,best_val_acc_half_range\n";

    auto fmt = [](double v) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.6f", v);
        return std::string(buf);
    };
    for (std::size_t i = 0; i < cells.size(); i += grid.repeats) {
        std::vector<double> test, val;
        std::size_t failed = 0;
        for (std::size_t r = 0; r < grid.repeats; ++r) {
            const auto& run = report.runs[i + r];
            if (run.ok) {
                test.push_back(run.final_test_acc);
                val.push_back(run.best_val_acc);
            } else {
                ++failed;
            }
        }
        out << cells[i].name << ',' << cells[i].variant;
        for (const auto& [k, v] : cells[i].settings) {
            out << ',' << v;
        }
        out << ',' << grid.repeats << ',' << failed;
        for (const auto* xs : {&test, &val}) {
            if (xs->empty()) {
                out << ",,";
                continue;
            }
            const auto [lo, hi] = std::minmax_element(xs->begin(), xs->end());
            const double mean = std::accumulate(xs->begin(), xs->end(), 0.0) / static_cast<double>(xs->size());
            out << ',' << fmt(mean) << ',' << fmt((*hi - *lo) / 2.0);
        }
        out << '\n';
    }
    if (!out) {
        throw FormatError("write failed: " + report.summary.string());
    }
    return report;
}

// ---------------------------------------------------------------------------
// Presets

namespace {

constexpr std::string_view kDeskBase = R"([data]
source = synthetic

[train]
batch_size = 1024
micro_size = 32
steps = 5000

[update]
rule = sgd
lr = 0.5
)";

// Protocol of the directional desk-scale check: a 64-64 network, 800 steps,
// one η for every large-batch run.
constexpr std::string_view kReproductionBase = R"([data]
source = synthetic

[model]
hidden = 64, 64

[train]
batch_size = 1024
micro_size = 32
steps = 800
metric_warmup = 20
track_fisher = false

[update]
rule = sgd
lr = 0.7
)";

struct Preset {
    const char* name;
    const char* body;
    std::string_view base = kDeskBase;
};

constexpr Preset kPresets[] = {
    {"regularizer-comparison", R"([grid]
repeats = 3

[variant SB]
train.batch_size = 32
update.lr = 0.1

[variant LB]
update.rule = sgd

[variant LB-GN]
regularizer.kind = gn
regularizer.strength = 0.01

[variant LB-FT]
regularizer.kind = ft
regularizer.strength = 0.01

[variant LB-AJ]
regularizer.kind = aj
regularizer.strength = 0.001

[variant LB-UJ]
regularizer.kind = uj
regularizer.strength = 0.001
)"},
    {"microbatch-ablation", R"([grid]
repeats = 2
regularizer.kind = gn, ft
train.micro_size = 32, 128, 512, 1024

[variant LB-reg]
regularizer.strength = 0.01
)"},
    {"sample-penalty-sweep", R"([grid]
repeats = 2
regularizer.strength = 0.01, 0.1, 0.5
train.micro_size = 32, 128, 512

[variant LB-SampleGN]
regularizer.kind = sample-gn
)"},
    {"grafting-comparison", R"([grid]
repeats = 1

[variant SB]
train.batch_size = 32
update.lr = 0.1

[variant LB]
update.rule = sgd

[variant EG]
update.rule = graft-external
update.lr = 0.1
update.norm_schedule = runs/grafting-comparison/SB/r0/norm_schedule.csv

[variant IG]
update.rule = graft-iterative
update.lr = 0.1

[variant NGD]
update.rule = ngd
update.lr = 0.3951
)"},
    {"anti-pgd-grid", R"([grid]
repeats = 1
update.lr = 0.05, 0.1, 0.5
update.noise_variance = 0.01, 0.001

[variant LB-AntiPGD]
update.rule = anti-pgd
update.noise_shutoff = 2500
)"},
    {"desk-reproduction", R"([grid]
repeats = 5

[variant SB]
train.batch_size = 32
update.lr = 0.1

[variant LB]
update.rule = sgd

[variant LB-GN]
regularizer.kind = gn
regularizer.strength = 0.07

[variant LB-FT]
regularizer.kind = ft
regularizer.strength = 0.1

[variant LB-GN-full]
regularizer.kind = gn
regularizer.strength = 0.07
train.micro_size = 1024

[variant LB-FT-full]
regularizer.kind = ft
regularizer.strength = 0.1
train.micro_size = 1024
)",
     kReproductionBase},
};

} // namespace

std::vector<std::string> preset_names()
{
    std::vector<std::string> out;
    for (const auto& p : kPresets) {
        out.emplace_back(p.name);
    }
    return out;
}

std::string preset_text(std::string_view name)
{
    for (const auto& p : kPresets) {
        if (name == p.name) {
            std::string text = "[run]\nname = " + std::string(p.name) + "\noutput_dir = runs/" + std::string(p.name)
                               + "\n\n" + std::string(p.base) + "\n" + p.body;
            return text;
        }
    }
    std::string known;
    for (const auto& p : kPresets) {
        known += std::string(known.empty() ? "" : ", ") + p.name;
    }
    throw ValidationError("unknown preset '" + std::string(name) + "' (known: " + known + ")");
}

// ---------------------------------------------------------------------------
// Verification

VerifyReport verify_run_dir(const fs::path& dir)
{
    VerifyReport report;
    auto problem = [&](std::string msg) {
        report.ok = false;
        report.problems.push_back(std::move(msg));
    };
    if (!fs::is_directory(dir)) {
        problem(dir.string() + " is not a directory");
        return report;
    }

    try {
        const json manifest = read_json(dir / "manifest.json");
        for (const char* key : {"version", "config", "seeds", "dataset", "start_time", "end_time"}) {
            if (!manifest.contains(key)) {
                problem(std::string("manifest.json lacks '") + key + "'");
            }
        }
        if (manifest.contains("config")) {
            try {
                parse_config(manifest["config"].get<std::string>());
            } catch (const Error& e) {
                problem(std::string("manifest config does not reparse: ") + e.what());
            }
        }
    } catch (const Error& e) {
        problem(e.what());
    }

    try {
        const auto rows = read_telemetry(dir / "telemetry.csv");
        if (rows.empty()) {
            problem("telemetry.csv has no rows");
        }
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (i > 0 && rows[i].step <= rows[i - 1].step) {
                problem("telemetry steps are not increasing at row " + std::to_string(i + 1));
                break;
            }
            const auto& r = rows[i];
            if (r.train_acc < 0.0 || r.train_acc > 1.0 || r.val_acc < 0.0 || r.val_acc > 1.0) {
                problem("telemetry accuracy outside [0, 1] at row " + std::to_string(i + 1));
                break;
            }
        }
    } catch (const Error& e) {
        problem(e.what());
    }

    try {
        const json res = read_json(dir / "result.json");
        for (const char* key : {"status", "final_test_acc", "best_val_acc", "steps_completed"}) {
            if (!res.contains(key)) {
                problem(std::string("result.json lacks '") + key + "'");
            }
        }
        if (res.value("status", "") == "aborted" && !fs::exists(dir / "checkpoint.bin")) {
            problem("aborted run has no checkpoint.bin");
        }
    } catch (const Error& e) {
        problem(e.what());
    }
    return report;
}

} // namespace microreg
