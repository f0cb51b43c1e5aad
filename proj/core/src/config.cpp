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

#include "microreg/config.hpp"

#include "parse_number.hpp"

#include "microreg/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace microreg {

namespace {

std::string_view trim(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
        s.remove_prefix(1);
    }
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
        s.remove_suffix(1);
    }
    return s;
}

std::string real(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::uint64_t to_u64(std::string_view v, std::size_t line, std::string_view key)
{
    const std::string s(v);
    if (!s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); })) {
        try {
            return std::stoull(s);
        } catch (const std::out_of_range&) {
        }
    }
    throw ConfigError(line, std::string(key) + ": expected a non-negative integer, got '" + s + "'");
}

double to_real(std::string_view v, std::size_t line, std::string_view key)
{
    const std::string s(v);
    if (const auto d = detail::parse_double(s); d && std::isfinite(*d)) {
        return *d;
    }
    throw ConfigError(line, std::string(key) + ": expected a finite number, got '" + s + "'");
}

bool to_bool(std::string_view v, std::size_t line, std::string_view key)
{
    if (v == "true" || v == "1" || v == "yes") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no") {
        return false;
    }
    throw ConfigError(line, std::string(key) + ": expected true or false, got '" + std::string(v) + "'");
}

std::vector<std::size_t> to_list(std::string_view v, std::size_t line, std::string_view key)
{
    std::vector<std::size_t> out;
    if (trim(v).empty() || trim(v) == "none") {
        return out;
    }
    std::size_t start = 0;
    while (start <= v.size()) {
        const auto comma = v.find(',', start);
        const auto item = trim(v.substr(start, comma == std::string_view::npos ? v.npos : comma - start));
        const std::uint64_t n = to_u64(item, line, key);
        if (n == 0) {
            throw ConfigError(line, std::string(key) + ": layer widths must be positive");
        }
        out.push_back(static_cast<std::size_t>(n));
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    return out;
}

struct Field {
    const char* section;
    const char* key;
    std::function<void(ExperimentConfig&, std::string_view, std::size_t)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T>
Field uint_field(const char* section, const char* key, T ExperimentConfig::*member)
{
    return {section, key,
            [member, key](ExperimentConfig& c, std::string_view v, std::size_t line) {
                c.*member = static_cast<T>(to_u64(v, line, key));
            },
            [member](const ExperimentConfig& c) { return std::to_string(c.*member); }};
}

Field bool_field(const char* section, const char* key, bool ExperimentConfig::*member)
{
    return {section, key,
            [member, key](ExperimentConfig& c, std::string_view v, std::size_t line) {
                c.*member = to_bool(v, line, key);
            },
            [member](const ExperimentConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

// Accessor-based helpers for nested members.
template <typename Ref>
Field real_at(const char* section, const char* key, Ref ref)
{
    return {section, key,
            [ref, key](ExperimentConfig& c, std::string_view v, std::size_t line) {
                ref(c) = to_real(v, line, key);
            },
            [ref](const ExperimentConfig& c) { return real(ref(const_cast<ExperimentConfig&>(c))); }};
}

template <typename Ref>
Field uint_at(const char* section, const char* key, Ref ref)
{
    return {section, key,
            [ref, key](ExperimentConfig& c, std::string_view v, std::size_t line) {
                using T = std::remove_reference_t<decltype(ref(c))>;
                ref(c) = static_cast<T>(to_u64(v, line, key));
            },
            [ref](const ExperimentConfig& c) {
                return std::to_string(ref(const_cast<ExperimentConfig&>(c)));
            }};
}

template <typename Ref>
Field string_at(const char* section, const char* key, Ref ref)
{
    return {section, key,
            [ref](ExperimentConfig& c, std::string_view v, std::size_t) { ref(c) = std::string(v); },
            [ref](const ExperimentConfig& c) { return ref(const_cast<ExperimentConfig&>(c)); }};
}

const std::vector<Field>& fields()
{
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back(string_at("run", "name", [](ExperimentConfig& c) -> std::string& { return c.name; }));
        f.push_back(string_at("run", "output_dir",
                              [](ExperimentConfig& c) -> std::string& { return c.output_dir; }));

        f.push_back({"data", "source",
                     [](ExperimentConfig& c, std::string_view v, std::size_t line) {
                         if (v != "synthetic" && v != "idx") {
                             throw ConfigError(line, "source: expected synthetic or idx, got '"
                                                         + std::string(v) + "'");
                         }
                         c.data.source = std::string(v);
                     },
                     [](const ExperimentConfig& c) { return c.data.source; }});
        f.push_back(uint_at("data", "clusters",
                            [](ExperimentConfig& c) -> std::size_t& { return c.data.synthetic.clusters; }));
        f.push_back(uint_at("data", "dim",
                            [](ExperimentConfig& c) -> std::size_t& { return c.data.synthetic.dim; }));
        f.push_back(uint_at("data", "train_size",
                            [](ExperimentConfig& c) -> std::size_t& { return c.data.synthetic.train_size; }));
        f.push_back(uint_at("data", "val_size",
                            [](ExperimentConfig& c) -> std::size_t& { return c.data.synthetic.val_size; }));
        f.push_back(uint_at("data", "test_size",
                            [](ExperimentConfig& c) -> std::size_t& { return c.data.synthetic.test_size; }));
        f.push_back(uint_at("data", "classes",
                            [](ExperimentConfig& c) -> std::size_t& { return c.data.synthetic.class_count; }));
        f.push_back(real_at("data", "label_noise",
                            [](ExperimentConfig& c) -> double& { return c.data.synthetic.label_noise; }));
        f.push_back(real_at("data", "separation",
                            [](ExperimentConfig& c) -> double& { return c.data.synthetic.separation; }));
        f.push_back(uint_at("data", "seed",
                            [](ExperimentConfig& c) -> std::uint64_t& { return c.data.synthetic.seed; }));
        f.push_back(string_at("data", "train_images",
                              [](ExperimentConfig& c) -> std::string& { return c.data.train_images; }));
        f.push_back(string_at("data", "train_labels",
                              [](ExperimentConfig& c) -> std::string& { return c.data.train_labels; }));
        f.push_back(string_at("data", "test_images",
                              [](ExperimentConfig& c) -> std::string& { return c.data.test_images; }));
        f.push_back(string_at("data", "test_labels",
                              [](ExperimentConfig& c) -> std::string& { return c.data.test_labels; }));
        f.push_back({"data", "whiten",
                     [](ExperimentConfig& c, std::string_view v, std::size_t line) {
                         c.data.whiten = to_bool(v, line, "whiten");
                     },
                     [](const ExperimentConfig& c) { return std::string(c.data.whiten ? "true" : "false"); }});

        f.push_back({"model", "hidden",
                     [](ExperimentConfig& c, std::string_view v, std::size_t line) {
                         c.model.hidden = to_list(v, line, "hidden");
                     },
                     [](const ExperimentConfig& c) {
                         std::string s;
                         for (std::size_t i = 0; i < c.model.hidden.size(); ++i) {
                             s += (i ? ", " : "") + std::to_string(c.model.hidden[i]);
                         }
                         return s.empty() ? std::string("none") : s;
                     }});
        f.push_back(uint_at("model", "init_seed",
                            [](ExperimentConfig& c) -> std::uint64_t& { return c.model.init_seed; }));

        f.push_back(uint_field("train", "batch_size", &ExperimentConfig::batch_size));
        f.push_back(uint_field("train", "micro_size", &ExperimentConfig::micro_size));
        f.push_back(uint_field("train", "steps", &ExperimentConfig::steps));
        f.push_back(uint_field("train", "metric_every", &ExperimentConfig::metric_every));
        f.push_back(uint_field("train", "metric_warmup", &ExperimentConfig::metric_warmup));
        f.push_back(uint_field("train", "eval_batch", &ExperimentConfig::eval_batch));
        f.push_back(uint_field("train", "eval_micro", &ExperimentConfig::eval_micro));
        f.push_back(uint_field("train", "threads", &ExperimentConfig::threads));
        f.push_back(bool_field("train", "track_fisher", &ExperimentConfig::track_fisher));
        f.push_back(bool_field("train", "record_wall_time", &ExperimentConfig::record_wall_time));
        f.push_back(uint_field("train", "sampler_seed", &ExperimentConfig::sampler_seed));
        f.push_back(uint_field("train", "metric_seed", &ExperimentConfig::metric_seed));

        f.push_back({"regularizer", "kind",
                     [](ExperimentConfig& c, std::string_view v, std::size_t line) {
                         if (v == "none") {
                             c.regularize = false;
                             return;
                         }
                         const auto kind = parse_regularizer(v);
                         if (!kind) {
                             throw ConfigError(line, "kind: expected none, gn, ft, aj, uj or sample-gn, got '"
                                                         + std::string(v) + "'");
                         }
                         c.regularize = true;
                         c.regularizer.kind = *kind;
                     },
                     [](const ExperimentConfig& c) {
                         return c.regularize ? std::string(regularizer_name(c.regularizer.kind))
                                             : std::string("none");
                     }});
        f.push_back(real_at("regularizer", "strength",
                            [](ExperimentConfig& c) -> double& { return c.regularizer.strength; }));
        f.push_back({"regularizer", "mode",
                     [](ExperimentConfig& c, std::string_view v, std::size_t line) {
                         if (v == "double-backprop") {
                             c.regularizer.mode = ad::DoubleBackprop{};
                         } else if (v == "finite-difference") {
                             if (!std::holds_alternative<ad::FiniteDifference>(c.regularizer.mode)) {
                                 c.regularizer.mode = ad::FiniteDifference{};
                             }
                         } else {
                             throw ConfigError(line, "mode: expected double-backprop or finite-difference, got '"
                                                         + std::string(v) + "'");
                         }
                     },
                     [](const ExperimentConfig& c) {
                         return std::string(std::holds_alternative<ad::DoubleBackprop>(c.regularizer.mode)
                                                ? "double-backprop"
                                                : "finite-difference");
                     }});
        f.push_back({"regularizer", "fd_step",
                     [](ExperimentConfig& c, std::string_view v, std::size_t line) {
                         if (v == "auto") {
                             c.regularizer.mode = ad::FiniteDifference{};
                             return;
                         }
                         const double step = to_real(v, line, "fd_step");
                         if (!(step > 0.0)) {
                             throw ConfigError(line, "fd_step: must be positive");
                         }
                         c.regularizer.mode = ad::FiniteDifference{step};
                     },
                     [](const ExperimentConfig& c) -> std::string {
                         const auto* fd = std::get_if<ad::FiniteDifference>(&c.regularizer.mode);
                         if (!fd) {
                             return {};
                         }
                         return fd->step ? real(*fd->step) : std::string("auto");
                     }});
        f.push_back(uint_at("regularizer", "seed",
                            [](ExperimentConfig& c) -> std::uint64_t& { return c.regularizer.seed; }));

        f.push_back({"update", "rule",
                     [](ExperimentConfig& c, std::string_view v, std::size_t line) {
                         const auto rule = parse_rule(v);
                         if (!rule) {
                             throw ConfigError(line, "rule: expected sgd, graft-iterative, graft-external, ngd or anti-pgd, got '"
                                                         + std::string(v) + "'");
                         }
                         c.update.rule = *rule;
                     },
                     [](const ExperimentConfig& c) { return std::string(rule_name(c.update.rule)); }});
        f.push_back(real_at("update", "lr", [](ExperimentConfig& c) -> double& { return c.update.lr; }));
        f.push_back(real_at("update", "momentum",
                            [](ExperimentConfig& c) -> double& { return c.update.momentum; }));
        f.push_back(real_at("update", "weight_decay",
                            [](ExperimentConfig& c) -> double& { return c.update.weight_decay; }));
        f.push_back({"update", "schedule",
                     [](ExperimentConfig& c, std::string_view v, std::size_t line) {
                         const auto s = parse_schedule(v);
                         if (!s) {
                             throw ConfigError(line, "schedule: expected constant or cosine, got '"
                                                         + std::string(v) + "'");
                         }
                         c.update.schedule = *s;
                     },
                     [](const ExperimentConfig& c) { return std::string(schedule_name(c.update.schedule)); }});
        f.push_back(uint_at("update", "cosine_period",
                            [](ExperimentConfig& c) -> std::uint64_t& { return c.update.cosine_period; }));
        f.push_back(real_at("update", "noise_variance",
                            [](ExperimentConfig& c) -> double& { return c.update.noise_variance; }));
        f.push_back(uint_at("update", "noise_shutoff",
                            [](ExperimentConfig& c) -> std::uint64_t& { return c.update.noise_shutoff; }));
        f.push_back(string_at("update", "norm_schedule",
                              [](ExperimentConfig& c) -> std::string& { return c.update.norm_schedule; }));
        f.push_back(uint_at("update", "seed", [](ExperimentConfig& c) -> std::uint64_t& { return c.update.seed; }));
        return f;
    }();
    return table;
}

[[noreturn]] void fail(const LineMap& lines, const std::string& key, const std::string& what)
{
    const auto it = lines.find(key);
    if (it != lines.end() && it->second > 0) {
        throw ConfigError(it->second, key + ": " + what);
    }
    throw ValidationError(key + ": " + what);
}

} // namespace

std::vector<ConfigEntry> read_entries(std::string_view text)
{
    std::vector<ConfigEntry> out;
    std::string section;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto nl = text.find('\n', start);
        std::string_view raw = text.substr(start, nl == std::string_view::npos ? text.npos : nl - start);
        ++line_no;
        start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;

        const auto line = trim(raw);
        if (line.empty() || line.front() == '#' || line.front() == ';') {
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError(line_no, "unterminated section header");
            }
            section = std::string(trim(line.substr(1, line.size() - 2)));
            if (section.empty()) {
                throw ConfigError(line_no, "empty section name");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError(line_no, "expected 'key = value'");
        }
        const auto key = trim(line.substr(0, eq));
        if (key.empty()) {
            throw ConfigError(line_no, "missing key before '='");
        }
        if (section.empty()) {
            throw ConfigError(line_no, "key '" + std::string(key) + "' appears before any section");
        }
        out.push_back(ConfigEntry{section, std::string(key), std::string(trim(line.substr(eq + 1))), line_no});
    }
    return out;
}

void apply_setting(ExperimentConfig& cfg, std::string_view section, std::string_view key,
                   std::string_view value, std::size_t line)
{
    bool known_section = false;
    for (const auto& f : fields()) {
        if (section == f.section) {
            known_section = true;
            if (key == f.key) {
                f.set(cfg, value, line);
                return;
            }
        }
    }
    if (!known_section) {
        throw ConfigError(line, "unknown section [" + std::string(section) + "]");
    }
    throw ConfigError(line, "unknown key '" + std::string(key) + "' in [" + std::string(section) + "]");
}

void validate_config(const ExperimentConfig& cfg, const LineMap& lines)
{
    if (cfg.name.empty()) {
        fail(lines, "run.name", "must not be empty");
    }
    if (cfg.output_dir.empty()) {
        fail(lines, "run.output_dir", "must not be empty");
    }
    if (cfg.data.source == "synthetic") {
        try {
            cfg.data.synthetic.validate();
        } catch (const ValidationError& e) {
            fail(lines, "data.source", e.what());
        }
    } else {
        if (cfg.data.train_images.empty() || cfg.data.train_labels.empty()) {
            fail(lines, "data.source", "idx data needs train_images and train_labels");
        }
        if (cfg.data.test_images.empty() != cfg.data.test_labels.empty()) {
            fail(lines, "data.test_images", "test_images and test_labels go together");
        }
    }
    if (cfg.batch_size == 0) {
        fail(lines, "train.batch_size", "must be at least 1");
    }
    if (cfg.micro_size == 0 || cfg.batch_size % cfg.micro_size != 0) {
        fail(lines, "train.micro_size",
             "micro-batch size " + std::to_string(cfg.micro_size) + " must divide batch size "
                 + std::to_string(cfg.batch_size));
    }
    if (cfg.metric_every == 0) {
        fail(lines, "train.metric_every", "must be at least 1");
    }
    if (cfg.eval_micro == 0 || cfg.eval_batch == 0 || cfg.eval_batch % cfg.eval_micro != 0) {
        fail(lines, "train.eval_micro",
             "evaluation micro-batch size " + std::to_string(cfg.eval_micro)
                 + " must divide evaluation batch size " + std::to_string(cfg.eval_batch));
    }
    if (cfg.data.source == "synthetic") {
        if (cfg.batch_size > cfg.data.synthetic.train_size) {
            fail(lines, "train.batch_size", "exceeds the training set size");
        }
        if (cfg.eval_batch > cfg.data.synthetic.train_size) {
            fail(lines, "train.eval_batch", "exceeds the training set size");
        }
        if (cfg.data.synthetic.val_size == 0 || cfg.data.synthetic.test_size == 0) {
            fail(lines, "data.val_size", "validation and test splits must be non-empty");
        }
    }
    if (cfg.threads == 0) {
        fail(lines, "train.threads", "must be at least 1");
    }
    if (!(cfg.regularizer.strength >= 0.0)) {
        fail(lines, "regularizer.strength", "must be non-negative");
    }
    try {
        ad::validate(cfg.regularizer.mode);
    } catch (const ValidationError& e) {
        fail(lines, "regularizer.fd_step", e.what());
    }
    if (cfg.regularize && (cfg.update.rule == RuleKind::GraftIterative
                           || cfg.update.rule == RuleKind::GraftExternal)) {
        fail(lines, "regularizer.kind", "grafting rules do not take a regularizer");
    }
    const auto& u = cfg.update;
    if (!(u.lr >= 0.0)) {
        fail(lines, "update.lr", "must be non-negative");
    }
    if (!(u.momentum >= 0.0 && u.momentum < 1.0)) {
        fail(lines, "update.momentum", "must lie in [0, 1)");
    }
    if (!(u.weight_decay >= 0.0)) {
        fail(lines, "update.weight_decay", "must be non-negative");
    }
    if (u.schedule == ScheduleKind::Cosine && u.cosine_period == 0) {
        fail(lines, "update.cosine_period", "cosine schedule needs a positive period");
    }
    if (!(u.noise_variance >= 0.0)) {
        fail(lines, "update.noise_variance", "must be non-negative");
    }
    if (u.rule == RuleKind::GraftExternal && u.norm_schedule.empty()) {
        fail(lines, "update.norm_schedule", "external grafting needs a norm schedule file");
    }
}

ExperimentConfig parse_config(std::string_view text)
{
    ExperimentConfig cfg;
    LineMap lines;
    for (const auto& e : read_entries(text)) {
        const std::string id = e.section + "." + e.key;
        if (lines.count(id)) {
            throw ConfigError(e.line, "duplicate key '" + e.key + "' (first set on line "
                                          + std::to_string(lines[id]) + ")");
        }
        apply_setting(cfg, e.section, e.key, e.value, e.line);
        lines[id] = e.line;
    }
    cfg.regularizer.micro_size = cfg.micro_size;
    validate_config(cfg, lines);
    return cfg;
}

std::string read_text(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open " + path.string());
    }
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

ExperimentConfig load_config(const std::filesystem::path& path)
{
    return parse_config(read_text(path));
}

std::string serialize(const ExperimentConfig& cfg)
{
    std::string out;
    std::string section;
    for (const auto& f : fields()) {
        const std::string value = f.get(cfg);
        if (std::string_view(f.key) == "fd_step" && value.empty()) {
            continue;
        }
        if (section != f.section) {
            if (!section.empty()) {
                out += '\n';
            }
            section = f.section;
            out += "[" + section + "]\n";
        }
        out += std::string(f.key) + " = " + value + "\n";
    }
    return out;
}

} // namespace microreg
