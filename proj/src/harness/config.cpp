#include "deformsim/harness/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "deformsim/errors.hpp"

namespace deformsim::harness {

namespace {

std::string join(const std::string& base, const std::string& key) { return base.empty() ? key : base + "." + key; }

// Overlays `doc` onto `defaults`; every key of `doc` must exist in `defaults`.
void overlay(Json& defaults, const Json& doc, const std::string& path) {
    if (!doc.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
    for (const auto& [key, value] : doc.items()) {
        const auto here = join(path, key);
        if (!defaults.contains(key)) throw ConfigError(here, "unknown key");
        auto& slot = defaults[key];
        if (slot.is_object()) {
            overlay(slot, value, here);
        } else {
            slot = value;
        }
    }
}

std::int64_t get_int(const Json& v, const std::string& path) {
    if (v.is_number_integer()) return v.get<std::int64_t>();
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9e15) return static_cast<std::int64_t>(d);
    }
    throw ConfigError(path, "expected an integer");
}

int get_int32(const Json& v, const std::string& path) {
    const auto x = get_int(v, path);
    if (x < -2147483647 || x > 2147483647) throw ConfigError(path, "out of range");
    return static_cast<int>(x);
}

double get_double(const Json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path, "expected a number");
    return v.get<double>();
}

bool get_bool(const Json& v, const std::string& path) {
    if (!v.is_boolean()) throw ConfigError(path, "expected true or false");
    return v.get<bool>();
}

std::string get_string(const Json& v, const std::string& path) {
    if (!v.is_string()) throw ConfigError(path, "expected a string");
    return v.get<std::string>();
}

int positive(int v, const std::string& path) {
    if (v < 1) throw ConfigError(path, "must be at least 1");
    return v;
}

}  // namespace

SchedulerConfig ExperimentConfig::scheduler() const {
    SchedulerConfig s;
    s.window = window;
    s.parallelism = parallelism;
    s.channels = workload.shape.channels;
    return s;
}

CacheGeometry ExperimentConfig::geometry(CachePolicy policy) const {
    CacheGeometry g;
    g.capacity_lines = capacity_lines;
    g.policy = policy;
    g.banks = banks;
    g.channels = workload.shape.channels;
    g.bytes_per_element = bytes_per_element;
    return g;
}

TimingConfig ExperimentConfig::timing() const {
    auto t = TimingConfig::defaults(workload.dims(), workload.shape.channels, parallelism,
                                    geometry(CachePolicy::direct_mapped).bytes_per_line());
    if (t_fetch_per_line) t.t_fetch_per_line = *t_fetch_per_line;
    if (t_comp_per_query) t.t_comp_per_query = *t_comp_per_query;
    t.energy_per_bit_pj = energy_per_bit_pj;
    t.bank_conflict_penalty = bank_conflict_penalty;
    return t;
}

const std::vector<std::string>& sweep_parameters() {
    static const std::vector<std::string> names{
        "scheduler.window",        "scheduler.parallelism",      "workload.keep_ratio",
        "workload.decoder_queries", "workload.clusters",         "workload.cluster_spread",
        "workload.offset_envelope", "cache.capacity_lines",      "timing.t_fetch_per_line",
        "timing.t_comp_per_query",
    };
    return names;
}

Json default_config_json() {
    return Json{
        {"version", kConfigVersion},
        {"workload",
         {{"mode", "decoder"},
          {"levels", Json::array({{64, 64}, {32, 32}, {16, 16}, {8, 8}})},
          {"channels", 32},
          {"heads", 4},
          {"points", 4},
          {"distribution", "clustered"},
          {"keep_ratio", 1.0},
          {"decoder_queries", 2048},
          {"clusters", 8},
          {"cluster_spread", 0.05},
          {"offset_envelope", 0.03},
          {"shared_offsets", false}}},
        {"scheduler", {{"window", 64}, {"parallelism", 8}}},
        {"cache", {{"capacity_lines", 512}, {"banks", 8}, {"bytes_per_element", 1}, {"region_radii", nullptr}}},
        {"timing",
         {{"t_fetch_per_line", nullptr},
          {"t_comp_per_query", nullptr},
          {"energy_per_bit_pj", kDefaultEnergyPerBitPj},
          {"bank_conflict_penalty", 0}}},
        {"precision", {{"enabled", false}, {"queries", 16}}},
        {"sweep", {{"parameter", ""}, {"values", Json::array()}}},
        {"seeds", Json::array({1})},
        {"output", {{"format", "csv"}}},
        {"threads", 0},
    };
}

Json merge_with_defaults(const Json& doc) {
    if (!doc.is_object()) throw ConfigError("<root>", "expected an object");
    if (!doc.contains("version")) throw ConfigError("version", "missing");
    if (!doc["version"].is_number_integer() || doc["version"].get<int>() != kConfigVersion) {
        throw ConfigError("version", "unsupported config version, expected " + std::to_string(kConfigVersion));
    }
    auto merged = default_config_json();
    overlay(merged, doc, "");
    return merged;
}

ExperimentConfig parse_config(const Json& input) {
    const auto doc = merge_with_defaults(input);
    ExperimentConfig c;

    const auto& w = doc["workload"];
    const auto mode = get_string(w["mode"], "workload.mode");
    if (mode == "dense_encoder") {
        c.workload.mode = WorkloadMode::dense_encoder;
    } else if (mode == "sparse_encoder") {
        c.workload.mode = WorkloadMode::sparse_encoder;
    } else if (mode == "decoder") {
        c.workload.mode = WorkloadMode::decoder;
    } else {
        throw ConfigError("workload.mode", "expected dense_encoder, sparse_encoder or decoder");
    }
    if (!w["levels"].is_array() || w["levels"].empty()) {
        throw ConfigError("workload.levels", "expected a non-empty list of [height, width]");
    }
    for (std::size_t l = 0; l < w["levels"].size(); ++l) {
        const auto path = "workload.levels[" + std::to_string(l) + "]";
        const auto& e = w["levels"][l];
        if (!e.is_array() || e.size() != 2) throw ConfigError(path, "expected [height, width]");
        c.workload.shape.levels.push_back({positive(get_int32(e[0], path), path), positive(get_int32(e[1], path), path)});
    }
    c.workload.shape.channels = positive(get_int32(w["channels"], "workload.channels"), "workload.channels");
    c.workload.heads = positive(get_int32(w["heads"], "workload.heads"), "workload.heads");
    c.workload.points = positive(get_int32(w["points"], "workload.points"), "workload.points");
    const auto dist = get_string(w["distribution"], "workload.distribution");
    if (dist == "uniform") {
        c.workload.distribution = QueryDistribution::uniform;
    } else if (dist == "clustered") {
        c.workload.distribution = QueryDistribution::clustered;
    } else if (dist == "grid") {
        c.workload.distribution = QueryDistribution::grid;
    } else {
        throw ConfigError("workload.distribution", "expected uniform, clustered or grid");
    }
    c.workload.keep_ratio = get_double(w["keep_ratio"], "workload.keep_ratio");
    c.workload.decoder_queries = get_int32(w["decoder_queries"], "workload.decoder_queries");
    c.workload.clusters = get_int32(w["clusters"], "workload.clusters");
    c.workload.cluster_spread = get_double(w["cluster_spread"], "workload.cluster_spread");
    c.workload.offset_envelope = get_double(w["offset_envelope"], "workload.offset_envelope");
    c.workload.shared_offsets = get_bool(w["shared_offsets"], "workload.shared_offsets");
    c.workload.validate();

    c.window = positive(get_int32(doc["scheduler"]["window"], "scheduler.window"), "scheduler.window");
    c.parallelism =
        positive(get_int32(doc["scheduler"]["parallelism"], "scheduler.parallelism"), "scheduler.parallelism");

    const auto& cache = doc["cache"];
    const auto capacity = get_int(cache["capacity_lines"], "cache.capacity_lines");
    if (capacity < 2) throw ConfigError("cache.capacity_lines", "must be at least 2 (two ping-pong halves)");
    c.capacity_lines = static_cast<std::size_t>(capacity);
    c.banks = positive(get_int32(cache["banks"], "cache.banks"), "cache.banks");
    c.bytes_per_element =
        positive(get_int32(cache["bytes_per_element"], "cache.bytes_per_element"), "cache.bytes_per_element");
    if (!cache["region_radii"].is_null()) {
        const auto& r = cache["region_radii"];
        if (!r.is_array() || r.size() != c.workload.shape.num_levels()) {
            throw ConfigError("cache.region_radii", "expected null or one radius per level");
        }
        for (std::size_t l = 0; l < r.size(); ++l) {
            const auto path = "cache.region_radii[" + std::to_string(l) + "]";
            const int v = get_int32(r[l], path);
            if (v < 0) throw ConfigError(path, "must not be negative");
            c.region_radii.push_back(v);
        }
    }

    const auto& t = doc["timing"];
    if (!t["t_fetch_per_line"].is_null()) {
        c.t_fetch_per_line = get_int(t["t_fetch_per_line"], "timing.t_fetch_per_line");
        if (*c.t_fetch_per_line < 1) throw ConfigError("timing.t_fetch_per_line", "must be positive");
    }
    if (!t["t_comp_per_query"].is_null()) {
        c.t_comp_per_query = get_int(t["t_comp_per_query"], "timing.t_comp_per_query");
        if (*c.t_comp_per_query < 0) throw ConfigError("timing.t_comp_per_query", "must not be negative");
    }
    c.energy_per_bit_pj = get_double(t["energy_per_bit_pj"], "timing.energy_per_bit_pj");
    if (!(c.energy_per_bit_pj > 0.0) || !std::isfinite(c.energy_per_bit_pj)) {
        throw ConfigError("timing.energy_per_bit_pj", "must be positive");
    }
    c.bank_conflict_penalty = get_int(t["bank_conflict_penalty"], "timing.bank_conflict_penalty");
    if (c.bank_conflict_penalty < 0) throw ConfigError("timing.bank_conflict_penalty", "must not be negative");

    c.precision_enabled = get_bool(doc["precision"]["enabled"], "precision.enabled");
    c.precision_queries = positive(get_int32(doc["precision"]["queries"], "precision.queries"), "precision.queries");

    c.sweep.parameter = get_string(doc["sweep"]["parameter"], "sweep.parameter");
    const auto& values = doc["sweep"]["values"];
    if (!values.is_array()) throw ConfigError("sweep.values", "expected a list of numbers");
    for (std::size_t i = 0; i < values.size(); ++i) {
        c.sweep.values.push_back(get_double(values[i], "sweep.values[" + std::to_string(i) + "]"));
    }
    if (c.sweep.parameter.empty()) {
        if (!c.sweep.values.empty()) throw ConfigError("sweep.parameter", "values given without a parameter");
    } else {
        const auto& allowed = sweep_parameters();
        if (std::find(allowed.begin(), allowed.end(), c.sweep.parameter) == allowed.end()) {
            throw ConfigError("sweep.parameter", "'" + c.sweep.parameter + "' cannot be swept");
        }
        if (c.sweep.values.empty()) throw ConfigError("sweep.values", "must not be empty");
    }

    const auto& seeds = doc["seeds"];
    if (!seeds.is_array() || seeds.empty()) throw ConfigError("seeds", "must be a non-empty list");
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        const auto path = "seeds[" + std::to_string(i) + "]";
        const auto v = get_int(seeds[i], path);
        if (v < 0) throw ConfigError(path, "must not be negative");
        c.seeds.push_back(static_cast<std::uint64_t>(v));
    }

    const auto fmt = get_string(doc["output"]["format"], "output.format");
    if (fmt == "csv") {
        c.format = ReportFormat::csv;
    } else if (fmt == "json-lines") {
        c.format = ReportFormat::json_lines;
    } else {
        throw ConfigError("output.format", "expected csv or json-lines");
    }
    c.threads = get_int32(doc["threads"], "threads");
    if (c.threads < 0) throw ConfigError("threads", "must not be negative");

    // Cross-field checks that need the derived timing.
    c.timing().validate();
    return c;
}

Json load_config_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return Json::parse(buf.str());
    } catch (const Json::parse_error& e) {
        throw ConfigError("<file>", std::string("not valid JSON: ") + e.what());
    }
}

void set_path(Json& doc, std::string_view path, const Json& value) {
    const std::string p(path);
    Json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = p.find('.', start);
        const auto key = p.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!node->is_object() || !node->contains(key)) throw ConfigError(p, "unknown key");
        node = &(*node)[key];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    if (node->is_object()) throw ConfigError(p, "cannot replace a section");
    *node = value;
}

void apply_override(Json& doc, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw ConfigError("--set", "expected key=value, got '" + std::string(assignment) + "'");
    }
    const auto key = assignment.substr(0, eq);
    const std::string text(assignment.substr(eq + 1));
    Json value;
    try {
        value = Json::parse(text);
    } catch (const Json::parse_error&) {
        value = text;
    }
    set_path(doc, key, value);
}

ExperimentConfig config_for_point(const Json& doc, std::size_t point) {
    auto merged = merge_with_defaults(doc);
    const auto base = parse_config(merged);
    if (base.sweep.parameter.empty()) {
        if (point != 0) throw ConfigError("sweep", "point index out of range");
        return base;
    }
    if (point >= base.sweep.values.size()) throw ConfigError("sweep", "point index out of range");
    set_path(merged, base.sweep.parameter, base.sweep.values[point]);
    return parse_config(merged);
}

std::string_view to_string(ReportFormat f) { return f == ReportFormat::csv ? "csv" : "json-lines"; }

std::string_view to_string(WorkloadMode m) {
    switch (m) {
        case WorkloadMode::dense_encoder: return "dense_encoder";
        case WorkloadMode::sparse_encoder: return "sparse_encoder";
        case WorkloadMode::decoder: return "decoder";
    }
    return "?";
}

std::string_view to_string(QueryDistribution d) {
    switch (d) {
        case QueryDistribution::uniform: return "uniform";
        case QueryDistribution::clustered: return "clustered";
        case QueryDistribution::grid: return "grid";
    }
    return "?";
}

}  // namespace deformsim::harness
