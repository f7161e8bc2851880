#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "deformsim/errors.hpp"
#include "deformsim/harness/config.hpp"
#include "deformsim/harness/experiment.hpp"
#include "deformsim/harness/report.hpp"
#include "deformsim/harness/trace.hpp"
#include "deformsim/harness/verify.hpp"

namespace {

using deformsim::harness::Json;

Json load_with_overrides(const std::string& path, const std::vector<std::string>& overrides) {
    auto doc = deformsim::harness::merge_with_defaults(deformsim::harness::load_config_json(path));
    for (const auto& o : overrides) deformsim::harness::apply_override(doc, o);
    return doc;
}

Json report_json(const deformsim::SimReport& r) {
    return Json{{"accesses", r.accesses},
                {"hits", r.hits},
                {"misses", r.misses},
                {"hit_rate", r.hit_rate},
                {"fetched_lines", r.fetched_lines},
                {"stall_cycles", r.stall_cycles},
                {"cold_start_cycles", r.cold_start_cycles},
                {"residual_stall_cycles", r.residual_stall_cycles},
                {"victim_cycles", r.victim_cycles},
                {"covered_cycles", r.covered_cycles},
                {"total_cycles", r.total_cycles},
                {"energy_pj", r.energy_pj},
                {"regional_reuse", r.regional_reuse}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deformable-attention kernels, DOOQ scheduling and cache-locality simulation"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_path;
    auto* run = app.add_subcommand("run", "Run a sweep and write a report");
    run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--set", overrides, "Override a config field: dotted.path=value");
    run->add_option("--out", out_path, "Report path; a <out>.meta.json sidecar is written next to it")->required();

    std::uint64_t verify_seed = 1;
    auto* verify = app.add_subcommand("verify", "Check every kernel against its oracle");
    verify->add_option("--seed", verify_seed, "Seed for the random instances");

    auto* trace = app.add_subcommand("trace", "Export or replay access traces");
    trace->require_subcommand(1);
    std::size_t point = 0;
    std::uint64_t trace_seed = 0;
    bool seed_given = false;
    auto* exp = trace->add_subcommand("export", "Write the trace of one sweep point and seed");
    exp->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    exp->add_option("--set", overrides, "Override a config field: dotted.path=value");
    exp->add_option("--point", point, "Sweep point index");
    exp->add_option("--seed", trace_seed, "Seed (default: first seed of the config)")->each([&](const std::string&) {
        seed_given = true;
    });
    exp->add_option("--out", out_path, "Trace path")->required();

    std::string trace_path;
    auto* rep = trace->add_subcommand("replay", "Re-simulate a trace and compare with its recorded accesses");
    rep->add_option("--trace", trace_path, "Trace file")->required()->check(CLI::ExistingFile);
    rep->add_option("--config", config_path, "Config supplying cache geometry and timing")->check(CLI::ExistingFile);
    rep->add_option("--set", overrides, "Override a config field: dotted.path=value");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            const auto doc = load_with_overrides(config_path, overrides);
            const auto config = deformsim::harness::parse_config(doc);
            const auto rows = deformsim::harness::run_experiment(doc);
            deformsim::harness::emit_report(rows, config.format, out_path, doc);
            std::printf("wrote %zu rows to %s\n", rows.size(), out_path.c_str());
            return 0;
        }
        if (verify->parsed()) {
            const auto summary = deformsim::harness::verify_kernels(verify_seed);
            for (const auto& s : summary.suites) {
                std::printf("%-4s %s: %s\n", s.passed ? "ok" : "FAIL", s.name.c_str(), s.detail.c_str());
            }
            return summary.passed() ? 0 : 1;
        }
        if (exp->parsed()) {
            const auto doc = load_with_overrides(config_path, overrides);
            const auto config = deformsim::harness::parse_config(doc);
            const auto seed = seed_given ? trace_seed : config.seeds.front();
            const auto t = deformsim::harness::export_trace(doc, point, seed);
            deformsim::harness::save_trace(t, out_path);
            std::printf("wrote trace of %zu queries to %s\n", t.query_ids.size(), out_path.c_str());
            return 0;
        }
        if (rep->parsed()) {
            auto doc = config_path.empty() ? deformsim::harness::default_config_json()
                                           : deformsim::harness::merge_with_defaults(
                                                 deformsim::harness::load_config_json(config_path));
            for (const auto& o : overrides) deformsim::harness::apply_override(doc, o);
            const auto t = deformsim::harness::load_trace(trace_path);
            // Geometry and timing follow the trace's pyramid, not the config's.
            Json levels = Json::array();
            for (const auto& l : t.shape.levels) levels.push_back({l.height, l.width});
            doc["workload"]["levels"] = levels;
            doc["workload"]["channels"] = t.shape.channels;
            doc["workload"]["heads"] = t.dims.heads;
            doc["workload"]["points"] = t.dims.points;
            const auto config = deformsim::harness::parse_config(doc);
            const auto r = deformsim::harness::replay_trace(
                t, config.geometry(deformsim::CachePolicy::direct_mapped), config.timing());
            Json out{{"baseline", report_json(r.baseline)},
                     {"dooq_pingpong", report_json(r.pingpong)},
                     {"baseline_log_matches", r.baseline_log_matches},
                     {"pingpong_log_matches", r.pingpong_log_matches}};
            std::cout << out.dump(2) << "\n";
            return r.baseline_log_matches && r.pingpong_log_matches ? 0 : 1;
        }
    } catch (const deformsim::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
