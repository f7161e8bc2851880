#include "deformsim/harness/trace.hpp"

#include <fstream>
#include <sstream>

#include "deformsim/errors.hpp"
#include "deformsim/harness/experiment.hpp"

namespace deformsim::harness {

namespace {

constexpr const char* kTraceFormat = "deformsim-trace";

Json line_json(const LineId& l) { return Json::array({l.level, l.y, l.x}); }

LineId line_from(const Json& j) {
    if (!j.is_array() || j.size() != 3) throw DataCorruptionError("trace: a line must be [level, y, x]");
    return {j[0].get<std::int32_t>(), j[1].get<std::int32_t>(), j[2].get<std::int32_t>()};
}

const Json& require(const Json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw DataCorruptionError(std::string("trace: missing '") + key + "'");
    return j[key];
}

const NamedSchedule& find_schedule(const TraceFile& t, const std::string& name) {
    for (const auto& s : t.schedules) {
        if (s.name == name) return s;
    }
    throw DataCorruptionError("trace: no schedule named '" + name + "'");
}

const AccessLog* find_log(const TraceFile& t, const std::string& name) {
    for (const auto& l : t.logs) {
        if (l.schedule == name) return &l;
    }
    return nullptr;
}

}  // namespace

Json trace_to_json(const TraceFile& t) {
    Json doc;
    doc["format"] = kTraceFormat;
    doc["version"] = t.version;
    std::size_t lines = 0;
    for (const auto& f : t.footprints) lines += f.size();
    std::size_t accesses = 0;
    for (const auto& l : t.logs) accesses += l.records.size();
    Json levels = Json::array();
    for (const auto& s : t.shape.levels) levels.push_back({s.height, s.width});
    doc["header"] = {
        {"pyramid", {{"levels", levels}, {"channels", t.shape.channels}}},
        {"dims", {{"heads", t.dims.heads}, {"levels", t.dims.levels}, {"points", t.dims.points}}},
        {"counts",
         {{"queries", t.query_ids.size()},
          {"footprint_lines", lines},
          {"schedules", t.schedules.size()},
          {"accesses", accesses}}},
    };
    Json queries = Json::array();
    for (std::size_t i = 0; i < t.query_ids.size(); ++i) {
        queries.push_back({{"id", t.query_ids[i]}, {"ref", {t.ref_points[i].u, t.ref_points[i].v}}});
    }
    doc["queries"] = queries;
    doc["radii"] = t.radii;
    Json fps = Json::array();
    for (const auto& f : t.footprints) {
        Json arr = Json::array();
        for (const auto& l : f) arr.push_back(line_json(l));
        fps.push_back(arr);
    }
    doc["footprints"] = fps;
    Json sch = Json::array();
    for (const auto& s : t.schedules) sch.push_back({{"name", s.name}, {"order", s.order}, {"lookahead", s.lookahead}});
    doc["schedules"] = sch;
    Json logs = Json::array();
    for (const auto& l : t.logs) {
        Json recs = Json::array();
        for (const auto& r : l.records) recs.push_back({r.step, r.line.level, r.line.y, r.line.x, r.hit ? 1 : 0});
        logs.push_back({{"schedule", l.schedule}, {"records", recs}});
    }
    doc["accesses"] = logs;
    return doc;
}

TraceFile trace_from_json(const Json& doc) {
    if (!doc.is_object() || require(doc, "format") != kTraceFormat) {
        throw DataCorruptionError("trace: not a deformsim trace");
    }
    TraceFile t;
    t.version = require(doc, "version").get<int>();
    if (t.version != kTraceVersion) {
        throw DataCorruptionError("trace: unsupported version " + std::to_string(t.version) + ", expected " +
                                  std::to_string(kTraceVersion));
    }
    try {
        const auto& header = require(doc, "header");
        const auto& pyr = require(header, "pyramid");
        for (const auto& l : require(pyr, "levels")) t.shape.levels.push_back({l.at(0).get<int>(), l.at(1).get<int>()});
        t.shape.channels = require(pyr, "channels").get<int>();
        const auto& dims = require(header, "dims");
        t.dims = {require(dims, "heads").get<int>(), require(dims, "levels").get<int>(),
                  require(dims, "points").get<int>()};
        for (const auto& q : require(doc, "queries")) {
            t.query_ids.push_back(require(q, "id").get<std::int64_t>());
            const auto& ref = require(q, "ref");
            t.ref_points.push_back({ref.at(0).get<double>(), ref.at(1).get<double>()});
        }
        t.radii = require(doc, "radii").get<std::vector<int>>();
        for (const auto& f : require(doc, "footprints")) {
            Footprint fp;
            for (const auto& l : f) fp.push_back(line_from(l));
            t.footprints.push_back(std::move(fp));
        }
        for (const auto& s : require(doc, "schedules")) {
            t.schedules.push_back({require(s, "name").get<std::string>(),
                                   require(s, "order").get<std::vector<std::size_t>>(),
                                   require(s, "lookahead").get<std::vector<std::size_t>>()});
        }
        for (const auto& l : require(doc, "accesses")) {
            AccessLog log{require(l, "schedule").get<std::string>(), {}};
            for (const auto& r : require(l, "records")) {
                if (!r.is_array() || r.size() != 5) throw DataCorruptionError("trace: malformed access record");
                log.records.push_back({r[0].get<std::uint32_t>(),
                                       {r[1].get<std::int32_t>(), r[2].get<std::int32_t>(), r[3].get<std::int32_t>()},
                                       r[4].get<int>() != 0});
            }
            t.logs.push_back(std::move(log));
        }

        const auto& counts = require(header, "counts");
        std::size_t lines = 0;
        for (const auto& f : t.footprints) lines += f.size();
        std::size_t accesses = 0;
        for (const auto& l : t.logs) accesses += l.records.size();
        if (require(counts, "queries").get<std::size_t>() != t.query_ids.size() ||
            t.footprints.size() != t.query_ids.size() ||
            require(counts, "footprint_lines").get<std::size_t>() != lines ||
            require(counts, "schedules").get<std::size_t>() != t.schedules.size() ||
            require(counts, "accesses").get<std::size_t>() != accesses) {
            throw DataCorruptionError("trace: header counts disagree with the body");
        }
    } catch (const Json::exception& e) {
        throw DataCorruptionError(std::string("trace: ") + e.what());
    }
    for (const auto& s : t.schedules) {
        if (!is_permutation_of_range(s.order, t.query_ids.size())) {
            throw DataCorruptionError("trace: schedule '" + s.name + "' is not a permutation of the queries");
        }
    }
    return t;
}

void save_trace(const TraceFile& trace, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << trace_to_json(trace).dump() << "\n";
    if (!out) throw IoError("failed writing '" + path + "'");
}

TraceFile load_trace(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read trace '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    Json doc;
    try {
        doc = Json::parse(buf.str());
    } catch (const Json::parse_error& e) {
        throw DataCorruptionError(std::string("trace: not valid JSON: ") + e.what());
    }
    return trace_from_json(doc);
}

TraceFile export_trace(const Json& config_doc, std::size_t point, std::uint64_t seed) {
    const auto config = config_for_point(config_doc, point);
    std::vector<AccessRecord> base_log;
    std::vector<AccessRecord> pp_log;
    const auto r = evaluate_point(config, seed, &base_log, &pp_log);
    TraceFile t;
    t.shape = r.workload.pyramid.shape();
    t.dims = r.workload.queries.dims;
    for (const auto& q : r.workload.queries.queries) {
        t.query_ids.push_back(q.id);
        t.ref_points.push_back(q.ref_point);
    }
    t.radii = r.radii;
    t.footprints = r.footprints;
    const auto identity = identity_schedule(r.footprints.size());
    t.schedules.push_back({"identity", identity.order, identity.lookahead});
    t.schedules.push_back({"dooq", r.dooq.order, r.dooq.lookahead});
    t.logs.push_back({"identity", std::move(base_log)});
    t.logs.push_back({"dooq", std::move(pp_log)});
    return t;
}

ReplayResult replay_trace(const TraceFile& trace, const CacheGeometry& geometry, const TimingConfig& timing) {
    ReplayResult result;
    const auto& identity = find_schedule(trace, "identity");
    std::vector<Footprint> in_order;
    in_order.reserve(identity.order.size());
    for (const auto pos : identity.order) in_order.push_back(trace.footprints[pos]);
    std::vector<AccessRecord> base_log;
    auto base_geometry = geometry;
    base_geometry.policy = CachePolicy::direct_mapped;
    result.baseline = simulate_baseline(in_order, trace.shape, base_geometry, timing, &base_log);
    if (const auto* stored = find_log(trace, "identity")) result.baseline_log_matches = stored->records == base_log;

    const auto& dooq = find_schedule(trace, "dooq");
    Schedule s{dooq.order, dooq.lookahead, {}};
    std::vector<LineSet> regions;
    regions.reserve(s.order.size());
    for (const auto pos : s.order) regions.push_back(prefetch_region(trace.ref_points[pos], trace.radii, trace.shape));
    auto pp_geometry = geometry;
    pp_geometry.policy = CachePolicy::dooq_pingpong;
    std::vector<AccessRecord> pp_log;
    result.pingpong = simulate_dooq_pingpong(s, trace.footprints, regions, pp_geometry, timing, &pp_log);
    if (const auto* stored = find_log(trace, "dooq")) result.pingpong_log_matches = stored->records == pp_log;
    return result;
}

}  // namespace deformsim::harness
