#include "failband/dataset.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

using nlohmann::json;

namespace failband {

std::string to_string(Label l) {
    switch (l) {
    case Label::Success: return "success";
    case Label::Failure: return "failure";
    default: return "unknown";
    }
}

std::string to_string(FailureMode m) {
    switch (m) {
    case FailureMode::Slip: return "slip";
    case FailureMode::Jitter: return "jitter";
    case FailureMode::SensorShift: return "sensor_shift";
    case FailureMode::OodInit: return "ood_init";
    case FailureMode::Stall: return "stall";
    }
    return "?";
}

Label label_from_string(const std::string& s) {
    if (s == "success") return Label::Success;
    if (s == "failure") return Label::Failure;
    if (s == "unknown") return Label::Unknown;
    throw DataError("unknown label '" + s + "'");
}

FailureMode failure_mode_from_string(const std::string& s) {
    if (s == "slip") return FailureMode::Slip;
    if (s == "jitter") return FailureMode::Jitter;
    if (s == "sensor_shift") return FailureMode::SensorShift;
    if (s == "ood_init") return FailureMode::OodInit;
    if (s == "stall") return FailureMode::Stall;
    throw DataError("unknown failure mode '" + s + "'");
}

namespace {

json mat_to_json(const Mat& m) {
    json j = json::array();
    for (const auto& row : m) j.push_back(row);
    return j;
}

Mat mat_from_json(const json& j) {
    Mat m;
    for (const auto& row : j) m.push_back(row.get<Vec>());
    return m;
}

json rollout_to_json(const Rollout& r) {
    json j;
    j["id"] = r.id;
    j["label"] = to_string(r.label);
    if (r.failure_mode) j["failure_mode"] = to_string(*r.failure_mode);
    if (r.injection_time) j["injection_time"] = *r.injection_time;
    json steps = json::array();
    for (const auto& s : r.steps) {
        steps.push_back({{"t", s.t}, {"obs", s.obs}, {"action_chunk", mat_to_json(s.action_chunk)}});
    }
    j["steps"] = std::move(steps);
    return j;
}

Rollout rollout_from_json(const json& j) {
    Rollout r;
    r.id = j.at("id").get<std::string>();
    r.label = label_from_string(j.at("label").get<std::string>());
    if (j.contains("failure_mode"))
        r.failure_mode = failure_mode_from_string(j["failure_mode"].get<std::string>());
    if (j.contains("injection_time")) r.injection_time = j["injection_time"].get<int>();
    for (const auto& sj : j.at("steps")) {
        Step s;
        s.t = sj.at("t").get<int>();
        s.obs = sj.at("obs").get<Vec>();
        s.action_chunk = mat_from_json(sj.at("action_chunk"));
        r.steps.push_back(std::move(s));
    }
    return r;
}

} // namespace

void validate(const Dataset& dataset) {
    const auto& h = dataset.header;
    if (h.d_obs <= 0 || h.d_action <= 0 || h.horizon <= 0 || h.exec_horizon <= 0)
        throw DataError("header dimensions must be positive");
    if (h.exec_horizon >= h.horizon)
        throw DataError("header requires H' < H");
    for (const auto& r : dataset.rollouts) {
        if (r.steps.empty()) throw DataError("rollout '" + r.id + "' has no steps");
        int expect_t = 0;
        for (const auto& s : r.steps) {
            if (s.t != expect_t)
                throw DataError("rollout '" + r.id + "': step grid broken at t=" +
                                std::to_string(s.t) + ", expected " + std::to_string(expect_t));
            expect_t += h.exec_horizon;
            if (static_cast<int>(s.obs.size()) != h.d_obs)
                throw DataError("rollout '" + r.id + "': obs dim " + std::to_string(s.obs.size()) +
                                " != header d_O " + std::to_string(h.d_obs));
            if (static_cast<int>(s.action_chunk.size()) != h.horizon)
                throw DataError("rollout '" + r.id + "': action chunk has " +
                                std::to_string(s.action_chunk.size()) + " rows, expected H=" +
                                std::to_string(h.horizon));
            for (const auto& row : s.action_chunk)
                if (static_cast<int>(row.size()) != h.d_action)
                    throw DataError("rollout '" + r.id + "': action row dim mismatch");
            for (double v : s.obs)
                if (!std::isfinite(v)) throw DataError("rollout '" + r.id + "': non-finite obs");
        }
        if (r.injection_time && *r.injection_time > r.steps.back().t)
            throw DataError("rollout '" + r.id + "': injection_time past last step");
    }
}

Dataset load_rollouts(std::istream& in, const std::string& name) {
    Dataset ds;
    std::string line;
    size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(name + ":" + std::to_string(lineno) + ": parse error: " + e.what());
        }
        try {
            if (!have_header) {
                ds.header.d_obs = j.at("d_O").get<int>();
                ds.header.d_action = j.at("d_a").get<int>();
                ds.header.horizon = j.at("H").get<int>();
                ds.header.exec_horizon = j.at("H_prime").get<int>();
                ds.header.obs_window = j.at("T_O").get<int>();
                ds.header.version = j.at("version").get<int>();
                if (j.contains("embedding")) ds.header.embedding = mat_from_json(j["embedding"]);
                have_header = true;
            } else {
                ds.rollouts.push_back(rollout_from_json(j));
            }
        } catch (const json::exception& e) {
            throw DataError(name + ":" + std::to_string(lineno) + ": bad record: " + e.what());
        }
    }
    if (!have_header) {
        if (lineno == 0) throw DataError(name + ": empty file, missing header line");
        throw DataError(name + ": missing header line");
    }
    validate(ds);
    return ds;
}

Dataset load_rollouts(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    return load_rollouts(in, path);
}

void save_rollouts(const Dataset& dataset, std::ostream& out) {
    json header = {{"d_O", dataset.header.d_obs},
                   {"d_a", dataset.header.d_action},
                   {"H", dataset.header.horizon},
                   {"H_prime", dataset.header.exec_horizon},
                   {"T_O", dataset.header.obs_window},
                   {"version", dataset.header.version}};
    if (dataset.header.embedding) header["embedding"] = mat_to_json(*dataset.header.embedding);
    out << header.dump() << '\n';
    for (const auto& r : dataset.rollouts) out << rollout_to_json(r).dump() << '\n';
}

void save_rollouts(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    save_rollouts(dataset, out);
    out.flush();
    if (!out) throw DataError("I/O failure writing '" + path + "'");
}

} // namespace failband
