#include "failband/backend.hpp"
#include "failband/config.hpp"
#include "failband/conformal.hpp"
#include "failband/dataset.hpp"
#include "failband/detector.hpp"
#include "failband/eval.hpp"
#include "failband/flow.hpp"
#include "failband/scores.hpp"
#include "failband/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

using nlohmann::json;
using namespace failband;

namespace {

uint64_t resolve_seed(const std::optional<uint64_t>& flag, const config::KeyValueConfig& cfg) {
    if (flag) return *flag;
    if (cfg.has("seed")) return cfg.get_u64("seed", 0);
    if (const char* env = std::getenv("FAILBAND_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw ConfigError("FAILBAND_SEED is not an unsigned integer");
        }
    }
    return 0;
}

std::vector<synth::FailureSpec> parse_failure_spec(const std::string& text) {
    // comma-separated mode:probability[:param] entries
    std::vector<synth::FailureSpec> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::stringstream fs(item);
        std::string mode, prob, param;
        std::getline(fs, mode, ':');
        if (!std::getline(fs, prob, ':'))
            throw ConfigError("failure spec '" + item + "': expected mode:probability[:param]");
        std::getline(fs, param, ':');
        synth::FailureSpec spec;
        spec.mode = failure_mode_from_string(mode);
        try {
            spec.probability = std::stod(prob);
            if (!param.empty()) spec.param = std::stod(param);
        } catch (const std::exception&) {
            throw ConfigError("failure spec '" + item + "': non-numeric field");
        }
        out.push_back(spec);
    }
    return out;
}

ModulationVariant parse_variant(const std::string& s) {
    if (s == "v1") return ModulationVariant::V1;
    if (s == "v2") return ModulationVariant::V2;
    throw ConfigError("unknown modulation variant '" + s + "' (expected v1 or v2)");
}

eval::ReportFormat parse_format(const std::string& s) {
    if (s == "csv") return eval::ReportFormat::Csv;
    if (s == "text") return eval::ReportFormat::Text;
    throw ConfigError("unknown report format '" + s + "' (expected csv or text)");
}

double percentile(std::vector<double> v, double p) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    size_t idx = static_cast<size_t>(p * static_cast<double>(v.size() - 1));
    return v[idx];
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string config_path, out_path, failure_text;
    std::optional<uint64_t> seed;
    std::optional<long> n_rollouts;
};

int cmd_simulate(const SimulateArgs& a) {
    config::KeyValueConfig cfg;
    if (!a.config_path.empty()) cfg = config::KeyValueConfig::from_file(a.config_path);
    synth::SynthConfig sc;
    sc.n_rollouts = static_cast<int>(a.n_rollouts.value_or(cfg.get_long("n_rollouts", sc.n_rollouts)));
    sc.t_max = static_cast<int>(cfg.get_long("t_max", sc.t_max));
    sc.horizon = static_cast<int>(cfg.get_long("horizon", sc.horizon));
    sc.exec_horizon = static_cast<int>(cfg.get_long("exec_horizon", sc.exec_horizon));
    sc.obs_window = static_cast<int>(cfg.get_long("obs_window", sc.obs_window));
    sc.noise = cfg.get_double("noise", sc.noise);
    sc.d_feature = static_cast<int>(cfg.get_long("d_feature", sc.d_feature));
    sc.success_eps = cfg.get_double("success_eps", sc.success_eps);
    sc.step_size = cfg.get_double("step_size", sc.step_size);
    sc.seed = resolve_seed(a.seed, cfg);
    sc.embedding_seed = cfg.get_u64("embedding_seed", sc.embedding_seed);
    std::string failure_text =
        a.failure_text.empty() ? cfg.get_string("failure_spec", "") : a.failure_text;
    sc.failure_spec = parse_failure_spec(failure_text);

    Dataset ds = synth::generate_dataset(sc);
    save_rollouts(ds, a.out_path);

    long success = 0, failure = 0;
    std::map<std::string, long> by_mode;
    for (const auto& r : ds.rollouts) {
        if (r.label == Label::Success) ++success;
        else {
            ++failure;
            ++by_mode[r.failure_mode ? to_string(*r.failure_mode) : "unattributed"];
        }
    }
    std::cout << "wrote " << ds.rollouts.size() << " rollouts to " << a.out_path << "\n"
              << "  success: " << success << "\n  failure: " << failure << "\n";
    for (const auto& [mode, n] : by_mode) std::cout << "    " << mode << ": " << n << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string method, train_path, model_out, config_path;
    std::optional<uint64_t> seed;
    std::optional<long> epochs, batch, output_dim, pca_m, pca_k;
    std::optional<double> lr, consistency_weight;
};

void write_manifest(const std::string& model_path, const std::string& method, int input_dim,
                    int output_dim, uint64_t seed, const config::KeyValueConfig& effective) {
    json j = {{"method", method},
              {"input_dim", input_dim},
              {"output_dim", output_dim},
              {"seed", seed},
              {"config_hash", config::config_hash(effective)}};
    std::ofstream out(model_path + ".manifest.json");
    if (!out) throw DataError("cannot write manifest for '" + model_path + "'");
    out << j.dump(2) << '\n';
}

int cmd_train_score(const TrainArgs& a) {
    auto method = scores::method_from_string(a.method);
    if (scores::is_post_hoc(method))
        throw ConfigError("method '" + a.method + "' requires no training");

    config::KeyValueConfig cfg;
    if (!a.config_path.empty()) cfg = config::KeyValueConfig::from_file(a.config_path);
    uint64_t seed = resolve_seed(a.seed, cfg);
    int epochs = static_cast<int>(a.epochs.value_or(cfg.get_long("epochs", 200)));
    int batch = static_cast<int>(a.batch.value_or(cfg.get_long("batch", 128)));
    double lr = a.lr.value_or(cfg.get_double("lr", 1e-4));

    Dataset ds = load_rollouts(a.train_path);
    validate(ds);
    if (ds.rollouts.empty()) throw DataError("training dataset is empty");

    Mat obs_rows, rnd_rows;
    for (const auto& r : ds.rollouts)
        for (const auto& s : r.steps) {
            obs_rows.push_back(s.obs);
            if (method == scores::ScoreMethodId::Rnd)
                rnd_rows.push_back(scores::concat_action_obs(s.action_chunk, s.obs));
        }

    config::KeyValueConfig effective;
    effective.set("method", a.method);
    effective.set("epochs", std::to_string(epochs));
    effective.set("batch", std::to_string(batch));
    effective.set("lr", std::to_string(lr));
    effective.set("seed", std::to_string(seed));

    int input_dim = 0, output_dim = 0;
    switch (method) {
    case scores::ScoreMethodId::LogpZO:
    case scores::ScoreMethodId::LogpO: {
        flow::TrainConfig tc{epochs, batch, lr, seed, {128, 128}};
        auto model = flow::train_flow(obs_rows, tc);
        flow::save_flow_model(model, a.model_out);
        input_dim = output_dim = model.data_dim;
        break;
    }
    case scores::ScoreMethodId::Cfm: {
        scores::CfmConfig cc;
        cc.base = flow::TrainConfig{epochs, batch, lr, seed, {128, 128}};
        cc.consistency_weight = a.consistency_weight.value_or(cfg.get_double("consistency_weight", 1.0));
        effective.set("consistency_weight", std::to_string(cc.consistency_weight));
        auto model = scores::cfm_train(obs_rows, cc);
        scores::save_cfm_model(model, a.model_out);
        input_dim = output_dim = model.flow.data_dim;
        break;
    }
    case scores::ScoreMethodId::Rnd: {
        scores::RndConfig rc;
        rc.epochs = epochs;
        rc.batch = batch;
        rc.lr = lr;
        rc.seed = seed;
        rc.output_dim = static_cast<int>(a.output_dim.value_or(cfg.get_long("output_dim", 64)));
        effective.set("output_dim", std::to_string(rc.output_dim));
        auto model = scores::rnd_train(rnd_rows, rc);
        scores::save_rnd_model(model, a.model_out);
        input_dim = model.target.input_dim();
        output_dim = model.target.output_dim();
        break;
    }
    case scores::ScoreMethodId::PcaKmeans: {
        int m = static_cast<int>(a.pca_m.value_or(cfg.get_long("pca_m", 0)));
        int k = static_cast<int>(a.pca_k.value_or(cfg.get_long("pca_k", 64)));
        effective.set("pca_m", std::to_string(m));
        effective.set("pca_k", std::to_string(k));
        auto model = scores::pca_kmeans_fit(obs_rows, m, k, seed);
        scores::save_pca_kmeans_model(model, a.model_out);
        input_dim = static_cast<int>(model.mean.size());
        output_dim = static_cast<int>(model.components.size());
        break;
    }
    default: throw ConfigError("unreachable method");
    }

    write_manifest(a.model_out, a.method, input_dim, output_dim, seed, effective);
    std::cout << "trained " << a.method << " on " << obs_rows.size() << " steps -> " << a.model_out
              << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

backend::ScoreBackend make_backend(const std::string& method_name, const std::string& model_path,
                                   const DatasetHeader& header, int stac_batch, double stac_noise,
                                   uint64_t seed) {
    auto method = scores::method_from_string(method_name);
    switch (method) {
    case scores::ScoreMethodId::Sparc: return backend::ScoreBackend::make_sparc();
    case scores::ScoreMethodId::Stac: {
        backend::ScoreBackend::StacOptions opt;
        opt.batch_size = stac_batch;
        opt.noise = stac_noise;
        opt.seed = seed;
        return backend::ScoreBackend::make_stac(header, opt);
    }
    default:
        if (model_path.empty())
            throw ConfigError("method '" + method_name + "' needs --model");
        return backend::ScoreBackend::load(method, model_path);
    }
}

struct CalibrateArgs {
    std::string method, model_path, data_path, band_out, variant = "v2";
    double alpha = 0.05, split_ratio = 0.3, stac_noise = 0.005;
    int stac_batch = 64;
    bool allow_mixed = false;
    std::optional<uint64_t> seed;
};

int cmd_calibrate(const CalibrateArgs& a) {
    Dataset ds = load_rollouts(a.data_path);
    validate(ds);
    uint64_t seed = resolve_seed(a.seed, {});

    std::vector<Rollout> cal;
    for (const auto& r : ds.rollouts) {
        if (r.label == Label::Success) {
            cal.push_back(r);
        } else if (!a.allow_mixed) {
            throw DataError("calibration dataset contains non-success rollout '" + r.id +
                            "'; pass --allow-mixed to filter instead of failing");
        }
    }
    if (cal.size() < 2) throw DataError("calibration needs at least 2 successful rollouts");

    Dataset cal_ds{ds.header, cal};
    auto be = make_backend(a.method, a.model_path, ds.header, a.stac_batch, a.stac_noise, seed);
    auto series = be.score_dataset(cal_ds);

    if (scores::method_from_string(a.method) == scores::ScoreMethodId::Stac) {
        double threshold = scores::stac_calibrate_threshold(series, a.alpha);
        json j = {{"method", "stac"},
                  {"alpha", a.alpha},
                  {"cumulative_threshold", threshold},
                  {"n_cal", cal.size()},
                  {"batch_size", a.stac_batch}};
        std::ofstream out(a.band_out);
        if (!out) throw DataError("cannot write '" + a.band_out + "'");
        out << j.dump(2) << '\n';
        std::cout << "stac cumulative threshold " << threshold << " -> " << a.band_out << "\n";
        return 0;
    }

    CPBand band = conformal::build_band(series, a.alpha, parse_variant(a.variant), a.split_ratio,
                                        seed);
    conformal::save_band(band, a.band_out);
    std::cout << "band over " << cal.size() << " rollouts (h=" << band.h << ") -> " << a.band_out
              << "\n";
    for (const auto& w : band.warnings) std::cout << "warning: " << w << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct DetectArgs {
    std::string method, model_path, band_path, data_path, results_out;
    double stac_noise = 0.005;
    int stac_batch = 64;
    std::optional<uint64_t> seed;
};

int cmd_detect(const DetectArgs& a) {
    Dataset ds = load_rollouts(a.data_path);
    validate(ds);
    uint64_t seed = resolve_seed(a.seed, {});
    auto method = scores::method_from_string(a.method);
    auto be = make_backend(a.method, a.model_path, ds.header, a.stac_batch, a.stac_noise, seed);

    std::optional<CPBand> band;
    double stac_threshold = 0.0;
    if (method == scores::ScoreMethodId::Stac) {
        std::ifstream in(a.band_path);
        if (!in) throw DataError("cannot open '" + a.band_path + "'");
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw DataError("threshold file '" + a.band_path + "': " + e.what());
        }
        if (j.value("method", "") != "stac")
            throw DataError("threshold file '" + a.band_path + "' is not a stac threshold");
        stac_threshold = j.at("cumulative_threshold").get<double>();
    } else {
        band = conformal::load_band(a.band_path);
    }

    std::vector<double> latency;
    std::ofstream out(a.results_out);
    if (!out) throw DataError("cannot write '" + a.results_out + "'");
    long flagged_count = 0;
    for (const auto& rollout : ds.rollouts) {
        ScoreSeries series = be.score_rollout(rollout, &latency);
        DetectionResult result = band ? detector::detect_rollout(*band, series)
                                      : detector::detect_cumulative(stac_threshold, series);
        if (result.flagged) ++flagged_count;
        Vec values;
        for (const auto& [t, v] : series.values) values.push_back(v);
        json j = {{"id", rollout.id},
                  {"label", to_string(rollout.label)},
                  {"flagged", result.flagged},
                  {"per_step", result.per_step},
                  {"scores", values}};
        if (result.detection_time) j["detection_time"] = *result.detection_time;
        out << j.dump() << '\n';
    }
    out.flush();
    if (!out) throw DataError("I/O failure writing '" + a.results_out + "'");

    std::cout << "flagged " << flagged_count << "/" << ds.rollouts.size() << " rollouts -> "
              << a.results_out << "\n"
              << "per-step scoring latency ms: p50=" << percentile(latency, 0.5)
              << " p95=" << percentile(latency, 0.95) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct ResultRow {
    std::string id;
    Label label = Label::Unknown;
    DetectionResult result;
};

std::vector<ResultRow> load_results(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open results file '" + path + "'");
    std::vector<ResultRow> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("results '" + path + "' line " + std::to_string(lineno) + ": " +
                            e.what());
        }
        ResultRow row;
        row.id = j.at("id").get<std::string>();
        row.label = label_from_string(j.at("label").get<std::string>());
        row.result.rollout_id = row.id;
        row.result.flagged = j.at("flagged").get<bool>();
        if (j.contains("detection_time")) row.result.detection_time = j["detection_time"].get<int>();
        rows.push_back(std::move(row));
    }
    return rows;
}

struct EvaluateArgs {
    std::string results_path, report_out, method = "unknown", setting = "default",
                format = "csv";
    double alpha = 0.05;
};

int cmd_evaluate(const EvaluateArgs& a) {
    auto rows = load_results(a.results_path);
    if (rows.empty()) throw DataError("results file '" + a.results_path + "' has no rows");
    std::vector<DetectionResult> detections;
    std::vector<Label> labels;
    for (const auto& r : rows) {
        detections.push_back(r.result);
        labels.push_back(r.label);
    }
    MetricsReport report = eval::metrics(detections, labels, a.alpha);
    eval::emit_report({{a.method, a.setting, report}}, parse_format(a.format), a.report_out);
    std::cout << "report -> " << a.report_out << "\n";
    if (report.balanced_acc) std::cout << "balanced accuracy " << *report.balanced_acc << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct SweepArgs {
    std::string method, model_path, cal_path, test_path, report_out, variant = "v2",
                format = "csv", setting = "sweep";
    double split_ratio = 0.3, grid_min = 0.0, grid_max = 0.0, stac_noise = 0.005;
    int grid_count = 0, stac_batch = 64;
    std::optional<uint64_t> seed;
};

int cmd_sweep_alpha(const SweepArgs& a) {
    auto method = scores::method_from_string(a.method);
    if (method == scores::ScoreMethodId::Stac)
        throw ConfigError("sweep-alpha applies to band-thresholded methods, not stac");
    Dataset cal_ds = load_rollouts(a.cal_path);
    Dataset test_ds = load_rollouts(a.test_path);
    validate(cal_ds);
    validate(test_ds);
    uint64_t seed = resolve_seed(a.seed, {});

    std::vector<Rollout> cal_success;
    for (const auto& r : cal_ds.rollouts)
        if (r.label == Label::Success) cal_success.push_back(r);
    if (cal_success.size() < 2) throw DataError("need at least 2 successful calibration rollouts");
    Dataset cal_only{cal_ds.header, cal_success};

    auto be = make_backend(a.method, a.model_path, cal_ds.header, a.stac_batch, a.stac_noise, seed);
    auto cal_series = be.score_dataset(cal_only);
    auto test_series = be.score_dataset(test_ds);
    std::vector<Label> labels;
    for (const auto& r : test_ds.rollouts) labels.push_back(r.label);

    Vec grid;
    if (a.grid_count > 0) {
        if (a.grid_count == 1) {
            grid.push_back(a.grid_min);
        } else {
            for (int i = 0; i < a.grid_count; ++i)
                grid.push_back(a.grid_min + (a.grid_max - a.grid_min) * i / (a.grid_count - 1));
        }
    } else {
        grid = eval::default_alpha_grid();
    }

    auto sweep = eval::alpha_sweep(cal_series, test_series, labels, grid,
                                   parse_variant(a.variant), a.split_ratio, seed);
    std::vector<eval::ReportRow> rows;
    for (const auto& entry : sweep) rows.push_back({a.method, a.setting, entry.report});
    eval::emit_report(std::move(rows), parse_format(a.format), a.report_out);
    std::cout << sweep.size() << " alpha points -> " << a.report_out << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Runtime failure detection for rollout policies: scalar anomaly scores "
                 "thresholded by a conformal prediction band"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "Generate a synthetic rollout dataset");
    c_sim->add_option("--config", sim.config_path, "key=value config file");
    c_sim->add_option("--out", sim.out_path, "output dataset path")->required();
    c_sim->add_option("--n-rollouts", sim.n_rollouts);
    c_sim->add_option("--failure", sim.failure_text, "mode:prob[:param],... failure spec");
    c_sim->add_option("--seed", sim.seed);

    TrainArgs tr;
    auto* c_tr = app.add_subcommand("train-score", "Train a score model on a dataset");
    c_tr->add_option("--method", tr.method)->required();
    c_tr->add_option("--train", tr.train_path)->required();
    c_tr->add_option("--model-out", tr.model_out)->required();
    c_tr->add_option("--config", tr.config_path);
    c_tr->add_option("--epochs", tr.epochs);
    c_tr->add_option("--batch", tr.batch);
    c_tr->add_option("--lr", tr.lr);
    c_tr->add_option("--output-dim", tr.output_dim, "RND target output dim");
    c_tr->add_option("--consistency-weight", tr.consistency_weight, "CFM regularizer weight");
    c_tr->add_option("--pca-m", tr.pca_m, "PCA dims (0 = 95% variance rule)");
    c_tr->add_option("--pca-k", tr.pca_k, "k-means cluster count");
    c_tr->add_option("--seed", tr.seed);

    CalibrateArgs ca;
    auto* c_ca = app.add_subcommand("calibrate", "Build the conformal band on successful rollouts");
    c_ca->add_option("--method", ca.method)->required();
    c_ca->add_option("--model", ca.model_path);
    c_ca->add_option("--data", ca.data_path)->required();
    c_ca->add_option("--band-out", ca.band_out)->required();
    c_ca->add_option("--alpha", ca.alpha);
    c_ca->add_option("--variant", ca.variant, "modulation: v1 or v2");
    c_ca->add_option("--split-ratio", ca.split_ratio);
    c_ca->add_flag("--allow-mixed", ca.allow_mixed, "filter non-success rollouts instead of failing");
    c_ca->add_option("--stac-B", ca.stac_batch, "STAC sampled plans per step");
    c_ca->add_option("--stac-noise", ca.stac_noise);
    c_ca->add_option("--seed", ca.seed);

    DetectArgs de;
    auto* c_de = app.add_subcommand("detect", "Score a dataset and apply the band");
    c_de->add_option("--method", de.method)->required();
    c_de->add_option("--model", de.model_path);
    c_de->add_option("--band", de.band_path)->required();
    c_de->add_option("--data", de.data_path)->required();
    c_de->add_option("--results-out", de.results_out)->required();
    c_de->add_option("--stac-B", de.stac_batch);
    c_de->add_option("--stac-noise", de.stac_noise);
    c_de->add_option("--seed", de.seed);

    EvaluateArgs ev;
    auto* c_ev = app.add_subcommand("evaluate", "Metrics report from detection results");
    c_ev->add_option("--results", ev.results_path)->required();
    c_ev->add_option("--report-out", ev.report_out)->required();
    c_ev->add_option("--method", ev.method);
    c_ev->add_option("--setting", ev.setting);
    c_ev->add_option("--alpha", ev.alpha);
    c_ev->add_option("--format", ev.format, "csv or text");

    SweepArgs sw;
    auto* c_sw = app.add_subcommand("sweep-alpha", "Recalibrate and evaluate across alpha values");
    c_sw->add_option("--method", sw.method)->required();
    c_sw->add_option("--model", sw.model_path);
    c_sw->add_option("--cal-data", sw.cal_path)->required();
    c_sw->add_option("--test-data", sw.test_path)->required();
    c_sw->add_option("--report-out", sw.report_out)->required();
    c_sw->add_option("--variant", sw.variant);
    c_sw->add_option("--split-ratio", sw.split_ratio);
    c_sw->add_option("--grid-min", sw.grid_min);
    c_sw->add_option("--grid-max", sw.grid_max);
    c_sw->add_option("--grid-count", sw.grid_count, "0 = default 10 points in [0.01, 0.1]");
    c_sw->add_option("--format", sw.format);
    c_sw->add_option("--setting", sw.setting);
    c_sw->add_option("--stac-B", sw.stac_batch);
    c_sw->add_option("--stac-noise", sw.stac_noise);
    c_sw->add_option("--seed", sw.seed);

    try {
        app.parse(argc, argv);
        if (*c_sim) return cmd_simulate(sim);
        if (*c_tr) return cmd_train_score(tr);
        if (*c_ca) return cmd_calibrate(ca);
        if (*c_de) return cmd_detect(de);
        if (*c_ev) return cmd_evaluate(ev);
        if (*c_sw) return cmd_sweep_alpha(sw);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
