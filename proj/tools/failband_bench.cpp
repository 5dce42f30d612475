#include "failband/backend.hpp"
#include "failband/dataset.hpp"
#include "failband/kernels.hpp"
#include "failband/rng.hpp"
#include "failband/scores.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>

using namespace failband;

namespace {

struct LatencyStats {
    double p50 = 0.0, p95 = 0.0, mean = 0.0;
};

LatencyStats stats_from(std::vector<double> samples) {
    if (samples.empty()) throw ConfigError("bench: no latency samples collected");
    LatencyStats s;
    s.mean = std::accumulate(samples.begin(), samples.end(), 0.0) /
             static_cast<double>(samples.size());
    std::sort(samples.begin(), samples.end());
    s.p50 = samples[static_cast<size_t>(0.5 * (samples.size() - 1))];
    s.p95 = samples[static_cast<size_t>(0.95 * (samples.size() - 1))];
    return s;
}

void emit_row(std::ostream& out, const std::string& method, const LatencyStats& s) {
    out << method << "," << s.p50 << "," << s.p95 << "," << s.mean << "\n";
}

struct ScoreArgs {
    std::string method, model_path, data_path, out_path;
    int reps = 3;
    int stac_batch = 256;
    double stac_noise = 0.005;
    uint64_t seed = 0;
};

int cmd_score(const ScoreArgs& a) {
    if (a.reps < 1) throw ConfigError("bench: --reps must be >= 1");
    Dataset ds = load_rollouts(a.data_path);
    validate(ds);

    auto method = scores::method_from_string(a.method);
    backend::ScoreBackend be = [&] {
        switch (method) {
        case scores::ScoreMethodId::Sparc: return backend::ScoreBackend::make_sparc();
        case scores::ScoreMethodId::Stac: {
            backend::ScoreBackend::StacOptions opt;
            opt.batch_size = a.stac_batch;
            opt.noise = a.stac_noise;
            opt.seed = a.seed;
            return backend::ScoreBackend::make_stac(ds.header, opt);
        }
        default:
            if (a.model_path.empty()) throw ConfigError("method needs --model");
            return backend::ScoreBackend::load(method, a.model_path);
        }
    }();

    be.score_dataset(ds); // warmup pass, not measured
    std::vector<double> latency;
    for (int rep = 0; rep < a.reps; ++rep) be.score_dataset(ds, &latency);
    LatencyStats s = stats_from(std::move(latency));

    emit_row(std::cout, a.method, s);
    if (!a.out_path.empty()) {
        bool fresh = !std::ifstream(a.out_path).good();
        std::ofstream out(a.out_path, std::ios::app);
        if (!out) throw DataError("cannot write '" + a.out_path + "'");
        if (fresh) out << "method,p50_ms,p95_ms,mean_ms\n";
        emit_row(out, a.method, s);
    }
    return 0;
}

struct KernelArgs {
    int n = 2000;
    int d = 64;
    int k = 64;
    int reps = 5;
    uint64_t seed = 0;
};

template <typename F> double time_ms(int reps, F&& fn) {
    double best = 1e300;
    for (int i = 0; i < reps; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        fn();
        auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

int cmd_kernels(const KernelArgs& a) {
    if (a.reps < 1) throw ConfigError("bench: --reps must be >= 1");
    Rng rng(a.seed);
    Mat x(a.n, Vec(a.d)), y(a.n, Vec(a.d)), centroids(a.k, Vec(a.d));
    for (auto& row : x)
        for (double& v : row) v = rng.gaussian();
    for (auto& row : y)
        for (double& v : row) v = rng.gaussian();
    for (auto& row : centroids)
        for (double& v : row) v = rng.gaussian();

    kernels::RbfSums par_sums, ser_sums;
    double t_rbf_par = time_ms(a.reps, [&] { par_sums = kernels::rbf_sums(x, y, 1.0); });
    double t_rbf_ser = time_ms(a.reps, [&] { ser_sums = kernels::rbf_sums_serial(x, y, 1.0); });
    bool rbf_match = par_sums.xx == ser_sums.xx && par_sums.yy == ser_sums.yy &&
                     par_sums.xy == ser_sums.xy;

    std::vector<int> asg_par, asg_ser;
    Vec dist_par, dist_ser;
    double t_asg_par =
        time_ms(a.reps, [&] { kernels::assign_nearest(x, centroids, asg_par, dist_par); });
    double t_asg_ser =
        time_ms(a.reps, [&] { kernels::assign_nearest_serial(x, centroids, asg_ser, dist_ser); });
    bool asg_match = asg_par == asg_ser && dist_par == dist_ser;

    std::cout << "kernel,openmp_ms,serial_ms,speedup,bit_identical\n";
    std::cout << "rbf_sums," << t_rbf_par << "," << t_rbf_ser << "," << t_rbf_ser / t_rbf_par
              << "," << (rbf_match ? "yes" : "NO") << "\n";
    std::cout << "assign_nearest," << t_asg_par << "," << t_asg_ser << ","
              << t_asg_ser / t_asg_par << "," << (asg_match ? "yes" : "NO") << "\n";
    return rbf_match && asg_match ? 0 : 4;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Scoring hot-path benchmarks"};
    app.require_subcommand(1);

    ScoreArgs sa;
    auto* c_score = app.add_subcommand("score", "Per-step scoring latency for one method");
    c_score->add_option("--method", sa.method)->required();
    c_score->add_option("--model", sa.model_path);
    c_score->add_option("--data", sa.data_path)->required();
    c_score->add_option("--reps", sa.reps);
    c_score->add_option("--stac-B", sa.stac_batch);
    c_score->add_option("--stac-noise", sa.stac_noise);
    c_score->add_option("--seed", sa.seed);
    c_score->add_option("--out", sa.out_path, "append CSV row here");

    KernelArgs ka;
    auto* c_k = app.add_subcommand("kernels", "OpenMP vs serial kernel comparison");
    c_k->add_option("--n", ka.n);
    c_k->add_option("--d", ka.d);
    c_k->add_option("--k", ka.k);
    c_k->add_option("--reps", ka.reps);
    c_k->add_option("--seed", ka.seed);

    try {
        app.parse(argc, argv);
        if (*c_score) return cmd_score(sa);
        if (*c_k) return cmd_kernels(ka);
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
