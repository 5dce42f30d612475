#include "failband/scores.hpp"

#include "failband/kernels.hpp"
#include "failband/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <numeric>

namespace failband::scores {

std::string to_string(ScoreMethodId id) {
    switch (id) {
    case ScoreMethodId::LogpZO: return "logpzo";
    case ScoreMethodId::LogpO: return "logpo";
    case ScoreMethodId::Rnd: return "rnd";
    case ScoreMethodId::Cfm: return "cfm";
    case ScoreMethodId::Sparc: return "sparc";
    case ScoreMethodId::Stac: return "stac";
    case ScoreMethodId::PcaKmeans: return "pca-kmeans";
    }
    return "?";
}

ScoreMethodId method_from_string(const std::string& s) {
    if (s == "logpzo") return ScoreMethodId::LogpZO;
    if (s == "logpo") return ScoreMethodId::LogpO;
    if (s == "rnd") return ScoreMethodId::Rnd;
    if (s == "cfm") return ScoreMethodId::Cfm;
    if (s == "sparc") return ScoreMethodId::Sparc;
    if (s == "stac") return ScoreMethodId::Stac;
    if (s == "pca-kmeans") return ScoreMethodId::PcaKmeans;
    throw ConfigError("unknown score method '" + s + "'");
}

bool is_post_hoc(ScoreMethodId id) {
    return id == ScoreMethodId::Sparc || id == ScoreMethodId::Stac;
}

// ---------------------------------------------------------------------------
// RND

Vec concat_action_obs(const Mat& action_chunk, const Vec& obs) {
    Vec out;
    out.reserve(action_chunk.size() * (action_chunk.empty() ? 0 : action_chunk[0].size()) +
                obs.size());
    for (const auto& row : action_chunk) out.insert(out.end(), row.begin(), row.end());
    out.insert(out.end(), obs.begin(), obs.end());
    return out;
}

RndModel rnd_train(const Mat& inputs, const RndConfig& config) {
    if (inputs.empty()) throw DataError("rnd_train: need at least 1 pair");
    int d = static_cast<int>(inputs[0].size());

    RndModel model;
    model.normalizer = Normalizer::fit(inputs);

    std::vector<int> dims;
    dims.push_back(d);
    for (int h : config.hidden) dims.push_back(h);
    dims.push_back(config.output_dim);
    model.target = nn::init_mlp(dims, nn::Activation::SmoothRelu,
                                config.seed ^ 0xa5b35705d1c2f38bULL);
    model.predictor = nn::init_mlp(dims, nn::Activation::SmoothRelu, config.seed);

    Mat xs(inputs.size());
    Mat ys(inputs.size());
    for (size_t i = 0; i < inputs.size(); ++i) {
        xs[i] = model.normalizer.apply(inputs[i]);
        ys[i] = nn::forward(model.target, xs[i]);
    }

    auto adam = nn::AdamState::init(model.predictor, config.lr);
    Rng rng(config.seed ^ 0x3c79ac492ba7b653ULL);
    std::vector<size_t> order(xs.size());
    std::iota(order.begin(), order.end(), size_t{0});

    nn::Gradients grads;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_in_place(order, rng);
        for (size_t start = 0; start < order.size(); start += config.batch) {
            size_t end = std::min(order.size(), start + config.batch);
            Mat bx, by;
            bx.reserve(end - start);
            by.reserve(end - start);
            for (size_t k = start; k < end; ++k) {
                bx.push_back(xs[order[k]]);
                by.push_back(ys[order[k]]);
            }
            nn::loss_and_grad(model.predictor, bx, by, nn::Loss::Mse, grads);
            nn::adam_step(model.predictor, grads, adam);
        }
    }
    return model;
}

double rnd_score(const RndModel& model, const Vec& input) {
    Vec x = model.normalizer.apply(input);
    Vec t = nn::forward(model.target, x);
    Vec p = nn::forward(model.predictor, x);
    return kernels::sq_dist(t, p);
}

double rnd_score(const RndModel& model, const Mat& action_chunk, const Vec& obs) {
    return rnd_score(model, concat_action_obs(action_chunk, obs));
}

void save_rnd_model(const RndModel& model, const std::string& path) {
    auto out = io::create_model(path, io::ModelKind::Rnd);
    io::write_mlp(out, model.target);
    io::write_mlp(out, model.predictor);
    io::write_normalizer(out, model.normalizer);
    out.flush();
    if (!out) throw DataError("I/O failure writing '" + path + "'");
}

RndModel load_rnd_model(const std::string& path) {
    auto in = io::open_model(path, io::ModelKind::Rnd);
    RndModel model;
    model.target = io::read_mlp(in);
    model.predictor = io::read_mlp(in);
    model.normalizer = io::read_normalizer(in);
    return model;
}

// ---------------------------------------------------------------------------
// CFM

CfmModel cfm_train(const Mat& observations, const CfmConfig& config) {
    if (config.eval_grid.size() < 2) throw ConfigError("cfm eval_grid needs >= 2 times");
    for (double s : config.eval_grid)
        if (s < 0.0 || s > 1.0) throw ConfigError("cfm eval_grid times must be in [0,1]");
    CfmModel model;
    model.flow = flow::train_flow_consistent(observations, config.base,
                                             config.consistency_weight);
    model.eval_grid = config.eval_grid;
    return model;
}

double cfm_score(const CfmModel& model, const Vec& obs) {
    const auto& fm = model.flow;
    if (static_cast<int>(obs.size()) != fm.data_dim)
        throw NumericError("cfm_score: observation dim mismatch");
    Vec x = fm.normalizer.apply(obs);
    int d = fm.data_dim;

    // Straight-line extrapolation toward the one-step noise estimate; each
    // grid time yields its own terminal-noise estimate zhat.
    Vec in0(x);
    in0.push_back(0.0);
    Vec f0 = nn::forward(fm.velocity, in0);
    Mat zhats;
    zhats.reserve(model.eval_grid.size());
    Vec input(d + 1);
    for (double s : model.eval_grid) {
        for (int i = 0; i < d; ++i) input[i] = x[i] + s * f0[i];
        input[d] = s;
        Vec f = nn::forward(fm.velocity, input);
        Vec zhat(d);
        for (int i = 0; i < d; ++i) zhat[i] = input[i] + (1.0 - s) * f[i];
        zhats.push_back(std::move(zhat));
    }

    size_t n = zhats.size();
    double var_sum = 0.0;
    for (int i = 0; i < d; ++i) {
        double mean = 0.0;
        for (const auto& z : zhats) mean += z[i];
        mean /= static_cast<double>(n);
        double ss = 0.0;
        for (const auto& z : zhats) {
            double e = z[i] - mean;
            ss += e * e;
        }
        var_sum += ss / static_cast<double>(n - 1);
    }
    return var_sum / static_cast<double>(d);
}

void save_cfm_model(const CfmModel& model, const std::string& path) {
    auto out = io::create_model(path, io::ModelKind::Cfm);
    io::write_mlp(out, model.flow.velocity);
    io::write_normalizer(out, model.flow.normalizer);
    io::write_vec(out, model.eval_grid);
    out.flush();
    if (!out) throw DataError("I/O failure writing '" + path + "'");
}

CfmModel load_cfm_model(const std::string& path) {
    auto in = io::open_model(path, io::ModelKind::Cfm);
    CfmModel model;
    model.flow.velocity = io::read_mlp(in);
    model.flow.normalizer = io::read_normalizer(in);
    model.flow.data_dim = model.flow.velocity.output_dim();
    model.eval_grid = io::read_vec(in);
    return model;
}

// ---------------------------------------------------------------------------
// SPARC

Vec speed_profile(const Mat& action_chunk) {
    Vec v;
    if (action_chunk.size() < 2) return v;
    v.reserve(action_chunk.size() - 1);
    for (size_t i = 1; i < action_chunk.size(); ++i)
        v.push_back(std::sqrt(kernels::sq_dist(action_chunk[i], action_chunk[i - 1])));
    return v;
}

namespace {

// Iterative radix-2 FFT; n must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& a) {
    size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0);
            for (size_t k = 0; k < len / 2; ++k) {
                auto u = a[i + k];
                auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

size_t next_pow2(size_t n) {
    size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

} // namespace

double sparc(const Vec& signal, const SparcParams& params) {
    if (signal.size() < 2) throw ConfigError("sparc: signal length must be >= 2");
    size_t nfft = next_pow2(signal.size()) << params.pad_level;
    std::vector<std::complex<double>> buf(nfft, 0.0);
    for (size_t i = 0; i < signal.size(); ++i) buf[i] = signal[i];
    fft_inplace(buf);

    size_t half = nfft / 2 + 1;
    Vec freq(half), mag(half);
    double max_mag = 0.0;
    for (size_t i = 0; i < half; ++i) {
        freq[i] = static_cast<double>(i) * params.fs / static_cast<double>(nfft);
        mag[i] = std::abs(buf[i]);
        max_mag = std::max(max_mag, mag[i]);
    }
    if (max_mag <= 0.0) return 0.0; // all-zero signal
    for (double& m : mag) m /= max_mag;

    // Restrict to [0, f_cut], then to the adaptive band where the normalized
    // magnitude reaches amp_threshold.
    size_t cut = half;
    while (cut > 0 && freq[cut - 1] > params.f_cut) --cut;
    if (cut < 2) return 0.0;
    size_t first = cut, last = cut;
    for (size_t i = 0; i < cut; ++i) {
        if (mag[i] >= params.amp_threshold) {
            if (first == cut) first = i;
            last = i;
        }
    }
    if (first == cut || last == first) return 0.0;

    double f_range = freq[last] - freq[first];
    double arc = 0.0;
    for (size_t i = first; i < last; ++i) {
        double df = (freq[i + 1] - freq[i]) / f_range;
        double dm = mag[i + 1] - mag[i];
        arc += std::sqrt(df * df + dm * dm);
    }
    return arc; // negated classical SPARC: higher = rougher
}

// ---------------------------------------------------------------------------
// PCA + k-means

namespace {

/// Jacobi eigendecomposition of a symmetric matrix; returns (values, vectors)
/// with vectors as rows, sorted by descending eigenvalue.
std::pair<Vec, Mat> sym_eig(Mat a) {
    size_t n = a.size();
    Mat v(n, Vec(n, 0.0));
    for (size_t i = 0; i < n; ++i) v[i][i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (size_t p = 0; p < n; ++p)
            for (size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-24) break;
        for (size_t p = 0; p < n; ++p) {
            for (size_t q = p + 1; q < n; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (size_t i = 0; i < n; ++i) {
                    double aip = a[i][p], aiq = a[i][q];
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for (size_t i = 0; i < n; ++i) {
                    double api = a[p][i], aqi = a[q][i];
                    a[p][i] = c * api - s * aqi;
                    a[q][i] = s * api + c * aqi;
                }
                for (size_t i = 0; i < n; ++i) {
                    double vip = v[i][p], viq = v[i][q];
                    v[i][p] = c * vip - s * viq;
                    v[i][q] = s * vip + c * viq;
                }
            }
        }
    }
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(), [&](size_t i, size_t j) { return a[i][i] > a[j][j]; });
    Vec values(n);
    Mat vectors(n, Vec(n));
    for (size_t r = 0; r < n; ++r) {
        values[r] = a[idx[r]][idx[r]];
        for (size_t i = 0; i < n; ++i) vectors[r][i] = v[i][idx[r]];
    }
    return {std::move(values), std::move(vectors)};
}

} // namespace

Vec pca_embed(const PcaKmeansModel& model, const Vec& x) {
    if (x.size() != model.mean.size()) throw NumericError("pca_embed: dim mismatch");
    Vec e(model.components.size(), 0.0);
    for (size_t r = 0; r < model.components.size(); ++r) {
        double acc = 0.0;
        for (size_t i = 0; i < x.size(); ++i)
            acc += model.components[r][i] * (x[i] - model.mean[i]);
        e[r] = acc;
    }
    return e;
}

PcaKmeansModel pca_kmeans_fit(const Mat& train_features, int m, int k, uint64_t seed) {
    if (k < 1) throw ConfigError("pca_kmeans_fit: k must be >= 1");
    if (static_cast<int>(train_features.size()) < k)
        throw DataError("pca_kmeans_fit: fewer samples than clusters");
    size_t n = train_features.size();
    size_t d = train_features[0].size();

    PcaKmeansModel model;
    model.mean.assign(d, 0.0);
    for (const auto& x : train_features)
        for (size_t i = 0; i < d; ++i) model.mean[i] += x[i];
    for (double& v : model.mean) v /= static_cast<double>(n);

    Mat cov(d, Vec(d, 0.0));
    for (const auto& x : train_features)
        for (size_t i = 0; i < d; ++i) {
            double ei = x[i] - model.mean[i];
            for (size_t j = i; j < d; ++j) cov[i][j] += ei * (x[j] - model.mean[j]);
        }
    for (size_t i = 0; i < d; ++i)
        for (size_t j = i; j < d; ++j) {
            cov[i][j] /= static_cast<double>(n);
            cov[j][i] = cov[i][j];
        }

    auto [values, vectors] = sym_eig(std::move(cov));
    if (m <= 0) {
        double total = 0.0;
        for (double v : values) total += std::max(v, 0.0);
        double acc = 0.0;
        m = static_cast<int>(d);
        for (size_t i = 0; i < values.size(); ++i) {
            acc += std::max(values[i], 0.0);
            if (total <= 0.0 || acc >= 0.95 * total) {
                m = static_cast<int>(i) + 1;
                break;
            }
        }
    }
    m = std::min<int>(m, static_cast<int>(d));
    model.components.assign(vectors.begin(), vectors.begin() + m);

    Mat embedded(n);
    for (size_t i = 0; i < n; ++i) embedded[i] = pca_embed(model, train_features[i]);

    // k-means++ seeding
    Rng rng(seed);
    Mat centroids;
    centroids.push_back(embedded[rng.below(n)]);
    Vec min_sq(n);
    while (static_cast<int>(centroids.size()) < k) {
        double total = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double best = kernels::sq_dist(embedded[i], centroids[0]);
            for (size_t c = 1; c < centroids.size(); ++c)
                best = std::min(best, kernels::sq_dist(embedded[i], centroids[c]));
            min_sq[i] = best;
            total += best;
        }
        size_t pick = 0;
        if (total > 0.0) {
            double r = rng.uniform() * total;
            double acc = 0.0;
            for (size_t i = 0; i < n; ++i) {
                acc += min_sq[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.below(n);
        }
        centroids.push_back(embedded[pick]);
    }

    // Lloyd iterations
    std::vector<int> assignment;
    Vec sq_dists;
    double prev_inertia = -1.0;
    for (int iter = 0; iter < 300; ++iter) {
        kernels::assign_nearest(embedded, centroids, assignment, sq_dists);
        double inertia = 0.0;
        for (double v : sq_dists) inertia += v;
        Mat sums(k, Vec(model.components.size(), 0.0));
        std::vector<long> counts(k, 0);
        for (size_t i = 0; i < n; ++i) {
            int c = assignment[i];
            counts[c] += 1;
            for (size_t j = 0; j < embedded[i].size(); ++j) sums[c][j] += embedded[i][j];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // reseed an empty cluster at the farthest point
                size_t far = 0;
                for (size_t i = 1; i < n; ++i)
                    if (sq_dists[i] > sq_dists[far]) far = i;
                centroids[c] = embedded[far];
                sq_dists[far] = 0.0;
            } else {
                for (size_t j = 0; j < sums[c].size(); ++j)
                    centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
            }
        }
        if (prev_inertia >= 0.0) {
            double denom = std::max(prev_inertia, 1e-300);
            if (std::abs(prev_inertia - inertia) / denom < 1e-6) break;
        }
        prev_inertia = inertia;
    }
    model.centroids = std::move(centroids);
    return model;
}

double pca_kmeans_score(const PcaKmeansModel& model, const Vec& x) {
    Vec e = pca_embed(model, x);
    double best = kernels::sq_dist(e, model.centroids[0]);
    for (size_t c = 1; c < model.centroids.size(); ++c)
        best = std::min(best, kernels::sq_dist(e, model.centroids[c]));
    return std::sqrt(best);
}

void save_pca_kmeans_model(const PcaKmeansModel& model, const std::string& path) {
    auto out = io::create_model(path, io::ModelKind::PcaKmeans);
    io::write_vec(out, model.mean);
    io::write_mat(out, model.components);
    io::write_mat(out, model.centroids);
    out.flush();
    if (!out) throw DataError("I/O failure writing '" + path + "'");
}

PcaKmeansModel load_pca_kmeans_model(const std::string& path) {
    auto in = io::open_model(path, io::ModelKind::PcaKmeans);
    PcaKmeansModel model;
    model.mean = io::read_vec(in);
    model.components = io::read_mat(in);
    model.centroids = io::read_mat(in);
    return model;
}

// ---------------------------------------------------------------------------
// MMD and STAC

double mmd2_unclipped(const Mat& batch_x, const Mat& batch_y, double sigma) {
    if (batch_x.empty() || batch_y.empty()) throw ConfigError("mmd2: empty batch");
    if (sigma <= 0.0) throw ConfigError("mmd2: bandwidth must be positive");
    auto sums = kernels::rbf_sums(batch_x, batch_y, sigma);
    double m = static_cast<double>(batch_x.size());
    double n = static_cast<double>(batch_y.size());
    double term_xx = batch_x.size() > 1 ? sums.xx / (m * (m - 1.0)) : 1.0;
    double term_yy = batch_y.size() > 1 ? sums.yy / (n * (n - 1.0)) : 1.0;
    return term_xx + term_yy - 2.0 * sums.xy / (m * n);
}

double mmd2(const Mat& batch_x, const Mat& batch_y, double sigma) {
    return std::max(0.0, mmd2_unclipped(batch_x, batch_y, sigma));
}

StacScorer::StacScorer(StacConfig config, int horizon, int exec_horizon)
    : config_(std::move(config)), horizon_(horizon), exec_horizon_(exec_horizon),
      overlap_(horizon - exec_horizon) {
    if (config_.batch_size < 2) throw ConfigError("stac: batch size must be >= 2");
    if (overlap_ < 1) throw ConfigError("stac: overlap H - H' must be >= 1");
    sigma_ = config_.bandwidth;
}

void StacScorer::reset() {
    prev_tails_.reset();
    if (!config_.bandwidth) sigma_.reset();
}

double StacScorer::step(const std::vector<Mat>& batch) {
    if (batch.empty()) throw DataError("stac: sampler returned no chunks");
    Mat heads, tails;
    heads.reserve(batch.size());
    tails.reserve(batch.size());
    for (const auto& chunk : batch) {
        if (static_cast<int>(chunk.size()) != horizon_)
            throw DataError("stac: chunk must have H rows");
        Vec head, tail;
        for (int r = 0; r < overlap_; ++r)
            head.insert(head.end(), chunk[r].begin(), chunk[r].end());
        for (int r = exec_horizon_; r < horizon_; ++r)
            tail.insert(tail.end(), chunk[r].begin(), chunk[r].end());
        heads.push_back(std::move(head));
        tails.push_back(std::move(tail));
    }
    double score = 0.0;
    if (prev_tails_) {
        if (!sigma_) {
            double med = kernels::median_pairwise_distance(*prev_tails_);
            sigma_ = med > 0.0 ? med : 1.0;
        }
        score = mmd2(*prev_tails_, heads, *sigma_);
    }
    prev_tails_ = std::move(tails);
    return score;
}

double stac_calibrate_threshold(const std::vector<ScoreSeries>& calibration, double alpha) {
    if (calibration.empty()) throw DataError("stac_calibrate_threshold: empty calibration");
    Vec sums;
    sums.reserve(calibration.size());
    for (const auto& series : calibration) {
        double acc = 0.0;
        for (const auto& [t, v] : series.values) acc += v;
        sums.push_back(acc);
    }
    std::sort(sums.begin(), sums.end());
    long n = static_cast<long>(sums.size());
    long k = static_cast<long>(std::ceil((n + 1) * (1.0 - alpha)));
    k = std::clamp<long>(k, 1, n);
    return sums[k - 1];
}

} // namespace failband::scores
