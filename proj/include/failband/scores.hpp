#pragma once

#include "failband/flow.hpp"
#include "failband/model_io.hpp"
#include "failband/nn.hpp"
#include "failband/types.hpp"

#include <functional>
#include <optional>
#include <string>

namespace failband::scores {

enum class ScoreMethodId { LogpZO, LogpO, Rnd, Cfm, Sparc, Stac, PcaKmeans };

std::string to_string(ScoreMethodId id);
ScoreMethodId method_from_string(const std::string& s);
/// True for SPARC and STAC, which need no trained model.
bool is_post_hoc(ScoreMethodId id);

// ---------------------------------------------------------------------------
// Random network distillation

struct RndConfig {
    int epochs = 200;
    int batch = 128;
    double lr = 1e-4;
    uint64_t seed = 0;
    std::vector<int> hidden = {128, 128};
    int output_dim = 64;
};

struct RndModel {
    nn::Mlp target;    // frozen
    nn::Mlp predictor; // trained to match the target on ID pairs
    Normalizer normalizer;
};

/// Flattened A_t followed by O_t; the input convention for RND everywhere.
Vec concat_action_obs(const Mat& action_chunk, const Vec& obs);

RndModel rnd_train(const Mat& inputs, const RndConfig& config);
double rnd_score(const RndModel& model, const Vec& input);
double rnd_score(const RndModel& model, const Mat& action_chunk, const Vec& obs);

void save_rnd_model(const RndModel& model, const std::string& path);
RndModel load_rnd_model(const std::string& path);

// ---------------------------------------------------------------------------
// Consistency flow matching

struct CfmConfig {
    flow::TrainConfig base;
    double consistency_weight = 1.0;
    Vec eval_grid = {0.0, 0.25, 0.5, 0.75};
};

struct CfmModel {
    flow::FlowModel flow;
    Vec eval_grid;
};

CfmModel cfm_train(const Mat& observations, const CfmConfig& config);

/// Sample variance (mean over dims) of the terminal-noise estimates
/// zhat(O, s) over the eval grid; straight flows give 0.
double cfm_score(const CfmModel& model, const Vec& obs);

void save_cfm_model(const CfmModel& model, const std::string& path);
CfmModel load_cfm_model(const std::string& path);

// ---------------------------------------------------------------------------
// SPARC spectral arc length

struct SparcParams {
    double fs = 1.0;           // execution-step sampling rate
    int pad_level = 2;         // nfft = next_pow2(n) << pad_level (>= 4x signal)
    double f_cut = 10.0;
    double amp_threshold = 0.05;
};

/// Per-step speed: Euclidean norm of action first differences within a chunk.
Vec speed_profile(const Mat& action_chunk);

/// Positive spectral arc length of the max-normalized magnitude spectrum over
/// the adaptive frequency band; higher = less smooth. All-zero signal -> 0.
double sparc(const Vec& signal, const SparcParams& params = {});

// ---------------------------------------------------------------------------
// PCA + k-means nearest-centroid distance

struct PcaKmeansModel {
    Vec mean;
    Mat components; // rows: top-m orthonormal principal directions
    Mat centroids;  // K points in the m-dim embedded space
};

/// m = 0 picks the smallest m explaining >= 95% of variance.
PcaKmeansModel pca_kmeans_fit(const Mat& train_features, int m, int k, uint64_t seed);

Vec pca_embed(const PcaKmeansModel& model, const Vec& x);
double pca_kmeans_score(const PcaKmeansModel& model, const Vec& x);

void save_pca_kmeans_model(const PcaKmeansModel& model, const std::string& path);
PcaKmeansModel load_pca_kmeans_model(const std::string& path);

// ---------------------------------------------------------------------------
// MMD and STAC

/// Unbiased squared-MMD estimate with RBF kernel exp(-||a-b||^2 / (2 sigma^2)).
/// Single-point batches fall back to the V-statistic for the self term.
double mmd2_unclipped(const Mat& batch_x, const Mat& batch_y, double sigma);
/// Clipped at 0 from below for score use.
double mmd2(const Mat& batch_x, const Mat& batch_y, double sigma);

enum class StacThresholdMode { CumulativeQuantile, CPBand };

struct StacConfig {
    int batch_size = 256;
    std::optional<double> bandwidth; // unset: median heuristic on first batch
    StacThresholdMode threshold_mode = StacThresholdMode::CumulativeQuantile;
};

/// Sequential scorer holding the chained previous batch; one instance per
/// rollout, not shareable mid-rollout.
class StacScorer {
public:
    StacScorer(StacConfig config, int horizon, int exec_horizon);

    /// Scores the temporal overlap between the previous batch and this one.
    /// First call of a rollout returns 0 by convention.
    double step(const std::vector<Mat>& batch);

    void reset();
    double bandwidth() const { return sigma_.value_or(0.0); }
    int overlap() const { return overlap_; }

private:
    StacConfig config_;
    int horizon_;
    int exec_horizon_;
    int overlap_;
    std::optional<Mat> prev_tails_; // flattened last-overlap segments
    std::optional<double> sigma_;
};

/// Conformal (1-alpha) quantile of per-rollout terminal cumulative sums.
double stac_calibrate_threshold(const std::vector<ScoreSeries>& calibration, double alpha);

} // namespace failband::scores
